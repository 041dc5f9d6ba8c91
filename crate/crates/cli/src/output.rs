//! Bit-stable CSV writers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use vmsns::fields::{FieldPoint, FlowField};

use crate::error::CliResult;

pub const FIELD_HEADER: &str = "x,y,omega,u_x,u_y,P";
pub const CONVERGENCE_HEADER: &str = "N,p,k,mode,e_omega,e_u,e_p,order_local";

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Time label of dump and snapshot file names, e.g. `1.000000`.
pub fn time_label(t: f64) -> String {
    format!("{t:.6}")
}

pub fn fields_path(dir: &Path, prefix: &str, t: f64) -> PathBuf {
    dir.join(format!("{prefix}_t{}.csv", time_label(t)))
}

/// Samples `field` at `points` in the field-dump format.
pub fn field_csv(points: &[FieldPoint], field: &dyn FlowField) -> String {
    let mut s = String::with_capacity(points.len() * 140);
    s.push_str(FIELD_HEADER);
    s.push('\n');
    for pt in points {
        let v = field.sample(pt);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            num(pt.x),
            num(pt.y),
            num(v.omega),
            num(v.u[0]),
            num(v.u[1]),
            num(v.p)
        );
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| crate::error::CliError::Io(format!("{}: {e}", path.display())))
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub mode: String,
    pub e_omega: f64,
    pub e_u: f64,
    pub e_p: f64,
    /// Order against the previous resolution of the same mode.
    pub order_local: Option<f64>,
}

impl ConvergenceRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n,
            self.p,
            self.k,
            self.mode,
            num(self.e_omega),
            num(self.e_u),
            num(self.e_p),
            self.order_local.map(num).unwrap_or_default()
        )
    }
}

/// A convergence table; a failed sweep is flagged with a trailing comment.
pub fn convergence_csv(rows: &[ConvergenceRow], partial: Option<&str>) -> String {
    let mut s = String::from(CONVERGENCE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    if let Some(why) = partial {
        let _ = writeln!(s, "# partial: {}", why.replace('\n', " "));
    }
    s
}

/// Least-squares slope of `ln e` against `ln h`; needs three resolutions.
pub fn lsq_order(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 3 || points.iter().any(|&(_, e)| !(e > 0.0)) {
        return None;
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, e)| (-(n as f64).ln(), e.ln())).collect();
    let m = xy.len() as f64;
    let (sx, sy) = xy.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = xy
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    (den > 0.0).then(|| num / den)
}
