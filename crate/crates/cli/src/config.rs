//! Flat `key = value` run configuration.
//!
//! Values come from case defaults, then the config file, then `--key value`
//! flags. Unknown keys, malformed values and constraint violations are errors
//! naming the key and where it was set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use vmsns::mesh::{Domain, Mapping, MeshSpec};
use vmsns::stokes::ProjectorParams;
use vmsns::timestepper::StepControls;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Tgv,
    Rollup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Galerkin,
    Vms,
    ProjectOnly,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Galerkin => "galerkin",
            Mode::Vms => "vms",
            Mode::ProjectOnly => "project-only",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "galerkin" => Some(Mode::Galerkin),
            "vms" => Some(Mode::Vms),
            "project-only" => Some(Mode::ProjectOnly),
            _ => None,
        }
    }
}

/// Discretization of the initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    /// Navier-Stokes optimal projector.
    Projector,
    /// Separate L2 projections of vorticity and velocity.
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: CaseKind,
    pub mode: Mode,
    /// Modes of an h-study; defaults to `[mode]`.
    pub modes: Vec<Mode>,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub mapping: Mapping,
    /// `None` is inviscid.
    pub re: Option<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub ic: InitialCondition,
    pub output: PathBuf,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub sweep_n: Vec<usize>,
    pub sweep_k: Vec<usize>,
    pub dump_times: Vec<f64>,
    pub density: usize,
    pub snapshot_times: Vec<f64>,
    pub reference: Option<PathBuf>,
    /// Projector weights for `project`; defaults to `(1/(2 Re), 1/dt)`.
    pub projector: Option<ProjectorParams>,
}

pub const KEYS: &[&str] = &[
    "case",
    "mode",
    "modes",
    "N",
    "p",
    "k",
    "mapping",
    "c",
    "Re",
    "dt",
    "t_final",
    "ic",
    "output",
    "picard_tol",
    "picard_max",
    "sweep_N",
    "sweep_k",
    "dump_times",
    "density",
    "snapshot_times",
    "reference",
    "proj_a_curl",
    "proj_a_mass",
];

impl RunConfig {
    /// Defaults of a case: the TGV convergence setting or the desk-scale roll-up.
    pub fn defaults(case: CaseKind) -> Self {
        match case {
            CaseKind::Tgv => Self {
                case,
                mode: Mode::Galerkin,
                modes: vec![Mode::Galerkin],
                n: 4,
                p: 3,
                k: 0,
                mapping: Mapping::Curvilinear { c: 0.1 },
                re: Some(100.0),
                dt: 0.04,
                t_final: 1.0,
                ic: InitialCondition::Projector,
                output: PathBuf::from("."),
                picard_tol: 1e-12,
                picard_max: 100,
                sweep_n: Vec::new(),
                sweep_k: Vec::new(),
                dump_times: Vec::new(),
                density: 4,
                snapshot_times: Vec::new(),
                reference: None,
                projector: None,
            },
            CaseKind::Rollup => Self {
                case,
                n: 8,
                p: 2,
                mapping: Mapping::Orthogonal,
                re: None,
                dt: 0.01,
                ..Self::defaults(CaseKind::Tgv)
            },
        }
    }

    pub fn domain(&self) -> Domain {
        match self.case {
            CaseKind::Tgv => Domain::UNIT_SQUARE,
            CaseKind::Rollup => vmsns::cases::RollupCase::default().domain(),
        }
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        self.mesh_spec_n(self.n)
    }

    pub fn mesh_spec_n(&self, n: usize) -> MeshSpec {
        MeshSpec::square(n, self.p, self.mapping).with_domain(self.domain())
    }

    pub fn controls(&self) -> StepControls {
        StepControls {
            picard_tol: self.picard_tol,
            picard_max: self.picard_max,
            ..StepControls::new(self.dt, self.re)
        }
    }

    pub fn projector_params(&self) -> ProjectorParams {
        self.projector
            .unwrap_or_else(|| ProjectorParams::navier_stokes(self.re, self.dt))
    }

    /// Canonical `key = value` text; equal configs give equal text.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let list = |v: &[String]| v.join(",");
        let _ = writeln!(s, "case = {}", if self.case == CaseKind::Tgv { "tgv" } else { "rollup" });
        let _ = writeln!(s, "mode = {}", self.mode.name());
        let _ = writeln!(s, "modes = {}", list(&self.modes.iter().map(|m| m.name().to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "N = {}", self.n);
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "k = {}", self.k);
        match self.mapping {
            Mapping::Orthogonal => {
                let _ = writeln!(s, "mapping = orthogonal");
            }
            Mapping::Curvilinear { c } => {
                let _ = writeln!(s, "mapping = curvilinear\nc = {c:e}");
            }
        }
        let _ = writeln!(s, "Re = {}", self.re.map_or("inf".into(), |r| format!("{r:e}")));
        let _ = writeln!(s, "dt = {:e}", self.dt);
        let _ = writeln!(s, "t_final = {:e}", self.t_final);
        let _ = writeln!(s, "ic = {}", if self.ic == InitialCondition::Projector { "projector" } else { "l2" });
        let _ = writeln!(s, "picard_tol = {:e}", self.picard_tol);
        let _ = writeln!(s, "picard_max = {}", self.picard_max);
        if let Some(pp) = self.projector {
            let _ = writeln!(s, "proj_a_curl = {:e}\nproj_a_mass = {:e}", pp.a_curl, pp.a_mass);
        }
        s
    }

    /// Short hash of the canonical text, recorded in snapshots.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// One `key = value` assignment and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub location: String,
}

/// Parses config file text into entries.
pub fn parse_file(name: &str, text: &str) -> CliResult<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let location = format!("{name}:{}", i + 1);
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::config(location, line, "expected 'key = value'"));
        };
        out.push(Entry {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            location,
        });
    }
    Ok(out)
}

/// Parses `--key value` (or `--key=value`) flag pairs.
pub fn parse_flags(args: &[String]) -> CliResult<Vec<Entry>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            return Err(CliError::Usage(format!("unexpected argument '{a}'; flags are --key value")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::config(format!("flag --{flag}"), flag, "missing value"))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push(Entry {
            location: format!("flag --{key}"),
            key,
            value,
        });
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(e: &Entry, what: &str) -> CliResult<T> {
    e.value
        .parse()
        .map_err(|_| CliError::config(&e.location, &e.key, format!("'{}' is not {what}", e.value)))
}

fn parse_count(e: &Entry, min: i64) -> CliResult<usize> {
    let v: i64 = parse_num(e, "an integer")?;
    if v < min {
        return Err(CliError::config(&e.location, &e.key, format!("{v} must be >= {min}")));
    }
    Ok(v as usize)
}

fn parse_list<T>(e: &Entry, f: impl Fn(&Entry) -> CliResult<T>) -> CliResult<Vec<T>> {
    e.value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            f(&Entry {
                value: s.to_string(),
                ..e.clone()
            })
        })
        .collect()
}

fn positive(e: &Entry) -> CliResult<f64> {
    let v: f64 = parse_num(e, "a number")?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::config(&e.location, &e.key, format!("{v} must be positive and finite")));
    }
    Ok(v)
}

fn non_negative(e: &Entry) -> CliResult<f64> {
    let v: f64 = parse_num(e, "a number")?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(CliError::config(&e.location, &e.key, format!("{v} must be non-negative and finite")));
    }
    Ok(v)
}

/// Builds a validated config from file entries followed by flag entries.
pub fn parse_config(default_case: CaseKind, file: &[Entry], flags: &[Entry]) -> CliResult<RunConfig> {
    let mut last: BTreeMap<&str, &Entry> = BTreeMap::new();
    for e in file.iter().chain(flags) {
        let Some(&key) = KEYS.iter().find(|&&k| k == e.key) else {
            return Err(CliError::config(&e.location, &e.key, "unknown key"));
        };
        last.insert(key, e);
    }
    let case = match last.get("case") {
        None => default_case,
        Some(e) => match e.value.as_str() {
            "tgv" => CaseKind::Tgv,
            "rollup" => CaseKind::Rollup,
            _ => return Err(CliError::config(&e.location, &e.key, "expected 'tgv' or 'rollup'")),
        },
    };
    let mut cfg = RunConfig::defaults(case);
    let mut c_amp = match cfg.mapping {
        Mapping::Curvilinear { c } => c,
        Mapping::Orthogonal => 0.1,
    };
    let mut curved = matches!(cfg.mapping, Mapping::Curvilinear { .. });
    let mut modes_set = false;
    let (mut a_curl, mut a_mass) = (None, None);
    for (&key, &e) in &last {
        match key {
            "case" => {}
            "mode" => {
                cfg.mode = Mode::parse(&e.value)
                    .ok_or_else(|| CliError::config(&e.location, key, "expected galerkin, vms or project-only"))?;
            }
            "modes" => {
                cfg.modes = parse_list(e, |x| {
                    Mode::parse(&x.value)
                        .ok_or_else(|| CliError::config(&x.location, key, format!("unknown mode '{}'", x.value)))
                })?;
                modes_set = true;
            }
            "N" => cfg.n = parse_count(e, 1)?,
            "p" => cfg.p = parse_count(e, 1)?,
            "k" => cfg.k = parse_count(e, 0)?,
            "mapping" => {
                curved = match e.value.as_str() {
                    "orthogonal" => false,
                    "curvilinear" => true,
                    _ => return Err(CliError::config(&e.location, key, "expected orthogonal or curvilinear")),
                }
            }
            "c" => {
                c_amp = non_negative(e)?;
                if c_amp >= 0.25 {
                    return Err(CliError::config(&e.location, key, format!("{c_amp} must be below 0.25")));
                }
            }
            "Re" => {
                cfg.re = if e.value == "inf" { None } else { Some(positive(e)?) };
            }
            "dt" => cfg.dt = positive(e)?,
            "t_final" => cfg.t_final = non_negative(e)?,
            "ic" => {
                cfg.ic = match e.value.as_str() {
                    "projector" => InitialCondition::Projector,
                    "l2" => InitialCondition::L2,
                    _ => return Err(CliError::config(&e.location, key, "expected projector or l2")),
                }
            }
            "output" => cfg.output = PathBuf::from(&e.value),
            "picard_tol" => cfg.picard_tol = positive(e)?,
            "picard_max" => cfg.picard_max = parse_count(e, 1)?,
            "sweep_N" => cfg.sweep_n = parse_list(e, |x| parse_count(x, 1))?,
            "sweep_k" => cfg.sweep_k = parse_list(e, |x| parse_count(x, 0))?,
            "dump_times" => cfg.dump_times = parse_list(e, non_negative)?,
            "density" => cfg.density = parse_count(e, 1)?,
            "snapshot_times" => cfg.snapshot_times = parse_list(e, non_negative)?,
            "reference" => cfg.reference = Some(PathBuf::from(&e.value)),
            "proj_a_curl" => a_curl = Some(non_negative(e)?),
            "proj_a_mass" => a_mass = Some(non_negative(e)?),
            _ => unreachable!("key list and match arms agree"),
        }
    }
    cfg.mapping = if curved {
        Mapping::Curvilinear { c: c_amp }
    } else {
        Mapping::Orthogonal
    };
    if !modes_set {
        cfg.modes = vec![cfg.mode];
    }
    if a_curl.is_some() || a_mass.is_some() {
        let base = ProjectorParams::navier_stokes(cfg.re, cfg.dt);
        let pp = ProjectorParams {
            a_curl: a_curl.unwrap_or(base.a_curl),
            a_mass: a_mass.unwrap_or(base.a_mass),
        };
        if pp.validate().is_err() {
            let e = last.get("proj_a_curl").or(last.get("proj_a_mass")).expect("one is set");
            return Err(CliError::config(&e.location, &e.key, "projector weights must not both vanish"));
        }
        cfg.projector = Some(pp);
    }
    let where_ = |key: &str| last.get(key).map_or("defaults".to_string(), |e| e.location.clone());
    let controls = cfg.controls();
    for (key, times) in [("dump_times", &cfg.dump_times), ("snapshot_times", &cfg.snapshot_times)] {
        for &t in times {
            if t > cfg.t_final || controls.steps_to(0.0, t).is_err() {
                return Err(CliError::config(
                    where_(key),
                    key,
                    format!("time {t} is not a multiple of dt = {} within [0, t_final]", cfg.dt),
                ));
            }
        }
    }
    if controls.steps_to(0.0, cfg.t_final).is_err() {
        return Err(CliError::config(
            where_("t_final"),
            "t_final",
            format!("{} is not a multiple of dt = {}", cfg.t_final, cfg.dt),
        ));
    }
    if cfg.case == CaseKind::Rollup && cfg.re.is_some() {
        return Err(CliError::config(where_("Re"), "Re", "the roll-up case is inviscid; use Re = inf"));
    }
    if cfg.ic == InitialCondition::L2 && cfg.modes.contains(&Mode::Vms) {
        return Err(CliError::config(where_("ic"), "ic", "l2 initial conditions apply to galerkin runs only"));
    }
    cfg.mesh_spec()
        .validate()
        .map_err(|e| CliError::config(where_("N"), "N", e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let f = parse_file("f", "N = 2\nRe = inf # comment\n\n").unwrap();
        let g = parse_flags(&["--N".into(), "6".into(), "--k=2".into()]).unwrap();
        let c = parse_config(CaseKind::Tgv, &f, &g).unwrap();
        assert_eq!((c.n, c.k, c.re), (6, 2, None));
    }

    #[test]
    fn errors_name_key_and_line() {
        let f = parse_file("f", "p = 2\nbogus = 1\n").unwrap();
        let e = parse_config(CaseKind::Tgv, &f, &[]).unwrap_err().to_string();
        assert!(e.contains("f:2") && e.contains("bogus"), "{e}");
        let f = parse_file("f", "k = -1\n").unwrap();
        let e = parse_config(CaseKind::Tgv, &f, &[]).unwrap_err().to_string();
        assert!(e.contains("f:1") && e.contains("'k'") && e.contains(">= 0"), "{e}");
    }
}
