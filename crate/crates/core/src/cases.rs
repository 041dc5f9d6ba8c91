//! Benchmark definitions, initial conditions, snapshots and reference projection.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::{assemble_loads, assemble_with_plan, OperatorSet};
use crate::error::{Error, Result};
use crate::fields::{DiscreteField, FieldPoint, FieldSample, FlowField, PlanTable, QuadPlan};
use crate::mesh::{build_mesh, Domain, Mapping, Mesh, MeshSpec};
use crate::sparse::LuSolver;
use crate::stokes::{apply_projector, ProjectorParams, ProjectorRhs, SaddleSolver, Triple};
use crate::timestepper::{FlowState, StepControls};

/// Taylor-Green vortex on ]-1, 1[^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TgvCase {
    /// `None` gives the steady inviscid vortex.
    pub re: Option<f64>,
}

/// Exact Taylor-Green values and first derivatives at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TgvPoint {
    pub ux: f64,
    pub uy: f64,
    pub omega: f64,
    pub p: f64,
    /// `[d/dx, d/dy]` of each field.
    pub grad_ux: [f64; 2],
    pub grad_uy: [f64; 2],
    pub grad_omega: [f64; 2],
    pub grad_p: [f64; 2],
}

impl TgvCase {
    pub fn new(re: f64) -> Self {
        Self { re: Some(re) }
    }

    /// Velocity decay factor `exp(-2 pi^2 t / Re)`.
    pub fn decay(&self, t: f64) -> f64 {
        self.re.map_or(1.0, |re| (-2.0 * PI * PI * t / re).exp())
    }

    pub fn domain(&self) -> Domain {
        Domain::UNIT_SQUARE
    }

    pub fn exact(&self, x: f64, y: f64, t: f64) -> TgvPoint {
        let f = self.decay(t);
        let (sx, cx) = (PI * x).sin_cos();
        let (sy, cy) = (PI * y).sin_cos();
        let (s2x, s2y) = ((2.0 * PI * x).sin(), (2.0 * PI * y).sin());
        TgvPoint {
            ux: -sx * cy * f,
            uy: cx * sy * f,
            omega: -2.0 * PI * sx * sy * f,
            p: 0.25 * ((2.0 * PI * x).cos() + (2.0 * PI * y).cos()) * f * f,
            grad_ux: [-PI * cx * cy * f, PI * sx * sy * f],
            grad_uy: [-PI * sx * sy * f, PI * cx * cy * f],
            grad_omega: [-2.0 * PI * PI * cx * sy * f, -2.0 * PI * PI * sx * cy * f],
            grad_p: [-0.5 * PI * s2x * f * f, -0.5 * PI * s2y * f * f],
        }
    }

    /// Sampler of the exact fields at time `t`.
    pub fn field(&self, t: f64) -> TgvField {
        TgvField { case: *self, t }
    }

    /// Kinetic energy `K(t) = K_0 exp(-4 pi^2 t / Re)` with `K_0 = 1`.
    pub fn kinetic_energy(&self, t: f64) -> f64 {
        self.decay(t).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TgvField {
    pub case: TgvCase,
    pub t: f64,
}

impl FlowField for TgvField {
    fn sample(&self, pt: &FieldPoint) -> FieldSample {
        let e = self.case.exact(pt.x, pt.y, self.t);
        FieldSample {
            omega: e.omega,
            curl_omega: [e.grad_omega[1], -e.grad_omega[0]],
            u: [e.ux, e.uy],
            div_u: e.grad_ux[0] + e.grad_uy[1],
            p: e.p,
        }
    }
}

/// Bernoulli pressure `p + |u|^2 / 2` of a sampled field.
pub fn bernoulli(s: &FieldSample) -> f64 {
    s.p + 0.5 * (s.u[0] * s.u[0] + s.u[1] * s.u[1])
}

/// Inviscid double shear layer on ]0, 2 pi[^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollupCase {
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for RollupCase {
    fn default() -> Self {
        Self {
            delta: PI / 15.0,
            epsilon: 0.05,
        }
    }
}

impl RollupCase {
    pub fn domain(&self) -> Domain {
        Domain {
            x_lo: 0.0,
            x_hi: 2.0 * PI,
            y_lo: 0.0,
            y_hi: 2.0 * PI,
        }
    }

    /// Initial velocity.
    pub fn ic(&self, x: f64, y: f64) -> (f64, f64) {
        let ux = if y <= PI {
            ((y - 0.5 * PI) / self.delta).tanh()
        } else {
            ((1.5 * PI - y) / self.delta).tanh()
        };
        (ux, self.epsilon * x.sin())
    }

    /// Full initial sample: velocity, vorticity and its curl.
    pub fn sample_at(&self, x: f64, y: f64) -> FieldSample {
        let (ux, uy) = self.ic(x, y);
        let d = self.delta;
        let (s, sign) = if y <= PI {
            ((y - 0.5 * PI) / d, -1.0)
        } else {
            ((1.5 * PI - y) / d, 1.0)
        };
        let sech2 = 1.0 / s.cosh().powi(2);
        let omega = self.epsilon * x.cos() + sign * sech2 / d;
        // d/dy of sign * sech^2(s) / d is 2 sech^2 tanh / d^2 on both branches.
        let domega_dy = 2.0 * sech2 * s.tanh() / (d * d);
        let domega_dx = -self.epsilon * x.sin();
        FieldSample {
            omega,
            curl_omega: [domega_dy, -domega_dx],
            u: [ux, uy],
            div_u: 0.0,
            p: 0.0,
        }
    }
}

impl FlowField for RollupCase {
    fn sample(&self, pt: &FieldPoint) -> FieldSample {
        self.sample_at(pt.x, pt.y)
    }
}

/// L2 projection of the Bernoulli pressure of `reference` with the plan of `ops`.
pub fn project_bernoulli(mesh: &Mesh, ops: &OperatorSet, reference: &dyn FlowField) -> Result<Vec<f64>> {
    let bern = |pt: &FieldPoint| {
        let s = reference.sample(pt);
        FieldSample {
            p: bernoulli(&s),
            ..FieldSample::default()
        }
    };
    let loads = assemble_loads(mesh, &ops.table, &bern);
    LuSolver::new(ops.m2.clone())?.solve(&loads.p)
}

/// Initial state from the Navier-Stokes projector of `reference`.
///
/// The left-hand side uses the solver operators `ops`; inner products with
/// the reference use the high-order rule. The pressure is the L2 projection
/// of the reference Bernoulli pressure.
pub fn initial_state(
    mesh: &Mesh,
    ops: &OperatorSet,
    controls: &StepControls,
    reference: &dyn FlowField,
    t0: f64,
) -> Result<FlowState> {
    let solver = SaddleSolver::new(mesh, ops, controls.params())?;
    let hi = assemble_with_plan(mesh, QuadPlan::error())?;
    let mut rhs = ProjectorRhs::new(mesh, &hi, solver.params, reference, &solver.harmonic);
    // The total vorticity of a periodic field vanishes; dropping its
    // quadrature error makes the initial vorticity an exact discrete curl.
    let m = ops.ones0();
    let c = rhs.r_w.iter().sum::<f64>() / m.iter().sum::<f64>();
    rhs.r_w.iter_mut().zip(&m).for_each(|(r, m)| *r -= c * m);
    let t = solver.solve(&rhs.r_w, &rhs.r_u, &rhs.r_p, &rhs.targets)?;
    let p = project_bernoulli(mesh, &hi, reference)?;
    Ok(FlowState {
        u_half: t.u.clone(),
        omega: t.omega,
        u: t.u,
        p,
        t: t0,
        p_time: t0,
    })
}

/// Initial state from separate L2 projections of the reference vorticity
/// and velocity; the result is in general not an exact discrete curl.
pub fn l2_initial_state(mesh: &Mesh, reference: &dyn FlowField, t0: f64) -> Result<FlowState> {
    let hi = assemble_with_plan(mesh, QuadPlan::error())?;
    let loads = assemble_loads(mesh, &hi.table, reference);
    let omega = LuSolver::new(hi.m0.clone())?.solve(&loads.omega)?;
    let u = LuSolver::new(hi.m1.clone())?.solve(&loads.u)?;
    let p = project_bernoulli(mesh, &hi, reference)?;
    Ok(FlowState {
        u_half: u.clone(),
        omega,
        u,
        p,
        t: t0,
        p_time: t0,
    })
}

/// Exact optimal projection of `reference` with a high-order rule on both sides.
pub fn exact_projection(
    mesh: &Mesh,
    params: ProjectorParams,
    reference: &dyn FlowField,
    t: f64,
) -> Result<FlowState> {
    let hi = assemble_with_plan(mesh, QuadPlan::error())?;
    let tr = apply_projector(mesh, &hi, params, reference)?;
    let p = project_bernoulli(mesh, &hi, reference)?;
    Ok(FlowState {
        u_half: tr.u.clone(),
        omega: tr.omega,
        u: tr.u,
        p,
        t,
        p_time: t,
    })
}

/// Snapshot of a reference run.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub spec: MeshSpec,
    pub config_hash: String,
    pub state: FlowState,
}

const SNAPSHOT_MAGIC: &str = "vmsns-snapshot v1";

impl Snapshot {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sp = &self.spec;
        let _ = writeln!(s, "{SNAPSHOT_MAGIC}");
        let _ = writeln!(s, "config {}", self.config_hash);
        let _ = writeln!(s, "N {}", sp.n);
        let _ = writeln!(s, "p {}", sp.p);
        match sp.mapping {
            Mapping::Orthogonal => {
                let _ = writeln!(s, "mapping orthogonal");
            }
            Mapping::Curvilinear { c } => {
                let _ = writeln!(s, "mapping curvilinear {c:.16e}");
            }
        }
        let d = &sp.domain;
        let _ = writeln!(
            s,
            "domain {:.16e} {:.16e} {:.16e} {:.16e}",
            d.x_lo, d.x_hi, d.y_lo, d.y_hi
        );
        let st = &self.state;
        let _ = writeln!(s, "t {:.16e}", st.t);
        let _ = writeln!(s, "p_time {:.16e}", st.p_time);
        for (name, v) in [("omega", &st.omega), ("u", &st.u), ("P", &st.p), ("u_half", &st.u_half)] {
            let _ = writeln!(s, "{name} {}", v.len());
            for x in v.iter() {
                let _ = writeln!(s, "{x:.16e}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Snapshot(m);
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
                .ok_or_else(|| bad(format!("truncated file: expected {what}")))
        };
        let (_, magic) = next("header")?;
        if magic.join(" ") != SNAPSHOT_MAGIC {
            return Err(bad(format!("unsupported header '{}'", magic.join(" "))));
        }
        let field = |what: &str, (line, toks): (usize, Vec<&str>), n: usize| -> Result<Vec<String>> {
            if toks.first() != Some(&what) || toks.len() != n + 1 {
                return Err(bad(format!("line {line}: expected '{what}' with {n} value(s)")));
            }
            Ok(toks[1..].iter().map(|s| s.to_string()).collect())
        };
        let num = |s: &str, line: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| bad(format!("{line}: '{s}' is not a number")))
        };
        let int = |s: &str, line: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| bad(format!("{line}: '{s}' is not an integer")))
        };
        let config_hash = field("config", next("config")?, 1)?.remove(0);
        let n = int(&field("N", next("N")?, 1)?[0], "N")?;
        let p = int(&field("p", next("p")?, 1)?[0], "p")?;
        let (line, toks) = next("mapping")?;
        let mapping = match toks.as_slice() {
            ["mapping", "orthogonal"] => Mapping::Orthogonal,
            ["mapping", "curvilinear", c] => Mapping::Curvilinear { c: num(c, "mapping")? },
            _ => return Err(bad(format!("line {line}: bad mapping"))),
        };
        let dv = field("domain", next("domain")?, 4)?;
        let domain = Domain {
            x_lo: num(&dv[0], "domain")?,
            x_hi: num(&dv[1], "domain")?,
            y_lo: num(&dv[2], "domain")?,
            y_hi: num(&dv[3], "domain")?,
        };
        let t = num(&field("t", next("t")?, 1)?[0], "t")?;
        let p_time = num(&field("p_time", next("p_time")?, 1)?[0], "p_time")?;
        let mut arrays = Vec::new();
        for name in ["omega", "u", "P", "u_half"] {
            let len = int(&field(name, next(name)?, 1)?[0], name)?;
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                let (line, toks) = next(name)?;
                if toks.len() != 1 {
                    return Err(bad(format!("line {line}: expected one value")));
                }
                v.push(num(toks[0], &format!("line {line}"))?);
            }
            arrays.push(v);
        }
        let spec = MeshSpec {
            n,
            p,
            mapping,
            domain,
            periodic: true,
        };
        spec.validate()?;
        let np = n * p;
        let dims = [np * np, 2 * np * np, np * np, 2 * np * np];
        for (v, d) in arrays.iter().zip(dims) {
            if v.len() != d {
                return Err(bad(format!("array of length {} does not match the mesh ({d})", v.len())));
            }
        }
        let u_half = arrays.pop().unwrap_or_default();
        let pr = arrays.pop().unwrap_or_default();
        let u = arrays.pop().unwrap_or_default();
        let omega = arrays.pop().unwrap_or_default();
        Ok(Self {
            spec,
            config_hash,
            state: FlowState {
                omega,
                u,
                p: pr,
                t,
                p_time,
                u_half,
            },
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// A reference solution on a nested fine mesh.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub mesh: Mesh,
    pub snapshots: Vec<Snapshot>,
}

impl ReferenceRun {
    pub fn new(snapshots: Vec<Snapshot>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::Snapshot("reference run has no snapshots".into()))?;
        let spec = first.spec;
        if snapshots.iter().any(|s| s.spec != spec) {
            return Err(Error::Snapshot("snapshots come from different meshes".into()));
        }
        Ok(Self {
            mesh: build_mesh(spec)?,
            snapshots,
        })
    }

    pub fn at(&self, t: f64) -> Result<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.state.t - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::Snapshot(format!("no snapshot at t = {t}")))
    }
}

/// Refinement ratio of `fine` over `coarse`, if the meshes are nested.
pub fn nesting_ratio(coarse: &MeshSpec, fine: &MeshSpec) -> Result<usize> {
    if coarse.mapping != fine.mapping || coarse.domain != fine.domain {
        return Err(Error::NotNested("mapping or domain differ".into()));
    }
    if fine.n % coarse.n != 0 {
        return Err(Error::NotNested(format!(
            "fine N = {} is not a multiple of coarse N = {}",
            fine.n, coarse.n
        )));
    }
    Ok(fine.n / coarse.n)
}

/// Coarse projection of a reference state and the unresolved remainder.
#[derive(Debug, Clone)]
pub struct ProjectedReference {
    pub coarse: FlowState,
    pub triple: Triple,
    pub ops: OperatorSet,
}

/// Projects a reference state onto a coarse mesh with composite quadrature
/// over the reference elements.
pub fn project_reference(
    reference: &Mesh,
    state: &FlowState,
    coarse: &Mesh,
    params: ProjectorParams,
) -> Result<ProjectedReference> {
    let ratio = nesting_ratio(&coarse.spec, &reference.spec)?;
    let ops = assemble_with_plan(coarse, QuadPlan::composite(ratio, reference.p()))?;
    let field = DiscreteField::new(reference, &state.omega, &state.u).with_pressure(&state.p, None);
    let triple = apply_projector(coarse, &ops, params, &field)?;
    let loads = assemble_loads(coarse, &ops.table, &field);
    let p = LuSolver::new(ops.m2.clone())?.solve(&loads.p)?;
    Ok(ProjectedReference {
        coarse: FlowState {
            omega: triple.omega.clone(),
            u: triple.u.clone(),
            p,
            t: state.t,
            p_time: state.p_time,
            u_half: triple.u.clone(),
        },
        triple,
        ops,
    })
}

/// Difference of two flow fields, e.g. a reference minus its projection.
#[derive(Clone, Copy)]
pub struct Difference<'a> {
    pub a: &'a dyn FlowField,
    pub b: &'a dyn FlowField,
}

impl FlowField for Difference<'_> {
    fn sample(&self, pt: &FieldPoint) -> FieldSample {
        let a = self.a.sample(pt);
        let b = self.b.sample(pt);
        FieldSample {
            omega: a.omega - b.omega,
            curl_omega: [a.curl_omega[0] - b.curl_omega[0], a.curl_omega[1] - b.curl_omega[1]],
            u: [a.u[0] - b.u[0], a.u[1] - b.u[1]],
            div_u: a.div_u - b.div_u,
            p: a.p - b.p,
        }
    }
}

/// Integral of the vorticity of `field` under `table`.
pub fn total_vorticity(mesh: &Mesh, table: &PlanTable, field: &dyn FlowField) -> f64 {
    crate::fields::integrate(mesh, table, |qp, _, _| field.sample(&qp.field).omega)
}
