//! Mixed Stokes solves, the optimal projector and the inf-sup estimator.
//!
//! All solves share one bordered block system over `(omega, u, P)`:
//!
//! ```text
//! [ s M0        -s Wcurl     0     0   0 ] [omega ]   [ s r_w ]
//! [ -a_c M1 Ec  -a_m M1      Wdiv  0   H ] [u     ] = [ r_u   ]
//! [ 0           M2 Ediv      0     1   0 ] [P     ]   [ r_p   ]
//! [ 0           0            1^T   0   0 ] [mu    ]   [ 0     ]
//! [ 0           H^T          0     0   0 ] [lambda]   [ t     ]
//! ```
//!
//! with `s = a_c` when positive (making the matrix symmetric) and `s = 1`
//! otherwise. The mean-pressure border removes the constant pressure mode.
//! The harmonic border `H = M1 h_k` is only present without a mass term, where
//! the two discrete harmonic velocity fields of the torus are otherwise free.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_loads, constant_field_fluxes, OperatorSet};
use crate::error::{Error, Result};
use crate::fields::FlowField;
use crate::mesh::Mesh;
use crate::sparse::{dot, norm_inf, quad_form, CsrMatrix, LuSolver, TripletBuilder};

/// Weights of the curl and mass blocks of the projector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorParams {
    pub a_curl: f64,
    pub a_mass: f64,
}

impl ProjectorParams {
    pub fn stokes() -> Self {
        Self {
            a_curl: 1.0,
            a_mass: 0.0,
        }
    }

    /// `(1 / (2 Re), 1 / dt)`; `re = None` is the inviscid limit.
    pub fn navier_stokes(re: Option<f64>, dt: f64) -> Self {
        Self {
            a_curl: re.map_or(0.0, |re| 0.5 / re),
            a_mass: 1.0 / dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.a_curl) || !ok(self.a_mass) || (self.a_curl == 0.0 && self.a_mass == 0.0) {
            return Err(Error::InvalidParams {
                a_curl: self.a_curl,
                a_mass: self.a_mass,
            });
        }
        Ok(())
    }

    /// Scale applied to the vorticity row.
    pub fn row_scale(&self) -> f64 {
        if self.a_curl > 0.0 {
            self.a_curl
        } else {
            1.0
        }
    }
}

/// Solution of a bordered block system.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub omega: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Multiplier of the mean-pressure border.
    pub mu: f64,
    /// Multipliers of the harmonic borders (empty when absent).
    pub lambda: Vec<f64>,
}

/// Discrete harmonic velocity fields: divergence free and `M1`-orthogonal to
/// every discrete curl. One per periodic direction.
pub fn harmonic_fields(mesh: &Mesh, ops: &OperatorSet) -> Result<[Vec<f64>; 2]> {
    let n0 = mesh.dim0;
    // Bordered curl-curl system; its constant nullspace is removed by the border.
    let kcc = mesh.e_curl.transpose().matmul(&ops.m1_curl);
    let mut b = TripletBuilder::new();
    b.add_block(0, 0, &kcc, 1.0);
    for i in 0..n0 {
        b.push(i, n0, 1.0);
        b.push(n0, i, 1.0);
    }
    let lu = LuSolver::new(b.build(n0 + 1, n0 + 1))?;
    let mut out = [Vec::new(), Vec::new()];
    for (k, (c1, c2)) in [(1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
        let g = constant_field_fluxes(mesh, c1, c2);
        let mut rhs = ops.w_curl.matvec(&g);
        rhs.push(0.0);
        let s = lu.solve(&rhs)?;
        let es = mesh.e_curl.matvec(&s[..n0]);
        out[k] = g.iter().zip(&es).map(|(a, b)| a - b).collect();
    }
    Ok(out)
}

/// Factorized block system for fixed parameters.
#[derive(Debug)]
pub struct SaddleSolver {
    pub params: ProjectorParams,
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
    /// Harmonic fields `h_k` bordering the system, if present.
    pub harmonic: Vec<Vec<f64>>,
    /// `M1 h_k`, the border columns.
    pub harmonic_m1: Vec<Vec<f64>>,
    lu: LuSolver,
}

/// Assembles the bordered block matrix.
pub fn saddle_matrix(
    mesh: &Mesh,
    ops: &OperatorSet,
    params: ProjectorParams,
    harmonic: &[Vec<f64>],
) -> CsrMatrix {
    let (n0, n1, n2) = (mesh.dim0, mesh.dim1, mesh.dim2);
    let s = params.row_scale();
    let mut b = TripletBuilder::new();
    b.add_block(0, 0, &ops.m0, s);
    b.add_block(0, n0, &ops.w_curl, -s);
    if params.a_curl > 0.0 {
        b.add_block(n0, 0, &ops.m1_curl, -params.a_curl);
    }
    if params.a_mass > 0.0 {
        b.add_block(n0, n0, &ops.m1, -params.a_mass);
    }
    b.add_block(n0, n0 + n1, &ops.w_div, 1.0);
    b.add_block(n0 + n1, n0, &ops.m2_div, 1.0);
    let mu = n0 + n1 + n2;
    for i in 0..n2 {
        b.push(n0 + n1 + i, mu, 1.0);
        b.push(mu, n0 + n1 + i, 1.0);
    }
    for (k, col) in harmonic.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            if v != 0.0 {
                b.push(n0 + i, mu + 1 + k, v);
                b.push(mu + 1 + k, n0 + i, v);
            }
        }
    }
    let n = mu + 1 + harmonic.len();
    b.build(n, n)
}

impl SaddleSolver {
    pub fn new(mesh: &Mesh, ops: &OperatorSet, params: ProjectorParams) -> Result<Self> {
        params.validate()?;
        let harmonic: Vec<Vec<f64>> = if params.a_mass == 0.0 {
            harmonic_fields(mesh, ops)?.into_iter().collect()
        } else {
            Vec::new()
        };
        let harmonic_m1: Vec<Vec<f64>> = harmonic.iter().map(|h| ops.m1.matvec(h)).collect();
        let lu = LuSolver::new(saddle_matrix(mesh, ops, params, &harmonic_m1))?;
        Ok(Self {
            params,
            n0: mesh.dim0,
            n1: mesh.dim1,
            n2: mesh.dim2,
            harmonic,
            harmonic_m1,
            lu,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        self.lu.matrix()
    }

    /// Assembles the full right-hand side vector.
    pub fn rhs(&self, r_w: &[f64], r_u: &[f64], r_p: &[f64], targets: &[f64]) -> Vec<f64> {
        let s = self.params.row_scale();
        let mut b = Vec::with_capacity(self.lu.dim());
        b.extend(r_w.iter().map(|v| s * v));
        b.extend_from_slice(r_u);
        b.extend_from_slice(r_p);
        b.push(0.0);
        for k in 0..self.harmonic.len() {
            b.push(targets.get(k).copied().unwrap_or(0.0));
        }
        b
    }

    pub fn split(&self, x: &[f64]) -> Triple {
        let (n0, n1, n2) = (self.n0, self.n1, self.n2);
        Triple {
            omega: x[..n0].to_vec(),
            u: x[n0..n0 + n1].to_vec(),
            p: x[n0 + n1..n0 + n1 + n2].to_vec(),
            mu: x[n0 + n1 + n2],
            lambda: x[n0 + n1 + n2 + 1..].to_vec(),
        }
    }

    /// Solves with the row blocks `r_w`, `r_u`, `r_p` (vorticity row unscaled).
    pub fn solve(&self, r_w: &[f64], r_u: &[f64], r_p: &[f64], targets: &[f64]) -> Result<Triple> {
        for (what, v, n) in [("r_w", r_w, self.n0), ("r_u", r_u, self.n1), ("r_p", r_p, self.n2)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        let b = self.rhs(r_w, r_u, r_p, targets);
        Ok(self.split(&self.lu.solve(&b)?))
    }
}

fn check_multipliers(t: &Triple, scale: f64) -> Result<()> {
    let tol = 1e-8 * scale.max(1e-300);
    if t.mu.abs() > tol {
        return Err(Error::InconsistentRhs(format!(
            "source has a component {:e} along the constant pressure mode",
            t.mu
        )));
    }
    if let Some(l) = t.lambda.iter().find(|l| l.abs() > tol) {
        return Err(Error::InconsistentRhs(format!(
            "source has a component {l:e} along a harmonic velocity field"
        )));
    }
    Ok(())
}

/// Steady Stokes problem `curl omega + grad p = f`, `omega = curl u`,
/// `div u = 0`, with zero-mean pressure and zero net flow.
pub fn solve_stokes(mesh: &Mesh, ops: &OperatorSet, f: &dyn FlowField) -> Result<Triple> {
    let solver = SaddleSolver::new(mesh, ops, ProjectorParams::stokes())?;
    let loads = assemble_loads(mesh, &ops.table, f);
    let r_u: Vec<f64> = loads.u.iter().map(|v| -v).collect();
    let t = solver.solve(&vec![0.0; mesh.dim0], &r_u, &vec![0.0; mesh.dim2], &[])?;
    check_multipliers(&t, norm_inf(&loads.u))?;
    Ok(t)
}

/// Right-hand side blocks of the projector for a reference field.
#[derive(Debug, Clone)]
pub struct ProjectorRhs {
    pub r_w: Vec<f64>,
    pub r_u: Vec<f64>,
    pub r_p: Vec<f64>,
    pub targets: Vec<f64>,
}

impl ProjectorRhs {
    pub fn new(
        mesh: &Mesh,
        ops: &OperatorSet,
        params: ProjectorParams,
        reference: &dyn FlowField,
        harmonic: &[Vec<f64>],
    ) -> Self {
        let l = assemble_loads(mesh, &ops.table, reference);
        let r_w = l.omega.iter().zip(&l.curl_u).map(|(a, b)| a - b).collect();
        let r_u = l
            .curl_omega
            .iter()
            .zip(&l.u)
            .map(|(c, u)| -params.a_curl * c - params.a_mass * u)
            .collect();
        // Harmonic borders carry M1 h_k, so the target is (h_k, u_ref).
        let targets = harmonic.iter().map(|h| dot(h, &l.u)).collect();
        Self {
            r_w,
            r_u,
            r_p: l.div_u,
            targets,
        }
    }
}

/// Optimal projection of a reference field onto the discrete spaces.
///
/// Left- and right-hand sides share the plan of `ops`. The returned pressure
/// is the raw multiplier; it differs from the projected reference pressure.
pub fn apply_projector(
    mesh: &Mesh,
    ops: &OperatorSet,
    params: ProjectorParams,
    reference: &dyn FlowField,
) -> Result<Triple> {
    let solver = SaddleSolver::new(mesh, ops, params)?;
    project_with(&solver, mesh, ops, reference)
}

/// Projection with a prebuilt solver.
pub fn project_with(
    solver: &SaddleSolver,
    mesh: &Mesh,
    ops: &OperatorSet,
    reference: &dyn FlowField,
) -> Result<Triple> {
    let rhs = ProjectorRhs::new(mesh, ops, solver.params, reference, &solver.harmonic);
    solver.solve(&rhs.r_w, &rhs.r_u, &rhs.r_p, &rhs.targets)
}

/// Block residuals of the projector system for a candidate triple.
pub fn projector_residual(solver: &SaddleSolver, t: &Triple, rhs: &ProjectorRhs) -> f64 {
    let mut x = Vec::new();
    x.extend_from_slice(&t.omega);
    x.extend_from_slice(&t.u);
    x.extend_from_slice(&t.p);
    x.push(t.mu);
    x.extend_from_slice(&t.lambda);
    let ax = solver.matrix().matvec(&x);
    let b = solver.rhs(&rhs.r_w, &rhs.r_u, &rhs.r_p, &rhs.targets);
    ax.iter().zip(&b).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Outcome of the optimality check.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    /// Largest block residual of the projector system.
    pub orthogonality: f64,
    /// Smallest `|curl(w + d) - curl w_ref| - |curl w - curl w_ref|` over trials.
    pub worst_margin: f64,
    pub trials: usize,
    pub passed: bool,
}

/// Checks Galerkin orthogonality and curl-norm minimality of a Stokes projection.
pub fn check_norm_optimality(
    mesh: &Mesh,
    ops: &OperatorSet,
    projection: &Triple,
    reference: &dyn FlowField,
    trials: usize,
    seed: u64,
) -> Result<OptimalityReport> {
    let solver = SaddleSolver::new(mesh, ops, ProjectorParams::stokes())?;
    let rhs = ProjectorRhs::new(mesh, ops, solver.params, reference, &solver.harmonic);
    let orthogonality = projector_residual(&solver, projection, &rhs);
    let loads = assemble_loads(mesh, &ops.table, reference);
    // |curl(w) - c|^2 up to the constant |c|^2.
    let err2 = |w: &[f64]| {
        let cw = mesh.e_curl.matvec(w);
        quad_form(&ops.m1, &cw) - 2.0 * dot(&cw, &loads.curl_omega)
    };
    let c2 = {
        // |curl w_ref|^2 with the same plan, so norms are non-negative.
        let table = &ops.table;
        crate::fields::integrate(mesh, table, |qp, _, _| {
            let s = reference.sample(&qp.field);
            s.curl_omega[0].powi(2) + s.curl_omega[1].powi(2)
        })
    };
    let norm = |w: &[f64]| (err2(w) + c2).max(0.0).sqrt();
    let base = norm(&projection.omega);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let scale = 10f64.powf(rng.random_range(-6.0..0.0));
        let w: Vec<f64> = projection
            .omega
            .iter()
            .map(|v| v + scale * rng.random_range(-1.0..1.0))
            .collect();
        worst = worst.min(norm(&w) - base);
    }
    if trials == 0 {
        worst = 0.0;
    }
    Ok(OptimalityReport {
        orthogonality,
        worst_margin: worst,
        trials,
        passed: orthogonality < 1e-11 && worst >= -1e-11,
    })
}

/// Discrete inf-sup constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfSup {
    pub beta_omega: f64,
    pub beta_u: f64,
    /// Pressure constant with the constant mode left in the pressure space.
    pub beta_u_with_constant: f64,
    /// Number of pressure eigenvalues below the nullspace threshold.
    pub pressure_null_dim: usize,
}

fn dense(m: &CsrMatrix) -> Mat<f64> {
    let mut d = Mat::<f64>::zeros(m.nrows, m.ncols);
    for r in 0..m.nrows {
        for (c, v) in m.row(r) {
            d[(r, c)] += v;
        }
    }
    d
}

/// Generalized eigenvalues of `B H^-1 B^T x = lambda G x`, ascending.
fn pairing_spectrum(b: &CsrMatrix, h: &CsrMatrix, g: &CsrMatrix) -> Result<Vec<f64>> {
    let eig = |e: faer::linalg::solvers::LltError| Error::Eigen(format!("{e:?}"));
    let hl = dense(h).llt(Side::Lower).map_err(eig)?;
    let mut y = dense(&b.transpose());
    hl.L().solve_lower_triangular_in_place(y.as_mut());
    let s = y.transpose() * &y;
    let gl = dense(g).llt(Side::Lower).map_err(eig)?;
    let mut x = s;
    gl.L().solve_lower_triangular_in_place(x.as_mut());
    let mut c = x.transpose().to_owned();
    gl.L().solve_lower_triangular_in_place(c.as_mut());
    let sym = Mat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    sym.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Dense estimate of the two inf-sup constants in the natural norms.
pub fn inf_sup_estimate(mesh: &Mesh, ops: &OperatorSet) -> Result<InfSup> {
    let edt = mesh.e_div.transpose();
    let ect = mesh.e_curl.transpose();
    let hv = ops.m1.add(1.0, &edt.matmul(&ops.m2_div), 1.0);
    let he = ops.m0.add(1.0, &ect.matmul(&ops.m1_curl), 1.0);

    let pe = pairing_spectrum(&ops.m2_div, &hv, &ops.m2)?;
    let pmax = pe.last().copied().unwrap_or(0.0);
    let thresh = 1e-8 * pmax;
    let null = pe.iter().filter(|&&v| v <= thresh).count();
    let beta_u = pe.iter().find(|&&v| v > thresh).map_or(0.0, |v| v.sqrt());

    let we = pairing_spectrum(&ops.m1_curl, &he, &hv)?;
    let wmax = we.last().copied().unwrap_or(0.0);
    let beta_omega = we
        .iter()
        .find(|&&v| v > 1e-8 * wmax)
        .map_or(0.0, |v| v.sqrt());

    // The constant mode q = M2^-1 1 attains the infimum over the full space.
    let q = LuSolver::new(ops.m2.clone())?.solve(&vec![1.0; mesh.dim2])?;
    let btq = ops.m2_div.matvec_t(&q);
    let hq = LuSolver::new(hv)?.solve(&btq)?;
    let rayleigh = dot(&btq, &hq) / quad_form(&ops.m2, &q);

    Ok(InfSup {
        beta_omega,
        beta_u,
        beta_u_with_constant: rayleigh.max(0.0).sqrt(),
        pressure_null_dim: null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_operators;
    use crate::fields::{FieldPoint, FieldSample};
    use crate::mesh::{build_mesh, Mapping, MeshSpec};

    fn setup(n: usize, p: usize) -> (Mesh, OperatorSet) {
        let m = build_mesh(MeshSpec::square(n, p, Mapping::Curvilinear { c: 0.1 })).unwrap();
        let ops = assemble_operators(&m, p).unwrap();
        (m, ops)
    }

    #[test]
    fn params_are_validated() {
        assert!(ProjectorParams { a_curl: 0.0, a_mass: 0.0 }.validate().is_err());
        assert!(ProjectorParams { a_curl: -1.0, a_mass: 1.0 }.validate().is_err());
        assert_eq!(ProjectorParams::navier_stokes(Some(100.0), 0.04).a_curl, 0.005);
        assert_eq!(ProjectorParams::navier_stokes(None, 0.5).a_curl, 0.0);
    }

    #[test]
    fn saddle_matrix_is_symmetric() {
        let (m, ops) = setup(3, 2);
        for params in [ProjectorParams::stokes(), ProjectorParams::navier_stokes(Some(100.0), 0.04)] {
            let s = SaddleSolver::new(&m, &ops, params).unwrap();
            assert!(s.matrix().asymmetry() < 1e-13);
        }
    }

    #[test]
    fn harmonic_fields_are_harmonic() {
        let (m, ops) = setup(3, 2);
        for h in harmonic_fields(&m, &ops).unwrap() {
            assert!(norm_inf(&m.e_div.matvec(&h)) < 1e-13);
            assert!(norm_inf(&ops.w_curl.matvec(&h)) < 1e-12);
        }
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let (m, ops) = setup(2, 2);
        let zero = |_: &FieldPoint| FieldSample::default();
        let t = solve_stokes(&m, &ops, &zero).unwrap();
        assert!(t.omega.iter().chain(&t.u).chain(&t.p).all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_load_is_inconsistent() {
        let (m, ops) = setup(2, 2);
        let f = |_: &FieldPoint| FieldSample {
            u: [1.0, 0.0],
            ..FieldSample::default()
        };
        assert!(matches!(solve_stokes(&m, &ops, &f), Err(Error::InconsistentRhs(_))));
    }

    #[test]
    fn inf_sup_positive_on_small_mesh() {
        let m = build_mesh(MeshSpec::square(2, 1, Mapping::Orthogonal)).unwrap();
        let ops = assemble_operators(&m, 1).unwrap();
        let est = inf_sup_estimate(&m, &ops).unwrap();
        assert!(est.beta_omega > 0.0 && est.beta_u > 0.0);
        assert_eq!(est.pressure_null_dim, 1);
        assert!(est.beta_u_with_constant < 1e-10);
    }
}
