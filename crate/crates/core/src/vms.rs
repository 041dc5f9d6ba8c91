//! Two-space variational multiscale stepping.
//!
//! The fine space has degree `p + k` on the same elements and mapping as the
//! coarse space, and contains it exactly through the embeddings `E0`, `E1`,
//! `E2`. Each Picard sweep solves the resolved system on the coarse space and
//! the unresolved system on the fine space, constrained by multipliers to be
//! orthogonal to every coarse test function under the step operator.

use crate::assembly::{assemble_with_plan, OperatorSet};
use crate::basis::nodal_basis;
use crate::cases::initial_state;
use crate::diagnostics::{conserved_quantities, energy_balance_audit, DiagnosticsRecord, ScaleLevels};
use crate::error::{Error, Result};
use crate::fields::{FlowField, QuadPlan};
use crate::mesh::{build_mesh, Mesh, MeshSpec};
use crate::sparse::{norm_inf, quad_form, CsrMatrix, LuSolver, TripletBuilder};
use crate::stokes::{saddle_matrix, ProjectorParams, SaddleSolver};
use crate::timestepper::{diff, midpoint, FlowState, GalerkinStepper, StepControls, StepInfo, Stepper};

/// Coarse and fine spaces on one mesh with exact embeddings.
#[derive(Debug, Clone)]
pub struct ScalePair {
    pub k: usize,
    pub coarse: Mesh,
    pub fine: Mesh,
    /// Coarse operators under the fine equal-order rule, so that
    /// `G^T A_fine G` and the coarse operators agree.
    pub coarse_ops: OperatorSet,
    pub fine_ops: OperatorSet,
    pub embed0: CsrMatrix,
    pub embed1: CsrMatrix,
    pub embed2: CsrMatrix,
}

impl ScalePair {
    pub fn embed0(&self, v: &[f64]) -> Vec<f64> {
        self.embed0.matvec(v)
    }

    pub fn embed1(&self, v: &[f64]) -> Vec<f64> {
        self.embed1.matvec(v)
    }

    pub fn embed2(&self, v: &[f64]) -> Vec<f64> {
        self.embed2.matvec(v)
    }

    /// Coarse plus fine, in fine coefficients.
    pub fn total(&self, coarse: &FlowState, fine: &FlowState) -> FlowState {
        FlowState {
            omega: add(&self.embed0(&coarse.omega), &fine.omega),
            u: add(&self.embed1(&coarse.u), &fine.u),
            p: add(&self.embed2(&coarse.p), &fine.p),
            t: coarse.t,
            p_time: coarse.p_time,
            u_half: add(&self.embed1(&coarse.u_half), &fine.u_half),
        }
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Embedding matrices from a degree-`p` space into a degree-`p_f` space on
/// the same elements: nodal interpolation for `E0`, edge histopolation for
/// `E1`, cell histopolation for `E2`.
pub fn embeddings(coarse: &Mesh, fine: &Mesh) -> Result<[CsrMatrix; 3]> {
    if coarse.spec.n != fine.spec.n
        || coarse.spec.mapping != fine.spec.mapping
        || coarse.spec.domain != fine.spec.domain
        || fine.p() < coarse.p()
    {
        return Err(Error::NotNested(format!(
            "degree {} on {} elements does not contain degree {} on {} elements",
            fine.p(),
            fine.n(),
            coarse.p(),
            coarse.n()
        )));
    }
    let (p, pf) = (coarse.p(), fine.p());
    let bc = nodal_basis(p)?;
    let bf = nodal_basis(pf)?;
    // Coarse nodal values at fine nodes, and coarse edge integrals over fine cells.
    let h_at: Vec<Vec<f64>> = bf
        .nodes
        .iter()
        .map(|&x| {
            let mut h = vec![0.0; p + 1];
            bc.values_into(x, &mut h);
            h
        })
        .collect();
    let ei: Vec<Vec<f64>> = (1..=pf)
        .map(|j| bc.edge_integrals(bf.nodes[j - 1], bf.nodes[j]))
        .collect();

    let mut seen = [vec![false; fine.dim0], vec![false; fine.dim1], vec![false; fine.dim2]];
    let mut b = [TripletBuilder::new(), TripletBuilder::new(), TripletBuilder::new()];
    let (pc1, pf1) = (p + 1, pf + 1);
    for e in 0..coarse.num_elements() {
        let (c0, c1, c2) = (coarse.dofs0(e), coarse.dofs1(e), coarse.dofs2(e));
        let (f0, f1, f2) = (fine.dofs0(e), fine.dofs1(e), fine.dofs2(e));
        for jf in 0..=pf {
            for i_f in 0..=pf {
                let g = f0[i_f + jf * pf1];
                if std::mem::replace(&mut seen[0][g], true) {
                    continue;
                }
                for j in 0..=p {
                    for i in 0..=p {
                        let v = h_at[i_f][i] * h_at[jf][j];
                        if v != 0.0 {
                            b[0].push(g, c0[i + j * pc1], v);
                        }
                    }
                }
            }
        }
        // x-fluxes: h_i(xi) e_j(eta).
        for jf in 1..=pf {
            for i_f in 0..=pf {
                let g = f1[i_f + (jf - 1) * pf1];
                if std::mem::replace(&mut seen[1][g], true) {
                    continue;
                }
                for j in 1..=p {
                    for i in 0..=p {
                        let v = h_at[i_f][i] * ei[jf - 1][j - 1];
                        if v != 0.0 {
                            b[1].push(g, c1[i + (j - 1) * pc1], v);
                        }
                    }
                }
            }
        }
        // y-fluxes: e_i(xi) h_j(eta).
        for jf in 0..=pf {
            for i_f in 1..=pf {
                let g = f1[pf * pf1 + (i_f - 1) + jf * pf];
                if std::mem::replace(&mut seen[1][g], true) {
                    continue;
                }
                for j in 0..=p {
                    for i in 1..=p {
                        let v = ei[i_f - 1][i - 1] * h_at[jf][j];
                        if v != 0.0 {
                            b[1].push(g, c1[p * pc1 + (i - 1) + j * p], v);
                        }
                    }
                }
            }
        }
        for jf in 1..=pf {
            for i_f in 1..=pf {
                let g = f2[(i_f - 1) + (jf - 1) * pf];
                seen[2][g] = true;
                for j in 1..=p {
                    for i in 1..=p {
                        let v = ei[i_f - 1][i - 1] * ei[jf - 1][j - 1];
                        if v != 0.0 {
                            b[2].push(g, c2[(i - 1) + (j - 1) * p], v);
                        }
                    }
                }
            }
        }
    }
    let [b0, b1, b2] = b;
    Ok([
        b0.build(fine.dim0, coarse.dim0),
        b1.build(fine.dim1, coarse.dim1),
        b2.build(fine.dim2, coarse.dim2),
    ])
}

/// Builds the coarse/fine pair with fine degree `p + k`.
pub fn build_scale_pair(spec: MeshSpec, k: usize) -> Result<ScalePair> {
    let coarse = build_mesh(spec)?;
    let fine = if k == 0 {
        coarse.clone()
    } else {
        build_mesh(spec.with_degree(spec.p + k))?
    };
    let plan = QuadPlan::solver(spec.p + k);
    let coarse_ops = assemble_with_plan(&coarse, plan)?;
    let fine_ops = if k == 0 {
        coarse_ops.clone()
    } else {
        assemble_with_plan(&fine, plan)?
    };
    let [embed0, embed1, embed2] = embeddings(&coarse, &fine)?;
    Ok(ScalePair {
        k,
        coarse,
        fine,
        coarse_ops,
        fine_ops,
        embed0,
        embed1,
        embed2,
    })
}

/// Block-diagonal embedding of a full `(omega, u, P)` vector.
fn block_embedding(pair: &ScalePair) -> CsrMatrix {
    let mut b = TripletBuilder::new();
    let (f, c) = (&pair.fine, &pair.coarse);
    b.add_block(0, 0, &pair.embed0, 1.0);
    b.add_block(f.dim0, c.dim0, &pair.embed1, 1.0);
    b.add_block(f.dim0 + f.dim1, c.dim0 + c.dim1, &pair.embed2, 1.0);
    b.build(f.dim0 + f.dim1 + f.dim2, c.dim0 + c.dim1 + c.dim2)
}

/// Step operator of the fine space without borders, vorticity row scaled.
fn step_operator(mesh: &Mesh, ops: &OperatorSet, params: ProjectorParams) -> CsrMatrix {
    let n = mesh.dim0 + mesh.dim1 + mesh.dim2;
    let full = saddle_matrix(mesh, ops, params, &[]);
    let trip: Vec<_> = full
        .triplets()
        .into_iter()
        .filter(|&(r, c, _)| r < n && c < n)
        .collect();
    CsrMatrix::from_triplets(n, n, &trip)
}

/// Factorized orthogonality-constrained fine-space system.
///
/// Unknowns `(x', mu', lambda, mu_lambda)`:
///
/// ```text
/// [ A      b   A G   0 ] [x'      ]   [r]
/// [ b^T    0   0     0 ] [mu'     ] = [0]
/// [ G^T A  0   0     c ] [lambda  ]   [0]
/// [ 0      0   c^T   0 ] [mu_lam  ]   [0]
/// ```
///
/// with `b`, `c` the constant pressure borders. The third row is the
/// orthogonality of `x'` to every coarse test function.
#[derive(Debug)]
pub struct FineScaleSolver {
    pub params: ProjectorParams,
    a: CsrMatrix,
    g: CsrMatrix,
    nf: [usize; 3],
    nc: usize,
    nc0: usize,
    lu: LuSolver,
}

impl FineScaleSolver {
    pub fn new(pair: &ScalePair, params: ProjectorParams) -> Result<Self> {
        params.validate()?;
        let (f, c) = (&pair.fine, &pair.coarse);
        let nf = f.dim0 + f.dim1 + f.dim2;
        let nc = c.dim0 + c.dim1 + c.dim2;
        let a = step_operator(f, &pair.fine_ops, params);
        let g = block_embedding(pair);
        let ag = a.matmul(&g);
        let mut b = TripletBuilder::new();
        b.add_block(0, 0, &a, 1.0);
        b.add_block(0, nf + 1, &ag, 1.0);
        b.add_block(nf + 1, 0, &g.transpose().matmul(&a), 1.0);
        for i in f.dim0 + f.dim1..nf {
            b.push(i, nf, 1.0);
            b.push(nf, i, 1.0);
        }
        let lam_p = nf + 1 + c.dim0 + c.dim1;
        let mu_l = nf + 1 + nc;
        for i in 0..c.dim2 {
            b.push(lam_p + i, mu_l, 1.0);
            b.push(mu_l, lam_p + i, 1.0);
        }
        let lu = LuSolver::new(b.build(mu_l + 1, mu_l + 1))?;
        Ok(Self {
            params,
            a,
            g,
            nf: [f.dim0, f.dim1, f.dim2],
            nc,
            nc0: c.dim0,
            lu,
        })
    }

    fn len(&self) -> usize {
        self.nf.iter().sum()
    }

    /// `A x` for a fine `(omega, u, P)` vector, vorticity row scaled.
    pub fn apply_operator(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x)
    }

    /// `A G x` for a coarse `(omega, u, P)` vector.
    pub fn apply_embedded(&self, xc: &[f64]) -> Vec<f64> {
        self.a.matvec(&self.g.matvec(xc))
    }

    /// Orthogonality residuals `G^T A x'` (vorticity rows unscaled).
    pub fn orthogonality(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.g.matvec_t(&self.a.matvec(x));
        let s = self.params.row_scale();
        r.iter_mut().take(self.nc0).for_each(|v| *v /= s);
        r
    }

    /// Solves with a fully assembled, already scaled right-hand side of
    /// length `n0 + n1 + n2` of the fine space. Returns `(x', lambda)`.
    pub fn solve_scaled(&self, r: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nf = self.len();
        if r.len() != nf {
            return Err(Error::DimensionMismatch {
                what: "fine right-hand side",
                expected: nf,
                got: r.len(),
            });
        }
        let mut b = r.to_vec();
        b.resize(self.lu.dim(), 0.0);
        let x = self.lu.solve(&b)?;
        Ok((x[..nf].to_vec(), x[nf + 1..nf + 1 + self.nc].to_vec()))
    }
}

/// Fine scales from unscaled row data `(r_w, r_u, r_p)` on the fine space.
pub fn fine_scale_solve(
    pair: &ScalePair,
    controls: &StepControls,
    r_w: &[f64],
    r_u: &[f64],
    r_p: &[f64],
) -> Result<FlowState> {
    let f = &pair.fine;
    for (what, v, n) in [("r_w", r_w, f.dim0), ("r_u", r_u, f.dim1), ("r_p", r_p, f.dim2)] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                got: v.len(),
            });
        }
    }
    if pair.k == 0 {
        return Ok(FlowState::zeros(f, 0.0));
    }
    let solver = FineScaleSolver::new(pair, controls.params())?;
    let s = controls.params().row_scale();
    let mut b: Vec<f64> = r_w.iter().map(|v| s * v).collect();
    b.extend_from_slice(r_u);
    b.extend_from_slice(r_p);
    let (x, _) = solver.solve_scaled(&b)?;
    let (n0, n1) = (f.dim0, f.dim1);
    Ok(FlowState {
        omega: x[..n0].to_vec(),
        u: x[n0..n0 + n1].to_vec(),
        p: x[n0 + n1..].to_vec(),
        t: 0.0,
        p_time: 0.0,
        u_half: vec![0.0; n1],
    })
}

/// Resolved and unresolved fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitState {
    /// Coarse coefficients; the pressure is the post-split `P_bar`.
    pub coarse: FlowState,
    /// Fine-scale coefficients in the fine space.
    pub fine: FlowState,
    /// Pressure partition as solved, before the post-split, `(P_bar, P')`.
    pub multiplier_p: (Vec<f64>, Vec<f64>),
}

impl SplitState {
    pub fn t(&self) -> f64 {
        self.coarse.t
    }
}

/// VMS stepper. For `k = 0` it delegates to the Galerkin stepper.
#[derive(Debug)]
pub struct VmsStepper<'a> {
    pub pair: &'a ScalePair,
    pub controls: StepControls,
    coarse: Option<SaddleSolver>,
    fine: Option<FineScaleSolver>,
    galerkin: Option<GalerkinStepper<'a>>,
    m2_coarse: Option<LuSolver>,
}

impl<'a> VmsStepper<'a> {
    pub fn new(pair: &'a ScalePair, controls: StepControls) -> Result<Self> {
        controls.validate()?;
        if pair.k == 0 {
            return Ok(Self {
                pair,
                controls,
                coarse: None,
                fine: None,
                galerkin: Some(GalerkinStepper::new(&pair.coarse, &pair.coarse_ops, controls)?),
                m2_coarse: None,
            });
        }
        let params = controls.params();
        Ok(Self {
            pair,
            controls,
            coarse: Some(SaddleSolver::new(&pair.coarse, &pair.coarse_ops, params)?),
            fine: Some(FineScaleSolver::new(pair, params)?),
            galerkin: None,
            m2_coarse: Some(LuSolver::new(pair.coarse_ops.m2.clone())?),
        })
    }

    pub fn fine_solver(&self) -> Option<&FineScaleSolver> {
        self.fine.as_ref()
    }

    /// Initial split state from a reference field.
    ///
    /// The total is the fine-space initial state; its coarse part solves the
    /// resolved system with the total as data, and the fine part is the
    /// remainder, so the orthogonality holds at the start.
    pub fn initial_state(&self, reference: &dyn FlowField, t0: f64) -> Result<SplitState> {
        let pair = self.pair;
        if self.galerkin.is_some() {
            let coarse = initial_state(&pair.coarse, &pair.coarse_ops, &self.controls, reference, t0)?;
            let fine = FlowState::zeros(&pair.fine, t0);
            return Ok(SplitState {
                multiplier_p: (coarse.p.clone(), fine.p.clone()),
                coarse,
                fine,
            });
        }
        let (cs, fs) = (self.coarse_solver(), self.fine_scale_solver());
        let total = initial_state(&pair.fine, &pair.fine_ops, &self.controls, reference, t0)?;
        let x: Vec<f64> = total.omega.iter().chain(&total.u).chain(&total.p).copied().collect();
        let y = fs.apply_operator(&x);
        let f = &pair.fine;
        let s = self.controls.params().row_scale();
        let r_w: Vec<f64> = pair.embed0.matvec_t(&y[..f.dim0]).iter().map(|v| v / s).collect();
        let r_u = pair.embed1.matvec_t(&y[f.dim0..f.dim0 + f.dim1]);
        let r_p = pair.embed2.matvec_t(&y[f.dim0 + f.dim1..]);
        let tc = cs.solve(&r_w, &r_u, &r_p, &[])?;
        let fine_omega = diff(&total.omega, &pair.embed0(&tc.omega));
        let fine_u = diff(&total.u, &pair.embed1(&tc.u));
        let fine_p = diff(&total.p, &pair.embed2(&tc.p));
        let (pc, pf) = self.post_split(&tc.p, &fine_p)?;
        Ok(SplitState {
            coarse: FlowState {
                u_half: tc.u.clone(),
                omega: tc.omega,
                u: tc.u,
                p: pc,
                t: t0,
                p_time: t0,
            },
            fine: FlowState {
                u_half: fine_u.clone(),
                omega: fine_omega,
                u: fine_u,
                p: pf,
                t: t0,
                p_time: t0,
            },
            multiplier_p: (tc.p, fine_p),
        })
    }

    fn coarse_solver(&self) -> &SaddleSolver {
        self.coarse.as_ref().expect("coarse solver exists for k > 0")
    }

    fn fine_scale_solver(&self) -> &FineScaleSolver {
        self.fine.as_ref().expect("fine solver exists for k > 0")
    }

    /// `P_bar` as the L2 projection of `E2 P_bar + P'` onto the coarse
    /// volume space and `P'` as the remainder.
    pub fn post_split(&self, p_bar: &[f64], p_fine: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let Some(m2c) = &self.m2_coarse else {
            return Ok((p_bar.to_vec(), p_fine.to_vec()));
        };
        let pair = self.pair;
        let corr = m2c.solve(&pair.embed2.matvec_t(&pair.fine_ops.m2.matvec(p_fine)))?;
        let pc = add(p_bar, &corr);
        let total = add(&pair.embed2(p_bar), p_fine);
        let pf = diff(&total, &pair.embed2(&pc));
        Ok((pc, pf))
    }

    /// Largest orthogonality residual of the fine scales, measured with the
    /// pressure partition as solved.
    pub fn orthogonality_residual(&self, state: &SplitState) -> f64 {
        match &self.fine {
            None => 0.0,
            Some(fs) => {
                let x: Vec<f64> = state
                    .fine
                    .omega
                    .iter()
                    .chain(&state.fine.u)
                    .chain(&state.multiplier_p.1)
                    .copied()
                    .collect();
                norm_inf(&fs.orthogonality(&x))
            }
        }
    }

    fn advance(&self, state: &SplitState) -> Result<(SplitState, StepInfo)> {
        let pair = self.pair;
        if let Some(g) = &self.galerkin {
            let (coarse, info) = g.step(&state.coarse)?;
            let mut fine = FlowState::zeros(&pair.fine, coarse.t);
            fine.p_time = coarse.p_time;
            return Ok((
                SplitState {
                    multiplier_p: (coarse.p.clone(), fine.p.clone()),
                    coarse,
                    fine,
                },
                info,
            ));
        }
        state.coarse.check_dims(&pair.coarse)?;
        state.fine.check_dims(&pair.fine)?;
        let (cs, fs) = (self.coarse_solver(), self.fine_scale_solver());
        let c = &self.controls;
        let a = c.params();
        let (f, co) = (&pair.fine, &pair.coarse);
        let (fo, coo) = (&pair.fine_ops, &pair.coarse_ops);
        let w_n = add(&pair.embed0(&state.coarse.omega), &state.fine.omega);
        let u_n = add(&pair.embed1(&state.coarse.u), &state.fine.u);
        let mut base: Vec<f64> = fo.m1.matvec(&u_n).iter().map(|v| -a.a_mass * v).collect();
        if a.a_curl > 0.0 {
            let cw = fo.m1_curl.matvec(&w_n);
            base.iter_mut().zip(&cw).for_each(|(r, v)| *r += a.a_curl * v);
        }
        let zero_wc = vec![0.0; co.dim0];
        let zero_pc = vec![0.0; co.dim2];
        let mut wc = state.coarse.omega.clone();
        let mut uc = state.coarse.u.clone();
        let mut pc: Vec<f64>;
        let mut wf = state.fine.omega.clone();
        let mut uf = state.fine.u.clone();
        let mut pf: Vec<f64>;
        let mut info = StepInfo::default();
        loop {
            let w_mid = midpoint(&add(&pair.embed0(&wc), &wf), &w_n);
            let u_mid = midpoint(&add(&pair.embed1(&uc), &uf), &u_n);
            let conv = fo.convect(f, &u_mid, &w_mid)?;
            let r_u: Vec<f64> = base.iter().zip(&conv).map(|(b, v)| b + v).collect();
            // Resolved scales.
            let tc = cs.solve(&zero_wc, &pair.embed1.matvec_t(&r_u), &zero_pc, &[])?;
            // Unresolved scales from the residual of the resolved solution.
            let xc: Vec<f64> = tc.omega.iter().chain(&tc.u).chain(&tc.p).copied().collect();
            let agx = fs.apply_embedded(&xc);
            let mut rhs: Vec<f64> = agx.iter().map(|v| -v).collect();
            rhs[f.dim0..f.dim0 + f.dim1]
                .iter_mut()
                .zip(&r_u)
                .for_each(|(x, r)| *x += r);
            let (xf, _) = fs.solve_scaled(&rhs)?;
            let (n0, n1) = (f.dim0, f.dim1);
            let (wf_new, uf_new, pf_new) = (&xf[..n0], &xf[n0..n0 + n1], &xf[n0 + n1..]);
            let upd = (quad_form(&coo.m0, &diff(&tc.omega, &wc))
                + quad_form(&coo.m1, &diff(&tc.u, &uc))
                + quad_form(&fo.m0, &diff(wf_new, &wf))
                + quad_form(&fo.m1, &diff(uf_new, &uf)))
            .max(0.0)
            .sqrt();
            info.updates.push(upd);
            info.picard_iters += 1;
            wc = tc.omega;
            uc = tc.u;
            pc = tc.p;
            wf = wf_new.to_vec();
            uf = uf_new.to_vec();
            pf = pf_new.to_vec();
            if upd < c.picard_tol {
                break;
            }
            if info.picard_iters >= c.picard_max {
                return Err(Error::NonConvergence {
                    iters: info.picard_iters,
                    residual: upd,
                });
            }
        }
        let (p_bar, p_fine) = self.post_split(&pc, &pf)?;
        let t = state.t() + c.dt;
        let p_time = state.t() + 0.5 * c.dt;
        Ok((
            SplitState {
                coarse: FlowState {
                    u_half: midpoint(&uc, &state.coarse.u),
                    omega: wc,
                    u: uc,
                    p: p_bar,
                    t,
                    p_time,
                },
                fine: FlowState {
                    u_half: midpoint(&uf, &state.fine.u),
                    omega: wf,
                    u: uf,
                    p: p_fine,
                    t,
                    p_time,
                },
                multiplier_p: (pc, pf),
            },
            info,
        ))
    }
}

impl Stepper for VmsStepper<'_> {
    type State = SplitState;

    fn step(&self, state: &SplitState) -> Result<(SplitState, StepInfo)> {
        self.advance(state)
    }

    fn time(&self, state: &SplitState) -> f64 {
        state.t()
    }

    fn controls(&self) -> &StepControls {
        &self.controls
    }
}

/// One VMS step; builds the factorizations on every call.
pub fn step_vms(state: &SplitState, pair: &ScalePair, controls: StepControls) -> Result<(SplitState, usize)> {
    let st = VmsStepper::new(pair, controls)?;
    let (next, info) = st.step(state)?;
    Ok((next, info.picard_iters))
}

/// Fine-scale fields of a state, in fine coefficients.
pub fn extract_unresolved(state: &SplitState) -> &FlowState {
    &state.fine
}

/// Diagnostics row for a VMS step from `prev` to `cur`.
pub fn vms_record(
    pair: &ScalePair,
    controls: &StepControls,
    step: usize,
    prev: &SplitState,
    cur: &SplitState,
    picard_iters: usize,
) -> Result<DiagnosticsRecord> {
    let (f, c) = (&pair.fine, &pair.coarse);
    let total = pair.total(&cur.coarse, &cur.fine);
    let qt = conserved_quantities(f, &pair.fine_ops, &total.omega, &total.u)?;
    let qc = conserved_quantities(c, &pair.coarse_ops, &cur.coarse.omega, &cur.coarse.u)?;
    let qf = conserved_quantities(f, &pair.fine_ops, &cur.fine.omega, &cur.fine.u)?;
    let lift = |s: &SplitState| (pair.embed0(&s.coarse.omega), pair.embed1(&s.coarse.u));
    let (w0, u0) = lift(prev);
    let (w1, u1) = lift(cur);
    let audit = energy_balance_audit(
        f,
        &pair.fine_ops,
        controls.dt,
        controls.re,
        ScaleLevels {
            omega_n: &w0,
            omega_np1: &w1,
            u_n: &u0,
            u_np1: &u1,
        },
        Some(ScaleLevels {
            omega_n: &prev.fine.omega,
            omega_np1: &cur.fine.omega,
            u_n: &prev.fine.u,
            u_np1: &cur.fine.u,
        }),
    )?;
    Ok(DiagnosticsRecord {
        step,
        t: cur.t(),
        k_total: qt.k,
        k_coarse: qc.k,
        k_fine: qf.k,
        e_total: qt.e,
        w_total: qt.w,
        p_pal: qt.p_pal,
        div_res_coarse: cur.coarse.div_residual(c),
        div_res_fine: cur.fine.div_residual(f),
        picard_iters,
        energy_balance_res: audit.residual,
    })
}
