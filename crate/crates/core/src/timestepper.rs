//! Crank-Nicolson time stepping with Picard iterations on the convection term.
//!
//! Each step solves for `(omega_{n+1}, u_{n+1}, P_{n+1/2})` with the constant
//! block matrix of the Navier-Stokes projector, `a_curl = 1/(2 Re)` and
//! `a_mass = 1/dt`. Convection is lagged: every Picard sweep re-evaluates it at
//! the current midpoint iterate and reuses one factorization.

use crate::assembly::OperatorSet;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{norm_inf, quad_form};
use crate::stokes::{ProjectorParams, SaddleSolver};

pub const DEFAULT_PICARD_TOL: f64 = 1e-12;
pub const DEFAULT_PICARD_MAX: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControls {
    pub dt: f64,
    /// `None` is the inviscid limit: the viscous blocks are dropped.
    pub re: Option<f64>,
    pub picard_tol: f64,
    pub picard_max: usize,
}

impl StepControls {
    pub fn new(dt: f64, re: Option<f64>) -> Self {
        Self {
            dt,
            re,
            picard_tol: DEFAULT_PICARD_TOL,
            picard_max: DEFAULT_PICARD_MAX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidControls(format!("dt = {} must be positive", self.dt)));
        }
        if let Some(re) = self.re {
            if !(re > 0.0 && re.is_finite()) {
                return Err(Error::InvalidControls(format!("Re = {re} must be positive")));
            }
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidControls("picard_tol must be positive".into()));
        }
        if self.picard_max == 0 {
            return Err(Error::InvalidControls("picard_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> ProjectorParams {
        ProjectorParams::navier_stokes(self.re, self.dt)
    }

    /// Number of steps from `t0` to `t_final`; must be an integer multiple of `dt`.
    pub fn steps_to(&self, t0: f64, t_final: f64) -> Result<usize> {
        let m = (t_final - t0) / self.dt;
        let r = m.round();
        if r < 0.0 || (m - r).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::InvalidControls(format!(
                "t_final - t0 = {} is not a non-negative multiple of dt = {}",
                t_final - t0,
                self.dt
            )));
        }
        Ok(r as usize)
    }
}

/// Fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub omega: Vec<f64>,
    pub u: Vec<f64>,
    /// Bernoulli pressure at `p_time`.
    pub p: Vec<f64>,
    pub t: f64,
    /// Time at which `p` lives: the midpoint of the step that produced it.
    pub p_time: f64,
    /// Velocity at `p_time`, used to recover the static pressure.
    pub u_half: Vec<f64>,
}

impl FlowState {
    pub fn zeros(mesh: &Mesh, t: f64) -> Self {
        Self {
            omega: vec![0.0; mesh.dim0],
            u: vec![0.0; mesh.dim1],
            p: vec![0.0; mesh.dim2],
            t,
            p_time: t,
            u_half: vec![0.0; mesh.dim1],
        }
    }

    pub fn check_dims(&self, mesh: &Mesh) -> Result<()> {
        for (what, got, expected) in [
            ("vorticity", self.omega.len(), mesh.dim0),
            ("velocity", self.u.len(), mesh.dim1),
            ("pressure", self.p.len(), mesh.dim2),
            ("midpoint velocity", self.u_half.len(), mesh.dim1),
        ] {
            if got != expected {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        Ok(())
    }

    /// `|E_div u|_inf`.
    pub fn div_residual(&self, mesh: &Mesh) -> f64 {
        norm_inf(&mesh.e_div.matvec(&self.u))
    }
}

/// Per-step solver statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub picard_iters: usize,
    /// Update norm of every Picard sweep.
    pub updates: Vec<f64>,
}

/// A time integrator over some state type.
pub trait Stepper {
    type State: Clone;
    fn step(&self, state: &Self::State) -> Result<(Self::State, StepInfo)>;
    fn time(&self, state: &Self::State) -> f64;
    fn controls(&self) -> &StepControls;
}

pub(crate) fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

pub(crate) fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Galerkin stepper holding the factorized step matrix.
#[derive(Debug)]
pub struct GalerkinStepper<'a> {
    pub mesh: &'a Mesh,
    pub ops: &'a OperatorSet,
    pub controls: StepControls,
    solver: SaddleSolver,
}

impl<'a> GalerkinStepper<'a> {
    pub fn new(mesh: &'a Mesh, ops: &'a OperatorSet, controls: StepControls) -> Result<Self> {
        controls.validate()?;
        let solver = SaddleSolver::new(mesh, ops, controls.params())?;
        Ok(Self {
            mesh,
            ops,
            controls,
            solver,
        })
    }

    pub fn solver(&self) -> &SaddleSolver {
        &self.solver
    }

    /// Velocity-row terms of the step that depend only on level `n`.
    fn base_rhs(&self, state: &FlowState) -> Vec<f64> {
        let a = self.controls.params();
        let mu = self.ops.m1.matvec(&state.u);
        let mut r: Vec<f64> = mu.iter().map(|v| -a.a_mass * v).collect();
        if a.a_curl > 0.0 {
            let cw = self.ops.m1_curl.matvec(&state.omega);
            r.iter_mut().zip(&cw).for_each(|(r, c)| *r += a.a_curl * c);
        }
        r
    }

    fn advance(&self, state: &FlowState) -> Result<(FlowState, StepInfo)> {
        state.check_dims(self.mesh)?;
        let c = &self.controls;
        let base = self.base_rhs(state);
        let zero_w = vec![0.0; self.mesh.dim0];
        let zero_p = vec![0.0; self.mesh.dim2];
        let mut omega = state.omega.clone();
        let mut u = state.u.clone();
        let mut p: Vec<f64>;
        let mut info = StepInfo::default();
        loop {
            let u_mid = midpoint(&u, &state.u);
            let w_mid = midpoint(&omega, &state.omega);
            let conv = self.ops.convect(self.mesh, &u_mid, &w_mid)?;
            let r_u: Vec<f64> = base.iter().zip(&conv).map(|(b, v)| b + v).collect();
            let next = self.solver.solve(&zero_w, &r_u, &zero_p, &[])?;
            let dw = diff(&next.omega, &omega);
            let du = diff(&next.u, &u);
            let upd = (quad_form(&self.ops.m0, &dw) + quad_form(&self.ops.m1, &du))
                .max(0.0)
                .sqrt();
            info.updates.push(upd);
            info.picard_iters += 1;
            omega = next.omega;
            u = next.u;
            p = next.p;
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
        let u_half = midpoint(&u, &state.u);
        Ok((
            FlowState {
                omega,
                u,
                p,
                t: state.t + c.dt,
                p_time: state.t + 0.5 * c.dt,
                u_half,
            },
            info,
        ))
    }
}

impl Stepper for GalerkinStepper<'_> {
    type State = FlowState;

    fn step(&self, state: &FlowState) -> Result<(FlowState, StepInfo)> {
        self.advance(state)
    }

    fn time(&self, state: &FlowState) -> f64 {
        state.t
    }

    fn controls(&self) -> &StepControls {
        &self.controls
    }
}

/// One Crank-Nicolson step; factorizes the step matrix on every call.
pub fn step_galerkin(
    state: &FlowState,
    controls: StepControls,
    mesh: &Mesh,
    ops: &OperatorSet,
) -> Result<(FlowState, usize)> {
    let stepper = GalerkinStepper::new(mesh, ops, controls)?;
    let (next, info) = stepper.step(state)?;
    Ok((next, info.picard_iters))
}

/// Advances `steps` times, calling `observer(step, previous, current, info)`
/// after each step. Errors carry the failing step index.
pub fn run<S: Stepper>(
    stepper: &S,
    ic: S::State,
    steps: usize,
    mut observer: impl FnMut(usize, &S::State, &S::State, &StepInfo) -> Result<()>,
) -> Result<S::State> {
    let mut state = ic;
    for n in 1..=steps {
        let (next, info) = stepper.step(&state).map_err(|e| Error::StepFailed {
            step: n,
            source: Box::new(e),
        })?;
        observer(n, &state, &next, &info)?;
        state = next;
    }
    Ok(state)
}

/// Advances from the state time to `t_final`.
pub fn run_to<S: Stepper>(
    stepper: &S,
    ic: S::State,
    t_final: f64,
    observer: impl FnMut(usize, &S::State, &S::State, &StepInfo) -> Result<()>,
) -> Result<S::State> {
    let steps = stepper.controls().steps_to(stepper.time(&ic), t_final)?;
    run(stepper, ic, steps, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_operators;
    use crate::mesh::{build_mesh, Mapping, MeshSpec};

    #[test]
    fn controls_validation() {
        assert!(StepControls::new(0.0, None).validate().is_err());
        assert!(StepControls::new(0.1, Some(-1.0)).validate().is_err());
        let c = StepControls::new(0.04, Some(100.0));
        assert_eq!(c.steps_to(0.0, 1.0).unwrap(), 25);
        assert!(c.steps_to(0.0, 1.01).is_err());
        assert_eq!(c.steps_to(0.3, 0.3).unwrap(), 0);
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let m = build_mesh(MeshSpec::square(2, 2, Mapping::Curvilinear { c: 0.1 })).unwrap();
        let ops = assemble_operators(&m, 2).unwrap();
        let s0 = FlowState::zeros(&m, 0.0);
        let (s1, iters) = step_galerkin(&s0, StepControls::new(0.1, Some(10.0)), &m, &ops).unwrap();
        assert_eq!(iters, 1);
        assert!(s1.omega.iter().chain(&s1.u).chain(&s1.p).all(|&v| v == 0.0));
        assert!((s1.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_return_initial_state() {
        let m = build_mesh(MeshSpec::square(2, 1, Mapping::Orthogonal)).unwrap();
        let ops = assemble_operators(&m, 1).unwrap();
        let st = GalerkinStepper::new(&m, &ops, StepControls::new(0.1, None)).unwrap();
        let s0 = FlowState::zeros(&m, 0.5);
        let out = run_to(&st, s0.clone(), 0.5, |_, _, _, _| Ok(())).unwrap();
        assert_eq!(out, s0);
    }
}
