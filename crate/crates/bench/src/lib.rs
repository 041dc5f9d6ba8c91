//! Benchmark fixtures for the solver kernels.

use vmsns::assembly::{assemble_operators, OperatorSet};
use vmsns::cases::{initial_state, TgvCase};
use vmsns::mesh::{build_mesh, Mapping, Mesh, MeshSpec};
use vmsns::timestepper::{FlowState, StepControls};
use vmsns::Result;

/// Curvilinear periodic mesh on ]-1,1[^2 used by every benchmark.
pub fn tgv_spec(n: usize, p: usize) -> MeshSpec {
    MeshSpec::square(n, p, Mapping::Curvilinear { c: 0.1 })
}

/// Step controls of the TGV study.
pub fn tgv_controls() -> StepControls {
    StepControls::new(0.04, Some(100.0))
}

/// Mesh, equal-order operators and the projected TGV initial state.
pub struct Fixture {
    pub mesh: Mesh,
    pub ops: OperatorSet,
    pub state: FlowState,
}

impl Fixture {
    pub fn tgv(n: usize, p: usize) -> Result<Self> {
        let mesh = build_mesh(tgv_spec(n, p))?;
        let ops = assemble_operators(&mesh, p)?;
        let state = initial_state(&mesh, &ops, &tgv_controls(), &TgvCase::new(100.0).field(0.0), 0.0)?;
        Ok(Self { mesh, ops, state })
    }
}
