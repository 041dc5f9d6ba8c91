use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use vmsns::assembly::assemble_operators;
use vmsns::mesh::build_mesh;
use vmsns::stokes::SaddleSolver;
use vmsns::timestepper::{GalerkinStepper, Stepper};
use vmsns::vms::{build_scale_pair, VmsStepper};
use vmsns::cases::TgvCase;
use vmsns_bench::{tgv_controls, tgv_spec, Fixture};

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for n in [4, 8] {
        let mesh = build_mesh(tgv_spec(n, 3)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &mesh, |b, m| {
            b.iter(|| assemble_operators(black_box(m), 3).unwrap())
        });
    }
    g.finish();
}

fn convection(c: &mut Criterion) {
    let f = Fixture::tgv(8, 3).unwrap();
    c.bench_function("convect/8x8_p3", |b| {
        b.iter(|| f.ops.convect(&f.mesh, black_box(&f.state.u), black_box(&f.state.omega)).unwrap())
    });
}

fn saddle(c: &mut Criterion) {
    let f = Fixture::tgv(8, 3).unwrap();
    let params = tgv_controls().params();
    c.bench_function("saddle/factorize_8x8_p3", |b| {
        b.iter(|| SaddleSolver::new(&f.mesh, &f.ops, params).unwrap())
    });
    let s = SaddleSolver::new(&f.mesh, &f.ops, params).unwrap();
    let r_w = f.ops.m0.matvec(&f.state.omega);
    let r_u = f.ops.m1.matvec(&f.state.u);
    let r_p = vec![0.0; f.mesh.dim2];
    c.bench_function("saddle/solve_8x8_p3", |b| {
        b.iter(|| s.solve(black_box(&r_w), &r_u, &r_p, &[]).unwrap())
    });
}

fn steps(c: &mut Criterion) {
    let f = Fixture::tgv(4, 3).unwrap();
    let st = GalerkinStepper::new(&f.mesh, &f.ops, tgv_controls()).unwrap();
    c.bench_function("step/galerkin_4x4_p3", |b| b.iter(|| st.step(black_box(&f.state)).unwrap()));
    let pair = build_scale_pair(tgv_spec(4, 3), 1).unwrap();
    let vs = VmsStepper::new(&pair, tgv_controls()).unwrap();
    let ic = vs.initial_state(&TgvCase::new(100.0).field(0.0), 0.0).unwrap();
    c.bench_function("step/vms_4x4_p3_k1", |b| b.iter(|| vs.step(black_box(&ic)).unwrap()));
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = assembly, convection, saddle, steps
}
criterion_main!(kernels);
