//! Property-based invariants of the discrete complex, the operators, the
//! projector, the scale split and the snapshot format.

use proptest::prelude::*;
use vmsns::assembly::assemble_operators;
use vmsns::cases::{RollupCase, Snapshot, TgvCase};
use vmsns::fields::{DiscreteField, FieldPoint};
use vmsns::mesh::{build_mesh, Mapping, MeshSpec};
use vmsns::sparse::{dot, quad_form};
use vmsns::stokes::{project_with, ProjectorParams, SaddleSolver};
use vmsns::timestepper::FlowState;
use vmsns::vms::build_scale_pair;

fn mapping() -> impl Strategy<Value = Mapping> {
    prop_oneof![Just(Mapping::Orthogonal), (0.0..0.12f64).prop_map(|c| Mapping::Curvilinear { c })]
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn divergence_of_curl_vanishes(n in 1usize..7, p in 1usize..5, m in mapping(), seed in any::<u64>()) {
        let mesh = build_mesh(MeshSpec::square(n, p, m)).unwrap();
        let w: Vec<f64> = (0..mesh.dim0).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 - 500.0).collect();
        let d = mesh.e_div.matvec(&mesh.e_curl.matvec(&w));
        prop_assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_matrices_are_positive(n in 1usize..4, p in 1usize..4, m in mapping(), s in any::<u64>()) {
        let mesh = build_mesh(MeshSpec::square(n, p, m)).unwrap();
        let ops = assemble_operators(&mesh, p).unwrap();
        for (mat, dim) in [(&ops.m0, mesh.dim0), (&ops.m1, mesh.dim1), (&ops.m2, mesh.dim2)] {
            let x: Vec<f64> = (0..dim).map(|i| (((i as u64) ^ s).wrapping_mul(2654435761) % 997) as f64 / 498.5 - 1.0).collect();
            let nrm = dot(&x, &x);
            prop_assume!(nrm > 0.0);
            prop_assert!(quad_form(mat, &x) > 0.0);
            prop_assert!(mat.asymmetry() < 1e-13);
        }
    }

    #[test]
    fn convection_does_no_work(m in mapping(), p in 1usize..4, w in coeffs(64), u in coeffs(128)) {
        let mesh = build_mesh(MeshSpec::square(2, p, m)).unwrap();
        let ops = assemble_operators(&mesh, p).unwrap();
        let (w, u) = (&w[..mesh.dim0.min(64)], &u[..mesh.dim1.min(128)]);
        prop_assume!(w.len() == mesh.dim0 && u.len() == mesh.dim1);
        let c = ops.convect(&mesh, u, w).unwrap();
        let scale = dot(u, u) * w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(dot(u, &c).abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn tgv_is_an_exact_solution(x in -1.0..1.0f64, y in -1.0..1.0f64, t in 0.0..2.0f64, re in 10.0..1000.0f64) {
        let case = TgvCase::new(re);
        let e = case.exact(x, y, t);
        prop_assert!((e.grad_ux[0] + e.grad_uy[1]).abs() < 1e-12);
        prop_assert!((e.omega - (e.grad_uy[0] - e.grad_ux[1])).abs() < 1e-12);
        let e0 = case.exact(x, y, 0.0);
        prop_assert!((e.p - e0.p * case.decay(t).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn rollup_velocity_is_continuous(x in 0.0..6.28f64, dy in 1e-15..1e-13f64) {
        let r = RollupCase::default();
        let pi = std::f64::consts::PI;
        prop_assert!((r.ic(x, pi).0 - r.ic(x, pi + dy).0).abs() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip_is_exact(w in coeffs(4), u in coeffs(8), p in coeffs(4), t in 0.0..10.0f64) {
        let spec = MeshSpec::square(1, 2, Mapping::Curvilinear { c: 0.1 });
        let state = FlowState { omega: w, u: u.clone(), p, t, p_time: t - 0.005, u_half: u };
        let s = Snapshot { spec, config_hash: "abc123".into(), state };
        prop_assert_eq!(Snapshot::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn embeddings_commute_with_incidence(k in 1usize..3, p in 1usize..3, m in mapping(), w in coeffs(64)) {
        let pair = build_scale_pair(MeshSpec::square(2, p, m), k).unwrap();
        let (c, f) = (&pair.coarse, &pair.fine);
        let w = &w[..c.dim0.min(64)];
        prop_assume!(w.len() == c.dim0);
        let a = f.e_curl.matvec(&pair.embed0(w));
        let b = pair.embed1(&c.e_curl.matvec(w));
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn projector_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, w1 in coeffs(16), w2 in coeffs(16), u1 in coeffs(32), u2 in coeffs(32)) {
        let mesh = build_mesh(MeshSpec::square(2, 2, Mapping::Curvilinear { c: 0.1 })).unwrap();
        let ops = assemble_operators(&mesh, 2).unwrap();
        let solver = SaddleSolver::new(&mesh, &ops, ProjectorParams::navier_stokes(Some(100.0), 0.04)).unwrap();
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect::<Vec<_>>();
        let (wm, um) = (mix(&w1, &w2), mix(&u1, &u2));
        let proj = |w: &[f64], u: &[f64]| {
            let f = DiscreteField::new(&mesh, w, u);
            let g = |pt: &FieldPoint| vmsns::fields::FlowField::sample(&f, pt);
            project_with(&solver, &mesh, &ops, &g).unwrap()
        };
        let (t1, t2, tm) = (proj(&w1, &u1), proj(&w2, &u2), proj(&wm, &um));
        for (x, (y, z)) in tm.u.iter().zip(t1.u.iter().zip(&t2.u)) {
            prop_assert!((x - (a * y + b * z)).abs() < 1e-11);
        }
        // The spaces are reproduced, so the projection of discrete data is the data.
        for (x, y) in tm.u.iter().zip(&um) {
            prop_assert!((x - y).abs() < 1e-11);
        }
        for (x, y) in tm.omega.iter().zip(&wm) {
            prop_assert!((x - y).abs() < 1e-11);
        }
    }
}
