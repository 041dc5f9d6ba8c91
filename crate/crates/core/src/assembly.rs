//! Mass matrices, weak pairings, load vectors and the Lamb-form convection term.

use crate::error::{Error, Result};
use crate::fields::{
    eval0, eval1, for_each_point, FieldSample, FlowField, LocalBasis, LocalCoeffs, PlanTable,
    QuadPlan,
};
use crate::mesh::Mesh;
use crate::sparse::{CsrMatrix, LuSolver, TripletBuilder};

/// Assembled operators of one mesh under one quadrature plan.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub table: PlanTable,
    pub m0: CsrMatrix,
    pub m1: CsrMatrix,
    pub m2: CsrMatrix,
    /// `E_curl^T M1`.
    pub w_curl: CsrMatrix,
    /// `E_div^T M2`.
    pub w_div: CsrMatrix,
    /// `M1 E_curl`.
    pub m1_curl: CsrMatrix,
    /// `M2 E_div`.
    pub m2_div: CsrMatrix,
}

impl OperatorSet {
    pub fn plan(&self) -> QuadPlan {
        self.table.plan
    }

    /// Pairing of nodal coefficients with the constant function.
    pub fn ones0(&self) -> Vec<f64> {
        self.m0.matvec(&vec![1.0; self.m0.ncols])
    }

    /// Lamb-form convection vector `(v_i, omega x u)`.
    pub fn convect(&self, mesh: &Mesh, u: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
        convect_with(mesh, &self.table, u, omega)
    }
}

/// Operators with the equal-order rule of the given degree.
pub fn assemble_operators(mesh: &Mesh, quadrature_degree: usize) -> Result<OperatorSet> {
    if quadrature_degree < mesh.p() {
        return Err(Error::InvalidQuadrature {
            quad: quadrature_degree,
            p: mesh.p(),
        });
    }
    assemble_with_plan(mesh, QuadPlan::solver(quadrature_degree))
}

/// Operators under an arbitrary plan.
pub fn assemble_with_plan(mesh: &Mesh, plan: QuadPlan) -> Result<OperatorSet> {
    let p = mesh.p();
    let table = PlanTable::new(p, plan)?;
    let mut lb = LocalBasis::new(p);
    let (n0, n1, n2) = (lb.n0(), lb.n1(), lb.n2());
    let (mut b0, mut b1, mut b2) = (TripletBuilder::new(), TripletBuilder::new(), TripletBuilder::new());
    let mut k0 = vec![0.0; n0 * n0];
    let mut k1 = vec![0.0; n1 * n1];
    let mut k2 = vec![0.0; n2 * n2];
    for e in 0..mesh.num_elements() {
        k0.iter_mut().for_each(|v| *v = 0.0);
        k1.iter_mut().for_each(|v| *v = 0.0);
        k2.iter_mut().for_each(|v| *v = 0.0);
        for_each_point(mesh, &table, e, &mut lb, |qp, lb| {
            let (w, det, j) = (qp.w, qp.map.det, &qp.map.jac);
            let wd = w * det;
            for a in 0..n0 {
                let ha = wd * lb.h[a];
                if ha == 0.0 {
                    continue;
                }
                for b in 0..n0 {
                    k0[a * n0 + b] += ha * lb.h[b];
                }
            }
            // Metric J^T J / det.
            let g00 = (j[0][0] * j[0][0] + j[1][0] * j[1][0]) / det;
            let g01 = (j[0][0] * j[0][1] + j[1][0] * j[1][1]) / det;
            let g11 = (j[0][1] * j[0][1] + j[1][1] * j[1][1]) / det;
            for a in 0..n1 {
                let (ax, ay) = (lb.v_xi[a], lb.v_eta[a]);
                if ax == 0.0 && ay == 0.0 {
                    continue;
                }
                let gx = w * (g00 * ax + g01 * ay);
                let gy = w * (g01 * ax + g11 * ay);
                for b in 0..n1 {
                    k1[a * n1 + b] += gx * lb.v_xi[b] + gy * lb.v_eta[b];
                }
            }
            let wi = w / det;
            for a in 0..n2 {
                let va = wi * lb.vol[a];
                for b in 0..n2 {
                    k2[a * n2 + b] += va * lb.vol[b];
                }
            }
        });
        scatter(&mut b0, mesh.dofs0(e), &k0);
        scatter(&mut b1, mesh.dofs1(e), &k1);
        scatter(&mut b2, mesh.dofs2(e), &k2);
    }
    let m0 = b0.build(mesh.dim0, mesh.dim0);
    let m1 = b1.build(mesh.dim1, mesh.dim1);
    let m2 = b2.build(mesh.dim2, mesh.dim2);
    let ect = mesh.e_curl.transpose();
    let edt = mesh.e_div.transpose();
    Ok(OperatorSet {
        w_curl: ect.matmul(&m1),
        w_div: edt.matmul(&m2),
        m1_curl: m1.matmul(&mesh.e_curl),
        m2_div: m2.matmul(&mesh.e_div),
        table,
        m0,
        m1,
        m2,
    })
}

fn scatter(b: &mut TripletBuilder, dofs: &[usize], k: &[f64]) {
    let n = dofs.len();
    for (a, &ga) in dofs.iter().enumerate() {
        for (c, &gc) in dofs.iter().enumerate() {
            let v = k[a * n + c];
            if v != 0.0 {
                b.push(ga, gc, v);
            }
        }
    }
}

fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// `(v_i, omega x u)` with `omega x u = omega (-u_y, u_x)` under the plan.
///
/// In reference components the integrand is `omega (v_eta u_xi - v_xi u_eta)`,
/// free of metric terms, so `u . convect(u, omega) = 0` under any rule.
pub fn convect_with(mesh: &Mesh, table: &PlanTable, u: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
    check_len("velocity", u, mesh.dim1)?;
    check_len("vorticity", omega, mesh.dim0)?;
    let mut out = vec![0.0; mesh.dim1];
    let mut lb = LocalBasis::new(mesh.p());
    let mut local = vec![0.0; lb.n1()];
    for e in 0..mesh.num_elements() {
        let c = LocalCoeffs::gather(mesh, e, Some(omega), Some(u), None);
        if c.c0.iter().all(|&v| v == 0.0) || c.c1.iter().all(|&v| v == 0.0) {
            continue;
        }
        local.iter_mut().for_each(|v| *v = 0.0);
        for_each_point(mesh, table, e, &mut lb, |qp, lb| {
            let (w, _, _) = eval0(lb, &c.c0);
            let (ux, uy, _) = eval1(lb, &c.c1);
            let s = qp.w * w;
            for k in 0..local.len() {
                local[k] += s * (lb.v_eta[k] * ux - lb.v_xi[k] * uy);
            }
        });
        for (k, &g) in mesh.dofs1(e).iter().enumerate() {
            out[g] += local[k];
        }
    }
    Ok(out)
}

/// Load vectors of a sampled field against the basis of each space.
#[derive(Debug, Clone, Default)]
pub struct Loads {
    /// `(eps_i, omega)`.
    pub omega: Vec<f64>,
    /// `(curl eps_i, u)`.
    pub curl_u: Vec<f64>,
    /// `(v_i, u)`.
    pub u: Vec<f64>,
    /// `(v_i, curl omega)`.
    pub curl_omega: Vec<f64>,
    /// `(eta_i, div u)`.
    pub div_u: Vec<f64>,
    /// `(eta_i, p)`.
    pub p: Vec<f64>,
}

/// All load vectors of `field` under `table` in one element sweep.
pub fn assemble_loads(mesh: &Mesh, table: &PlanTable, field: &dyn FlowField) -> Loads {
    let mut out = Loads {
        omega: vec![0.0; mesh.dim0],
        curl_u: vec![0.0; mesh.dim0],
        u: vec![0.0; mesh.dim1],
        curl_omega: vec![0.0; mesh.dim1],
        div_u: vec![0.0; mesh.dim2],
        p: vec![0.0; mesh.dim2],
    };
    let mut lb = LocalBasis::new(mesh.p());
    let (n0, n1, n2) = (lb.n0(), lb.n1(), lb.n2());
    let mut l0 = vec![0.0; 2 * n0];
    let mut l1 = vec![0.0; 2 * n1];
    let mut l2 = vec![0.0; 2 * n2];
    for e in 0..mesh.num_elements() {
        l0.iter_mut().for_each(|v| *v = 0.0);
        l1.iter_mut().for_each(|v| *v = 0.0);
        l2.iter_mut().for_each(|v| *v = 0.0);
        for_each_point(mesh, table, e, &mut lb, |qp, lb| {
            let s: FieldSample = field.sample(&qp.field);
            let (w, det, j) = (qp.w, qp.map.det, &qp.map.jac);
            // Pull physical vectors back: (J^T a) pairs with reference components.
            let pull = |a: [f64; 2]| {
                [
                    j[0][0] * a[0] + j[1][0] * a[1],
                    j[0][1] * a[0] + j[1][1] * a[1],
                ]
            };
            let u = pull(s.u);
            let cw = pull(s.curl_omega);
            for k in 0..n0 {
                l0[k] += w * det * lb.h[k] * s.omega;
                // curl eps = J (d_eta eps, -d_xi eps) / det.
                l0[n0 + k] += w * (lb.dh_eta[k] * u[0] - lb.dh_xi[k] * u[1]);
            }
            for k in 0..n1 {
                l1[k] += w * (lb.v_xi[k] * u[0] + lb.v_eta[k] * u[1]);
                l1[n1 + k] += w * (lb.v_xi[k] * cw[0] + lb.v_eta[k] * cw[1]);
            }
            for k in 0..n2 {
                l2[k] += w * lb.vol[k] * s.div_u;
                l2[n2 + k] += w * lb.vol[k] * s.p;
            }
        });
        for (k, &g) in mesh.dofs0(e).iter().enumerate() {
            out.omega[g] += l0[k];
            out.curl_u[g] += l0[n0 + k];
        }
        for (k, &g) in mesh.dofs1(e).iter().enumerate() {
            out.u[g] += l1[k];
            out.curl_omega[g] += l1[n1 + k];
        }
        for (k, &g) in mesh.dofs2(e).iter().enumerate() {
            out.div_u[g] += l2[k];
            out.p[g] += l2[n2 + k];
        }
    }
    out
}

/// L2 projection of a scalar onto the volume space.
///
/// Mass matrix and load share the plan of `ops`, so the projection is exact
/// for data already in the space.
pub fn l2_project_scalar(mesh: &Mesh, ops: &OperatorSet, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let field = |pt: &crate::fields::FieldPoint| FieldSample {
        p: f(pt.x, pt.y),
        ..FieldSample::default()
    };
    let loads = assemble_loads(mesh, &ops.table, &field);
    LuSolver::new(ops.m2.clone())?.solve(&loads.p)
}

/// Edge fluxes of the constant physical field `(c1, c2)`.
///
/// The flux through an edge depends only on its end points, so the vector is
/// exactly divergence free. It represents the constant field itself on affine
/// meshes; on curved meshes it is the canonical interpolant, which still
/// carries the same net flux through every grid line.
pub fn constant_field_fluxes(mesh: &Mesh, c1: f64, c2: f64) -> Vec<f64> {
    let p = mesh.p();
    let n = mesh.n();
    let nodes = crate::basis::gll(p).expect("degree validated by mesh").nodes.clone();
    let np = mesh.np;
    // Logical coordinate of unwrapped grid index k (may equal np).
    let coord = |k: usize| -> f64 {
        let (ie, i) = (k / p, k % p);
        -1.0 + 2.0 / n as f64 * (ie as f64 + 0.5 * (1.0 + nodes[i]))
    };
    let pos = |i: usize, j: usize| {
        let (x, y, _) = mesh.map_logical(coord(i), coord(j));
        (x, y)
    };
    let mut out = vec![0.0; mesh.dim1];
    for j in 0..np {
        for i in 0..np {
            let (ax, ay) = pos(i, j);
            let (bx, by) = pos(i, j + 1);
            out[mesh.xflux(i, j)] = c1 * (by - ay) - c2 * (bx - ax);
            let (bx, by) = pos(i + 1, j);
            out[mesh.yflux(i, j)] = -c1 * (by - ay) + c2 * (bx - ax);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{DiscreteField, FieldPoint};
    use crate::mesh::{build_mesh, Mapping, MeshSpec};
    use crate::sparse::dot;

    fn curv(n: usize, p: usize) -> Mesh {
        build_mesh(MeshSpec::square(n, p, Mapping::Curvilinear { c: 0.1 })).unwrap()
    }

    #[test]
    fn single_element_volume_mass() {
        let m = build_mesh(MeshSpec::square(1, 1, Mapping::Orthogonal)).unwrap();
        let ops = assemble_operators(&m, 1).unwrap();
        assert!((ops.m2.get(0, 0) - 0.25).abs() < 1e-15);
        // Four corners identified: sum of all four nodal products over the square.
        assert!((ops.m0.get(0, 0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_low_quadrature() {
        let m = curv(2, 3);
        assert!(matches!(
            assemble_operators(&m, 2),
            Err(Error::InvalidQuadrature { quad: 2, p: 3 })
        ));
    }

    #[test]
    fn masses_are_symmetric_and_underintegration_is_visible() {
        let m = curv(3, 2);
        let a = assemble_operators(&m, 2).unwrap();
        let b = assemble_operators(&m, 5).unwrap();
        for ops in [&a, &b] {
            assert!(ops.m0.asymmetry() < 1e-14);
            assert!(ops.m1.asymmetry() < 1e-14);
            assert!(ops.m2.asymmetry() < 1e-14);
        }
        assert!(a.m0.max_abs_diff(&b.m0) > 1e-6);
    }

    #[test]
    fn constant_fluxes_reproduce_constant_field() {
        let curved = curv(3, 2);
        let g = constant_field_fluxes(&curved, 0.7, -1.3);
        assert!(curved.e_div.matvec(&g).iter().all(|v| v.abs() < 1e-14));
        let m = build_mesh(MeshSpec::square(3, 2, Mapping::Orthogonal)).unwrap();
        let g = constant_field_fluxes(&m, 0.7, -1.3);
        let w = vec![0.0; m.dim0];
        let f = DiscreteField::new(&m, &w, &g);
        let t = PlanTable::new(2, QuadPlan::solver(4)).unwrap();
        let mut lb = LocalBasis::new(2);
        for e in 0..m.num_elements() {
            for_each_point(&m, &t, e, &mut lb, |qp, _| {
                let s = f.sample(&qp.field);
                assert!((s.u[0] - 0.7).abs() < 1e-12 && (s.u[1] + 1.3).abs() < 1e-12);
                assert!(s.div_u.abs() < 1e-12);
            });
        }
        assert!(m.e_div.matvec(&g).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn convection_oracle_on_constant_fields() {
        let m = build_mesh(MeshSpec::square(2, 2, Mapping::Orthogonal)).unwrap();
        let ops = assemble_operators(&m, 2).unwrap();
        let u = constant_field_fluxes(&m, 1.0, 0.0);
        let w = vec![1.0; m.dim0];
        let c = ops.convect(&m, &u, &w).unwrap();
        let expect = ops.m1.matvec(&constant_field_fluxes(&m, 0.0, 1.0));
        for (a, b) in c.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn convection_is_skew_in_velocity() {
        let m = curv(2, 2);
        let ops = assemble_operators(&m, 2).unwrap();
        let u: Vec<f64> = (0..m.dim1).map(|k| ((k * 7919) % 13) as f64 / 6.0 - 1.0).collect();
        let w: Vec<f64> = (0..m.dim0).map(|k| ((k * 104729) % 17) as f64 / 8.0 - 1.0).collect();
        let c = ops.convect(&m, &u, &w).unwrap();
        assert!(dot(&u, &c).abs() < 1e-13);
        assert!(ops.convect(&m, &u, &vec![0.0; m.dim0]).unwrap().iter().all(|&v| v == 0.0));
        assert!(ops.convect(&m, &u[..3], &w).is_err());
    }

    #[test]
    fn l2_projection_reproduces_constants() {
        let m = build_mesh(MeshSpec::square(3, 2, Mapping::Orthogonal)).unwrap();
        let ops = assemble_with_plan(&m, QuadPlan::error()).unwrap();
        let x = l2_project_scalar(&m, &ops, |_, _| 1.0).unwrap();
        let field = DiscreteField {
            mesh: &m,
            omega: None,
            u: None,
            pressure: Some(&x),
            u_half: None,
        };
        let pt = FieldPoint {
            x: 0.0,
            y: 0.0,
            xhat: 0.13,
            yhat: -0.4,
            hint: (0.13, -0.4),
        };
        assert!((field.sample(&pt).p - 1.0).abs() < 1e-12);
    }
}
