//! Quadrature plans, pointwise basis evaluation and field sampling.
//!
//! A [`QuadPlan`] splits each reference interval into `sub` equal pieces and
//! places a GLL rule of the given degree on each. `sub > 1` is used when
//! integrating discrete fields that live on a finer nested mesh: every
//! sub-cell then coincides with one fine element, so piecewise-polynomial
//! integrands are integrated exactly.

use crate::basis::{gll, BasisTable};
use crate::error::{Error, Result};
use crate::mesh::{MapPoint, Mesh};

/// Degree of the high-order rule used for error norms and analytic data.
pub const ERROR_DEGREE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadPlan {
    pub sub: usize,
    pub degree: usize,
}

impl QuadPlan {
    /// Equal-order rule used by all solver forms.
    pub fn solver(p: usize) -> Self {
        Self { sub: 1, degree: p }
    }

    /// High-order rule for error norms and projections of analytic data.
    pub fn error() -> Self {
        Self {
            sub: 1,
            degree: ERROR_DEGREE,
        }
    }

    /// Composite rule over the elements of a mesh refined `ratio` times.
    pub fn composite(ratio: usize, p_fine: usize) -> Self {
        Self {
            sub: ratio,
            degree: p_fine + 3,
        }
    }
}

/// One-dimensional points of a plan with the degree-`p` basis tabulated on them.
#[derive(Debug, Clone)]
pub struct PlanTable {
    pub plan: QuadPlan,
    pub p: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Centre of the sub-interval owning each point.
    pub hints: Vec<f64>,
    pub basis: BasisTable,
}

impl PlanTable {
    pub fn new(p: usize, plan: QuadPlan) -> Result<Self> {
        if plan.sub < 1 {
            return Err(Error::InvalidSpec {
                field: "quadrature",
                reason: "needs at least one sub-interval".into(),
            });
        }
        let rule = gll(plan.degree)?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut hints = Vec::new();
        let h = 2.0 / plan.sub as f64;
        for s in 0..plan.sub {
            let a = -1.0 + h * s as f64;
            let b = if s + 1 == plan.sub { 1.0 } else { a + h };
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                points.push((a + 0.5 * (b - a) * (x + 1.0)).clamp(-1.0, 1.0));
                weights.push(0.5 * (b - a) * w);
                hints.push(0.5 * (a + b));
            }
        }
        let basis = BasisTable::at_points(p, &points)?;
        Ok(Self {
            plan,
            p,
            points,
            weights,
            hints,
            basis,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Local basis functions of the three spaces evaluated at one reference point.
///
/// Vector functions are reference (contravariant) components; the physical
/// field is `J v / det`. Volume functions are reference densities; the
/// physical value is `v / det`.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub p: usize,
    pub h: Vec<f64>,
    pub dh_xi: Vec<f64>,
    pub dh_eta: Vec<f64>,
    pub v_xi: Vec<f64>,
    pub v_eta: Vec<f64>,
    pub div: Vec<f64>,
    pub vol: Vec<f64>,
}

impl LocalBasis {
    pub fn new(p: usize) -> Self {
        let n0 = (p + 1) * (p + 1);
        let n1 = 2 * p * (p + 1);
        Self {
            p,
            h: vec![0.0; n0],
            dh_xi: vec![0.0; n0],
            dh_eta: vec![0.0; n0],
            v_xi: vec![0.0; n1],
            v_eta: vec![0.0; n1],
            div: vec![0.0; n1],
            vol: vec![0.0; p * p],
        }
    }

    pub fn n0(&self) -> usize {
        self.h.len()
    }

    pub fn n1(&self) -> usize {
        self.v_xi.len()
    }

    pub fn n2(&self) -> usize {
        self.vol.len()
    }

    /// Fills the tables at the point `(tx[a], ty[b])`.
    pub fn fill(&mut self, tx: &BasisTable, a: usize, ty: &BasisTable, b: usize) {
        let p = self.p;
        let (hx, dhx, ex) = (&tx.h[a], &tx.dh[a], &tx.e[a]);
        let (hy, dhy, ey) = (&ty.h[b], &ty.dh[b], &ty.e[b]);
        for j in 0..=p {
            for i in 0..=p {
                let k = i + j * (p + 1);
                self.h[k] = hx[i] * hy[j];
                self.dh_xi[k] = dhx[i] * hy[j];
                self.dh_eta[k] = hx[i] * dhy[j];
            }
        }
        let nx = p * (p + 1);
        for j in 1..=p {
            for i in 0..=p {
                let k = i + (j - 1) * (p + 1);
                self.v_xi[k] = hx[i] * ey[j - 1];
                self.v_eta[k] = 0.0;
                self.div[k] = dhx[i] * ey[j - 1];
            }
        }
        for j in 0..=p {
            for i in 1..=p {
                let k = nx + (i - 1) + j * p;
                self.v_xi[k] = 0.0;
                self.v_eta[k] = ex[i - 1] * hy[j];
                self.div[k] = ex[i - 1] * dhy[j];
            }
        }
        for j in 1..=p {
            for i in 1..=p {
                self.vol[(i - 1) + (j - 1) * p] = ex[i - 1] * ey[j - 1];
            }
        }
    }
}

/// Location of a quadrature or sampling point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub x: f64,
    pub y: f64,
    pub xhat: f64,
    pub yhat: f64,
    /// Logical point strictly inside the sub-cell owning this point.
    pub hint: (f64, f64),
}

/// Pointwise values of a flow field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldSample {
    pub omega: f64,
    pub curl_omega: [f64; 2],
    pub u: [f64; 2],
    pub div_u: f64,
    /// Static pressure.
    pub p: f64,
}

pub trait FlowField {
    fn sample(&self, pt: &FieldPoint) -> FieldSample;
}

impl<F: Fn(&FieldPoint) -> FieldSample> FlowField for F {
    fn sample(&self, pt: &FieldPoint) -> FieldSample {
        self(pt)
    }
}

/// Quadrature point handed to element-loop closures.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    /// Reference weight `w_a w_b`.
    pub w: f64,
    pub map: MapPoint,
    pub field: FieldPoint,
}

/// Logical coordinate of a reference coordinate in element column `ie`.
fn logical(n: usize, ie: usize, xi: f64) -> f64 {
    -1.0 + 2.0 / n as f64 * (ie as f64 + 0.5 * (1.0 + xi))
}

/// Visits every quadrature point of element `e` with the local basis filled in.
pub fn for_each_point(
    mesh: &Mesh,
    table: &PlanTable,
    e: usize,
    lb: &mut LocalBasis,
    mut f: impl FnMut(&QuadPoint, &LocalBasis),
) {
    let nq = table.len();
    let (ie, je) = mesh.element_coords(e);
    let n = mesh.n();
    for b in 0..nq {
        for a in 0..nq {
            lb.fill(&table.basis, a, &table.basis, b);
            let map = mesh.map_unchecked(e, table.points[a], table.points[b]);
            let field = FieldPoint {
                x: map.x,
                y: map.y,
                xhat: map.xhat,
                yhat: map.yhat,
                hint: (logical(n, ie, table.hints[a]), logical(n, je, table.hints[b])),
            };
            let qp = QuadPoint {
                w: table.weights[a] * table.weights[b],
                map,
                field,
            };
            f(&qp, lb);
        }
    }
}

/// Element-local coefficients gathered from global vectors.
#[derive(Debug, Clone, Default)]
pub struct LocalCoeffs {
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl LocalCoeffs {
    pub fn gather(
        mesh: &Mesh,
        e: usize,
        omega: Option<&[f64]>,
        u: Option<&[f64]>,
        p: Option<&[f64]>,
    ) -> Self {
        let take = |v: Option<&[f64]>, dofs: &[usize]| -> Vec<f64> {
            v.map(|v| dofs.iter().map(|&k| v[k]).collect())
                .unwrap_or_default()
        };
        Self {
            c0: take(omega, mesh.dofs0(e)),
            c1: take(u, mesh.dofs1(e)),
            c2: take(p, mesh.dofs2(e)),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scalar value and reference gradient of the nodal field.
pub fn eval0(lb: &LocalBasis, c0: &[f64]) -> (f64, f64, f64) {
    (dot(&lb.h, c0), dot(&lb.dh_xi, c0), dot(&lb.dh_eta, c0))
}

/// Reference components and reference divergence of the flux field.
pub fn eval1(lb: &LocalBasis, c1: &[f64]) -> (f64, f64, f64) {
    (dot(&lb.v_xi, c1), dot(&lb.v_eta, c1), dot(&lb.div, c1))
}

/// Reference density of the volume field.
pub fn eval2(lb: &LocalBasis, c2: &[f64]) -> f64 {
    dot(&lb.vol, c2)
}

/// Physical vector `J v / det`.
pub fn piola(map: &MapPoint, v_xi: f64, v_eta: f64) -> [f64; 2] {
    let j = &map.jac;
    [
        (j[0][0] * v_xi + j[0][1] * v_eta) / map.det,
        (j[1][0] * v_xi + j[1][1] * v_eta) / map.det,
    ]
}

/// Samples discrete fields from local coefficients.
pub fn sample_local(
    map: &MapPoint,
    lb: &LocalBasis,
    c: &LocalCoeffs,
    u_half: Option<&[f64]>,
) -> FieldSample {
    let mut s = FieldSample::default();
    if !c.c0.is_empty() {
        let (w, wx, wy) = eval0(lb, &c.c0);
        s.omega = w;
        s.curl_omega = piola(map, wy, -wx);
    }
    if !c.c1.is_empty() {
        let (ux, uy, d) = eval1(lb, &c.c1);
        s.u = piola(map, ux, uy);
        s.div_u = d / map.det;
    }
    if !c.c2.is_empty() {
        let mut p = eval2(lb, &c.c2) / map.det;
        if let Some(uh) = u_half {
            let (ux, uy, _) = eval1(lb, uh);
            let v = piola(map, ux, uy);
            p -= 0.5 * (v[0] * v[0] + v[1] * v[1]);
        }
        s.p = p;
    }
    s
}

/// Discrete fields on a mesh, sampled through logical coordinates.
///
/// Pressure is stored as Bernoulli pressure; when `u_half` is given the static
/// pressure `P - |u_half|^2 / 2` is reported.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteField<'a> {
    pub mesh: &'a Mesh,
    pub omega: Option<&'a [f64]>,
    pub u: Option<&'a [f64]>,
    pub pressure: Option<&'a [f64]>,
    pub u_half: Option<&'a [f64]>,
}

impl<'a> DiscreteField<'a> {
    pub fn new(mesh: &'a Mesh, omega: &'a [f64], u: &'a [f64]) -> Self {
        Self {
            mesh,
            omega: Some(omega),
            u: Some(u),
            pressure: None,
            u_half: None,
        }
    }

    pub fn with_pressure(mut self, pressure: &'a [f64], u_half: Option<&'a [f64]>) -> Self {
        self.pressure = Some(pressure);
        self.u_half = u_half;
        self
    }
}

impl FlowField for DiscreteField<'_> {
    fn sample(&self, pt: &FieldPoint) -> FieldSample {
        let mesh = self.mesh;
        let (e, xi, eta) = mesh.locate_logical(pt.xhat, pt.yhat, pt.hint);
        let p = mesh.p();
        let tx = BasisTable::at_points(p, &[xi]).expect("degree validated by mesh");
        let ty = BasisTable::at_points(p, &[eta]).expect("degree validated by mesh");
        let mut lb = LocalBasis::new(p);
        lb.fill(&tx, 0, &ty, 0);
        let map = mesh.map_unchecked(e, xi, eta);
        let c = LocalCoeffs::gather(mesh, e, self.omega, self.u, self.pressure);
        let uh = self
            .u_half
            .map(|v| mesh.dofs1(e).iter().map(|&k| v[k]).collect::<Vec<_>>());
        sample_local(&map, &lb, &c, uh.as_deref())
    }
}

/// Uniform `(density + 1)^2` sampling points per element, element by element.
///
/// Interface points appear once per adjacent element; each carries the
/// centre of its own element as the hint.
pub fn plotting_points(mesh: &Mesh, density: usize) -> Result<Vec<FieldPoint>> {
    if density < 1 {
        return Err(Error::InvalidSpec {
            field: "density",
            reason: "must be at least 1".into(),
        });
    }
    let mut out = Vec::with_capacity(mesh.num_elements() * (density + 1) * (density + 1));
    for e in 0..mesh.num_elements() {
        let c = mesh.map_unchecked(e, 0.0, 0.0);
        for b in 0..=density {
            for a in 0..=density {
                let xi = -1.0 + 2.0 * a as f64 / density as f64;
                let eta = -1.0 + 2.0 * b as f64 / density as f64;
                let m = mesh.map_unchecked(e, xi, eta);
                out.push(FieldPoint {
                    x: m.x,
                    y: m.y,
                    xhat: m.xhat,
                    yhat: m.yhat,
                    hint: (c.xhat, c.yhat),
                });
            }
        }
    }
    Ok(out)
}

/// Integral of `f` over the mesh with the given plan.
pub fn integrate(
    mesh: &Mesh,
    table: &PlanTable,
    mut f: impl FnMut(&QuadPoint, &LocalBasis, usize) -> f64,
) -> f64 {
    let mut lb = LocalBasis::new(table.p);
    let mut total = 0.0;
    for e in 0..mesh.num_elements() {
        for_each_point(mesh, table, e, &mut lb, |qp, lb| {
            total += qp.w * qp.map.det * f(qp, lb, e);
        });
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Mapping, MeshSpec};

    #[test]
    fn composite_plan_integrates_area() {
        let m = build_mesh(MeshSpec::square(3, 2, Mapping::Curvilinear { c: 0.1 })).unwrap();
        for plan in [QuadPlan::error(), QuadPlan::composite(3, 2)] {
            let t = PlanTable::new(2, plan).unwrap();
            let area = integrate(&m, &t, |_, _, _| 1.0);
            assert!((area - 4.0).abs() < 1e-12, "{plan:?}: {area}");
        }
    }

    #[test]
    fn local_basis_partition_of_unity() {
        let t = PlanTable::new(3, QuadPlan::solver(4)).unwrap();
        let mut lb = LocalBasis::new(3);
        lb.fill(&t.basis, 1, &t.basis, 3);
        assert!((lb.h.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(lb.dh_xi.iter().sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn discrete_field_samples_constant_vorticity() {
        let m = build_mesh(MeshSpec::square(2, 2, Mapping::Curvilinear { c: 0.1 })).unwrap();
        let w = vec![3.0; m.dim0];
        let u = vec![0.0; m.dim1];
        let f = DiscreteField::new(&m, &w, &u);
        let t = PlanTable::new(2, QuadPlan::solver(5)).unwrap();
        let mut lb = LocalBasis::new(2);
        for_each_point(&m, &t, 3, &mut lb, |qp, _| {
            let s = f.sample(&qp.field);
            assert!((s.omega - 3.0).abs() < 1e-13);
            assert!(s.curl_omega[0].abs() < 1e-12 && s.curl_omega[1].abs() < 1e-12);
        });
    }
}
