//! Doubly periodic N x N spectral-element meshes.
//!
//! Degrees of freedom live on a logical `Np x Np` grid with `Np = N * p`:
//! nodes `(I, J)`, x-flux edges at node column `I` between rows `J` and
//! `J + 1`, y-flux edges at node row `J` between columns `I` and `I + 1`, and
//! cells `(I, J)`. All indices wrap modulo `Np`. Flux degrees of freedom are
//! oriented along the logical +x and +y directions.

use std::f64::consts::PI;

use crate::basis::gll;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Geometry of the element map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mapping {
    Orthogonal,
    /// `x = X + c sin(2 pi X) sin(2 pi Y)`, `y = Y - c sin(2 pi X) sin(2 pi Y)`
    /// in logical coordinates on ]-1, 1[^2, scaled to the physical box.
    Curvilinear { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Domain {
    pub const UNIT_SQUARE: Domain = Domain {
        x_lo: -1.0,
        x_hi: 1.0,
        y_lo: -1.0,
        y_hi: 1.0,
    };

    pub fn lx(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn ly(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn area(&self) -> f64 {
        self.lx() * self.ly()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub n: usize,
    pub p: usize,
    pub mapping: Mapping,
    pub domain: Domain,
    pub periodic: bool,
}

impl MeshSpec {
    /// Periodic mesh on ]-1, 1[^2.
    pub fn square(n: usize, p: usize, mapping: Mapping) -> Self {
        Self {
            n,
            p,
            mapping,
            domain: Domain::UNIT_SQUARE,
            periodic: true,
        }
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_degree(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidSpec {
                field: "N",
                reason: "must be at least 1".into(),
            });
        }
        if self.p < 1 {
            return Err(Error::InvalidSpec {
                field: "p",
                reason: "must be at least 1".into(),
            });
        }
        if let Mapping::Curvilinear { c } = self.mapping {
            if !(0.0..0.25).contains(&c) {
                return Err(Error::InvalidSpec {
                    field: "c",
                    reason: format!("= {c} outside [0, 0.25)"),
                });
            }
        }
        let d = &self.domain;
        if !(d.lx() > 0.0 && d.ly() > 0.0 && d.lx().is_finite() && d.ly().is_finite()) {
            return Err(Error::InvalidSpec {
                field: "domain",
                reason: "must have positive finite extent".into(),
            });
        }
        if !self.periodic {
            return Err(Error::InvalidSpec {
                field: "periodic",
                reason: "non-periodic boundaries are not supported".into(),
            });
        }
        Ok(())
    }
}

/// Position and metric of the element map at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub x: f64,
    pub y: f64,
    /// `jac[r][c] = d(x, y)_r / d(xi, eta)_c`.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// Logical coordinates on ]-1, 1[^2.
    pub xhat: f64,
    pub yhat: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub spec: MeshSpec,
    /// Logical grid size `N * p`.
    pub np: usize,
    pub dim0: usize,
    pub dim1: usize,
    pub dim2: usize,
    pub e_curl: CsrMatrix,
    pub e_div: CsrMatrix,
    local0: Vec<Vec<usize>>,
    local1: Vec<Vec<usize>>,
    local2: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn p(&self) -> usize {
        self.spec.p
    }

    pub fn num_elements(&self) -> usize {
        self.spec.n * self.spec.n
    }

    /// `(ie, je)` of element `e`.
    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        (e % self.spec.n, e / self.spec.n)
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        (i % self.np) + (j % self.np) * self.np
    }

    pub fn xflux(&self, i: usize, j: usize) -> usize {
        (i % self.np) + (j % self.np) * self.np
    }

    pub fn yflux(&self, i: usize, j: usize) -> usize {
        self.np * self.np + (i % self.np) + (j % self.np) * self.np
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        (i % self.np) + (j % self.np) * self.np
    }

    /// Global nodal indices of element `e`, local order `i + j (p + 1)`.
    pub fn dofs0(&self, e: usize) -> &[usize] {
        &self.local0[e]
    }

    /// Global flux indices of element `e`: x-fluxes `(i, j)`, i in 0..=p,
    /// j in 1..=p at `i + (j - 1)(p + 1)`, then y-fluxes i in 1..=p, j in 0..=p
    /// at `p (p + 1) + (i - 1) + j p`.
    pub fn dofs1(&self, e: usize) -> &[usize] {
        &self.local1[e]
    }

    /// Global cell indices of element `e`, local order `(i - 1) + (j - 1) p`.
    pub fn dofs2(&self, e: usize) -> &[usize] {
        &self.local2[e]
    }

    fn logical(&self, e: usize, xi: f64, eta: f64) -> (f64, f64) {
        let (ie, je) = self.element_coords(e);
        let nf = self.spec.n as f64;
        let xh = -1.0 + 2.0 / nf * (ie as f64 + 0.5 * (1.0 + xi));
        let yh = -1.0 + 2.0 / nf * (je as f64 + 0.5 * (1.0 + eta));
        (xh, yh)
    }

    /// Physical position and Jacobian of logical coordinates.
    pub fn map_logical(&self, xh: f64, yh: f64) -> (f64, f64, [[f64; 2]; 2]) {
        let d = &self.spec.domain;
        let (sx, sy) = (0.5 * d.lx(), 0.5 * d.ly());
        match self.spec.mapping {
            Mapping::Orthogonal => (
                d.x_lo + sx * (xh + 1.0),
                d.y_lo + sy * (yh + 1.0),
                [[sx, 0.0], [0.0, sy]],
            ),
            Mapping::Curvilinear { c } => {
                let (s_x, c_x) = (2.0 * PI * xh).sin_cos();
                let (s_y, c_y) = (2.0 * PI * yh).sin_cos();
                let bump = c * s_x * s_y;
                let bx = 2.0 * PI * c * c_x * s_y;
                let by = 2.0 * PI * c * s_x * c_y;
                (
                    d.x_lo + sx * (xh + 1.0 + bump),
                    d.y_lo + sy * (yh + 1.0 - bump),
                    [[sx * (1.0 + bx), sx * by], [-sy * bx, sy * (1.0 - by)]],
                )
            }
        }
    }

    /// Map evaluation without bounds checks on `e`.
    pub fn map_unchecked(&self, e: usize, xi: f64, eta: f64) -> MapPoint {
        let (xh, yh) = self.logical(e, xi, eta);
        let (x, y, jl) = self.map_logical(xh, yh);
        let s = 1.0 / self.spec.n as f64;
        let jac = [[jl[0][0] * s, jl[0][1] * s], [jl[1][0] * s, jl[1][1] * s]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        MapPoint {
            x,
            y,
            jac,
            det,
            xhat: xh,
            yhat: yh,
        }
    }

    pub fn map_point(&self, e: usize, xi: f64, eta: f64) -> Result<MapPoint> {
        if e >= self.num_elements() {
            return Err(Error::InvalidElement {
                index: e,
                count: self.num_elements(),
            });
        }
        for v in [xi, eta] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange(v));
            }
        }
        Ok(self.map_unchecked(e, xi, eta))
    }

    /// Element and reference coordinates of a logical point.
    ///
    /// The element is chosen from `hint` (a logical point strictly inside the
    /// wanted element) so that points on element interfaces can be attributed
    /// to a specific side.
    pub fn locate_logical(&self, xh: f64, yh: f64, hint: (f64, f64)) -> (usize, f64, f64) {
        let n = self.spec.n;
        let nf = n as f64;
        let idx = |v: f64| -> usize {
            let k = ((v + 1.0) * 0.5 * nf).floor();
            (k.max(0.0) as usize).min(n - 1)
        };
        let (ie, je) = (idx(hint.0), idx(hint.1));
        let xi = (xh + 1.0) * nf - 2.0 * ie as f64 - 1.0;
        let eta = (yh + 1.0) * nf - 2.0 * je as f64 - 1.0;
        (ie + je * n, xi.clamp(-1.0, 1.0), eta.clamp(-1.0, 1.0))
    }

    /// `(E_curl, E_div)`.
    pub fn incidence(&self) -> (&CsrMatrix, &CsrMatrix) {
        (&self.e_curl, &self.e_div)
    }
}

/// Builds and validates a mesh.
pub fn build_mesh(spec: MeshSpec) -> Result<Mesh> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let np = n * p;
    let nn = np * np;
    let mut mesh = Mesh {
        spec,
        np,
        dim0: nn,
        dim1: 2 * nn,
        dim2: nn,
        e_curl: CsrMatrix::zeros(2 * nn, nn),
        e_div: CsrMatrix::zeros(nn, 2 * nn),
        local0: Vec::new(),
        local1: Vec::new(),
        local2: Vec::new(),
    };

    let mut curl = Vec::with_capacity(4 * nn);
    for j in 0..np {
        for i in 0..np {
            curl.push((mesh.xflux(i, j), mesh.node(i, j + 1), 1.0));
            curl.push((mesh.xflux(i, j), mesh.node(i, j), -1.0));
            curl.push((mesh.yflux(i, j), mesh.node(i + 1, j), -1.0));
            curl.push((mesh.yflux(i, j), mesh.node(i, j), 1.0));
        }
    }
    mesh.e_curl = CsrMatrix::from_triplets(2 * nn, nn, &curl).pruned(0.0);

    let mut div = Vec::with_capacity(4 * nn);
    for j in 0..np {
        for i in 0..np {
            let c = mesh.cell(i, j);
            div.push((c, mesh.xflux(i + 1, j), 1.0));
            div.push((c, mesh.xflux(i, j), -1.0));
            div.push((c, mesh.yflux(i, j + 1), 1.0));
            div.push((c, mesh.yflux(i, j), -1.0));
        }
    }
    mesh.e_div = CsrMatrix::from_triplets(nn, 2 * nn, &div).pruned(0.0);

    for e in 0..n * n {
        let (ie, je) = mesh.element_coords(e);
        let (bi, bj) = (ie * p, je * p);
        let mut l0 = Vec::with_capacity((p + 1) * (p + 1));
        for j in 0..=p {
            for i in 0..=p {
                l0.push(mesh.node(bi + i, bj + j));
            }
        }
        let mut l1 = Vec::with_capacity(2 * p * (p + 1));
        for j in 1..=p {
            for i in 0..=p {
                l1.push(mesh.xflux(bi + i, bj + j - 1));
            }
        }
        for j in 0..=p {
            for i in 1..=p {
                l1.push(mesh.yflux(bi + i - 1, bj + j));
            }
        }
        let mut l2 = Vec::with_capacity(p * p);
        for j in 1..=p {
            for i in 1..=p {
                l2.push(mesh.cell(bi + i - 1, bj + j - 1));
            }
        }
        mesh.local0.push(l0);
        mesh.local1.push(l1);
        mesh.local2.push(l2);
    }

    let rule = gll(p)?;
    for e in 0..n * n {
        for &eta in &rule.nodes {
            for &xi in &rule.nodes {
                let det = mesh.map_unchecked(e, xi, eta).det;
                if !(det > 0.0) {
                    return Err(Error::DegenerateElement { element: e, det });
                }
            }
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curv(n: usize, p: usize) -> Mesh {
        build_mesh(MeshSpec::square(n, p, Mapping::Curvilinear { c: 0.1 })).unwrap()
    }

    #[test]
    fn dimensions_follow_grid_size() {
        let m = build_mesh(MeshSpec::square(1, 1, Mapping::Orthogonal)).unwrap();
        assert_eq!((m.dim0, m.dim1, m.dim2), (1, 2, 1));
        let m = curv(12, 2);
        assert_eq!((m.dim0, m.dim1, m.dim2), (576, 1152, 576));
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad = MeshSpec::square(4, 2, Mapping::Curvilinear { c: 0.3 });
        assert!(matches!(build_mesh(bad), Err(Error::InvalidSpec { field: "c", .. })));
        assert!(build_mesh(MeshSpec::square(0, 2, Mapping::Orthogonal)).is_err());
        assert!(build_mesh(MeshSpec::square(2, 0, Mapping::Orthogonal)).is_err());
        let mut np = MeshSpec::square(2, 2, Mapping::Orthogonal);
        np.periodic = false;
        assert!(build_mesh(np).is_err());
    }

    #[test]
    fn large_amplitude_is_reported_as_degenerate() {
        // Below the validation bound but past the fold of the map.
        let spec = MeshSpec::square(4, 2, Mapping::Curvilinear { c: 0.2 });
        match build_mesh(spec) {
            Err(Error::DegenerateElement { det, .. }) => assert!(det <= 0.0),
            other => panic!("expected degenerate mesh, got {other:?}"),
        }
    }

    #[test]
    fn identity_map_example() {
        let m = build_mesh(MeshSpec::square(1, 1, Mapping::Orthogonal)).unwrap();
        let mp = m.map_point(0, 0.3, -0.7).unwrap();
        assert!((mp.x - 0.3).abs() < 1e-15 && (mp.y + 0.7).abs() < 1e-15);
        assert_eq!(mp.det, 1.0);
        assert!(m.map_point(1, 0.0, 0.0).is_err());
        assert!(m.map_point(0, 1.5, 0.0).is_err());
    }

    #[test]
    fn curvilinear_map_example() {
        // Logical point (0.25, 0.25) is the centre of element (2, 2) of a 4x4 mesh.
        let m = curv(4, 2);
        let mp = m.map_point(2 + 2 * 4, 0.0, 0.0).unwrap();
        assert!((mp.x - 0.35).abs() < 1e-15);
        assert!((mp.y - 0.15).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = curv(3, 2);
        let h = 1e-6;
        let mut s = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let e = (next() * 9.0) as usize % 9;
            let xi = -0.9 + 1.8 * next();
            let eta = -0.9 + 1.8 * next();
            let mp = m.map_point(e, xi, eta).unwrap();
            let fx = (m.map_unchecked(e, xi + h, eta), m.map_unchecked(e, xi - h, eta));
            let fy = (m.map_unchecked(e, xi, eta + h), m.map_unchecked(e, xi, eta - h));
            let fd = [
                [(fx.0.x - fx.1.x) / (2.0 * h), (fy.0.x - fy.1.x) / (2.0 * h)],
                [(fx.0.y - fx.1.y) / (2.0 * h), (fy.0.y - fy.1.y) / (2.0 * h)],
            ];
            let scale = mp.jac.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            for r in 0..2 {
                for c in 0..2 {
                    assert!((fd[r][c] - mp.jac[r][c]).abs() / scale < 1e-7);
                }
            }
        }
    }

    #[test]
    fn determinant_is_positive_at_default_amplitude() {
        for n in 1..=16 {
            for p in 1..=4 {
                assert!(curv(n, p).num_elements() == n * n);
            }
        }
    }

    #[test]
    fn discrete_complex_is_exact() {
        for n in 1..=8 {
            for p in 1..=4 {
                let m = curv(n, p);
                let prod = m.e_div.matmul(&m.e_curl);
                assert!(prod.values.iter().all(|&v| v == 0.0), "N={n} p={p}");
            }
        }
    }

    #[test]
    fn divergence_rows_have_four_entries() {
        let m = curv(3, 2);
        for r in 0..m.dim2 {
            let entries: Vec<_> = m.e_div.row(r).collect();
            assert_eq!(entries.len(), 4);
            assert!(entries.iter().all(|(_, v)| v.abs() == 1.0));
        }
        let tiny = build_mesh(MeshSpec::square(1, 1, Mapping::Orthogonal)).unwrap();
        let prod = tiny.e_div.matmul(&tiny.e_curl);
        assert_eq!((prod.nrows, prod.ncols), (1, 1));
        assert_eq!(prod.get(0, 0), 0.0);
    }

    #[test]
    fn incidence_commutes_with_element_shift() {
        let m = curv(3, 2);
        let (np, p) = (m.np, m.p());
        let shift0 = |k: usize| m.node(k % np + p, k / np);
        let shift1 = |k: usize| {
            if k < np * np {
                m.xflux(k % np + p, k / np)
            } else {
                let k = k - np * np;
                m.yflux(k % np + p, k / np)
            }
        };
        let shift2 = |k: usize| m.cell(k % np + p, k / np);
        let w: Vec<f64> = (0..m.dim0).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let mut ws = vec![0.0; m.dim0];
        for k in 0..m.dim0 {
            ws[shift0(k)] = w[k];
        }
        let cw = m.e_curl.matvec(&w);
        let cws = m.e_curl.matvec(&ws);
        for k in 0..m.dim1 {
            assert_eq!(cws[shift1(k)], cw[k]);
        }
        let u: Vec<f64> = (0..m.dim1).map(|k| ((k * 13) % 7) as f64 - 3.0).collect();
        let mut us = vec![0.0; m.dim1];
        for k in 0..m.dim1 {
            us[shift1(k)] = u[k];
        }
        let du = m.e_div.matvec(&u);
        let dus = m.e_div.matvec(&us);
        for k in 0..m.dim2 {
            assert_eq!(dus[shift2(k)], du[k]);
        }
    }

    #[test]
    fn local_tables_cover_every_dof() {
        let m = curv(3, 3);
        let mut seen0 = vec![false; m.dim0];
        let mut seen1 = vec![false; m.dim1];
        let mut seen2 = vec![0usize; m.dim2];
        for e in 0..m.num_elements() {
            m.dofs0(e).iter().for_each(|&k| seen0[k] = true);
            m.dofs1(e).iter().for_each(|&k| seen1[k] = true);
            m.dofs2(e).iter().for_each(|&k| seen2[k] += 1);
        }
        assert!(seen0.iter().all(|&s| s));
        assert!(seen1.iter().all(|&s| s));
        assert!(seen2.iter().all(|&c| c == 1));
    }

    #[test]
    fn locate_inverts_logical_map() {
        let m = curv(4, 2);
        let mp = m.map_point(6, 0.25, -0.5).unwrap();
        let (e, xi, eta) = m.locate_logical(mp.xhat, mp.yhat, (mp.xhat, mp.yhat));
        assert_eq!(e, 6);
        assert!((xi - 0.25).abs() < 1e-14 && (eta + 0.5).abs() < 1e-14);
    }
}
