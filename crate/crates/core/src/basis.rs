//! One-dimensional Gauss-Lobatto-Legendre machinery.
//!
//! The nodal functions `h_i` are Lagrange polynomials through the GLL points of
//! degree `p`. The edge functions `e_i = -sum_{k<i} h_k'` are their
//! histopolation duals: the integral of `e_i` over the `j`-th GLL cell is
//! `delta_ij`. Tensor products of the two families span the three discrete
//! spaces used by the solver.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX: usize = 100;

/// Gauss-Lobatto-Legendre rule with `degree + 1` points on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Integrates `f` over `[a, b]` with the affinely mapped rule.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomials `L_q(x)` and `L_{q-1}(x)` by the three-term recurrence.
fn legendre_pair(q: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    for n in 1..q {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * cur - nf * prev) / (nf + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn compute_gll(q: usize) -> QuadratureRule {
    let n = q + 1;
    let mut nodes = vec![0.0; n];
    for (j, node) in nodes.iter_mut().enumerate() {
        let mut x = -(std::f64::consts::PI * j as f64 / q as f64).cos();
        if j > 0 && j < q {
            // Newton on (1 - x^2) L_q'(x); the update below is its closed form.
            for _ in 0..NEWTON_MAX {
                let (lq, lq1) = legendre_pair(q, x);
                let dx = (x * lq - lq1) / ((q + 1) as f64 * lq);
                x -= dx;
                if dx.abs() < NEWTON_TOL {
                    break;
                }
            }
        }
        *node = x;
    }
    nodes[0] = -1.0;
    nodes[q] = 1.0;
    for j in 0..n / 2 {
        let s = 0.5 * (nodes[q - j] - nodes[j]);
        nodes[j] = -s;
        nodes[q - j] = s;
    }
    if q % 2 == 0 {
        nodes[q / 2] = 0.0;
    }
    let scale = 2.0 / (q * (q + 1)) as f64;
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let (lq, _) = legendre_pair(q, x);
            scale / (lq * lq)
        })
        .collect();
    for j in 0..n / 2 {
        let w = 0.5 * (weights[j] + weights[q - j]);
        weights[j] = w;
        weights[q - j] = w;
    }
    QuadratureRule {
        degree: q,
        nodes,
        weights,
    }
}

fn rule_cache() -> &'static Mutex<HashMap<usize, Arc<QuadratureRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached GLL rule of degree `q` (q + 1 points, exact to degree 2q - 1).
pub fn gll(q: usize) -> Result<Arc<QuadratureRule>> {
    if q < 1 {
        return Err(Error::InvalidDegree(q));
    }
    let mut cache = rule_cache().lock().expect("quadrature cache poisoned");
    Ok(cache.entry(q).or_insert_with(|| Arc::new(compute_gll(q))).clone())
}

/// Owned copy of the GLL rule of degree `q`.
pub fn gll_rule(q: usize) -> Result<QuadratureRule> {
    gll(q).map(|r| (*r).clone())
}

/// Lagrange basis through the GLL points of degree `p`, with its edge duals.
#[derive(Debug, Clone)]
pub struct NodalBasis {
    pub degree: usize,
    pub nodes: Vec<f64>,
    bary: Vec<f64>,
    /// `diff[i][j] = h_j'(x_i)`.
    diff: Vec<Vec<f64>>,
}

impl NodalBasis {
    fn build(p: usize) -> Result<Self> {
        let nodes = gll(p)?.nodes.clone();
        let n = p + 1;
        let bary: Vec<f64> = (0..n)
            .map(|j| {
                let prod: f64 = (0..n)
                    .filter(|&k| k != j)
                    .map(|k| nodes[j] - nodes[k])
                    .product();
                1.0 / prod
            })
            .collect();
        let mut diff = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let d = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    diff[i][j] = d;
                    diag -= d;
                }
            }
            diff[i][i] = diag;
        }
        Ok(Self {
            degree: p,
            nodes,
            bary,
            diff,
        })
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes `h_i(x)` for i = 0..=p into `out`. No range check.
    pub fn values_into(&self, x: f64, out: &mut [f64]) {
        let n = self.len();
        if let Some(k) = self.nodes.iter().position(|&xk| xk == x) {
            out[..n].iter_mut().for_each(|v| *v = 0.0);
            out[k] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for j in 0..n {
            let t = self.bary[j] / (x - self.nodes[j]);
            out[j] = t;
            denom += t;
        }
        out[..n].iter_mut().for_each(|v| *v /= denom);
    }

    /// Writes `h_i'(x)` given the nodal values `h` at the same point.
    pub fn derivs_from_values(&self, h: &[f64], out: &mut [f64]) {
        let n = self.len();
        for j in 0..n {
            out[j] = (0..n).map(|i| self.diff[i][j] * h[i]).sum();
        }
    }

    /// Writes `e_i(x)` for i = 1..=p into `out[0..p]` from nodal derivatives.
    pub fn edges_from_derivs(&self, dh: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for i in 0..self.degree {
            acc -= dh[i];
            out[i] = acc;
        }
    }

    /// Nodal values, nodal derivatives and edge values at `x`.
    pub fn eval_all(&self, x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut h = vec![0.0; n];
        let mut dh = vec![0.0; n];
        let mut e = vec![0.0; self.degree];
        self.values_into(x, &mut h);
        self.derivs_from_values(&h, &mut dh);
        self.edges_from_derivs(&dh, &mut e);
        (h, dh, e)
    }

    /// Integral of every edge function over `[a, b]`.
    ///
    /// Uses `int_a^b e_i = -sum_{k<i} (h_k(b) - h_k(a))`, exact in exact arithmetic.
    pub fn edge_integrals(&self, a: f64, b: f64) -> Vec<f64> {
        let n = self.len();
        let mut ha = vec![0.0; n];
        let mut hb = vec![0.0; n];
        self.values_into(a, &mut ha);
        self.values_into(b, &mut hb);
        let mut out = vec![0.0; self.degree];
        let mut acc = 0.0;
        for i in 0..self.degree {
            acc -= hb[i] - ha[i];
            out[i] = acc;
        }
        out
    }
}

/// Edge (histopolation) basis of degree `p`, a view on the nodal basis.
#[derive(Debug, Clone)]
pub struct EdgeBasis {
    pub nodal: Arc<NodalBasis>,
}

impl EdgeBasis {
    pub fn degree(&self) -> usize {
        self.nodal.degree
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.nodal.eval_all(x).2
    }
}

fn basis_cache() -> &'static Mutex<HashMap<usize, Arc<NodalBasis>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<NodalBasis>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached nodal basis of degree `p`.
pub fn nodal_basis(p: usize) -> Result<Arc<NodalBasis>> {
    if p < 1 {
        return Err(Error::InvalidDegree(p));
    }
    if let Some(b) = basis_cache().lock().expect("basis cache poisoned").get(&p) {
        return Ok(b.clone());
    }
    let built = Arc::new(NodalBasis::build(p)?);
    let mut cache = basis_cache().lock().expect("basis cache poisoned");
    Ok(cache.entry(p).or_insert(built).clone())
}

pub fn edge_basis(p: usize) -> Result<EdgeBasis> {
    Ok(EdgeBasis {
        nodal: nodal_basis(p)?,
    })
}

fn check_range(xi: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&xi) {
        Ok(())
    } else {
        Err(Error::OutOfRange(xi))
    }
}

/// Values and first derivatives of the p + 1 nodal functions at `xi`.
pub fn eval_nodal(p: usize, xi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_range(xi)?;
    let (h, dh, _) = nodal_basis(p)?.eval_all(xi);
    Ok((h, dh))
}

/// Values of the p edge functions at `xi`.
pub fn eval_edge(p: usize, xi: f64) -> Result<Vec<f64>> {
    check_range(xi)?;
    Ok(nodal_basis(p)?.eval_all(xi).2)
}

/// Basis values tabulated at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub p: usize,
    pub q: usize,
    /// `h[a][i] = h_i(x_a)`.
    pub h: Vec<Vec<f64>>,
    /// `dh[a][i] = h_i'(x_a)`.
    pub dh: Vec<Vec<f64>>,
    /// `e[a][i] = e_{i+1}(x_a)`.
    pub e: Vec<Vec<f64>>,
}

impl BasisTable {
    /// Tabulates the degree-`p` basis at arbitrary points.
    pub fn at_points(p: usize, points: &[f64]) -> Result<Self> {
        let basis = nodal_basis(p)?;
        let mut h = Vec::with_capacity(points.len());
        let mut dh = Vec::with_capacity(points.len());
        let mut e = Vec::with_capacity(points.len());
        for &x in points {
            let (a, b, c) = basis.eval_all(x);
            h.push(a);
            dh.push(b);
            e.push(c);
        }
        Ok(Self { p, q: 0, h, dh, e })
    }
}

fn table_cache() -> &'static Mutex<HashMap<(usize, usize), Arc<BasisTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<BasisTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached table of the degree-`p` basis at the GLL(`q`) points.
pub fn basis_table(p: usize, q: usize) -> Result<Arc<BasisTable>> {
    if let Some(t) = table_cache().lock().expect("table cache poisoned").get(&(p, q)) {
        return Ok(t.clone());
    }
    let rule = gll(q)?;
    let mut table = BasisTable::at_points(p, &rule.nodes)?;
    table.q = q;
    let built = Arc::new(table);
    let mut cache = table_cache().lock().expect("table cache poisoned");
    Ok(cache.entry((p, q)).or_insert(built).clone())
}
