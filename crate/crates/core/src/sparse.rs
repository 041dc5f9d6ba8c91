//! Compressed sparse row storage and a direct solver wrapper.
//!
//! Assembly goes through triplet lists that are sorted stably and summed in
//! insertion order, so every matrix is bit-reproducible for a given input.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).filter(|&(j, _)| j == c).map(|(_, v)| v).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `y = A^T x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec_t dimension");
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `A * B` with deterministic accumulation order.
    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul dimension");
        let mut trip = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    trip.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, &trip)
    }

    /// `alpha * A + beta * B`.
    pub fn add(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (r, c, alpha * v)).collect();
        trip.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, beta * v)));
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    /// Drops stored entries whose magnitude is at most `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let t: Vec<_> = self.triplets().into_iter().filter(|t| t.2.abs() > tol).collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference to `other` (same shape).
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        self.add(1.0, other, -1.0).max_abs()
    }

    pub fn asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.transpose())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Incremental builder for block matrices.
#[derive(Debug, Default, Clone)]
pub struct TripletBuilder {
    pub entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        self.entries.push((r, c, v));
    }

    /// Adds `scale * block` with its top-left corner at `(r0, c0)`.
    pub fn add_block(&mut self, r0: usize, c0: usize, block: &CsrMatrix, scale: f64) {
        if scale == 0.0 {
            return;
        }
        for r in 0..block.nrows {
            for (c, v) in block.row(r) {
                self.entries.push((r0 + r, c0 + c, scale * v));
            }
        }
    }

    pub fn build(&self, nrows: usize, ncols: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(nrows, ncols, &self.entries)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `x^T A x`.
pub fn quad_form(a: &CsrMatrix, x: &[f64]) -> f64 {
    dot(x, &a.matvec(x))
}

/// Ruiz scaling: alternately divides rows and columns by the square root of
/// their largest entry until every row and column max is close to one.
/// Scalings are powers of two so they introduce no rounding.
fn equilibrate(a: &CsrMatrix) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![1.0; a.nrows];
    let mut c = vec![1.0; a.ncols];
    let pow2 = |v: f64| 2f64.powi(v.log2().round() as i32);
    for _ in 0..20 {
        let mut rmax = vec![0.0f64; a.nrows];
        let mut cmax = vec![0.0f64; a.ncols];
        for (i, rm) in rmax.iter_mut().enumerate() {
            for (j, v) in a.row(i) {
                let s = (r[i] * v * c[j]).abs();
                *rm = rm.max(s);
                cmax[j] = cmax[j].max(s);
            }
        }
        let worst = rmax.iter().chain(&cmax).fold(0.0f64, |m, &v| {
            if v > 0.0 {
                m.max((v.log2()).abs())
            } else {
                m
            }
        });
        if worst <= 1.0 {
            break;
        }
        for (ri, m) in r.iter_mut().zip(&rmax) {
            if *m > 0.0 {
                *ri /= pow2(m.sqrt());
            }
        }
        for (ci, m) in c.iter_mut().zip(&cmax) {
            if *m > 0.0 {
                *ci /= pow2(m.sqrt());
            }
        }
    }
    (r, c)
}

/// Sparse LU factorization with residual-checked solves.
pub struct LuSolver {
    matrix: CsrMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    norm: f64,
    /// Row and column scalings: the factorized matrix is `diag(r) A diag(c)`.
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl std::fmt::Debug for LuSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuSolver").field("n", &self.matrix.nrows).finish()
    }
}

/// Backward-error tolerance accepted for every direct solve.
pub const SOLVE_TOL: f64 = 1e-12;

impl LuSolver {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::Factorization(format!(
                "matrix is {}x{}",
                matrix.nrows, matrix.ncols
            )));
        }
        faer::set_global_parallelism(faer::Par::Seq);
        let (row_scale, col_scale) = equilibrate(&matrix);
        let trip: Vec<Triplet<usize, usize, f64>> = matrix
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, row_scale[r] * v * col_scale[c]))
            .collect();
        let sp = SparseColMat::<usize, f64>::try_new_from_triplets(matrix.nrows, matrix.ncols, &trip)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = sp.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let norm = matrix.norm_inf();
        Ok(Self {
            matrix,
            lu,
            norm,
            row_scale,
            col_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| self.row_scale[i] * b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| self.col_scale[i] * x[(i, 0)]).collect()
    }

    /// Normwise backward error `|b - Ax|_inf / (|A|_inf |x|_inf + |b|_inf)`.
    pub fn backward_error(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matrix.matvec(x);
        let r: f64 = ax.iter().zip(b).fold(0.0, |m, (a, bb)| m.max((bb - a).abs()));
        let denom = self.norm * norm_inf(x) + norm_inf(b);
        if denom == 0.0 {
            0.0
        } else {
            r / denom
        }
    }

    /// Solves `A x = b` with up to two steps of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "right-hand side",
                expected: self.dim(),
                got: b.len(),
            });
        }
        let mut x = self.raw_solve(b);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("non-finite solution".into()));
        }
        let mut err = self.backward_error(&x, b);
        for _ in 0..2 {
            if err < 1e-15 {
                break;
            }
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bb, a)| bb - a).collect();
            let dx = self.raw_solve(&r);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let cerr = self.backward_error(&cand, b);
            if cerr < err {
                x = cand;
                err = cerr;
            } else {
                break;
            }
        }
        if err > SOLVE_TOL {
            return Err(Error::SolveAccuracy {
                residual: err,
                tol: SOLVE_TOL,
            });
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_in_order() {
        let m = CsrMatrix::from_triplets(2, 2, &[(1, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5), (0, 0, 3.0)]);
        assert_eq!(m.indptr, vec![0, 2, 3]);
        assert_eq!(m.get(1, 0), 1.5);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![5.0, 1.5]);
        assert_eq!(m.matvec_t(&[1.0, 1.0]), vec![4.5, 2.0]);
    }

    #[test]
    fn matmul_and_transpose_agree_with_dense() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let b = CsrMatrix::from_triplets(3, 2, &[(0, 1, 4.0), (2, 0, 1.0), (1, 1, 3.0)]);
        let c = a.matmul(&b).to_dense();
        assert_eq!(c, vec![vec![2.0, 4.0], vec![0.0, -3.0]]);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn lu_solves_small_system() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 1, 1.0), (2, 2, 2.0)],
        );
        let lu = LuSolver::new(a.clone()).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]).unwrap();
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn lu_reports_singular_matrix() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let res = LuSolver::new(a).and_then(|lu| lu.solve(&[1.0, 0.0]));
        assert!(res.is_err());
    }
}
