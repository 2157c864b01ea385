//! Dense row-major matrices and the handful of kernels the rest of the crate
//! needs: products, Frobenius and spectral norms, extremal eigen/singular values.
//!
//! Everything here is a pure function of its inputs and bit-deterministic:
//! loops run in a fixed order and nothing is parallelized.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::LinalgError;

/// Maximum number of cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 50;
/// Jacobi stops once the off-diagonal Frobenius mass drops below this fraction of `‖s‖_F`.
pub const JACOBI_OFF_TOL: f64 = 1e-12;
/// Allowed asymmetry (relative to `‖s‖_F`) for inputs of the symmetric eigensolver.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Seed of the fallback start vector used when power iteration stagnates.
pub const POWER_RESTART_SEED: u64 = 0x0009_e3d7_5eed;
/// Default relative tolerance for [`spectral_norm`] callers that do not care.
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-12;
/// Default iteration cap for [`spectral_norm`].
pub const DEFAULT_SPECTRAL_MAX_ITER: usize = 200_000;

/// A dense matrix of `f64` stored row-major: `data[i * cols + j] = A[i, j]`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::InvalidData {
                rows,
                cols,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices.
    ///
    /// # Panics
    /// Panics on ragged rows or non-finite entries; meant for literals in code and tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), ncols, "row {i} has {} columns, expected {ncols}", r.len());
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), ncols, data).expect("finite literal matrix")
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        matmul(self, other)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|x| c * x)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// `self - c * other`, the shape of a gradient step.
    pub fn sub_scaled(&self, c: f64, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, "sub_scaled", |a, b| a - c * b)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Frobenius inner product `tr(self · otherᵀ)`.
    pub fn frobenius_dot(&self, other: &Matrix) -> Result<f64, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                op: "frobenius_dot",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Column-stacking vectorization: `vec(A)[j * rows + i] = A[i, j]`.
    pub fn vec_cols(&self) -> Vec<f64> {
        self.transpose().data
    }

    /// Inverse of [`Matrix::vec_cols`].
    pub fn from_vec_cols(rows: usize, cols: usize, v: &[f64]) -> Result<Matrix, LinalgError> {
        let t = Matrix::new(cols, rows, v.to_vec())?;
        Ok(t.transpose())
    }
}

/// Matrix product in plain `f64` arithmetic (i-k-j loop order).
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::DimensionMismatch {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (n, m, p) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        let orow = &mut out[i * p..(i + 1) * p];
        for k in 0..m {
            let aik = a.data[i * m + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * p..(k + 1) * p];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(Matrix {
        rows: n,
        cols: p,
        data: out,
    })
}

/// `aᵀ · b` without materializing the transpose.
pub fn t_matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.rows != b.rows {
        return Err(LinalgError::DimensionMismatch {
            op: "t_matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (n, p) = (a.cols, b.cols);
    let mut out = vec![0.0; n * p];
    for k in 0..a.rows {
        let arow = a.row(k);
        let brow = b.row(k);
        for (i, &aki) in arow.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let orow = &mut out[i * p..(i + 1) * p];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
    Ok(Matrix {
        rows: n,
        cols: p,
        data: out,
    })
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_t(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.cols != b.cols {
        return Err(LinalgError::DimensionMismatch {
            op: "matmul_t",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ai = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ai, b.row(j));
        }
    }
    Ok(out)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row Gram matrix `a · aᵀ`, exactly symmetric.
pub fn gram_rows(a: &Matrix) -> Matrix {
    let n = a.rows;
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(a.row(i), a.row(j));
            g.data[i * n + j] = v;
            g.data[j * n + i] = v;
        }
    }
    g
}

/// Column Gram matrix `aᵀ · a`, exactly symmetric.
pub fn gram_cols(a: &Matrix) -> Matrix {
    let g = t_matmul(a, a).expect("aᵀa is always conformable");
    symmetrize(&g)
}

fn symmetrize(s: &Matrix) -> Matrix {
    let n = s.rows;
    Matrix::from_fn(n, n, |i, j| 0.5 * (s.get(i, j) + s.get(j, i)))
}

/// `√(Σ a_ij²)` with Neumaier-compensated accumulation of the squares.
pub fn frobenius_norm(a: &Matrix) -> f64 {
    let scale = a.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in &a.data {
        let y = x / scale;
        let term = y * y;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    scale * (sum + comp).sqrt()
}

/// Largest singular value by power iteration on the Gram matrix of the smaller side.
///
/// Starts from the normalized all-ones vector. The returned value has relative
/// error at most `tol` (estimated from the geometric decay of successive
/// Rayleigh-quotient increments). If the iteration settles below the certain
/// lower bound `‖a‖_F² / min(rows, cols)` on `σ_max²`, the start vector was
/// orthogonal to the top singular subspace and the iteration restarts from a
/// seeded random vector.
pub fn spectral_norm(a: &Matrix, tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(LinalgError::InvalidTolerance(tol));
    }
    if a.is_empty() || a.is_zero() {
        return Ok(0.0);
    }
    let g = if a.rows <= a.cols {
        gram_rows(a)
    } else {
        gram_cols(a)
    };
    let k = g.rows;
    if k == 1 {
        return Ok(g.data[0].sqrt());
    }
    let fro = frobenius_norm(a);
    let floor = fro * fro / k as f64;

    let ones = vec![1.0 / (k as f64).sqrt(); k];
    let first = power_iterate(&g, ones, tol, max_iter);
    let stagnated = first.value < floor * (1.0 - 1e-9);
    let run = if stagnated {
        let mut rng = ChaCha8Rng::seed_from_u64(POWER_RESTART_SEED);
        let start: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        power_iterate(&g, start, tol, max_iter)
    } else {
        first
    };
    if run.converged {
        Ok(run.value.max(0.0).sqrt())
    } else {
        Err(LinalgError::NonConvergence {
            method: "power iteration",
            iterations: run.iterations,
            best_estimate: run.value.max(0.0).sqrt(),
        })
    }
}

struct PowerRun {
    value: f64,
    converged: bool,
    iterations: usize,
}

fn power_iterate(g: &Matrix, start: Vec<f64>, tol: f64, max_iter: usize) -> PowerRun {
    let k = g.rows;
    let mut v = start;
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nv == 0.0 {
        return PowerRun {
            value: 0.0,
            converged: false,
            iterations: 0,
        };
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; k];
    let mut prev_mu: Option<f64> = None;
    let mut prev_delta: Option<f64> = None;
    let mut mu = 0.0;
    for it in 1..=max_iter {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = dot(g.row(i), &v);
        }
        mu = dot(&v, &w);
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw == 0.0 {
            // v lies in the null space; report the (zero) Rayleigh quotient as converged.
            return PowerRun {
                value: 0.0,
                converged: true,
                iterations: it,
            };
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if let Some(p) = prev_mu {
            let delta = mu - p;
            if delta.abs() <= 8.0 * f64::EPSILON * mu.abs() {
                return PowerRun {
                    value: mu,
                    converged: true,
                    iterations: it,
                };
            }
            if let Some(dp) = prev_delta {
                if delta > 0.0 && dp > 0.0 {
                    let q = delta / dp;
                    if q < 1.0 && delta * q / (1.0 - q) <= tol * mu {
                        return PowerRun {
                            value: mu,
                            converged: true,
                            iterations: it,
                        };
                    }
                }
            }
            prev_delta = Some(delta);
        }
        prev_mu = Some(mu);
    }
    PowerRun {
        value: mu,
        converged: false,
        iterations: max_iter,
    }
}

/// All eigenvalues (ascending) of a symmetric matrix by cyclic Jacobi.
///
/// The input is symmetrized by averaging with its transpose; asymmetry beyond
/// `SYMMETRY_TOL · ‖s‖_F` is rejected.
pub fn sym_eigenvalues(s: &Matrix) -> Result<Vec<f64>, LinalgError> {
    if s.rows != s.cols {
        return Err(LinalgError::NotSquare {
            rows: s.rows,
            cols: s.cols,
        });
    }
    let n = s.rows;
    let norm = frobenius_norm(s);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((s.get(i, j) - s.get(j, i)).abs());
        }
    }
    if asym > SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    let mut a = symmetrize(s);
    if norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = JACOBI_OFF_TOL * norm;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) < target {
            return Ok(sorted_diagonal(&a));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
    }
    if off_diagonal_norm(&a) < target {
        return Ok(sorted_diagonal(&a));
    }
    let diag = sorted_diagonal(&a);
    Err(LinalgError::NonConvergence {
        method: "cyclic Jacobi",
        iterations: JACOBI_MAX_SWEEPS,
        best_estimate: diag[0],
    })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let x = a.data[i * n + j];
                sum += x * x;
            }
        }
    }
    sum.sqrt()
}

fn sorted_diagonal(a: &Matrix) -> Vec<f64> {
    let mut d: Vec<f64> = (0..a.rows).map(|i| a.get(i, i)).collect();
    d.sort_by(|x, y| x.total_cmp(y));
    d
}

/// One Jacobi rotation zeroing `a[p, q]` (and `a[q, p]`).
fn rotate(a: &mut Matrix, p: usize, q: usize) {
    let n = a.rows;
    let apq = a.data[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = a.data[p * n + p];
    let aqq = a.data[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    for k in 0..n {
        let akp = a.data[k * n + p];
        let akq = a.data[k * n + q];
        a.data[k * n + p] = c * akp - s * akq;
        a.data[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a.data[p * n + k];
        let aqk = a.data[q * n + k];
        a.data[p * n + k] = c * apk - s * aqk;
        a.data[q * n + k] = s * apk + c * aqk;
    }
    a.data[p * n + q] = 0.0;
    a.data[q * n + p] = 0.0;
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn sym_eig_min(s: &Matrix) -> Result<f64, LinalgError> {
    let ev = sym_eigenvalues(s)?;
    Ok(ev.first().copied().unwrap_or(0.0))
}

/// `σ_min(a) = √λ_min(a·aᵀ)` for fat or square `a`; negative roundoff eigenvalues clamp to 0.
pub fn smallest_singular_value(a: &Matrix) -> Result<f64, LinalgError> {
    if a.rows > a.cols {
        return Err(LinalgError::TallMatrix {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if a.rows == 0 {
        return Ok(0.0);
    }
    let lmin = sym_eig_min(&gram_rows(a))?;
    Ok(lmin.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_rejects_bad_data() {
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0; 3]),
            Err(LinalgError::InvalidData { .. })
        ));
        assert_eq!(
            Matrix::new(2, 2, vec![1.0, 2.0, f64::NAN, 0.0]),
            Err(LinalgError::NonFinite { row: 1, col: 0 })
        );
    }

    #[test]
    fn matmul_hand_cases() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        let r = matmul(&Matrix::from_rows(&[&[1.0, 2.0]]), &Matrix::column(&[3.0, 4.0])).unwrap();
        assert_eq!(r, Matrix::from_rows(&[&[11.0]]));
        assert!(matches!(
            matmul(&a, &Matrix::zeros(3, 1)),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Matrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * 0.5 - j as f64);
        let b = Matrix::from_fn(3, 2, |i, j| (i * j) as f64 - 1.0);
        assert_eq!(t_matmul(&a, &b).unwrap(), matmul(&a.transpose(), &b).unwrap());
        let c = Matrix::from_fn(5, 4, |i, j| (i + 2 * j) as f64 * 0.25);
        assert_eq!(matmul_t(&a, &c).unwrap(), matmul(&a, &c.transpose()).unwrap());
    }

    #[test]
    fn frobenius_small_cases() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 4)), 0.0);
        assert_eq!(frobenius_norm(&Matrix::from_rows(&[&[3.0, 4.0]])), 5.0);
    }

    #[test]
    fn spectral_norm_small_cases() {
        let n = spectral_norm(&Matrix::from_rows(&[&[3.0]]), 1e-12, 100).unwrap();
        assert_eq!(n, 3.0);
        let nil = Matrix::from_rows(&[&[0.0, 2.0], &[0.0, 0.0]]);
        assert!((spectral_norm(&nil, 1e-12, 1000).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 2), 1e-12, 10).unwrap(), 0.0);
        assert!(matches!(
            spectral_norm(&nil, 0.0, 10),
            Err(LinalgError::InvalidTolerance(_))
        ));
    }

    #[test]
    fn spectral_norm_restarts_when_ones_is_orthogonal() {
        // aaᵀ has eigenvectors (1,1)/√2 (eigenvalue 0.5) and (1,-1)/√2 (eigenvalue 8):
        // the all-ones start only ever sees the smaller one.
        let a = Matrix::from_rows(&[&[2.0, 0.5], &[-2.0, 0.5]]);
        let s = spectral_norm(&a, 1e-12, 10_000).unwrap();
        assert!((s - 8f64.sqrt()).abs() < 1e-10, "got {s}");
        // Null-space start: [[1,-1]] maps the ones vector to zero.
        let b = Matrix::from_rows(&[&[1.0, -1.0], &[1.0, -1.0]]);
        assert!((spectral_norm(&b, 1e-12, 10_000).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_norm_reports_nonconvergence() {
        let a = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.999]]);
        match spectral_norm(&a, 1e-15, 3) {
            Err(LinalgError::NonConvergence { best_estimate, .. }) => {
                assert!(best_estimate > 0.99 && best_estimate <= 1.0)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn smallest_singular_value_cases() {
        assert!((smallest_singular_value(&Matrix::identity(3)).unwrap() - 1.0).abs() < 1e-15);
        let d = Matrix::from_rows(&[&[2.0, 0.0, 0.0], &[0.0, 3.0, 0.0]]);
        assert!((smallest_singular_value(&d).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(
            smallest_singular_value(&d.transpose()),
            Err(LinalgError::TallMatrix { .. })
        ));
        // Rank-deficient rows: clamped, never NaN.
        let r = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]]);
        let s = smallest_singular_value(&r).unwrap();
        assert!(s.is_finite() && s < 1e-6);
    }

    #[test]
    fn sym_eig_min_cases() {
        let d = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 5.0]]);
        assert_eq!(sym_eig_min(&d).unwrap(), 1.0);
        let s = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert!((sym_eig_min(&s).unwrap() - 1.0).abs() < 1e-14);
        let ev = sym_eigenvalues(&s).unwrap();
        assert!((ev[1] - 3.0).abs() < 1e-14);
        let bad = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eig_min(&bad), Err(LinalgError::NotSymmetric { .. })));
        assert!(matches!(
            sym_eig_min(&Matrix::zeros(2, 3)),
            Err(LinalgError::NotSquare { .. })
        ));
    }

    #[test]
    fn vec_cols_round_trip_and_order() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(a.vec_cols(), vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
        assert_eq!(Matrix::from_vec_cols(3, 2, &a.vec_cols()).unwrap(), a);
    }
}
