use std::ops::{Add, Index, IndexMut, Mul, Sub};

use rand::Rng;
use serde::Serialize;

use crate::error::{EosError, Result};
use crate::rng::gaussian_vec;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(EosError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(EosError::Precondition("matrix entries must be finite".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(EosError::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// i.i.d. standard normal entries.
    pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: gaussian_vec(rng, rows * cols),
        }
    }

    /// u v^T
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(EosError::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| s * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| f(*x)).collect(),
        }
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(EosError::DimensionMismatch {
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn try_add(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &DenseMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Panics on shape mismatch; use `try_add` for fallible code paths.
impl Add for &DenseMatrix {
    type Output = DenseMatrix;

    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.try_add(rhs).expect("shape mismatch in matrix addition")
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;

    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.try_sub(rhs).expect("shape mismatch in matrix subtraction")
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;

    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.matmul(rhs).expect("shape mismatch in matrix product")
    }
}

/// Thin SVD `M = U diag(sigma) V^T` with `k = min(rows, cols)` components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvdResult {
    /// rows x k, orthonormal columns
    pub u: DenseMatrix,
    /// Non-increasing.
    pub sigma: Vec<f64>,
    /// cols x k, orthonormal columns
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn u_col(&self, i: usize) -> Vec<f64> {
        self.u.column(i)
    }

    pub fn v_col(&self, i: usize) -> Vec<f64> {
        self.v.column(i)
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let s = DenseMatrix::diag(&self.sigma);
        &(&self.u * &s) * &self.v.transpose()
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Singular values come out sorted descending, and each pair (u_i, v_i) is
/// flipped so the largest-magnitude entry of u_i is positive.
pub fn svd(m: &DenseMatrix) -> Result<SvdResult> {
    if m.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(EosError::Precondition("svd needs finite entries".into()));
    }
    if m.rows() < m.cols() {
        let t = svd(&m.transpose())?;
        // M^T = U S V^T  =>  M = V S U^T; re-fix signs on the new left factor
        return Ok(fix_signs(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        }));
    }
    let (rows, n) = m.shape();
    // columns of A = M V, rotated until mutually orthogonal
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let tol = f64::EPSILON * rows as f64;
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        let off = a[0].iter().zip(&a[1]).map(|(x, y)| x * y).sum::<f64>();
        return Err(EosError::NonConvergence {
            iters: JACOBI_MAX_SWEEPS,
            last_estimate: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = a.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let scale = sigma.first().copied().unwrap_or(0.0);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (&i, &s) in order.iter().zip(&sigma) {
        if s > tol * scale && s > 0.0 {
            u_cols.push(a[i].iter().map(|x| x / s).collect());
        } else {
            u_cols.push(complete_basis(&u_cols, rows));
        }
    }
    let u = DenseMatrix::from_fn(rows, n, |i, j| u_cols[j][i]);
    let v = DenseMatrix::from_fn(n, n, |i, j| v[order[j]][i]);
    Ok(fix_signs(SvdResult { u, sigma, v }))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// A unit vector orthogonal to `basis`, by Gram-Schmidt on coordinate vectors.
fn complete_basis(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut best = vec![0.0; dim];
    let mut best_norm = -1.0;
    for e in 0..dim {
        let mut cand: Vec<f64> = (0..dim).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for _ in 0..2 {
            for b in basis {
                let proj: f64 = b.iter().zip(&cand).map(|(x, y)| x * y).sum();
                cand.iter_mut().zip(b).for_each(|(c, bi)| *c -= proj * bi);
            }
        }
        let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > best_norm {
            best_norm = norm;
            best = cand.into_iter().map(|x| x / norm).collect();
        }
        if best_norm > 0.5 {
            break;
        }
    }
    best
}

fn fix_signs(mut r: SvdResult) -> SvdResult {
    for j in 0..r.sigma.len() {
        let col = r.u.column(j);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            for i in 0..r.u.rows() {
                r.u[(i, j)] = -r.u[(i, j)];
            }
            for i in 0..r.v.rows() {
                r.v[(i, j)] = -r.v[(i, j)];
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn orthonormality_error(m: &DenseMatrix) -> f64 {
        let g = &m.transpose() * m;
        (&g - &DenseMatrix::identity(m.cols())).max_abs()
    }

    fn check(m: &DenseMatrix) -> SvdResult {
        let r = svd(m).unwrap();
        let resid = (&r.reconstruct() - m).frobenius_norm();
        assert!(resid <= 1e-10 * m.frobenius_norm().max(f64::MIN_POSITIVE), "residual {resid}");
        assert!(orthonormality_error(&r.u) < 1e-10);
        assert!(orthonormality_error(&r.v) < 1e-10);
        assert!(r.sigma.windows(2).all(|w| w[0] >= w[1]));
        r
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let r = check(&DenseMatrix::identity(3));
        assert_eq!(r.sigma, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_matrix() {
        let r = check(&DenseMatrix::diag(&[1.0, 3.0]));
        assert_eq!(r.sigma, vec![3.0, 1.0]);
        assert_eq!(r.u_col(0), vec![0.0, 1.0]);
        assert_eq!(r.v_col(0), vec![0.0, 1.0]);
    }

    #[test]
    fn random_square_and_rectangular() {
        let mut rng = seeded_rng(42);
        for (r, c) in [(8, 8), (4, 3), (3, 5), (1, 4), (6, 1)] {
            check(&DenseMatrix::gaussian(&mut rng, r, c));
        }
    }

    #[test]
    fn rank_deficient_and_zero() {
        let u = [1.0, 2.0, -1.0];
        let v = [0.5, 0.0, 1.0, 2.0];
        let r = check(&DenseMatrix::outer(&u, &v));
        assert!(r.sigma[1] < 1e-12);
        let z = svd(&DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(z.sigma, vec![0.0; 3]);
        assert!(orthonormality_error(&z.u) < 1e-12);
    }

    #[test]
    fn sign_convention() {
        let mut rng = seeded_rng(3);
        let m = DenseMatrix::gaussian(&mut rng, 5, 5);
        let r = check(&m);
        for j in 0..5 {
            let col = r.u_col(j);
            let pivot = col.iter().fold(0.0_f64, |a, x| if x.abs() > a.abs() { *x } else { a });
            assert!(pivot > 0.0);
        }
        assert_eq!(svd(&m).unwrap(), r);
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = DenseMatrix::identity(2);
        m[(0, 1)] = f64::NAN;
        assert!(svd(&m).is_err());
    }
}
