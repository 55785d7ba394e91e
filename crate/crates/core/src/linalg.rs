//! Small dense linear algebra: a row-major matrix, a cyclic Jacobi
//! eigensolver for symmetric matrices and a column-pivoted Householder QR.
//!
//! Everything here targets the K×K (K ≲ 32) and n×K shapes that show up in
//! cluster-robust inference, so nothing is blocked or vectorised.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
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

    /// Builds a matrix from a row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "buffer of length {} cannot be shaped {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    /// Column-stacks equally long vectors into an n×k matrix.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("columns of unequal length".into()));
        }
        Ok(Self::from_fn(n, columns.len(), |i, j| columns[j][i]))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}×{} by {}×{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// X'X.
    pub fn gram(&self) -> Matrix {
        let k = self.cols;
        let mut out = Matrix::zeros(k, k);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..k {
                for b in a..k {
                    out[(a, b)] += r[a] * r[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                out[(a, b)] = out[(b, a)];
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}×{} vs {}×{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix with (A + A')/2.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in 0..i {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Relative Frobenius distance ‖a − b‖ / max(‖a‖, ‖b‖), zero when both vanish.
pub fn relative_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let diff = match a.sub(b) {
        Ok(d) => d.frobenius_norm(),
        Err(_) => return f64::INFINITY,
    };
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// V diag(f(λ)) V'.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let k = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let mut s = 0.0;
                for (m, lam) in mapped.iter().enumerate() {
                    s += self.vectors[(a, m)] * lam * self.vectors[(b, m)];
                }
                out[(a, b)] = s;
                out[(b, a)] = s;
            }
        }
        out
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigen-decomposition.
///
/// Rejects inputs whose asymmetry exceeds `1e-12` relative to the largest
/// entry (absolute for entries below one).
pub fn symmetric_eigen(m: &Matrix) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigen-decomposition needs a square matrix, got {}×{}",
            m.rows(),
            m.cols()
        )));
    }
    let scale = m.as_slice().iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Asymmetric(asym));
    }

    let n = m.rows();
    let mut a = m.clone();
    a.symmetrize();
    let mut v = Matrix::identity(n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|p| ((p + 1)..n).map(move |q| (p, q))).map(|(p, q)| a[(p, q)] * a[(p, q)]).sum();
        let total = a.frobenius_norm();
        if off.sqrt() <= f64::EPSILON * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // rotation angle that annihilates a[p][q]
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)]));
    let values = order.iter().map(|&j| a[(j, j)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Smallest eigenvalue of a symmetric matrix (Jacobi). Empty input gives +∞.
pub fn smallest_eigenvalue(m: &Matrix) -> Result<f64> {
    let eig = symmetric_eigen(m)?;
    Ok(eig.values.first().copied().unwrap_or(f64::INFINITY))
}

/// Relative pivot threshold for declaring a column numerically dependent.
pub const PIVOT_TOL: f64 = 1e-10;

/// Householder QR with column pivoting, A P = Q R.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    n: usize,
    k: usize,
    /// Householder vectors, one per eliminated column, acting on rows j..n.
    reflectors: Vec<(Vec<f64>, f64)>,
    /// Upper-triangular R (k×k, only the leading `rank` rows are meaningful).
    r: Matrix,
    /// `perm[j]` is the original column placed at position j.
    perm: Vec<usize>,
    rank: usize,
    /// Index, in input order, of the first column in the span of the ones before it.
    first_dependent: Option<usize>,
}

impl PivotedQr {
    pub fn new(a: &Matrix) -> Self {
        let mut qr = Self::factor(a);
        if qr.rank < qr.k {
            // pivoting reorders columns, so locate the culprit by growing prefixes
            let prefix_rank = |cols: usize| Self::factor(&Matrix::from_fn(qr.n, cols, |i, c| a[(i, c)])).rank;
            qr.first_dependent = Some((1..=qr.k).find(|&c| prefix_rank(c) < c).map_or(qr.perm[qr.rank], |c| c - 1));
        }
        qr
    }

    fn factor(a: &Matrix) -> Self {
        let n = a.rows();
        let k = a.cols();
        let mut work = a.clone();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut reflectors = Vec::with_capacity(k.min(n));
        let mut r = Matrix::zeros(k, k);
        let mut rank = 0;
        let mut lead = 0.0_f64;

        for j in 0..k.min(n) {
            // exact remaining column norms; k is small
            let mut best = j;
            let mut best_norm = -1.0;
            for c in j..k {
                let s: f64 = (j..n).map(|i| work[(i, c)] * work[(i, c)]).sum();
                if s > best_norm {
                    best_norm = s;
                    best = c;
                }
            }
            if best != j {
                for i in 0..n {
                    let tmp = work[(i, j)];
                    work[(i, j)] = work[(i, best)];
                    work[(i, best)] = tmp;
                }
                for i in 0..j {
                    let tmp = r[(i, j)];
                    r[(i, j)] = r[(i, best)];
                    r[(i, best)] = tmp;
                }
                perm.swap(j, best);
            }

            let norm = best_norm.max(0.0).sqrt();
            if j == 0 {
                lead = norm;
            }
            if norm <= PIVOT_TOL * lead || norm == 0.0 {
                break;
            }

            let x0 = work[(j, j)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = (j..n).map(|i| work[(i, j)]).collect();
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|x| x * x).sum();
            let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };

            for c in (j + 1)..k {
                let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * work[(j + t, c)]).sum();
                let f = beta * dot;
                for (t, vi) in v.iter().enumerate() {
                    work[(j + t, c)] -= f * vi;
                }
            }
            r[(j, j)] = alpha;
            for c in (j + 1)..k {
                r[(j, c)] = work[(j, c)];
            }
            for i in j..n {
                work[(i, j)] = 0.0;
            }
            reflectors.push((v, beta));
            rank += 1;
        }

        Self { n, k, reflectors, r, perm, rank, first_dependent: None }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncols(&self) -> usize {
        self.k
    }

    /// Input-order index of the first column that lies in the span of the preceding ones.
    pub fn first_dependent_column(&self) -> Option<usize> {
        self.first_dependent
    }

    fn apply_qt(&self, y: &mut [f64]) {
        for (j, (v, beta)) in self.reflectors.iter().enumerate() {
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * y[j + t]).sum();
            let f = beta * dot;
            for (t, vi) in v.iter().enumerate() {
                y[j + t] -= f * vi;
            }
        }
    }

    fn apply_q(&self, y: &mut [f64]) {
        for (j, (v, beta)) in self.reflectors.iter().enumerate().rev() {
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * y[j + t]).sum();
            let f = beta * dot;
            for (t, vi) in v.iter().enumerate() {
                y[j + t] -= f * vi;
            }
        }
    }

    fn require_full_rank(&self) -> Result<()> {
        match self.first_dependent_column() {
            Some(c) => Err(Error::SingularDesign { column: format!("#{c}") }),
            None => Ok(()),
        }
    }

    /// Least-squares coefficients argmin ‖y − A b‖. Requires full column rank.
    pub fn solve_least_squares(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch(format!("response of length {} for {} rows", y.len(), self.n)));
        }
        self.require_full_rank()?;
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let k = self.k;
        let mut z = vec![0.0; k];
        for j in (0..k).rev() {
            let mut s = qty[j];
            for c in (j + 1)..k {
                s -= self.r[(j, c)] * z[c];
            }
            z[j] = s / self.r[(j, j)];
        }
        let mut beta = vec![0.0; k];
        for (j, &orig) in self.perm.iter().enumerate() {
            beta[orig] = z[j];
        }
        Ok(beta)
    }

    /// y − A (A'A)⁻ A'y: the component of `y` orthogonal to the column space
    /// spanned by the independent columns.
    pub fn residuals(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch(format!("vector of length {} for {} rows", y.len(), self.n)));
        }
        let mut w = y.to_vec();
        self.apply_qt(&mut w);
        for v in w.iter_mut().take(self.rank) {
            *v = 0.0;
        }
        self.apply_q(&mut w);
        Ok(w)
    }

    /// (A'A)⁻¹ = P R⁻¹ R⁻ᵀ P'. Requires full column rank.
    pub fn gram_inverse(&self) -> Result<Matrix> {
        self.require_full_rank()?;
        let k = self.k;
        let mut rinv = Matrix::zeros(k, k);
        for col in 0..k {
            // solve R x = e_col
            for j in (0..=col).rev() {
                let mut s = if j == col { 1.0 } else { 0.0 };
                for c in (j + 1)..=col {
                    s -= self.r[(j, c)] * rinv[(c, col)];
                }
                rinv[(j, col)] = s / self.r[(j, j)];
            }
        }
        let mut out = Matrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let mut s = 0.0;
                for c in b.max(a)..k {
                    s += rinv[(a, c)] * rinv[(b, c)];
                }
                out[(self.perm[a], self.perm[b])] = s;
                out[(self.perm[b], self.perm[a])] = s;
            }
        }
        Ok(out)
    }
}
