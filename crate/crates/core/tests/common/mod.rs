//! Independent reference implementations used as test oracles. Nothing here
//! calls into the estimator code paths it is compared against.

#![allow(dead_code)]

use std::collections::HashMap;

use mwclust::cluster::{ClusterScheme, WeightedSample};
use mwclust::linalg::Matrix;
use mwclust::regression::RegressionData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Σ_i Σ_j 1[g_i = g_j or h_i = h_j] ω_i ω_j W_i W_j′, by visiting all n² pairs.
pub fn brute_force_cgm(w: &Dense, omega: &[f64], g: &[usize], h: &[usize]) -> Dense {
    let n = w.len();
    let k = w[0].len();
    let mut q = vec![vec![0.0; k]; k];
    for i in 0..n {
        for j in 0..n {
            if g[i] == g[j] || h[i] == h[j] {
                let c = omega[i] * omega[j];
                for a in 0..k {
                    for b in 0..k {
                        q[a][b] += c * w[i][a] * w[j][b];
                    }
                }
            }
        }
    }
    q
}

/// One-way cluster sandwich meat Σ_g (Σ_{i∈g} ω_i W_i)(Σ_{i∈g} ω_i W_i)′.
pub fn one_way_meat(w: &Dense, omega: &[f64], g: &[usize]) -> Dense {
    let k = w[0].len();
    let mut sums: HashMap<usize, Vec<f64>> = HashMap::new();
    for (i, &c) in g.iter().enumerate() {
        let s = sums.entry(c).or_insert_with(|| vec![0.0; k]);
        for a in 0..k {
            s[a] += omega[i] * w[i][a];
        }
    }
    let mut q = vec![vec![0.0; k]; k];
    for s in sums.values() {
        for a in 0..k {
            for b in 0..k {
                q[a][b] += s[a] * s[b];
            }
        }
    }
    q
}

/// HC0 meat Σ_i ω_i² W_i W_i′.
pub fn hc0_meat(w: &Dense, omega: &[f64]) -> Dense {
    let k = w[0].len();
    let mut q = vec![vec![0.0; k]; k];
    for (row, o) in w.iter().zip(omega) {
        for a in 0..k {
            for b in 0..k {
                q[a][b] += o * o * row[a] * row[b];
            }
        }
    }
    q
}

pub fn frob(a: &Dense) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// ‖a − b‖_F / max(‖b‖_F, tiny).
pub fn rel_frob(a: &Dense, b: &Dense) -> f64 {
    let diff: f64 = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / frob(b).max(1e-300)
}

pub fn to_dense(m: &Matrix) -> Dense {
    m.to_rows()
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn invert(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    let pivot = m[c].clone();
                    m[r].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
}

/// OLS by the normal equations: (β̂, residuals, (X′X)⁻¹).
pub fn normal_equations(x: &Dense, y: &[f64]) -> (Vec<f64>, Vec<f64>, Dense) {
    let k = x[0].len();
    let xtx: Dense = (0..k).map(|a| (0..k).map(|b| x.iter().map(|r| r[a] * r[b]).sum()).collect()).collect();
    let xty: Vec<f64> = (0..k).map(|a| x.iter().zip(y).map(|(r, v)| r[a] * v).sum()).collect();
    let inv = invert(&xtx);
    let beta: Vec<f64> = (0..k).map(|a| (0..k).map(|b| inv[a][b] * xty[b]).sum()).collect();
    let resid = x.iter().zip(y).map(|(r, v)| v - r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).collect();
    (beta, resid, inv)
}

/// A random scalar-or-vector sample on a random two-way scheme.
pub struct Instance {
    pub w: Dense,
    pub omega: Vec<f64>,
    pub g: Vec<usize>,
    pub h: Vec<usize>,
}

impl Instance {
    pub fn random(r: &mut impl Rng, max_n: usize, max_k: usize) -> Self {
        let n = r.random_range(1..=max_n);
        let k = r.random_range(1..=max_k);
        let cg = r.random_range(1..=n.min(25));
        let ch = r.random_range(1..=n.min(25));
        let g = (0..n).map(|_| r.random_range(0..cg)).collect();
        let h = (0..n).map(|_| r.random_range(0..ch)).collect();
        let w = (0..n).map(|_| (0..k).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
        let omega = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        Self { w, omega, g, h }
    }

    pub fn scheme(&self) -> ClusterScheme {
        ClusterScheme::two_way(&self.g, &self.h).unwrap()
    }

    pub fn sample(&self) -> WeightedSample {
        WeightedSample::new(Matrix::from_rows(&self.w).unwrap(), self.omega.clone()).unwrap()
    }
}

/// A random regression with an intercept column in position 1.
pub struct Problem {
    pub y: Vec<f64>,
    pub x: Dense,
    pub g: Vec<usize>,
    pub h: Vec<usize>,
}

impl Problem {
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let n = r.random_range(12..150);
        let k = r.random_range(1..=5);
        let cg = r.random_range(2..=n.min(15));
        let ch = r.random_range(2..=n.min(15));
        let g = (0..n).map(|_| r.random_range(0..cg)).collect();
        let h = (0..n).map(|_| r.random_range(0..ch)).collect();
        let x: Dense =
            (0..n).map(|_| (0..k).map(|j| if j == 1 { 1.0 } else { r.random_range(-3.0..3.0) }).collect()).collect();
        let y = x
            .iter()
            .map(|row| {
                row.iter().enumerate().map(|(j, v)| (j as f64 - 1.0) * v).sum::<f64>() + r.random_range(-2.0..2.0)
            })
            .collect();
        Self { y, x, g, h }
    }

    pub fn data(&self, scheme: ClusterScheme) -> RegressionData {
        let n = self.y.len();
        let k = self.x[0].len();
        let d = self.x.iter().map(|r| r[0]).collect();
        let controls = Matrix::from_fn(n, k - 1, |i, j| self.x[i][j + 1]);
        RegressionData::new(self.y.clone(), d, controls, scheme).unwrap()
    }

    pub fn two_way(&self) -> RegressionData {
        self.data(ClusterScheme::two_way(&self.g, &self.h).unwrap())
    }
}

/// (X′X)⁻¹ meat (X′X)⁻¹ with meat from the residual scores.
pub fn sandwich(x: &Dense, resid: &[f64], inv: &Dense, meat: impl Fn(&Dense) -> Dense) -> Dense {
    let scores: Dense = x.iter().zip(resid).map(|(r, u)| r.iter().map(|v| v * u).collect()).collect();
    matmul(&matmul(inv, &meat(&scores)), inv)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
