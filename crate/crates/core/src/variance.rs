//! The CGM plug-in variance estimator
//! Q̂ = Σ_i Σ_{j∈𝒩_i} ω_i ω_j W_i W_j′, in raw and demeaned forms.
//!
//! Two independent computation paths are provided. Pair enumeration walks
//! every neighborhood directly with compensated summation; inclusion–exclusion
//! forms Q̂_G + Q̂_H − Q̂_{G∩H} from per-cluster score sums. They must agree to
//! rounding, and the test suite holds them to each other and to an O(n²)
//! brute force.

use serde::{Deserialize, Serialize};

use crate::cluster::{NeighborhoodIndex, WeightedSample};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};

pub use crate::linalg::smallest_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CgmMethod {
    #[default]
    PairEnum,
    InclusionExclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CgmOptions {
    pub method: CgmMethod,
    /// Scale each one-way component by C/(C−1). Only meaningful on the
    /// inclusion–exclusion path; off by default.
    pub dof_correction: bool,
}

/// A symmetric K×K variance estimate with provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub q_hat: Matrix,
    pub lambda_min: f64,
    pub method: CgmMethod,
    pub demeaned: bool,
    pub psd_projected: bool,
    pub dof_corrected: bool,
}

impl VarianceEstimate {
    fn new(mut q_hat: Matrix, method: CgmMethod, demeaned: bool, dof_corrected: bool) -> Result<Self> {
        q_hat.symmetrize();
        let lambda_min = smallest_eigenvalue(&q_hat)?;
        Ok(Self { q_hat, lambda_min, method, demeaned, psd_projected: false, dof_corrected })
    }

    /// Q̂ for K = 1.
    pub fn scalar(&self) -> f64 {
        self.q_hat[(0, 0)]
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// W̄ = Σ ω_i W_i / Σ ω_j.
pub fn weighted_mean(sample: &WeightedSample) -> Result<Vec<f64>> {
    let omega = sample.weights();
    let total: f64 = omega.iter().sum();
    if total == 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let w = sample.values();
    Ok((0..sample.k())
        .map(|k| {
            let mut s = CompensatedSum::default();
            for (i, o) in omega.iter().enumerate() {
                s.add(o * w[(i, k)]);
            }
            s.value() / total
        })
        .collect())
}

fn check_dims(sample: &WeightedSample, index: &NeighborhoodIndex) -> Result<()> {
    if sample.n() != index.n() {
        return Err(Error::DimensionMismatch(format!(
            "sample has {} observations, index has {}",
            sample.n(),
            index.n()
        )));
    }
    Ok(())
}

/// Raw CGM estimator, treating E[W_i] = 0.
pub fn cgm_raw(sample: &WeightedSample, index: &NeighborhoodIndex, method: CgmMethod) -> Result<VarianceEstimate> {
    cgm_with(sample, index, CgmOptions { method, dof_correction: false })
}

pub fn cgm_with(sample: &WeightedSample, index: &NeighborhoodIndex, opts: CgmOptions) -> Result<VarianceEstimate> {
    check_dims(sample, index)?;
    let q = match (opts.method, opts.dof_correction) {
        (CgmMethod::PairEnum, false) => pair_enum(sample, index),
        (CgmMethod::PairEnum, true) => {
            return Err(Error::Unsupported(
                "degrees-of-freedom correction requires the inclusion-exclusion path".into(),
            ))
        }
        (CgmMethod::InclusionExclusion, dof) => inclusion_exclusion(sample, index, dof)?,
    };
    VarianceEstimate::new(q, opts.method, false, opts.dof_correction)
}

/// Demeaned CGM estimator around the weighted mean W̄. Returns (W̄, Q̂).
pub fn cgm_demeaned(
    sample: &WeightedSample,
    index: &NeighborhoodIndex,
    method: CgmMethod,
) -> Result<(Vec<f64>, VarianceEstimate)> {
    cgm_demeaned_with(sample, index, CgmOptions { method, dof_correction: false })
}

pub fn cgm_demeaned_with(
    sample: &WeightedSample,
    index: &NeighborhoodIndex,
    opts: CgmOptions,
) -> Result<(Vec<f64>, VarianceEstimate)> {
    check_dims(sample, index)?;
    let mean = weighted_mean(sample)?;
    let w = sample.values();
    let centered = Matrix::from_fn(w.rows(), w.cols(), |i, k| w[(i, k)] - mean[k]);
    let recentered = WeightedSample::new(centered, sample.weights().to_vec())?;
    let mut est = cgm_with(&recentered, index, opts)?;
    est.demeaned = true;
    Ok((mean, est))
}

fn pair_enum(sample: &WeightedSample, index: &NeighborhoodIndex) -> Matrix {
    let k = sample.k();
    let w = sample.values();
    let omega = sample.weights();
    let mut acc = vec![CompensatedSum::default(); k * k];
    let mut s = vec![CompensatedSum::default(); k];
    for i in 0..sample.n() {
        if omega[i] == 0.0 {
            continue;
        }
        s.iter_mut().for_each(|c| *c = CompensatedSum::default());
        index.for_each_neighbor(i, |j| {
            let oj = omega[j];
            for (a, sa) in s.iter_mut().enumerate() {
                sa.add(oj * w[(j, a)]);
            }
        });
        let oi = omega[i];
        for a in 0..k {
            let left = oi * w[(i, a)];
            for b in 0..k {
                acc[a * k + b].add(left * s[b].value());
            }
        }
    }
    Matrix::from_fn(k, k, |a, b| acc[a * k + b].value())
}

/// Σ_c S_c S_c′ with S_c the weighted score sum of group c.
fn outer_sum<'a>(groups: impl Iterator<Item = &'a [usize]>, sample: &WeightedSample) -> Matrix {
    let k = sample.k();
    let w = sample.values();
    let omega = sample.weights();
    let mut out = Matrix::zeros(k, k);
    let mut s = vec![0.0; k];
    for members in groups {
        s.iter_mut().for_each(|v| *v = 0.0);
        for &i in members {
            for (a, sa) in s.iter_mut().enumerate() {
                *sa += omega[i] * w[(i, a)];
            }
        }
        for a in 0..k {
            for b in 0..k {
                out[(a, b)] += s[a] * s[b];
            }
        }
    }
    out
}

/// The three one-way components (Q̂_G, Q̂_H, Q̂_{G∩H}).
pub fn cgm_components(sample: &WeightedSample, index: &NeighborhoodIndex) -> Result<[Matrix; 3]> {
    check_dims(sample, index)?;
    Ok([
        outer_sum(index.clusters(0).iter().map(Vec::as_slice), sample),
        outer_sum(index.clusters(1).iter().map(Vec::as_slice), sample),
        outer_sum(index.cells().iter().map(|c| c.members.as_slice()), sample),
    ])
}

fn dof_factor(clusters: usize) -> Result<f64> {
    if clusters < 2 {
        return Err(Error::Unsupported(
            "degrees-of-freedom correction needs at least two clusters per dimension".into(),
        ));
    }
    Ok(clusters as f64 / (clusters as f64 - 1.0))
}

fn inclusion_exclusion(sample: &WeightedSample, index: &NeighborhoodIndex, dof: bool) -> Result<Matrix> {
    let [qg, qh, qgh] = cgm_components(sample, index)?;
    let (cg, ch, cgh) = if dof {
        (dof_factor(index.clusters(0).len())?, dof_factor(index.clusters(1).len())?, dof_factor(index.cells().len())?)
    } else {
        (1.0, 1.0, 1.0)
    };
    qg.scale(cg).add(&qh.scale(ch))?.sub(&qgh.scale(cgh))
}

/// Clips negative eigenvalues of Q̂ at zero. Idempotent.
pub fn psd_project(est: &VarianceEstimate) -> Result<VarianceEstimate> {
    let eig = symmetric_eigen(&est.q_hat)?;
    let mut q_hat = eig.reconstruct_with(|l| l.max(0.0));
    q_hat.symmetrize();
    let lambda_min = eig.values.first().map_or(0.0, |l| l.max(0.0));
    Ok(VarianceEstimate { q_hat, lambda_min, psd_projected: true, ..est.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_index, ClusterScheme};
    use approx::assert_relative_eq;

    fn scalar(values: &[f64], omega: &[f64]) -> WeightedSample {
        WeightedSample::scalar(values.to_vec(), omega.to_vec()).unwrap()
    }

    fn both(sample: &WeightedSample, index: &NeighborhoodIndex) -> (f64, f64) {
        (
            cgm_raw(sample, index, CgmMethod::PairEnum).unwrap().scalar(),
            cgm_raw(sample, index, CgmMethod::InclusionExclusion).unwrap().scalar(),
        )
    }

    #[test]
    fn weighted_mean_examples() {
        assert_eq!(weighted_mean(&scalar(&[1.0, 3.0], &[1.0, 1.0])).unwrap(), vec![2.0]);
        assert_eq!(weighted_mean(&scalar(&[1.0, 2.0, 3.0], &[0.0, 0.0, 1.0])).unwrap(), vec![3.0]);
        assert_eq!(weighted_mean(&scalar(&[1.0, 2.0], &[1.0, 3.0])).unwrap(), vec![1.75]);
        assert_eq!(weighted_mean(&scalar(&[1.0, 2.0], &[1.0, -1.0])), Err(Error::DegenerateWeights));
    }

    #[test]
    fn single_observation() {
        let idx = build_index(&ClusterScheme::singletons(1).unwrap()).unwrap();
        assert_eq!(both(&scalar(&[2.0], &[1.0]), &idx), (4.0, 4.0));
    }

    #[test]
    fn singletons_reduce_to_sum_of_squares() {
        let idx = build_index(&ClusterScheme::singletons(4).unwrap()).unwrap();
        let s = scalar(&[1.0, -2.0, 0.5, 3.0], &[1.0, 0.5, 2.0, -1.0]);
        let expected = 1.0 + 1.0 + 1.0 + 9.0;
        let (a, b) = both(&s, &idx);
        assert_relative_eq!(a, expected);
        assert_relative_eq!(b, expected);
    }

    #[test]
    fn triple_with_alternating_values_is_negative() {
        let idx = build_index(&ClusterScheme::two_way(&[0, 0, 1], &[0, 1, 1]).unwrap()).unwrap();
        let s = scalar(&[1.0, -1.0, 1.0], &[1.0; 3]);
        assert_eq!(both(&s, &idx), (-1.0, -1.0));
        let est = cgm_raw(&s, &idx, CgmMethod::PairEnum).unwrap();
        assert_eq!(est.lambda_min, -1.0);
        assert!(!est.psd_projected);
    }

    #[test]
    fn demeaned_examples() {
        let idx = build_index(&ClusterScheme::balanced_grid(2, 2, 1).unwrap()).unwrap();
        let (mean, est) = cgm_demeaned(&scalar(&[3.0; 4], &[1.0; 4]), &idx, CgmMethod::PairEnum).unwrap();
        assert_eq!(mean, vec![3.0]);
        assert_eq!(est.scalar(), 0.0);
        assert!(est.demeaned);

        let idx = build_index(&ClusterScheme::singletons(2).unwrap()).unwrap();
        let (mean, est) = cgm_demeaned(&scalar(&[0.0, 2.0], &[1.0, 1.0]), &idx, CgmMethod::PairEnum).unwrap();
        assert_eq!(mean, vec![1.0]);
        assert_eq!(est.scalar(), 2.0);
    }

    #[test]
    fn demeaned_equals_raw_when_mean_is_zero() {
        let idx = build_index(&ClusterScheme::two_way(&[0, 0, 1, 1], &[0, 1, 1, 0]).unwrap()).unwrap();
        let s = scalar(&[1.0, -1.0, 2.0, -2.0], &[1.0; 4]);
        let raw = cgm_raw(&s, &idx, CgmMethod::PairEnum).unwrap();
        let (_, dm) = cgm_demeaned(&s, &idx, CgmMethod::PairEnum).unwrap();
        assert_eq!(raw.q_hat, dm.q_hat);
    }

    #[test]
    fn dimension_mismatch() {
        let idx = build_index(&ClusterScheme::singletons(3).unwrap()).unwrap();
        let s = scalar(&[1.0, 2.0], &[1.0, 1.0]);
        assert!(matches!(cgm_raw(&s, &idx, CgmMethod::PairEnum), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn psd_projection_examples() {
        let est = VarianceEstimate::new(Matrix::from_rows(&[vec![-1.0]]).unwrap(), CgmMethod::PairEnum, false, false)
            .unwrap();
        let p = psd_project(&est).unwrap();
        assert_eq!(p.q_hat[(0, 0)], 0.0);
        assert!(p.psd_projected);

        let est = VarianceEstimate::new(Matrix::identity(3), CgmMethod::PairEnum, false, false).unwrap();
        let p = psd_project(&est).unwrap();
        assert!(crate::linalg::relative_frobenius(&p.q_hat, &Matrix::identity(3)) < 1e-15);
        assert!(p.psd_projected);
        assert_eq!(p.lambda_min, 1.0);

        let est = VarianceEstimate::new(Matrix::diagonal(&[2.0, -3.0]), CgmMethod::PairEnum, false, false).unwrap();
        let p = psd_project(&est).unwrap();
        assert_relative_eq!(p.q_hat[(0, 0)], 2.0, epsilon = 1e-14);
        assert!(p.q_hat[(1, 1)].abs() < 1e-14);
        assert_eq!(p.lambda_min, 0.0);
        let again = psd_project(&p).unwrap();
        assert!(crate::linalg::relative_frobenius(&again.q_hat, &p.q_hat) < 1e-14);
    }

    #[test]
    fn dof_correction_scales_components() {
        let idx = build_index(&ClusterScheme::balanced_grid(3, 4, 2).unwrap()).unwrap();
        let vals: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let s = scalar(&vals, &[1.0; 24]);
        let [qg, qh, qgh] = cgm_components(&s, &idx).unwrap();
        let corrected =
            cgm_with(&s, &idx, CgmOptions { method: CgmMethod::InclusionExclusion, dof_correction: true }).unwrap();
        let expected = qg[(0, 0)] * 1.5 + qh[(0, 0)] * 4.0 / 3.0 - qgh[(0, 0)] * 12.0 / 11.0;
        assert_relative_eq!(corrected.scalar(), expected, epsilon = 1e-12);
        assert!(corrected.dof_corrected);
        assert!(cgm_with(&s, &idx, CgmOptions { method: CgmMethod::PairEnum, dof_correction: true }).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        s.add(1.0);
        s.add(-1e16);
        assert_eq!(s.value(), 1.0);
    }
}
