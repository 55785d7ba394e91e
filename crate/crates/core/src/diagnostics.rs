//! Empirically checkable assumption diagnostics: the leverage statistic L_C,
//! the regularity ratios and the rank condition.
//!
//! The dependence indicator A_ij is unobservable on real data. In data mode
//! every shared-cluster pair counts as dependent, which upper-bounds the
//! quantity with the true A_ij; oracle mode takes A_ij from a simulation.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cluster::{pair_weight_sums, NeighborhoodIndex, PairWeightMode};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regression::{rank_lambda, InferenceResult, RegressionData, RANK_FLOOR};
use crate::Warning;

/// Flag L_C above the value it takes for 30 equally weighted independent observations.
pub const DEFAULT_LEVERAGE_THRESHOLD: f64 = 1.0 / 30.0;

/// Whether A_ij holds for observations `i` and `j`.
pub trait DependenceIndicator {
    fn dependent(&self, i: usize, j: usize) -> bool;
}

/// A_ij ≡ 1 for every pair sharing a cluster.
pub struct SharedCluster<'a>(pub &'a NeighborhoodIndex);

impl DependenceIndicator for SharedCluster<'_> {
    fn dependent(&self, i: usize, j: usize) -> bool {
        self.0.shares_cluster(i, j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticsMode {
    /// Exact quantities from a known data-generating process.
    Oracle,
    /// Upper-bound surrogates computed from data alone.
    Data,
}

/// L_C = max_c (Σ_{i∈c}|w_i|)² / Σ_c (Σ_{i∈c}|w_i|)² per dimension.
pub fn leverage_l(index: &NeighborhoodIndex, weights: &[f64]) -> Result<[f64; 2]> {
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let max = pair_weight_sums(index, weights, PairWeightMode::MaxClusterL1Squared)?;
    let sum = pair_weight_sums(index, weights, PairWeightMode::SumClusterL1Squared)?;
    Ok([max[0] / sum[0], max[1] / sum[1]])
}

/// Regularity ratios against a reference variance λ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionRatios {
    pub mode: DiagnosticsMode,
    pub reference: f64,
    /// Largest single-cluster share of Σ_c (Σ|ω|)², in (0, 1].
    pub ratio_22: [f64; 2],
    /// max_c (Σ_{i∈c}|ω_i|)² / λ.
    pub ratio_22_scaled: [f64; 2],
    /// Σ_c Σ_{i,j∈c} A_ij |ω_i ω_j| / λ.
    pub ratio_23: [f64; 2],
}

/// Σ_c Σ_{i,j∈c} A_ij |ω_i ω_j| for each dimension.
pub fn dependent_pair_weight(
    index: &NeighborhoodIndex,
    weights: &[f64],
    dependence: &dyn DependenceIndicator,
) -> Result<[f64; 2]> {
    if weights.len() != index.n() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} observations", weights.len(), index.n())));
    }
    Ok(std::array::from_fn(|d| {
        index
            .clusters(d)
            .iter()
            .map(|c| {
                let mut s = 0.0;
                for &i in c {
                    for &j in c {
                        if dependence.dependent(i, j) {
                            s += (weights[i] * weights[j]).abs();
                        }
                    }
                }
                s
            })
            .sum()
    }))
}

/// Ratios of the cluster weight sums to `reference`. With `dependence` the
/// report is in oracle mode; without it every shared-cluster pair counts.
pub fn assumption_ratios(
    index: &NeighborhoodIndex,
    weights: &[f64],
    reference: f64,
    dependence: Option<&dyn DependenceIndicator>,
) -> Result<AssumptionRatios> {
    if !(reference > 0.0) {
        return Err(Error::NonPositiveReference(reference));
    }
    let max = pair_weight_sums(index, weights, PairWeightMode::MaxClusterL1Squared)?;
    let sum = pair_weight_sums(index, weights, PairWeightMode::SumClusterL1Squared)?;
    let (mode, pairs) = match dependence {
        Some(dep) => (DiagnosticsMode::Oracle, dependent_pair_weight(index, weights, dep)?),
        // every pair inside a cluster shares it, so this is Σ_c (Σ|ω|)²
        None => (DiagnosticsMode::Data, sum),
    };
    Ok(AssumptionRatios {
        mode,
        reference,
        ratio_22: std::array::from_fn(|d| if sum[d] > 0.0 { max[d] / sum[d] } else { 0.0 }),
        ratio_22_scaled: std::array::from_fn(|d| max[d] / reference),
        ratio_23: std::array::from_fn(|d| pairs[d] / reference),
    })
}

/// λ_min(X′X / n) via the Jacobi eigensolver.
pub fn rank_condition(x: &Matrix) -> Result<f64> {
    rank_lambda(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub mode: DiagnosticsMode,
    pub leverage: BTreeMap<String, f64>,
    pub ratio_22: BTreeMap<String, f64>,
    /// Absent when the reference variance is not positive.
    pub ratio_23_upper: Option<BTreeMap<String, f64>>,
    /// The reference λ used for `ratio_23_upper`: Σ_iΣ_{j∈𝒩_i} û_iû_jD̃_iD̃_j.
    pub reference_variance: f64,
    pub rank_lambda: f64,
    pub leverage_threshold: f64,
    pub warnings: Vec<Warning>,
}

fn by_dim(index: &NeighborhoodIndex, v: [f64; 2]) -> BTreeMap<String, f64> {
    index.dim_names().iter().cloned().zip(v).collect()
}

/// Data-mode diagnostics for a fitted regression, weighting by D̃.
pub fn diagnose_regression(
    data: &RegressionData,
    index: &NeighborhoodIndex,
    fit: &InferenceResult,
    leverage_threshold: f64,
) -> Result<DiagnosticsReport> {
    let weights = &fit.d_tilde;
    let leverage = leverage_l(index, weights)?;
    let mut warnings = Vec::new();
    for (d, &l) in leverage.iter().enumerate() {
        if l > leverage_threshold {
            warnings.push(Warning::HighLeverage {
                dimension: index.dim_names()[d].clone(),
                value: l,
                threshold: leverage_threshold,
            });
        }
    }

    let sdd: f64 = weights.iter().map(|v| v * v).sum();
    let reference = fit.sigma2_hat * sdd * sdd;
    let ratio_23_upper = if reference > 0.0 {
        let r = assumption_ratios(index, weights, reference, None)?;
        Some(by_dim(index, r.ratio_23))
    } else {
        warnings.push(Warning::NonPositiveReference { value: reference });
        None
    };

    let rank = rank_condition(&data.design())?;
    if !(rank > RANK_FLOOR) {
        warnings.push(Warning::WeakRank { lambda: rank });
    }

    Ok(DiagnosticsReport {
        mode: DiagnosticsMode::Data,
        leverage: by_dim(index, leverage),
        ratio_22: by_dim(index, leverage),
        ratio_23_upper,
        reference_variance: reference,
        rank_lambda: rank,
        leverage_threshold,
        warnings,
    })
}
