//! Non-asymptotic normal-approximation bounds for simulated designs.
//!
//! For centered X_i with dependency neighborhoods 𝒩*_i and σ² = Var(Σ X_i),
//!
//! d_W ≤ σ⁻³ Σ_i |Σ_{j,k∈𝒩*_i} E[X_i X_j X_k]| + √2/(√π σ²) · √Var(Σ_i Σ_{j∈𝒩*_i} X_i X_j),
//!
//! and d_K ≤ (2/π)^{1/4} √d_W. The neighborhoods are the true dependency sets
//! of the process (observations sharing a live random component), which is
//! what makes the bound available only in simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{DgpSpec, MomentOracle, Simulator};
use crate::error::{Error, Result};

pub const DEFAULT_BOUND_REPS: usize = 10_000;

/// Replications per parallel work unit; fixed so results do not depend on the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BoundMethod {
    Analytic,
    MonteCarlo { reps: usize },
}

impl BoundMethod {
    pub fn monte_carlo() -> Self {
        BoundMethod::MonteCarlo { reps: DEFAULT_BOUND_REPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub term_third: f64,
    pub term_var: f64,
    pub d_w_bound: f64,
    pub d_k_bound: f64,
    /// "analytic" or "monte-carlo".
    pub method: &'static str,
    /// Standard error of `d_w_bound` (Monte Carlo only).
    pub mc_se: Option<f64>,
    pub term_third_se: Option<f64>,
    pub term_var_se: Option<f64>,
    pub reps: Option<usize>,
    /// σ² = Var(Σ X_i).
    pub sigma2: f64,
    pub n: usize,
}

/// (2/π)^{1/4} √d_W.
pub fn kolmogorov_bound(d_w: f64) -> Result<f64> {
    if !(d_w >= 0.0) {
        return Err(Error::NegativeInput(d_w));
    }
    Ok((2.0 / std::f64::consts::PI).powf(0.25) * d_w.sqrt())
}

fn var_coefficient() -> f64 {
    std::f64::consts::SQRT_2 / std::f64::consts::PI.sqrt()
}

fn report(
    oracle: &MomentOracle,
    third_sum: f64,
    pair_var: f64,
    method: &'static str,
    se: Option<(f64, f64, usize)>,
) -> Result<BoundReport> {
    let s2 = oracle.true_q;
    let term_third = third_sum / s2.powf(1.5);
    let term_var = var_coefficient() * pair_var.max(0.0).sqrt() / s2;
    let d_w = term_third + term_var;
    let (term_third_se, term_var_se, reps) = match se {
        Some((a, b, r)) => (Some(a / s2.powf(1.5)), Some(var_coefficient() * b / s2), Some(r)),
        None => (None, None, None),
    };
    Ok(BoundReport {
        term_third,
        term_var,
        d_w_bound: d_w,
        d_k_bound: kolmogorov_bound(d_w)?,
        method,
        mc_se: term_third_se.zip(term_var_se).map(|(a, b)| a.hypot(b)),
        term_third_se,
        term_var_se,
        reps,
        sigma2: s2,
        n: oracle.index().n(),
    })
}

/// Evaluates the Wasserstein bound for the process described by `spec`.
pub fn wasserstein_bound(spec: &DgpSpec, method: BoundMethod) -> Result<BoundReport> {
    let sim = Simulator::new(spec.clone())?;
    wasserstein_bound_for(&sim, method)
}

pub fn wasserstein_bound_for(sim: &Simulator, method: BoundMethod) -> Result<BoundReport> {
    let oracle = sim.oracle();
    if !(oracle.true_q > 0.0) {
        return Err(Error::InvalidSpec("Var(Σ X_i) is zero; the bound is undefined".into()));
    }
    match method {
        BoundMethod::Analytic => {
            let var = oracle.pair_product_variance()?;
            report(oracle, oracle.third_moment_sum(), var, "analytic", None)
        }
        BoundMethod::MonteCarlo { reps } => monte_carlo(sim, reps),
    }
}

/// Centered X, per-observation X_i S_i², and the pair sum Σ_i X_i S_i for one replication.
fn replicate(sim: &Simulator, rep: u64) -> (Vec<f64>, f64) {
    let oracle = sim.oracle();
    let x: Vec<f64> = sim.draw_values(rep).iter().zip(&oracle.true_mean).map(|(w, m)| w - m).collect();
    let s = oracle.neighborhood_sums(&x);
    let cubic = x.iter().zip(&s).map(|(xi, si)| xi * si * si).collect();
    let pair = x.iter().zip(&s).map(|(xi, si)| xi * si).sum();
    (cubic, pair)
}

fn chunks(reps: usize) -> Vec<std::ops::Range<usize>> {
    (0..reps.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(reps)).collect()
}

fn monte_carlo(sim: &Simulator, reps: usize) -> Result<BoundReport> {
    if reps < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: reps });
    }
    let n = sim.index().n();
    let r = reps as f64;

    // pass 1: per-observation means of X_i S_i², and the pair sums
    let partial: Vec<(Vec<f64>, Vec<f64>)> = chunks(reps)
        .into_par_iter()
        .map(|range| {
            let mut acc = vec![0.0; n];
            let mut pairs = Vec::with_capacity(range.len());
            for rep in range {
                let (cubic, pair) = replicate(sim, rep as u64);
                acc.iter_mut().zip(&cubic).for_each(|(a, c)| *a += c);
                pairs.push(pair);
            }
            (acc, pairs)
        })
        .collect();
    let mut means = vec![0.0; n];
    let mut pairs = Vec::with_capacity(reps);
    for (acc, p) in partial {
        means.iter_mut().zip(&acc).for_each(|(m, a)| *m += a);
        pairs.extend(p);
    }
    means.iter_mut().for_each(|m| *m /= r);
    // Σ|m̂_i| overstates Σ|m_i| when the m_i are near zero, so this term errs conservative
    let third_sum: f64 = means.iter().map(|m| m.abs()).sum();

    // pass 2: replay the streams to get the spread of Σ_i sign(m_i) X_i S_i²
    let signs: Vec<f64> = means.iter().map(|m| m.signum()).collect();
    let signed: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| replicate(sim, rep as u64).0.iter().zip(&signs).map(|(c, s)| c * s).sum())
        .collect();
    let third_se = sample_variance(&signed).sqrt() / r.sqrt();

    let pair_mean = pairs.iter().sum::<f64>() / r;
    let centered: Vec<f64> = pairs.iter().map(|p| p - pair_mean).collect();
    let var = centered.iter().map(|c| c * c).sum::<f64>() / (r - 1.0);
    let m4 = centered.iter().map(|c| c.powi(4)).sum::<f64>() / r;
    // delta method for √(sample variance)
    let var_se = ((m4 - var * var).max(0.0) / r).sqrt();
    let sd_se = if var > 0.0 { var_se / (2.0 * var.sqrt()) } else { 0.0 };

    report(sim.oracle(), third_sum, var, "monte-carlo", Some((third_se, sd_se, reps)))
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// The bound evaluated on balanced grids of increasing size.
pub fn decay_trace(spec: &DgpSpec, ms: &[usize], method: BoundMethod) -> Result<Vec<(usize, BoundReport)>> {
    ms.iter().map(|&m| Ok((m, wasserstein_bound(&spec.clone().with_m(m), method)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{Component, Grid, Variant};
    use approx::assert_relative_eq;

    #[test]
    fn kolmogorov_examples() {
        assert_eq!(kolmogorov_bound(0.0).unwrap(), 0.0);
        assert_relative_eq!(kolmogorov_bound(1.0).unwrap(), 0.8932438417380023, epsilon = 1e-15);
        assert!(kolmogorov_bound(0.2).unwrap() < kolmogorov_bound(0.3).unwrap());
        assert_eq!(kolmogorov_bound(-1e-3), Err(Error::NegativeInput(-1e-3)));
        assert!(kolmogorov_bound(f64::NAN).is_err());
    }

    #[test]
    fn gaussian_additive_third_term_vanishes() {
        let spec = DgpSpec::new(Variant::AdditiveRe, Grid::Balanced { m: 6, cell_size: 1 });
        let r = wasserstein_bound(&spec, BoundMethod::Analytic).unwrap();
        assert_eq!(r.term_third, 0.0);
        assert!(r.term_var > 0.0);
        assert_relative_eq!(r.d_k_bound, kolmogorov_bound(r.d_w_bound).unwrap());
    }

    #[test]
    fn iid_term_var_closed_form() {
        let m = 5;
        let spec = DgpSpec::new(Variant::IidConservative, Grid::Balanced { m, cell_size: 1 }).with_components(
            Component::zero(),
            Component::zero(),
            Component::gaussian(1.0),
        );
        let r = wasserstein_bound(&spec, BoundMethod::Analytic).unwrap();
        let n = (m * m) as f64;
        assert_relative_eq!(r.term_var, (2.0 / std::f64::consts::PI).sqrt() * (2.0 * n).sqrt() / n, epsilon = 1e-14);
    }

    #[test]
    fn zero_variance_rejected() {
        let spec = DgpSpec::new(Variant::AdditiveRe, Grid::Balanced { m: 3, cell_size: 1 }).with_components(
            Component::zero(),
            Component::zero(),
            Component::zero(),
        );
        assert!(matches!(wasserstein_bound(&spec, BoundMethod::Analytic), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn interactive_analytic_unsupported() {
        let spec = DgpSpec::new(Variant::InteractiveChaos, Grid::Balanced { m: 3, cell_size: 1 });
        assert!(matches!(wasserstein_bound(&spec, BoundMethod::Analytic), Err(Error::Unsupported(_))));
        let r = wasserstein_bound(&spec, BoundMethod::MonteCarlo { reps: 200 }).unwrap();
        assert!(r.mc_se.unwrap() > 0.0);
    }
}
