//! Replication studies: confidence-interval coverage, variance-ratio
//! consistency across growing grids, and normality of the studentized pivot.
//!
//! Replications run in parallel but every replication reads its own random
//! streams and results are reduced in replication order, so reports do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dgp::{DgpSpec, Simulator};
use crate::error::{Error, Result};
use crate::regression::{fixed_design_inference, InferenceOptions, Z_975};
use crate::variance::{cgm_demeaned_with, cgm_with};

/// E[√R · KS] under the null for large R (mean of the Kolmogorov distribution, √(π/2)·ln 2).
pub const KOLMOGOROV_MEAN: f64 = 0.868_731_160_636_470_8;

/// What each replication estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Target {
    /// The average mean (1/n) Σ E[W_i]; `demeaned` centers Q̂ at the sample mean.
    Mean { demeaned: bool },
    /// θ in Y = θ D + controls + error, with the fixed-design variance.
    RegressionTheta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McOptions {
    pub reps: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
    pub psd_project: bool,
    pub dof_correction: bool,
}

impl McOptions {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self { reps, seed, threads: None, psd_project: false, dof_correction: false }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    fn inference(&self) -> InferenceOptions {
        InferenceOptions { psd_project: self.psd_project, dof_correction: self.dof_correction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub reps: usize,
    pub seed: u64,
    pub target: Target,
    pub n: usize,
    /// None when the process has no noise and an interval is meaningless.
    pub coverage_95: Option<f64>,
    pub covered: usize,
    /// Replications whose variance estimate was negative (counted as not covering).
    pub rejection_flags: usize,
    /// Replications where estimation failed outright (e.g. no variation in D̃).
    pub failures: usize,
    pub degenerate: bool,
    /// Mean of estimated over true variance.
    pub mean_var_ratio: Option<f64>,
    pub var_ratio_sd: Option<f64>,
    /// KS distance from N(0,1) of the pivot standardized by the true variance.
    pub ks_pivot: Option<f64>,
    /// KS distance from N(0,1) of the pivot standardized by the estimated variance.
    pub ks_studentized: Option<f64>,
    /// Typical KS distance of a sample of this size drawn from N(0,1) itself.
    pub ks_sampling_error: Option<f64>,
    pub true_value: f64,
    pub mean_estimate: f64,
    /// Oracle-standardized pivots, one per non-failed replication.
    #[serde(skip)]
    pub pivots: Vec<f64>,
    /// Studentized pivots, one per replication with a positive variance estimate.
    #[serde(skip)]
    pub studentized: Vec<f64>,
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidSpec(format!("cannot start {t} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Sup-distance between the empirical CDF of `samples` and the standard normal CDF.
pub fn ks_statistic(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidSpec("samples contain NaN".into()));
    }
    let normal = Normal::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((k + 1) as f64 / m - f).max(f - k as f64 / m);
    }
    Ok(d)
}

/// Typical KS distance for `reps` draws from the reference distribution itself.
pub fn ks_sampling_error(reps: usize) -> f64 {
    KOLMOGOROV_MEAN / (reps as f64).sqrt()
}

enum Outcome {
    Formed { estimate: f64, pivot: f64, oracle: f64, ratio: f64 },
    Negative { estimate: f64, oracle: f64, ratio: f64 },
    Failed,
}

fn mean_replicate(sim: &Simulator, rep: u64, demeaned: bool, opts: &McOptions, truth: f64) -> Outcome {
    let Ok(draw) = sim.generate(rep) else { return Outcome::Failed };
    let n = sim.index().n() as f64;
    let cgm = opts.inference().cgm();
    let values = draw.sample.values().column(0);
    let estimate = values.iter().sum::<f64>() / n;
    let q = if demeaned {
        cgm_demeaned_with(&draw.sample, sim.index(), cgm).map(|(_, e)| e)
    } else {
        cgm_with(&draw.sample, sim.index(), cgm)
    };
    let Ok(mut q) = q else { return Outcome::Failed };
    if opts.psd_project {
        match crate::variance::psd_project(&q) {
            Ok(p) => q = p,
            Err(_) => return Outcome::Failed,
        }
    }
    let q = q.scalar();
    let true_q = sim.oracle().true_q;
    let ratio = q / true_q;
    let oracle = (estimate - truth) * n / true_q.sqrt();
    if q < 0.0 {
        return Outcome::Negative { estimate, oracle, ratio };
    }
    if q == 0.0 {
        return Outcome::Failed;
    }
    Outcome::Formed { estimate, pivot: (estimate - truth) * n / q.sqrt(), oracle, ratio }
}

fn theta_replicate(sim: &Simulator, rep: u64, opts: &McOptions, theta: f64) -> Outcome {
    let Ok(draw) = sim.generate(rep) else { return Outcome::Failed };
    let Some(data) = draw.regression else { return Outcome::Failed };
    let Ok(fit) = fixed_design_inference(&data, sim.index(), opts.inference()) else { return Outcome::Failed };
    let sdd: f64 = fit.d_tilde.iter().map(|d| d * d).sum();
    let true_var = sim.oracle().weighted_sum_variance(&fit.d_tilde) / (sdd * sdd);
    let ratio = fit.sigma2_hat / true_var;
    let estimate = fit.theta_hat;
    let oracle = (estimate - theta) / true_var.sqrt();
    match fit.sigma_hat {
        None => Outcome::Negative { estimate, oracle, ratio },
        Some(s) if s > 0.0 => Outcome::Formed { estimate, pivot: (estimate - theta) / s, oracle, ratio },
        Some(_) => Outcome::Failed,
    }
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

/// Coverage of nominal 95% intervals for `target` over `opts.reps` replications.
/// The seed in `opts` replaces the one in `spec`.
pub fn run_coverage(spec: &DgpSpec, target: Target, opts: McOptions) -> Result<McReport> {
    if opts.reps == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let sim = Simulator::new(spec.clone().with_seed(opts.seed))?;
    let oracle = sim.oracle();
    let n = sim.index().n();
    let (truth, degenerate) = match target {
        Target::Mean { .. } => (oracle.true_mean.iter().sum::<f64>() / n as f64, !(oracle.true_q > 0.0)),
        Target::RegressionTheta => {
            let design = spec
                .regression
                .as_ref()
                .ok_or_else(|| Error::InvalidSpec("regression target needs a `regression` section".into()))?;
            (design.theta, !(oracle.true_q > 0.0))
        }
    };

    let outcomes: Vec<Outcome> = if degenerate {
        Vec::new()
    } else {
        with_threads(opts.threads, || {
            (0..opts.reps as u64)
                .into_par_iter()
                .map(|rep| match target {
                    Target::Mean { demeaned } => mean_replicate(&sim, rep, demeaned, &opts, truth),
                    Target::RegressionTheta => theta_replicate(&sim, rep, &opts, truth),
                })
                .collect()
        })?
    };

    let mut covered = 0;
    let mut rejection_flags = 0;
    let mut failures = 0;
    let mut pivots = Vec::new();
    let mut studentized = Vec::new();
    let mut ratios = Vec::new();
    let mut estimates = Vec::new();
    for o in &outcomes {
        match *o {
            Outcome::Formed { estimate, pivot, oracle, ratio } => {
                if pivot.abs() <= Z_975 {
                    covered += 1;
                }
                studentized.push(pivot);
                pivots.push(oracle);
                ratios.push(ratio);
                estimates.push(estimate);
            }
            Outcome::Negative { estimate, oracle, ratio } => {
                rejection_flags += 1;
                pivots.push(oracle);
                ratios.push(ratio);
                estimates.push(estimate);
            }
            Outcome::Failed => failures += 1,
        }
    }
    let (mean_var_ratio, var_ratio_sd) = mean_sd(&ratios);
    let ks = |v: &[f64]| if v.len() >= 2 { ks_statistic(v).map(Some) } else { Ok(None) };
    let ks_pivot = ks(&pivots)?;
    let ks_studentized = ks(&studentized)?;
    Ok(McReport {
        reps: opts.reps,
        seed: opts.seed,
        target,
        n,
        coverage_95: (!degenerate).then(|| covered as f64 / opts.reps as f64),
        covered,
        rejection_flags,
        failures,
        degenerate,
        mean_var_ratio,
        var_ratio_sd,
        ks_sampling_error: ks_pivot.map(|_| ks_sampling_error(pivots.len())),
        ks_pivot,
        ks_studentized,
        true_value: truth,
        mean_estimate: mean_sd(&estimates).0.unwrap_or(f64::NAN),
        pivots,
        studentized,
    })
}

/// Mean, standard deviation and standard error of a ratio across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioStats {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl RatioStats {
    fn of(v: &[f64]) -> Self {
        let (mean, sd) = mean_sd(v);
        let (mean, sd) = (mean.unwrap_or(f64::NAN), sd.unwrap_or(0.0));
        Self { mean, sd, se: sd / (v.len() as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyPoint {
    pub m: usize,
    pub n: usize,
    pub true_q: f64,
    /// Σ_iΣ_{j∈𝒩_i} E[W_i]E[W_j], the expected gap of the uncentered estimator.
    pub bias_term: f64,
    /// Q̂ around zero.
    pub raw: RatioStats,
    /// Q̂ around the sample mean.
    pub demeaned: RatioStats,
    /// Q̂ around the true means (simulation only).
    pub centered: RatioStats,
    /// |mean raw ratio − 1|.
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub reps: usize,
    pub seed: u64,
    pub trace: Vec<ConsistencyPoint>,
    /// Raw-ratio error nonincreasing along the sweep, up to 2 combined standard errors per step.
    pub monotone: bool,
    pub final_abs_error: f64,
}

/// Q̂/Q ratios on grids of increasing size.
pub fn run_consistency(spec: &DgpSpec, ms: &[usize], opts: McOptions) -> Result<ConsistencyReport> {
    if opts.reps < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: opts.reps });
    }
    let mut trace = Vec::with_capacity(ms.len());
    for &m in ms {
        let sim = Simulator::new(spec.clone().with_m(m).with_seed(opts.seed))?;
        let oracle = sim.oracle();
        if !(oracle.true_q > 0.0) {
            return Err(Error::InvalidSpec(format!("Var(Σ W_i) is zero at size {m}")));
        }
        let cgm = opts.inference().cgm();
        let ratios: Vec<Result<[f64; 3]>> = with_threads(opts.threads, || {
            (0..opts.reps as u64)
                .into_par_iter()
                .map(|rep| {
                    let draw = sim.generate(rep)?;
                    let raw = cgm_with(&draw.sample, sim.index(), cgm)?.scalar();
                    let (_, dm) = cgm_demeaned_with(&draw.sample, sim.index(), cgm)?;
                    let w = draw.sample.values().column(0);
                    let centered: Vec<f64> = w.iter().zip(&oracle.true_mean).map(|(a, b)| a - b).collect();
                    let cs = crate::cluster::WeightedSample::scalar(centered, draw.sample.weights().to_vec())?;
                    let c = cgm_with(&cs, sim.index(), cgm)?.scalar();
                    let q = oracle.true_q;
                    Ok([raw / q, dm.scalar() / q, c / q])
                })
                .collect()
        })?;
        let ratios: Vec<[f64; 3]> = ratios.into_iter().collect::<Result<_>>()?;
        let col = |k: usize| RatioStats::of(&ratios.iter().map(|r| r[k]).collect::<Vec<_>>());
        let raw = col(0);
        trace.push(ConsistencyPoint {
            m,
            n: sim.index().n(),
            true_q: oracle.true_q,
            bias_term: oracle.true_bias_term(),
            raw,
            demeaned: col(1),
            centered: col(2),
            abs_error: (raw.mean - 1.0).abs(),
        });
    }
    let monotone = trace.windows(2).all(|w| w[1].abs_error - w[0].abs_error <= 2.0 * w[0].raw.se.hypot(w[1].raw.se));
    let final_abs_error = trace.last().map_or(f64::NAN, |p| p.abs_error);
    Ok(ConsistencyReport { reps: opts.reps, seed: opts.seed, trace, monotone, final_abs_error })
}
