//! Data-generating processes with known ground truth.
//!
//! Every variant is built from independent centered components: a G-cluster
//! effect α_g, an H-cluster effect γ_h and an idiosyncratic ε_i, each with its
//! own distribution family and per-cluster scale schedule. Because the
//! components are independent, the variance of the weighted sum, the third
//! moments and the variance of the pair-product sum all have closed forms,
//! collected in [`MomentOracle`].
//!
//! Random streams are counter based: component `c` of replication `r` under
//! seed `s` always reads the ChaCha8 stream keyed by `(s, c)` at stream id
//! `r`, so a replication can be regenerated in isolation and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cluster::{build_index, ClusterScheme, NeighborhoodIndex, WeightedSample};
use crate::diagnostics::DependenceIndicator;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regression::{intercept, RegressionData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// W_i = α_g + γ_h + ε_i.
    AdditiveRe,
    /// W_i = α_g γ_h + ε_i; non-normal limit.
    InteractiveChaos,
    /// W_i = ε_i, clustered on two dimensions anyway.
    IidConservative,
    /// Repeated three-observation chains with means (1, −1, 1) plus additive noise.
    NonzeroMeanTriple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[default]
    Gaussian,
    /// σ (E − 1) with E ~ Exp(1): skewed, third central moment 2σ³.
    CenteredExponential,
    /// ±σ with equal probability.
    Rademacher,
}

impl Family {
    fn draw<R: Rng>(self, rng: &mut R, scale: f64) -> f64 {
        match self {
            Family::Gaussian => scale * rng.sample::<f64, _>(StandardNormal),
            Family::CenteredExponential => scale * (rng.sample::<f64, _>(Exp1) - 1.0),
            Family::Rademacher => {
                if rng.random::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
        }
    }

    /// (variance, third cumulant, fourth cumulant) at scale σ.
    fn cumulants(self, scale: f64) -> Moments {
        let v = scale * scale;
        match self {
            Family::Gaussian => Moments { var: v, k3: 0.0, k4: 0.0 },
            Family::CenteredExponential => Moments { var: v, k3: 2.0 * v * scale, k4: 6.0 * v * v },
            Family::Rademacher => Moments { var: v, k3: 0.0, k4: -2.0 * v * v },
        }
    }
}

/// Per-cluster standard deviations σ(c), c = 0..C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    Constant {
        sigma: f64,
    },
    /// σ(c) = base · (1 + c/C).
    Linear {
        base: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Linear { base: 1.0 }
    }
}

impl Schedule {
    fn sigma(&self, c: usize, count: usize) -> f64 {
        match self {
            Schedule::Constant { sigma } => *sigma,
            Schedule::Linear { base } => base * (1.0 + c as f64 / count as f64),
            Schedule::Explicit { values } => values[c],
        }
    }

    fn validate(&self, count: usize, what: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("{what}: {msg}")));
        match self {
            Schedule::Constant { sigma } if !(*sigma >= 0.0) || !sigma.is_finite() => {
                bad(format!("scale must be nonnegative, got {sigma}"))
            }
            Schedule::Linear { base } if !(*base >= 0.0) || !base.is_finite() => {
                bad(format!("base scale must be nonnegative, got {base}"))
            }
            Schedule::Explicit { values } if values.len() != count => {
                bad(format!("{} scales for {count} clusters", values.len()))
            }
            Schedule::Explicit { values } if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => {
                bad("scales must be nonnegative".into())
            }
            _ => Ok(()),
        }
    }

    pub fn constant(sigma: f64) -> Self {
        Schedule::Constant { sigma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Component {
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub schedule: Schedule,
}

impl Component {
    pub fn new(family: Family, schedule: Schedule) -> Self {
        Self { family, schedule }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self::new(Family::Gaussian, Schedule::constant(sigma))
    }

    pub fn zero() -> Self {
        Self::gaussian(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Grid {
    /// M × M clusters with `cell_size` observations per intersection.
    Balanced {
        m: usize,
        #[serde(default = "one")]
        cell_size: usize,
    },
    /// `copies` disjoint three-observation chains (G = [0,0,1], H = [0,1,1]).
    Triples {
        copies: usize,
    },
    Explicit {
        g: Vec<usize>,
        h: Vec<usize>,
    },
}

fn one() -> usize {
    1
}

/// Linear model layered on top of the error process:
/// Y_i = θ D_i + β₀ + W_i with D_i = a_g + b_h + e_i (Gaussian parts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionDesign {
    #[serde(default = "unit")]
    pub theta: f64,
    #[serde(default)]
    pub intercept: f64,
    /// Scale of the G-cluster part of D.
    #[serde(default = "unit")]
    pub d_alpha: f64,
    /// Scale of the H-cluster part of D.
    #[serde(default = "unit")]
    pub d_gamma: f64,
    /// Scale of the idiosyncratic part of D.
    #[serde(default = "unit")]
    pub d_eps: f64,
    /// Draw D once per seed (true) or afresh in every replication (false).
    #[serde(default = "yes")]
    pub fixed: bool,
    /// Include a constant among the controls when fitting.
    #[serde(default = "yes")]
    pub fit_intercept: bool,
}

fn unit() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Default for RegressionDesign {
    fn default() -> Self {
        Self { theta: 1.0, intercept: 0.0, d_alpha: 1.0, d_gamma: 1.0, d_eps: 1.0, fixed: true, fit_intercept: true }
    }
}

/// Declarative simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub variant: Variant,
    pub grid: Grid,
    #[serde(default)]
    pub alpha: Component,
    #[serde(default)]
    pub gamma: Component,
    #[serde(default)]
    pub epsilon: Component,
    #[serde(default)]
    pub regression: Option<RegressionDesign>,
    #[serde(default)]
    pub seed: u64,
}

impl DgpSpec {
    /// Balanced M × M grid, N_gh = 1, with linearly heterogeneous Gaussian scales.
    pub fn new(variant: Variant, grid: Grid) -> Self {
        Self {
            variant,
            grid,
            alpha: Component::default(),
            gamma: Component::default(),
            epsilon: Component::default(),
            regression: None,
            seed: 0,
        }
    }

    pub fn with_components(mut self, alpha: Component, gamma: Component, epsilon: Component) -> Self {
        self.alpha = alpha;
        self.gamma = gamma;
        self.epsilon = epsilon;
        self
    }

    pub fn with_regression(mut self, design: RegressionDesign) -> Self {
        self.regression = Some(design);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Same process at size `m`: an M × M balanced grid, or `m` copies of the triple.
    pub fn with_m(mut self, m: usize) -> Self {
        match self.grid {
            Grid::Balanced { cell_size, .. } => self.grid = Grid::Balanced { m, cell_size },
            Grid::Triples { .. } => self.grid = Grid::Triples { copies: m },
            Grid::Explicit { .. } => {}
        }
        self
    }

    pub fn scheme(&self) -> Result<ClusterScheme> {
        let scheme = match &self.grid {
            Grid::Balanced { m, cell_size } => ClusterScheme::balanced_grid(*m, *m, *cell_size),
            Grid::Triples { copies } => {
                if *copies == 0 {
                    return Err(Error::InvalidSpec("need at least one triple".into()));
                }
                let g: Vec<usize> = (0..*copies).flat_map(|b| [2 * b, 2 * b, 2 * b + 1]).collect();
                let h: Vec<usize> = (0..*copies).flat_map(|b| [2 * b, 2 * b + 1, 2 * b + 1]).collect();
                ClusterScheme::two_way(&g, &h)
            }
            Grid::Explicit { g, h } => ClusterScheme::two_way(g, h),
        };
        scheme.map_err(|e| Error::InvalidSpec(format!("invalid grid: {e}")))
    }

    fn validate(&self, index: &NeighborhoodIndex) -> Result<()> {
        self.alpha.schedule.validate(index.clusters(0).len(), "alpha")?;
        self.gamma.schedule.validate(index.clusters(1).len(), "gamma")?;
        self.epsilon.schedule.validate(index.n(), "epsilon")?;
        if self.variant == Variant::NonzeroMeanTriple && !index.n().is_multiple_of(3) {
            return Err(Error::InvalidSpec("nonzero-mean-triple needs a multiple of three observations".into()));
        }
        if let Some(r) = &self.regression {
            if self.variant == Variant::NonzeroMeanTriple {
                return Err(Error::InvalidSpec("regression errors must have mean zero".into()));
            }
            if [r.theta, r.intercept, r.d_alpha, r.d_gamma, r.d_eps].iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec("regression parameters must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Moments {
    var: f64,
    k3: f64,
    k4: f64,
}

/// Exact moments of a [`DgpSpec`] for unit weights.
#[derive(Debug, Clone)]
pub struct MomentOracle {
    variant: Variant,
    index: NeighborhoodIndex,
    omega: Vec<f64>,
    alpha: Vec<Moments>,
    gamma: Vec<Moments>,
    eps: Vec<Moments>,
    /// E[W_i].
    pub true_mean: Vec<f64>,
    /// Var(Σ ω_i W_i).
    pub true_q: f64,
}

impl MomentOracle {
    fn new(spec: &DgpSpec, index: NeighborhoodIndex) -> Self {
        let (cg, ch, n) = (index.clusters(0).len(), index.clusters(1).len(), index.n());
        let moments = |comp: &Component, count: usize, active: bool| -> Vec<Moments> {
            (0..count)
                .map(|c| if active { comp.family.cumulants(comp.schedule.sigma(c, count)) } else { Moments::default() })
                .collect()
        };
        let clustered = spec.variant != Variant::IidConservative;
        let alpha = moments(&spec.alpha, cg, clustered);
        let gamma = moments(&spec.gamma, ch, clustered);
        let eps = moments(&spec.epsilon, n, true);
        let true_mean = match spec.variant {
            Variant::NonzeroMeanTriple => (0..n).map(|i| if i % 3 == 1 { -1.0 } else { 1.0 }).collect(),
            _ => vec![0.0; n],
        };
        let omega = vec![1.0; n];

        let mut oracle = Self { variant: spec.variant, index, omega, alpha, gamma, eps, true_mean, true_q: 0.0 };
        oracle.true_q = oracle.weighted_sum_variance(&oracle.omega);
        oracle
    }

    /// Var(Σ_i w_i W_i).
    pub fn weighted_sum_variance(&self, w: &[f64]) -> f64 {
        let idx = &self.index;
        let group_sum = |members: &[usize]| members.iter().map(|&i| w[i]).sum::<f64>();
        let eps_part: f64 = (0..idx.n()).map(|i| self.eps[i].var * w[i] * w[i]).sum();
        match self.variant {
            Variant::InteractiveChaos => {
                idx.cells()
                    .iter()
                    .map(|c| self.alpha[c.g].var * self.gamma[c.h].var * group_sum(&c.members).powi(2))
                    .sum::<f64>()
                    + eps_part
            }
            _ => {
                let part = |d: usize, comps: &[Moments]| -> f64 {
                    idx.clusters(d).iter().enumerate().map(|(c, m)| comps[c].var * group_sum(m).powi(2)).sum()
                };
                part(0, &self.alpha) + part(1, &self.gamma) + eps_part
            }
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn index(&self) -> &NeighborhoodIndex {
        &self.index
    }

    fn g_active(&self, i: usize) -> bool {
        self.alpha[self.index.labels(0)[i]].var > 0.0
    }

    fn h_active(&self, i: usize) -> bool {
        self.gamma[self.index.labels(1)[i]].var > 0.0
    }

    /// A_ij: whether W_i and W_j share a random component.
    pub fn true_a(&self, i: usize, j: usize) -> bool {
        if i == j {
            return true;
        }
        let (g, h) = (self.index.labels(0), self.index.labels(1));
        match self.variant {
            Variant::InteractiveChaos => {
                // α_g γ_h and α_g γ_h' share α_g, and are dependent only if all scales are live
                let both = |a: usize| self.g_active(a) && self.h_active(a);
                (g[i] == g[j] || h[i] == h[j]) && both(i) && both(j)
            }
            _ => (g[i] == g[j] && self.g_active(i)) || (h[i] == h[j] && self.h_active(i)),
        }
    }

    /// Σ_i Σ_{j∈𝒩_i} E[W_i] E[W_j] over the cluster neighborhoods.
    pub fn true_bias_term(&self) -> f64 {
        let mu = &self.true_mean;
        (0..self.index.n())
            .map(|i| {
                let mut s = 0.0;
                self.index.for_each_neighbor(i, |j| s += self.omega[j] * mu[j]);
                self.omega[i] * mu[i] * s
            })
            .sum()
    }

    /// E[X_i X_j X_k] for the centered, weighted X_i = ω_i (W_i − E W_i).
    pub fn third_moment(&self, i: usize, j: usize, k: usize) -> f64 {
        let (g, h) = (self.index.labels(0), self.index.labels(1));
        let w = self.omega[i] * self.omega[j] * self.omega[k];
        let same_g = g[i] == g[j] && g[j] == g[k];
        let same_h = h[i] == h[j] && h[j] == h[k];
        let mut m = if i == j && j == k { self.eps[i].k3 } else { 0.0 };
        match self.variant {
            Variant::InteractiveChaos => {
                if same_g && same_h {
                    m += self.alpha[g[i]].k3 * self.gamma[h[i]].k3;
                }
            }
            _ => {
                if same_g {
                    m += self.alpha[g[i]].k3;
                }
                if same_h {
                    m += self.gamma[h[i]].k3;
                }
            }
        }
        w * m
    }

    /// Σ_i |Σ_{j,k∈𝒩*_i} E[X_i X_j X_k]| over the true dependency neighborhoods 𝒩*_i.
    pub fn third_moment_sum(&self) -> f64 {
        let idx = &self.index;
        let sums =
            |d: usize| -> Vec<f64> { idx.clusters(d).iter().map(|m| m.iter().map(|&i| self.omega[i]).sum()).collect() };
        let (gs, hs) = (sums(0), sums(1));
        let cell: Vec<f64> = idx.cells().iter().map(|c| c.members.iter().map(|&i| self.omega[i]).sum()).collect();
        let cell_pos: std::collections::HashMap<(usize, usize), usize> =
            idx.cells().iter().enumerate().map(|(k, c)| ((c.g, c.h), k)).collect();
        (0..idx.n())
            .map(|i| {
                let (g, h) = (idx.labels(0)[i], idx.labels(1)[i]);
                let wi = self.omega[i];
                let mut inner = self.eps[i].k3 * wi * wi;
                match self.variant {
                    Variant::InteractiveChaos => {
                        let c = cell[cell_pos[&(g, h)]];
                        inner += self.alpha[g].k3 * self.gamma[h].k3 * c * c;
                    }
                    _ => {
                        inner += self.alpha[g].k3 * gs[g] * gs[g] + self.gamma[h].k3 * hs[h] * hs[h];
                    }
                }
                (wi * inner).abs()
            })
            .sum()
    }

    /// Var(Σ_i Σ_{j∈𝒩*_i} X_i X_j) in closed form, available for the additive
    /// variants: 2 tr((AΣ)²) plus Σ_c κ₄(c) B_cc² over the independent components.
    pub fn pair_product_variance(&self) -> Result<f64> {
        if self.variant == Variant::InteractiveChaos {
            return Err(Error::Unsupported("no closed-form pair-product variance for the interactive model".into()));
        }
        let idx = &self.index;
        let n = idx.n();
        let (g, h) = (idx.labels(0), idx.labels(1));
        let om = &self.omega;
        let cov = |i: usize, j: usize| -> f64 {
            let mut c = 0.0;
            if g[i] == g[j] {
                c += self.alpha[g[i]].var;
            }
            if h[i] == h[j] {
                c += self.gamma[h[i]].var;
            }
            if i == j {
                c += self.eps[i].var;
            }
            om[i] * om[j] * c
        };
        let neighbors = |i: usize| -> Vec<usize> {
            let mut v = Vec::new();
            idx.for_each_neighbor(i, |j| {
                if self.true_a(i, j) {
                    v.push(j);
                }
            });
            v
        };
        let nbrs: Vec<Vec<usize>> = (0..n).map(neighbors).collect();

        // P = A Σ, dense; Σ_jk is zero outside cluster neighborhoods
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            let row = &mut p[i * n..(i + 1) * n];
            for &j in &nbrs[i] {
                idx.for_each_neighbor(j, |k| row[k] += cov(j, k));
            }
        }
        let mut trace = 0.0;
        for i in 0..n {
            for k in 0..n {
                trace += p[i * n + k] * p[k * n + i];
            }
        }

        let mut kappa = 0.0;
        for (d, comps) in [(0, &self.alpha), (1, &self.gamma)] {
            for (c, members) in idx.clusters(d).iter().enumerate() {
                let s: f64 = members.iter().map(|&i| om[i]).sum();
                kappa += comps[c].k4 * s.powi(4);
            }
        }
        for i in 0..n {
            kappa += self.eps[i].k4 * om[i].powi(4);
        }
        Ok(2.0 * trace + kappa)
    }

    /// S_i = Σ_{j∈𝒩*_i} x_j for every i, using cluster sums.
    pub fn neighborhood_sums(&self, x: &[f64]) -> Vec<f64> {
        let idx = &self.index;
        let sums = |d: usize| -> Vec<f64> { idx.clusters(d).iter().map(|m| m.iter().map(|&i| x[i]).sum()).collect() };
        let (gs, hs) = (sums(0), sums(1));
        let mut cell_sum = vec![0.0; idx.n()];
        for c in idx.cells() {
            let s: f64 = c.members.iter().map(|&i| x[i]).sum();
            for &i in &c.members {
                cell_sum[i] = s;
            }
        }
        let all_live = self.alpha.iter().chain(&self.gamma).all(|m| m.var > 0.0);
        let none_live = self.alpha.iter().chain(&self.gamma).all(|m| m.var == 0.0);
        (0..idx.n())
            .map(|i| {
                if all_live {
                    gs[idx.labels(0)[i]] + hs[idx.labels(1)[i]] - cell_sum[i]
                } else if none_live {
                    x[i]
                } else {
                    let mut s = 0.0;
                    idx.for_each_neighbor(i, |j| {
                        if self.true_a(i, j) {
                            s += x[j];
                        }
                    });
                    s
                }
            })
            .collect()
    }
}

impl DependenceIndicator for MomentOracle {
    fn dependent(&self, i: usize, j: usize) -> bool {
        self.true_a(i, j)
    }
}

/// Component ids for stream derivation.
const ALPHA: u64 = 1;
const GAMMA: u64 = 2;
const EPS: u64 = 3;
const DESIGN: u64 = 4;

/// The ChaCha8 stream for `component` of `replication`.
pub fn stream(seed: u64, replication: u64, component: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&component.to_le_bytes());
    key[16..24].copy_from_slice(b"mwclust\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replication);
    rng
}

/// One replication's data.
#[derive(Debug, Clone)]
pub struct Draw {
    pub sample: WeightedSample,
    pub regression: Option<RegressionData>,
}

/// A validated spec together with its index, oracle and (if fixed) design.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: DgpSpec,
    scheme: ClusterScheme,
    oracle: MomentOracle,
    fixed_d: Option<Vec<f64>>,
}

impl Simulator {
    pub fn new(spec: DgpSpec) -> Result<Self> {
        let scheme = spec.scheme()?;
        let index = build_index(&scheme)?;
        spec.validate(&index)?;
        let oracle = MomentOracle::new(&spec, index);
        let mut sim = Self { spec, scheme, oracle, fixed_d: None };
        if sim.spec.regression.as_ref().is_some_and(|r| r.fixed) {
            sim.fixed_d = Some(sim.draw_regressor(0));
        }
        Ok(sim)
    }

    pub fn spec(&self) -> &DgpSpec {
        &self.spec
    }

    pub fn scheme(&self) -> &ClusterScheme {
        &self.scheme
    }

    pub fn index(&self) -> &NeighborhoodIndex {
        &self.oracle.index
    }

    pub fn oracle(&self) -> &MomentOracle {
        &self.oracle
    }

    /// The outcome W for replication `rep`.
    pub fn draw_values(&self, rep: u64) -> Vec<f64> {
        let spec = &self.spec;
        let idx = self.index();
        let (cg, ch, n) = (idx.clusters(0).len(), idx.clusters(1).len(), idx.n());
        let seed = spec.seed;

        let draw_block = |comp: &Component, count: usize, id: u64| -> Vec<f64> {
            let mut rng = stream(seed, rep, id);
            (0..count).map(|c| comp.family.draw(&mut rng, comp.schedule.sigma(c, count))).collect()
        };
        let eps = draw_block(&spec.epsilon, n, EPS);
        let (g, h) = (idx.labels(0), idx.labels(1));
        match spec.variant {
            Variant::IidConservative => eps,
            Variant::InteractiveChaos => {
                let a = draw_block(&spec.alpha, cg, ALPHA);
                let b = draw_block(&spec.gamma, ch, GAMMA);
                (0..n).map(|i| a[g[i]] * b[h[i]] + eps[i]).collect()
            }
            Variant::AdditiveRe | Variant::NonzeroMeanTriple => {
                let a = draw_block(&spec.alpha, cg, ALPHA);
                let b = draw_block(&spec.gamma, ch, GAMMA);
                (0..n).map(|i| self.oracle.true_mean[i] + a[g[i]] + b[h[i]] + eps[i]).collect()
            }
        }
    }

    fn draw_regressor(&self, rep: u64) -> Vec<f64> {
        let design = self.spec.regression.clone().unwrap_or_default();
        let idx = self.index();
        let mut rng = stream(self.spec.seed, rep, DESIGN);
        let mut normals = |count: usize, scale: f64| -> Vec<f64> {
            (0..count).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let a = normals(idx.clusters(0).len(), design.d_alpha);
        let b = normals(idx.clusters(1).len(), design.d_gamma);
        let e = normals(idx.n(), design.d_eps);
        let (g, h) = (idx.labels(0), idx.labels(1));
        (0..idx.n()).map(|i| a[g[i]] + b[h[i]] + e[i]).collect()
    }

    pub fn generate(&self, rep: u64) -> Result<Draw> {
        let values = self.draw_values(rep);
        let n = values.len();
        let regression = match &self.spec.regression {
            None => None,
            Some(design) => {
                let d = match &self.fixed_d {
                    Some(d) => d.clone(),
                    None => self.draw_regressor(rep),
                };
                let y: Vec<f64> = (0..n).map(|i| design.theta * d[i] + design.intercept + values[i]).collect();
                let controls = if design.fit_intercept { intercept(n) } else { Matrix::zeros(n, 0) };
                Some(RegressionData::new(y, d, controls, self.scheme.clone())?)
            }
        };
        let sample = WeightedSample::new(Matrix::from_row_major(n, 1, values)?, vec![1.0; n])?;
        Ok(Draw { sample, regression })
    }
}

/// Draws replication `rep` of `spec`, returning the sample, its cluster scheme and the oracle.
pub fn generate(spec: &DgpSpec, rep: u64) -> Result<(WeightedSample, ClusterScheme, MomentOracle)> {
    let sim = Simulator::new(spec.clone())?;
    let draw = sim.generate(rep)?;
    Ok((draw.sample, sim.scheme, sim.oracle))
}

/// Σ_i Σ_{j∈𝒩_i} E[W_i] E[W_j].
pub fn true_bias_term(oracle: &MomentOracle) -> f64 {
    oracle.true_bias_term()
}
