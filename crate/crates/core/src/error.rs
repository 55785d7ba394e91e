use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("observation {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("weights sum to zero")]
    DegenerateWeights,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("singular design: column `{column}` is linearly dependent on the preceding columns")]
    SingularDesign { column: String },

    #[error("near-singular design: smallest eigenvalue of X'X/n is {0:e}")]
    NearSingular(f64),

    #[error("regressor of interest has no variation after partialling out the controls")]
    ZeroVariation,

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("input must be nonnegative, got {0}")]
    NegativeInput(f64),

    #[error("reference variance must be positive, got {0}")]
    NonPositiveReference(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal conditions surfaced alongside a result.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Warning {
    /// The estimated variance is negative; no interval was formed.
    NegativeVariance { value: f64 },
    /// The long-regression and residualized routes disagree.
    FwlIdentityGap { theta_gap: f64, variance_gap: f64 },
    /// Leverage statistic above the configured threshold on one dimension.
    HighLeverage { dimension: String, value: f64, threshold: f64 },
    /// λ_min(X′X/n) is small relative to the rank floor.
    WeakRank { lambda: f64 },
    /// A ratio could not be formed because the reference variance is not positive.
    NonPositiveReference { value: f64 },
}
