//! OLS with Frisch–Waugh–Lovell residualization and cluster-robust inference
//! on the coefficient of interest.
//!
//! Two inference routes are offered: a fixed-design route that clusters the
//! residualized score û_i D̃_i, and a stochastic-design route that builds the
//! full sandwich Ŝ⁻¹ Q̂ Ŝ⁻¹ from the score X_i û_i. Their (1,1) entries agree
//! exactly in exact arithmetic; [`theta_inference`] computes both and checks.

use serde::Serialize;

use crate::cluster::{build_index, ClusterScheme, NeighborhoodIndex, WeightedSample};
use crate::error::{Error, Result};
use crate::linalg::{smallest_eigenvalue, Matrix, PivotedQr};
use crate::variance::{cgm_with, psd_project, CgmMethod, CgmOptions};
use crate::Warning;

/// 97.5% quantile of the standard normal.
pub const Z_975: f64 = 1.959964;

/// Relative tolerance for the FWL and variance-path identities.
pub const IDENTITY_TOL: f64 = 1e-8;

/// Rank-condition floor on λ_min(X′X/n).
pub const RANK_FLOOR: f64 = 1e-10;

/// Outcome, regressor of interest, controls and cluster labels.
#[derive(Debug, Clone)]
pub struct RegressionData {
    y: Vec<f64>,
    d: Vec<f64>,
    controls: Matrix,
    scheme: ClusterScheme,
    d_name: String,
    control_names: Vec<String>,
}

impl RegressionData {
    /// `controls` is n×(K−1) and may hold an intercept column; pass an n×0
    /// matrix for none.
    pub fn new(y: Vec<f64>, d: Vec<f64>, controls: Matrix, scheme: ClusterScheme) -> Result<Self> {
        let n = y.len();
        if d.len() != n || controls.rows() != n || scheme.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, d {}, controls {}, clusters {}",
                d.len(),
                controls.rows(),
                scheme.n()
            )));
        }
        if y.iter().chain(&d).chain(controls.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::Schema("regression data contains non-finite values".into()));
        }
        let control_names = (0..controls.cols()).map(|j| format!("control[{j}]")).collect();
        Ok(Self { y, d, controls, scheme, d_name: "D".into(), control_names })
    }

    /// Labels used in error messages.
    pub fn with_names(mut self, d_name: impl Into<String>, control_names: Vec<String>) -> Result<Self> {
        if control_names.len() != self.controls.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} control names for {} controls",
                control_names.len(),
                self.controls.cols()
            )));
        }
        self.d_name = d_name.into();
        self.control_names = control_names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of coefficients, 1 + number of controls.
    pub fn k(&self) -> usize {
        1 + self.controls.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn controls(&self) -> &Matrix {
        &self.controls
    }

    pub fn scheme(&self) -> &ClusterScheme {
        &self.scheme
    }

    /// X = [D, controls].
    pub fn design(&self) -> Matrix {
        let c = &self.controls;
        Matrix::from_fn(self.n(), self.k(), |i, j| if j == 0 { self.d[i] } else { c[(i, j - 1)] })
    }

    pub fn index(&self) -> Result<NeighborhoodIndex> {
        build_index(&self.scheme)
    }

    fn column_name(&self, j: usize) -> String {
        if j == 0 {
            self.d_name.clone()
        } else {
            self.control_names[j - 1].clone()
        }
    }
}

/// An n×1 column of ones.
pub fn intercept(n: usize) -> Matrix {
    Matrix::from_fn(n, 1, |_, _| 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InferenceOptions {
    /// Clip negative eigenvalues of Q̂ before forming variances.
    pub psd_project: bool,
    /// C/(C−1) small-sample factor per clustering dimension.
    pub dof_correction: bool,
}

impl InferenceOptions {
    pub(crate) fn cgm(&self) -> CgmOptions {
        CgmOptions {
            method: if self.dof_correction { CgmMethod::InclusionExclusion } else { CgmMethod::PairEnum },
            dof_correction: self.dof_correction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    Fixed,
    Stochastic,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceResult {
    pub design: Design,
    pub beta_hat: Vec<f64>,
    pub theta_hat: f64,
    /// σ̂², reported even when negative.
    pub sigma2_hat: f64,
    /// None when σ̂² < 0.
    pub sigma_hat: Option<f64>,
    /// Ŝ⁻¹Q̂Ŝ⁻¹ (stochastic design only).
    pub v_hat: Option<Matrix>,
    /// sqrt of diag(V̂); None entries where the diagonal is negative.
    pub coef_se: Option<Vec<Option<f64>>>,
    pub t_stat: Option<f64>,
    pub ci_95: Option<[f64; 2]>,
    pub residuals: Vec<f64>,
    pub d_tilde: Vec<f64>,
    pub warnings: Vec<Warning>,
}

/// Residualized regressor and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Residualized {
    pub d_tilde: Vec<f64>,
    pub y_tilde: Vec<f64>,
    /// D̃ vanishes relative to D (D lies in the span of the controls).
    pub degenerate: bool,
}

fn singular(data: &RegressionData, qr: &PivotedQr, offset: usize) -> Option<Error> {
    qr.first_dependent_column().map(|c| Error::SingularDesign { column: data.column_name(c + offset) })
}

/// β̂ = (X′X)⁻¹X′Y via column-pivoted QR.
pub fn ols_fit(data: &RegressionData) -> Result<Vec<f64>> {
    let qr = PivotedQr::new(&data.design());
    if let Some(e) = singular(data, &qr, 0) {
        return Err(e);
    }
    qr.solve_least_squares(&data.y)
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// D̃ = M_W D and Ỹ = M_W Y.
pub fn fwl_residualize(data: &RegressionData) -> Result<Residualized> {
    if data.controls.cols() == 0 {
        return Ok(Residualized {
            d_tilde: data.d.clone(),
            y_tilde: data.y.clone(),
            degenerate: data.d.iter().all(|&v| v == 0.0),
        });
    }
    let qr = PivotedQr::new(&data.controls);
    if let Some(e) = singular(data, &qr, 1) {
        return Err(e);
    }
    let d_tilde = qr.residuals(&data.d)?;
    let y_tilde = qr.residuals(&data.y)?;
    let degenerate = sum_sq(&d_tilde).sqrt() <= crate::linalg::PIVOT_TOL * sum_sq(&data.d).sqrt();
    Ok(Residualized { d_tilde, y_tilde, degenerate })
}

/// Magnitude below which σ̂² is indistinguishable from residual roundoff:
/// (δ)² Σ_i Σ_{j∈𝒩_i} |D̃_i D̃_j| / (Σ D̃²)² with δ = 10³ ε max|Y|.
fn variance_resolution(index: &NeighborhoodIndex, d_tilde: &[f64], y: &[f64]) -> Result<f64> {
    let delta = 1e3 * f64::EPSILON * y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let abs_d = WeightedSample::scalar(d_tilde.iter().map(|v| v.abs()).collect(), vec![1.0; d_tilde.len()])?;
    let bound = cgm_with(&abs_d, index, CgmOptions::default())?.scalar();
    let sdd = sum_sq(d_tilde);
    Ok(delta * delta * bound / (sdd * sdd))
}

fn finish_theta(result: &mut InferenceResult, resolution: f64) {
    if result.sigma2_hat < 0.0 && result.sigma2_hat >= -resolution {
        result.sigma2_hat = 0.0;
    }
    let s2 = result.sigma2_hat;
    if s2 < 0.0 {
        result.sigma_hat = None;
        result.t_stat = None;
        result.ci_95 = None;
        result.warnings.push(Warning::NegativeVariance { value: s2 });
        return;
    }
    let se = s2.sqrt();
    result.sigma_hat = Some(se);
    result.t_stat = (se > 0.0).then(|| result.theta_hat / se);
    result.ci_95 = Some([result.theta_hat - Z_975 * se, result.theta_hat + Z_975 * se]);
}

fn check_index(data: &RegressionData, index: &NeighborhoodIndex) -> Result<()> {
    if index.n() != data.n() {
        return Err(Error::DimensionMismatch(format!("index has {} observations, data {}", index.n(), data.n())));
    }
    Ok(())
}

/// Inference treating the regressors as nonstochastic:
/// σ̂² = Σ_i Σ_{j∈𝒩_i} û_i û_j D̃_i D̃_j / (Σ D̃_i²)².
pub fn fixed_design_inference(
    data: &RegressionData,
    index: &NeighborhoodIndex,
    opts: InferenceOptions,
) -> Result<InferenceResult> {
    check_index(data, index)?;
    let beta_hat = ols_fit(data)?;
    let fwl = fwl_residualize(data)?;
    let sdd = sum_sq(&fwl.d_tilde);
    if fwl.degenerate || sdd == 0.0 {
        return Err(Error::ZeroVariation);
    }
    let sdy: f64 = fwl.d_tilde.iter().zip(&fwl.y_tilde).map(|(a, b)| a * b).sum();
    let theta_hat = sdy / sdd;
    let residuals: Vec<f64> = fwl.y_tilde.iter().zip(&fwl.d_tilde).map(|(y, d)| y - d * theta_hat).collect();

    let score: Vec<f64> = residuals.iter().zip(&fwl.d_tilde).map(|(u, d)| u * d).collect();
    let sample = WeightedSample::scalar(score, vec![1.0; data.n()])?;
    let mut est = cgm_with(&sample, index, opts.cgm())?;
    if opts.psd_project {
        est = psd_project(&est)?;
    }
    let sigma2_hat = est.scalar() / (sdd * sdd);

    let mut result = InferenceResult {
        design: Design::Fixed,
        beta_hat,
        theta_hat,
        sigma2_hat,
        sigma_hat: None,
        v_hat: None,
        coef_se: None,
        t_stat: None,
        ci_95: None,
        residuals,
        d_tilde: fwl.d_tilde,
        warnings: Vec::new(),
    };
    let resolution = variance_resolution(index, &result.d_tilde, &data.y)?;
    finish_theta(&mut result, resolution);
    Ok(result)
}

/// λ_min(X′X / n).
pub fn rank_lambda(x: &Matrix) -> Result<f64> {
    let n = x.rows().max(1) as f64;
    smallest_eigenvalue(&x.gram().scale(1.0 / n))
}

/// Inference treating the regressors as random: V̂ = Ŝ⁻¹Q̂Ŝ⁻¹ with
/// Q̂ = Σ_i Σ_{j∈𝒩_i} û_i û_j X_i X_j′.
pub fn stochastic_design_inference(
    data: &RegressionData,
    index: &NeighborhoodIndex,
    opts: InferenceOptions,
) -> Result<InferenceResult> {
    check_index(data, index)?;
    let x = data.design();
    let qr = PivotedQr::new(&x);
    if let Some(e) = singular(data, &qr, 0) {
        return Err(e);
    }
    let lam = rank_lambda(&x)?;
    if !(lam > RANK_FLOOR) {
        return Err(Error::NearSingular(lam));
    }
    let beta_hat = qr.solve_least_squares(&data.y)?;
    let residuals: Vec<f64> =
        (0..data.n()).map(|i| data.y[i] - x.row(i).iter().zip(&beta_hat).map(|(a, b)| a * b).sum::<f64>()).collect();

    let scores = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] * residuals[i]);
    let sample = WeightedSample::unweighted(scores)?;
    let mut est = cgm_with(&sample, index, opts.cgm())?;
    if opts.psd_project {
        est = psd_project(&est)?;
    }
    let s_inv = qr.gram_inverse()?;
    let mut v_hat = s_inv.matmul(&est.q_hat)?.matmul(&s_inv)?;
    v_hat.symmetrize();
    let coef_se = (0..x.cols())
        .map(|j| {
            let v = v_hat[(j, j)];
            (v >= 0.0).then(|| v.sqrt())
        })
        .collect();

    let fwl = fwl_residualize(data)?;
    let mut result = InferenceResult {
        design: Design::Stochastic,
        theta_hat: beta_hat[0],
        beta_hat,
        sigma2_hat: v_hat[(0, 0)],
        sigma_hat: None,
        v_hat: Some(v_hat),
        coef_se: Some(coef_se),
        t_stat: None,
        ci_95: None,
        residuals,
        d_tilde: fwl.d_tilde,
        warnings: Vec::new(),
    };
    let resolution = if fwl.degenerate { 0.0 } else { variance_resolution(index, &result.d_tilde, &data.y)? };
    finish_theta(&mut result, resolution);
    Ok(result)
}

/// |a − b| / max(|a|, |b|), or 0 when both are at or below `floor`.
pub(crate) fn relative_gap(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale <= floor {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Inference on θ: the fixed-design result, with V̂ and per-coefficient
/// standard errors attached from the stochastic-design route. A warning is
/// attached when the two routes disagree beyond [`IDENTITY_TOL`].
pub fn theta_inference(
    data: &RegressionData,
    index: &NeighborhoodIndex,
    opts: InferenceOptions,
) -> Result<InferenceResult> {
    let mut fixed = fixed_design_inference(data, index, opts)?;
    let stochastic = stochastic_design_inference(data, index, opts)?;

    let sdd = sum_sq(&fixed.d_tilde);
    let theta_floor = f64::EPSILON * (sum_sq(&data.y) / sdd).sqrt();
    let theta_gap = relative_gap(fixed.theta_hat, stochastic.theta_hat, theta_floor);
    let var_floor = variance_resolution(index, &fixed.d_tilde, &data.y)?;
    let var_gap = relative_gap(fixed.sigma2_hat, stochastic.sigma2_hat, var_floor);
    // projecting Q̂ is not linear, so the two routes may legitimately differ
    if theta_gap > IDENTITY_TOL || (!opts.psd_project && var_gap > IDENTITY_TOL) {
        fixed.warnings.push(Warning::FwlIdentityGap { theta_gap, variance_gap: var_gap });
    }
    fixed.v_hat = stochastic.v_hat;
    fixed.coef_se = stochastic.coef_se;
    Ok(fixed)
}
