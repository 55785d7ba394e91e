//! The `mwclust` command line: estimation and diagnostics on delimited data,
//! and simulation and bound studies driven by TOML configs.
//!
//! Exit codes: 0 success, 1 internal failure, 2 data, usage or config error,
//! 3 singular or near-singular design.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterScheme, NeighborhoodIndex};
use crate::dgp::{DgpSpec, Simulator};
use crate::diagnostics::{diagnose_regression, DiagnosticsReport, DEFAULT_LEVERAGE_THRESHOLD};
use crate::error::Error;
use crate::linalg::Matrix;
use crate::mc::{run_consistency, run_coverage, with_threads, McOptions, Target};
use crate::regression::{theta_inference, InferenceOptions, RegressionData};
use crate::stein::{decay_trace, kolmogorov_bound, wasserstein_bound, BoundMethod, DEFAULT_BOUND_REPS};
use crate::variance::{cgm_demeaned_with, cgm_with, CgmOptions};
use crate::Warning;

pub const SCHEMA_VERSION: &str = "1";
pub const INTERCEPT_NAME: &str = "(intercept)";

#[derive(Debug, Parser)]
#[command(name = "mwclust", version, about = "Multi-way cluster-robust inference and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate θ with two-way cluster-robust standard errors.
    Estimate(DataArgs),
    /// Leverage, regularity ratios and rank condition for a dataset.
    Diagnose(DataArgs),
    /// Run a simulation study described by a config file.
    Simulate(RunArgs),
    /// Evaluate the Wasserstein and Kolmogorov bounds.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip)]
    pub format: Option<Format>,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Comma-delimited file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub y: String,
    /// Regressor of interest.
    #[arg(long)]
    pub d: String,
    #[arg(long, value_delimiter = ',')]
    pub controls: Vec<String>,
    /// The two cluster columns, `G,H`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub cluster: Vec<String>,
    /// Positive observation weights (weighted least squares).
    #[arg(long)]
    pub weight: Option<String>,
    /// Do not add a constant to the controls.
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long)]
    pub psd_project: bool,
    #[arg(long)]
    pub dof_correction: bool,
    #[arg(long, default_value_t = DEFAULT_LEVERAGE_THRESHOLD)]
    pub leverage_threshold: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub psd_project: bool,
    #[arg(long)]
    pub dof_correction: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Convert a Wasserstein distance to a Kolmogorov bound.
    #[arg(long, conflicts_with = "config", required_unless_present = "config", allow_hyphen_values = true)]
    pub dw: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    #[default]
    Coverage,
    Consistency,
    /// A single replication written to disk, with its in-memory estimates.
    Draw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TargetName {
    #[default]
    Mean,
    MeanDemeaned,
    RegressionTheta,
}

impl TargetName {
    fn target(self) -> Target {
        match self {
            TargetName::Mean => Target::Mean { demeaned: false },
            TargetName::MeanDemeaned => Target::Mean { demeaned: true },
            TargetName::RegressionTheta => Target::RegressionTheta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    #[default]
    Analytic,
    MonteCarlo,
}

fn default_reps() -> usize {
    1000
}

/// Settings for `simulate` and `bound`. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dgp: DgpSpec,
    #[serde(default)]
    pub study: Study,
    #[serde(default)]
    pub target: TargetName,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Grid sizes M (or triple copies) for consistency studies and bound traces.
    #[serde(default)]
    pub sweep: Option<Vec<usize>>,
    /// Replication drawn by the `draw` study.
    #[serde(default)]
    pub replication: u64,
    /// Where the `draw` study writes its data.
    #[serde(default)]
    pub data_out: Option<PathBuf>,
    #[serde(default)]
    pub method: MethodName,
    /// Worker threads; results do not depend on it, so it is not echoed.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub psd_project: bool,
    #[serde(default)]
    pub dof_correction: bool,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub format: Option<Format>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn other(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SingularDesign { .. } | Error::NearSingular(_) | Error::ZeroVariation => 3,
            Error::Schema(_)
            | Error::DimensionMismatch(_)
            | Error::IndexOutOfRange { .. }
            | Error::DegenerateWeights
            | Error::InvalidSpec(_)
            | Error::NegativeInput(_)
            | Error::NonPositiveReference(_)
            | Error::TooFewSamples { .. } => 2,
            Error::Asymmetric(_) | Error::Unsupported(_) => 1,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct Report<'a, C: Serialize, R: Serialize> {
    schema_version: &'static str,
    command: &'a str,
    config_echo: C,
    results: R,
    warnings: Vec<Warning>,
}

/// Rows for `--format csv`: a header and string cells.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Parses `args` (including the program name) and runs the command, writing
/// the report to `--out` or `stdout` and messages to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: &Command, stdout: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Estimate(a) => cmd_estimate(a, stdout),
        Command::Diagnose(a) => cmd_diagnose(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Bound(a) => cmd_bound(a, stdout),
    }
}

fn emit<C: Serialize, R: Serialize>(
    command: &str,
    config_echo: C,
    results: R,
    warnings: Vec<Warning>,
    table: Table,
    output: (&Option<PathBuf>, Option<Format>),
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let text = match output.1.unwrap_or_default() {
        Format::Json => {
            let report = Report { schema_version: SCHEMA_VERSION, command, config_echo, results, warnings };
            let mut s = serde_json::to_string_pretty(&report).map_err(|e| CliError::other(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&table.header).map_err(|e| CliError::other(e.to_string()))?;
            for row in &table.rows {
                w.write_record(row).map_err(|e| CliError::other(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::other(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| CliError::other(e.to_string()))?
        }
    };
    match output.0 {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
        }
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::other(e.to_string())),
    }
}

/// A regression dataset read from disk.
pub struct Dataset {
    pub data: RegressionData,
    pub coef_names: Vec<String>,
}

/// Reads the columns bound by `args` from a comma-delimited file.
pub fn load_dataset(args: &DataArgs) -> CliResult<Dataset> {
    let path = &args.data;
    let file = path.display();
    if args.cluster.len() != 2 {
        return Err(CliError::data(format!("--cluster needs exactly two columns, got {}", args.cluster.len())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {file}: {e}")))?;
    let headers = reader.headers().map_err(|e| CliError::data(format!("{file}: {e}")))?.clone();
    let find = |name: &str| -> CliResult<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(format!("{file}: no column named `{name}`")))
    };
    let y_col = find(&args.y)?;
    let d_col = find(&args.d)?;
    let control_cols = args.controls.iter().map(|c| find(c)).collect::<CliResult<Vec<_>>>()?;
    let cluster_cols = args.cluster.iter().map(|c| find(c)).collect::<CliResult<Vec<_>>>()?;
    let weight_col = args.weight.as_deref().map(find).transpose()?;

    let (mut y, mut d) = (Vec::new(), Vec::new());
    let mut controls: Vec<Vec<f64>> = vec![Vec::new(); control_cols.len()];
    let mut labels: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    let mut weights = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(format!("{file}: {e}")))?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |col: usize| -> CliResult<&str> {
            let v = record.get(col).unwrap_or("").trim();
            if v.is_empty() {
                Err(CliError::data(format!("{file}: row {row}, column `{}`: missing value", &headers[col])))
            } else {
                Ok(v)
            }
        };
        let number = |col: usize| -> CliResult<f64> {
            let v = field(col)?;
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(CliError::data(format!(
                    "{file}: row {row}, column `{}`: cannot parse `{v}` as a finite number",
                    &headers[col]
                ))),
            }
        };
        y.push(number(y_col)?);
        d.push(number(d_col)?);
        for (k, &c) in control_cols.iter().enumerate() {
            controls[k].push(number(c)?);
        }
        for (k, &c) in cluster_cols.iter().enumerate() {
            labels[k].push(field(c)?.to_string());
        }
        if let Some(c) = weight_col {
            let w = number(c)?;
            if !(w > 0.0) {
                return Err(CliError::data(format!(
                    "{file}: row {row}, column `{}`: weights must be positive, got {w}",
                    &headers[c]
                )));
            }
            weights.push(w);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(CliError::data(format!("{file}: no data rows")));
    }

    let mut columns = Vec::new();
    let mut control_names = Vec::new();
    if !args.no_intercept {
        columns.push(vec![1.0; n]);
        control_names.push(INTERCEPT_NAME.to_string());
    }
    columns.extend(controls);
    control_names.extend(args.controls.iter().cloned());
    if !weights.is_empty() {
        let root: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let scale = |v: &mut Vec<f64>| v.iter_mut().zip(&root).for_each(|(x, r)| *x *= r);
        scale(&mut y);
        scale(&mut d);
        columns.iter_mut().for_each(scale);
    }
    let controls = if columns.is_empty() { Matrix::zeros(n, 0) } else { Matrix::from_columns(&columns)? };
    let [g, h] = labels;
    let scheme = ClusterScheme::from_labels(vec![(args.cluster[0].clone(), g), (args.cluster[1].clone(), h)])?;
    let data = RegressionData::new(y, d, controls, scheme)?.with_names(args.d.clone(), control_names.clone())?;
    let mut coef_names = vec![args.d.clone()];
    coef_names.extend(control_names);
    Ok(Dataset { data, coef_names })
}

#[derive(Debug, Clone, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResults {
    pub n: usize,
    pub clusters: BTreeMap<String, usize>,
    pub design: &'static str,
    pub theta_hat: f64,
    pub sigma_hat: Option<f64>,
    pub sigma2_hat: f64,
    pub t_stat: Option<f64>,
    pub ci_95: Option<[f64; 2]>,
    pub coefficients: Vec<Coefficient>,
    pub v_hat_diag: Option<Vec<f64>>,
    pub diagnostics: DiagnosticsReport,
}

fn cluster_counts(index: &NeighborhoodIndex) -> BTreeMap<String, usize> {
    index.dim_names().iter().enumerate().map(|(d, name)| (name.clone(), index.clusters(d).len())).collect()
}

/// θ inference plus data-mode diagnostics; shared by `estimate` and the `draw` study.
pub fn estimate_results(
    data: &RegressionData,
    coef_names: &[String],
    opts: InferenceOptions,
    leverage_threshold: f64,
) -> CliResult<(EstimateResults, Vec<Warning>)> {
    let index = data.index()?;
    let fit = theta_inference(data, &index, opts)?;
    let diagnostics = diagnose_regression(data, &index, &fit, leverage_threshold)?;
    let mut warnings = fit.warnings.clone();
    warnings.extend(diagnostics.warnings.iter().cloned());
    let coefficients = coef_names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name: name.clone(),
            estimate: fit.beta_hat[j],
            std_error: fit.coef_se.as_ref().and_then(|se| se[j]),
        })
        .collect();
    let v_hat_diag = fit.v_hat.as_ref().map(|v| (0..v.rows()).map(|j| v[(j, j)]).collect());
    let results = EstimateResults {
        n: data.n(),
        clusters: cluster_counts(&index),
        design: "fixed",
        theta_hat: fit.theta_hat,
        sigma_hat: fit.sigma_hat,
        sigma2_hat: fit.sigma2_hat,
        t_stat: fit.t_stat,
        ci_95: fit.ci_95,
        coefficients,
        v_hat_diag,
        diagnostics,
    };
    Ok((results, warnings))
}

fn inference_options(psd_project: bool, dof_correction: bool) -> InferenceOptions {
    InferenceOptions { psd_project, dof_correction }
}

fn cmd_estimate(args: &DataArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let ds = load_dataset(args)?;
    let opts = inference_options(args.psd_project, args.dof_correction);
    let (results, warnings) = estimate_results(&ds.data, &ds.coef_names, opts, args.leverage_threshold)?;
    let table = Table {
        header: vec!["term", "estimate", "std_error"],
        rows: results
            .coefficients
            .iter()
            .map(|c| vec![c.name.clone(), c.estimate.to_string(), cell(c.std_error)])
            .collect(),
    };
    emit("estimate", args, &results, warnings, table, (&args.output.out, args.output.format), stdout)
}

#[derive(Debug, Clone, Serialize)]
struct DiagnoseResults {
    n: usize,
    clusters: BTreeMap<String, usize>,
    #[serde(flatten)]
    report: DiagnosticsReport,
}

fn cmd_diagnose(args: &DataArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let ds = load_dataset(args)?;
    let opts = inference_options(args.psd_project, args.dof_correction);
    let (est, warnings) = estimate_results(&ds.data, &ds.coef_names, opts, args.leverage_threshold)?;
    let report = est.diagnostics;
    let rows = report
        .leverage
        .iter()
        .map(|(dim, l)| {
            let r23 = report.ratio_23_upper.as_ref().and_then(|m| m.get(dim).copied());
            vec![dim.clone(), l.to_string(), report.ratio_22[dim].to_string(), cell(r23)]
        })
        .collect();
    let table = Table { header: vec!["dimension", "leverage", "ratio_22", "ratio_23_upper"], rows };
    let results = DiagnoseResults { n: est.n, clusters: est.clusters, report };
    emit("diagnose", args, &results, warnings, table, (&args.output.out, args.output.format), stdout)
}

/// Reads a [`RunConfig`], reporting the key path of any error.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let de = toml::Deserializer::new(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        CliError::data(format!("{}: config error at `{key}`: {}", path.display(), e.inner().message().trim()))
    })
}

fn resolve(mut cfg: RunConfig, seed: Option<u64>, reps: Option<usize>, threads: Option<usize>) -> RunConfig {
    cfg.seed = Some(seed.or(cfg.seed).unwrap_or(cfg.dgp.seed));
    cfg.dgp.seed = cfg.seed.unwrap_or_default();
    if let Some(r) = reps {
        cfg.reps = r;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    cfg
}

fn mc_options(cfg: &RunConfig) -> McOptions {
    McOptions {
        reps: cfg.reps,
        seed: cfg.seed.unwrap_or_default(),
        threads: cfg.threads,
        psd_project: cfg.psd_project,
        dof_correction: cfg.dof_correction,
    }
}

#[derive(Debug, Clone, Serialize)]
struct SimulateResults<S: Serialize> {
    n: usize,
    true_q: f64,
    /// Σ_iΣ_{j∈𝒩_i} E[W_i]E[W_j].
    bias_term: f64,
    study: Study,
    #[serde(flatten)]
    outcome: S,
}

#[derive(Debug, Clone, Serialize)]
struct DrawResults {
    replication: u64,
    data_out: String,
    /// Q̂ around zero and around the sample mean (outcome-only draws).
    q_hat_raw: Option<f64>,
    q_hat_demeaned: Option<f64>,
    estimate: Option<EstimateResults>,
}

fn cmd_simulate(args: &RunArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut cfg = resolve(load_config(&args.config)?, args.seed, args.reps, args.threads);
    cfg.psd_project |= args.psd_project;
    cfg.dof_correction |= args.dof_correction;
    let format = args.output.format.or(cfg.format);
    let out = args.output.out.clone().or_else(|| cfg.out.clone());

    let sim = Simulator::new(cfg.dgp.clone())?;
    let (n, true_q, bias_term) = (sim.index().n(), sim.oracle().true_q, sim.oracle().true_bias_term());
    let opts = mc_options(&cfg);
    let mut warnings = Vec::new();
    match cfg.study {
        Study::Coverage => {
            let report = run_coverage(&cfg.dgp, cfg.target.target(), opts)?;
            let table = Table {
                header: vec!["reps", "coverage_95", "mean_var_ratio", "ks_pivot", "ks_studentized", "rejection_flags"],
                rows: vec![vec![
                    report.reps.to_string(),
                    cell(report.coverage_95),
                    cell(report.mean_var_ratio),
                    cell(report.ks_pivot),
                    cell(report.ks_studentized),
                    report.rejection_flags.to_string(),
                ]],
            };
            let results = SimulateResults { n, true_q, bias_term, study: cfg.study, outcome: report };
            emit("simulate", &cfg, &results, warnings, table, (&out, format), stdout)
        }
        Study::Consistency => {
            let sweep = cfg.sweep.clone().ok_or_else(|| CliError::data("consistency study needs `sweep`"))?;
            let report = run_consistency(&cfg.dgp, &sweep, opts)?;
            let rows = report
                .trace
                .iter()
                .map(|p| {
                    vec![
                        p.m.to_string(),
                        p.n.to_string(),
                        p.true_q.to_string(),
                        p.bias_term.to_string(),
                        p.raw.mean.to_string(),
                        p.raw.se.to_string(),
                        p.demeaned.mean.to_string(),
                        p.centered.mean.to_string(),
                    ]
                })
                .collect();
            let table = Table {
                header: vec![
                    "m",
                    "n",
                    "true_q",
                    "bias_term",
                    "raw_ratio",
                    "raw_ratio_se",
                    "demeaned_ratio",
                    "centered_ratio",
                ],
                rows,
            };
            let results = SimulateResults { n, true_q, bias_term, study: cfg.study, outcome: report };
            emit("simulate", &cfg, &results, warnings, table, (&out, format), stdout)
        }
        Study::Draw => {
            let path = cfg.data_out.clone().ok_or_else(|| CliError::data("draw study needs `data_out`"))?;
            let draw = sim.generate(cfg.replication)?;
            let labels = [sim.scheme().labels(0), sim.scheme().labels(1)];
            let dims = sim.scheme().dims();
            let mut w = csv::Writer::from_path(&path)
                .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
            let io = |e: csv::Error| CliError::data(format!("cannot write {}: {e}", path.display()));
            let mut results = DrawResults {
                replication: cfg.replication,
                data_out: path.display().to_string(),
                q_hat_raw: None,
                q_hat_demeaned: None,
                estimate: None,
            };
            match &draw.regression {
                Some(data) => {
                    w.write_record(["y", "d", &dims[0], &dims[1]]).map_err(io)?;
                    for i in 0..n {
                        w.write_record([
                            data.y()[i].to_string(),
                            data.d()[i].to_string(),
                            labels[0][i].to_string(),
                            labels[1][i].to_string(),
                        ])
                        .map_err(io)?;
                    }
                    let mut names = vec!["d".to_string()];
                    if data.k() > 1 {
                        names.push(INTERCEPT_NAME.to_string());
                    }
                    let opts = inference_options(cfg.psd_project, cfg.dof_correction);
                    let (est, warn) = estimate_results(data, &names, opts, DEFAULT_LEVERAGE_THRESHOLD)?;
                    warnings = warn;
                    results.estimate = Some(est);
                }
                None => {
                    w.write_record(["w", &dims[0], &dims[1]]).map_err(io)?;
                    let values = draw.sample.values().column(0);
                    for i in 0..n {
                        w.write_record([values[i].to_string(), labels[0][i].to_string(), labels[1][i].to_string()])
                            .map_err(io)?;
                    }
                    let copts = CgmOptions { method: Default::default(), dof_correction: false };
                    results.q_hat_raw = Some(cgm_with(&draw.sample, sim.index(), copts)?.scalar());
                    results.q_hat_demeaned = Some(cgm_demeaned_with(&draw.sample, sim.index(), copts)?.1.scalar());
                }
            }
            w.flush().map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
            let table = Table {
                header: vec!["replication", "n", "theta_hat", "sigma_hat", "q_hat_raw"],
                rows: vec![vec![
                    cfg.replication.to_string(),
                    n.to_string(),
                    cell(results.estimate.as_ref().map(|e| e.theta_hat)),
                    cell(results.estimate.as_ref().and_then(|e| e.sigma_hat)),
                    cell(results.q_hat_raw),
                ]],
            };
            let results = SimulateResults { n, true_q, bias_term, study: cfg.study, outcome: results };
            emit("simulate", &cfg, &results, warnings, table, (&out, format), stdout)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ConversionEcho {
    dw: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ConversionResults {
    d_w: f64,
    d_k_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
struct BoundPoint {
    m: usize,
    #[serde(flatten)]
    report: crate::stein::BoundReport,
}

fn cmd_bound(args: &BoundArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let output = (&args.output.out, args.output.format);
    if let Some(dw) = args.dw {
        let d_k = kolmogorov_bound(dw)?;
        let table = Table { header: vec!["d_w", "d_k_bound"], rows: vec![vec![dw.to_string(), d_k.to_string()]] };
        let results = ConversionResults { d_w: dw, d_k_bound: d_k };
        return emit("bound", ConversionEcho { dw }, &results, Vec::new(), table, output, stdout);
    }
    let path = args.config.as_ref().ok_or_else(|| CliError::data("bound needs --dw or --config"))?;
    let cfg = resolve(load_config(path)?, args.seed, args.reps, args.threads);
    let format = args.output.format.or(cfg.format);
    let out = args.output.out.clone().or_else(|| cfg.out.clone());
    let method = match cfg.method {
        MethodName::Analytic => BoundMethod::Analytic,
        MethodName::MonteCarlo => BoundMethod::MonteCarlo {
            reps: if args.reps.is_some() || cfg.reps != default_reps() { cfg.reps } else { DEFAULT_BOUND_REPS },
        },
    };
    let points: Vec<BoundPoint> = with_threads(cfg.threads, || -> CliResult<Vec<BoundPoint>> {
        Ok(match &cfg.sweep {
            Some(ms) => {
                decay_trace(&cfg.dgp, ms, method)?.into_iter().map(|(m, report)| BoundPoint { m, report }).collect()
            }
            None => {
                let m = match cfg.dgp.grid {
                    crate::dgp::Grid::Balanced { m, .. } => m,
                    crate::dgp::Grid::Triples { copies } => copies,
                    crate::dgp::Grid::Explicit { .. } => 0,
                };
                vec![BoundPoint { m, report: wasserstein_bound(&cfg.dgp, method)? }]
            }
        })
    })??;
    let rows = points
        .iter()
        .map(|p| {
            let r = &p.report;
            vec![
                p.m.to_string(),
                r.n.to_string(),
                r.term_third.to_string(),
                r.term_var.to_string(),
                r.d_w_bound.to_string(),
                r.d_k_bound.to_string(),
                cell(r.mc_se),
            ]
        })
        .collect();
    let table = Table { header: vec!["m", "n", "term_third", "term_var", "d_w_bound", "d_k_bound", "mc_se"], rows };
    emit("bound", &cfg, &points, Vec::new(), table, (&out, format), stdout)
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
