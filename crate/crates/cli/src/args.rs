//! Command-line arguments and the optional TOML configuration file.
//!
//! Precedence: values from a `--config` file override flags, and flags
//! override built-in defaults. Unknown keys in the configuration file are
//! rejected.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::fail::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "twoway",
    version,
    about = "Inference for two-way clustered data: robust t/F tests, simulation tables, limit experiments and diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run tests, confidence intervals and regions on a CSV data set.
    Infer(InferArgs),
    /// Reproduce the built-in Monte Carlo rejection-rate tables.
    Simulate(SimulateArgs),
    /// Sweep the interaction strength ζ in the scalar limit experiment.
    Limit(LimitArgs),
    /// Distribution of the confidence-interval length ratio across designs.
    PowerLoss(PowerLossArgs),
    /// Dyadic-data failure rates and the closed-form limit sampler.
    Dyadic(DyadicArgs),
    /// Eigenvalue diagnostic of the usual variance matrix on a data set.
    Diagnose(InferArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mean,
    Ols,
    Probit,
    Logit,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodFlag {
    Ddg,
    Usual,
    Cgm,
    Bonferroni,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightFlag {
    Identity,
    TwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyFlag {
    UnivariateMean,
    MultivariateMean,
    Regression,
    RateMismatch,
}

#[derive(Debug, Clone, Args)]
pub struct CommonOut {
    /// Output directory (default: $TWOWAY_OUT_DIR or the working directory).
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Suppress the timestamp line so reruns are byte-identical.
    #[arg(long)]
    pub no_timestamp: bool,
    /// TOML configuration file; its values override flags.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// Input CSV file (UTF-8, comma separated, header row).
    #[arg(long)]
    pub data: std::path::PathBuf,
    /// Moment model.
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// First cluster dimension column.
    #[arg(long)]
    pub g1: String,
    /// Second cluster dimension column.
    #[arg(long)]
    pub g2: String,
    /// Outcome column(s); several columns give a vector mean (mean model
    /// only).
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<String>,
    /// Regressor columns (regression models).
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<String>,
    /// Tested coefficient name(s): regressor names, or outcome names for
    /// the mean model. Default: the first regressor / all outcomes.
    #[arg(long, value_delimiter = ',')]
    pub coef: Vec<String>,
    /// Null value(s) for the tested coefficients.
    #[arg(long, value_delimiter = ',')]
    pub null: Vec<f64>,
    /// Nominal level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Methods to report.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = [MethodFlag::Ddg, MethodFlag::Usual, MethodFlag::Cgm, MethodFlag::Bonferroni])]
    pub methods: Vec<MethodFlag>,
    /// Apply the small-sample degrees-of-freedom correction.
    #[arg(long)]
    pub dof: bool,
    /// GMM weight matrix.
    #[arg(long, value_enum, default_value_t = WeightFlag::Identity)]
    pub weight: WeightFlag,
    /// Do not prepend a constant regressor.
    #[arg(long)]
    pub no_intercept: bool,
    /// Threshold for the adaptive test (default ln(min(C1,C2))).
    #[arg(long)]
    pub adaptive_s: Option<f64>,
    /// Solver iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Recorded in the run summary (inference itself is deterministic).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: CommonOut,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Design family.
    #[arg(long, value_enum, default_value_t = FamilyFlag::UnivariateMean)]
    pub family: FamilyFlag,
    /// DGP indices within the family.
    #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3, 4])]
    pub dgp: Vec<u8>,
    /// Grid sizes (C1 = C2 = n).
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 40])]
    pub n: Vec<usize>,
    /// Replications per cell.
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Methods to tabulate.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = [MethodFlag::Ddg, MethodFlag::Usual])]
    pub methods: Vec<MethodFlag>,
    /// Alternative shift override (comma-separated vector).
    #[arg(long, value_delimiter = ',')]
    pub shift: Vec<f64>,
    /// Worker threads (default: all cores); results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub out: CommonOut,
}

#[derive(Debug, Clone, Args)]
pub struct LimitArgs {
    /// ζ values; default 0, 0.05, ..., 1.20, 1.5.
    #[arg(long, value_delimiter = ',')]
    pub zetas: Vec<f64>,
    /// Limit draws per ζ.
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: CommonOut,
}

#[derive(Debug, Clone, Args)]
pub struct PowerLossArgs {
    /// Outer design draws.
    #[arg(long, default_value_t = 1000)]
    pub outer: usize,
    /// Inner limit draws per design.
    #[arg(long, default_value_t = 10_000)]
    pub inner: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: CommonOut,
}

#[derive(Debug, Clone, Args)]
pub struct DyadicArgs {
    /// Number of units C (the array is C×C off-diagonal).
    #[arg(long, default_value_t = 200)]
    pub cluster_count: usize,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// Draws for the closed-form limit sampler.
    #[arg(long, default_value_t = 100_000)]
    pub limit_draws: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: CommonOut,
}

// ---- configuration file -------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub infer: Option<InferConfig>,
    pub simulate: Option<SimulateConfig>,
    pub limit: Option<LimitConfig>,
    pub power_loss: Option<PowerLossConfig>,
    pub dyadic: Option<DyadicConfig>,
    pub diagnose: Option<InferConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferConfig {
    pub data: Option<std::path::PathBuf>,
    pub model: Option<ModelKind>,
    pub g1: Option<String>,
    pub g2: Option<String>,
    pub y: Option<Vec<String>>,
    pub x: Option<Vec<String>>,
    pub coef: Option<Vec<String>>,
    pub null: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub methods: Option<Vec<MethodFlag>>,
    pub dof: Option<bool>,
    pub weight: Option<WeightFlag>,
    pub no_intercept: Option<bool>,
    pub adaptive_s: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub family: Option<FamilyFlag>,
    pub dgp: Option<Vec<u8>>,
    pub n: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub methods: Option<Vec<MethodFlag>>,
    pub shift: Option<Vec<f64>>,
    pub threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    pub zetas: Option<Vec<f64>>,
    pub draws: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLossConfig {
    pub outer: Option<usize>,
    pub inner: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicConfig {
    pub cluster_count: Option<usize>,
    pub reps: Option<usize>,
    pub limit_draws: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
}

fn load_config(path: &std::path::Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
}

macro_rules! merge {
    ($cfg:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $cfg.$field { $args.$field = v; })+
    };
}

impl InferArgs {
    /// Applies the matching config section; the file wins over flags.
    pub fn merged(mut self, section: fn(ConfigFile) -> Option<InferConfig>) -> CliResult<Self> {
        if let Some(path) = self.out.config.clone() {
            if let Some(cfg) = section(load_config(&path)?) {
                if cfg.adaptive_s.is_some() {
                    self.adaptive_s = cfg.adaptive_s;
                }
                merge!(
                    cfg,
                    self,
                    data,
                    model,
                    g1,
                    g2,
                    y,
                    x,
                    coef,
                    null,
                    alpha,
                    methods,
                    dof,
                    weight,
                    no_intercept,
                    max_iter,
                    seed
                );
            }
        }
        Ok(self)
    }
}

impl SimulateArgs {
    pub fn merged(mut self) -> CliResult<Self> {
        if let Some(path) = self.out.config.clone() {
            if let Some(cfg) = load_config(&path)?.simulate {
                merge!(cfg, self, family, dgp, n, reps, seed, methods, shift);
                if cfg.threads.is_some() {
                    self.threads = cfg.threads;
                }
            }
        }
        Ok(self)
    }
}

impl LimitArgs {
    pub fn merged(mut self) -> CliResult<Self> {
        if let Some(path) = self.out.config.clone() {
            if let Some(cfg) = load_config(&path)?.limit {
                merge!(cfg, self, zetas, draws, seed);
            }
        }
        Ok(self)
    }
}

impl PowerLossArgs {
    pub fn merged(mut self) -> CliResult<Self> {
        if let Some(path) = self.out.config.clone() {
            if let Some(cfg) = load_config(&path)?.power_loss {
                merge!(cfg, self, outer, inner, seed);
            }
        }
        Ok(self)
    }
}

impl DyadicArgs {
    pub fn merged(mut self) -> CliResult<Self> {
        if let Some(path) = self.out.config.clone() {
            if let Some(cfg) = load_config(&path)?.dyadic {
                merge!(cfg, self, cluster_count, reps, limit_draws, alpha, seed);
            }
        }
        Ok(self)
    }
}
