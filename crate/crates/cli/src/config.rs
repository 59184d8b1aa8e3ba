use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ioc_core::benchmarks::{self, BenchmarkConfig, BenchmarkSpec};
use ioc_core::diagnostics::BoundThresholds;
use ioc_core::filters::{EkfOptions, ProcessNoise, DEFAULT_PROCESS_NOISE};
use ioc_core::measurement::{selection_matrix, MeasurementMode, SelectionMatrix};
use ioc_core::{DMatrix, DVector, SolverOptions, UkfParams};
use serde::{Deserialize, Serialize};

/// Environment variable that sets the root for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "IOC_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    #[default]
    Ekf,
    Ukf,
}

impl FilterKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterKind::Ekf => "ekf",
            FilterKind::Ukf => "ukf",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ekf" => Ok(FilterKind::Ekf),
            "ukf" => Ok(FilterKind::Ukf),
            other => bail!("unknown filter `{other}` (expected ekf or ukf)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: String,
    pub filter: FilterKind,
    pub mode: MeasurementMode,
    /// Rows of `F` for `mode = "custom"`.
    pub custom_selection: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    pub trials: usize,
    pub horizon: Option<usize>,
    pub prior_mean: Option<Vec<f64>>,
    pub prior_covariance: Option<Vec<Vec<f64>>>,
    /// Scalar `q` in `Q_t = q I`.
    pub process_noise: f64,
    /// Multiplier on the benchmark's measurement noise covariance.
    pub noise_scale: f64,
    pub output_dir: PathBuf,
    pub solver: SolverOptions,
    pub ukf: UkfParams,
    pub thresholds: BoundThresholds,
    /// Inline benchmark definition; overrides the built-in named one.
    pub system: Option<BenchmarkConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: "pendulum".into(),
            filter: FilterKind::Ekf,
            mode: MeasurementMode::Full,
            custom_selection: None,
            seed: 0,
            trials: 1,
            horizon: None,
            prior_mean: None,
            prior_covariance: None,
            process_noise: DEFAULT_PROCESS_NOISE,
            noise_scale: 1.0,
            output_dir: PathBuf::from("runs"),
            solver: SolverOptions::default(),
            ukf: UkfParams::default(),
            thresholds: BoundThresholds::default(),
            system: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Output directory with relative paths resolved against `IOC_OUTPUT_ROOT` when set.
    pub fn output_path(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Validate and fill every default so the config fully describes the run.
    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        ensure!(self.trials >= 1, "trial count must be at least 1");
        ensure!(self.noise_scale > 0.0, "noise scale must be positive");
        ensure!(self.process_noise >= 0.0, "process noise must be non-negative");
        let mut system = match &self.system {
            Some(s) => s.clone(),
            None => benchmarks::config_by_name(&self.benchmark).with_context(|| {
                format!("unknown benchmark `{}` (known: {})", self.benchmark, benchmarks::names().join(", "))
            })?,
        };
        if let Some(h) = self.horizon {
            system.horizon = h;
        }
        let spec = system.build()?;
        let np = spec.model.param_dim();
        let n = spec.model.state_dim();
        let m = spec.model.control_dim();

        let selection = match self.mode {
            MeasurementMode::Custom => {
                let rows = self
                    .custom_selection
                    .as_ref()
                    .context("mode `custom` needs `custom_selection`")?;
                SelectionMatrix::custom(matrix_from_rows(rows, n + m)?, n, m)?
            }
            mode => selection_matrix(mode, n, m)?,
        };

        let mut options = EkfOptions::defaults(np);
        options.process_noise = ProcessNoise::isotropic(np, self.process_noise);
        options.solver = self.solver;
        if let Some(mean) = &self.prior_mean {
            ensure!(mean.len() == np, "prior mean has {} entries, expected {np}", mean.len());
            options.prior_mean = DVector::from_column_slice(mean);
        }
        if let Some(rows) = &self.prior_covariance {
            options.prior_covariance = matrix_from_rows(rows, np)?;
        }
        options.validate()?;
        self.ukf.validate(np)?;

        let noise = spec.noise_covariance(selection.output_dim()) * self.noise_scale;
        let mut resolved = self.clone();
        resolved.benchmark = system.name.clone();
        resolved.horizon = Some(system.horizon);
        resolved.prior_mean = Some(options.prior_mean.iter().copied().collect());
        resolved.prior_covariance = Some(rows_of(&options.prior_covariance));
        resolved.custom_selection = match self.mode {
            MeasurementMode::Custom => Some(rows_of(selection.matrix())),
            _ => None,
        };
        resolved.system = Some(system);
        Ok(ResolvedExperiment {
            config: resolved,
            spec,
            selection,
            noise,
            options,
        })
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    ensure!(!rows.is_empty(), "matrix needs at least one row");
    for (i, r) in rows.iter().enumerate() {
        ensure!(r.len() == cols, "row {i} has {} entries, expected {cols}", r.len());
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A validated experiment with every component built.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    /// The input config with all defaults made explicit.
    pub config: ExperimentConfig,
    pub spec: BenchmarkSpec,
    pub selection: SelectionMatrix,
    /// Measurement noise covariance `R`.
    pub noise: DMatrix<f64>,
    pub options: EkfOptions,
}

impl ResolvedExperiment {
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.config.seed.wrapping_add(trial as u64)
    }

    /// Config that reproduces a single trial on its own.
    pub fn trial_config(&self, trial: usize) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.trial_seed(trial),
            trials: 1,
            ..self.config.clone()
        }
    }
}
