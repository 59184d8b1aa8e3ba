use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use ioc_core::diagnostics::{check_bounds, BoundednessReport};
use ioc_core::filters::{run_filter, ExtendedKalmanFilter, ParameterFilter, RunOutcome, UnscentedKalmanFilter};
use ioc_core::measurement::{simulate_measurements, MeasurementRecord, NoiseModel};
use ioc_core::{solver, IocError, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, FilterKind, ResolvedExperiment};
use crate::output::{self, write_atomic};
use crate::plot;

/// Ground truth and the measurement stream it produces for one seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub truth: Trajectory,
    pub records: Vec<MeasurementRecord>,
}

pub fn scenario(resolved: &ResolvedExperiment, seed: u64) -> Result<Scenario> {
    let spec = &resolved.spec;
    let truth = solver::solve(&spec.model, &spec.ground_truth, &resolved.options.solver, None)
        .context("solving the ground-truth trajectory")?;
    let noise = NoiseModel::new(resolved.noise.clone(), seed)?;
    let records = simulate_measurements(&truth, &resolved.selection, &noise)?;
    Ok(Scenario { seed, truth, records })
}

pub fn build_filter(resolved: &ResolvedExperiment, kind: FilterKind) -> Result<Box<dyn ParameterFilter + Send>> {
    let model = resolved.spec.model.clone();
    let selection = resolved.selection.clone();
    let noise = resolved.noise.clone();
    let options = resolved.options.clone();
    Ok(match kind {
        FilterKind::Ekf => Box::new(ExtendedKalmanFilter::new(model, selection, noise, options)?),
        FilterKind::Ukf => Box::new(UnscentedKalmanFilter::new(
            model,
            selection,
            noise,
            options,
            resolved.config.ukf,
        )?),
    })
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub scenario: Scenario,
    pub outcome: RunOutcome,
    pub bounds: BoundednessReport,
}

pub fn run_trial(resolved: &ResolvedExperiment, trial: usize) -> Result<TrialResult> {
    let scenario = scenario(resolved, resolved.trial_seed(trial))?;
    let mut filter = build_filter(resolved, resolved.config.filter)?;
    let outcome = run_filter(filter.as_mut(), &scenario.records);
    let bounds = check_bounds(outcome.history.iter().map(|(_, r)| r), &resolved.noise, &resolved.config.thresholds);
    Ok(TrialResult {
        trial,
        scenario,
        outcome,
        bounds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialArtifacts {
    pub dir: PathBuf,
    pub estimates: PathBuf,
    pub measurements: PathBuf,
    pub timing: PathBuf,
    pub diagnostics: PathBuf,
    pub diagnostics_csv: PathBuf,
    pub config: PathBuf,
    pub plots: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub root: PathBuf,
    pub config: PathBuf,
    pub trials: Vec<TrialArtifacts>,
}

/// Machine-readable record written as `error.json` when a run fails.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub message: String,
    pub benchmark: String,
    pub filter: &'static str,
    pub seed: u64,
    pub trial: usize,
    /// Filter steps completed before the failure.
    pub completed_steps: usize,
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    match err.chain().find_map(|e| e.downcast_ref::<IocError>()) {
        Some(IocError::Dimension { .. }) => "dimension",
        Some(IocError::Contract(_)) => "contract",
        Some(IocError::NonConvergence { .. }) => "non_convergence",
        Some(IocError::SingularHuu { .. }) => "singular_huu",
        Some(IocError::Factorization(_)) => "factorization",
        None => "other",
    }
}

/// Directory for one trial: the output root itself for single-trial runs.
pub fn trial_dir(root: &Path, trials: usize, trial: usize) -> PathBuf {
    if trials == 1 {
        root.to_path_buf()
    } else {
        root.join(format!("trial_{trial:03}"))
    }
}

fn write_trial(resolved: &ResolvedExperiment, result: &TrialResult, dir: &Path) -> Result<TrialArtifacts> {
    let truth = &resolved.spec.ground_truth;
    let a = TrialArtifacts {
        dir: dir.to_path_buf(),
        estimates: dir.join(output::ESTIMATES_CSV),
        measurements: dir.join(output::MEASUREMENTS_CSV),
        timing: dir.join(output::TIMING_CSV),
        diagnostics: dir.join(output::DIAGNOSTICS_TXT),
        diagnostics_csv: dir.join(output::DIAGNOSTICS_CSV),
        config: dir.join(output::CONFIG_TOML),
        plots: vec![dir.join(output::ESTIMATES_SVG)],
    };
    write_atomic(&a.config, resolved.trial_config(result.trial).to_toml()?.as_bytes())?;
    write_atomic(&a.measurements, &output::measurements_csv(&result.scenario.records)?)?;
    write_atomic(&a.estimates, &output::estimates_csv(&result.outcome, truth)?)?;
    write_atomic(&a.timing, &output::timing_csv(&[(resolved.config.filter.as_str(), &result.outcome)])?)?;
    write_atomic(&a.diagnostics, result.bounds.to_text().as_bytes())?;
    let csv = format!("{}\n{}\n", BoundednessReport::CSV_HEADER, result.bounds.csv_row());
    write_atomic(&a.diagnostics_csv, csv.as_bytes())?;
    if !result.outcome.history.is_empty() {
        let table = output::read_estimates(&a.estimates)?;
        let title = format!("{} / {}", resolved.spec.name, resolved.config.filter.as_str());
        plot::estimates_plot(&a.plots[0], &table, truth.as_slice(), &title)?;
    }
    Ok(a)
}

fn write_error(resolved: &ResolvedExperiment, trial: usize, completed: usize, err: &anyhow::Error, dir: &Path) -> Result<()> {
    let record = ErrorRecord {
        kind: error_kind(err),
        message: format!("{err:#}"),
        benchmark: resolved.spec.name.clone(),
        filter: resolved.config.filter.as_str(),
        seed: resolved.trial_seed(trial),
        trial,
        completed_steps: completed,
    };
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    write_atomic(&dir.join(output::ERROR_JSON), json.as_bytes())
}

/// Run every trial, writing per-trial artifacts. A failed trial leaves its
/// partial artifacts plus `error.json` and makes the whole call fail.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let resolved = config.resolve()?;
    let root = config.output_path();
    let trials = resolved.config.trials;
    let root_config = root.join(output::CONFIG_TOML);
    write_atomic(&root_config, resolved.config.to_toml()?.as_bytes())?;

    let results: Vec<Result<TrialArtifacts>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let dir = trial_dir(&root, trials, k);
            let result = match run_trial(&resolved, k) {
                Ok(r) => r,
                Err(e) => {
                    write_error(&resolved, k, 0, &e, &dir)?;
                    return Err(e.context(format!("trial {k}")));
                }
            };
            let artifacts = write_trial(&resolved, &result, &dir)?;
            if let Some(e) = result.outcome.error.clone() {
                let e = anyhow::Error::new(e);
                write_error(&resolved, k, result.outcome.history.len(), &e, &dir)?;
                return Err(e.context(format!("trial {k} (seed {})", result.scenario.seed)));
            }
            Ok(artifacts)
        })
        .collect();

    let mut out = Vec::with_capacity(trials);
    for r in results {
        out.push(r?);
    }
    Ok(RunArtifacts {
        root,
        config: root_config,
        trials: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterTiming {
    pub filter: &'static str,
    pub steps: usize,
    /// Mean step time excluding the first (warm-up) step.
    pub mean_step_seconds: f64,
    pub ocp_solves_per_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingSummary {
    pub benchmark: String,
    pub seed: u64,
    pub ekf: FilterTiming,
    pub ukf: FilterTiming,
    /// UKF mean over EKF mean.
    pub ratio: f64,
}

impl TimingSummary {
    pub fn to_text(&self) -> String {
        let mut s = format!("benchmark: {}\nseed: {}\n", self.benchmark, self.seed);
        for f in [&self.ekf, &self.ukf] {
            s += &format!(
                "{}: {} steps, mean {:.6e} s/step, {} OCP solves/step\n",
                f.filter, f.steps, f.mean_step_seconds, f.ocp_solves_per_step
            );
        }
        s += &format!("ukf/ekf time ratio: {:.3}\n", self.ratio);
        s
    }
}

fn timing_of(name: &'static str, outcome: &RunOutcome, expected_solves: usize) -> Result<FilterTiming> {
    ensure!(!outcome.history.is_empty(), "{name} made no steps");
    for (_, r) in &outcome.history {
        ensure!(
            r.ocp_solve_count == expected_solves,
            "{name} step {} used {} OCP solves, expected {expected_solves}",
            r.t,
            r.ocp_solve_count
        );
    }
    let times: Vec<f64> = outcome.history.iter().map(|(_, r)| r.wall_time).collect();
    let measured = if times.len() > 1 { &times[1..] } else { &times[..] };
    Ok(FilterTiming {
        filter: name,
        steps: times.len(),
        mean_step_seconds: measured.iter().sum::<f64>() / measured.len() as f64,
        ocp_solves_per_step: expected_solves,
    })
}

#[derive(Debug, Clone)]
pub struct TimingComparison {
    pub summary: TimingSummary,
    pub ekf: RunOutcome,
    pub ukf: RunOutcome,
    pub timing_csv: PathBuf,
    pub summary_file: PathBuf,
    pub plot: PathBuf,
}

pub const TIMING_SUMMARY_TXT: &str = "timing_summary.txt";

/// EKF and UKF on the same measurement stream.
pub fn compare_timing(config: &ExperimentConfig) -> Result<TimingComparison> {
    let resolved = config.resolve()?;
    let root = config.output_path();
    let scenario = scenario(&resolved, resolved.config.seed)?;
    let n = resolved.spec.model.param_dim();

    let run = |kind| -> Result<RunOutcome> {
        let mut filter = build_filter(&resolved, kind)?;
        run_filter(filter.as_mut(), &scenario.records)
            .into_result()
            .with_context(|| format!("{} run", kind.as_str()))
    };
    let ekf = run(FilterKind::Ekf)?;
    let ukf = run(FilterKind::Ukf)?;
    let e = timing_of("ekf", &ekf, 2)?;
    let u = timing_of("ukf", &ukf, 2 * n + 1)?;
    let summary = TimingSummary {
        benchmark: resolved.spec.name.clone(),
        seed: scenario.seed,
        ratio: u.mean_step_seconds / e.mean_step_seconds,
        ekf: e,
        ukf: u,
    };

    let timing_csv = root.join(output::TIMING_CSV);
    let summary_file = root.join(TIMING_SUMMARY_TXT);
    let plot_file = root.join(output::TIMING_SVG);
    write_atomic(&root.join(output::CONFIG_TOML), resolved.config.to_toml()?.as_bytes())?;
    write_atomic(&root.join(output::MEASUREMENTS_CSV), &output::measurements_csv(&scenario.records)?)?;
    write_atomic(&timing_csv, &output::timing_csv(&[("ekf", &ekf), ("ukf", &ukf)])?)?;
    write_atomic(&summary_file, summary.to_text().as_bytes())?;
    let rows = output::read_timing(&timing_csv)?;
    plot::timing_plot(&plot_file, &rows, &format!("{}: step time", resolved.spec.name))?;
    Ok(TimingComparison {
        summary,
        ekf,
        ukf,
        timing_csv,
        summary_file,
        plot: plot_file,
    })
}

/// Plot whatever `input` holds: a run directory, an estimates CSV, or a timing CSV.
pub fn plot_artifacts(input: &Path) -> Result<Vec<PathBuf>> {
    let (dir, file) = if input.is_dir() {
        let estimates = input.join(output::ESTIMATES_CSV);
        let timing = input.join(output::TIMING_CSV);
        if estimates.exists() {
            (input.to_path_buf(), estimates)
        } else {
            (input.to_path_buf(), timing)
        }
    } else {
        (input.parent().unwrap_or(Path::new(".")).to_path_buf(), input.to_path_buf())
    };
    ensure!(file.exists(), "input file {} not found", file.display());

    let name = file.file_name().and_then(|s| s.to_str()).unwrap_or_default();
    let header = std::fs::read_to_string(&file)?.lines().next().unwrap_or_default().to_string();
    if header.starts_with("t,filter,") {
        let rows = output::read_timing(&file)?;
        let out = dir.join(output::TIMING_SVG);
        plot::timing_plot(&out, &rows, "step time")?;
        return Ok(vec![out]);
    }
    let table = output::read_estimates(&file)?;
    let config_path = dir.join(output::CONFIG_TOML);
    let (truth, title) = if config_path.exists() {
        let resolved = ExperimentConfig::from_toml_file(&config_path)?.resolve()?;
        let title = format!("{} / {}", resolved.spec.name, resolved.config.filter.as_str());
        (resolved.spec.ground_truth.as_slice().to_vec(), title)
    } else {
        (Vec::new(), name.to_string())
    };
    let out = dir.join(output::ESTIMATES_SVG);
    plot::estimates_plot(&out, &table, &truth, &title)?;
    Ok(vec![out])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            output_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn run_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let a = run_experiment(&small(dir.path())).unwrap();
        let t = &a.trials[0];
        for p in [&t.estimates, &t.measurements, &t.timing, &t.diagnostics, &t.diagnostics_csv, &t.config, &t.plots[0]] {
            assert!(p.exists(), "{}", p.display());
        }
        let est = std::fs::read_to_string(&t.estimates).unwrap();
        assert_eq!(est.lines().next().unwrap(), "t,theta_1,theta_2,p_diag_1,p_diag_2,err_norm");
        assert_eq!(est.lines().count(), 1 + 49);
        assert_eq!(std::fs::read_to_string(&t.measurements).unwrap().lines().count(), 1 + 50);
    }

    #[test]
    fn trials_get_their_own_directories() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig {
            trials: 2,
            ..small(dir.path())
        };
        let a = run_experiment(&c).unwrap();
        assert_eq!(a.trials[1].dir, dir.path().join("trial_001"));
        let cfg = ExperimentConfig::from_toml_file(&a.trials[1].config).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.trials, 1);
    }

    #[test]
    fn failure_writes_error_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(dir.path());
        c.solver.max_iterations = 1;
        assert!(run_experiment(&c).is_err());
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(output::ERROR_JSON)).unwrap()).unwrap();
        assert_eq!(json["kind"], "non_convergence");
        assert_eq!(json["benchmark"], "pendulum");
    }

    #[test]
    fn plot_requires_input() {
        let dir = tempfile::tempdir().unwrap();
        assert!(plot_artifacts(&dir.path().join("nope.csv")).is_err());
        assert!(plot_artifacts(dir.path()).is_err());
    }
}
