//! Artifact files. Everything is written to a temporary file in the target
//! directory and renamed into place.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use ioc_core::filters::RunOutcome;
use ioc_core::measurement::MeasurementRecord;
use ioc_core::DVector;

pub const ESTIMATES_CSV: &str = "estimates.csv";
pub const MEASUREMENTS_CSV: &str = "measurements.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const DIAGNOSTICS_TXT: &str = "diagnostics.txt";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const CONFIG_TOML: &str = "config.toml";
pub const ERROR_JSON: &str = "error.json";
pub const ESTIMATES_SVG: &str = "estimates.svg";
pub const TIMING_SVG: &str = "timing.svg";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv_bytes<I, R>(header: Vec<String>, rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Shortest round-trip decimal form, so files are stable across runs.
fn num(x: f64) -> String {
    format!("{x}")
}

pub fn estimates_csv(outcome: &RunOutcome, truth: &DVector<f64>) -> Result<Vec<u8>> {
    let np = truth.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=np).map(|i| format!("theta_{i}")));
    header.extend((1..=np).map(|i| format!("p_diag_{i}")));
    header.push("err_norm".into());
    let rows = outcome.history.iter().map(|(belief, _)| {
        let mut row = vec![belief.time.to_string()];
        row.extend(belief.mean.iter().map(|&v| num(v)));
        row.extend(belief.covariance.diagonal().iter().map(|&v| num(v)));
        row.push(num((truth - &belief.mean).norm()));
        row
    });
    csv_bytes(header, rows)
}

pub fn measurements_csv(records: &[MeasurementRecord]) -> Result<Vec<u8>> {
    let q = records.first().map_or(0, |r| r.y.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=q).map(|i| format!("y_{i}")));
    let rows = records.iter().map(|r| {
        let mut row = vec![r.t.to_string()];
        row.extend(r.y.iter().map(|&v| num(v)));
        row
    });
    csv_bytes(header, rows)
}

/// One row per step per filter.
pub fn timing_csv(runs: &[(&str, &RunOutcome)]) -> Result<Vec<u8>> {
    let header = ["t", "filter", "step_seconds", "ocp_solves"].map(String::from).to_vec();
    let rows = runs.iter().flat_map(|(name, outcome)| {
        outcome.history.iter().map(move |(_, r)| {
            vec![r.t.to_string(), name.to_string(), num(r.wall_time), r.ocp_solve_count.to_string()]
        })
    });
    csv_bytes(header, rows)
}

/// Estimates table read back for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatesTable {
    pub t: Vec<f64>,
    /// `theta[i][k]`: parameter `i` at row `k`.
    pub theta: Vec<Vec<f64>>,
}

pub fn read_estimates(path: &Path) -> Result<EstimatesTable> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let thetas: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("theta_"))
        .map(|(i, _)| i)
        .collect();
    anyhow::ensure!(header.get(0) == Some("t") && !thetas.is_empty(), "{} is not an estimates file", path.display());
    let mut table = EstimatesTable {
        t: Vec::new(),
        theta: vec![Vec::new(); thetas.len()],
    };
    for rec in r.records() {
        let rec = rec?;
        table.t.push(rec[0].parse()?);
        for (k, &i) in thetas.iter().enumerate() {
            table.theta[k].push(rec[i].parse()?);
        }
    }
    anyhow::ensure!(!table.t.is_empty(), "{} has no rows", path.display());
    Ok(table)
}

/// `(filter, t, seconds)` rows.
pub fn read_timing(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push((rec[1].to_string(), rec[0].parse()?, rec[2].parse()?));
    }
    anyhow::ensure!(!rows.is_empty(), "{} has no rows", path.display());
    Ok(rows)
}
