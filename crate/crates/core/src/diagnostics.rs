//! Empirical boundedness checks and estimation-error statistics for filter runs.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::filters::StepReport;
use crate::linalg::{max_eigenvalue, min_eigenvalue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundThresholds {
    /// Lower bound `p̲` on `λ_min(P_{t|t-1})`.
    pub p_floor: f64,
    /// Lower bound `q̲` on `λ_min(Q_t)`.
    pub q_floor: f64,
}

impl Default for BoundThresholds {
    fn default() -> Self {
        Self {
            p_floor: 1e-12,
            q_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessReport {
    pub steps: usize,
    /// `max_t ‖G_t‖₂`; `None` when no step formed a Jacobian.
    pub g_bar: Option<f64>,
    pub p_range: (f64, f64),
    pub q_range: (f64, f64),
    pub r_range: (f64, f64),
    pub g_satisfied: bool,
    pub p_satisfied: bool,
    pub q_satisfied: bool,
    pub r_satisfied: bool,
    pub thresholds: BoundThresholds,
}

impl BoundednessReport {
    pub fn all_satisfied(&self) -> bool {
        self.g_satisfied && self.p_satisfied && self.q_satisfied && self.r_satisfied
    }

    pub fn to_text(&self) -> String {
        let flag = |ok: bool| if ok { "satisfied" } else { "VIOLATED" };
        let mut s = String::new();
        let _ = writeln!(s, "steps: {}", self.steps);
        match self.g_bar {
            Some(g) => {
                let _ = writeln!(s, "jacobian bound   g_bar = {g:.6e}  [{}]", flag(self.g_satisfied));
            }
            None => {
                let _ = writeln!(s, "jacobian bound   g_bar = n/a  [UNVERIFIED: no step reported a Jacobian]");
            }
        }
        let _ = writeln!(
            s,
            "predicted cov    lambda in [{:.6e}, {:.6e}], floor {:.1e}  [{}]",
            self.p_range.0,
            self.p_range.1,
            self.thresholds.p_floor,
            flag(self.p_satisfied)
        );
        let _ = writeln!(
            s,
            "process noise    lambda in [{:.6e}, {:.6e}], floor {:.1e}  [{}]",
            self.q_range.0,
            self.q_range.1,
            self.thresholds.q_floor,
            flag(self.q_satisfied)
        );
        let _ = writeln!(
            s,
            "measurement noise lambda in [{:.6e}, {:.6e}]  [{}]",
            self.r_range.0,
            self.r_range.1,
            flag(self.r_satisfied)
        );
        let overall = match self.g_bar {
            None if self.p_satisfied && self.q_satisfied && self.r_satisfied => "UNVERIFIED",
            _ => flag(self.all_satisfied()),
        };
        let _ = writeln!(s, "all conditions: {overall}");
        s
    }

    pub const CSV_HEADER: &'static str =
        "steps,g_bar,p_min,p_max,q_min,q_max,r_min,r_max,g_ok,p_ok,q_ok,r_ok,all_ok";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{},{}",
            self.steps,
            self.g_bar.map(|g| format!("{g:e}")).unwrap_or_default(),
            self.p_range.0,
            self.p_range.1,
            self.q_range.0,
            self.q_range.1,
            self.r_range.0,
            self.r_range.1,
            self.g_satisfied,
            self.p_satisfied,
            self.q_satisfied,
            self.r_satisfied,
            self.all_satisfied()
        )
    }
}

fn extend((lo, hi): (f64, f64), m: &DMatrix<f64>) -> (f64, f64) {
    (lo.min(min_eigenvalue(m)), hi.max(max_eigenvalue(m)))
}

/// Evaluate the Jacobian, predicted-covariance, process-noise and
/// measurement-noise bounds over the executed steps. An empty run satisfies
/// nothing.
pub fn check_bounds<'a, I>(reports: I, noise: &DMatrix<f64>, thresholds: &BoundThresholds) -> BoundednessReport
where
    I: IntoIterator<Item = &'a StepReport>,
{
    let empty = (f64::INFINITY, f64::NEG_INFINITY);
    let mut steps = 0;
    let mut g_bar: Option<f64> = None;
    let mut all_jacobians = true;
    let mut p_range = empty;
    let mut q_range = empty;
    for r in reports {
        steps += 1;
        match r.jacobian_norm {
            Some(g) => g_bar = Some(g_bar.map_or(g, |acc: f64| acc.max(g))),
            None => all_jacobians = false,
        }
        p_range = extend(p_range, &r.predicted_covariance);
        q_range = extend(q_range, &r.process_noise);
    }
    let r_range = (min_eigenvalue(noise), max_eigenvalue(noise));
    let ran = steps > 0;
    BoundednessReport {
        steps,
        g_bar,
        p_range,
        q_range,
        r_range,
        g_satisfied: ran && all_jacobians && g_bar.is_some_and(f64::is_finite),
        p_satisfied: ran && p_range.0 >= thresholds.p_floor && p_range.1.is_finite(),
        q_satisfied: ran && q_range.0 >= thresholds.q_floor && q_range.1.is_finite(),
        r_satisfied: r_range.0 > 0.0 && r_range.1.is_finite(),
        thresholds: *thresholds,
    }
}

/// `e_t = θ - θ̂_{t-1}` per seed and the seed-averaged `‖e_t‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    /// `errors[s][t - 1] = e_t` for seed `s`.
    pub errors: Vec<Vec<DVector<f64>>>,
    pub squared: Vec<Vec<f64>>,
    /// Mean over the seeds that reach each step.
    pub mean_squared: Vec<f64>,
}

impl ErrorTrace {
    pub fn fit_envelope(&self) -> Option<EnvelopeFit> {
        fit_envelope(&self.mean_squared)
    }
}

/// `estimates[s]` is `θ̂_0, θ̂_1, …` for seed `s`.
pub fn error_trace(estimates: &[Vec<DVector<f64>>], truth: &DVector<f64>) -> ErrorTrace {
    let errors: Vec<Vec<DVector<f64>>> = estimates
        .iter()
        .map(|run| run.iter().map(|est| truth - est).collect())
        .collect();
    let squared: Vec<Vec<f64>> = errors
        .iter()
        .map(|run| run.iter().map(|e| e.norm_squared()).collect())
        .collect();
    let len = squared.iter().map(Vec::len).max().unwrap_or(0);
    let mean_squared = (0..len)
        .map(|k| {
            let vals: Vec<f64> = squared.iter().filter_map(|s| s.get(k).copied()).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    ErrorTrace {
        errors,
        squared,
        mean_squared,
    }
}

/// `m_t ≈ η m_1 ϑ^{t-1} + ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    pub eta: f64,
    pub decay: f64,
    pub floor: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

impl EnvelopeFit {
    pub fn evaluate(&self, first: f64, k: usize) -> f64 {
        self.eta * first * self.decay.powi(k as i32) + self.floor
    }
}

const FLOOR_GRID: usize = 200;

/// Least squares on `log(m_t - ν)` for each `ν` on a grid below `min m_t`;
/// keeps the `ν` whose full envelope best matches `log m_t`.
pub fn fit_envelope(series: &[f64]) -> Option<EnvelopeFit> {
    if series.len() < 3 || series.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return None;
    }
    let first = series[0];
    let lowest = series.iter().copied().fold(f64::INFINITY, f64::min);
    let ks: Vec<f64> = (0..series.len()).map(|k| k as f64).collect();
    let logs: Vec<f64> = series.iter().map(|m| m.ln()).collect();

    let mut best: Option<EnvelopeFit> = None;
    for i in 0..=FLOOR_GRID {
        // ν from 0 up to just under the smallest value, denser near the top.
        let floor = if i == 0 {
            0.0
        } else {
            lowest * (1.0 - 10f64.powf(-6.0 * i as f64 / FLOOR_GRID as f64))
        };
        let ys: Vec<f64> = series.iter().map(|m| (m - floor).ln()).collect();
        let Some((intercept, slope)) = linear_fit(&ks, &ys) else {
            continue;
        };
        let eta = intercept.exp() / first;
        let decay = slope.exp();
        let fit = EnvelopeFit {
            eta,
            decay,
            floor,
            residual: 0.0,
        };
        let sse: f64 = ks
            .iter()
            .zip(&logs)
            .map(|(&k, &l)| (fit.evaluate(first, k as usize).ln() - l).powi(2))
            .sum();
        let residual = (sse / series.len() as f64).sqrt();
        if residual.is_finite() && best.is_none_or(|b| residual < b.residual) {
            best = Some(EnvelopeFit { residual, ..fit });
        }
    }
    best
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 || !sxy.is_finite() {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Means of the first and last quarter of a series.
pub fn quarter_means(series: &[f64]) -> Option<(f64, f64)> {
    let q = series.len() / 4;
    if q == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&series[..q]), mean(&series[series.len() - q..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(g: f64, p: f64, q: f64) -> StepReport {
        StepReport {
            t: 1,
            innovation: DVector::zeros(1),
            gain: DMatrix::zeros(1, 1),
            jacobian: None,
            jacobian_norm: Some(g),
            predicted_covariance: DMatrix::identity(2, 2) * p,
            process_noise: DMatrix::identity(2, 2) * q,
            wall_time: 0.0,
            ocp_solve_count: 2,
        }
    }

    #[test]
    fn zero_process_noise_violates() {
        let r = DMatrix::identity(3, 3) * 1e-7;
        let ok = check_bounds(&[report(2.0, 1.0, 1e-8), report(3.0, 0.5, 1e-8)], &r, &BoundThresholds::default());
        assert!(ok.all_satisfied(), "{}", ok.to_text());
        assert_eq!(ok.g_bar, Some(3.0));
        assert_eq!(ok.p_range, (0.5, 1.0));
        assert_eq!(ok.r_range, (1e-7, 1e-7));
        let bad = check_bounds(&[report(2.0, 1.0, 0.0)], &r, &BoundThresholds::default());
        assert!(!bad.q_satisfied);
        assert!(bad.p_satisfied && bad.r_satisfied && bad.g_satisfied);
        assert!(bad.to_text().contains("VIOLATED"));
        assert_eq!(bad.csv_row().split(',').count(), BoundednessReport::CSV_HEADER.split(',').count());
    }

    #[test]
    fn jacobian_free_runs_are_unverified() {
        let mut step = report(0.0, 1.0, 1e-8);
        step.jacobian_norm = None;
        let b = check_bounds(&[step], &DMatrix::identity(1, 1), &BoundThresholds::default());
        assert!(!b.g_satisfied && b.p_satisfied && b.q_satisfied);
        assert!(b.to_text().ends_with("all conditions: UNVERIFIED\n"), "{}", b.to_text());
    }

    #[test]
    fn empty_run_satisfies_nothing_it_measured() {
        let b = check_bounds(&[], &DMatrix::identity(1, 1), &BoundThresholds::default());
        assert_eq!(b.steps, 0);
        assert!(!b.all_satisfied());
    }

    #[test]
    fn hand_errors() {
        let est = vec![vec![DVector::from_element(1, 0.0), DVector::from_element(1, 0.5)]];
        let tr = error_trace(&est, &DVector::from_element(1, 1.0));
        assert_eq!(tr.squared[0], vec![1.0, 0.25]);
        assert_eq!(tr.mean_squared, vec![1.0, 0.25]);
        let perfect = error_trace(&[vec![DVector::from_element(2, 3.0); 4]], &DVector::from_element(2, 3.0));
        assert!(perfect.mean_squared.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn envelope_recovers_synthetic_parameters() {
        let series: Vec<f64> = (0..40).map(|k| 2.0 * 0.8f64.powi(k) + 1e-3).collect();
        let fit = fit_envelope(&series).unwrap();
        assert!((fit.decay - 0.8).abs() < 0.02, "{fit:?}");
        assert!((fit.floor - 1e-3).abs() < 2e-4, "{fit:?}");
        assert!(fit.residual < 0.05);
        assert!(fit_envelope(&[1.0, 0.0, 1.0]).is_none());
    }

    #[test]
    fn quarters() {
        let (a, b) = quarter_means(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!((a, b), (4.0, 1.0));
        assert!(quarter_means(&[1.0]).is_none());
    }
}
