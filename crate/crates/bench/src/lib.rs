//! Shared fixtures for the filter benchmarks.

use ioc_core::filters::FilterBelief;
use ioc_core::measurement::{selection_matrix, simulate_measurements, MeasurementRecord};
use ioc_core::{benchmarks, solver, BenchmarkSpec, DMatrix, EkfOptions, MeasurementMode, NoiseModel, SelectionMatrix, Trajectory};

pub struct Fixture {
    pub spec: BenchmarkSpec,
    pub selection: SelectionMatrix,
    pub noise: DMatrix<f64>,
    pub options: EkfOptions,
    pub truth: Trajectory,
    pub records: Vec<MeasurementRecord>,
}

impl Fixture {
    pub fn new(name: &str) -> Self {
        let spec = benchmarks::by_name(name).unwrap_or_else(|| panic!("unknown benchmark {name}"));
        let (n, m) = (spec.model.state_dim(), spec.model.control_dim());
        let selection = selection_matrix(MeasurementMode::Full, n, m).unwrap();
        let noise = spec.noise_covariance(selection.output_dim());
        let options = EkfOptions::defaults(spec.model.param_dim());
        let truth = solver::solve(&spec.model, &spec.ground_truth, &options.solver, None).unwrap();
        let records = simulate_measurements(&truth, &selection, &NoiseModel::new(noise.clone(), 0).unwrap()).unwrap();
        Self {
            spec,
            selection,
            noise,
            options,
            truth,
            records,
        }
    }

    /// Belief just before `y_t` arrives, sitting at the prior.
    pub fn belief_before(&self, t: usize) -> FilterBelief {
        FilterBelief {
            time: t - 1,
            ..self.options.prior().unwrap()
        }
    }
}
