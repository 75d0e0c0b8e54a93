//! Monte Carlo harness: runs a configured experiment over many seeds and
//! reduces the traces to aggregate series and per-run summaries.

mod config;
pub mod export;

pub use config::{
    AlgorithmSpec, CheckSpec, ConfigError, Experiment, ExperimentConfig, GraphSpec, InitialSpec, NoiseSpec,
    ObservationSpec, OutputSpec, ScheduleSpec, StdSpec,
};

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{communication_rate_series, fit_decay, AnalysisError, RunTrace, Snapshot};
use crate::baselines::BaselineEstimator;
use crate::estimator::{EstimatorError, EventTriggeredEstimator, RunOptions, Simulator};
use crate::seeding::run_seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {run}: {source}")]
    Run { run: u64, source: EstimatorError },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, HarnessError::Run { source: EstimatorError::Divergence { .. }, .. })
    }
}

/// Simulates one run of `algorithm` on a built experiment.
pub fn simulate(
    exp: &Experiment,
    algorithm: &AlgorithmSpec,
    horizon: u64,
    seed: u64,
    options: RunOptions,
) -> Result<RunTrace, EstimatorError> {
    match algorithm {
        AlgorithmSpec::EventTriggered { delivery } => {
            EventTriggeredEstimator::new(&exp.graph, &exp.model, &exp.schedules, &exp.theta, *delivery)?.run(
                &exp.initial,
                horizon,
                seed,
                options,
            )
        }
        AlgorithmSpec::Baseline(cfg) => BaselineEstimator::new(&exp.graph, &exp.model, &exp.theta, cfg.clone())?.run(
            &exp.initial,
            horizon,
            seed,
            options,
        ),
    }
}

/// Reduced result of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: u64,
    pub seed: u64,
    pub final_sq_error: f64,
    /// `max_{i,k} |x_{i,k}(T) - theta_k|`.
    pub final_max_abs_error: f64,
    pub messages: u64,
    /// `lambda_c(T)`; `None` on a graph without edges.
    pub final_lambda_c: Option<f64>,
    /// Largest `t` with `lambda_c(s) = 1` for all `1 <= s <= t` (0 if none).
    pub saturated_until: u64,
    /// Fitted exponent of `lambda_c(t)` over `[fit_start, T]`.
    pub rate_exponent: Option<f64>,
}

#[derive(Debug, Clone)]
struct RunOutcome {
    summary: RunSummary,
    sq_error: Vec<f64>,
    lambda_c: Vec<f64>,
    snapshots: Vec<Snapshot>,
}

fn reduce(trace: &RunTrace, run: u64, seed: u64, fit_start: u64, theta: &DVector<f64>) -> RunOutcome {
    let lambda_c = communication_rate_series(trace).unwrap_or_default();
    let saturated_until = lambda_c.iter().take_while(|&&v| v >= 1.0).count() as u64;
    let horizon = trace.horizon;
    let rate_exponent = if lambda_c.is_empty() || fit_start == 0 || fit_start + 1 >= horizon {
        None
    } else {
        // fit_decay indexes by time; slot 0 is unused.
        let mut series = Vec::with_capacity(lambda_c.len() + 1);
        series.push(f64::NAN);
        series.extend_from_slice(&lambda_c);
        fit_decay(&series, fit_start, horizon).ok().map(|f| f.exponent)
    };
    let final_max_abs_error = trace.final_estimates.iter().map(|x| (x - theta).amax()).fold(0.0, f64::max);
    RunOutcome {
        summary: RunSummary {
            run,
            seed,
            final_sq_error: *trace.sq_error.last().expect("sq_error is non-empty"),
            final_max_abs_error,
            messages: trace.messages(horizon),
            final_lambda_c: lambda_c.last().copied(),
            saturated_until,
            rate_exponent,
        },
        sq_error: trace.sq_error.clone(),
        lambda_c,
        snapshots: trace.snapshots.clone(),
    }
}

/// Aggregate of `runs` independent runs of one algorithm.
#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub config: ExperimentConfig,
    pub label: String,
    pub n: usize,
    pub dim: usize,
    /// `MSE(t)` for `t = 0..=T`.
    pub mse: Vec<f64>,
    /// Run-averaged `lambda_c(t)` for `t = 1..=T` (index 0 holds `t = 1`);
    /// empty on a graph without edges.
    pub lambda_c: Vec<f64>,
    pub runs: Vec<RunSummary>,
    /// Per-sensor estimates averaged over runs at each snapshot time.
    pub mean_estimates: Vec<Snapshot>,
    /// Network average of `mean_estimates` at each snapshot time.
    pub grand_mean: Vec<(u64, DVector<f64>)>,
    pub warnings: Vec<String>,
}

impl MonteCarloResult {
    pub fn horizon(&self) -> u64 {
        self.config.horizon
    }

    pub fn final_mse(&self) -> f64 {
        *self.mse.last().expect("mse is non-empty")
    }

    pub fn final_lambda_c(&self) -> Option<f64> {
        self.lambda_c.last().copied()
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build().map_err(|e| HarnessError::Pool(e.to_string()))
}

fn options(config: &ExperimentConfig) -> RunOptions {
    RunOptions { snapshot_stride: config.output.snapshot_stride }
}

/// Full traces of every run, in run order. Meant for small experiments.
pub fn run_traces(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<RunTrace>, HarnessError> {
    let exp = config.build()?;
    let opts = options(config);
    pool(workers)?.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|r| {
                simulate(&exp, &config.algorithm, config.horizon, run_seed(config.seed, r), opts)
                    .map_err(|source| HarnessError::Run { run: r, source })
            })
            .collect()
    })
}

/// Runs `config.algorithm` `config.runs` times. Results do not depend on
/// the number of workers: run `r` always uses `run_seed(seed, r)` and the
/// reduction is done in run order.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<MonteCarloResult, HarnessError> {
    let exp = config.build()?;
    let opts = options(config);
    let theta = exp.theta.vector().clone();
    let outcomes: Vec<RunOutcome> = pool(workers)?.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|r| {
                let seed = run_seed(config.seed, r);
                let trace = simulate(&exp, &config.algorithm, config.horizon, seed, opts)
                    .map_err(|source| HarnessError::Run { run: r, source })?;
                Ok(reduce(&trace, r, seed, config.checks.fit_start, &theta))
            })
            .collect::<Result<_, HarnessError>>()
    })?;

    let n = exp.graph.n();
    let dim = exp.model.dim();
    let runs = outcomes.len() as f64;
    let len = config.horizon as usize + 1;
    let mut mse = vec![0.0; len];
    let mut lambda_c = vec![0.0; outcomes[0].lambda_c.len()];
    for o in &outcomes {
        for (m, e) in mse.iter_mut().zip(&o.sq_error) {
            *m += e;
        }
        for (l, v) in lambda_c.iter_mut().zip(&o.lambda_c) {
            *l += v;
        }
    }
    mse.iter_mut().for_each(|m| *m /= n as f64 * runs);
    lambda_c.iter_mut().for_each(|l| *l /= runs);

    let mut mean_estimates: Vec<Snapshot> =
        outcomes[0].snapshots.iter().map(|s| Snapshot { t: s.t, estimates: vec![DVector::zeros(dim); n] }).collect();
    for o in &outcomes {
        for (acc, s) in mean_estimates.iter_mut().zip(&o.snapshots) {
            for (a, x) in acc.estimates.iter_mut().zip(&s.estimates) {
                *a += x / runs;
            }
        }
    }
    let grand_mean = mean_estimates
        .iter()
        .map(|s| (s.t, s.estimates.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n as f64))
        .collect();

    let warnings = match &config.algorithm {
        AlgorithmSpec::Baseline(cfg) => BaselineEstimator::new(&exp.graph, &exp.model, &exp.theta, cfg.clone())
            .map(|b| b.warnings().to_vec())
            .unwrap_or_default(),
        AlgorithmSpec::EventTriggered { .. } => Vec::new(),
    };

    Ok(MonteCarloResult {
        label: config.algorithm.label(),
        config: config.clone(),
        n,
        dim,
        mse,
        lambda_c,
        runs: outcomes.into_iter().map(|o| o.summary).collect(),
        mean_estimates,
        grand_mean,
        warnings,
    })
}

/// Runs the main algorithm and every alternative with common random numbers.
pub fn run_comparison(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<Vec<MonteCarloResult>, HarnessError> {
    std::iter::once(config.algorithm.clone())
        .chain(config.alternatives.iter().cloned())
        .map(|alg| run_experiment(&config.with_algorithm(alg), workers))
        .collect()
}
