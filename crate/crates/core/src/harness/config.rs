//! JSON experiment configuration.
//!
//! Node labels in edge lists are 1-based and follow arrow orientation:
//! `[from, to, weight]` means `from` sends to `to`, i.e. `a_{to,from} = weight`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineConfig;
use crate::estimator::Delivery;
use crate::graph::{random_geometric, SensorGraph};
use crate::sensing::{
    DeclaredConstants, MatrixProcess, NoiseSource, ObservationModel, Schedule, Schedules, SensorModel, TrueParameter,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

fn invalid(field: impl Into<String>, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Edges {
        nodes: usize,
        edges: Vec<(usize, usize, f64)>,
    },
    RandomGeometric {
        nodes: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        seed: u64,
    },
}

fn default_radius() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationSpec {
    /// One row-major matrix per sensor.
    Inline { matrices: Vec<Vec<Vec<f64>>> },
    /// Named sensor types assigned in consecutive blocks `[type, count]`.
    Typed { types: BTreeMap<String, Vec<Vec<f64>>>, assignment: Vec<(String, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StdSpec {
    Shared(f64),
    PerSensor(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian { std: StdSpec },
    StudentT { dof: f64, std: StdSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub step: Schedule,
    pub threshold: Schedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Schedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Zeros,
    Shared { value: Vec<f64> },
    PerSensor { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    EventTriggered {
        #[serde(default)]
        delivery: Delivery,
    },
    Baseline(BaselineConfig),
}

impl AlgorithmSpec {
    pub fn label(&self) -> String {
        match self {
            AlgorithmSpec::EventTriggered { delivery: Delivery::SameRound } => "event_triggered".into(),
            AlgorithmSpec::EventTriggered { delivery: Delivery::NextRound } => "event_triggered/next_round".into(),
            AlgorithmSpec::Baseline(b) => b.label(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Keep per-sensor estimates every this many steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_stride: Option<u64>,
}

/// Parameters of the `check` report and of per-run rate fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSpec {
    pub delta: f64,
    pub rho: f64,
    pub lambda_tilde: f64,
    pub window: usize,
    pub windows: usize,
    pub samples: usize,
    pub horizon: u64,
    /// First time of the per-run communication-rate fit window.
    pub fit_start: u64,
}

impl Default for CheckSpec {
    fn default() -> Self {
        let d = DeclaredConstants::default();
        Self {
            delta: d.delta,
            rho: d.rho,
            lambda_tilde: crate::analysis::DEFAULT_LAMBDA_TILDE,
            window: 1,
            windows: 1,
            samples: 100,
            horizon: 10_000,
            fit_start: 30,
        }
    }
}

fn default_runs() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub graph: GraphSpec,
    pub theta: Vec<f64>,
    pub observation: ObservationSpec,
    pub noise: NoiseSpec,
    pub schedules: ScheduleSpec,
    pub initial: InitialSpec,
    pub horizon: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default)]
    pub seed: u64,
    pub algorithm: AlgorithmSpec,
    /// Further algorithms run by `compare` on the same setup.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub checks: CheckSpec,
}

/// Validated, ready-to-simulate objects built from a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub graph: SensorGraph,
    pub model: ObservationModel,
    pub schedules: Schedules,
    pub theta: TrueParameter,
    pub initial: Vec<DVector<f64>>,
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, ConfigError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(invalid(field, "matrix must be non-empty"));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(invalid(field, "ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Copy of this config running `algorithm` instead.
    pub fn with_algorithm(&self, algorithm: AlgorithmSpec) -> Self {
        Self { algorithm, alternatives: Vec::new(), ..self.clone() }
    }

    pub fn declared(&self) -> DeclaredConstants {
        DeclaredConstants { delta: self.checks.delta, rho: self.checks.rho }
    }

    pub fn build_graph(&self) -> Result<SensorGraph, ConfigError> {
        match &self.graph {
            GraphSpec::Edges { nodes, edges } => {
                let mut zero_based = Vec::with_capacity(edges.len());
                for (k, &(from, to, w)) in edges.iter().enumerate() {
                    if from == 0 || to == 0 || from > *nodes || to > *nodes {
                        return Err(invalid(
                            format!("graph.edges[{k}]"),
                            format!("node labels must be in 1..={nodes}"),
                        ));
                    }
                    zero_based.push((from - 1, to - 1, w));
                }
                SensorGraph::from_edges(*nodes, &zero_based).map_err(|e| invalid("graph", e))
            }
            GraphSpec::RandomGeometric { nodes, radius, seed } => {
                random_geometric(*nodes, *radius, *seed).map_err(|e| invalid("graph", e))
            }
        }
    }

    fn build_model(&self, n: usize, dim: usize) -> Result<ObservationModel, ConfigError> {
        let matrices: Vec<DMatrix<f64>> = match &self.observation {
            ObservationSpec::Inline { matrices } => matrices
                .iter()
                .enumerate()
                .map(|(i, m)| matrix(m, &format!("observation.matrices[{i}]")))
                .collect::<Result<_, _>>()?,
            ObservationSpec::Typed { types, assignment } => {
                let mut out = Vec::with_capacity(n);
                for (name, count) in assignment {
                    let rows = types
                        .get(name)
                        .ok_or_else(|| invalid("observation.assignment", format!("unknown sensor type `{name}`")))?;
                    let h = matrix(rows, &format!("observation.types.{name}"))?;
                    out.extend(std::iter::repeat_n(h, *count));
                }
                out
            }
        };
        if matrices.len() != n {
            return Err(invalid("observation", format!("{} matrices for {n} sensors", matrices.len())));
        }
        let stds = |spec: &StdSpec| -> Result<Vec<f64>, ConfigError> {
            match spec {
                StdSpec::Shared(s) => Ok(vec![*s; n]),
                StdSpec::PerSensor(v) if v.len() == n => Ok(v.clone()),
                StdSpec::PerSensor(v) => Err(invalid("noise.std", format!("{} entries for {n} sensors", v.len()))),
            }
        };
        let noises: Vec<NoiseSource> = match &self.noise {
            NoiseSpec::Gaussian { std } => stds(std)?.into_iter().map(|std| NoiseSource::Gaussian { std }).collect(),
            NoiseSpec::StudentT { dof, std } => {
                stds(std)?.into_iter().map(|std| NoiseSource::StudentT { dof: *dof, std }).collect()
            }
        };
        let sensors = matrices
            .into_iter()
            .zip(noises)
            .map(|(h, noise)| SensorModel { matrix: MatrixProcess::Fixed(h), noise })
            .collect();
        ObservationModel::new(dim, sensors).map_err(|e| invalid("observation", e))
    }

    fn build_initial(&self, n: usize, dim: usize) -> Result<Vec<DVector<f64>>, ConfigError> {
        let check = |v: &[f64], field: String| -> Result<DVector<f64>, ConfigError> {
            if v.len() != dim {
                return Err(invalid(field, format!("expected {dim} entries, got {}", v.len())));
            }
            Ok(DVector::from_column_slice(v))
        };
        match &self.initial {
            InitialSpec::Zeros => Ok(vec![DVector::zeros(dim); n]),
            InitialSpec::Shared { value } => Ok(vec![check(value, "initial.value".into())?; n]),
            InitialSpec::PerSensor { values } => {
                if values.len() != n {
                    return Err(invalid("initial.values", format!("{} entries for {n} sensors", values.len())));
                }
                values.iter().enumerate().map(|(i, v)| check(v, format!("initial.values[{i}]"))).collect()
            }
        }
    }

    fn validate_algorithm(&self, alg: &AlgorithmSpec, field: &str, dim: usize) -> Result<(), ConfigError> {
        if let AlgorithmSpec::Baseline(b) = alg {
            b.validate(dim).map_err(|e| invalid(field, e))?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Experiment, ConfigError> {
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be >= 1"));
        }
        if self.runs == 0 {
            return Err(invalid("runs", "must be >= 1"));
        }
        let theta = TrueParameter::from_slice(&self.theta).map_err(|e| invalid("theta", e))?;
        let dim = theta.dim();
        let graph = self.build_graph()?;
        let n = graph.n();
        let model = self.build_model(n, dim)?;
        let mut schedules =
            Schedules::uniform(n, self.schedules.step, self.schedules.threshold).with_declared(self.declared());
        schedules.reference = self.schedules.reference;
        schedules.validate(n).map_err(|e| invalid("schedules", e))?;
        let initial = self.build_initial(n, dim)?;
        self.validate_algorithm(&self.algorithm, "algorithm", dim)?;
        for (k, alt) in self.alternatives.iter().enumerate() {
            self.validate_algorithm(alt, &format!("alternatives[{k}]"), dim)?;
        }
        if !(0.0..0.5).contains(&self.checks.delta) {
            return Err(invalid("checks.delta", "must lie in [0, 1/2)"));
        }
        if !(self.checks.rho > 2.0) {
            return Err(invalid("checks.rho", "must exceed 2"));
        }
        Ok(Experiment { graph, model, schedules, theta, initial })
    }
}
