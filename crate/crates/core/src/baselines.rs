//! Time-triggered comparison estimators.
//!
//! These are the textbook forms of three families of distributed
//! estimators, run on a synchronized communication schedule: on rounds with
//! `t % period == 0` every sensor sends its value to all children; between
//! those rounds each sensor keeps using the last values it received.
//! They are approximations of the published algorithms (update equations
//! only, tuned through their gain schedules).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::trace::{RunTrace, TraceRecorder, TriggerEvent};
use crate::estimator::{check_finite, validate_initial, EstimatorError, RunOptions, Simulator};
use crate::graph::SensorGraph;
use crate::seeding::{sensor_rngs, SensorRng};
use crate::sensing::{ModelError, ObservationModel, Schedule, ScheduleError, TrueParameter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    /// `x_i += beta(t) sum_j a_ij (x~_j - x_i) + alpha(t) K H_i^T (y_i - H_i x_i)`.
    PeriodicConsensusInnovations {
        innovation_gain: Schedule,
        consensus_gain: Schedule,
        /// Row-major `M x M` gain. Defaults to `(sum_i E{H_i^T H_i})^-1`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain_matrix: Option<Vec<Vec<f64>>>,
    },
    /// Adapt-then-combine: `psi_i = x_i + mu(t) H_i^T (y_i - H_i x_i)`,
    /// `x_i = (psi_i + sum_j psi~_j) / (|N_i| + 1)`.
    DiffusionLms { step: Schedule },
    /// `x_i += b(t) [H_i^T (y_i - H_i x_i) + sum_j a_ij (x~_j - x_i)]`.
    PeriodicSharedGain { step: Schedule },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    #[serde(flatten)]
    pub kind: BaselineKind,
    pub period: u64,
}

impl BaselineConfig {
    pub fn validate(&self, dim: usize) -> Result<(), ScheduleError> {
        if self.period == 0 {
            return Err(ScheduleError::InvalidParameter("period must be >= 1".into()));
        }
        match &self.kind {
            BaselineKind::PeriodicConsensusInnovations { innovation_gain, consensus_gain, gain_matrix } => {
                innovation_gain.validate()?;
                consensus_gain.validate()?;
                if let Some(k) = gain_matrix {
                    if k.len() != dim || k.iter().any(|r| r.len() != dim) {
                        return Err(ScheduleError::InvalidParameter(format!("gain matrix must be {dim}x{dim}")));
                    }
                }
                Ok(())
            }
            BaselineKind::DiffusionLms { step } | BaselineKind::PeriodicSharedGain { step } => step.validate(),
        }
    }

    pub fn label(&self) -> String {
        let name = match self.kind {
            BaselineKind::PeriodicConsensusInnovations { .. } => "consensus_innovations",
            BaselineKind::DiffusionLms { .. } => "diffusion_lms",
            BaselineKind::PeriodicSharedGain { .. } => "periodic_shared_gain",
        };
        format!("{name}/p{}", self.period)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub t: u64,
    pub estimates: Vec<DVector<f64>>,
    /// `received[i][k]`: last value received from the `k`-th parent of `i`.
    pub received: Vec<Vec<Option<DVector<f64>>>>,
}

#[derive(Debug, Clone)]
pub struct BaselineEstimator<'a> {
    graph: &'a SensorGraph,
    model: &'a ObservationModel,
    theta: &'a TrueParameter,
    config: BaselineConfig,
    parents: Vec<Vec<(usize, f64)>>,
    routes: Vec<Vec<(usize, usize)>>,
    gain: Option<DMatrix<f64>>,
    warnings: Vec<String>,
}

/// Moore-Penrose inverse through the SVD, for singular information matrices.
fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eps = 1e-12 * m.norm().max(1.0);
    m.clone().pseudo_inverse(eps).expect("eps is non-negative")
}

impl<'a> BaselineEstimator<'a> {
    pub fn new(
        graph: &'a SensorGraph,
        model: &'a ObservationModel,
        theta: &'a TrueParameter,
        config: BaselineConfig,
    ) -> Result<Self, EstimatorError> {
        let n = graph.n();
        if model.len() != n {
            return Err(EstimatorError::Dimension(format!("graph has {n} nodes, model has {} sensors", model.len())));
        }
        if theta.dim() != model.dim() {
            return Err(ModelError::ParameterMismatch { got: theta.dim(), expected: model.dim() }.into());
        }
        config.validate(model.dim())?;
        let parents = graph.parent_lists();
        let mut routes = vec![Vec::new(); n];
        for (child, ps) in parents.iter().enumerate() {
            for (slot, &(parent, _)) in ps.iter().enumerate() {
                routes[parent].push((child, slot));
            }
        }
        let mut warnings = Vec::new();
        let gain = match &config.kind {
            BaselineKind::PeriodicConsensusInnovations { gain_matrix: Some(rows), .. } => {
                let dim = model.dim();
                Some(DMatrix::from_fn(dim, dim, |r, c| rows[r][c]))
            }
            BaselineKind::PeriodicConsensusInnovations { gain_matrix: None, .. } => {
                let info = model.expected_information();
                Some(match info.clone().try_inverse() {
                    Some(inv) if info.rank(1e-12 * info.norm().max(1.0)) == info.nrows() => inv,
                    _ => {
                        warnings.push("information matrix is singular; using its pseudo-inverse as gain".to_string());
                        pseudo_inverse(&info)
                    }
                })
            }
            _ => None,
        };
        Ok(Self { graph, model, theta, config, parents, routes, gain, warnings })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn gain(&self) -> Option<&DMatrix<f64>> {
        self.gain.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn initial_state(&self, initial: &[DVector<f64>]) -> Result<BaselineState, EstimatorError> {
        validate_initial(initial, self.graph.n(), self.model.dim())?;
        Ok(BaselineState {
            t: 0,
            estimates: initial.to_vec(),
            received: self.parents.iter().map(|p| vec![None; p.len()]).collect(),
        })
    }

    fn is_comm_round(&self, t: u64) -> bool {
        t.is_multiple_of(self.config.period)
    }

    fn broadcast(&self, state: &mut BaselineState, values: &[DVector<f64>], t: u64) -> Vec<TriggerEvent> {
        let mut events = Vec::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            for &(child, slot) in &self.routes[i] {
                state.received[child][slot] = Some(v.clone());
            }
            events.push(TriggerEvent { sensor: i, time: t, estimate: v.clone() });
        }
        events
    }

    /// Weighted disagreement `sum_j a_ij (x~_j - x_i)` over received values.
    fn disagreement(&self, state: &BaselineState, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(x.len());
        for (slot, &(_, a)) in self.parents[i].iter().enumerate() {
            if let Some(v) = &state.received[i][slot] {
                acc += (v - x) * a;
            }
        }
        acc
    }

    /// One synchronous round. Returns the messages sent this round.
    pub fn baseline_step(
        &self,
        state: &mut BaselineState,
        rngs: &mut [SensorRng],
    ) -> Result<Vec<TriggerEvent>, EstimatorError> {
        let t = state.t;
        let n = self.graph.n();
        let comm = self.is_comm_round(t);
        let mut events = Vec::new();
        let next: Vec<DVector<f64>> = match &self.config.kind {
            BaselineKind::DiffusionLms { step } => {
                let mu = step.at_step(t);
                let mut psi = Vec::with_capacity(n);
                for (i, x) in state.estimates.iter().enumerate() {
                    let obs = self.model.observe(i, t, self.theta, &mut rngs[i])?;
                    psi.push(x + obs.h.transpose() * (&obs.y - &obs.h * x) * mu);
                }
                if comm {
                    events = self.broadcast(state, &psi, t);
                }
                psi.iter()
                    .enumerate()
                    .map(|(i, own)| {
                        let mut acc = own.clone();
                        for v in state.received[i].iter().flatten() {
                            acc += v;
                        }
                        // Neighbours never heard from yet do not contribute.
                        let heard = 1 + state.received[i].iter().flatten().count();
                        acc / heard as f64
                    })
                    .collect()
            }
            kind => {
                if comm {
                    let current = state.estimates.clone();
                    events = self.broadcast(state, &current, t);
                }
                let mut out = Vec::with_capacity(n);
                for (i, x) in state.estimates.iter().enumerate() {
                    let obs = self.model.observe(i, t, self.theta, &mut rngs[i])?;
                    let innovation = obs.h.transpose() * (&obs.y - &obs.h * x);
                    let consensus = self.disagreement(state, i, x);
                    let x_next = match kind {
                        BaselineKind::PeriodicConsensusInnovations { innovation_gain, consensus_gain, .. } => {
                            let k = self.gain.as_ref().expect("gain built in new");
                            x + consensus * consensus_gain.at_step(t) + k * innovation * innovation_gain.at_step(t)
                        }
                        BaselineKind::PeriodicSharedGain { step } => x + (innovation + consensus) * step.at_step(t),
                        BaselineKind::DiffusionLms { .. } => unreachable!(),
                    };
                    out.push(x_next);
                }
                out
            }
        };
        for (i, x) in next.iter().enumerate() {
            check_finite(x, t, i)?;
        }
        state.estimates = next;
        state.t += 1;
        Ok(events)
    }
}

impl Simulator for BaselineEstimator<'_> {
    fn run(
        &self,
        initial: &[DVector<f64>],
        horizon: u64,
        run_seed: u64,
        options: RunOptions,
    ) -> Result<RunTrace, EstimatorError> {
        if horizon == 0 {
            return Err(EstimatorError::EmptyHorizon);
        }
        let mut state = self.initial_state(initial)?;
        let mut rngs = sensor_rngs(run_seed, self.graph.n());
        let mut rec = TraceRecorder::new(
            self.theta.vector().clone(),
            self.graph.n(),
            self.graph.child_counts(),
            horizon,
            options.snapshot_stride,
        );
        for t in 0..horizon {
            rec.observe_state(t, &state.estimates);
            for ev in self.baseline_step(&mut state, &mut rngs)? {
                rec.event(ev);
            }
        }
        rec.observe_state(horizon, &state.estimates);
        Ok(rec.finish(state.estimates))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::power_schedule;

    fn setup() -> (SensorGraph, ObservationModel, TrueParameter) {
        let g = crate::graph::seven_node_graph();
        let h1 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let h2 = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let hs = (0..7).map(|i| if i % 2 == 0 { h1.clone() } else { h2.clone() }).collect();
        let m = ObservationModel::fixed_gaussian(2, hs, 0.1).unwrap();
        (g, m, TrueParameter::from_slice(&[-1.0, 2.0]).unwrap())
    }

    fn step() -> Schedule {
        power_schedule(1.0, 100.0, 0.7).unwrap()
    }

    #[test]
    fn message_count_for_period_eleven() {
        let (g, m, theta) = setup();
        for kind in [
            BaselineKind::DiffusionLms { step: step() },
            BaselineKind::PeriodicSharedGain { step: step() },
            BaselineKind::PeriodicConsensusInnovations {
                innovation_gain: power_schedule(10.0, 1.0, 0.7).unwrap(),
                consensus_gain: power_schedule(0.1, 1.0, 0.7).unwrap(),
                gain_matrix: None,
            },
        ] {
            let b = BaselineEstimator::new(&g, &m, &theta, BaselineConfig { kind, period: 11 }).unwrap();
            let horizon = 100;
            let trace = b.run(&vec![DVector::zeros(2); 7], horizon, 5, RunOptions::default()).unwrap();
            let rounds = horizon.div_ceil(11);
            assert_eq!(trace.messages(horizon), rounds * g.edge_count() as u64);
        }
    }

    #[test]
    fn default_gain_is_inverse_information() {
        let (g, m, theta) = setup();
        let cfg = BaselineConfig {
            kind: BaselineKind::PeriodicConsensusInnovations {
                innovation_gain: step(),
                consensus_gain: step(),
                gain_matrix: None,
            },
            period: 1,
        };
        let b = BaselineEstimator::new(&g, &m, &theta, cfg).unwrap();
        let k = b.gain().unwrap();
        assert!((k[(0, 0)] - 0.25).abs() < 1e-12);
        assert!((k[(1, 1)] - 1.0 / 3.0).abs() < 1e-12);
        assert!(b.warnings().is_empty());
    }

    #[test]
    fn singular_information_falls_back_to_pseudo_inverse() {
        let g = SensorGraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let h = DMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let m = ObservationModel::fixed_gaussian(2, vec![h.clone(), h], 0.0).unwrap();
        let theta = TrueParameter::from_slice(&[1.0, 1.0]).unwrap();
        let cfg = BaselineConfig {
            kind: BaselineKind::PeriodicConsensusInnovations {
                innovation_gain: step(),
                consensus_gain: step(),
                gain_matrix: None,
            },
            period: 1,
        };
        let b = BaselineEstimator::new(&g, &m, &theta, cfg).unwrap();
        assert_eq!(b.warnings().len(), 1);
        let k = b.gain().unwrap();
        assert!((k[(0, 0)] - 0.125).abs() < 1e-12);
        assert_eq!(k[(1, 1)], 0.0);
    }

    #[test]
    fn diffusion_single_round_averages() {
        // Two mutually connected sensors, zero step: combine is a plain average.
        let g = SensorGraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let h = DMatrix::from_row_slice(1, 1, &[1.0]);
        let m = ObservationModel::fixed_gaussian(1, vec![h.clone(), h], 0.0).unwrap();
        let theta = TrueParameter::from_slice(&[0.0]).unwrap();
        let cfg =
            BaselineConfig { kind: BaselineKind::DiffusionLms { step: Schedule::Constant { value: 0.5 } }, period: 1 };
        let b = BaselineEstimator::new(&g, &m, &theta, cfg).unwrap();
        let mut st = b.initial_state(&[DVector::from_element(1, 4.0), DVector::from_element(1, 0.0)]).unwrap();
        let mut rngs = sensor_rngs(0, 2);
        let ev = b.baseline_step(&mut st, &mut rngs).unwrap();
        assert_eq!(ev.len(), 2);
        // psi = (2, 0) -> both combine to 1.
        assert_eq!(st.estimates[0][0], 1.0);
        assert_eq!(st.estimates[1][0], 1.0);
    }

    #[test]
    fn stale_values_between_rounds() {
        let g = SensorGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let h = DMatrix::from_row_slice(1, 1, &[0.0]);
        let m = ObservationModel::fixed_gaussian(1, vec![h.clone(), h], 0.0).unwrap();
        let theta = TrueParameter::from_slice(&[0.0]).unwrap();
        let cfg = BaselineConfig {
            kind: BaselineKind::PeriodicSharedGain { step: Schedule::Constant { value: 0.5 } },
            period: 3,
        };
        let b = BaselineEstimator::new(&g, &m, &theta, cfg).unwrap();
        let mut st = b.initial_state(&[DVector::from_element(1, 8.0), DVector::from_element(1, 0.0)]).unwrap();
        let mut rngs = sensor_rngs(0, 2);
        let mut sent = 0;
        for _ in 0..3 {
            sent += b.baseline_step(&mut st, &mut rngs).unwrap().len();
            assert_eq!(st.received[1][0].as_ref().unwrap()[0], 8.0);
        }
        assert_eq!(sent, 2);
        // x1: 0 -> 4 -> 6 -> 7 chasing the stale 8.
        assert_eq!(st.estimates[1][0], 7.0);
    }

    #[test]
    fn period_zero_rejected() {
        let (g, m, theta) = setup();
        let cfg = BaselineConfig { kind: BaselineKind::PeriodicSharedGain { step: step() }, period: 0 };
        assert!(BaselineEstimator::new(&g, &m, &theta, cfg).is_err());
    }

    #[test]
    fn config_serde_shape() {
        let cfg: BaselineConfig = serde_json::from_str(
            r#"{"kind":"diffusion_lms","period":11,"step":{"kind":"power","scale":1,"offset":100,"exponent":0.7}}"#,
        )
        .unwrap();
        assert_eq!(cfg.period, 11);
        assert_eq!(cfg.label(), "diffusion_lms/p11");
    }
}
