//! Event-triggered consensus+innovations estimator.
//!
//! Each round `t` runs three phases for every sensor, and every sensor
//! finishes a phase before any sensor starts the next one:
//!
//! 1. transmission: at `t = 0` every sensor broadcasts its initial estimate;
//!    afterwards sensor `i` broadcasts when `||x_i(t) - x_i(tau_i)|| > f_i(t)`,
//! 2. measurement: `y_i(t) = H_i(t) theta + v_i(t)`,
//! 3. update:
//!    `x_i(t+1) = x_i(t) + alpha_i(t) H_i^T (y_i - H_i x_i)
//!               + alpha_i(t) sum_j a_ij (m_ij - x_i(t))`
//!    where `m_ij` is the latest estimate received from parent `j`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::trace::{RunTrace, TraceRecorder, TriggerEvent};
use crate::graph::SensorGraph;
use crate::seeding::{sensor_rngs, SensorRng};
use crate::sensing::{ModelError, ObservationModel, ScheduleError, Schedules, TrueParameter};

/// Estimates beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical divergence at t={t} (sensor {sensor})")]
    Divergence { t: u64, sensor: usize },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
}

/// When a broadcast becomes visible to the receiver's update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    /// A broadcast fired at `t` is used by the update at `t`.
    #[default]
    SameRound,
    /// A broadcast fired at `t` is used from the update at `t + 1` on.
    NextRound,
}

/// Per-sensor estimator state at the start of round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub t: u64,
    pub estimates: Vec<DVector<f64>>,
    pub last_broadcast: Vec<DVector<f64>>,
    pub trigger_counts: Vec<u64>,
    /// `mailbox[i][k]`: latest value received from the `k`-th parent of `i`.
    pub mailbox: Vec<Vec<Option<DVector<f64>>>>,
    in_flight: Vec<(usize, DVector<f64>)>,
}

impl EstimatorState {
    pub fn time(&self) -> u64 {
        self.t
    }
}

/// `||x_i(t) - x_i(tau_{k_i(t-1)})|| > f`. Does not mutate.
pub fn trigger_check(state: &EstimatorState, i: usize, f: f64) -> bool {
    (&state.estimates[i] - &state.last_broadcast[i]).norm() > f
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Store per-sensor estimates every `k` steps (and at the horizon).
    pub snapshot_stride: Option<u64>,
}

/// Anything that can simulate one run and produce a trace.
pub trait Simulator {
    fn run(
        &self,
        initial: &[DVector<f64>],
        horizon: u64,
        run_seed: u64,
        options: RunOptions,
    ) -> Result<RunTrace, EstimatorError>;
}

/// Shared dimension checks for the estimator and the baselines.
pub(crate) fn validate_setup(
    graph: &SensorGraph,
    model: &ObservationModel,
    schedules: &Schedules,
    theta: &TrueParameter,
) -> Result<(), EstimatorError> {
    let n = graph.n();
    if model.len() != n {
        return Err(EstimatorError::Dimension(format!("graph has {n} nodes, model has {} sensors", model.len())));
    }
    if theta.dim() != model.dim() {
        return Err(ModelError::ParameterMismatch { got: theta.dim(), expected: model.dim() }.into());
    }
    schedules.validate(n)?;
    Ok(())
}

pub(crate) fn validate_initial(initial: &[DVector<f64>], n: usize, dim: usize) -> Result<(), EstimatorError> {
    if initial.len() != n {
        return Err(EstimatorError::Dimension(format!("{} initial estimates for {n} sensors", initial.len())));
    }
    if let Some(i) = initial.iter().position(|x| x.len() != dim) {
        return Err(EstimatorError::Dimension(format!("initial estimate {i} has dimension {}", initial[i].len())));
    }
    Ok(())
}

pub(crate) fn check_finite(x: &DVector<f64>, t: u64, sensor: usize) -> Result<(), EstimatorError> {
    if x.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT) {
        Ok(())
    } else {
        Err(EstimatorError::Divergence { t, sensor })
    }
}

#[derive(Debug, Clone)]
pub struct EventTriggeredEstimator<'a> {
    graph: &'a SensorGraph,
    model: &'a ObservationModel,
    schedules: &'a Schedules,
    theta: &'a TrueParameter,
    delivery: Delivery,
    parents: Vec<Vec<(usize, f64)>>,
    /// For each sender: `(child, slot in the child's mailbox)`.
    routes: Vec<Vec<(usize, usize)>>,
}

impl<'a> EventTriggeredEstimator<'a> {
    pub fn new(
        graph: &'a SensorGraph,
        model: &'a ObservationModel,
        schedules: &'a Schedules,
        theta: &'a TrueParameter,
        delivery: Delivery,
    ) -> Result<Self, EstimatorError> {
        validate_setup(graph, model, schedules, theta)?;
        let parents = graph.parent_lists();
        let mut routes = vec![Vec::new(); graph.n()];
        for (child, ps) in parents.iter().enumerate() {
            for (slot, &(parent, _)) in ps.iter().enumerate() {
                routes[parent].push((child, slot));
            }
        }
        Ok(Self { graph, model, schedules, theta, delivery, parents, routes })
    }

    pub fn initial_state(&self, initial: &[DVector<f64>]) -> Result<EstimatorState, EstimatorError> {
        let n = self.graph.n();
        validate_initial(initial, n, self.model.dim())?;
        Ok(EstimatorState {
            t: 0,
            estimates: initial.to_vec(),
            last_broadcast: initial.to_vec(),
            trigger_counts: vec![0; n],
            mailbox: self.parents.iter().map(|p| vec![None; p.len()]).collect(),
            in_flight: Vec::new(),
        })
    }

    fn deliver(&self, state: &mut EstimatorState, sender: usize, value: &DVector<f64>) {
        for &(child, slot) in &self.routes[sender] {
            state.mailbox[child][slot] = Some(value.clone());
        }
    }

    /// Transmission phase only. Returns the broadcasts of this round.
    pub fn transmit(&self, state: &mut EstimatorState) -> Vec<TriggerEvent> {
        let t = state.t;
        for (sender, value) in std::mem::take(&mut state.in_flight) {
            self.deliver(state, sender, &value);
        }
        let mut events = Vec::new();
        for i in 0..self.graph.n() {
            let fire = t == 0 || trigger_check(state, i, self.schedules.threshold_at(i, t));
            if !fire {
                continue;
            }
            let x = state.estimates[i].clone();
            state.last_broadcast[i] = x.clone();
            state.trigger_counts[i] += 1;
            match self.delivery {
                Delivery::SameRound => self.deliver(state, i, &x),
                Delivery::NextRound => state.in_flight.push((i, x.clone())),
            }
            events.push(TriggerEvent { sensor: i, time: t, estimate: x });
        }
        events
    }

    /// `max_j ||x_j(tau) - x_j(t)|| - f_j(t)` after the transmission phase.
    pub fn deviation_excess(&self, state: &EstimatorState) -> f64 {
        (0..self.graph.n())
            .map(|j| {
                let dev = (&state.last_broadcast[j] - &state.estimates[j]).norm();
                dev - self.schedules.threshold_at(j, state.t)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Measurement and update phases; advances `state.t`.
    pub fn update(&self, state: &mut EstimatorState, rngs: &mut [SensorRng]) -> Result<(), EstimatorError> {
        let t = state.t;
        let mut next = Vec::with_capacity(self.graph.n());
        for (i, x) in state.estimates.iter().enumerate() {
            let obs = self.model.observe(i, t, self.theta, &mut rngs[i])?;
            let innovation = obs.h.transpose() * (&obs.y - &obs.h * x);
            let mut correction = innovation;
            for (slot, &(_, a)) in self.parents[i].iter().enumerate() {
                if let Some(m) = &state.mailbox[i][slot] {
                    correction += (m - x) * a;
                }
            }
            let alpha = self.schedules.step_at(i, t);
            let x_next = x + correction * alpha;
            check_finite(&x_next, t, i)?;
            next.push(x_next);
        }
        state.estimates = next;
        state.t += 1;
        Ok(())
    }

    /// One synchronous round: transmission, measurement, update.
    pub fn network_step(
        &self,
        state: &mut EstimatorState,
        rngs: &mut [SensorRng],
    ) -> Result<Vec<TriggerEvent>, EstimatorError> {
        let events = self.transmit(state);
        self.update(state, rngs)?;
        Ok(events)
    }
}

impl Simulator for EventTriggeredEstimator<'_> {
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
            for ev in self.transmit(&mut state) {
                rec.event(ev);
            }
            rec.deviation_excess(self.deviation_excess(&state));
            self.update(&mut state, &mut rngs)?;
        }
        rec.observe_state(horizon, &state.estimates);
        Ok(rec.finish(state.estimates))
    }
}
