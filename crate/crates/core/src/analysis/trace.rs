use nalgebra::DVector;

/// One broadcast: `sensor` sent `estimate` to all of its children at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerEvent {
    pub sensor: usize,
    pub time: u64,
    pub estimate: DVector<f64>,
}

/// Per-sensor estimates at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: u64,
    pub estimates: Vec<DVector<f64>>,
}

/// Everything recorded about one simulated run over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub horizon: u64,
    pub n: usize,
    pub dim: usize,
    pub theta: DVector<f64>,
    /// `||X(t) - 1 (x) theta||^2` for `t = 0..=horizon`.
    pub sq_error: Vec<f64>,
    /// Broadcasts in time order, sensors ascending within a round.
    pub events: Vec<TriggerEvent>,
    /// `|N_i^c|`.
    pub child_counts: Vec<usize>,
    /// For each update step `t < horizon`: `max_j ||x_j(tau) - x_j(t)|| - f_j(t)`.
    /// Empty for time-triggered baselines.
    pub max_deviation_excess: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub final_estimates: Vec<DVector<f64>>,
    trigger_times: Vec<Vec<u64>>,
}

impl RunTrace {
    /// `K_i(t)`: broadcasts by sensor `i` in `[0, t]`.
    pub fn trigger_count(&self, i: usize, t: u64) -> u64 {
        self.trigger_times[i].partition_point(|&s| s <= t) as u64
    }

    pub fn trigger_times(&self, i: usize) -> &[u64] {
        &self.trigger_times[i]
    }

    /// Point-to-point messages in `[0, t]`: `sum_i K_i(t) |N_i^c|`.
    pub fn messages(&self, t: u64) -> u64 {
        (0..self.n).map(|i| self.trigger_count(i, t) * self.child_counts[i] as u64).sum()
    }

    pub fn snapshot_at(&self, t: u64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }
}

/// Incremental builder used by the simulators.
#[derive(Debug)]
pub(crate) struct TraceRecorder {
    trace: RunTrace,
    stride: Option<u64>,
}

impl TraceRecorder {
    pub fn new(theta: DVector<f64>, n: usize, child_counts: Vec<usize>, horizon: u64, stride: Option<u64>) -> Self {
        let dim = theta.len();
        Self {
            trace: RunTrace {
                horizon,
                n,
                dim,
                theta,
                sq_error: Vec::with_capacity(horizon as usize + 1),
                events: Vec::new(),
                child_counts,
                max_deviation_excess: Vec::new(),
                snapshots: Vec::new(),
                final_estimates: Vec::new(),
                trigger_times: vec![Vec::new(); n],
            },
            stride,
        }
    }

    pub fn observe_state(&mut self, t: u64, estimates: &[DVector<f64>]) {
        let theta = &self.trace.theta;
        self.trace.sq_error.push(estimates.iter().map(|x| (x - theta).norm_squared()).sum());
        let keep = match self.stride {
            Some(k) if k > 0 => t.is_multiple_of(k) || t == self.trace.horizon,
            _ => false,
        };
        if keep {
            self.trace.snapshots.push(Snapshot { t, estimates: estimates.to_vec() });
        }
    }

    pub fn event(&mut self, ev: TriggerEvent) {
        self.trace.trigger_times[ev.sensor].push(ev.time);
        self.trace.events.push(ev);
    }

    pub fn deviation_excess(&mut self, excess: f64) {
        self.trace.max_deviation_excess.push(excess);
    }

    pub fn finish(mut self, final_estimates: Vec<DVector<f64>>) -> RunTrace {
        self.trace.final_estimates = final_estimates;
        self.trace
    }
}

#[cfg(test)]
pub(crate) fn synthetic_trace(
    horizon: u64,
    child_counts: Vec<usize>,
    times: Vec<Vec<u64>>,
    sq_error: Vec<f64>,
) -> RunTrace {
    let n = child_counts.len();
    let mut rec = TraceRecorder::new(DVector::zeros(1), n, child_counts, horizon, None);
    rec.trace.sq_error = sq_error;
    let mut events: Vec<(u64, usize)> =
        times.iter().enumerate().flat_map(|(i, ts)| ts.iter().map(move |&t| (t, i))).collect();
    events.sort();
    for (time, sensor) in events {
        rec.event(TriggerEvent { sensor, time, estimate: DVector::zeros(1) });
    }
    rec.finish(vec![DVector::zeros(1); n])
}
