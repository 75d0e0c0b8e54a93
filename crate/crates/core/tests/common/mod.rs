//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evtrig::graph::SensorGraph;
use evtrig::seeding::sensor_rngs;
use evtrig::sensing::{power_schedule, ObservationModel, Schedule, Schedules, TrueParameter};

/// A small randomized setup.
pub struct Setup {
    pub graph: SensorGraph,
    pub matrices: Vec<DMatrix<f64>>,
    pub model: ObservationModel,
    pub schedules: Schedules,
    pub theta: TrueParameter,
    pub initial: Vec<DVector<f64>>,
    pub horizon: u64,
}

/// `N <= 5`, `M <= 3`, `T <= 50`, random weights, matrices, noise and
/// per-sensor schedules. `zero_threshold` forces `f = 0` everywhere.
pub fn random_setup(seed: u64, zero_threshold: bool) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=5usize);
    let dim = rng.gen_range(1..=3usize);
    let mut edges = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if from != to && rng.gen_bool(0.5) {
                edges.push((from, to, rng.gen_range(0.2..2.0)));
            }
        }
    }
    let graph = SensorGraph::from_edges(n, &edges).unwrap();
    let matrices: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let rows = rng.gen_range(1..=3usize);
            DMatrix::from_fn(rows, dim, |_, _| rng.gen_range(-1.0..1.0))
        })
        .collect();
    let std = rng.gen_range(0.0..0.5);
    let model = ObservationModel::fixed_gaussian(dim, matrices.clone(), std).unwrap();
    let step: Vec<Schedule> = (0..n)
        .map(|_| power_schedule(rng.gen_range(0.02..0.1), rng.gen_range(1.0..5.0), rng.gen_range(0.5..1.0)).unwrap())
        .collect();
    let threshold: Vec<Schedule> = (0..n)
        .map(|_| {
            if zero_threshold {
                Schedule::Constant { value: 0.0 }
            } else {
                power_schedule(rng.gen_range(0.01..2.0), 0.0, rng.gen_range(0.1..1.0)).unwrap()
            }
        })
        .collect();
    let schedules = Schedules { step, threshold, reference: None, declared: Default::default() };
    let theta = TrueParameter::new(DVector::from_fn(dim, |_, _| rng.gen_range(-3.0..3.0))).unwrap();
    let initial = (0..n).map(|_| DVector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0))).collect();
    let horizon = rng.gen_range(1..=50u64);
    Setup { graph, matrices, model, schedules, theta, initial, horizon }
}

/// Reference run: states `X(0..=T)` and broadcasts `(t, sensor)`.
pub struct Reference {
    pub states: Vec<Vec<DVector<f64>>>,
    pub events: Vec<(u64, usize)>,
}

fn stack(xs: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(xs.iter().map(|x| x.len()).sum(), xs.iter().flat_map(|x| x.iter().copied()))
}

fn unstack(x: &DVector<f64>, n: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..n).map(|i| x.rows(i * dim, dim).into_owned()).collect()
}

/// Stacked network form:
/// `X+ = X - A(L (x) I)X + A Dh (Y - Dh^T X) + A (W (x) I)(X_tau - X)`
/// with `A = blockdiag(alpha_i I)`, `Dh = blockdiag(H_i^T)`, `W` the weight
/// matrix and `L` its in-degree Laplacian. Measurements come from the
/// library's per-sensor streams so both sides see the same noise.
pub fn compact_form_reference(s: &Setup, run_seed: u64) -> Reference {
    let n = s.graph.n();
    let dim = s.theta.dim();
    let w = DMatrix::from_fn(n, n, |i, j| s.graph.weight(i, j));
    let deg = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| w.row(i).sum()));
    let eye = DMatrix::<f64>::identity(dim, dim);
    let l_kron = (&deg - &w).kronecker(&eye);
    let w_kron = w.kronecker(&eye);
    let rows: Vec<usize> = s.matrices.iter().map(|h| h.nrows()).collect();
    let total_rows: usize = rows.iter().sum();
    let mut dh = DMatrix::zeros(n * dim, total_rows);
    let mut r0 = 0;
    for (i, h) in s.matrices.iter().enumerate() {
        dh.view_mut((i * dim, r0), (dim, h.nrows())).copy_from(&h.transpose());
        r0 += h.nrows();
    }

    let mut rngs = sensor_rngs(run_seed, n);
    let mut x = stack(&s.initial);
    let mut x_tau = x.clone();
    let mut states = vec![s.initial.clone()];
    let mut events = Vec::new();
    for t in 0..s.horizon {
        for i in 0..n {
            let xi = x.rows(i * dim, dim);
            let last = x_tau.rows(i * dim, dim);
            if t == 0 || (xi - last).norm() > s.schedules.threshold[i].at_step(t) {
                x_tau.rows_mut(i * dim, dim).copy_from(&xi);
                events.push((t, i));
            }
        }
        let mut y = DVector::zeros(total_rows);
        let mut r0 = 0;
        for i in 0..n {
            let obs = s.model.observe(i, t, &s.theta, &mut rngs[i]).unwrap();
            y.rows_mut(r0, rows[i]).copy_from(&obs.y);
            r0 += rows[i];
        }
        let a = DMatrix::from_diagonal(&DVector::from_fn(n * dim, |k, _| s.schedules.step[k / dim].at_step(t)));
        let dx = -(&l_kron * &x) + &dh * (&y - dh.transpose() * &x) + &w_kron * (&x_tau - &x);
        x = &x + a * dx;
        states.push(unstack(&x, n, dim));
    }
    Reference { states, events }
}

/// Per-sensor time-triggered update with neighbours' current estimates:
/// `x_i+ = x_i + a_i H_i^T (y_i - H_i x_i) + a_i sum_j w_ij (x_j - x_i)`.
pub fn time_triggered_reference(s: &Setup, run_seed: u64) -> Vec<Vec<DVector<f64>>> {
    let n = s.graph.n();
    let mut rngs = sensor_rngs(run_seed, n);
    let mut x = s.initial.clone();
    let mut states = vec![x.clone()];
    for t in 0..s.horizon {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let obs = s.model.observe(i, t, &s.theta, &mut rngs[i]).unwrap();
            let h = &s.matrices[i];
            let mut corr = h.transpose() * (&obs.y - h * &x[i]);
            for j in 0..n {
                let a = s.graph.weight(i, j);
                if a != 0.0 {
                    corr += (&x[j] - &x[i]) * a;
                }
            }
            next.push(&x[i] + corr * s.schedules.step[i].at_step(t));
        }
        x = next;
        states.push(x.clone());
    }
    states
}

/// Largest entrywise difference relative to `max(1, |reference|)`.
pub fn max_rel_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs() / q.abs().max(1.0)))
        .fold(0.0, f64::max)
}
