//! Direct simulation of the perturbed linear recursion
//! `e(t+1) = e(t) + alpha(t) (Q(t) + Delta(t)) e(t) + alpha(t) (eps'(t) + eps''(t))`
//! with caller-supplied sources. Used as an oracle for the decay behaviour
//! the estimator error is expected to inherit.

use nalgebra::{DMatrix, DVector};

use super::AnalysisError;
use crate::estimator::DIVERGENCE_LIMIT;
use crate::seeding::SensorRng;
use crate::sensing::Schedule;

type MatrixSource<'a> = Box<dyn FnMut(u64, &mut SensorRng) -> DMatrix<f64> + 'a>;
type VectorSource<'a> = Box<dyn FnMut(u64, &mut SensorRng) -> DVector<f64> + 'a>;

/// The four driving sequences, called in the order `Q`, `Delta`, `eps'`,
/// `eps''` once per step.
pub struct RecursionSources<'a> {
    pub q: MatrixSource<'a>,
    pub delta: MatrixSource<'a>,
    pub eps_martingale: VectorSource<'a>,
    pub eps_vanishing: VectorSource<'a>,
}

impl<'a> RecursionSources<'a> {
    /// Fixed `Q`, no perturbation, no noise.
    pub fn deterministic(q: DMatrix<f64>) -> Self {
        let dim = q.nrows();
        Self {
            q: Box::new(move |_, _| q.clone()),
            delta: Box::new(move |_, _| DMatrix::zeros(dim, dim)),
            eps_martingale: Box::new(move |_, _| DVector::zeros(dim)),
            eps_vanishing: Box::new(move |_, _| DVector::zeros(dim)),
        }
    }
}

/// Returns `||e(t)||` for `t = 0..=horizon`.
pub fn linear_recursion_sim(
    sources: &mut RecursionSources<'_>,
    alpha: &Schedule,
    e0: &DVector<f64>,
    horizon: u64,
    rng: &mut SensorRng,
) -> Result<Vec<f64>, AnalysisError> {
    let q_dim = e0.len();
    let mut e = e0.clone();
    let mut norms = Vec::with_capacity(horizon as usize + 1);
    norms.push(e.norm());
    for t in 0..horizon {
        let q = (sources.q)(t, rng);
        let d = (sources.delta)(t, rng);
        let e1 = (sources.eps_martingale)(t, rng);
        let e2 = (sources.eps_vanishing)(t, rng);
        if q.shape() != (q_dim, q_dim) || d.shape() != (q_dim, q_dim) || e1.len() != q_dim || e2.len() != q_dim {
            return Err(AnalysisError::Dimension(format!("source at t={t} does not match state dimension {q_dim}")));
        }
        let a = alpha.at_step(t);
        e = &e + (q + d) * &e * a + (e1 + e2) * a;
        if !e.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT) {
            return Err(AnalysisError::Divergence(t));
        }
        norms.push(e.norm());
    }
    Ok(norms)
}
