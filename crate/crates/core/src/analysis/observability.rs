//! Windowed observability Gramians.
//!
//! For window `m` of length `h` two matrices are formed from (sample means
//! of) the observation matrices:
//!
//! * information: `sum_t sum_j E{H_j(t)^T H_j(t)}` (`M x M`),
//! * joint: `sum_t E{Lbar (x) I_M + Dbar_H(t) Dbar_H(t)^T}` (`NM x NM`),
//!   where `Dbar_H(t) Dbar_H(t)^T = blockdiag(H_j(t)^T H_j(t))`.
//!
//! A positive smallest eigenvalue of the first on a balanced graph with a
//! spanning tree implies the same for the second.

use nalgebra::{DMatrix, SymmetricEigen};

use super::AnalysisError;
use crate::graph::SensorGraph;
use crate::seeding::sensor_rngs;
use crate::sensing::ObservationModel;

/// Default threshold separating "positive" from rounding noise.
pub const DEFAULT_LAMBDA_TILDE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEigen {
    pub window: usize,
    pub information_min: f64,
    pub joint_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianReport {
    pub window_len: usize,
    pub samples: usize,
    pub lambda_tilde: f64,
    pub windows: Vec<WindowEigen>,
    /// Information matrix of the first window.
    pub information_matrix: DMatrix<f64>,
    /// Joint matrix of the first window.
    pub joint_matrix: DMatrix<f64>,
    pub information_min: f64,
    pub joint_min: f64,
    pub balanced: bool,
    pub spanning_tree: bool,
    /// Largest sampled `||Dbar_H(t)||^2`.
    pub max_regressor_norm_sq: f64,
    pub collectively_observable: bool,
    /// Balanced, spanning tree and collectively observable.
    pub connectivity_implication_applies: bool,
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Checks `windows` consecutive windows of length `h`. Expectations are
/// sample means over `samples` independent draws of every `H_j(t)`; one
/// draw is used when the model is deterministic.
pub fn gramian_check(
    graph: &SensorGraph,
    model: &ObservationModel,
    h: usize,
    windows: usize,
    samples: usize,
    lambda_tilde: f64,
    seed: u64,
) -> Result<GramianReport, AnalysisError> {
    let n = graph.n();
    let dim = model.dim();
    if model.len() != n {
        return Err(AnalysisError::Dimension(format!("graph has {n} nodes, model has {} sensors", model.len())));
    }
    if h == 0 || windows == 0 || samples == 0 {
        return Err(AnalysisError::Dimension("window length, window count and samples must be >= 1".into()));
    }
    let samples = if model.all_deterministic() { 1 } else { samples };
    let mirror_kron = graph.laplacian().mirror.kronecker(&DMatrix::<f64>::identity(dim, dim));
    let mut rngs = sensor_rngs(seed, n);

    let mut reports = Vec::with_capacity(windows);
    let mut first: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut max_regressor_norm_sq = 0.0f64;
    for w in 0..windows {
        let mut info = DMatrix::zeros(dim, dim);
        let mut joint = &mirror_kron * h as f64;
        for t in (w * h)..((w + 1) * h) {
            for j in 0..n {
                let mut gram = DMatrix::zeros(dim, dim);
                for _ in 0..samples {
                    let hj = model
                        .draw_matrix(j, t as u64, &mut rngs[j])
                        .map_err(|e| AnalysisError::Dimension(e.to_string()))?;
                    let g = hj.transpose() * &hj;
                    max_regressor_norm_sq = max_regressor_norm_sq.max(max_eigenvalue(&g));
                    gram += g;
                }
                gram /= samples as f64;
                info += &gram;
                let mut block = joint.view_mut((j * dim, j * dim), (dim, dim));
                block += &gram;
            }
        }
        reports.push(WindowEigen {
            window: w,
            information_min: min_eigenvalue(&info),
            joint_min: min_eigenvalue(&joint),
        });
        if first.is_none() {
            first = Some((info, joint));
        }
    }
    let (information_matrix, joint_matrix) = first.expect("at least one window");
    let information_min = reports.iter().map(|r| r.information_min).fold(f64::INFINITY, f64::min);
    let joint_min = reports.iter().map(|r| r.joint_min).fold(f64::INFINITY, f64::min);
    let balanced = graph.is_balanced();
    let spanning_tree = graph.has_spanning_tree();
    let collectively_observable = information_min >= lambda_tilde && lambda_tilde > 0.0;
    Ok(GramianReport {
        window_len: h,
        samples,
        lambda_tilde,
        windows: reports,
        information_matrix,
        joint_matrix,
        information_min,
        joint_min,
        balanced,
        spanning_tree,
        max_regressor_norm_sq,
        collectively_observable,
        connectivity_implication_applies: collectively_observable && balanced && spanning_tree,
    })
}
