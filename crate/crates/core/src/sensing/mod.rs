//! Observation model `y_i(t) = H_i(t) theta + v_i(t)`, step-size and
//! threshold schedules, and finite-horizon checkers for the conditions the
//! schedules must satisfy.

mod assumptions;
mod schedule;

pub use assumptions::{
    check_assumption1, check_assumption2, check_growth_condition, check_schedules, Assumption1Report,
    Assumption2Report, ConditionReport, GrowthReport, ScheduleReport, Trend, Verdict, GROWTH_SCALES,
};
pub use schedule::{power_schedule, DeclaredConstants, Schedule, ScheduleError, Schedules};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use thiserror::Error;

use crate::seeding::SensorRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter dimension must be at least 1")]
    EmptyParameter,
    #[error("parameter entry {0} is not finite")]
    NonFiniteParameter(usize),
    #[error("sensor {sensor}: observation matrix has {cols} columns, expected {expected}")]
    ColumnMismatch { sensor: usize, cols: usize, expected: usize },
    #[error("sensor {sensor}: observation matrix has no rows")]
    NoRows { sensor: usize },
    #[error("sensor {0} out of range")]
    UnknownSensor(usize),
    #[error("parameter has dimension {got}, model expects {expected}")]
    ParameterMismatch { got: usize, expected: usize },
    #[error("sensor {sensor}: invalid noise source: {reason}")]
    InvalidNoise { sensor: usize, reason: String },
    #[error("sensor {sensor}: availability {value} outside [0, 1]")]
    InvalidAvailability { sensor: usize, value: f64 },
}

/// The unknown parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameter(DVector<f64>);

impl TrueParameter {
    pub fn new(theta: DVector<f64>) -> Result<Self, ModelError> {
        if theta.is_empty() {
            return Err(ModelError::EmptyParameter);
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteParameter(i));
        }
        Ok(Self(theta))
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self, ModelError> {
        Self::new(DVector::from_column_slice(theta))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// How a sensor's observation matrix evolves over time.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixProcess {
    Fixed(DMatrix<f64>),
    /// `H_i(t)` equals `matrix` with probability `availability` and is zero
    /// otherwise, independently over time.
    Intermittent {
        matrix: DMatrix<f64>,
        availability: f64,
    },
}

impl MatrixProcess {
    fn base(&self) -> &DMatrix<f64> {
        match self {
            MatrixProcess::Fixed(h) => h,
            MatrixProcess::Intermittent { matrix, .. } => matrix,
        }
    }

    /// `E{H^T H}`.
    pub fn expected_gram(&self) -> DMatrix<f64> {
        match self {
            MatrixProcess::Fixed(h) => h.transpose() * h,
            MatrixProcess::Intermittent { matrix, availability } => matrix.transpose() * matrix * *availability,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            MatrixProcess::Fixed(_) => true,
            MatrixProcess::Intermittent { availability, .. } => *availability == 0.0 || *availability == 1.0,
        }
    }
}

/// Zero-mean measurement noise, independent over sensors and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSource {
    Gaussian {
        std: f64,
    },
    /// Student-t with `dof` degrees of freedom scaled to standard deviation
    /// `std`. Moments of order below `dof` are finite.
    StudentT {
        dof: f64,
        std: f64,
    },
}

impl NoiseSource {
    fn validate(&self, sensor: usize) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::InvalidNoise { sensor, reason });
        match *self {
            NoiseSource::Gaussian { std } if !(std >= 0.0 && std.is_finite()) => bad(format!("std {std}")),
            NoiseSource::StudentT { dof, .. } if !(dof > 2.0) => bad(format!("dof {dof} must exceed 2")),
            NoiseSource::StudentT { std, .. } if !(std >= 0.0 && std.is_finite()) => bad(format!("std {std}")),
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut SensorRng) -> f64 {
        match *self {
            NoiseSource::Gaussian { std } => {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            }
            NoiseSource::StudentT { dof, std } => {
                let t = StudentT::new(dof).expect("dof validated").sample(rng);
                std * t * ((dof - 2.0) / dof).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub matrix: MatrixProcess,
    pub noise: NoiseSource,
}

/// One realisation of a sensor's measurement at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub h: DMatrix<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    dim: usize,
    sensors: Vec<SensorModel>,
}

impl ObservationModel {
    pub fn new(dim: usize, sensors: Vec<SensorModel>) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::EmptyParameter);
        }
        for (i, s) in sensors.iter().enumerate() {
            let h = s.matrix.base();
            if h.nrows() == 0 {
                return Err(ModelError::NoRows { sensor: i });
            }
            if h.ncols() != dim {
                return Err(ModelError::ColumnMismatch { sensor: i, cols: h.ncols(), expected: dim });
            }
            if let MatrixProcess::Intermittent { availability, .. } = s.matrix {
                if !(0.0..=1.0).contains(&availability) {
                    return Err(ModelError::InvalidAvailability { sensor: i, value: availability });
                }
            }
            s.noise.validate(i)?;
        }
        Ok(Self { dim, sensors })
    }

    /// Every sensor gets a fixed matrix and Gaussian noise of the given std.
    pub fn fixed_gaussian(dim: usize, matrices: Vec<DMatrix<f64>>, std: f64) -> Result<Self, ModelError> {
        let sensors = matrices
            .into_iter()
            .map(|h| SensorModel { matrix: MatrixProcess::Fixed(h), noise: NoiseSource::Gaussian { std } })
            .collect();
        Self::new(dim, sensors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn sensor(&self, i: usize) -> Result<&SensorModel, ModelError> {
        self.sensors.get(i).ok_or(ModelError::UnknownSensor(i))
    }

    pub fn sensors(&self) -> &[SensorModel] {
        &self.sensors
    }

    /// `m_i`.
    pub fn rows(&self, i: usize) -> Result<usize, ModelError> {
        Ok(self.sensor(i)?.matrix.base().nrows())
    }

    pub fn all_deterministic(&self) -> bool {
        self.sensors.iter().all(|s| s.matrix.is_deterministic())
    }

    /// Draws `H_i(t)`. Consumes one uniform from `rng` for intermittent
    /// sensors and nothing otherwise.
    pub fn draw_matrix(&self, i: usize, _t: u64, rng: &mut SensorRng) -> Result<DMatrix<f64>, ModelError> {
        Ok(match &self.sensor(i)?.matrix {
            MatrixProcess::Fixed(h) => h.clone(),
            MatrixProcess::Intermittent { matrix, availability } => {
                if rng.gen::<f64>() < *availability {
                    matrix.clone()
                } else {
                    DMatrix::zeros(matrix.nrows(), matrix.ncols())
                }
            }
        })
    }

    /// Draws `v_i(t)`: one scalar per measurement row, in row order.
    pub fn draw_noise(&self, i: usize, rng: &mut SensorRng) -> Result<DVector<f64>, ModelError> {
        let s = self.sensor(i)?;
        let m = s.matrix.base().nrows();
        Ok(DVector::from_fn(m, |_, _| s.noise.sample(rng)))
    }

    /// Matrix draw followed by noise draw, both from the sensor's own stream.
    pub fn observe(
        &self,
        i: usize,
        t: u64,
        theta: &TrueParameter,
        rng: &mut SensorRng,
    ) -> Result<Observation, ModelError> {
        if theta.dim() != self.dim {
            return Err(ModelError::ParameterMismatch { got: theta.dim(), expected: self.dim });
        }
        let h = self.draw_matrix(i, t, rng)?;
        let v = self.draw_noise(i, rng)?;
        let y = &h * theta.vector() + v;
        Ok(Observation { h, y })
    }

    /// `y_i(t)`.
    pub fn measure(
        &self,
        i: usize,
        t: u64,
        theta: &TrueParameter,
        rng: &mut SensorRng,
    ) -> Result<DVector<f64>, ModelError> {
        Ok(self.observe(i, t, theta, rng)?.y)
    }

    /// `sum_i E{H_i^T H_i}`.
    pub fn expected_information(&self) -> DMatrix<f64> {
        self.sensors.iter().fold(DMatrix::zeros(self.dim, self.dim), |acc, s| acc + s.matrix.expected_gram())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::sensor_rng;

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    #[test]
    fn noiseless_projection() {
        let model = ObservationModel::fixed_gaussian(2, vec![row(&[1.0, 0.0])], 0.0).unwrap();
        let theta = TrueParameter::from_slice(&[-1.0, 2.0]).unwrap();
        let y = model.measure(0, 0, &theta, &mut sensor_rng(1, 0)).unwrap();
        assert_eq!(y.as_slice(), &[-1.0]);
    }

    #[test]
    fn two_row_sensor() {
        let hb = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let model = ObservationModel::fixed_gaussian(3, vec![hb], 0.0).unwrap();
        let theta = TrueParameter::from_slice(&[1.0, 2.0, 5.0]).unwrap();
        let y = model.measure(0, 3, &theta, &mut sensor_rng(9, 0)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn noisy_sample_mean() {
        let model = ObservationModel::fixed_gaussian(2, vec![row(&[0.0, 1.0])], 0.1).unwrap();
        let theta = TrueParameter::from_slice(&[-1.0, 2.0]).unwrap();
        let mut rng = sensor_rng(42, 1);
        let n = 10_000;
        let mean = (0..n).map(|t| model.measure(0, t, &theta, &mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.004, "mean {mean}");
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(
            ObservationModel::fixed_gaussian(3, vec![row(&[1.0, 0.0])], 0.1),
            Err(ModelError::ColumnMismatch { sensor: 0, cols: 2, expected: 3 })
        ));
        let model = ObservationModel::fixed_gaussian(2, vec![row(&[1.0, 0.0])], 0.1).unwrap();
        let theta = TrueParameter::from_slice(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            model.measure(0, 0, &theta, &mut sensor_rng(0, 0)),
            Err(ModelError::ParameterMismatch { .. })
        ));
        assert_eq!(model.rows(4), Err(ModelError::UnknownSensor(4)));
        assert!(TrueParameter::from_slice(&[]).is_err());
        assert!(TrueParameter::from_slice(&[f64::NAN]).is_err());
        assert!(ObservationModel::fixed_gaussian(2, vec![row(&[1.0, 0.0])], -1.0).is_err());
    }

    #[test]
    fn gaussian_noise_is_uncorrelated_in_time() {
        let model = ObservationModel::fixed_gaussian(1, vec![row(&[1.0])], 1.0).unwrap();
        let mut rng = sensor_rng(5, 0);
        let n = 100_000;
        let v: Vec<f64> = (0..n).map(|_| model.draw_noise(0, &mut rng).unwrap()[0]).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let bound = 5.0 / (n as f64).sqrt();
        for lag in 1..=5 {
            let c = v.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>() / (n - lag) as f64;
            assert!((c / var).abs() < bound, "lag {lag}: {}", c / var);
        }
    }

    #[test]
    fn student_noise_has_requested_std() {
        let s = SensorModel {
            matrix: MatrixProcess::Fixed(row(&[1.0])),
            noise: NoiseSource::StudentT { dof: 8.0, std: 0.5 },
        };
        let model = ObservationModel::new(1, vec![s]).unwrap();
        let mut rng = sensor_rng(3, 0);
        let n = 50_000;
        let v: Vec<f64> = (0..n).map(|_| model.draw_noise(0, &mut rng).unwrap()[0]).collect();
        let var = v.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn intermittent_matrix_expectation() {
        let s = SensorModel {
            matrix: MatrixProcess::Intermittent { matrix: row(&[2.0, 0.0]), availability: 0.25 },
            noise: NoiseSource::Gaussian { std: 0.0 },
        };
        let model = ObservationModel::new(2, vec![s]).unwrap();
        assert_eq!(model.expected_information()[(0, 0)], 1.0);
        assert!(!model.all_deterministic());
        let mut rng = sensor_rng(8, 0);
        let hits = (0..20_000).filter(|&t| model.draw_matrix(0, t, &mut rng).unwrap()[(0, 0)] != 0.0).count();
        assert!((hits as f64 / 20_000.0 - 0.25).abs() < 0.015);
    }
}
