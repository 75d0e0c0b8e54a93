use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("power schedule undefined at t={t}: t + offset = {base} <= 0")]
    Undefined { t: f64, base: f64 },
    #[error("invalid schedule parameter: {0}")]
    InvalidParameter(String),
    #[error("expected {expected} per-sensor schedules, got {got}")]
    CountMismatch { expected: usize, got: usize },
}

/// A scalar function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `scale * (t + offset)^(-exponent)`.
    Power {
        scale: f64,
        offset: f64,
        exponent: f64,
    },
    Constant {
        value: f64,
    },
}

/// Validated constructor for a power-law schedule.
pub fn power_schedule(scale: f64, offset: f64, exponent: f64) -> Result<Schedule, ScheduleError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ScheduleError::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    if !(exponent >= 0.0 && exponent.is_finite()) {
        return Err(ScheduleError::InvalidParameter(format!("exponent must be >= 0, got {exponent}")));
    }
    if !offset.is_finite() {
        return Err(ScheduleError::InvalidParameter(format!("offset must be finite, got {offset}")));
    }
    Ok(Schedule::Power { scale, offset, exponent })
}

impl Schedule {
    /// Threshold that is never exceeded.
    pub const NEVER: Schedule = Schedule::Constant { value: f64::INFINITY };

    pub fn eval(&self, t: f64) -> Result<f64, ScheduleError> {
        match *self {
            Schedule::Constant { value } => Ok(value),
            Schedule::Power { exponent: 0.0, scale, .. } => Ok(scale),
            Schedule::Power { scale, offset, exponent } => {
                let base = t + offset;
                if base <= 0.0 {
                    return Err(ScheduleError::Undefined { t, base });
                }
                Ok(scale * base.powf(-exponent))
            }
        }
    }

    /// Value used by the simulators at integer step `t`: `eval(t)` when it is
    /// defined, otherwise `eval(1)` (so `t^-p` starts at its `t = 1` value).
    pub fn at_step(&self, t: u64) -> f64 {
        match self.eval(t as f64) {
            Ok(v) => v,
            Err(_) => self.eval(t.max(1) as f64).unwrap_or(f64::NAN),
        }
    }

    /// `(scale, exponent)` of the asymptotic law `scale * t^-exponent`.
    /// Constants are exponent-0 power laws.
    pub fn power_law(&self) -> Option<(f64, f64)> {
        match *self {
            Schedule::Power { scale, exponent, .. } => Some((scale, exponent)),
            Schedule::Constant { value } if value.is_finite() => Some((value, 0.0)),
            Schedule::Constant { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        match *self {
            Schedule::Power { scale, offset, exponent } => power_schedule(scale, offset, exponent).map(|_| ()),
            Schedule::Constant { value } if value >= 0.0 => Ok(()),
            Schedule::Constant { value } => {
                Err(ScheduleError::InvalidParameter(format!("constant must be >= 0, got {value}")))
            }
        }
    }
}

/// Analysis constants the assumption checkers need. They do not affect
/// the algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    /// Rate exponent, in `[0, 1/2)`.
    pub delta: f64,
    /// Noise moment order, `> 2`.
    pub rho: f64,
}

impl Default for DeclaredConstants {
    fn default() -> Self {
        Self { delta: 0.1, rho: 4.0 }
    }
}

/// Per-sensor step sizes `alpha_i(t)` and thresholds `f_i(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedules {
    pub step: Vec<Schedule>,
    pub threshold: Vec<Schedule>,
    /// Reference step size `alpha(t)`; defaults to sensor 0's step.
    pub reference: Option<Schedule>,
    pub declared: DeclaredConstants,
}

impl Schedules {
    pub fn uniform(n: usize, step: Schedule, threshold: Schedule) -> Self {
        Self {
            step: vec![step; n],
            threshold: vec![threshold; n],
            reference: None,
            declared: DeclaredConstants::default(),
        }
    }

    pub fn with_declared(mut self, declared: DeclaredConstants) -> Self {
        self.declared = declared;
        self
    }

    pub fn len(&self) -> usize {
        self.step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<(), ScheduleError> {
        for got in [self.step.len(), self.threshold.len()] {
            if got != n {
                return Err(ScheduleError::CountMismatch { expected: n, got });
            }
        }
        for s in self.step.iter().chain(self.reference.iter()) {
            s.validate()?;
            if let Schedule::Constant { value } = *s {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(ScheduleError::InvalidParameter(format!(
                        "step size must be positive and finite, got {value}"
                    )));
                }
            }
        }
        for s in &self.threshold {
            s.validate()?;
        }
        Ok(())
    }

    pub fn step_at(&self, i: usize, t: u64) -> f64 {
        self.step[i].at_step(t)
    }

    pub fn threshold_at(&self, i: usize, t: u64) -> f64 {
        self.threshold[i].at_step(t)
    }

    pub fn reference(&self) -> Schedule {
        self.reference.unwrap_or(self.step[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_power_at_zero() {
        let s = power_schedule(1.0, 100.0, 0.7).unwrap();
        assert!((s.eval(0.0).unwrap() - 0.039_810_717).abs() < 1e-8);
    }

    #[test]
    fn zero_exponent_is_constant() {
        let s = power_schedule(3.0, 0.0, 0.0).unwrap();
        assert_eq!(s.eval(0.0).unwrap(), 3.0);
        assert_eq!(s.eval(1e6).unwrap(), 3.0);
    }

    #[test]
    fn square_root_decay() {
        let s = power_schedule(1.0, 0.0, 0.5).unwrap();
        assert_eq!(s.eval(4.0).unwrap(), 0.5);
    }

    #[test]
    fn undefined_at_origin() {
        let s = power_schedule(1.0, 0.0, 0.7).unwrap();
        assert!(matches!(s.eval(0.0), Err(ScheduleError::Undefined { .. })));
        assert_eq!(s.at_step(0), 1.0);
        assert_eq!(s.at_step(1), 1.0);
        assert_eq!(s.at_step(2), 2f64.powf(-0.7));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(power_schedule(0.0, 1.0, 0.5).is_err());
        assert!(power_schedule(1.0, 1.0, -0.5).is_err());
        assert!(Schedule::Constant { value: -1.0 }.validate().is_err());
        let s = Schedules::uniform(2, Schedule::Constant { value: 0.0 }, Schedule::NEVER);
        assert!(s.validate(2).is_err(), "zero step size");
        let s = Schedules::uniform(2, Schedule::Constant { value: 0.1 }, Schedule::NEVER);
        assert!(s.validate(2).is_ok());
        assert!(s.validate(3).is_err());
    }

    #[test]
    fn serde_shape() {
        let s: Schedule = serde_json::from_str(r#"{"kind":"power","scale":1,"offset":100,"exponent":0.7}"#).unwrap();
        assert_eq!(s, Schedule::Power { scale: 1.0, offset: 100.0, exponent: 0.7 });
        let c: Schedule = serde_json::from_str(r#"{"kind":"constant","value":0}"#).unwrap();
        assert_eq!(c, Schedule::Constant { value: 0.0 });
    }

    proptest::proptest! {
        #[test]
        fn power_is_strictly_decreasing(scale in 0.01f64..10.0, offset in 0.0f64..100.0, exp in 0.05f64..2.0, t in 1u32..100_000) {
            let s = power_schedule(scale, offset, exp).unwrap();
            let t = t as f64;
            proptest::prop_assert!(s.eval(t + 1.0).unwrap() < s.eval(t).unwrap());
        }
    }
}
