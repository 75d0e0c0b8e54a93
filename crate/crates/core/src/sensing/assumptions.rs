//! Finite-horizon checks of the step-size and threshold conditions.
//!
//! Asymptotic statements cannot be decided from finitely many samples, so
//! symbolic verdicts are only issued when every schedule involved is a
//! recognised power law. Everything else is reported as trends with the
//! verdict [`Verdict::NumericOnly`], except the growth condition which has a
//! numeric tail test of its own.

use std::fmt;

use super::schedule::{Schedule, ScheduleError, Schedules};

/// Scales `a_0` at which the growth function is probed.
pub const GROWTH_SCALES: [f64; 3] = [0.1, 1.0, 10.0];

const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NumericOnly,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Fail dominates, then numeric-only, then pass.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Pass;
        for v in verdicts {
            match v {
                Verdict::Fail => return Verdict::Fail,
                Verdict::NumericOnly => out = Verdict::NumericOnly,
                Verdict::Pass => {}
            }
        }
        out
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NumericOnly => "numeric-only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Decreasing,
    Flat,
    Increasing,
}

impl Trend {
    fn between(early: f64, late: f64) -> Self {
        let tol = REL_TOL * early.abs().max(late.abs());
        if late < early - tol {
            Trend::Decreasing
        } else if late > early + tol {
            Trend::Increasing
        } else {
            Trend::Flat
        }
    }
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::Decreasing => "decreasing",
            Trend::Flat => "flat",
            Trend::Increasing => "increasing",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

impl ConditionReport {
    fn new(condition: &'static str, verdict: Verdict, detail: impl Into<String>) -> Self {
        Self { condition, verdict, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assumption1Report {
    pub horizon: u64,
    pub delta: f64,
    /// `max_{i, t <= horizon} |alpha_i(t)/alpha(t) - 1|`.
    pub ratio_max_deviation: f64,
    pub ratio_deviation_at_horizon: f64,
    pub ratio_trend: Trend,
    /// `sum_{t=1}^{horizon} alpha(t)`.
    pub step_sum: f64,
    /// `sum_{t=1}^{horizon} alpha(t)^{2(1-delta)}`.
    pub step_power_sum: f64,
    /// `1/alpha(horizon+1) - 1/alpha(horizon)`.
    pub alpha0_estimate: f64,
    /// `f_max(horizon) / alpha(horizon)^delta`.
    pub threshold_ratio_at_horizon: f64,
    pub threshold_ratio_trend: Trend,
    /// `sum_{t=1}^{horizon} alpha(t)^{1-delta} f_max(t)`.
    pub weighted_threshold_sum: f64,
    pub conditions: Vec<ConditionReport>,
}

impl Assumption1Report {
    pub fn verdict(&self) -> Verdict {
        Verdict::combine(self.conditions.iter().map(|c| c.verdict))
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// `a_0`, when the probed function came from schedules.
    pub scale: Option<f64>,
    /// `g` non-decreasing over the tail window.
    pub monotone: bool,
    /// `g(t) <= t` over the tail window.
    pub below_identity: bool,
    /// Minimum of `g(t + ceil(g(t))) - g(t)` over the first half of the tail window.
    pub min_increment_early: f64,
    /// Same over the second half.
    pub min_increment_late: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assumption2Report {
    pub horizon: u64,
    pub lower_threshold_monotone: bool,
    pub beta_monotone: bool,
    /// `mu` in `g(t) ~ t^mu` when all schedules are power laws.
    pub growth_exponent: Option<f64>,
    pub growth: Vec<GrowthReport>,
    pub conditions: Vec<ConditionReport>,
}

impl Assumption2Report {
    pub fn verdict(&self) -> Verdict {
        Verdict::combine(self.conditions.iter().map(|c| c.verdict))
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

/// Both checks together.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub convergence: Assumption1Report,
    pub triggering: Assumption2Report,
}

impl ScheduleReport {
    pub fn verdict(&self) -> Verdict {
        Verdict::combine([self.convergence.verdict(), self.triggering.verdict()])
    }

    /// Conditions whose verdict is `Fail`.
    pub fn failing(&self) -> Vec<&ConditionReport> {
        self.convergence
            .conditions
            .iter()
            .chain(&self.triggering.conditions)
            .filter(|c| c.verdict == Verdict::Fail)
            .collect()
    }
}

fn f_max(s: &Schedules, t: u64) -> f64 {
    s.threshold.iter().map(|f| f.at_step(t)).fold(f64::NEG_INFINITY, f64::max)
}

fn f_min(s: &Schedules, t: u64) -> f64 {
    s.threshold.iter().map(|f| f.at_step(t)).fold(f64::INFINITY, f64::min)
}

fn check_delta(delta: f64) -> Result<(), ScheduleError> {
    if (0.0..0.5).contains(&delta) {
        Ok(())
    } else {
        Err(ScheduleError::InvalidParameter(format!("delta must lie in [0, 1/2), got {delta}")))
    }
}

/// Asymptotic `(scale, exponent)` of the threshold envelope, or `None` if
/// some threshold is not a power law. Identically-zero thresholds are
/// skipped; `Some(None)` means every threshold is zero.
fn threshold_laws(s: &Schedules) -> Option<Vec<(f64, f64)>> {
    s.threshold
        .iter()
        .map(Schedule::power_law)
        .collect::<Option<Vec<_>>>()
        .map(|v| v.into_iter().filter(|&(c, _)| c > 0.0).collect())
}

pub fn check_assumption1(s: &Schedules, horizon: u64) -> Result<Assumption1Report, ScheduleError> {
    if horizon < 2 {
        return Err(ScheduleError::InvalidParameter(format!("horizon must be >= 2, got {horizon}")));
    }
    let delta = s.declared.delta;
    check_delta(delta)?;
    let reference = s.reference();
    let alpha = |t: u64| reference.at_step(t);

    let mid = horizon / 2;
    let mut ratio_max_deviation = 0.0f64;
    let mut ratio_dev_mid = 0.0f64;
    let mut ratio_dev_end = 0.0f64;
    let (mut step_sum, mut step_power_sum, mut weighted_threshold_sum) = (0.0, 0.0, 0.0);
    for t in 1..=horizon {
        let a = alpha(t);
        let dev = s.step.iter().map(|st| (st.at_step(t) / a - 1.0).abs()).fold(0.0, f64::max);
        ratio_max_deviation = ratio_max_deviation.max(dev);
        if t == mid {
            ratio_dev_mid = dev;
        }
        if t == horizon {
            ratio_dev_end = dev;
        }
        step_sum += a;
        step_power_sum += a.powf(2.0 * (1.0 - delta));
        weighted_threshold_sum += a.powf(1.0 - delta) * f_max(s, t);
    }
    let alpha0_estimate = 1.0 / alpha(horizon + 1) - 1.0 / alpha(horizon);
    let threshold_ratio = |t: u64| f_max(s, t) / alpha(t).powf(delta);
    let threshold_ratio_at_horizon = threshold_ratio(horizon);

    let mut conditions = Vec::with_capacity(4);
    let step_laws: Option<Vec<(f64, f64)>> = s.step.iter().map(Schedule::power_law).collect();
    match (reference.power_law(), step_laws) {
        (Some((sa, p)), Some(laws)) => {
            let same = laws.iter().all(|&(c, q)| (c - sa).abs() <= 1e-12 * sa && (q - p).abs() <= 1e-12);
            let vanishing = p > 0.0;
            let divergent = p <= 1.0;
            conditions.push(ConditionReport::new(
                "1.i.a",
                Verdict::from_bool(same && vanishing && divergent),
                format!(
                    "alpha ~ {sa}*t^-{p}: ratio->1 {same}, alpha->0 {vanishing}, sum alpha diverges {divergent} (exponent <= 1)"
                ),
            ));
            let e = 2.0 * (1.0 - delta) * p;
            conditions.push(ConditionReport::new(
                "1.i.b",
                Verdict::from_bool(e > 1.0),
                format!("sum alpha^(2(1-delta)) converges iff 2(1-delta)*{p} = {e:.4} > 1"),
            ));
        }
        _ => {
            conditions.push(ConditionReport::new(
                "1.i.a",
                Verdict::NumericOnly,
                format!(
                    "ratio deviation {} at t={horizon}, partial sum {step_sum:.4}, alpha0 ~ {alpha0_estimate:.4}",
                    Trend::between(ratio_dev_mid, ratio_dev_end)
                ),
            ));
            conditions.push(ConditionReport::new(
                "1.i.b",
                Verdict::NumericOnly,
                format!("partial sum {step_power_sum:.4}"),
            ));
        }
    }

    match (reference.power_law(), threshold_laws(s)) {
        (Some((_, p)), Some(laws)) => match laws.iter().map(|&(_, q)| q).reduce(f64::min) {
            None => {
                conditions.push(ConditionReport::new("1.iii.a", Verdict::Pass, "thresholds identically zero"));
                conditions.push(ConditionReport::new("1.iii.b", Verdict::Pass, "thresholds identically zero"));
            }
            Some(q) => {
                conditions.push(ConditionReport::new(
                    "1.iii.a",
                    Verdict::from_bool(q > delta * p),
                    format!("f_max/alpha^delta ~ t^-({q} - {delta}*{p}) -> 0 iff exponent > 0"),
                ));
                let e = (1.0 - delta) * p + q;
                conditions.push(ConditionReport::new(
                    "1.iii.b",
                    Verdict::from_bool(e > 1.0),
                    format!("sum alpha^(1-delta) f_max converges iff (1-delta)*{p} + {q} = {e:.4} > 1"),
                ));
            }
        },
        _ => {
            conditions.push(ConditionReport::new(
                "1.iii.a",
                Verdict::NumericOnly,
                format!(
                    "f_max/alpha^delta = {threshold_ratio_at_horizon:.4e} at t={horizon}, {}",
                    Trend::between(threshold_ratio(mid), threshold_ratio_at_horizon)
                ),
            ));
            conditions.push(ConditionReport::new(
                "1.iii.b",
                Verdict::NumericOnly,
                format!("partial sum {weighted_threshold_sum:.4}"),
            ));
        }
    }

    Ok(Assumption1Report {
        horizon,
        delta,
        ratio_max_deviation,
        ratio_deviation_at_horizon: ratio_dev_end,
        ratio_trend: Trend::between(ratio_dev_mid, ratio_dev_end),
        step_sum,
        step_power_sum,
        alpha0_estimate,
        threshold_ratio_at_horizon,
        threshold_ratio_trend: Trend::between(threshold_ratio(mid), threshold_ratio_at_horizon),
        weighted_threshold_sum,
        conditions,
    })
}

/// Numeric tail test of: `g` non-decreasing, `g(t) <= t`, and
/// `g(t + g(t)) - g(t)` bounded below by a positive constant, over
/// `t in [horizon/10, horizon]`. The last part passes when the minimum
/// increment is positive and does not shrink from the first half of the
/// window to the second.
pub fn check_growth_condition(g: impl Fn(f64) -> f64, horizon: u64) -> GrowthReport {
    let start = (horizon / 10).max(1);
    let mid = (start + horizon) / 2;
    let mut monotone = true;
    let mut below_identity = true;
    let (mut early, mut late) = (f64::INFINITY, f64::INFINITY);
    let mut prev = g(start as f64);
    for t in start..=horizon {
        let tf = t as f64;
        let gt = g(tf);
        if !gt.is_finite() {
            monotone = false;
            below_identity = false;
            continue;
        }
        if gt < prev - REL_TOL * prev.abs() {
            monotone = false;
        }
        prev = gt;
        if gt > tf {
            below_identity = false;
        }
        let jump = gt.max(0.0).ceil();
        let inc = g(tf + jump) - gt;
        if t <= mid {
            early = early.min(inc);
        } else {
            late = late.min(inc);
        }
    }
    if !late.is_finite() {
        late = early;
    }
    let bounded = late > 0.0 && late >= early * (1.0 - 1e-6);
    GrowthReport {
        scale: None,
        monotone,
        below_identity,
        min_increment_early: early,
        min_increment_late: late,
        verdict: Verdict::from_bool(monotone && below_identity && bounded),
    }
}

fn is_nonincreasing(f: impl Fn(u64) -> f64, horizon: u64) -> bool {
    let mut prev = f(1);
    for t in 2..=horizon {
        let v = f(t);
        if v > prev + REL_TOL * prev.abs() {
            return false;
        }
        prev = v;
    }
    true
}

/// Conditions on the lower threshold envelope `f_bar = f_min` and
/// `beta(t) = alpha(t)^(1 - 2(1-delta)/rho)`, with
/// `g(t) = a_0 f_bar(2t) / beta(t)` probed at each of [`GROWTH_SCALES`].
pub fn check_assumption2(s: &Schedules, horizon: u64) -> Result<Assumption2Report, ScheduleError> {
    if horizon < 2 {
        return Err(ScheduleError::InvalidParameter(format!("horizon must be >= 2, got {horizon}")));
    }
    let delta = s.declared.delta;
    let rho = s.declared.rho;
    check_delta(delta)?;
    if !(rho > 2.0) {
        return Err(ScheduleError::InvalidParameter(format!("rho must exceed 2, got {rho}")));
    }
    let reference = s.reference();
    let beta_exp = 1.0 - 2.0 * (1.0 - delta) / rho;
    // Continuous-time extensions for the growth probe, which evaluates at
    // non-integer arguments.
    let alpha_c = |t: f64| reference.eval(t.max(1.0)).unwrap_or(f64::NAN);
    let fbar_c =
        |t: f64| s.threshold.iter().map(|f| f.eval(t.max(1.0)).unwrap_or(f64::NAN)).fold(f64::INFINITY, f64::min);
    let beta_c = |t: f64| alpha_c(t).powf(beta_exp);

    let lower_threshold_monotone = is_nonincreasing(|t| f_min(s, t), horizon);
    let beta_monotone = is_nonincreasing(|t| reference.at_step(t).powf(beta_exp), horizon);

    let growth: Vec<GrowthReport> = GROWTH_SCALES
        .iter()
        .map(|&a0| {
            let mut r = check_growth_condition(|t| a0 * fbar_c(2.0 * t) / beta_c(t), horizon);
            r.scale = Some(a0);
            r
        })
        .collect();

    let growth_exponent = match (reference.power_law(), threshold_laws(s)) {
        (Some((_, p)), Some(laws)) if laws.len() == s.threshold.len() => {
            laws.iter().map(|&(_, q)| q).reduce(f64::max).map(|q| p * beta_exp - q)
        }
        _ => None,
    };

    let mut conditions = vec![
        ConditionReport::new(
            "2.i",
            Verdict::from_bool(lower_threshold_monotone),
            format!("f_min non-increasing on [1, {horizon}]: {lower_threshold_monotone}"),
        ),
        ConditionReport::new(
            "2.ii",
            Verdict::from_bool(beta_monotone),
            format!("beta = alpha^{beta_exp:.4} non-increasing on [1, {horizon}]: {beta_monotone}"),
        ),
    ];
    conditions.push(match growth_exponent {
        Some(mu) => ConditionReport::new(
            "2.iii",
            Verdict::from_bool(mu > 0.5 && mu < 1.0),
            format!("g ~ a0*t^{mu:.4}; sufficient when exponent in (1/2, 1)"),
        ),
        None => {
            let v = Verdict::combine(growth.iter().map(|g| g.verdict));
            ConditionReport::new("2.iii", v, format!("numeric tail test over a0 in {GROWTH_SCALES:?}: {v}"))
        }
    });

    Ok(Assumption2Report { horizon, lower_threshold_monotone, beta_monotone, growth_exponent, growth, conditions })
}

pub fn check_schedules(s: &Schedules, horizon: u64) -> Result<ScheduleReport, ScheduleError> {
    Ok(ScheduleReport { convergence: check_assumption1(s, horizon)?, triggering: check_assumption2(s, horizon)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{power_schedule, DeclaredConstants};

    fn power(offset: f64, exponent: f64) -> Schedule {
        power_schedule(1.0, offset, exponent).unwrap()
    }

    fn family(eps0: f64, delta: f64, rho: f64) -> Schedules {
        Schedules::uniform(3, power(0.0, 1.0), power(0.0, eps0)).with_declared(DeclaredConstants { delta, rho })
    }

    #[test]
    fn exponent_arithmetic_for_seven_tenths() {
        let s = Schedules::uniform(2, power(0.0, 0.7), power(0.0, 0.5))
            .with_declared(DeclaredConstants { delta: 0.2, rho: 4.0 });
        let r = check_assumption1(&s, 1000).unwrap();
        assert_eq!(r.condition("1.i.a").unwrap().verdict, Verdict::Pass);
        assert_eq!(r.condition("1.i.b").unwrap().verdict, Verdict::Pass);
        assert_eq!(r.ratio_max_deviation, 0.0);
        assert!(r.step_sum > r.step_power_sum);
    }

    #[test]
    fn harmonic_step_has_unit_alpha0() {
        let s = family(0.3, 0.1, 8.0);
        let r = check_assumption1(&s, 500).unwrap();
        assert!((r.alpha0_estimate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn summable_step_fails() {
        let s = Schedules::uniform(1, power(0.0, 1.2), power(0.0, 0.5));
        let r = check_assumption1(&s, 100).unwrap();
        assert_eq!(r.condition("1.i.a").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn mismatched_sensor_rates_fail_ratio() {
        let mut s = Schedules::uniform(2, power(0.0, 0.7), power(0.0, 0.5));
        s.step[1] = power_schedule(2.0, 0.0, 0.7).unwrap();
        let r = check_assumption1(&s, 100).unwrap();
        assert_eq!(r.condition("1.i.a").unwrap().verdict, Verdict::Fail);
        assert!((r.ratio_max_deviation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn offset_does_not_change_symbolic_verdict() {
        let s = Schedules::uniform(1, power(100.0, 0.7), power(0.0, 0.5))
            .with_declared(DeclaredConstants { delta: 0.2, rho: 4.0 });
        let r = check_assumption1(&s, 1000).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
    }

    #[test]
    fn zero_threshold_passes_threshold_conditions() {
        let s = Schedules::uniform(2, power(0.0, 0.7), Schedule::Constant { value: 0.0 })
            .with_declared(DeclaredConstants { delta: 0.2, rho: 4.0 });
        let r = check_assumption1(&s, 100).unwrap();
        assert_eq!(r.condition("1.iii.b").unwrap().verdict, Verdict::Pass);
        let r2 = check_assumption2(&s, 100).unwrap();
        assert_eq!(r2.condition("2.iii").unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn bad_inputs() {
        let s = family(0.3, 0.1, 8.0);
        assert!(check_assumption1(&s, 1).is_err());
        let s = family(0.3, 0.6, 8.0);
        assert!(check_assumption1(&s, 10).is_err());
        let s = family(0.3, 0.1, 2.0);
        assert!(check_assumption2(&s, 10).is_err());
    }

    #[test]
    fn growth_of_three_quarter_power() {
        let r = check_growth_condition(|t| t.powf(0.75), 10_000);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.min_increment_late > r.min_increment_early);
    }

    #[test]
    fn constant_growth_fails() {
        let r = check_growth_condition(|_| 3.0, 10_000);
        assert_eq!(r.min_increment_late, 0.0);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn slow_growth_fails_numerically() {
        // t^0.3: increments ~ 0.3 t^-0.4 -> 0.
        let r = check_growth_condition(|t| t.powf(0.3), 10_000);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn harmonic_family_boundary() {
        // 2(1-delta)/rho = 0.225.
        let ok = check_schedules(&family(0.2, 0.1, 8.0), 2000).unwrap();
        assert_eq!(ok.verdict(), Verdict::Pass, "{:?}", ok.failing());
        let bad = check_schedules(&family(0.3, 0.1, 8.0), 2000).unwrap();
        assert_eq!(bad.verdict(), Verdict::Fail);
        let names: Vec<_> = bad.failing().iter().map(|c| c.condition).collect();
        assert_eq!(names, vec!["2.iii"]);
    }

    #[test]
    fn first_example_schedules_report() {
        let s = Schedules::uniform(7, power(0.0, 0.7), power(0.0, 0.5))
            .with_declared(DeclaredConstants { delta: 0.1, rho: 4.0 });
        let r = check_assumption2(&s, 10_000).unwrap();
        assert_eq!(r.growth.len(), 3);
        let mu = r.growth_exponent.unwrap();
        assert!((mu - (0.7 * 0.55 - 0.5)).abs() < 1e-12);
    }
}
