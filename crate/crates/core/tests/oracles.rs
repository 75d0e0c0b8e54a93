mod common;

use common::{compact_form_reference, max_rel_diff, random_setup, time_triggered_reference};
use proptest::prelude::*;

use evtrig::analysis::{communication_rate, communication_rate_raw};
use evtrig::baselines::{BaselineConfig, BaselineEstimator, BaselineKind};
use evtrig::estimator::{Delivery, EventTriggeredEstimator, RunOptions, Simulator};
use evtrig::sensing::Schedules;

const EVERY_STEP: RunOptions = RunOptions { snapshot_stride: Some(1) };

fn run_estimator(s: &common::Setup, seed: u64) -> evtrig::analysis::RunTrace {
    EventTriggeredEstimator::new(&s.graph, &s.model, &s.schedules, &s.theta, Delivery::SameRound)
        .unwrap()
        .run(&s.initial, s.horizon, seed, EVERY_STEP)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matches_stacked_network_form(cfg_seed in any::<u64>(), run_seed in any::<u64>()) {
        let s = random_setup(cfg_seed, false);
        let trace = run_estimator(&s, run_seed);
        let reference = compact_form_reference(&s, run_seed);
        let events: Vec<(u64, usize)> = trace.events.iter().map(|e| (e.time, e.sensor)).collect();
        prop_assert_eq!(events, reference.events);
        for (snap, expected) in trace.snapshots.iter().zip(&reference.states) {
            let d = max_rel_diff(&snap.estimates, expected);
            prop_assert!(d <= 1e-9, "t={} diff={}", snap.t, d);
        }
        prop_assert_eq!(trace.snapshots.len(), reference.states.len());
    }

    #[test]
    fn zero_threshold_is_time_triggered(cfg_seed in any::<u64>(), run_seed in any::<u64>()) {
        let s = random_setup(cfg_seed, true);
        let trace = run_estimator(&s, run_seed);
        let reference = time_triggered_reference(&s, run_seed);
        for (snap, expected) in trace.snapshots.iter().zip(&reference) {
            prop_assert!(max_rel_diff(&snap.estimates, expected) <= 1e-9);
        }
        if s.graph.edge_count() > 0 {
            for t in 1..=s.horizon {
                prop_assert_eq!(communication_rate(&trace, t).unwrap(), 1.0);
                // Steps 0..T-1 run, so every sensor has fired min(t + 1, T) times by t.
                let raw = communication_rate_raw(&trace, t).unwrap();
                let expected = (t + 1).min(s.horizon) as f64 / t as f64;
                prop_assert!((raw - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn broadcast_deviation_never_exceeds_threshold(cfg_seed in any::<u64>(), run_seed in any::<u64>()) {
        let s = random_setup(cfg_seed, false);
        let trace = run_estimator(&s, run_seed);
        prop_assert_eq!(trace.max_deviation_excess.len() as u64, s.horizon);
        prop_assert!(trace.max_deviation_excess.iter().all(|&e| e <= 0.0));
    }

    #[test]
    fn event_counts_match_trigger_log(cfg_seed in any::<u64>(), run_seed in any::<u64>()) {
        let s = random_setup(cfg_seed, false);
        let trace = run_estimator(&s, run_seed);
        for i in 0..s.graph.n() {
            let times = trace.trigger_times(i);
            prop_assert_eq!(times.first(), Some(&0));
            prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(trace.trigger_count(i, s.horizon) as usize, times.len());
        }
    }
}

#[test]
fn shared_gain_every_round_equals_zero_threshold_estimator() {
    for seed in 0..30 {
        let s = random_setup(seed, true);
        // One shared step schedule, since the baseline uses a single gain.
        let step = s.schedules.step[0];
        let schedules = Schedules::uniform(s.graph.n(), step, evtrig::sensing::Schedule::Constant { value: 0.0 });
        let et = EventTriggeredEstimator::new(&s.graph, &s.model, &schedules, &s.theta, Delivery::SameRound)
            .unwrap()
            .run(&s.initial, s.horizon, seed, EVERY_STEP)
            .unwrap();
        let cfg = BaselineConfig { kind: BaselineKind::PeriodicSharedGain { step }, period: 1 };
        let shared = BaselineEstimator::new(&s.graph, &s.model, &s.theta, cfg)
            .unwrap()
            .run(&s.initial, s.horizon, seed, EVERY_STEP)
            .unwrap();
        for (a, b) in et.snapshots.iter().zip(&shared.snapshots) {
            assert!(max_rel_diff(&a.estimates, &b.estimates) <= 1e-12, "seed {seed} t={}", a.t);
        }
    }
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let s = random_setup(3, false);
    let a = run_estimator(&s, 11);
    let b = run_estimator(&s, 11);
    let c = run_estimator(&s, 12);
    assert_eq!(a, b);
    assert_ne!(a.sq_error, c.sq_error);
}
