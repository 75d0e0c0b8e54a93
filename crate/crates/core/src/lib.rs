//! Event-triggered distributed estimation of a static parameter over a
//! directed sensor network.
//!
//! Sensors run a consensus+innovations update and broadcast their estimate
//! to their children only when it has drifted from the last broadcast value
//! by more than a decaying threshold. The crate provides the estimator,
//! time-triggered baselines, graph and schedule checkers, run metrics, and
//! a Monte Carlo harness with a CLI (`evtrig`).

pub mod analysis;
pub mod baselines;
pub mod estimator;
pub mod graph;
pub mod harness;
pub mod seeding;
pub mod sensing;
