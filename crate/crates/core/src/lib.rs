//! Anytime Tracking CUSUM (ATC): online tracking of a piecewise-constant
//! mean with an unknown number of change points.
//!
//! The crate bundles the streaming detector (scalar and vector), the passive
//! baselines it is compared against, seeded synthetic environments, a Monte
//! Carlo regret harness and a loader for the NAB CPU-utilization series.

pub mod baselines;
pub mod cli;
pub mod detector;
pub mod environments;
pub mod harness;
pub mod nab;
pub mod types;
pub mod vector;

pub use detector::{Detector, DetectorConfig, DetectorError, ScanMode, ThresholdRule};
pub use types::{Environment, RunTrace, StepOutcome, TimeSeries};
