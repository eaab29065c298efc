//! Passive comparison estimators and the constant-threshold CUSUM variant.
//!
//! Every baseline predicts `μ̂_t` from `X_1..X_{t−1}` only, the same
//! information the detector has, so regret comparisons are like for like.
//! At `t = 1` they emit the configured initial prediction (0 by default).

use thiserror::Error;

use crate::detector::{self, DetectorConfig, DetectorError, ThresholdRule};
use crate::types::{RunTrace, StepOutcome, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("discount factor must lie in (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("constant threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("baselines run on scalar streams (got dimension {0})")]
    NotScalar(usize),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    SlidingWindow(usize),
    DiscountedMean(f64),
    /// Constant threshold `γ` on the raw scale, compared as `σ·C_t^r ≥ γ`.
    ConstantThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind) -> Result<Self, BaselineError> {
        match kind {
            BaselineKind::SlidingWindow(0) => return Err(BaselineError::ZeroWindow),
            BaselineKind::DiscountedMean(rho) if !(rho > 0.0 && rho < 1.0) => {
                return Err(BaselineError::InvalidDiscount(rho))
            }
            BaselineKind::ConstantThreshold(g) if g.is_nan() || g <= 0.0 => {
                return Err(BaselineError::InvalidThreshold(g))
            }
            _ => {}
        }
        Ok(Self { kind })
    }
}

fn passive_outcome(time: usize, prediction: f64) -> StepOutcome {
    StepOutcome {
        time,
        prediction,
        statistic: None,
        threshold: None,
        alarm: false,
        restart: 1,
    }
}

fn scalar(stream: &TimeSeries) -> Result<&[f64], BaselineError> {
    if stream.dimension() != 1 {
        return Err(BaselineError::NotScalar(stream.dimension()));
    }
    Ok(stream.values())
}

/// Mean of the last `min(W, t−1)` observations. `usize::MAX` acts as an
/// infinite window.
pub fn sliding_window_run(stream: &TimeSeries, window: usize) -> Result<RunTrace, BaselineError> {
    if window == 0 {
        return Err(BaselineError::ZeroWindow);
    }
    let xs = scalar(stream)?;
    let mut outcomes = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for t in 1..=xs.len() {
        let seen = t - 1;
        let count = seen.min(window);
        let prediction = if count == 0 { 0.0 } else { sum / count as f64 };
        outcomes.push(passive_outcome(t, prediction));
        sum += xs[t - 1];
        if seen + 1 > window {
            sum -= xs[seen - window];
        }
    }
    Ok(RunTrace::new(outcomes))
}

/// `Σ ρ^{t−1−i} X_i / Σ ρ^{t−1−i}` over `i ≤ t − 1`, updated in O(1).
pub fn discounted_mean_run(stream: &TimeSeries, rho: f64) -> Result<RunTrace, BaselineError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(BaselineError::InvalidDiscount(rho));
    }
    let xs = scalar(stream)?;
    let mut outcomes = Vec::with_capacity(xs.len());
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let prediction = if weight == 0.0 {
            0.0
        } else {
            weighted / weight
        };
        outcomes.push(passive_outcome(i + 1, prediction));
        weighted = rho * weighted + x;
        weight = rho * weight + 1.0;
    }
    Ok(RunTrace::new(outcomes))
}

/// ATC with the anytime threshold replaced by a constant. `gamma` is on
/// the raw scale (`γ = cσ`), so the standardized test is `C_t^r ≥ γ/σ`.
pub fn constant_threshold_run(
    stream: &TimeSeries,
    gamma: f64,
    config: DetectorConfig,
) -> Result<RunTrace, BaselineError> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(BaselineError::InvalidThreshold(gamma));
    }
    let xs = scalar(stream)?;
    let cfg = config.with_threshold(ThresholdRule::Constant(gamma / config.sigma))?;
    Ok(detector::run_values(xs, cfg)?)
}

/// Dispatches on [`BaselineKind`]; the detector settings are used only by
/// the constant-threshold variant.
pub fn run_baseline(
    stream: &TimeSeries,
    baseline: BaselineConfig,
    detector: DetectorConfig,
) -> Result<RunTrace, BaselineError> {
    match baseline.kind {
        BaselineKind::SlidingWindow(w) => sliding_window_run(stream, w),
        BaselineKind::DiscountedMean(rho) => discounted_mean_run(stream, rho),
        BaselineKind::ConstantThreshold(gamma) => constant_threshold_run(stream, gamma, detector),
    }
}
