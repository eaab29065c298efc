//! Scalar Anytime Tracking CUSUM.
//!
//! The detector keeps prefix sums `G_0..G_{t-1}` of everything observed so
//! far, a restart time `r` and the per-restart error budget `α_r`. At each
//! time `t ≥ r + 2` it scans every split `r < k < t` (or a geometric subset
//! of them) for the largest standardized two-sample mean difference and
//! compares it with an anytime threshold that grows like `log(t - r)`.
//! An alarm sets `r ← t − 1`. The prediction is always the running mean of
//! `X_r..X_{t−1}`.
//!
//! Protocol: [`Detector::step`] emits the outcome for the current time using
//! observations strictly before it; [`Detector::observe`] then supplies
//! `X_t` and advances the clock.

use std::f64::consts::PI;

use thiserror::Error;

use crate::types::{RunTrace, StepOutcome, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("multiscale base must exceed 1, got {0}")]
    InvalidBase(f64),
    #[error("constant threshold must be positive, got {0}")]
    InvalidConstantThreshold(f64),
    #[error("split k={k} outside ({r}, {t})")]
    SplitOutOfRange { k: usize, r: usize, t: usize },
    #[error("no valid split at t={t} with restart r={r}")]
    NoSplit { r: usize, t: usize },
    #[error("threshold needs t > r and alpha_r in (0, 1) (t={t}, r={r}, alpha_r={alpha_r})")]
    InvalidThresholdArgs { t: usize, r: usize, alpha_r: f64 },
    #[error("protocol violation at t={t}: {what}")]
    Protocol { t: usize, what: &'static str },
    #[error("observation at t={t} is not finite")]
    NonFiniteObservation { t: usize },
    #[error("expected {expected}-dimensional observation, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("stream is empty")]
    EmptyStream,
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Which split points the scan visits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanMode {
    /// Every `k` in `(r, t)`.
    Full,
    /// Offsets `d ∈ {1, ⌈b⌉, ⌈b²⌉, …}` on both ends: `k = r + d` and `k = t − d`.
    Multiscale { base: f64 },
}

/// How the alarm threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// `γ_t^r = sqrt(6 log(t−r) + 2 log(1/α_r) + 2 log(π²/3))`.
    Anytime,
    /// Fixed `γ` on the standardized scale of `C_t^r`.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub sigma: f64,
    pub alpha: f64,
    pub scan: ScanMode,
    pub threshold: ThresholdRule,
    /// Prediction emitted at `t = 1`, before any data.
    pub initial_prediction: f64,
}

impl DetectorConfig {
    pub fn new(sigma: f64, alpha: f64) -> Result<Self, DetectorError> {
        let config = Self {
            sigma,
            alpha,
            scan: ScanMode::Full,
            threshold: ThresholdRule::Anytime,
            initial_prediction: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_scan(mut self, scan: ScanMode) -> Result<Self, DetectorError> {
        self.scan = scan;
        self.validate()?;
        Ok(self)
    }

    pub fn with_threshold(mut self, threshold: ThresholdRule) -> Result<Self, DetectorError> {
        self.threshold = threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn with_initial_prediction(mut self, value: f64) -> Self {
        self.initial_prediction = value;
        self
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(DetectorError::InvalidSigma(self.sigma));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DetectorError::InvalidAlpha(self.alpha));
        }
        if let ScanMode::Multiscale { base } = self.scan {
            if !(base > 1.0 && base.is_finite()) {
                return Err(DetectorError::InvalidBase(base));
            }
        }
        if let ThresholdRule::Constant(gamma) = self.threshold {
            // +inf is a legal sentinel: never alarm.
            if gamma.is_nan() || gamma <= 0.0 {
                return Err(DetectorError::InvalidConstantThreshold(gamma));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Threshold and candidate grid
// ---------------------------------------------------------------------------

/// Error budget allotted to restart `r`: `α_r = 6α / (π² r²)`.
pub fn restart_budget(alpha: f64, r: usize) -> f64 {
    let r = r as f64;
    6.0 * alpha / (PI * PI * r * r)
}

/// Anytime threshold `γ_t^r` (natural logarithms).
pub fn threshold(t: usize, r: usize, alpha_r: f64) -> Result<f64, DetectorError> {
    if t <= r || !(alpha_r > 0.0 && alpha_r < 1.0) {
        return Err(DetectorError::InvalidThresholdArgs { t, r, alpha_r });
    }
    Ok(anytime_threshold_sq(t - r, alpha_r).sqrt())
}

/// `(γ_t^r)²` as a function of the elapsed time `t − r`.
pub(crate) fn anytime_threshold_sq(elapsed: usize, alpha_r: f64) -> f64 {
    6.0 * (elapsed as f64).ln() + 2.0 * (1.0 / alpha_r).ln() + 2.0 * (PI * PI / 3.0).ln()
}

/// Fills `out` with the multiscale split candidates in `(r, t)`, sorted
/// ascending and deduplicated.
pub fn multiscale_candidates(r: usize, t: usize, base: f64, out: &mut Vec<usize>) {
    out.clear();
    if t < r + 2 {
        return;
    }
    let n = t - r;
    let mut power = 1.0_f64;
    let mut last_offset = 0;
    loop {
        let offset = power.ceil() as usize;
        if offset >= n {
            break;
        }
        // Small bases can repeat an offset; skip it.
        if offset != last_offset {
            out.push(r + offset);
            out.push(t - offset);
            last_offset = offset;
        }
        power *= base;
    }
    out.sort_unstable();
    out.dedup();
}

/// Upper bound `2⌈log_b(t − r)⌉ + 1` on the number of multiscale candidates.
pub fn multiscale_bound(elapsed: usize, base: f64) -> usize {
    2 * ((elapsed as f64).ln() / base.ln()).ceil() as usize + 1
}

// ---------------------------------------------------------------------------
// Split scoring
// ---------------------------------------------------------------------------

/// Lookup tables for the fused split score: `index[i] = i` and
/// `inverse[i] = 1/i` (with `inverse[0] = 0`).
#[derive(Debug, Clone, Default)]
pub(crate) struct SplitTables {
    index: Vec<f64>,
    inverse: Vec<f64>,
}

impl SplitTables {
    pub(crate) fn ensure(&mut self, n: usize) {
        if self.index.is_empty() {
            self.index.push(0.0);
            self.inverse.push(0.0);
        }
        while self.index.len() <= n {
            let i = self.index.len() as f64;
            self.index.push(i);
            self.inverse.push(1.0 / i);
        }
    }

    #[inline]
    pub(crate) fn index(&self, i: usize) -> f64 {
        self.index[i]
    }

    #[inline]
    pub(crate) fn weight(&self, n1: usize, n: usize) -> f64 {
        self.inverse[n1] + self.inverse[n - n1]
    }
}

/// Scaled squared split score `q(n1) = (L·n − S·n1)² (1/n1 + 1/n2)` where
/// `L` is the left block sum, `S` the total and `n2 = n − n1`.
///
/// `σ · D̂ = sqrt(q) / n`, so maximizing `q` maximizes the statistic.
#[inline]
fn split_score(g: &[f64], tables: &SplitTables, n1: usize) -> f64 {
    let n = g.len() - 1;
    let base = g[0];
    let total = g[n] - base;
    let left = g[n1] - base;
    let diff = left * tables.index(n) - total * tables.index(n1);
    diff * diff * tables.weight(n1, n)
}

/// Largest `q` over every split of `g = [G_{r−1}, …, G_{t−1}]`.
///
/// Hot loop: kept branch-light with independent lanes so it vectorizes.
fn full_scan_max(g: &[f64], tables: &SplitTables) -> f64 {
    let n = g.len() - 1;
    let base = g[0];
    let total = g[n] - base;
    let nf = tables.index(n);
    let sums = &g[1..n];
    let index = &tables.index[1..n];
    let inv_left = &tables.inverse[1..n];
    let inv_right = &tables.inverse[1..n];
    let m = n - 1;

    const LANES: usize = 8;
    let mut best = [0.0_f64; LANES];
    let mut chunks_s = sums.chunks_exact(LANES);
    let mut chunks_i = index.chunks_exact(LANES);
    let mut chunks_l = inv_left.chunks_exact(LANES);
    let mut chunks_r = inv_right.rchunks_exact(LANES);
    for (((s, ix), il), ir) in (&mut chunks_s)
        .zip(&mut chunks_i)
        .zip(&mut chunks_l)
        .zip(&mut chunks_r)
    {
        for l in 0..LANES {
            let left = s[l] - base;
            let diff = left * nf - total * ix[l];
            let q = diff * diff * (il[l] + ir[LANES - 1 - l]);
            best[l] = if q > best[l] { q } else { best[l] };
        }
    }
    let mut max = best.iter().copied().fold(0.0, f64::max);
    let done = m - chunks_s.remainder().len();
    for i in done..m {
        let left = sums[i] - base;
        let diff = left * nf - total * index[i];
        let q = diff * diff * (inv_left[i] + inv_right[m - 1 - i]);
        if q > max {
            max = q;
        }
    }
    max
}

// ---------------------------------------------------------------------------
// State and detector
// ---------------------------------------------------------------------------

/// Live state of the scalar detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    current_time: usize,
    restart: usize,
    alpha_r: f64,
    prefix_sums: Vec<f64>,
}

impl DetectorState {
    fn new(alpha: f64) -> Self {
        Self {
            current_time: 1,
            restart: 1,
            alpha_r: restart_budget(alpha, 1),
            prefix_sums: vec![0.0],
        }
    }

    /// Next time step to process.
    pub fn current_time(&self) -> usize {
        self.current_time
    }

    pub fn restart(&self) -> usize {
        self.restart
    }

    pub fn alpha_r(&self) -> f64 {
        self.alpha_r
    }

    /// `G_0..G_{t−1}`.
    pub fn prefix_sums(&self) -> &[f64] {
        &self.prefix_sums
    }

    /// `Σ_{i=from}^{to−1} X_i` from prefix-sum differences.
    pub fn block_sum(&self, from: usize, to: usize) -> f64 {
        self.prefix_sums[to - 1] - self.prefix_sums[from - 1]
    }

    fn window(&self) -> &[f64] {
        &self.prefix_sums[self.restart - 1..self.current_time]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitingStep,
    AwaitingObservation,
}

/// Streaming scalar detector.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    state: DetectorState,
    phase: Phase,
    tables: SplitTables,
    candidates: Vec<usize>,
    evaluations: u64,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self, DetectorError> {
        config.validate()?;
        let mut tables = SplitTables::default();
        tables.ensure(1);
        Ok(Self {
            config,
            state: DetectorState::new(config.alpha),
            phase: Phase::AwaitingStep,
            tables,
            candidates: Vec::new(),
            evaluations: 0,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    /// Number of split candidates scored so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// `D̂_{k,t}^r` evaluated directly from the two block means.
    pub fn glr_statistic(&self, k: usize) -> Result<f64, DetectorError> {
        let (r, t) = (self.state.restart, self.state.current_time);
        if k <= r || k >= t {
            return Err(DetectorError::SplitOutOfRange { k, r, t });
        }
        let n1 = (k - r) as f64;
        let n2 = (t - k) as f64;
        let left_mean = self.state.block_sum(r, k) / n1;
        let right_mean = self.state.block_sum(k, t) / n2;
        Ok((n1 * n2 / (n1 + n2)).sqrt() * (left_mean - right_mean).abs() / self.config.sigma)
    }

    /// `C_t^r` and its maximizing split (smallest `k` on ties).
    pub fn scan(&mut self) -> Result<(f64, usize), DetectorError> {
        let (r, t) = (self.state.restart, self.state.current_time);
        if t < r + 2 {
            return Err(DetectorError::NoSplit { r, t });
        }
        let g = self.state.window();
        let mut best = (f64::NEG_INFINITY, 0);
        match self.config.scan {
            ScanMode::Full => {
                for n1 in 1..t - r {
                    let q = split_score(g, &self.tables, n1);
                    if q > best.0 {
                        best = (q, n1);
                    }
                }
                self.evaluations += (t - r - 1) as u64;
            }
            ScanMode::Multiscale { base } => {
                multiscale_candidates(r, t, base, &mut self.candidates);
                for &k in &self.candidates {
                    let q = split_score(g, &self.tables, k - r);
                    if q > best.0 {
                        best = (q, k - r);
                    }
                }
                self.evaluations += self.candidates.len() as u64;
            }
        }
        Ok((self.scale(best.0, t - r), r + best.1))
    }

    fn scale(&self, q: f64, n: usize) -> f64 {
        q.sqrt() / (self.tables.index(n) * self.config.sigma)
    }

    /// Statistic only; the per-step hot path.
    fn scan_statistic(&mut self) -> f64 {
        let (r, t) = (self.state.restart, self.state.current_time);
        let g = self.state.window();
        let q = match self.config.scan {
            ScanMode::Full => {
                self.evaluations += (t - r - 1) as u64;
                full_scan_max(g, &self.tables)
            }
            ScanMode::Multiscale { base } => {
                multiscale_candidates(r, t, base, &mut self.candidates);
                self.evaluations += self.candidates.len() as u64;
                self.candidates
                    .iter()
                    .map(|&k| split_score(g, &self.tables, k - r))
                    .fold(0.0, f64::max)
            }
        };
        self.scale(q, t - r)
    }

    fn current_threshold(&self) -> f64 {
        match self.config.threshold {
            ThresholdRule::Anytime => anytime_threshold_sq(
                self.state.current_time - self.state.restart,
                self.state.alpha_r,
            )
            .sqrt(),
            ThresholdRule::Constant(gamma) => gamma,
        }
    }

    /// Runs the test for the current time (restarting on alarm) and emits the
    /// prediction.
    pub fn step(&mut self) -> Result<StepOutcome, DetectorError> {
        let t = self.state.current_time;
        if self.phase != Phase::AwaitingStep {
            return Err(DetectorError::Protocol {
                t,
                what: "step called twice without an observation",
            });
        }
        let mut outcome = StepOutcome {
            time: t,
            prediction: 0.0,
            statistic: None,
            threshold: None,
            alarm: false,
            restart: self.state.restart,
        };
        if t >= self.state.restart + 2 {
            let statistic = self.scan_statistic();
            let gamma = self.current_threshold();
            outcome.statistic = Some(statistic);
            outcome.threshold = Some(gamma);
            if statistic >= gamma {
                self.state.restart = t - 1;
                self.state.alpha_r = restart_budget(self.config.alpha, self.state.restart);
                outcome.alarm = true;
                outcome.restart = self.state.restart;
            }
        }
        outcome.prediction = self.prediction();
        self.phase = Phase::AwaitingObservation;
        Ok(outcome)
    }

    /// Running mean since the restart, `(G_{t−1} − G_{r−1}) / (t − r)`.
    pub fn prediction(&self) -> f64 {
        let (r, t) = (self.state.restart, self.state.current_time);
        if t == r {
            self.config.initial_prediction
        } else {
            self.state.block_sum(r, t) / (t - r) as f64
        }
    }

    /// Supplies `X_t` and advances to `t + 1`.
    pub fn observe(&mut self, x: f64) -> Result<(), DetectorError> {
        let t = self.state.current_time;
        if self.phase != Phase::AwaitingObservation {
            return Err(DetectorError::Protocol {
                t,
                what: "observation supplied before step",
            });
        }
        if !x.is_finite() {
            return Err(DetectorError::NonFiniteObservation { t });
        }
        let last = *self.state.prefix_sums.last().expect("G_0 always present");
        self.state.prefix_sums.push(last + x);
        self.state.current_time += 1;
        self.tables.ensure(self.state.current_time);
        self.phase = Phase::AwaitingStep;
        Ok(())
    }
}

/// Runs the detector over a scalar stream, one outcome per time step.
pub fn run(stream: &TimeSeries, config: DetectorConfig) -> Result<RunTrace, DetectorError> {
    if stream.dimension() != 1 {
        return Err(DetectorError::DimensionMismatch {
            expected: 1,
            got: stream.dimension(),
        });
    }
    run_values(stream.values(), config)
}

/// [`run`] over a plain slice.
pub fn run_values(values: &[f64], config: DetectorConfig) -> Result<RunTrace, DetectorError> {
    if values.is_empty() {
        return Err(DetectorError::EmptyStream);
    }
    let mut detector = Detector::new(config)?;
    let mut outcomes = Vec::with_capacity(values.len());
    for &x in values {
        outcomes.push(detector.step()?);
        detector.observe(x)?;
    }
    Ok(RunTrace::new(outcomes))
}
