//! ATC for `d`-dimensional observations.
//!
//! Block means become vectors and the absolute mean difference becomes an
//! ℓ2 norm. The default threshold adds `sqrt(d)` to the scalar anytime
//! threshold; [`VectorThreshold::Scalar`] substitutes the scalar threshold
//! so that `d = 1` reproduces the scalar detector exactly.

use crate::detector::{
    anytime_threshold_sq, multiscale_candidates, restart_budget, DetectorConfig, DetectorError,
    ScanMode, SplitTables, ThresholdRule,
};
use crate::types::{RunTrace, StepOutcome, TimeSeries};

/// `sqrt(d) + sqrt(6 log(t−r) + 2 log(1/α_r) + 2 log(π²/3))`.
pub fn vector_threshold(t: usize, r: usize, alpha_r: f64, d: usize) -> Result<f64, DetectorError> {
    if t <= r || !(alpha_r > 0.0 && alpha_r < 1.0) || d == 0 {
        return Err(DetectorError::InvalidThresholdArgs { t, r, alpha_r });
    }
    Ok((d as f64).sqrt() + anytime_threshold_sq(t - r, alpha_r).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorThreshold {
    /// Dimension-inflated anytime threshold.
    Dimensional,
    /// The scalar anytime threshold, ignoring `d`.
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorDetectorConfig {
    pub base: DetectorConfig,
    pub dimension: usize,
    pub threshold: VectorThreshold,
}

impl VectorDetectorConfig {
    pub fn new(base: DetectorConfig, dimension: usize) -> Result<Self, DetectorError> {
        base.validate()?;
        if dimension == 0 {
            return Err(DetectorError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(Self {
            base,
            dimension,
            threshold: VectorThreshold::Dimensional,
        })
    }

    pub fn with_scalar_threshold(mut self) -> Self {
        self.threshold = VectorThreshold::Scalar;
        self
    }
}

/// Live state: flat prefix sums, `G_i` occupies `[i·d, (i+1)·d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDetectorState {
    current_time: usize,
    restart: usize,
    alpha_r: f64,
    dimension: usize,
    prefix_sums: Vec<f64>,
}

impl VectorDetectorState {
    pub fn current_time(&self) -> usize {
        self.current_time
    }

    pub fn restart(&self) -> usize {
        self.restart
    }

    pub fn alpha_r(&self) -> f64 {
        self.alpha_r
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `G_i`.
    pub fn prefix(&self, i: usize) -> &[f64] {
        &self.prefix_sums[i * self.dimension..(i + 1) * self.dimension]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitingStep,
    AwaitingObservation,
}

#[derive(Debug, Clone)]
pub struct VectorDetector {
    config: VectorDetectorConfig,
    state: VectorDetectorState,
    phase: Phase,
    tables: SplitTables,
    candidates: Vec<usize>,
    evaluations: u64,
    component_ops: u64,
}

impl VectorDetector {
    pub fn new(config: VectorDetectorConfig) -> Result<Self, DetectorError> {
        config.base.validate()?;
        let d = config.dimension;
        let mut tables = SplitTables::default();
        tables.ensure(1);
        Ok(Self {
            config,
            state: VectorDetectorState {
                current_time: 1,
                restart: 1,
                alpha_r: restart_budget(config.base.alpha, 1),
                dimension: d,
                prefix_sums: vec![0.0; d],
            },
            phase: Phase::AwaitingStep,
            tables,
            candidates: Vec::new(),
            evaluations: 0,
            component_ops: 0,
        })
    }

    pub fn state(&self) -> &VectorDetectorState {
        &self.state
    }

    /// Split candidates scored so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Per-coordinate operations performed by the scan (`d` per candidate).
    pub fn component_ops(&self) -> u64 {
        self.component_ops
    }

    /// `D̂_{k,t}^r` with an ℓ2 norm, from the two block means.
    pub fn glr_statistic(&self, k: usize) -> Result<f64, DetectorError> {
        let (r, t) = (self.state.restart, self.state.current_time);
        if k <= r || k >= t {
            return Err(DetectorError::SplitOutOfRange { k, r, t });
        }
        let n1 = (k - r) as f64;
        let n2 = (t - k) as f64;
        let (g_r, g_k, g_t) = (
            self.state.prefix(r - 1),
            self.state.prefix(k - 1),
            self.state.prefix(t - 1),
        );
        let norm_sq: f64 = (0..self.state.dimension)
            .map(|j| {
                let diff = (g_k[j] - g_r[j]) / n1 - (g_t[j] - g_k[j]) / n2;
                diff * diff
            })
            .sum();
        Ok((n1 * n2 / (n1 + n2)).sqrt() * norm_sq.sqrt() / self.config.base.sigma)
    }

    /// Same fused score as the scalar detector with the square of the
    /// difference replaced by a squared norm.
    fn split_score(&self, n1: usize) -> f64 {
        let (r, t) = (self.state.restart, self.state.current_time);
        let n = t - r;
        let (nf, n1f) = (self.tables.index(n), self.tables.index(n1));
        let g0 = self.state.prefix(r - 1);
        let gk = self.state.prefix(r - 1 + n1);
        let gt = self.state.prefix(t - 1);
        let mut norm_sq = 0.0;
        for j in 0..self.state.dimension {
            let base = g0[j];
            let total = gt[j] - base;
            let left = gk[j] - base;
            let diff = left * nf - total * n1f;
            norm_sq += diff * diff;
        }
        norm_sq * self.tables.weight(n1, n)
    }

    fn scan_inner(&mut self) -> (f64, usize) {
        let (r, t) = (self.state.restart, self.state.current_time);
        let mut best = (f64::NEG_INFINITY, 0);
        let count;
        match self.config.base.scan {
            ScanMode::Full => {
                for n1 in 1..t - r {
                    let q = self.split_score(n1);
                    if q > best.0 {
                        best = (q, n1);
                    }
                }
                count = t - r - 1;
            }
            ScanMode::Multiscale { base } => {
                let mut candidates = std::mem::take(&mut self.candidates);
                multiscale_candidates(r, t, base, &mut candidates);
                for &k in &candidates {
                    let q = self.split_score(k - r);
                    if q > best.0 {
                        best = (q, k - r);
                    }
                }
                count = candidates.len();
                self.candidates = candidates;
            }
        }
        self.evaluations += count as u64;
        self.component_ops += (count * self.state.dimension) as u64;
        let statistic = best.0.sqrt() / (self.tables.index(t - r) * self.config.base.sigma);
        (statistic, r + best.1)
    }

    /// `C_t^r` and its maximizing split.
    pub fn scan(&mut self) -> Result<(f64, usize), DetectorError> {
        let (r, t) = (self.state.restart, self.state.current_time);
        if t < r + 2 {
            return Err(DetectorError::NoSplit { r, t });
        }
        Ok(self.scan_inner())
    }

    fn current_threshold(&self) -> f64 {
        let elapsed = self.state.current_time - self.state.restart;
        match (self.config.base.threshold, self.config.threshold) {
            (ThresholdRule::Constant(gamma), _) => gamma,
            (ThresholdRule::Anytime, VectorThreshold::Scalar) => {
                anytime_threshold_sq(elapsed, self.state.alpha_r).sqrt()
            }
            (ThresholdRule::Anytime, VectorThreshold::Dimensional) => {
                (self.state.dimension as f64).sqrt()
                    + anytime_threshold_sq(elapsed, self.state.alpha_r).sqrt()
            }
        }
    }

    pub fn prediction(&self) -> Vec<f64> {
        let (r, t) = (self.state.restart, self.state.current_time);
        if t == r {
            return vec![self.config.base.initial_prediction; self.state.dimension];
        }
        let n = (t - r) as f64;
        let (g_r, g_t) = (self.state.prefix(r - 1), self.state.prefix(t - 1));
        g_t.iter().zip(g_r).map(|(a, b)| (a - b) / n).collect()
    }

    pub fn step(&mut self) -> Result<StepOutcome<Vec<f64>>, DetectorError> {
        let t = self.state.current_time;
        if self.phase != Phase::AwaitingStep {
            return Err(DetectorError::Protocol {
                t,
                what: "step called twice without an observation",
            });
        }
        let mut statistic = None;
        let mut threshold = None;
        let mut alarm = false;
        if t >= self.state.restart + 2 {
            let (c, _) = self.scan_inner();
            let gamma = self.current_threshold();
            statistic = Some(c);
            threshold = Some(gamma);
            if c >= gamma {
                self.state.restart = t - 1;
                self.state.alpha_r = restart_budget(self.config.base.alpha, self.state.restart);
                alarm = true;
            }
        }
        self.phase = Phase::AwaitingObservation;
        Ok(StepOutcome {
            time: t,
            prediction: self.prediction(),
            statistic,
            threshold,
            alarm,
            restart: self.state.restart,
        })
    }

    pub fn observe(&mut self, x: &[f64]) -> Result<(), DetectorError> {
        let t = self.state.current_time;
        if self.phase != Phase::AwaitingObservation {
            return Err(DetectorError::Protocol {
                t,
                what: "observation supplied before step",
            });
        }
        let d = self.state.dimension;
        if x.len() != d {
            return Err(DetectorError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DetectorError::NonFiniteObservation { t });
        }
        let last = self.state.prefix_sums.len() - d;
        for (j, v) in x.iter().enumerate() {
            let next = self.state.prefix_sums[last + j] + v;
            self.state.prefix_sums.push(next);
        }
        self.state.current_time += 1;
        self.tables.ensure(self.state.current_time);
        self.phase = Phase::AwaitingStep;
        Ok(())
    }
}

/// Runs the vector detector over a stream of dimension `config.dimension`.
pub fn vector_run(
    stream: &TimeSeries,
    config: VectorDetectorConfig,
) -> Result<RunTrace<Vec<f64>>, DetectorError> {
    if stream.dimension() != config.dimension {
        return Err(DetectorError::DimensionMismatch {
            expected: config.dimension,
            got: stream.dimension(),
        });
    }
    if stream.is_empty() {
        return Err(DetectorError::EmptyStream);
    }
    let mut detector = VectorDetector::new(config)?;
    let mut outcomes = Vec::with_capacity(stream.len());
    for x in stream.rows() {
        outcomes.push(detector.step()?);
        detector.observe(x)?;
    }
    Ok(RunTrace::new(outcomes))
}
