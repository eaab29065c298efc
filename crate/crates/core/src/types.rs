//! Shared domain types: the piecewise-constant environment, observation
//! streams, and per-step detector records.
//!
//! Time is 1-based everywhere in the public API: `t = 1` is the first
//! observation and an environment of horizon `T` covers `t ∈ [1, T]`.
//! Storage is 0-based; the single mapping used throughout the crate is
//! `index = t - 1` for per-time arrays, and `G[t]` (prefix sums, which carry
//! a leading zero) is stored at index `t`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Validation failures for [`Environment`] and [`TimeSeries`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("change points must be strictly increasing (position {index}: {prev} then {next})")]
    NotIncreasing {
        index: usize,
        prev: usize,
        next: usize,
    },
    #[error("change point {tau} outside (1, {horizon}]")]
    ChangePointOutOfRange { tau: usize, horizon: usize },
    #[error("expected {expected} segment means for {changes} change points, got {got}")]
    MeanCountMismatch {
        expected: usize,
        changes: usize,
        got: usize,
    },
    #[error(
        "segment means must share one dimension (segment {segment} has {got}, expected {expected})"
    )]
    DimensionMismatch {
        segment: usize,
        expected: usize,
        got: usize,
    },
    #[error("segment mean dimension must be at least 1")]
    ZeroDimension,
    #[error("segment mean {segment} is not finite")]
    NonFiniteMean { segment: usize },
    #[error("diameter {diameter} exceeds diameter bound {bound}")]
    DiameterExceeded { diameter: f64, bound: f64 },
    #[error("diameter bound must be positive, got {0}")]
    InvalidDiameterBound(f64),
    #[error("time index {t} outside [1, {horizon}]")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("observation at t={t} is not finite")]
    NonFiniteObservation { t: usize },
    #[error("series length {len} is not a multiple of dimension {dimension}")]
    RaggedSeries { len: usize, dimension: usize },
    #[error("series has length {series}, environment horizon is {horizon}")]
    LengthMismatch { series: usize, horizon: usize },
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

/// Piecewise-constant mean path with `S` change points over horizon `T`.
///
/// Segment `j` covers `[τ_j, τ_{j+1})` with sentinels `τ_0 = 1` and
/// `τ_{S+1} = T + 1`. Means are stored as vectors of a common dimension
/// `d`; the scalar case is `d = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentRepr", into = "EnvironmentRepr")]
pub struct Environment {
    change_points: Vec<usize>,
    segment_means: Vec<Vec<f64>>,
    horizon: usize,
    sigma: f64,
    diameter_bound: Option<f64>,
}

impl Environment {
    /// Validated scalar environment.
    pub fn new(
        change_points: Vec<usize>,
        segment_means: Vec<f64>,
        horizon: usize,
        sigma: f64,
        diameter_bound: Option<f64>,
    ) -> Result<Self, ValidationError> {
        let means = segment_means.into_iter().map(|m| vec![m]).collect();
        Self::new_vector(change_points, means, horizon, sigma, diameter_bound)
    }

    /// Validated environment with `d`-dimensional segment means.
    pub fn new_vector(
        change_points: Vec<usize>,
        segment_means: Vec<Vec<f64>>,
        horizon: usize,
        sigma: f64,
        diameter_bound: Option<f64>,
    ) -> Result<Self, ValidationError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ValidationError::InvalidSigma(sigma));
        }
        Self::build(change_points, segment_means, horizon, sigma, diameter_bound)
    }

    /// Environment for a deterministic (noise-free) stream. Identical to
    /// [`Environment::new`] except that `sigma = 0` is accepted.
    pub fn noiseless(
        change_points: Vec<usize>,
        segment_means: Vec<f64>,
        horizon: usize,
        sigma: f64,
    ) -> Result<Self, ValidationError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(ValidationError::InvalidSigma(sigma));
        }
        let means = segment_means.into_iter().map(|m| vec![m]).collect();
        Self::build(change_points, means, horizon, sigma, None)
    }

    fn build(
        change_points: Vec<usize>,
        segment_means: Vec<Vec<f64>>,
        horizon: usize,
        sigma: f64,
        diameter_bound: Option<f64>,
    ) -> Result<Self, ValidationError> {
        if horizon == 0 {
            return Err(ValidationError::ZeroHorizon);
        }
        for (i, pair) in change_points.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(ValidationError::NotIncreasing {
                    index: i + 1,
                    prev: pair[0],
                    next: pair[1],
                });
            }
        }
        if let Some(&tau) = change_points.iter().find(|&&tau| tau < 2 || tau > horizon) {
            return Err(ValidationError::ChangePointOutOfRange { tau, horizon });
        }
        if segment_means.len() != change_points.len() + 1 {
            return Err(ValidationError::MeanCountMismatch {
                expected: change_points.len() + 1,
                changes: change_points.len(),
                got: segment_means.len(),
            });
        }
        let dimension = segment_means[0].len();
        if dimension == 0 {
            return Err(ValidationError::ZeroDimension);
        }
        for (segment, mean) in segment_means.iter().enumerate() {
            if mean.len() != dimension {
                return Err(ValidationError::DimensionMismatch {
                    segment,
                    expected: dimension,
                    got: mean.len(),
                });
            }
            if mean.iter().any(|m| !m.is_finite()) {
                return Err(ValidationError::NonFiniteMean { segment });
            }
        }
        let env = Self {
            change_points,
            segment_means,
            horizon,
            sigma,
            diameter_bound,
        };
        if let Some(bound) = diameter_bound {
            if bound.is_nan() || bound <= 0.0 {
                return Err(ValidationError::InvalidDiameterBound(bound));
            }
            let diameter = env.diameter();
            if diameter > bound {
                return Err(ValidationError::DiameterExceeded { diameter, bound });
            }
        }
        Ok(env)
    }

    pub fn change_points(&self) -> &[usize] {
        &self.change_points
    }

    pub fn num_changes(&self) -> usize {
        self.change_points.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn diameter_bound(&self) -> Option<f64> {
        self.diameter_bound
    }

    pub fn dimension(&self) -> usize {
        self.segment_means[0].len()
    }

    pub fn segment_means(&self) -> &[Vec<f64>] {
        &self.segment_means
    }

    /// Mean of segment `j` (scalar environments).
    pub fn segment_mean(&self, j: usize) -> f64 {
        self.segment_means[j][0]
    }

    /// Start time `τ_j` of segment `j`, including the sentinels `τ_0 = 1`
    /// and `τ_{S+1} = T + 1`.
    pub fn boundary(&self, j: usize) -> usize {
        if j == 0 {
            1
        } else if j <= self.change_points.len() {
            self.change_points[j - 1]
        } else {
            self.horizon + 1
        }
    }

    /// Length of segment `j`.
    pub fn segment_len(&self, j: usize) -> usize {
        self.boundary(j + 1) - self.boundary(j)
    }

    /// Index of the segment containing time `t` (1-based).
    pub fn segment_of(&self, t: usize) -> Result<usize, ValidationError> {
        if t == 0 || t > self.horizon {
            return Err(ValidationError::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.change_points.partition_point(|&tau| tau <= t))
    }

    /// `μ_t` as a vector of length `d`.
    pub fn mean_at(&self, t: usize) -> Result<&[f64], ValidationError> {
        self.segment_of(t).map(|j| self.segment_means[j].as_slice())
    }

    /// `μ_t` for scalar environments.
    pub fn scalar_mean_at(&self, t: usize) -> Result<f64, ValidationError> {
        self.mean_at(t).map(|m| m[0])
    }

    /// Scalar means for `t = 1..=T`, index `t - 1`.
    pub fn mean_path(&self) -> Vec<f64> {
        let mut path = Vec::with_capacity(self.horizon);
        for j in 0..=self.num_changes() {
            let m = self.segment_means[j][0];
            path.extend(std::iter::repeat_n(m, self.segment_len(j)));
        }
        path
    }

    /// `Δ_diam = max_{u,v} ‖μ_u − μ_v‖₂`.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0_f64;
        for (u, a) in self.segment_means.iter().enumerate() {
            for b in &self.segment_means[u + 1..] {
                best = best.max(l2_distance(a, b));
            }
        }
        best
    }

    /// Nominal gaps `Δ_j = ‖μ_j − μ_{j−1}‖₂` for `j = 1..=S`.
    pub fn gaps(&self) -> Gaps {
        Gaps(
            self.segment_means
                .windows(2)
                .map(|w| l2_distance(&w[0], &w[1]))
                .collect(),
        )
    }
}

pub(crate) fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-change nominal gaps; entry `j - 1` holds `Δ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaps(pub Vec<f64>);

impl Gaps {
    /// `Δ_j` for `j ≥ 1`.
    pub fn get(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).and_then(|i| self.0.get(i).copied())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MeansRepr {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
struct EnvironmentRepr {
    change_points: Vec<usize>,
    segment_means: MeansRepr,
    horizon: usize,
    sigma: f64,
    diameter_bound: Option<f64>,
}

impl TryFrom<EnvironmentRepr> for Environment {
    type Error = ValidationError;

    fn try_from(repr: EnvironmentRepr) -> Result<Self, Self::Error> {
        let means = match repr.segment_means {
            MeansRepr::Scalar(m) => m.into_iter().map(|x| vec![x]).collect(),
            MeansRepr::Vector(m) => m,
        };
        // sigma = 0 marks a noiseless stream (see `Environment::noiseless`).
        if repr.sigma == 0.0 {
            return Environment::build(
                repr.change_points,
                means,
                repr.horizon,
                0.0,
                repr.diameter_bound,
            );
        }
        Environment::new_vector(
            repr.change_points,
            means,
            repr.horizon,
            repr.sigma,
            repr.diameter_bound,
        )
    }
}

impl From<Environment> for EnvironmentRepr {
    fn from(env: Environment) -> Self {
        let segment_means = if env.dimension() == 1 {
            MeansRepr::Scalar(env.segment_means.iter().map(|m| m[0]).collect())
        } else {
            MeansRepr::Vector(env.segment_means)
        };
        Self {
            change_points: env.change_points,
            segment_means,
            horizon: env.horizon,
            sigma: env.sigma,
            diameter_bound: env.diameter_bound,
        }
    }
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

/// Observation stream `X_1..X_T`, stored row-major as `T·d` values.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    dimension: usize,
}

impl TimeSeries {
    pub fn scalar(values: Vec<f64>) -> Result<Self, ValidationError> {
        Self::from_flat(values, 1)
    }

    pub fn from_flat(values: Vec<f64>, dimension: usize) -> Result<Self, ValidationError> {
        if dimension == 0 {
            return Err(ValidationError::ZeroDimension);
        }
        if !values.len().is_multiple_of(dimension) {
            return Err(ValidationError::RaggedSeries {
                len: values.len(),
                dimension,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ValidationError::NonFiniteObservation {
                t: i / dimension + 1,
            });
        }
        Ok(Self { values, dimension })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ValidationError> {
        let dimension = rows.first().map_or(1, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dimension);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dimension {
                return Err(ValidationError::DimensionMismatch {
                    segment: i,
                    expected: dimension,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(flat, dimension)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `X_t` (1-based).
    pub fn at(&self, t: usize) -> &[f64] {
        let start = (t - 1) * self.dimension;
        &self.values[start..start + self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dimension)
    }

    /// Checks that the series is paired with an environment of matching
    /// length and dimension.
    pub fn check_against(&self, env: &Environment) -> Result<(), ValidationError> {
        if self.len() != env.horizon() {
            return Err(ValidationError::LengthMismatch {
                series: self.len(),
                horizon: env.horizon(),
            });
        }
        if self.dimension != env.dimension() {
            return Err(ValidationError::DimensionMismatch {
                segment: 0,
                expected: env.dimension(),
                got: self.dimension,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Per-step records
// ---------------------------------------------------------------------------

/// A prediction μ̂_t: `f64` for scalar detectors, `Vec<f64>` for vector ones.
pub trait Estimate: Clone + std::fmt::Debug + PartialEq + Send + Sync {
    /// `‖μ̂ − μ‖₂²`.
    fn squared_error(&self, mean: &[f64]) -> f64;
    fn components(&self) -> &[f64];
}

impl Estimate for f64 {
    fn squared_error(&self, mean: &[f64]) -> f64 {
        let e = self - mean[0];
        e * e
    }

    fn components(&self) -> &[f64] {
        std::slice::from_ref(self)
    }
}

impl Estimate for Vec<f64> {
    fn squared_error(&self, mean: &[f64]) -> f64 {
        self.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn components(&self) -> &[f64] {
        self
    }
}

/// What the detector did at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<P = f64> {
    pub time: usize,
    pub prediction: P,
    /// `C_t^r`, absent when `t < r + 2`.
    pub statistic: Option<f64>,
    /// `γ_t^r`, absent when `t < r + 2`.
    pub threshold: Option<f64>,
    pub alarm: bool,
    /// Restart time `r` in force when the prediction was made.
    pub restart: usize,
}

/// Full per-run log of a policy on one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<P = f64> {
    pub outcomes: Vec<StepOutcome<P>>,
    pub environment: Option<Environment>,
}

impl<P: Estimate> RunTrace<P> {
    pub fn new(outcomes: Vec<StepOutcome<P>>) -> Self {
        Self {
            outcomes,
            environment: None,
        }
    }

    pub fn with_environment(mut self, env: Environment) -> Self {
        self.environment = Some(env);
        self
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Times `t` at which an alarm fired.
    pub fn alarms(&self) -> Vec<usize> {
        self.outcomes
            .iter()
            .filter(|o| o.alarm)
            .map(|o| o.time)
            .collect()
    }

    /// Number of restart blocks `K` (alarms plus one).
    pub fn num_blocks(&self) -> usize {
        self.outcomes.iter().filter(|o| o.alarm).count() + 1
    }

    /// Restart sequence `r_0 = 1, r_{m+1} = N^{r_m} − 1`.
    pub fn restarts(&self) -> Vec<usize> {
        std::iter::once(1)
            .chain(self.outcomes.iter().filter(|o| o.alarm).map(|o| o.time - 1))
            .collect()
    }

    pub fn predictions(&self) -> impl Iterator<Item = &P> {
        self.outcomes.iter().map(|o| &o.prediction)
    }
}
