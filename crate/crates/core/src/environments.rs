//! Seeded synthetic environments.
//!
//! Every generator draws the standard-normal noise `Z_1..Z_T` first and
//! only then builds the mean path, so two scenarios sharing a seed and
//! horizon see the same `Z_t` (`X_t = μ_t + σ Z_t`).
//!
//! Randomness comes from ChaCha8 seeded with a 64-bit seed; replication `i`
//! of a sweep uses `base_seed + i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Environment, TimeSeries, ValidationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("horizon {horizon} too small: need at least {min}")]
    HorizonTooSmall { horizon: usize, min: usize },
    #[error("{changes} change points do not fit in horizon {horizon}")]
    TooManyChanges { changes: usize, horizon: usize },
    #[error("change point {tau} outside [2, {horizon}]")]
    ChangeOutOfRange { tau: usize, horizon: usize },
    #[error("sigma must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("parameter {name} out of range: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// Documented deterministic generator plus seed derivation rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub algorithm_id: String,
    pub base_seed: u64,
}

impl RngSpec {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(base_seed: u64) -> Self {
        Self {
            algorithm_id: Self::ALGORITHM.to_string(),
            base_seed,
        }
    }

    /// Seed of replication `i`.
    pub fn seed_for(&self, replication: u64) -> u64 {
        self.base_seed.wrapping_add(replication)
    }

    pub fn rng_for(&self, replication: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed_for(replication))
    }
}

/// Synthetic experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Five changes at fixed horizon fractions, one short-lived regime.
    MainS5,
    /// `S(T) = ⌊T^δ / log T⌋` evenly spaced alternating changes.
    Dense { delta_exponent: f64 },
    /// `S` evenly spaced alternating changes with `Δ² = c σ² log a / a`.
    Adversarial { changes: usize, c: f64 },
    /// One change of size `jump` at `tau1`.
    SingleChange { tau1: usize, jump: f64 },
    /// Alternating construction with fixed `c` while `S` varies.
    LinearInS { changes: usize },
    /// Constant zero mean.
    NoChange,
}

/// Calibration constant for [`Scenario::LinearInS`], the adversarial value.
pub const LINEAR_IN_S_C: f64 = 160.0;

/// A scenario together with its noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub sigma: f64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, sigma: f64) -> Self {
        Self { scenario, sigma }
    }

    /// Generates one `(environment, series)` pair of horizon `horizon`.
    pub fn generate<R: rand::Rng>(
        &self,
        horizon: usize,
        rng: &mut R,
    ) -> Result<(Environment, TimeSeries), ScenarioError> {
        let sigma = self.sigma;
        match self.scenario {
            Scenario::MainS5 => gen_main_s5(horizon, sigma, rng),
            Scenario::Dense { delta_exponent } => gen_dense(horizon, delta_exponent, sigma, rng),
            Scenario::Adversarial { changes, c } => {
                gen_adversarial(horizon, changes, c, sigma, rng)
            }
            Scenario::SingleChange { tau1, jump } => {
                gen_single_change(horizon, tau1, jump, sigma, rng)
            }
            Scenario::LinearInS { changes } => gen_linear_in_s(horizon, changes, sigma, rng),
            Scenario::NoChange => gen_no_change(horizon, sigma, rng),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<(), ScenarioError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ScenarioError::InvalidSigma(sigma));
    }
    Ok(())
}

fn standard_normals<R: rand::Rng>(horizon: usize, rng: &mut R) -> Vec<f64> {
    (0..horizon).map(|_| StandardNormal.sample(rng)).collect()
}

/// Assembles `X_t = μ_t + σ Z_t`. `sigma = 0` yields the mean path itself.
fn synthesize<R: rand::Rng>(
    change_points: Vec<usize>,
    means: Vec<f64>,
    horizon: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<(Environment, TimeSeries), ScenarioError> {
    check_sigma(sigma)?;
    let noise = standard_normals(horizon, rng);
    let env = if sigma > 0.0 {
        Environment::new(change_points, means, horizon, sigma, None)?
    } else {
        Environment::noiseless(change_points, means, horizon, sigma)?
    };
    let values = env
        .mean_path()
        .into_iter()
        .zip(noise)
        .map(|(mu, z)| mu + sigma * z)
        .collect();
    Ok((env, TimeSeries::scalar(values)?))
}

/// Change points of the five-change environment for horizon `T`.
pub fn main_s5_change_points(horizon: usize) -> Vec<usize> {
    let tau2 = 2 * horizon / 5 + 1;
    vec![
        horizon / 5 + 1,
        tau2,
        tau2 + 10,
        3 * horizon / 4 + 1,
        9 * horizon / 10 + 1,
    ]
}

pub const MAIN_S5_MEANS: [f64; 6] = [0.0, 2.0, 0.5, 2.5, -1.5, 1.5];

pub fn gen_main_s5<R: rand::Rng>(
    horizon: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<(Environment, TimeSeries), ScenarioError> {
    if horizon < 100 {
        return Err(ScenarioError::HorizonTooSmall { horizon, min: 100 });
    }
    synthesize(
        main_s5_change_points(horizon),
        MAIN_S5_MEANS.to_vec(),
        horizon,
        sigma,
        rng,
    )
}

/// Splits `[1, T]` into `segments` consecutive blocks whose lengths differ
/// by at most one (longer blocks first) and returns the interior boundaries.
pub fn even_change_points(horizon: usize, segments: usize) -> Vec<usize> {
    let q = horizon / segments;
    let extra = horizon % segments;
    let mut start = 1;
    let mut out = Vec::with_capacity(segments.saturating_sub(1));
    for j in 0..segments - 1 {
        start += q + usize::from(j < extra);
        out.push(start);
    }
    out
}

/// `0, Δ, 0, Δ, …` for `changes + 1` segments.
fn alternating(changes: usize, delta: f64) -> Vec<f64> {
    (0..=changes)
        .map(|j| if j % 2 == 0 { 0.0 } else { delta })
        .collect()
}

/// `sqrt(c σ² log a / a)`, clamped at zero for `a ≤ 1`.
pub fn calibrated_gap(c: f64, sigma: f64, a: f64) -> f64 {
    (c * sigma * sigma * a.ln() / a).max(0.0).sqrt()
}

/// `S(T) = ⌊T^δ / log T⌋`.
pub fn dense_change_count(horizon: usize, delta_exponent: f64) -> usize {
    let t = horizon as f64;
    (t.powf(delta_exponent) / t.ln()).floor() as usize
}

pub fn gen_dense<R: rand::Rng>(
    horizon: usize,
    delta_exponent: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<(Environment, TimeSeries), ScenarioError> {
    if horizon < 10 {
        return Err(ScenarioError::HorizonTooSmall { horizon, min: 10 });
    }
    if !(delta_exponent > 0.0 && delta_exponent <= 1.0) {
        return Err(ScenarioError::InvalidParameter {
            name: "delta_exponent",
            value: delta_exponent,
        });
    }
    let changes = dense_change_count(horizon, delta_exponent);
    let a = horizon as f64 / (changes + 1) as f64;
    let delta = calibrated_gap(160.0, sigma, a);
    synthesize(
        even_change_points(horizon, changes + 1),
        alternating(changes, delta),
        horizon,
        sigma,
        rng,
    )
}

pub fn gen_adversarial<R: rand::Rng>(
    horizon: usize,
    changes: usize,
    c: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<(Environment, TimeSeries), ScenarioError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(ScenarioError::InvalidParameter {
            name: "c",
            value: c,
        });
    }
    if changes + 1 > horizon {
        return Err(ScenarioError::TooManyChanges { changes, horizon });
    }
    let a = horizon as f64 / (changes + 1) as f64;
    synthesize(
        even_change_points(horizon, changes + 1),
        alternating(changes, calibrated_gap(c, sigma, a)),
        horizon,
        sigma,
        rng,
    )
}

pub fn gen_single_change<R: rand::Rng>(
    horizon: usize,
    tau1: usize,
    jump: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<(Environment, TimeSeries), ScenarioError> {
    if tau1 < 2 || tau1 > horizon {
        return Err(ScenarioError::ChangeOutOfRange { tau: tau1, horizon });
    }
    synthesize(vec![tau1], vec![0.0, jump], horizon, sigma, rng)
}

pub fn gen_linear_in_s<R: rand::Rng>(
    horizon: usize,
    changes: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<(Environment, TimeSeries), ScenarioError> {
    gen_adversarial(horizon, changes, LINEAR_IN_S_C, sigma, rng)
}

pub fn gen_no_change<R: rand::Rng>(
    horizon: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<(Environment, TimeSeries), ScenarioError> {
    if horizon == 0 {
        return Err(ScenarioError::HorizonTooSmall { horizon, min: 1 });
    }
    synthesize(Vec::new(), vec![0.0], horizon, sigma, rng)
}
