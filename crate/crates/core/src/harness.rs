//! Regret and false-alarm accounting, Monte Carlo sweeps, SNR diagnostics.
//!
//! Regret is `Σ_{t=2}^T ‖μ̂_t − μ_t‖²`; the `t = 1` guess is excluded.
//!
//! An alarm at time `t`, fired while the restart was `r`, is *false* when no
//! change point lies in the open interval `(r, t)`. Otherwise it credits the
//! latest change before `t`. Because an alarm moves the restart to `t − 1`,
//! each change can be credited at most once, and
//! `num_false_alarms + num_detections = num_alarms` holds on every trace.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{self, BaselineError};
use crate::detector::{self, DetectorConfig, DetectorError};
use crate::environments::{RngSpec, ScenarioError, ScenarioSpec};
use crate::types::{Environment, Estimate, RunTrace, StepOutcome, TimeSeries, ValidationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("trace has {trace} steps but the environment horizon is {horizon}")]
    LengthMismatch { trace: usize, horizon: usize },
    #[error("prediction at t={t} has {got} components, environment has {expected}")]
    DimensionMismatch {
        t: usize,
        expected: usize,
        got: usize,
    },
    #[error("at least 2 replications are required, got {0}")]
    TooFewReplications(usize),
    #[error("horizon grid is empty")]
    EmptyGrid,
    #[error("change index j={j} out of range 1..={changes}")]
    ChangeIndex { j: usize, changes: usize },
    #[error("time t={t} outside the valid window ({lo}, {hi}] for change {j}")]
    TimeOutOfWindow {
        j: usize,
        t: usize,
        lo: usize,
        hi: usize,
    },
    #[error("restart r={r} must satisfy 1 <= r < tau_j = {tau}")]
    RestartOutOfRange { r: usize, tau: usize },
    #[error("segment lengths must be at least 1")]
    NonPositiveLength,
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub cumulative_regret: f64,
    /// Partial sums indexed by `t − 1`; entry 0 (for `t = 1`) is zero.
    pub per_step: Option<Vec<f64>>,
    pub num_alarms: usize,
    pub num_false_alarms: usize,
    pub num_detections: usize,
    /// `detected[j − 1]` is true when change `τ_j` was credited.
    pub detected: Vec<bool>,
    pub num_missed: usize,
}

impl RegretReport {
    /// `t,cum_regret` rows, one per step. Empty when `per_step` is absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,cum_regret\n");
        if let Some(steps) = &self.per_step {
            for (i, v) in steps.iter().enumerate() {
                let _ = writeln!(out, "{},{}", i + 1, v);
            }
        }
        out
    }
}

/// Sums squared errors against `env` and classifies every alarm.
pub fn regret<P: Estimate>(
    trace: &RunTrace<P>,
    env: &Environment,
    per_step: bool,
) -> Result<RegretReport, HarnessError> {
    let horizon = env.horizon();
    if trace.len() != horizon {
        return Err(HarnessError::LengthMismatch {
            trace: trace.len(),
            horizon,
        });
    }
    let dim = env.dimension();
    let mut steps = per_step.then(|| Vec::with_capacity(horizon));
    let mut total = 0.0;
    for j in 0..=env.num_changes() {
        let mean = &env.segment_means()[j];
        for t in env.boundary(j)..env.boundary(j + 1) {
            let o = &trace.outcomes[t - 1];
            let got = o.prediction.components().len();
            if got != dim {
                return Err(HarnessError::DimensionMismatch {
                    t,
                    expected: dim,
                    got,
                });
            }
            if t >= 2 {
                total += o.prediction.squared_error(mean);
            }
            if let Some(s) = steps.as_mut() {
                s.push(total);
            }
        }
    }
    let (num_alarms, false_alarms, detected) =
        classify_alarms(&trace.outcomes, env.change_points());
    let num_detections = detected.iter().filter(|&&d| d).count();
    Ok(RegretReport {
        cumulative_regret: total,
        per_step: steps,
        num_alarms,
        num_false_alarms: false_alarms,
        num_detections,
        num_missed: detected.len() - num_detections,
        detected,
    })
}

fn classify_alarms<P>(outcomes: &[StepOutcome<P>], taus: &[usize]) -> (usize, usize, Vec<bool>) {
    let mut detected = vec![false; taus.len()];
    let (mut alarms, mut false_alarms) = (0, 0);
    let mut r = 1;
    for o in outcomes {
        if o.alarm {
            alarms += 1;
            let t = o.time;
            // latest change strictly before t
            let idx = taus.partition_point(|&tau| tau < t);
            match idx.checked_sub(1) {
                Some(j) if taus[j] > r && !detected[j] => detected[j] = true,
                _ => false_alarms += 1,
            }
        }
        r = o.restart;
    }
    (alarms, false_alarms, detected)
}

/// A prediction policy runnable on scalar streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Atc(DetectorConfig),
    /// `gamma` on the raw scale; `config` supplies σ and the scan mode.
    ConstantThreshold {
        gamma: f64,
        config: DetectorConfig,
    },
    SlidingWindow(usize),
    DiscountedMean(f64),
    /// Predicts the true mean `μ_t`.
    Oracle,
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::Atc(_) => "atc".to_string(),
            Policy::ConstantThreshold { gamma, .. } => format!("const_{gamma}"),
            Policy::SlidingWindow(w) => format!("sw_{w}"),
            Policy::DiscountedMean(rho) => format!("dm_{rho}"),
            Policy::Oracle => "oracle".to_string(),
        }
    }

    pub fn run(&self, stream: &TimeSeries, env: &Environment) -> Result<RunTrace, HarnessError> {
        Ok(match *self {
            Policy::Atc(cfg) => detector::run(stream, cfg)?,
            Policy::ConstantThreshold { gamma, config } => {
                baselines::constant_threshold_run(stream, gamma, config)?
            }
            Policy::SlidingWindow(w) => baselines::sliding_window_run(stream, w)?,
            Policy::DiscountedMean(rho) => baselines::discounted_mean_run(stream, rho)?,
            Policy::Oracle => oracle_trace(env)?,
        })
    }
}

fn oracle_trace(env: &Environment) -> Result<RunTrace, HarnessError> {
    if env.dimension() != 1 {
        return Err(ValidationError::DimensionMismatch {
            segment: 0,
            expected: 1,
            got: env.dimension(),
        }
        .into());
    }
    let outcomes = env
        .mean_path()
        .into_iter()
        .enumerate()
        .map(|(i, mu)| StepOutcome {
            time: i + 1,
            prediction: mu,
            statistic: None,
            threshold: None,
            alarm: false,
            restart: 1,
        })
        .collect();
    Ok(RunTrace::new(outcomes))
}

/// Mean, sample standard deviation and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub mean: f64,
    pub sd: f64,
    pub stderr: f64,
    pub n: usize,
}

impl SampleStats {
    pub fn from_slice(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let sd = var.sqrt();
        Self {
            mean,
            sd,
            stderr: sd / (n as f64).sqrt(),
            n,
        }
    }

    pub fn ci_halfwidth(&self) -> f64 {
        1.96 * self.stderr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub horizon: usize,
    pub mean_regret: f64,
    pub stderr: f64,
    pub ci_halfwidth: f64,
    pub n_reps: usize,
    pub mean_false_alarms: f64,
    pub false_alarm_stderr: f64,
    pub mean_alarms: f64,
    pub mean_missed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub rows: Vec<McRow>,
}

impl McSummary {
    pub fn horizons(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.horizon).collect()
    }

    pub fn mean_regrets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_regret).collect()
    }

    /// `T,mean_regret,stderr,ci_halfwidth,n_reps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,mean_regret,stderr,ci_halfwidth,n_reps\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.horizon, r.mean_regret, r.stderr, r.ci_halfwidth, r.n_reps
            );
        }
        out
    }

    /// `T,mean_false_alarms,fa_stderr,mean_alarms,mean_missed,n_reps`.
    pub fn to_alarm_csv(&self) -> String {
        let mut out =
            String::from("T,mean_false_alarms,fa_stderr,mean_alarms,mean_missed,n_reps\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.horizon,
                r.mean_false_alarms,
                r.false_alarm_stderr,
                r.mean_alarms,
                r.mean_missed,
                r.n_reps
            );
        }
        out
    }
}

/// Runs replication `i` of `scenario` at horizon `T` under `policy`.
pub fn replicate(
    scenario: &ScenarioSpec,
    policy: &Policy,
    horizon: usize,
    rng: &RngSpec,
    replication: u64,
) -> Result<RegretReport, HarnessError> {
    let (env, series) = scenario.generate(horizon, &mut rng.rng_for(replication))?;
    let trace = policy.run(&series, &env)?;
    regret(&trace, &env, false)
}

/// Replication `i` uses seed `base_seed + i` at every horizon. Replications
/// run in parallel on the current rayon pool; results are aggregated in
/// replication order.
pub fn monte_carlo(
    scenario: &ScenarioSpec,
    policy: &Policy,
    horizons: &[usize],
    n_reps: usize,
    base_seed: u64,
) -> Result<McSummary, HarnessError> {
    if n_reps < 2 {
        return Err(HarnessError::TooFewReplications(n_reps));
    }
    if horizons.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let rng = RngSpec::new(base_seed);
    let mut rows = Vec::with_capacity(horizons.len());
    for &horizon in horizons {
        let reports: Vec<RegretReport> = (0..n_reps as u64)
            .into_par_iter()
            .map(|i| replicate(scenario, policy, horizon, &rng, i))
            .collect::<Result<_, _>>()?;
        rows.push(summarize(horizon, &reports));
    }
    Ok(McSummary { rows })
}

pub fn summarize(horizon: usize, reports: &[RegretReport]) -> McRow {
    let pick = |f: fn(&RegretReport) -> f64| {
        SampleStats::from_slice(&reports.iter().map(f).collect::<Vec<_>>())
    };
    let regret = pick(|r| r.cumulative_regret);
    let fa = pick(|r| r.num_false_alarms as f64);
    McRow {
        horizon,
        mean_regret: regret.mean,
        stderr: regret.stderr,
        ci_halfwidth: regret.ci_halfwidth(),
        n_reps: reports.len(),
        mean_false_alarms: fa.mean,
        false_alarm_stderr: fa.stderr,
        mean_alarms: pick(|r| r.num_alarms as f64).mean,
        mean_missed: pick(|r| r.num_missed as f64).mean,
    }
}

// ---------------------------------------------------------------------------
// SNR diagnostics
// ---------------------------------------------------------------------------

fn check_change(env: &Environment, j: usize) -> Result<(), HarnessError> {
    if j == 0 || j > env.num_changes() {
        return Err(HarnessError::ChangeIndex {
            j,
            changes: env.num_changes(),
        });
    }
    Ok(())
}

/// Post-change window check: `τ_j < t ≤ τ_{j+1}` so that `X_{τ_j..t−1}`
/// lies inside segment `j`.
fn check_window(env: &Environment, j: usize, t: usize) -> Result<(), HarnessError> {
    let (lo, hi) = (env.boundary(j), env.boundary(j + 1));
    if t <= lo || t > hi {
        return Err(HarnessError::TimeOutOfWindow { j, t, lo, hi });
    }
    Ok(())
}

fn size_factor(a: f64, b: f64) -> f64 {
    a * b / (a + b)
}

/// Ideal-restart SNR of change `j` at time `t`:
/// `(τ_j − τ_{j−1})(t − τ_j)/(t − τ_{j−1}) · Δ_j²/σ²`, with `τ_0 = 1`.
pub fn snr_star(env: &Environment, j: usize, t: usize) -> Result<f64, HarnessError> {
    check_change(env, j)?;
    check_window(env, j, t)?;
    let pre = (env.boundary(j) - env.boundary(j - 1)) as f64;
    let post = (t - env.boundary(j)) as f64;
    let gap = env.gaps().0[j - 1];
    Ok(size_factor(pre, post) * gap * gap / (env.sigma() * env.sigma()))
}

/// Length-weighted average of the segment means covering `[r, τ_j)`.
pub fn effective_pre_mean_vector(
    env: &Environment,
    r: usize,
    j: usize,
) -> Result<Vec<f64>, HarnessError> {
    check_change(env, j)?;
    let tau = env.boundary(j);
    if r == 0 || r >= tau {
        return Err(HarnessError::RestartOutOfRange { r, tau });
    }
    let mut acc = vec![0.0; env.dimension()];
    let first = env.segment_of(r)?;
    for l in first..j {
        let from = env.boundary(l).max(r);
        let n = (env.boundary(l + 1) - from) as f64;
        for (a, m) in acc.iter_mut().zip(&env.segment_means()[l]) {
            *a += n * m;
        }
    }
    let total = (tau - r) as f64;
    Ok(acc.into_iter().map(|a| a / total).collect())
}

/// Scalar form of [`effective_pre_mean_vector`].
pub fn effective_pre_mean(env: &Environment, r: usize, j: usize) -> Result<f64, HarnessError> {
    let v = effective_pre_mean_vector(env, r, j)?;
    if v.len() != 1 {
        return Err(ValidationError::DimensionMismatch {
            segment: j,
            expected: 1,
            got: v.len(),
        }
        .into());
    }
    Ok(v[0])
}

/// `‖μ_j − μ_pre_eff(r, j)‖`.
pub fn effective_gap(env: &Environment, r: usize, j: usize) -> Result<f64, HarnessError> {
    let pre = effective_pre_mean_vector(env, r, j)?;
    Ok(crate::types::l2_distance(&env.segment_means()[j], &pre))
}

/// `(τ_j − r)(t − τ_j)/(t − r) · (Δ_j^eff)²/σ²`.
pub fn snr_eff(env: &Environment, r: usize, j: usize, t: usize) -> Result<f64, HarnessError> {
    check_change(env, j)?;
    check_window(env, j, t)?;
    let gap = effective_gap(env, r, j)?;
    let tau = env.boundary(j);
    let factor = size_factor((tau - r) as f64, (t - tau) as f64);
    Ok(factor * gap * gap / (env.sigma() * env.sigma()))
}

/// Per-change diagnostics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfoundingDiagnostics {
    pub change: usize,
    /// Restart in force when `X_{τ_j}` arrived.
    pub restart: usize,
    pub mu_pre_eff: Vec<f64>,
    pub delta_eff: f64,
    pub snr_star: f64,
    pub snr_eff: f64,
    /// `a_L = τ_j − r(j)`.
    pub pre_samples: usize,
    /// `b_t = t − τ_j`, evaluated at `t = τ_{j+1}`.
    pub post_samples: usize,
}

/// Diagnostics for every change, evaluated at the end of its segment with
/// the restart the trace held at `τ_j`.
pub fn confounding_diagnostics<P: Estimate>(
    trace: &RunTrace<P>,
    env: &Environment,
) -> Result<Vec<ConfoundingDiagnostics>, HarnessError> {
    if trace.len() != env.horizon() {
        return Err(HarnessError::LengthMismatch {
            trace: trace.len(),
            horizon: env.horizon(),
        });
    }
    (1..=env.num_changes())
        .map(|j| {
            let tau = env.boundary(j);
            let t = env.boundary(j + 1);
            // restart after the step at τ_j − 1, i.e. before data at τ_j
            let restart = trace.outcomes[tau - 2].restart.min(tau - 1);
            let mu_pre_eff = effective_pre_mean_vector(env, restart, j)?;
            Ok(ConfoundingDiagnostics {
                change: j,
                restart,
                delta_eff: effective_gap(env, restart, j)?,
                mu_pre_eff,
                snr_star: snr_star(env, j, t)?,
                snr_eff: snr_eff(env, restart, j, t)?,
                pre_samples: tau - restart,
                post_samples: t - tau,
            })
        })
        .collect()
}

/// Checks `(SNR*_2 − SNR_2^eff)_+ ≤ SNR_1` for three consecutive regimes of
/// lengths `n0, n1, n2` with unit noise. Returns `(lhs, rhs, holds)`.
pub fn confounding_gap_check(
    n0: usize,
    n1: usize,
    n2: usize,
    mu0: f64,
    mu1: f64,
    mu2: f64,
) -> Result<(f64, f64, bool), HarnessError> {
    if n0 == 0 || n1 == 0 || n2 == 0 {
        return Err(HarnessError::NonPositiveLength);
    }
    let (a, b, c) = (n0 as f64, n1 as f64, n2 as f64);
    let mixed = (a * mu0 + b * mu1) / (a + b);
    let ideal = size_factor(b, c) * (mu2 - mu1).powi(2);
    let effective = size_factor(a + b, c) * (mu2 - mixed).powi(2);
    let lhs = (ideal - effective).max(0.0);
    let rhs = size_factor(a, b) * (mu1 - mu0).powi(2);
    Ok((lhs, rhs, lhs <= rhs + 1e-9 * rhs.max(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::Scenario;

    fn trace_of(preds: &[f64], alarms: &[usize]) -> RunTrace {
        let mut r = 1;
        let outcomes = preds
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let t = i + 1;
                let alarm = alarms.contains(&t);
                if alarm {
                    r = t - 1;
                }
                StepOutcome {
                    time: t,
                    prediction: p,
                    statistic: None,
                    threshold: None,
                    alarm,
                    restart: r,
                }
            })
            .collect();
        RunTrace::new(outcomes)
    }

    fn env(cps: Vec<usize>, means: Vec<f64>, horizon: usize) -> Environment {
        Environment::new(cps, means, horizon, 1.0, None).unwrap()
    }

    #[test]
    fn regret_examples() {
        let e = env(vec![], vec![0.0], 11);
        let rep = regret(&trace_of(&[1.0; 11], &[]), &e, true).unwrap();
        assert_eq!(rep.cumulative_regret, 10.0);
        let steps = rep.per_step.unwrap();
        assert_eq!(steps[0], 0.0);
        assert_eq!(steps[10], 10.0);

        let e = env(vec![4], vec![0.0, 2.0], 6);
        let oracle = oracle_trace(&e).unwrap();
        assert_eq!(regret(&oracle, &e, false).unwrap().cumulative_regret, 0.0);
        assert!(regret(&trace_of(&[0.0; 5], &[]), &e, false).is_err());
    }

    #[test]
    fn alarms_without_changes_are_false() {
        let e = env(vec![], vec![0.0], 50);
        let rep = regret(&trace_of(&[0.0; 50], &[5, 9, 30]), &e, false).unwrap();
        assert_eq!(
            (rep.num_alarms, rep.num_false_alarms, rep.num_detections),
            (3, 3, 0)
        );
    }

    #[test]
    fn alarm_classification() {
        let e = env(vec![10, 20, 30], vec![0.0, 1.0, 0.0, 1.0], 40);
        // 12 detects τ1; 14 is a repeat; 25 detects τ2; τ3 missed
        let rep = regret(&trace_of(&[0.0; 40], &[12, 14, 25]), &e, false).unwrap();
        assert_eq!(rep.num_alarms, 3);
        assert_eq!(rep.num_false_alarms, 1);
        assert_eq!(rep.detected, vec![true, true, false]);
        assert_eq!(rep.num_missed, 1);
        // alarm exactly at τ is false (τ not in (r, t)); the next alarm credits it
        let rep = regret(&trace_of(&[0.0; 40], &[10, 11]), &e, false).unwrap();
        assert_eq!((rep.num_false_alarms, rep.num_detections), (1, 1));
        assert_eq!(rep.detected, vec![true, false, false]);
        // late alarm after misses credits only the latest change
        let rep = regret(&trace_of(&[0.0; 40], &[35]), &e, false).unwrap();
        assert_eq!(rep.detected, vec![false, false, true]);
        assert_eq!(rep.num_false_alarms + rep.num_detections, rep.num_alarms);
    }

    #[test]
    fn vector_regret() {
        let e =
            Environment::new_vector(vec![3], vec![vec![0.0, 0.0], vec![1.0, 1.0]], 4, 1.0, None)
                .unwrap();
        let outcomes = (1..=4)
            .map(|t| StepOutcome {
                time: t,
                prediction: vec![0.0, 0.0],
                statistic: None,
                threshold: None,
                alarm: false,
                restart: 1,
            })
            .collect();
        let rep = regret(&RunTrace::new(outcomes), &e, false).unwrap();
        assert_eq!(rep.cumulative_regret, 4.0);
    }

    #[test]
    fn regret_additivity() {
        let e = env(vec![7, 15], vec![0.0, 3.0, -1.0], 25);
        let preds: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let rep = regret(&trace_of(&preds, &[]), &e, true).unwrap();
        let steps = rep.per_step.as_ref().unwrap();
        for t0 in 2..25 {
            let tail: f64 = (t0 + 1..=25)
                .map(|t| (preds[t - 1] - e.scalar_mean_at(t).unwrap()).powi(2))
                .sum();
            assert!((steps[t0 - 1] + tail - rep.cumulative_regret).abs() < 1e-12);
        }
        let csv = rep.to_csv();
        assert!(csv.starts_with("t,cum_regret\n1,0\n"));
        assert_eq!(csv.lines().count(), 26);
    }

    #[test]
    fn oracle_mc_is_zero() {
        let spec = ScenarioSpec::new(Scenario::MainS5, 1.0);
        let s = monte_carlo(&spec, &Policy::Oracle, &[200, 400], 5, 1).unwrap();
        for row in &s.rows {
            assert_eq!(row.mean_regret, 0.0);
            assert_eq!(row.ci_halfwidth, 0.0);
        }
        assert!(monte_carlo(&spec, &Policy::Oracle, &[200], 1, 1).is_err());
        assert!(monte_carlo(&spec, &Policy::Oracle, &[], 5, 1).is_err());
    }

    #[test]
    fn mc_is_deterministic_and_ci_consistent() {
        let spec = ScenarioSpec::new(Scenario::MainS5, 1.0);
        let policy = Policy::Atc(DetectorConfig::new(1.0, 0.05).unwrap());
        let a = monte_carlo(&spec, &policy, &[300], 20, 7).unwrap();
        let b = monte_carlo(&spec, &policy, &[300], 20, 7).unwrap();
        assert_eq!(a, b);
        let row = &a.rows[0];
        assert!((row.ci_halfwidth - 1.96 * row.stderr).abs() < 1e-12);
        let reports: Vec<_> = (0..20)
            .map(|i| replicate(&spec, &policy, 300, &RngSpec::new(7), i).unwrap())
            .collect();
        let direct = SampleStats::from_slice(
            &reports
                .iter()
                .map(|r| r.cumulative_regret)
                .collect::<Vec<_>>(),
        );
        assert!((direct.mean - row.mean_regret).abs() < 1e-9);
        assert!(a
            .to_csv()
            .starts_with("T,mean_regret,stderr,ci_halfwidth,n_reps\n300,"));
    }

    #[test]
    fn stderr_shrinks_with_reps() {
        let spec = ScenarioSpec::new(Scenario::MainS5, 1.0);
        let policy = Policy::SlidingWindow(30);
        let small = monte_carlo(&spec, &policy, &[200], 400, 100).unwrap().rows[0].stderr;
        let large = monte_carlo(&spec, &policy, &[200], 800, 100).unwrap().rows[0].stderr;
        let ratio = small / large;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn sample_stats() {
        let s = SampleStats::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.stderr - s.sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn snr_star_examples() {
        let e = env(vec![21], vec![0.0, 1.0], 60);
        assert!((snr_star(&e, 1, 41).unwrap() - 10.0).abs() < 1e-12);
        let first = snr_star(&e, 1, 22).unwrap();
        assert!((first - 20.0 / 21.0).abs() < 1e-15);
        assert!(snr_star(&e, 1, 21).is_err());
        assert!(snr_star(&e, 2, 30).is_err());
        let flat = env(vec![21], vec![1.0, 1.0], 60);
        assert_eq!(snr_star(&flat, 1, 41).unwrap(), 0.0);
        let e2 = Environment::new(vec![21], vec![0.0, 1.0], 60, 2.0, None).unwrap();
        assert!((snr_star(&e2, 1, 41).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn effective_mean_examples() {
        let e = env(vec![11, 21, 41], vec![0.0, 2.0, 4.0, 1.0], 60);
        assert_eq!(effective_pre_mean(&e, 11, 2).unwrap(), 2.0);
        assert_eq!(effective_pre_mean(&e, 1, 2).unwrap(), 1.0);
        assert!((snr_eff(&e, 11, 2, 41).unwrap() - snr_star(&e, 2, 41).unwrap()).abs() < 1e-12);
        assert!(effective_pre_mean(&e, 21, 2).is_err());
        assert!(effective_pre_mean(&e, 0, 2).is_err());
        // partial first segment
        let m = effective_pre_mean(&e, 6, 2).unwrap();
        assert!((m - (5.0 * 0.0 + 10.0 * 2.0) / 15.0).abs() < 1e-15);
    }

    #[test]
    fn two_regime_prefix_instances() {
        // μ = (0, 2, 4), n0 = n1 = 20, evaluated 20 steps after τ2
        let e = env(vec![21, 41], vec![0.0, 2.0, 4.0], 60);
        let star = snr_star(&e, 2, 61).unwrap();
        let eff = snr_eff(&e, 1, 2, 61).unwrap();
        assert!((star - 40.0).abs() < 1e-12);
        assert!((eff - 120.0).abs() < 1e-12);
        // reverting regime: the mixture shrinks the effective gap
        let e = env(vec![21, 41], vec![0.0, 2.0, 0.0], 60);
        let star = snr_star(&e, 2, 61).unwrap();
        let eff = snr_eff(&e, 1, 2, 61).unwrap();
        assert!((star - 40.0).abs() < 1e-12);
        assert!((eff - 40.0 / 3.0).abs() < 1e-12);
        assert!(eff < star);
    }

    #[test]
    fn gap_check_examples() {
        let (lhs, rhs, holds) = confounding_gap_check(10, 10, 10, 1.5, 1.5, -3.0).unwrap();
        assert_eq!(rhs, 0.0);
        assert!(lhs <= 1e-12 && holds);
        let (lhs, rhs, holds) = confounding_gap_check(10, 10, 10, 0.0, 2.0, 4.0).unwrap();
        assert_eq!(lhs, 0.0);
        assert!((rhs - 20.0).abs() < 1e-12);
        assert!(holds);
        assert!(confounding_gap_check(0, 1, 1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn gap_check_agrees_with_environment_formulas() {
        let (n0, n1, n2) = (13usize, 7usize, 22usize);
        let (m0, m1, m2) = (-1.2, 0.9, 0.1);
        let e = env(vec![n0 + 1, n0 + n1 + 1], vec![m0, m1, m2], n0 + n1 + n2);
        let t = n0 + n1 + n2 + 1;
        let star = snr_star(&e, 2, t).unwrap();
        let eff = snr_eff(&e, 1, 2, t).unwrap();
        let (lhs, rhs, _) = confounding_gap_check(n0, n1, n2, m0, m1, m2).unwrap();
        assert!((lhs - (star - eff).max(0.0)).abs() < 1e-12);
        let first = snr_star(&e, 1, n0 + n1 + 1).unwrap();
        assert!((rhs - first).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_follow_restarts() {
        let e = Environment::new(
            vec![11, 21, 41],
            vec![0.0, 2.0, 4.0, 1.0],
            60,
            1.0,
            Some(4.0),
        )
        .unwrap();
        // τ1 detected at 13 (restart 12), τ2 missed, τ3 detected
        let trace = trace_of(&[0.0; 60], &[13, 45]);
        let diag = confounding_diagnostics(&trace, &e).unwrap();
        assert_eq!(diag.len(), 3);
        assert_eq!(diag[0].restart, 1);
        assert_eq!(diag[1].restart, 12);
        assert_eq!(diag[2].restart, 12);
        assert_eq!(diag[2].pre_samples, 29);
        assert_eq!(diag[2].post_samples, 20);
        assert!((diag[1].snr_eff - snr_eff(&e, 12, 2, 41).unwrap()).abs() < 1e-12);
        for d in &diag {
            assert!(d.delta_eff <= e.diameter_bound().unwrap() + 1e-12);
        }
    }
}
