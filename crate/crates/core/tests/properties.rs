use atc::detector::{multiscale_bound, multiscale_candidates, run_values};
use atc::harness::{regret, Policy};
use atc::types::StepOutcome;
use atc::vector::{vector_run, VectorDetectorConfig};
use atc::{Detector, DetectorConfig, Environment, RunTrace, ScanMode, ThresholdRule, TimeSeries};
use proptest::prelude::*;

fn never_alarm(sigma: f64, scan: ScanMode) -> DetectorConfig {
    DetectorConfig::new(sigma, 0.05)
        .unwrap()
        .with_scan(scan)
        .unwrap()
        .with_threshold(ThresholdRule::Constant(f64::INFINITY))
        .unwrap()
}

fn stream() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 3..120)
}

fn statistics(trace: &RunTrace) -> Vec<f64> {
    trace.outcomes.iter().filter_map(|o| o.statistic).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn power_of_two_scaling_is_exact(xs in stream(), exp in -4i32..5) {
        let a = 2f64.powi(exp);
        let cfg = DetectorConfig::new(1.0, 0.05).unwrap();
        let base = run_values(&xs, cfg).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| a * x).collect();
        let other = run_values(&scaled, DetectorConfig::new(a, 0.05).unwrap()).unwrap();
        prop_assert_eq!(statistics(&base), statistics(&other));
        prop_assert_eq!(base.alarms(), other.alarms());
        for (p, q) in base.predictions().zip(other.predictions()) {
            prop_assert_eq!(a * p, *q);
        }
    }

    #[test]
    fn affine_equivariance(xs in stream(), a in 0.1..10.0f64, b in -100.0..100.0f64, neg in any::<bool>()) {
        let a = if neg { -a } else { a };
        let base = run_values(&xs, never_alarm(1.0, ScanMode::Full)).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let other = run_values(&moved, never_alarm(a.abs(), ScanMode::Full)).unwrap();
        for (s, u) in statistics(&base).iter().zip(statistics(&other)) {
            prop_assert!((s - u).abs() <= 1e-7 * (1.0 + s.abs()), "{} vs {}", s, u);
        }
    }

    #[test]
    fn rotation_invariance(pts in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 3..80), theta in 0.0..6.3f64) {
        let (c, s) = (theta.cos(), theta.sin());
        let flat: Vec<f64> = pts.iter().flat_map(|&(x, y)| [x, y]).collect();
        let rotated: Vec<f64> = pts.iter().flat_map(|&(x, y)| [c * x - s * y, s * x + c * y]).collect();
        let cfg = VectorDetectorConfig::new(never_alarm(1.0, ScanMode::Full), 2).unwrap();
        let a = vector_run(&TimeSeries::from_flat(flat, 2).unwrap(), cfg).unwrap();
        let b = vector_run(&TimeSeries::from_flat(rotated, 2).unwrap(), cfg).unwrap();
        for (oa, ob) in a.outcomes.iter().zip(&b.outcomes) {
            if let (Some(x), Some(y)) = (oa.statistic, ob.statistic) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn full_scan_dominates_multiscale(xs in stream(), b in prop::sample::select(vec![1.5, 2.0, 3.0])) {
        let full = run_values(&xs, never_alarm(1.0, ScanMode::Full)).unwrap();
        let multi = run_values(&xs, never_alarm(1.0, ScanMode::Multiscale { base: b })).unwrap();
        for (f, m) in statistics(&full).iter().zip(statistics(&multi)) {
            prop_assert!(*f >= m * (1.0 - 1e-12) - 1e-12);
        }
    }

    #[test]
    fn scan_matches_direct_statistic(xs in stream()) {
        let mut det = Detector::new(never_alarm(1.0, ScanMode::Full)).unwrap();
        for &x in &xs {
            det.step().unwrap();
            det.observe(x).unwrap();
        }
        let t = xs.len() + 1;
        let direct = (2..t).map(|k| det.glr_statistic(k).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        let (c, k) = det.scan().unwrap();
        prop_assert!((c - direct).abs() <= 1e-9 * (1.0 + direct));
        prop_assert!((det.glr_statistic(k).unwrap() - direct).abs() <= 1e-9 * (1.0 + direct));
    }

    #[test]
    fn prefix_sums_match_naive_block_sums(xs in stream(), i in 0usize..1000, j in 0usize..1000) {
        let mut det = Detector::new(never_alarm(1.0, ScanMode::Full)).unwrap();
        for &x in &xs {
            det.step().unwrap();
            det.observe(x).unwrap();
        }
        let n = xs.len();
        let (from, to) = {
            let (a, b) = (1 + i % n, 1 + j % n);
            (a.min(b), a.max(b) + 1)
        };
        let naive: f64 = xs[from - 1..to - 1].iter().sum();
        let scale: f64 = xs[from - 1..to - 1].iter().map(|x| x.abs()).sum::<f64>() + 1.0;
        prop_assert!((det.state().block_sum(from, to) - naive).abs() <= 1e-12 * scale * n as f64);
    }

    #[test]
    fn candidate_grid_is_bounded(r in 1usize..50, n in 2usize..5000, b in 1.05..4.0f64) {
        let t = r + n;
        let mut out = Vec::new();
        multiscale_candidates(r, t, b, &mut out);
        prop_assert!(out.len() <= multiscale_bound(n, b));
        prop_assert!(out.contains(&(r + 1)) && out.contains(&(t - 1)));
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(out.iter().all(|&k| k > r && k < t));
    }

    #[test]
    fn regret_additivity_and_alarm_partition(
        xs in prop::collection::vec(-3.0..3.0f64, 20..200),
        cps in prop::collection::btree_set(2usize..200, 0..6),
        sigma in 0.2..2.0f64,
        t0 in 2usize..200,
    ) {
        let horizon = xs.len();
        let cps: Vec<usize> = cps.into_iter().filter(|&c| c <= horizon).collect();
        let means: Vec<f64> = (0..=cps.len()).map(|j| (j as f64 * 1.7).sin() * 2.0).collect();
        let env = Environment::new(cps, means, horizon, 1.0, None).unwrap();
        let series = TimeSeries::scalar(xs).unwrap();
        let trace = Policy::Atc(DetectorConfig::new(sigma, 0.05).unwrap()).run(&series, &env).unwrap();
        let rep = regret(&trace, &env, true).unwrap();
        prop_assert!(rep.cumulative_regret >= 0.0);
        prop_assert_eq!(rep.num_false_alarms + rep.num_detections, rep.num_alarms);
        prop_assert_eq!(rep.num_detections + rep.num_missed, env.num_changes());
        let steps = rep.per_step.as_ref().unwrap();
        let t0 = t0.min(horizon);
        let tail: f64 = (t0 + 1..=horizon)
            .map(|t| (trace.outcomes[t - 1].prediction - env.scalar_mean_at(t).unwrap()).powi(2))
            .sum();
        prop_assert!((steps[t0 - 1] + tail - rep.cumulative_regret).abs() <= 1e-9 * (1.0 + rep.cumulative_regret));
    }

    #[test]
    fn synthetic_traces_restart_consistently(xs in stream()) {
        let trace = run_values(&xs, DetectorConfig::new(0.5, 0.2).unwrap()).unwrap();
        let mut r = 1;
        for o in &trace.outcomes {
            if o.alarm {
                prop_assert_eq!(o.restart, o.time - 1);
                prop_assert!(o.time >= r + 2);
                r = o.restart;
            }
            prop_assert_eq!(o.restart, r);
        }
        prop_assert_eq!(trace.restarts().len(), trace.num_blocks());
    }
}

#[test]
fn oracle_trace_has_zero_regret() {
    let env = Environment::new(vec![5, 9], vec![1.0, -2.0, 0.5], 12, 1.0, None).unwrap();
    let series = TimeSeries::scalar(vec![0.0; 12]).unwrap();
    let trace = Policy::Oracle.run(&series, &env).unwrap();
    assert_eq!(regret(&trace, &env, false).unwrap().cumulative_regret, 0.0);
    let _: &StepOutcome = &trace.outcomes[0];
}
