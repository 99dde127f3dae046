use std::time::Duration;

use num_rational::Ratio;
use proptest::prelude::*;

use qwinsim::config::{scenario, ExperimentConfig, SCENARIOS};
use qwinsim::metrics::LatencyHistogram;
use qwinsim::qwin::{plan_adjustment, select_policy, Adjustment, CorePolicy, QwinParams};
use qwinsim::window::{calculate_cores, compute_budget, WindowLoad};

fn load(ql: u64, tw: i64, slo: i64, tail: i64, avg: i64) -> WindowLoad<Ratio<i128>> {
    let r = |v: i64| Ratio::from_integer(v as i128);
    WindowLoad { ql, tw: r(tw), slo: r(slo), tail_io: r(tail), t_io_avg: r(avg) }
}

proptest! {
    #[test]
    fn demand_is_monotone_in_ql_and_tw(
        ql in 1u64..5000, dq in 0u64..500, tw in 0i64..6000, dtw in 0i64..2000,
        slo in 500i64..8000, tail in 0i64..2000, avg in 1i64..500, total in 1usize..64,
    ) {
        let n = calculate_cores(&load(ql, tw, slo, tail, avg), total);
        prop_assert!((1..=total).contains(&n));
        prop_assert!(calculate_cores(&load(ql + dq, tw, slo, tail, avg), total) >= n);
        prop_assert!(calculate_cores(&load(ql, tw + dtw, slo, tail, avg), total) >= n);
    }

    #[test]
    fn float_path_matches_exact_path(
        ql in 1u64..5000, tw in 0i64..6000, slo in 500i64..8000, tail in 0i64..2000, avg in 1i64..500, total in 1usize..64,
    ) {
        let exact = load(ql, tw, slo, tail, avg);
        let f = |v: i64| v as f64;
        let float = WindowLoad { ql, tw: f(tw), slo: f(slo), tail_io: f(tail), t_io_avg: f(avg) };
        prop_assert_eq!(calculate_cores(&float, total), calculate_cores(&exact, total));
        prop_assert_eq!(compute_budget(&float), compute_budget(&exact));
    }

    #[test]
    fn budget_at_least_one_and_demand_max_without_slack(
        ql in 1u64..1000, slo in 1i64..5000, tail in 0i64..5000, tw in 0i64..5000, avg in 1i64..500,
    ) {
        let l = load(ql, tw, slo, tail, avg);
        prop_assert!(compute_budget(&l) >= 1);
        if tw + tail >= slo {
            prop_assert_eq!(calculate_cores(&l, 24), 24);
            prop_assert_eq!(compute_budget(&l), 1);
        }
    }

    #[test]
    fn policy_is_a_function_of_slack(slack in -5_000_000i128..5_000_000) {
        let p = QwinParams::default();
        let want = if slack > 1_000_000 {
            CorePolicy::Conservative
        } else if slack < 300_000 {
            CorePolicy::Aggressive
        } else {
            CorePolicy::SloAware
        };
        prop_assert_eq!(select_policy(slack, &p), want);
    }

    #[test]
    fn adjustments_conserve_cores(num in 1usize..32, target in 1usize..32, avail in 0usize..32) {
        match plan_adjustment(num, target, avail) {
            Adjustment::None => prop_assert_eq!(num, target),
            Adjustment::Release(k) => prop_assert_eq!(num - k, target),
            Adjustment::Grant { n, shortfall } => {
                prop_assert!(n <= avail);
                prop_assert_eq!(num + n + shortfall, target);
                prop_assert!(shortfall == 0 || n == avail);
            }
        }
    }

    #[test]
    fn histogram_within_one_bucket_of_sorted_oracle(mut samples in prop::collection::vec(1_000u64..50_000_000, 1..3000)) {
        let mut h = LatencyHistogram::new();
        for &s in &samples {
            h.record(s);
        }
        samples.sort_unstable();
        for q in [0.5, 0.9, 0.99, 0.999] {
            let rank = ((q * samples.len() as f64).ceil() as usize).max(1);
            let exact = samples[rank - 1];
            let (lo, hi) = LatencyHistogram::bucket_of(exact);
            let got = h.quantile(q).unwrap();
            prop_assert_eq!(got, hi);
            prop_assert!(got >= exact && got - exact <= hi - lo);
            prop_assert!((hi - lo) as f64 <= exact as f64 / 32.0);
        }
    }

    #[test]
    fn config_round_trips(
        idx in 0usize..SCENARIOS.len(), seed in any::<u64>(), dur_ms in 2_000u64..100_000, sigma in 0.0f64..1.0,
        thresh_win in 1u64..5000,
    ) {
        let mut c = scenario(SCENARIOS[idx]).unwrap();
        c.seed = seed;
        c.duration = Duration::from_millis(dur_ms);
        c.warmup = Duration::from_millis(dur_ms / 10);
        c.device.sigma = sigma;
        c.allocator.qwin.thresh_win = thresh_win;
        let text = c.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml_string(), text);
    }
}
