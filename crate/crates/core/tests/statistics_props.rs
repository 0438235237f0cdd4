//! Statistical properties of the confidence machinery: root consistency
//! against the exact-tail oracle, Monte-Carlo coverage, and simultaneous
//! bound coverage.

use l0cert_core::rng::stream_rng;
use l0cert_core::statistics::{
    abstention_test, binomial_tail_upper, lower_conf_bound, simultaneous_bounds, upper_conf_bound,
    AbstentionDecision, SampleCounts,
};
use l0cert_oracles::binom_tail_exact;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn tail_matches_oracle_on_grid() {
    for n in [1u64, 2, 10, 100, 777, 5000] {
        for s in [0, 1, n / 3, n / 2, n.saturating_sub(1), n] {
            for p in [0.001, 0.1, 0.5, 0.77, 0.999] {
                let ours = binomial_tail_upper(n, s, p);
                let oracle = binom_tail_exact(n, s, p).unwrap();
                assert!(
                    (ours - oracle).abs() < 1e-10,
                    "tail({n},{s},{p}): {ours} vs {oracle}"
                );
            }
        }
    }
}

/// The lower bound is the root of the exact upper tail at level alpha.
#[test]
fn lower_bound_is_tail_root() {
    for &(s, n) in &[(1u64, 10u64), (7, 10), (90, 100), (500, 1000), (42, 50)] {
        for alpha in [0.01, 0.05, 0.2] {
            let bound = lower_conf_bound(s, n, alpha).unwrap();
            let tail = binom_tail_exact(n, s, bound).unwrap();
            assert!(
                (tail - alpha).abs() < 1e-6,
                "root check ({s},{n},{alpha}): tail at bound is {tail}"
            );
        }
    }
}

#[test]
fn abstention_p_value_matches_oracle() {
    for &(a, b) in &[(60u64, 40u64), (70, 30), (55, 45), (12, 3), (501, 499)] {
        let n = a + b;
        let p = (2.0 * binom_tail_exact(n, a.max(b), 0.5).unwrap()).min(1.0);
        let expected = if p <= 0.05 {
            AbstentionDecision::ReturnTop
        } else {
            AbstentionDecision::Abstain
        };
        assert_eq!(abstention_test(a, b, 0.05).unwrap(), expected, "({a},{b})");
    }
}

/// Coverage of the one-sided lower bound: over many simulated binomial
/// draws, the true rate lies above the bound with frequency at least
/// 1 - alpha (minus 3 sigma of simulation noise).
#[test]
fn lower_bound_coverage() {
    let alpha = 0.05;
    let n = 100u64;
    let sims = 100_000u64;
    let sigma = (alpha * (1.0 - alpha) / sims as f64).sqrt();
    let threshold = 1.0 - alpha - 3.0 * sigma;

    for (case, p) in [0.1f64, 0.5, 0.9].into_iter().enumerate() {
        // The bound depends only on the success count; precompute it.
        let bounds: Vec<f64> = (0..=n)
            .map(|s| lower_conf_bound(s, n, alpha).unwrap())
            .collect();
        let mut rng = stream_rng(1234, case as u64);
        let mut covered = 0u64;
        for _ in 0..sims {
            let mut s = 0usize;
            for _ in 0..n {
                if rng.gen_range(0.0..1.0) < p {
                    s += 1;
                }
            }
            if p >= bounds[s] {
                covered += 1;
            }
        }
        let coverage = covered as f64 / sims as f64;
        assert!(
            coverage >= threshold,
            "coverage {coverage} below {threshold} at p={p}"
        );
    }
}

/// Joint coverage of the Bonferroni-corrected simultaneous bounds at a true
/// two-class rate of (0.7, 0.3).
#[test]
fn simultaneous_bounds_joint_coverage() {
    let alpha = 0.05;
    let n = 100u64;
    let sims = 10_000u64;
    let (p0, p1) = (0.7f64, 0.3f64);

    let mut cache: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n as usize + 1);
    for s in 0..=n {
        let counts = SampleCounts::new(vec![s.max(0), n - s]).unwrap();
        cache.push(simultaneous_bounds(&counts, alpha).unwrap());
    }

    let mut rng = stream_rng(99, 0);
    let mut jointly_covered = 0u64;
    for _ in 0..sims {
        let mut s = 0usize;
        for _ in 0..n {
            if rng.gen_range(0.0..1.0) < p0 {
                s += 1;
            }
        }
        let bounds = &cache[s];
        let ok0 = bounds[0].0 <= p0 && p0 <= bounds[0].1;
        let ok1 = bounds[1].0 <= p1 && p1 <= bounds[1].1;
        if ok0 && ok1 {
            jointly_covered += 1;
        }
    }
    let coverage = jointly_covered as f64 / sims as f64;
    let sigma = (alpha * (1.0 - alpha) / sims as f64).sqrt();
    assert!(
        coverage >= 1.0 - alpha - 3.0 * sigma,
        "joint coverage {coverage}"
    );
}

proptest! {
    #[test]
    fn bounds_sandwich_and_order(s in 0u64..=200, extra in 0u64..=200, alpha in 0.001f64..0.5) {
        let n = s + extra.max(1);
        let lo = lower_conf_bound(s, n, alpha).unwrap();
        let hi = upper_conf_bound(s, n, alpha).unwrap();
        let hat = s as f64 / n as f64;
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!((0.0..=1.0).contains(&hi));
        prop_assert!(lo <= hat + 1e-9);
        prop_assert!(hat <= hi + 1e-9);
    }

    #[test]
    fn lower_bound_monotone_in_successes(n in 1u64..=150, alpha in 0.001f64..0.5) {
        let mut prev = -1.0;
        for s in 0..=n {
            let b = lower_conf_bound(s, n, alpha).unwrap();
            prop_assert!(b >= prev - 1e-12, "s={s} bound {b} < previous {prev}");
            prev = b;
        }
    }

    #[test]
    fn abstention_depends_only_on_count_multiset(a in 0u64..300, b in 0u64..300, alpha in 0.001f64..0.5) {
        prop_assert_eq!(
            abstention_test(a, b, alpha).unwrap(),
            abstention_test(b, a, alpha).unwrap()
        );
    }
}
