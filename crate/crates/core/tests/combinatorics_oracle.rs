//! Equivalence of the log-space bounding constant with the exact-rational
//! reference over exhaustive small grids, and oracle resolution of the
//! boundary probes in the radius search.

use l0cert_core::combinatorics::{
    certifies_at_pairwise, delta, max_certified_radius, max_certified_radius_pairwise, DeltaParams,
};
use l0cert_oracles::{delta_exact, rational_to_f64};
use l0cert_oracles::num_rational::BigRational;
use l0cert_oracles::num_traits::One;

#[test]
fn exact_rational_equivalence_up_to_d_30() {
    for d in 1..=30u64 {
        for k in 1..=d {
            for rho in 0..=d {
                let fast = delta(DeltaParams::new(d, k, rho).unwrap());
                let exact = rational_to_f64(&delta_exact(d, k, rho).unwrap());
                assert!(
                    (fast - exact).abs() <= 1e-12,
                    "delta({d},{k},{rho}): {fast} vs exact {exact}"
                );
            }
        }
    }
}

#[test]
fn exact_rational_equivalence_spot_checks_at_scale() {
    for &(d, k, rho) in &[
        (784u64, 45u64, 8u64),
        (784, 45, 1),
        (784, 45, 11),
        (784, 100, 20),
        (2000, 1000, 3),
        (9999, 17, 40),
    ] {
        let fast = delta(DeltaParams::new(d, k, rho).unwrap());
        let exact = rational_to_f64(&delta_exact(d, k, rho).unwrap());
        assert!(
            (fast - exact).abs() <= 1e-12,
            "delta({d},{k},{rho}): {fast} vs exact {exact}"
        );
    }
}

/// The radius search agrees with a scan that evaluates the corollary
/// condition in exact rational arithmetic, over every dyadic p_lower probe.
#[test]
fn radius_matches_exact_rational_scan() {
    let half = BigRational::new(1.into(), 2.into());
    for d in [5u64, 6, 10, 17] {
        for k in 1..=d {
            for num in 0..=64u64 {
                let p64 = num as f64 / 64.0; // exactly representable
                let p_rat = BigRational::new(num.into(), 64.into());
                let expected = (0..=d)
                    .filter(|&rho| {
                        let dl = delta_exact(d, k, rho).unwrap();
                        &p_rat - &dl > half
                    })
                    .max();
                assert_eq!(
                    max_certified_radius(p64, d, k).unwrap(),
                    expected,
                    "d={d} k={k} p={num}/64"
                );
            }
        }
    }
}

/// Boundary probes from the pairwise certificate, resolved by exact
/// rational comparison: equality never certifies.
#[test]
fn pairwise_boundary_probes_match_oracle() {
    // Gap 0.8 needs delta < 2/5 strictly; delta(5,2,1) = 2/5, so rho = 1
    // must not certify.
    let d1 = delta_exact(5, 2, 1).unwrap();
    let gap_half = BigRational::new(2.into(), 5.into());
    assert!(!(d1 < gap_half), "oracle: delta(5,2,1) is exactly the half-gap");
    assert_eq!(max_certified_radius_pairwise(0.9, 0.1, 5, 2).unwrap(), Some(0));
    assert!(!certifies_at_pairwise(0.9, 0.1, 5, 2, 1).unwrap());

    // Full gap 1.0 needs delta < 1/2: delta(5,2,1) = 2/5 passes and
    // delta(5,2,2) = 7/10 fails, so the radius is exactly 1.
    let half = BigRational::new(1.into(), 2.into());
    assert!(delta_exact(5, 2, 1).unwrap() < half);
    assert!(!(delta_exact(5, 2, 2).unwrap() < half));
    assert_eq!(max_certified_radius_pairwise(1.0, 0.0, 5, 2).unwrap(), Some(1));
}

/// The implementation never certifies a radius the exact-rational scan
/// would not (conservatism near ties is allowed, inflation is not).
#[test]
fn pairwise_radius_never_exceeds_exact_scan() {
    for d in [5u64, 8, 12] {
        for k in 1..=d {
            for pi in 0..=16u64 {
                for po in 0..=pi {
                    let p_hi = pi as f64 / 16.0;
                    let p_lo = po as f64 / 16.0;
                    let hi_rat = BigRational::new(pi.into(), 16.into());
                    let lo_rat = BigRational::new(po.into(), 16.into());
                    let exact = (0..=d)
                        .filter(|&rho| {
                            let dl = delta_exact(d, k, rho).unwrap();
                            &hi_rat - &dl > &lo_rat + &dl
                        })
                        .max();
                    let got = max_certified_radius_pairwise(p_hi, p_lo, d, k).unwrap();
                    match (got, exact) {
                        (None, _) => {}
                        (Some(g), Some(e)) => {
                            assert!(g <= e, "d={d} k={k} {pi}/16 vs {po}/16: {g} > exact {e}")
                        }
                        (Some(g), None) => {
                            panic!("d={d} k={k} {pi}/16 vs {po}/16: certified {g}, oracle says none")
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn delta_saturates_exactly_like_the_oracle() {
    for d in [4u64, 9, 15] {
        for k in 1..=d {
            for rho in 0..=d {
                let fast = delta(DeltaParams::new(d, k, rho).unwrap());
                let exact = delta_exact(d, k, rho).unwrap();
                if exact == BigRational::one() {
                    assert_eq!(fast, 1.0, "d={d} k={k} rho={rho}");
                }
            }
        }
    }
}
