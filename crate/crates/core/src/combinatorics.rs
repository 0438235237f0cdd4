//! The bounding constant for randomized-ablation smoothing and its inversion
//! into a maximal certified L0 radius.
//!
//! For an image of `d` pixels from which `k` are retained, a perturbation of
//! at most `rho` pixels can shift any class probability of the smoothed
//! classifier by at most
//!
//! ```text
//! delta = 1 - C(d - rho, k) / C(d, k)
//! ```
//!
//! `delta` is nondecreasing in both `rho` and `k`, which lets the certificate
//! conditions be inverted by a simple scan.

use crate::error::{Error, Result};

/// Parameters of the bounding constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeltaParams {
    /// Total pixel count.
    pub d: u64,
    /// Retention constant: pixels kept per ablated sample.
    pub k: u64,
    /// L0 perturbation budget.
    pub rho: u64,
}

impl DeltaParams {
    pub fn new(d: u64, k: u64, rho: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParams("d must be positive".into()));
        }
        if k == 0 || k > d {
            return Err(Error::InvalidParams(format!(
                "retention constant k={k} must satisfy 1 <= k <= d={d}"
            )));
        }
        if rho > d {
            return Err(Error::InvalidParams(format!(
                "perturbation budget rho={rho} must satisfy 0 <= rho <= d={d}"
            )));
        }
        Ok(Self { d, k, rho })
    }
}

/// Probability that a uniform k-of-d index set intersects a fixed set of
/// `rho` indices: `1 - C(d - rho, k) / C(d, k)`.
///
/// The binomial ratio collapses to a product of `min(k, rho)` factors,
/// accumulated in log space with compensated summation so the result stays
/// within 1e-12 absolute error even at ImageNet scale.
pub fn delta(params: DeltaParams) -> f64 {
    let DeltaParams { d, k, rho } = params;
    if rho == 0 {
        return 0.0;
    }
    if rho > d - k {
        // C(d - rho, k) = 0: every index set hits the perturbed pixels.
        return 1.0;
    }
    // C(d-rho, k) / C(d, k) = prod_{i=0}^{m-1} (d - off - i) / (d - i)
    // with m = min(k, rho) and off = max(k, rho).
    let (m, off) = if k <= rho { (k, rho) } else { (rho, k) };
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..m {
        let term = ((d - off - i) as f64).ln() - ((d - i) as f64).ln();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    // sum <= 0, so -expm1(sum) = 1 - exp(sum) without cancellation.
    -f64::exp_m1(sum)
}

/// Guard band for the strict certificate comparisons. The conditions are
/// strict inequalities and a delta exactly at the threshold must not
/// certify; requiring the margin to clear this band keeps floating-point
/// noise (delta is accurate to ~1e-15, threshold ties included) from
/// certifying an exact tie. Erring this way only shrinks radii, never
/// inflates them.
const CERT_MARGIN: f64 = 1e-12;

/// Whether `p_lower - delta(d, k, rho) > 0.5` holds with the guard band.
pub fn certifies_at(p_lower: f64, d: u64, k: u64, rho: u64) -> Result<bool> {
    check_probability(p_lower, "p_lower")?;
    Ok(p_lower - delta(DeltaParams::new(d, k, rho)?) > 0.5 + CERT_MARGIN)
}

/// Whether `p_i_lower - delta > p_max_other_upper + delta` holds with the
/// guard band.
pub fn certifies_at_pairwise(
    p_i_lower: f64,
    p_max_other_upper: f64,
    d: u64,
    k: u64,
    rho: u64,
) -> Result<bool> {
    check_probability(p_i_lower, "p_i_lower")?;
    check_probability(p_max_other_upper, "p_max_other_upper")?;
    let dl = delta(DeltaParams::new(d, k, rho)?);
    Ok(p_i_lower - dl > p_max_other_upper + dl + CERT_MARGIN)
}

/// Largest `rho` such that `p_lower - delta(d, k, rho) > 0.5`, or `None`
/// when even an unperturbed input cannot be certified (`p_lower <= 0.5`).
pub fn max_certified_radius(p_lower: f64, d: u64, k: u64) -> Result<Option<u64>> {
    let mut certified = None;
    for rho in 0..=d {
        if certifies_at(p_lower, d, k, rho)? {
            certified = Some(rho);
        } else {
            // delta is nondecreasing in rho, so no larger radius can pass.
            break;
        }
    }
    Ok(certified)
}

/// Largest `rho` such that `p_i_lower - delta > p_max_other_upper + delta`,
/// or `None` when the gap is nonpositive.
pub fn max_certified_radius_pairwise(
    p_i_lower: f64,
    p_max_other_upper: f64,
    d: u64,
    k: u64,
) -> Result<Option<u64>> {
    let mut certified = None;
    for rho in 0..=d {
        if certifies_at_pairwise(p_i_lower, p_max_other_upper, d, k, rho)? {
            certified = Some(rho);
        } else {
            break;
        }
    }
    Ok(certified)
}

fn check_probability(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!(
            "{name}={p} is not a probability"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn delta_zero_budget_is_zero() {
        let p = DeltaParams::new(784, 45, 0).unwrap();
        assert_eq!(delta(p), 0.0);
    }

    #[test]
    fn delta_small_exact() {
        // 1 - C(4,2)/C(5,2) = 1 - 6/10, confirmed by enumerating the 10 pairs.
        let p = DeltaParams::new(5, 2, 1).unwrap();
        assert_abs_diff_eq!(delta(p), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn delta_saturates_when_budget_exceeds_slack() {
        // C(1,2) = 0, so the ratio vanishes.
        let p = DeltaParams::new(5, 2, 4).unwrap();
        assert_eq!(delta(p), 1.0);
    }

    #[test]
    fn delta_mnist_scale_spot_value() {
        // Exact rational: 1 - prod_{i=0}^{7} (739 - i) / (784 - i),
        // frozen from the exact-arithmetic oracle.
        let p = DeltaParams::new(784, 45, 8).unwrap();
        assert_abs_diff_eq!(delta(p), 0.378_163_415_524_088, epsilon = 1e-12);
    }

    #[test]
    fn delta_rejects_bad_params() {
        assert!(DeltaParams::new(0, 1, 0).is_err());
        assert!(DeltaParams::new(5, 0, 0).is_err());
        assert!(DeltaParams::new(5, 6, 0).is_err());
        assert!(DeltaParams::new(5, 2, 6).is_err());
    }

    #[test]
    fn delta_monotone_in_rho_and_k_on_grid() {
        for d in 1..=50u64 {
            for k in 1..=d {
                let mut prev = -1.0;
                for rho in 0..=d {
                    let v = delta(DeltaParams { d, k, rho });
                    assert!(
                        v >= prev,
                        "delta not monotone in rho at d={d} k={k} rho={rho}"
                    );
                    prev = v;
                }
            }
            for rho in 0..=d {
                let mut prev = -1.0;
                for k in 1..=d {
                    let v = delta(DeltaParams { d, k, rho });
                    assert!(
                        v >= prev,
                        "delta not monotone in k at d={d} k={k} rho={rho}"
                    );
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn delta_log_space_agrees_with_direct_product_at_scale() {
        // Same quantity through a second algebraic route: the plain product
        // of ratios in linear space.
        for &(d, k, rho) in &[
            (1_000_000u64, 100_000u64, 100u64),
            (50_176, 1_000, 16),
            (784, 45, 8),
            (784, 784, 1),
        ] {
            let (m, off) = if k <= rho { (k, rho) } else { (rho, k) };
            let mut prod = 1.0f64;
            for i in 0..m {
                prod *= (d - off - i) as f64 / (d - i) as f64;
            }
            let direct = 1.0 - prod;
            assert_abs_diff_eq!(delta(DeltaParams { d, k, rho }), direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn radius_none_at_half() {
        assert_eq!(max_certified_radius(0.5, 784, 45).unwrap(), None);
        assert_eq!(max_certified_radius(0.2, 5, 2).unwrap(), None);
    }

    #[test]
    fn radius_small_instance() {
        // delta(1) = 0.4 < 0.41 <= delta(2) = 0.7; brute force over rho.
        assert_eq!(max_certified_radius(0.91, 5, 2).unwrap(), Some(1));
    }

    #[test]
    fn radius_zero_when_k_equals_d() {
        // delta(rho >= 1) = 1 when k = d.
        assert_eq!(max_certified_radius(1.0, 7, 7).unwrap(), Some(0));
    }

    #[test]
    fn radius_brute_force_agreement() {
        let d = 12;
        for k in 1..=d {
            for p in [0.3, 0.5, 0.51, 0.6, 0.75, 0.9, 0.99, 1.0] {
                let expected = (0..=d)
                    .filter(|&rho| certifies_at(p, d, k, rho).unwrap())
                    .max();
                assert_eq!(max_certified_radius(p, d, k).unwrap(), expected);
            }
        }
    }

    #[test]
    fn radius_monotone_in_p_lower() {
        let mut prev = -1i64;
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let r = max_certified_radius(p, 30, 6).unwrap();
            let as_int = r.map(|v| v as i64).unwrap_or(-1);
            assert!(as_int >= prev, "radius not monotone at p={p}");
            prev = as_int;
        }
    }

    #[test]
    fn pairwise_zero_gap_is_none() {
        assert_eq!(
            max_certified_radius_pairwise(0.6, 0.6, 5, 2).unwrap(),
            None
        );
    }

    #[test]
    fn pairwise_boundary_does_not_certify() {
        // Gap 0.8 requires delta < 0.4 strictly; delta(5,2,1) = 2/5 exactly,
        // so rho = 1 fails and the radius stays 0 (resolved against the
        // exact-rational oracle in the integration tests).
        assert_eq!(
            max_certified_radius_pairwise(0.9, 0.1, 5, 2).unwrap(),
            Some(0)
        );
    }

    #[test]
    fn pairwise_full_gap() {
        // Need delta < 0.5: delta(1) = 0.4 passes, delta(2) = 0.7 fails.
        assert_eq!(
            max_certified_radius_pairwise(1.0, 0.0, 5, 2).unwrap(),
            Some(1)
        );
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        assert!(max_certified_radius(1.5, 5, 2).is_err());
        assert!(max_certified_radius_pairwise(-0.1, 0.5, 5, 2).is_err());
    }
}
