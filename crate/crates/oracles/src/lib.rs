//! Independent brute-force reference implementations used only by tests:
//! exact rational computation of the bounding constant, exhaustive
//! enumeration of index sets and L0 balls, exact binomial tails, and lookup
//! table classifiers over tiny instances.
//!
//! Nothing here shares numeric code paths with the library it checks.

pub use num_bigint;
pub use num_rational;
pub use num_traits;

use itertools::Itertools;
use l0cert_core::ablation::{ablate, AblatedImage, Image, IndexSet};
use l0cert_core::classifier::BaseClassifier;
use l0cert_core::datasets::image_from_levels;
use l0cert_core::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Exact binomial coefficient.
pub fn binomial_exact(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}

/// Exact value of `1 - C(d - rho, k) / C(d, k)` as a reduced rational.
pub fn delta_exact(d: u64, k: u64, rho: u64) -> Result<BigRational> {
    if d == 0 || k == 0 || k > d || rho > d {
        return Err(Error::InvalidParams(format!(
            "delta_exact: bad (d={d}, k={k}, rho={rho})"
        )));
    }
    if d > 10_000 {
        return Err(Error::InstanceTooLarge(format!(
            "delta_exact supports d <= 10^4, got {d}"
        )));
    }
    let ratio = BigRational::new(binomial_exact(d - rho, k), binomial_exact(d, k));
    Ok(BigRational::one() - ratio)
}

/// Correctly-scaled conversion of a nonnegative rational in a moderate range
/// to f64, safe for ratios whose numerator and denominator overflow f64 on
/// their own.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    assert!(!r.is_negative(), "only nonnegative rationals supported");
    let numer = r.numer();
    let denom = r.denom();
    // Shift the numerator so the integer quotient carries ~64 significant
    // bits, then scale back.
    let shift: i64 = denom.bits() as i64 + 64 - numer.bits() as i64;
    let scaled = if shift >= 0 {
        (numer << shift as u64) / denom
    } else {
        numer / (denom << (-shift) as u64)
    };
    scaled.to_f64().expect("64-bit mantissa fits") * 2f64.powi(-shift as i32)
}

/// Exact per-class probabilities of the smoothed classifier by full
/// enumeration of H(d, k) (at most 10^6 index sets).
pub fn enumerate_p(
    image: &Image,
    classifier: &dyn BaseClassifier,
    k: u32,
) -> Result<Vec<BigRational>> {
    let d = image.num_pixels() as u32;
    if k == 0 || k > d {
        return Err(Error::InvalidParams(format!("enumerate_p: k={k} d={d}")));
    }
    let total = binomial_exact(d as u64, k as u64);
    if total > BigInt::from(1_000_000u64) {
        return Err(Error::InstanceTooLarge(format!(
            "C({d},{k}) exceeds the enumeration budget"
        )));
    }
    let mut counts = vec![BigInt::zero(); classifier.num_classes()];
    for combo in (0..d).combinations(k as usize) {
        let set = IndexSet::new(combo)?;
        let ab = ablate(image, &set)?;
        counts[classifier.classify(&ab)?] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| BigRational::new(c, total.clone()))
        .collect())
}

/// Exact upper tail `P(X >= s)` for `X ~ Binomial(n, p)` by direct
/// summation of per-term log masses.
pub fn binom_tail_exact(n: u64, s: u64, p: f64) -> Result<f64> {
    if n > 100_000 {
        return Err(Error::InstanceTooLarge(format!("n={n} too large")));
    }
    if s > n || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!(
            "binom_tail_exact: bad (n={n}, s={s}, p={p})"
        )));
    }
    if s == 0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    // ln j! table by direct summation.
    let mut ln_fact = vec![0.0f64; n as usize + 1];
    for j in 1..=n as usize {
        ln_fact[j] = ln_fact[j - 1] + (j as f64).ln();
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut tail = 0.0f64;
    for j in s..=n {
        let ln_term = ln_fact[n as usize] - ln_fact[j as usize] - ln_fact[(n - j) as usize]
            + j as f64 * lp
            + (n - j) as f64 * lq;
        tail += ln_term.exp();
    }
    Ok(tail.min(1.0))
}

/// Key identifying an ablated image over a discrete alphabet: one byte per
/// pixel, with 255 marking NULL.
fn ablated_key(ablated: &AblatedImage, s_size: u8) -> Vec<u8> {
    let denom = (s_size - 1) as f64;
    (0..ablated.num_pixels())
        .map(|i| match ablated.pixel(i) {
            None => 255u8,
            Some(px) => (px[0] * denom).round() as u8,
        })
        .collect()
}

/// A total lookup-table classifier over every possible ablated image of a
/// tiny discrete instance.
pub struct LookupClassifier {
    table: HashMap<Vec<u8>, usize>,
    num_classes: usize,
    s_size: u8,
}

impl LookupClassifier {
    /// Random total table over all `C(d, k) * s_size^k` ablated images.
    pub fn random(d: u32, k: u32, s_size: u8, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = HashMap::new();
        for combo in (0..d).combinations(k as usize) {
            // Enumerate all value assignments for the retained positions.
            let assignments = (s_size as usize).pow(k);
            for rank in 0..assignments {
                let mut key = vec![255u8; d as usize];
                let mut r = rank;
                for &pos in &combo {
                    key[pos as usize] = (r % s_size as usize) as u8;
                    r /= s_size as usize;
                }
                table.insert(key, rng.gen_range(0..num_classes));
            }
        }
        Self {
            table,
            num_classes,
            s_size,
        }
    }
}

impl BaseClassifier for LookupClassifier {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn classify(&self, ablated: &AblatedImage) -> Result<usize> {
        let key = ablated_key(ablated, self.s_size);
        self.table
            .get(&key)
            .copied()
            .ok_or_else(|| Error::InvalidParams("ablated image outside the table".into()))
    }
}

/// All images within L0 distance `rho` of `levels` over an alphabet of
/// `s_size` values (the original included).
pub fn enumerate_l0_ball(levels: &[u8], s_size: u8, rho: u32) -> Vec<Vec<u8>> {
    let d = levels.len();
    let mut out = Vec::new();
    for m in 0..=(rho as usize).min(d) {
        for positions in (0..d).combinations(m) {
            // Each changed position takes any of the s_size - 1 other values.
            let mut stack: Vec<Vec<u8>> = vec![levels.to_vec()];
            for &pos in &positions {
                let mut next = Vec::new();
                for img in &stack {
                    for v in 0..s_size {
                        if v != levels[pos] {
                            let mut changed = img.clone();
                            changed[pos] = v;
                            next.push(changed);
                        }
                    }
                }
                stack = next;
            }
            out.extend(stack);
        }
    }
    out
}

/// Image over the unit interval for discrete pixel levels.
pub fn levels_image(levels: &[u8], s_size: usize) -> Image {
    image_from_levels(levels, s_size).expect("valid levels")
}

/// Argmax over rationals, ties toward the lowest index.
pub fn argmax_rational(values: &[BigRational]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v > &values[best] {
            best = i;
        }
    }
    best
}

/// Largest `rho` such that every image within L0 distance `rho` of `levels`
/// is smoothed to `label` under exact enumeration, or `None` if the clean
/// image itself is not. This is the ground truth any sound certificate must
/// stay below.
pub fn exhaustive_safe_radius(
    levels: &[u8],
    s_size: u8,
    classifier: &dyn BaseClassifier,
    k: u32,
    label: usize,
) -> Result<Option<u64>> {
    let d = levels.len() as u64;
    let mut safe = None;
    'radius: for rho in 0..=d {
        for perturbed in enumerate_l0_ball(levels, s_size, rho as u32) {
            let img = levels_image(&perturbed, s_size as usize);
            let p = enumerate_p(&img, classifier, k)?;
            if argmax_rational(&p) != label {
                break 'radius;
            }
        }
        safe = Some(rho);
        if rho == d {
            break;
        }
    }
    Ok(safe)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial_exact(5, 2), BigInt::from(10));
        assert_eq!(binomial_exact(6, 3), BigInt::from(20));
        assert_eq!(binomial_exact(1, 2), BigInt::zero());
        assert_eq!(
            binomial_exact(784, 45).to_string().len(),
            74,
            "C(784,45) has 74 digits"
        );
    }

    #[test]
    fn delta_exact_small_values() {
        assert_eq!(
            delta_exact(5, 2, 1).unwrap(),
            BigRational::new(BigInt::from(2), BigInt::from(5))
        );
        assert_eq!(delta_exact(5, 2, 4).unwrap(), BigRational::one());
        assert!(delta_exact(20_000, 2, 1).is_err());
    }

    #[test]
    fn rational_conversion_handles_huge_terms() {
        // C(2000, 1000) overflows f64 on its own; the ratio must not.
        let r = BigRational::new(binomial_exact(1999, 1000), binomial_exact(2000, 1000));
        let v = rational_to_f64(&r);
        assert!((v - 0.5).abs() < 1e-12, "ratio came out as {v}");
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        assert_eq!(rational_to_f64(&half), 0.5);
        assert_eq!(rational_to_f64(&BigRational::zero()), 0.0);
    }

    #[test]
    fn tail_values() {
        assert_eq!(binom_tail_exact(10, 0, 0.3).unwrap(), 1.0);
        assert!((binom_tail_exact(2, 2, 0.5).unwrap() - 0.25).abs() < 1e-15);
        // Upper tail of 60 in 100 fair trials.
        let t = binom_tail_exact(100, 60, 0.5).unwrap();
        assert!((t - 0.02844).abs() < 5e-5, "tail {t}");
    }

    #[test]
    fn lookup_table_is_total_and_deterministic() {
        let table = LookupClassifier::random(5, 2, 2, 3, 0);
        let img = levels_image(&[0, 1, 1, 0, 1], 2);
        for combo in (0..5u32).combinations(2) {
            let set = IndexSet::new(combo).unwrap();
            let ab = ablate(&img, &set).unwrap();
            let a = table.classify(&ab).unwrap();
            let b = table.classify(&ab).unwrap();
            assert_eq!(a, b);
            assert!(a < 3);
        }
    }

    #[test]
    fn enumerate_p_sums_to_one() {
        let table = LookupClassifier::random(6, 3, 2, 4, 1);
        let img = levels_image(&[0, 1, 0, 1, 1, 0], 2);
        let p = enumerate_p(&img, &table, 3).unwrap();
        let sum: BigRational = p.iter().cloned().sum();
        assert_eq!(sum, BigRational::one());
    }

    #[test]
    fn l0_ball_sizes() {
        // Binary alphabet: |ball(rho)| = sum_{j<=rho} C(d, j).
        let ball = enumerate_l0_ball(&[0, 1, 0, 1], 2, 2);
        assert_eq!(ball.len(), 1 + 4 + 6);
        // Ternary alphabet, rho = 1: 1 + d * 2.
        let ball = enumerate_l0_ball(&[0, 1, 2], 3, 1);
        assert_eq!(ball.len(), 1 + 3 * 2);
    }
}
