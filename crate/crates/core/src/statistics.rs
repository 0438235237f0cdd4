//! Confidence machinery for Monte-Carlo certification: one-sided
//! Clopper-Pearson bounds, the exact two-sided binomial abstention test, and
//! Bonferroni-corrected simultaneous bounds.
//!
//! Everything is built on an exact binomial tail evaluated through a scaled
//! term recurrence; no incomplete-beta dependency.

use crate::error::{Error, Result};
use std::sync::RwLock;

/// Per-class sample counts from one Monte-Carlo round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleCounts {
    per_class: Vec<u64>,
    total: u64,
}

impl SampleCounts {
    pub fn new(per_class: Vec<u64>) -> Result<Self> {
        if per_class.is_empty() {
            return Err(Error::InvalidParams("no classes".into()));
        }
        let total = per_class.iter().sum();
        if total == 0 {
            return Err(Error::InvalidParams("total sample count is zero".into()));
        }
        Ok(Self { per_class, total })
    }

    pub fn per_class(&self) -> &[u64] {
        &self.per_class
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    /// Class with the highest count, ties broken toward the lowest index.
    pub fn top_class(&self) -> usize {
        let mut best = 0usize;
        for (i, &c) in self.per_class.iter().enumerate() {
            if c > self.per_class[best] {
                best = i;
            }
        }
        best
    }

    /// Counts of the two largest classes (top first).
    pub fn top_two(&self) -> (u64, u64) {
        let top = self.top_class();
        let second = self
            .per_class
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, &c)| c)
            .max()
            .unwrap_or(0);
        (self.per_class[top], second)
    }
}

/// Outcome of the abstention hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstentionDecision {
    ReturnTop,
    Abstain,
}

/// One-sided Clopper-Pearson lower confidence bound: the largest `p` such
/// that observing at least `successes` out of `trials` has probability at
/// most `alpha` under success rate `p`. Coverage is at least `1 - alpha`.
pub fn lower_conf_bound(successes: u64, trials: u64, alpha: f64) -> Result<f64> {
    check_counts(successes, trials)?;
    check_alpha(alpha)?;
    if successes == 0 {
        return Ok(0.0);
    }
    // binomial_tail_upper is strictly increasing in p here, from 0 at p=0
    // to 1 at p=1; bisect for the root of tail(p) = alpha.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..100 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if binomial_tail_upper(trials, successes, mid) > alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One-sided Clopper-Pearson upper confidence bound, the mirror image of
/// [`lower_conf_bound`].
pub fn upper_conf_bound(successes: u64, trials: u64, alpha: f64) -> Result<f64> {
    check_counts(successes, trials)?;
    check_alpha(alpha)?;
    Ok(1.0 - lower_conf_bound(trials - successes, trials, alpha)?)
}

/// Exact two-sided binomial test of `top_count` successes in
/// `top_count + second_count` trials against rate 0.5. The top class is
/// returned only when the p-value is at most `alpha`.
pub fn abstention_test(top_count: u64, second_count: u64, alpha: f64) -> Result<AbstentionDecision> {
    check_alpha(alpha)?;
    let n = top_count + second_count;
    if n == 0 {
        return Ok(AbstentionDecision::Abstain);
    }
    let hi = top_count.max(second_count);
    // Two-sided p-value: 2 * min(tails), capped at 1. At rate 0.5 the tails
    // are symmetric, so min(P(X <= lo), P(X >= hi)) = P(X >= hi).
    let p_value = (2.0 * binomial_tail_upper(n, hi, 0.5)).min(1.0);
    if p_value <= alpha {
        Ok(AbstentionDecision::ReturnTop)
    } else {
        Ok(AbstentionDecision::Abstain)
    }
}

/// Per-class `(lower, upper)` Clopper-Pearson bounds at Bonferroni-corrected
/// level `alpha / c`, so that all bounds hold simultaneously with
/// probability at least `1 - alpha`.
pub fn simultaneous_bounds(counts: &SampleCounts, alpha: f64) -> Result<Vec<(f64, f64)>> {
    check_alpha(alpha)?;
    let corrected = alpha / counts.num_classes() as f64;
    counts
        .per_class
        .iter()
        .map(|&s| {
            Ok((
                lower_conf_bound(s, counts.total, corrected)?,
                upper_conf_bound(s, counts.total, corrected)?,
            ))
        })
        .collect()
}

/// Upper tail `P(X >= s)` for `X ~ Binomial(n, p)`, evaluated exactly via a
/// scaled probability-mass recurrence. Summation always starts on the side
/// of the mode where terms decrease, so no intermediate quantity overflows.
pub fn binomial_tail_upper(n: u64, s: u64, p: f64) -> f64 {
    assert!(s <= n, "s={s} must not exceed n={n}");
    assert!((0.0..=1.0).contains(&p), "p={p} out of range");
    if s == 0 {
        return 1.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let q = 1.0 - p;
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as u64;
    if s > mode {
        // Sum pmf(s) + pmf(s+1) + ... with decreasing terms, factored by
        // pmf(s).
        let mut acc = 1.0f64;
        let mut term = 1.0f64;
        for j in s..n {
            term *= (n - j) as f64 / (j + 1) as f64 * (p / q);
            acc += term;
            if term < acc * 1e-18 {
                break;
            }
        }
        (ln_pmf(n, s, p) + acc.ln()).exp()
    } else {
        // P(X >= s) = 1 - P(X <= s-1); sum downward from s-1 where terms
        // decrease. The complement is bounded away from 1 because s-1 is
        // below the mode.
        let top = s - 1;
        let mut acc = 1.0f64;
        let mut term = 1.0f64;
        let mut j = top;
        while j > 0 {
            term *= j as f64 / (n - j + 1) as f64 * (q / p);
            acc += term;
            if term < acc * 1e-18 {
                break;
            }
            j -= 1;
        }
        1.0 - (ln_pmf(n, top, p) + acc.ln()).exp()
    }
}

/// log of the binomial pmf at `s`.
fn ln_pmf(n: u64, s: u64, p: f64) -> f64 {
    ln_binomial(n, s) + s as f64 * p.ln() + (n - s) as f64 * (1.0 - p).ln()
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Cached table of ln(m!), grown on demand.
fn ln_factorial(m: u64) -> f64 {
    static TABLE: RwLock<Vec<f64>> = RwLock::new(Vec::new());
    {
        let table = TABLE.read().unwrap();
        if let Some(&v) = table.get(m as usize) {
            return v;
        }
    }
    let mut table = TABLE.write().unwrap();
    if table.is_empty() {
        table.push(0.0);
    }
    while table.len() <= m as usize {
        let i = table.len() as f64;
        let last = *table.last().unwrap();
        table.push(last + i.ln());
    }
    table[m as usize]
}

fn check_counts(successes: u64, trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    if successes > trials {
        return Err(Error::InvalidParams(format!(
            "successes={successes} exceeds trials={trials}"
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParams(format!(
            "alpha={alpha} must lie strictly between 0 and 1"
        )));
    }
    Ok(())
}
