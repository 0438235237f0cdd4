//! Dataset-level metrics over certification results.
//!
//! Classification accuracy counts inputs whose prediction is correct and not
//! abstained. Certified accuracy at `rho` counts inputs with a correct
//! prediction and certified radius at least `rho`; N/A radii never certify.
//! The median certified robustness treats N/A as minus infinity and takes
//! the lower middle element for even counts, which keeps the identity
//! "certified accuracy at the median is at least one half" exact.

use crate::error::{Error, Result};
use crate::smoothing::CertificationResult;
use std::fmt;

/// Aggregated metrics plus provenance for one certification run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub total: usize,
    pub classification_accuracy: f64,
    pub abstain_rate: f64,
    pub error_rate: f64,
    /// Certified accuracy per requested radius, ascending in radius.
    pub certified_accuracy: Vec<(u64, f64)>,
    /// `None` encodes N/A (at least half the inputs are uncertified).
    pub median_certified_robustness: Option<u64>,
    pub num_not_applicable: usize,
    pub num_abstained: usize,
    pub num_correct: usize,
    pub config_hash: String,
    pub wall_clock_secs: f64,
}

/// Fraction of results with a correct prediction and certified radius at
/// least `rho`.
pub fn certified_accuracy_at(results: &[CertificationResult], rho: u64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let certified = results
        .iter()
        .filter(|r| r.is_correct() && r.radius.is_some_and(|rad| rad >= rho))
        .count();
    Ok(certified as f64 / results.len() as f64)
}

/// Median certified radius with N/A counted as minus infinity; returns
/// `None` when the median itself is N/A.
pub fn median_certified_robustness(results: &[CertificationResult]) -> Result<Option<u64>> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut radii: Vec<Option<u64>> = results.iter().map(|r| r.radius).collect();
    // None sorts first, standing in for minus infinity.
    radii.sort();
    Ok(radii[(radii.len() - 1) / 2])
}

/// Assembles the full report over an inclusive radius range.
pub fn summarize(
    results: &[CertificationResult],
    rho_max: u64,
    config_hash: &str,
    wall_clock_secs: f64,
) -> Result<EvaluationReport> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let total = results.len();
    let num_correct = results.iter().filter(|r| r.is_correct()).count();
    let num_abstained = results.iter().filter(|r| r.abstained()).count();
    let num_errors = total - num_correct - num_abstained;
    let num_not_applicable = results.iter().filter(|r| r.radius.is_none()).count();

    let mut certified_accuracy = Vec::with_capacity(rho_max as usize + 1);
    let mut prev = f64::INFINITY;
    for rho in 0..=rho_max {
        let acc = certified_accuracy_at(results, rho)?;
        assert!(acc <= prev, "certified-accuracy curve must be nonincreasing");
        prev = acc;
        certified_accuracy.push((rho, acc));
    }

    Ok(EvaluationReport {
        total,
        classification_accuracy: num_correct as f64 / total as f64,
        abstain_rate: num_abstained as f64 / total as f64,
        error_rate: num_errors as f64 / total as f64,
        certified_accuracy,
        median_certified_robustness: median_certified_robustness(results)?,
        num_not_applicable,
        num_abstained,
        num_correct,
        config_hash: config_hash.to_string(),
        wall_clock_secs,
    })
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "inputs:                  {}", self.total)?;
        writeln!(
            f,
            "classification accuracy: {:.2}% ({:.2}% abstained, {:.2}% wrong)",
            100.0 * self.classification_accuracy,
            100.0 * self.abstain_rate,
            100.0 * self.error_rate
        )?;
        match self.median_certified_robustness {
            Some(m) => writeln!(f, "median certified robustness: {m}")?,
            None => writeln!(f, "median certified robustness: N/A")?,
        }
        writeln!(f, "uncertified (N/A):       {}", self.num_not_applicable)?;
        writeln!(f, "certified accuracy by radius:")?;
        writeln!(f, "  rho  accuracy")?;
        for &(rho, acc) in &self.certified_accuracy {
            writeln!(f, "  {rho:<4} {:.4}", acc)?;
        }
        writeln!(f, "config hash: {}", self.config_hash)?;
        write!(f, "wall clock:  {:.1}s", self.wall_clock_secs)
    }
}
