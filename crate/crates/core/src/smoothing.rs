//! The smoothed classifier: Monte-Carlo prediction and certification built
//! from index sampling, base classification, confidence bounds, and the
//! radius computation, plus exact enumeration for small instances.
//!
//! Sampling uses counter-keyed streams: prediction and certification step 1
//! consume counters `[0, n0)`, certification step 2 consumes `[n0, n0 + n)`.
//! Samples may be classified in parallel; aggregation is by integer count,
//! so results are identical under any schedule.

use crate::ablation::{ablate, sample_index_set, EncodingScheme, Image};
use crate::classifier::BaseClassifier;
use crate::combinatorics::{max_certified_radius, max_certified_radius_pairwise};
use crate::error::{Error, Result};
use crate::statistics::{
    abstention_test, lower_conf_bound, simultaneous_bounds, AbstentionDecision, SampleCounts,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which certificate inverts the confidence bounds into a radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateMode {
    /// Lower-bound the top class and require `p_lower - delta > 0.5`.
    Corollary1,
    /// Simultaneously bound every class and require the top lower bound to
    /// clear the runner-up upper bound by `2 * delta`.
    Corollary2,
}

/// Parameters governing one smoothing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Pixel count of the inputs.
    pub d: u32,
    /// Retention constant.
    pub k: u32,
    /// Number of classes.
    pub num_classes: usize,
    /// Confidence parameter: certificates hold with probability 1 - alpha.
    pub alpha: f64,
    /// Sample count for class selection (and for prediction).
    pub n0: u32,
    /// Sample count for bound estimation.
    pub n: u32,
    pub seed: u64,
    pub encoding: EncodingScheme,
    pub mode: CertificateMode,
    /// Samples per classification batch; cannot change outcomes.
    pub batch_size: u32,
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 || self.k > self.d {
            return Err(Error::InvalidParams(format!(
                "need 1 <= k <= d, got k={} d={}",
                self.k, self.d
            )));
        }
        if self.n0 == 0 || self.n == 0 {
            return Err(Error::InvalidParams("n0 and n must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha={} out of range", self.alpha)));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidParams("need at least two classes".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of the smoothed prediction procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    Abstain,
}

impl Prediction {
    pub fn class(self) -> Option<usize> {
        match self {
            Prediction::Class(c) => Some(c),
            Prediction::Abstain => None,
        }
    }
}

/// Per-input certification outcome. `radius` is present only when the
/// prediction succeeded (matches the label) and the bound cleared 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationResult {
    pub input_id: u64,
    pub label: usize,
    /// Predicted class, or `None` on abstention.
    pub predicted: Option<usize>,
    /// Confidence lower bound for the selected class.
    pub p_lower: f64,
    /// Certified radius; `None` means N/A (abstained or misclassified).
    pub radius: Option<u64>,
    pub samples_selection: u32,
    pub samples_estimation: u32,
}

impl CertificationResult {
    pub fn is_correct(&self) -> bool {
        self.predicted == Some(self.label)
    }

    pub fn abstained(&self) -> bool {
        self.predicted.is_none()
    }
}

/// Classifies ablations of `image` drawn from the counters in `range` and
/// returns per-class counts.
fn sample_class_counts(
    image: &Image,
    model: &dyn BaseClassifier,
    config: &SmoothingConfig,
    range: std::ops::Range<u64>,
) -> Result<Vec<u64>> {
    let counters: Vec<u64> = range.collect();
    let chunk = config.batch_size.max(1) as usize;
    let partials: Vec<Result<Vec<u64>>> = counters
        .par_chunks(chunk)
        .map(|chunk| {
            let mut counts = vec![0u64; config.num_classes];
            for &t in chunk {
                let set = sample_index_set(config.d, config.k, config.seed, t)?;
                let ab = ablate(image, &set)?;
                let class = model.classify(&ab)?;
                if class >= counts.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "classifier returned class {class} for {} classes",
                        counts.len()
                    )));
                }
                counts[class] += 1;
            }
            Ok(counts)
        })
        .collect();
    let mut counts = vec![0u64; config.num_classes];
    for partial in partials {
        for (a, b) in counts.iter_mut().zip(partial?) {
            *a += b;
        }
    }
    Ok(counts)
}

/// Smoothed prediction: draws `n0` ablations, classifies each, and applies
/// the abstention test to the top two counts.
pub fn predict(image: &Image, model: &dyn BaseClassifier, config: &SmoothingConfig) -> Result<Prediction> {
    config.validate()?;
    check_image(image, config)?;
    let counts = SampleCounts::new(sample_class_counts(image, model, config, 0..config.n0 as u64)?)?;
    let top = counts.top_class();
    let (top_count, second_count) = counts.top_two();
    match abstention_test(top_count, second_count, config.alpha)? {
        AbstentionDecision::ReturnTop => Ok(Prediction::Class(top)),
        AbstentionDecision::Abstain => Ok(Prediction::Abstain),
    }
}

/// Two-step certification: select the majority class on `n0` fresh samples,
/// then bound its probability on `n` disjoint samples and invert the bound
/// into a certified radius.
pub fn certify(
    image: &Image,
    label: usize,
    input_id: u64,
    model: &dyn BaseClassifier,
    config: &SmoothingConfig,
) -> Result<CertificationResult> {
    config.validate()?;
    check_image(image, config)?;
    let selection = SampleCounts::new(sample_class_counts(image, model, config, 0..config.n0 as u64)?)?;
    let selected = selection.top_class();

    let estimation = sample_class_counts(
        image,
        model,
        config,
        config.n0 as u64..config.n0 as u64 + config.n as u64,
    )?;

    let (p_lower, radius) = match config.mode {
        CertificateMode::Corollary1 => {
            let p_lower = lower_conf_bound(estimation[selected], config.n as u64, config.alpha)?;
            let radius = if p_lower > 0.5 {
                max_certified_radius(p_lower, config.d as u64, config.k as u64)?
            } else {
                None
            };
            (p_lower, radius)
        }
        CertificateMode::Corollary2 => {
            let bounds = simultaneous_bounds(&SampleCounts::new(estimation)?, config.alpha)?;
            let p_lower = bounds[selected].0;
            let other_upper = bounds
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != selected)
                .map(|(_, b)| b.1)
                .fold(f64::NEG_INFINITY, f64::max);
            let radius =
                max_certified_radius_pairwise(p_lower, other_upper, config.d as u64, config.k as u64)?;
            (p_lower, radius)
        }
    };

    Ok(match radius {
        None => CertificationResult {
            input_id,
            label,
            predicted: None,
            p_lower,
            radius: None,
            samples_selection: config.n0,
            samples_estimation: config.n,
        },
        Some(r) => CertificationResult {
            input_id,
            label,
            predicted: Some(selected),
            p_lower,
            radius: if selected == label { Some(r) } else { None },
            samples_selection: config.n0,
            samples_estimation: config.n,
        },
    })
}

/// Exact smoothing over every index set in H(d, k).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactSmoothing {
    /// Hits per class; exact probabilities are `counts[i] / total`.
    pub counts: Vec<u64>,
    pub total: u64,
}

impl ExactSmoothing {
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }

    /// The smoothed class: argmax probability, ties toward the lowest index.
    pub fn top_class(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

/// Enumerates all C(d, k) index sets (instances up to 10^6 sets) and returns
/// exact class probabilities and the exact smoothed class.
pub fn exact_smooth(image: &Image, model: &dyn BaseClassifier, k: u32) -> Result<ExactSmoothing> {
    let d = image.num_pixels() as u32;
    if k == 0 || k > d {
        return Err(Error::InvalidParams(format!("need 1 <= k <= d, got k={k} d={d}")));
    }
    let total = count_subsets(d as u64, k as u64).ok_or_else(|| {
        Error::InstanceTooLarge(format!("C({d},{k}) exceeds the enumeration budget"))
    })?;
    let mut counts = vec![0u64; model.num_classes()];
    for combo in Combinations::new(d, k) {
        let set = crate::ablation::IndexSet::new(combo)?;
        let ab = ablate(image, &set)?;
        let class = model.classify(&ab)?;
        if class >= counts.len() {
            return Err(Error::ShapeMismatch(format!(
                "classifier returned class {class} for {} classes",
                counts.len()
            )));
        }
        counts[class] += 1;
    }
    debug_assert_eq!(counts.iter().sum::<u64>(), total);
    Ok(ExactSmoothing { counts, total })
}

/// C(d, k) if it does not exceed 10^6.
fn count_subsets(d: u64, k: u64) -> Option<u64> {
    let mut c = 1.0f64;
    let m = k.min(d - k);
    for i in 0..m {
        c *= (d - i) as f64 / (i + 1) as f64;
        if c > 1e6 {
            return None;
        }
    }
    Some(c.round() as u64)
}

/// Lexicographic k-subset enumeration.
struct Combinations {
    d: u32,
    k: u32,
    current: Option<Vec<u32>>,
}

impl Combinations {
    fn new(d: u32, k: u32) -> Self {
        Self {
            d,
            k,
            current: Some((0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let current = self.current.take()?;
        let out = current.clone();
        // Advance to the lexicographic successor.
        let mut next = current;
        let k = self.k as usize;
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] + 1 <= self.d - (k - i) as u32 {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

fn check_image(image: &Image, config: &SmoothingConfig) -> Result<()> {
    if image.num_pixels() as u32 != config.d {
        return Err(Error::ShapeMismatch(format!(
            "image has {} pixels, config expects {}",
            image.num_pixels(),
            config.d
        )));
    }
    Ok(())
}
