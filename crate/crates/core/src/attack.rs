//! Black-box pointwise L0 attack against the smoothed classifier.
//!
//! Each restart corrupts a growing random fraction of pixels with
//! salt-and-pepper values until the smoothed prediction is no longer the
//! true label (abstention counts as adversarial), then greedily restores
//! corrupted pixels that are not needed to stay adversarial. The best
//! restart gives an empirical upper bound on the input's robustness.

use crate::ablation::Image;
use crate::classifier::BaseClassifier;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::smoothing::{predict, Prediction, SmoothingConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Attack parameters. `samples_per_eval` replaces the smoothing config's
/// `n0` for every oracle call made by the attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub restarts: u32,
    pub samples_per_eval: u32,
    /// Fractions of pixels corrupted by successive initialization attempts.
    pub init_densities: Vec<f64>,
    pub max_repair_sweeps: u32,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            samples_per_eval: 10_000,
            init_densities: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            max_repair_sweeps: 20,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidParams("need at least one restart".into()));
        }
        if self.samples_per_eval == 0 {
            return Err(Error::InvalidParams("need samples per evaluation".into()));
        }
        if self.init_densities.is_empty()
            || self
                .init_densities
                .iter()
                .any(|&f| !(0.0..=1.0).contains(&f))
        {
            return Err(Error::InvalidParams("bad initialization schedule".into()));
        }
        Ok(())
    }
}

/// How the final adversarial image defeats the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackOutcome {
    Misclassified,
    Abstained,
}

/// A successful attack on one input.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub input_id: u64,
    pub success: bool,
    pub adversarial: Image,
    /// L0 distance between the original and adversarial image.
    pub magnitude: u64,
    pub outcome: AttackOutcome,
}

/// An attack magnitude; failed attacks count as infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttackMagnitude {
    Pixels(u64),
    Infinite,
}

/// Median over per-image magnitudes (lower middle element for even counts).
pub fn median_attack_magnitude(magnitudes: &[AttackMagnitude]) -> Result<AttackMagnitude> {
    if magnitudes.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut sorted = magnitudes.to_vec();
    sorted.sort();
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Runs the pointwise attack. Returns `AttackBudgetExhausted` when no
/// restart finds an adversarial initialization.
pub fn pointwise_attack(
    image: &Image,
    label: usize,
    input_id: u64,
    model: &dyn BaseClassifier,
    smoothing: &SmoothingConfig,
    attack: &AttackConfig,
) -> Result<AttackResult> {
    attack.validate()?;
    let mut eval_config = smoothing.clone();
    eval_config.n0 = attack.samples_per_eval;
    eval_config.validate()?;

    let oracle = |img: &Image| -> Result<Option<AttackOutcome>> {
        Ok(match predict(img, model, &eval_config)? {
            Prediction::Abstain => Some(AttackOutcome::Abstained),
            Prediction::Class(c) if c != label => Some(AttackOutcome::Misclassified),
            Prediction::Class(_) => None,
        })
    };

    // An input the smoothed classifier already gets wrong is adversarial at
    // distance zero.
    if let Some(outcome) = oracle(image)? {
        return Ok(AttackResult {
            input_id,
            success: true,
            adversarial: image.clone(),
            magnitude: 0,
            outcome,
        });
    }

    let mut best: Option<AttackResult> = None;
    for restart in 0..attack.restarts {
        let mut rng = stream_rng(attack.seed, restart as u64);
        if let Some(candidate) = run_restart(image, input_id, &oracle, attack, &mut rng)? {
            let better = best
                .as_ref()
                .map_or(true, |b| candidate.magnitude < b.magnitude);
            if better {
                best = Some(candidate);
            }
        }
    }
    best.ok_or(Error::AttackBudgetExhausted { input_id })
}

fn run_restart(
    image: &Image,
    input_id: u64,
    oracle: &dyn Fn(&Image) -> Result<Option<AttackOutcome>>,
    attack: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<AttackResult>> {
    let d = image.num_pixels();

    // Salt-and-pepper initialization at increasing densities.
    let mut adversarial: Option<(Image, Vec<usize>, AttackOutcome)> = None;
    for &density in &attack.init_densities {
        let count = ((density * d as f64).ceil() as usize).clamp(1, d);
        let mut order: Vec<usize> = (0..d).collect();
        for i in 0..count {
            let j = rng.gen_range(i..d);
            order.swap(i, j);
        }
        let corrupted: Vec<usize> = order[..count].to_vec();
        let mut candidate = image.clone();
        let extreme_of = |rng: &mut ChaCha8Rng| if rng.gen_range(0..2) == 0 { 0.0 } else { 1.0 };
        for &px in &corrupted {
            let v = vec![extreme_of(rng); image.channels()];
            candidate.set_pixel(px, &v);
        }
        if let Some(outcome) = oracle(&candidate)? {
            adversarial = Some((candidate, corrupted, outcome));
            break;
        }
    }
    let Some((mut candidate, mut corrupted, mut outcome)) = adversarial else {
        return Ok(None);
    };

    // Repair loop: restore corrupted pixels that are not needed to stay
    // adversarial, until a full sweep restores nothing.
    for _ in 0..attack.max_repair_sweeps {
        for i in (1..corrupted.len()).rev() {
            let j = rng.gen_range(0..=i);
            corrupted.swap(i, j);
        }
        let mut kept = Vec::with_capacity(corrupted.len());
        let mut restored_any = false;
        for &px in &corrupted {
            let corrupted_value = candidate.pixel(px).to_vec();
            let original_value = image.pixel(px).to_vec();
            if corrupted_value == original_value {
                // Salt landed on the original value; nothing to repair.
                restored_any = true;
                continue;
            }
            candidate.set_pixel(px, &original_value);
            match oracle(&candidate)? {
                Some(new_outcome) => {
                    outcome = new_outcome;
                    restored_any = true;
                }
                None => {
                    candidate.set_pixel(px, &corrupted_value);
                    kept.push(px);
                }
            }
        }
        corrupted = kept;
        if !restored_any || corrupted.is_empty() {
            break;
        }
    }

    let magnitude = image.l0_distance(&candidate) as u64;
    debug_assert_eq!(magnitude as usize, corrupted.len());
    Ok(Some(AttackResult {
        input_id,
        success: true,
        adversarial: candidate,
        magnitude,
        outcome,
    }))
}
