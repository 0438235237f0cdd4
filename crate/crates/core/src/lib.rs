//! Certified robustness against sparse (L0) adversarial perturbations via
//! randomized ablation smoothing.
//!
//! The smoothed classifier votes a base classifier over many random
//! ablations of the input, each keeping only `k` of the `d` pixels. Because
//! a perturbation of `rho` pixels is invisible to most ablations, any class
//! probability moves by at most a combinatorial constant, which converts a
//! Monte-Carlo confidence bound on the top class into a certified L0 radius.
//!
//! The crate provides the exact bounding constant and its inversion
//! ([`combinatorics`]), binomial confidence machinery ([`statistics`]),
//! ablation sampling and encodings ([`ablation`]), a from-scratch dense base
//! classifier with ablated training ([`classifier`]), the smoothed
//! prediction/certification procedures ([`smoothing`]), dataset-level
//! metrics ([`evaluation`]), a black-box pointwise L0 attack ([`attack`]),
//! information-theoretic comparisons ([`analysis`]), and IDX dataset
//! ingestion plus synthetic corpora ([`datasets`]).

pub mod ablation;
pub mod analysis;
pub mod attack;
pub mod classifier;
pub mod combinatorics;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod rng;
pub mod smoothing;
pub mod statistics;

pub use ablation::{
    ablate, encode, sample_index_set, AblatedImage, EncodedTensor, EncodingScheme, Image, IndexSet,
};
pub use attack::{AttackConfig, AttackMagnitude, AttackOutcome, AttackResult};
pub use classifier::{BaseClassifier, DenseNet, TrainConfig, TrainReport};
pub use combinatorics::{
    certifies_at, certifies_at_pairwise, delta, max_certified_radius,
    max_certified_radius_pairwise, DeltaParams,
};
pub use datasets::{Dataset, Split};
pub use error::{Error, Result};
pub use evaluation::EvaluationReport;
pub use smoothing::{CertificateMode, CertificationResult, Prediction, SmoothingConfig};
pub use statistics::{
    abstention_test, lower_conf_bound, simultaneous_bounds, upper_conf_bound, AbstentionDecision,
    SampleCounts,
};
