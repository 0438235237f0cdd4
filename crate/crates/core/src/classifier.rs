//! The base classifier `f` over ablated images: a pluggable interface, a
//! from-scratch fully-connected network, and the ablated-minibatch training
//! loop (SGD with momentum, cross-entropy loss).
//!
//! The certificate is classifier-agnostic: anything implementing
//! [`BaseClassifier`] can be smoothed, including the lookup tables used by
//! the exhaustive tests.

use crate::ablation::{ablate, encode, sample_index_set, AblatedImage, EncodedTensor, EncodingScheme};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

/// A classifier of ablated images.
pub trait BaseClassifier: Sync {
    fn num_classes(&self) -> usize;
    fn classify(&self, ablated: &AblatedImage) -> Result<usize>;
}

/// Training hyperparameters. The learning-rate schedule has two stages:
/// `lr` until `switch_epoch` (0-based), then `lr_after_switch`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_after_switch: f64,
    pub switch_epoch: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Retention constant; must match the certification-time k.
    pub k: u32,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub encoding: EncodingScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            lr: 0.01,
            lr_after_switch: 0.001,
            switch_epoch: 15,
            momentum: 0.9,
            weight_decay: 0.0,
            k: 45,
            seed: 0,
            hidden: vec![300, 100],
            encoding: EncodingScheme::Multichannel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParams(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be positive".into()));
        }
        Ok(())
    }

    /// Stable hash of the configuration, embedded in model files and result
    /// headers.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Input geometry and encoding a model was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGeometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub k: u32,
    pub encoding: EncodingScheme,
    pub mean_pixel: Option<Vec<f64>>,
}

impl ModelGeometry {
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn input_dim(&self) -> usize {
        self.num_pixels() * self.encoding.encoded_channels(self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    input_dim: usize,
    output_dim: usize,
    /// Row-major by input: weights[j * output_dim + o].
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn zeroed(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            weights: vec![0.0; input_dim * output_dim],
            bias: vec![0.0; output_dim],
        }
    }

    /// out = W^T x + b, skipping zero inputs (NULL pixels encode to zeros,
    /// so ablated inputs are sparse).
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let row = &self.weights[j * self.output_dim..(j + 1) * self.output_dim];
                for (o, &w) in row.iter().enumerate() {
                    out[o] += xj * w;
                }
            }
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// A fully-connected ReLU network over encoded ablated images.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    geometry: ModelGeometry,
    num_classes: usize,
    layers: Vec<Layer>,
    config_hash: String,
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl DenseNet {
    /// Fresh network with fan-in-scaled uniform weights. The first layer is
    /// scaled by the expected number of active inputs: under multichannel
    /// encoding all but `2 * ch * k` input values are zero, so scaling by
    /// the full input width would start the network far too quiet.
    pub fn init(
        geometry: ModelGeometry,
        hidden: &[usize],
        num_classes: usize,
        seed: u64,
        config_hash: String,
    ) -> Self {
        let mut rng = stream_rng(seed, u64::MAX);
        let mut dims = vec![geometry.input_dim()];
        dims.extend_from_slice(hidden);
        dims.push(num_classes);
        let active_inputs = match geometry.encoding {
            EncodingScheme::Multichannel => {
                (geometry.encoding.encoded_channels(geometry.channels) * geometry.k as usize)
                    .min(geometry.input_dim())
            }
            EncodingScheme::Mean => geometry.input_dim(),
        };
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(li, w)| {
                let (input_dim, output_dim) = (w[0], w[1]);
                let fan_in = if li == 0 { active_inputs } else { input_dim };
                let scale = (6.0 / fan_in as f64).sqrt();
                let weights = (0..input_dim * output_dim)
                    .map(|_| rng.gen_range(-scale..scale))
                    .collect();
                Layer {
                    input_dim,
                    output_dim,
                    weights,
                    bias: vec![0.0; output_dim],
                }
            })
            .collect();
        Self {
            geometry,
            num_classes,
            layers,
            config_hash,
        }
    }

    /// Network with all parameters zero (uniform scores for every input).
    pub fn zeroed(geometry: ModelGeometry, hidden: &[usize], num_classes: usize) -> Self {
        let mut net = Self::init(geometry, hidden, num_classes, 0, String::new());
        for layer in &mut net.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        net
    }

    pub fn geometry(&self) -> &ModelGeometry {
        &self.geometry
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].input_dim];
        dims.extend(self.layers.iter().map(|l| l.output_dim));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Deterministic score vector (logits) for an encoded input.
    pub fn forward(&self, encoded: &EncodedTensor) -> Result<Vec<f64>> {
        if encoded.len() != self.geometry.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "encoded input has {} values, model expects {}",
                encoded.len(),
                self.geometry.input_dim()
            )));
        }
        let mut cur = encoded.values().to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.output_dim];
            layer.forward(&cur, &mut next);
            if li + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = next;
        }
        Ok(cur)
    }

    pub fn encode_for_model(&self, ablated: &AblatedImage) -> Result<EncodedTensor> {
        encode(
            ablated,
            self.geometry.encoding,
            self.geometry.mean_pixel.as_deref(),
        )
    }

    /// Forward pass plus per-layer activations, for backpropagation.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.output_dim];
            layer.forward(acts.last().unwrap(), &mut next);
            if li + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(next);
        }
        acts
    }

    /// Cross-entropy loss and parameter gradients for one sample,
    /// accumulated into `grad`. Returns (loss, predicted class).
    fn backward_into(&self, input: &[f64], label: usize, grad: &mut GradBuffer) -> (f64, usize) {
        let acts = self.forward_trace(input);
        let logits = acts.last().unwrap();
        let predicted = argmax(logits);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        let loss = -(exp[label] / sum).ln();

        // dL/dz at the output layer.
        let mut delta: Vec<f64> = exp.iter().map(|e| e / sum).collect();
        delta[label] -= 1.0;

        for (li, layer) in self.layers.iter().enumerate().rev() {
            let a_prev = &acts[li];
            let (gw, gb) = grad.layer_mut(li);
            for (j, &aj) in a_prev.iter().enumerate() {
                if aj != 0.0 {
                    let row = &mut gw[j * layer.output_dim..(j + 1) * layer.output_dim];
                    for (o, d) in delta.iter().enumerate() {
                        row[o] += aj * d;
                    }
                }
            }
            for (o, d) in delta.iter().enumerate() {
                gb[o] += d;
            }
            if li > 0 {
                // delta_prev = relu'(a_prev) .* (W delta); a_prev holds the
                // post-ReLU activation, which is zero exactly where the
                // derivative is zero.
                let mut prev = vec![0.0; layer.input_dim];
                for (j, p) in prev.iter_mut().enumerate() {
                    if a_prev[j] > 0.0 {
                        let row = &layer.weights[j * layer.output_dim..(j + 1) * layer.output_dim];
                        *p = row.iter().zip(delta.iter()).map(|(w, d)| w * d).sum();
                    }
                }
                delta = prev;
            }
        }
        (loss, predicted)
    }

    fn loss_of(&self, input: &[f64], label: usize) -> f64 {
        let acts = self.forward_trace(input);
        let logits = acts.last().unwrap();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        -(exp[label] / sum).ln()
    }
}

impl BaseClassifier for DenseNet {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn classify(&self, ablated: &AblatedImage) -> Result<usize> {
        let encoded = self.encode_for_model(ablated)?;
        Ok(argmax(&self.forward(&encoded)?))
    }
}

/// Flat gradient storage matching the layer shapes.
struct GradBuffer {
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl GradBuffer {
    fn zeroed(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn layer_mut(&mut self, li: usize) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights[li], &mut self.bias[li])
    }

    fn add(&mut self, other: &GradBuffer) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Training output: the model plus per-epoch mean loss and the final epoch's
/// accuracy on the ablated training stream.
pub struct TrainReport {
    pub model: DenseNet,
    pub epoch_losses: Vec<f64>,
    pub final_train_accuracy: f64,
}

// Stream ids reserved for training-internal draws; minibatch ablation draws
// use counters 0, 1, 2, ... on the same seed.
const SHUFFLE_STREAM_BASE: u64 = 1 << 62;

/// Chunk size for intra-batch parallelism. Chunk gradients are merged in
/// chunk order, so the result is bitwise independent of the thread schedule.
const GRAD_CHUNK: usize = 16;

/// Trains the dense base classifier on encoded ablated minibatches. A single
/// fresh index set is drawn per minibatch and applied to every image in the
/// batch.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (width, height, channels) = dataset.geometry()?;
    let d = (width * height) as u32;
    if config.k > d {
        return Err(Error::InvalidParams(format!(
            "k={} exceeds pixel count d={d}",
            config.k
        )));
    }

    let mean_pixel = match config.encoding {
        EncodingScheme::Mean => Some(dataset.mean_pixel()?),
        EncodingScheme::Multichannel => None,
    };
    let geometry = ModelGeometry {
        width,
        height,
        channels,
        k: config.k,
        encoding: config.encoding,
        mean_pixel,
    };
    let mut net = DenseNet::init(
        geometry,
        &config.hidden,
        dataset.num_classes,
        config.seed,
        config.hash(),
    );

    let mut velocity = GradBuffer::zeroed(&net);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch_counter: u64 = 0;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut final_train_accuracy = 0.0;

    for epoch in 0..config.epochs {
        let lr = if epoch < config.switch_epoch {
            config.lr
        } else {
            config.lr_after_switch
        };
        let mut rng = stream_rng(config.seed, SHUFFLE_STREAM_BASE + epoch as u64);
        // Fisher-Yates shuffle of the visit order.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        let mut epoch_seen = 0usize;

        for batch in order.chunks(config.batch_size) {
            let retained = sample_index_set(d, config.k, config.seed, batch_counter)?;
            batch_counter += 1;

            // Encode the whole batch under the shared index set, then
            // accumulate gradients chunk by chunk.
            let encoded: Vec<(Vec<f64>, usize)> = batch
                .par_iter()
                .map(|&idx| {
                    let ab = ablate(&dataset.images[idx], &retained)?;
                    let enc = net.encode_for_model(&ab)?;
                    Ok((enc.values().to_vec(), dataset.labels[idx]))
                })
                .collect::<Result<_>>()?;

            let chunks: Vec<(GradBuffer, f64, usize)> = encoded
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grad = GradBuffer::zeroed(&net);
                    let mut loss = 0.0;
                    let mut correct = 0usize;
                    for (input, label) in chunk {
                        let (l, pred) = net.backward_into(input, *label, &mut grad);
                        loss += l;
                        if pred == *label {
                            correct += 1;
                        }
                    }
                    (grad, loss, correct)
                })
                .collect();

            let mut grad = GradBuffer::zeroed(&net);
            let mut batch_loss = 0.0;
            for (g, l, c) in &chunks {
                grad.add(g);
                batch_loss += l;
                epoch_correct += c;
            }
            epoch_seen += batch.len();
            epoch_loss += batch_loss;

            let inv = 1.0 / batch.len() as f64;
            for (li, layer) in net.layers.iter_mut().enumerate() {
                let vw = &mut velocity.weights[li];
                let gw = &grad.weights[li];
                for (i, w) in layer.weights.iter_mut().enumerate() {
                    let g = gw[i] * inv + config.weight_decay * *w;
                    vw[i] = config.momentum * vw[i] - lr * g;
                    *w += vw[i];
                }
                let vb = &mut velocity.bias[li];
                let gb = &grad.bias[li];
                for (i, b) in layer.bias.iter_mut().enumerate() {
                    vb[i] = config.momentum * vb[i] - lr * gb[i] * inv;
                    *b += vb[i];
                }
            }
        }

        epoch_losses.push(epoch_loss / epoch_seen as f64);
        final_train_accuracy = epoch_correct as f64 / epoch_seen as f64;
    }

    Ok(TrainReport {
        model: net,
        epoch_losses,
        final_train_accuracy,
    })
}

/// Accuracy of a base classifier on freshly ablated samples of a dataset,
/// drawing `draws_per_image` index sets per image.
pub fn ablated_accuracy(
    model: &DenseNet,
    dataset: &Dataset,
    draws_per_image: u64,
    seed: u64,
) -> Result<f64> {
    dataset.validate()?;
    let d = dataset.images[0].num_pixels() as u32;
    let k = model.geometry.k;
    let hits: u64 = (0..dataset.len() as u64)
        .into_par_iter()
        .map(|i| {
            let mut correct = 0u64;
            for t in 0..draws_per_image {
                let set = sample_index_set(d, k, seed, i * draws_per_image + t)?;
                let ab = ablate(&dataset.images[i as usize], &set)?;
                if model.classify(&ab)? == dataset.labels[i as usize] {
                    correct += 1;
                }
            }
            Ok(correct)
        })
        .sum::<Result<u64>>()?;
    Ok(hits as f64 / (dataset.len() as u64 * draws_per_image) as f64)
}

/// Compares analytic parameter gradients against central finite differences.
/// Returns the maximum relative deviation over all parameters.
pub fn gradient_check(net: &DenseNet, encoded: &EncodedTensor, label: usize) -> Result<f64> {
    gradient_check_with_step(net, encoded, label, 1e-5)
}

pub fn gradient_check_with_step(
    net: &DenseNet,
    encoded: &EncodedTensor,
    label: usize,
    step: f64,
) -> Result<f64> {
    if label >= net.num_classes {
        return Err(Error::InvalidParams(format!(
            "label {label} out of range for {} classes",
            net.num_classes
        )));
    }
    if encoded.len() != net.geometry.input_dim() {
        return Err(Error::ShapeMismatch("input does not match model".into()));
    }
    let input = encoded.values().to_vec();
    let mut grad = GradBuffer::zeroed(net);
    net.backward_into(&input, label, &mut grad);

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for li in 0..net.layers.len() {
        let n_w = net.layers[li].weights.len();
        let n_b = net.layers[li].bias.len();
        for pi in 0..n_w + n_b {
            let analytic = if pi < n_w {
                grad.weights[li][pi]
            } else {
                grad.bias[li][pi - n_w]
            };
            let read = |net: &DenseNet| {
                if pi < n_w {
                    net.layers[li].weights[pi]
                } else {
                    net.layers[li].bias[pi - n_w]
                }
            };
            let write = |net: &mut DenseNet, v: f64| {
                if pi < n_w {
                    net.layers[li].weights[pi] = v;
                } else {
                    net.layers[li].bias[pi - n_w] = v;
                }
            };
            let orig = read(&probe);
            write(&mut probe, orig + step);
            let up = probe.loss_of(&input, label);
            write(&mut probe, orig - step);
            let down = probe.loss_of(&input, label);
            write(&mut probe, orig);
            let numeric = (up - down) / (2.0 * step);
            let denom = analytic.abs().max(numeric.abs());
            if denom > 1e-10 {
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}

// Model file layout (all integers little-endian):
//   magic "L0CERTNN" | version u32 | width u32 | height u32 | channels u32
//   | k u32 | num_classes u32 | encoding u8 | has_mean u8
//   | [mean pixel: channels f64] | hash_len u32 | hash bytes
//   | n_layers u32 | per layer: input u32, output u32
//   | per layer: weights then bias, f64
const MODEL_MAGIC: &[u8; 8] = b"L0CERTNN";
const MODEL_VERSION: u32 = 1;

impl DenseNet {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.geometry.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.geometry.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.geometry.channels as u32).to_le_bytes());
        out.extend_from_slice(&self.geometry.k.to_le_bytes());
        out.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        out.push(match self.geometry.encoding {
            EncodingScheme::Multichannel => 0,
            EncodingScheme::Mean => 1,
        });
        match &self.geometry.mean_pixel {
            Some(mean) => {
                out.push(1);
                for v in mean {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(self.config_hash.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_hash.as_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            out.extend_from_slice(&(layer.input_dim as u32).to_le_bytes());
            out.extend_from_slice(&(layer.output_dim as u32).to_le_bytes());
        }
        for layer in &self.layers {
            for v in layer.weights.iter().chain(layer.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };

        let magic = cur.take(8)?;
        if magic != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unknown model format version {version}"
            )));
        }
        let width = cur.u32()? as usize;
        let height = cur.u32()? as usize;
        let channels = cur.u32()? as usize;
        let k = cur.u32()?;
        let num_classes = cur.u32()? as usize;
        let encoding = match cur.u8()? {
            0 => EncodingScheme::Multichannel,
            1 => EncodingScheme::Mean,
            t => return Err(Error::ModelFormat(format!("unknown encoding tag {t}"))),
        };
        let mean_pixel = if cur.u8()? == 1 {
            Some((0..channels).map(|_| cur.f64()).collect::<Result<_>>()?)
        } else {
            None
        };
        let hash_len = cur.u32()? as usize;
        let hash_bytes = cur.take(hash_len)?;
        let config_hash = String::from_utf8(hash_bytes.to_vec())
            .map_err(|_| Error::ModelFormat("config hash is not utf-8".into()))?;
        let n_layers = cur.u32()? as usize;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            shapes.push((cur.u32()? as usize, cur.u32()? as usize));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (input_dim, output_dim) in shapes {
            let mut layer = Layer::zeroed(input_dim, output_dim);
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = cur.f64()?;
            }
            layers.push(layer);
        }
        if cur.pos != bytes.len() {
            return Err(Error::ModelFormat("trailing bytes".into()));
        }
        let geometry = ModelGeometry {
            width,
            height,
            channels,
            k,
            encoding,
            mean_pixel,
        };
        if layers.is_empty() || layers[0].input_dim != geometry.input_dim() {
            return Err(Error::ModelFormat("architecture does not match geometry".into()));
        }
        Ok(Self {
            geometry,
            num_classes,
            layers,
            config_hash,
        })
    }

    pub fn save_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.flush()?;
        self.save(path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ModelFormat("truncated model file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ablation::{ablate, sample_index_set, Image, IndexSet};

    fn tiny_geometry(d: usize, k: u32) -> ModelGeometry {
        ModelGeometry {
            width: d,
            height: 1,
            channels: 1,
            k,
            encoding: EncodingScheme::Multichannel,
            mean_pixel: None,
        }
    }

    fn encoded_input(net: &DenseNet, values: Vec<f64>) -> EncodedTensor {
        let img = Image::grayscale_flat(values).unwrap();
        let all = IndexSet::new((0..img.num_pixels() as u32).collect()).unwrap();
        let ab = ablate(&img, &all).unwrap();
        net.encode_for_model(&ab).unwrap()
    }

    #[test]
    fn zero_weight_model_gives_uniform_scores() {
        let net = DenseNet::zeroed(tiny_geometry(4, 4), &[5], 3);
        let enc = encoded_input(&net, vec![0.2, 0.4, 0.6, 0.8]);
        let scores = net.forward(&enc).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
        assert_eq!(argmax(&scores), 0);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = DenseNet::init(tiny_geometry(6, 3), &[8], 4, 11, String::new());
        let enc = encoded_input(&net, vec![0.1, 0.9, 0.3, 0.0, 1.0, 0.5]);
        let a = net.forward(&enc).unwrap();
        let b = net.forward(&enc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argmax_ignores_permutation_of_non_top_scores() {
        let mut scores = vec![0.1, 0.9, 0.3, 0.2];
        let top = argmax(&scores);
        scores.swap(2, 3);
        assert_eq!(argmax(&scores), top);
        // Ties break toward the lowest index.
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let net = DenseNet::init(tiny_geometry(6, 3), &[8], 4, 11, String::new());
        let other = DenseNet::init(tiny_geometry(5, 3), &[8], 4, 11, String::new());
        let enc = encoded_input(&other, vec![0.1, 0.9, 0.3, 0.0, 1.0]);
        assert!(matches!(net.forward(&enc), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn golden_forward_scores() {
        // Frozen regression values for a fixed tiny model and input.
        let net = DenseNet::init(tiny_geometry(3, 3), &[4], 2, 7, String::new());
        let enc = encoded_input(&net, vec![0.25, 0.5, 1.0]);
        let scores = net.forward(&enc).unwrap();
        let golden = [-0.060_109_228_359_968_56, 0.009_836_493_744_912_191];
        for (s, g) in scores.iter().zip(golden.iter()) {
            assert!((s - g).abs() < 1e-12, "scores {scores:?} vs golden {golden:?}");
        }
    }

    #[test]
    fn gradient_check_zero_model() {
        let net = DenseNet::zeroed(tiny_geometry(3, 3), &[4], 2);
        let enc = encoded_input(&net, vec![0.0, 0.0, 0.0]);
        let dev = gradient_check(&net, &enc, 1).unwrap();
        assert!(dev <= 1e-4, "deviation {dev}");
    }

    #[test]
    fn gradient_check_random_tiny_models() {
        for seed in 0..5 {
            let net = DenseNet::init(tiny_geometry(5, 5), &[7], 3, seed, String::new());
            let set = sample_index_set(5, 3, seed, 0).unwrap();
            let img = Image::grayscale_flat(vec![0.9, 0.1, 0.7, 0.4, 0.6]).unwrap();
            let ab = ablate(&img, &set).unwrap();
            let enc = net.encode_for_model(&ab).unwrap();
            let dev = gradient_check(&net, &enc, (seed % 3) as usize).unwrap();
            assert!(dev <= 1e-4, "seed {seed} deviation {dev}");
        }
    }

    #[test]
    fn gradient_deviation_shrinks_with_step() {
        let net = DenseNet::init(tiny_geometry(4, 4), &[6], 3, 3, String::new());
        let enc = encoded_input(&net, vec![0.3, 0.8, 0.2, 0.6]);
        let coarse = gradient_check_with_step(&net, &enc, 2, 1e-2).unwrap();
        let fine = gradient_check_with_step(&net, &enc, 2, 1e-4).unwrap();
        assert!(
            fine <= coarse + 1e-12,
            "expected smaller step to reduce deviation: {fine} vs {coarse}"
        );
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let net = DenseNet::init(tiny_geometry(6, 4), &[9, 5], 3, 21, "abc123".into());
        net.save(&path).unwrap();
        let loaded = DenseNet::load(&path).unwrap();
        assert_eq!(net, loaded);
    }

    #[test]
    fn persistence_rejects_unknown_version_and_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let net = DenseNet::init(tiny_geometry(4, 2), &[3], 2, 0, String::new());
        net.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99; // bump the version field
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(DenseNet::load(&path), Err(Error::ModelFormat(_))));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(DenseNet::load(&path), Err(Error::ModelFormat(_))));
    }
}
