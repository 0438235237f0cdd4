//! Uniform k-of-d index sampling, the ablate operation, and encodings of
//! ablated images for classifier consumption.
//!
//! Pixel indices are 0-based. Pixel intensities live in `[0, 1]` regardless
//! of the source bit depth; 8-bit sources are divided by 255 at ingestion.

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A d-pixel image with `channels` intensities per pixel, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParams("image has zero area".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParams(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if values.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                width * height * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParams(
                "pixel intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    /// Convenience constructor for a flat grayscale vector (height 1).
    pub fn grayscale_flat(values: Vec<f64>) -> Result<Self> {
        let d = values.len();
        Self::new(d, 1, 1, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of pixels d.
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.channels..(index + 1) * self.channels]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn set_pixel(&mut self, index: usize, value: &[f64]) {
        self.values[index * self.channels..(index + 1) * self.channels].copy_from_slice(value);
    }

    /// Number of pixel positions at which two images differ (any channel
    /// difference counts the position once).
    pub fn l0_distance(&self, other: &Image) -> usize {
        assert_eq!(self.num_pixels(), other.num_pixels());
        (0..self.num_pixels())
            .filter(|&i| self.pixel(i) != other.pixel(i))
            .count()
    }
}

/// A set of k distinct retained pixel indices in `[0, d)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<u32>,
}

impl IndexSet {
    /// Builds an index set from arbitrary indices; sorts and rejects
    /// duplicates.
    pub fn new(mut indices: Vec<u32>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams("duplicate index".into()));
        }
        if indices.is_empty() {
            return Err(Error::InvalidParams("empty index set".into()));
        }
        Ok(Self { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: u32) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

/// Draws a uniform k-element subset of `[0, d)` by partial Fisher-Yates over
/// an index array. The draw is fully determined by `(seed, draw_counter)`,
/// so results do not depend on the parallel schedule.
pub fn sample_index_set(d: u32, k: u32, seed: u64, draw_counter: u64) -> Result<IndexSet> {
    if d == 0 || k == 0 || k > d {
        return Err(Error::InvalidParams(format!(
            "need 1 <= k <= d, got k={k} d={d}"
        )));
    }
    let mut rng = stream_rng(seed, draw_counter);
    let mut arr: Vec<u32> = (0..d).collect();
    for i in 0..k as usize {
        let j = rng.gen_range(i..d as usize);
        arr.swap(i, j);
    }
    arr.truncate(k as usize);
    arr.sort_unstable();
    Ok(IndexSet { indices: arr })
}

/// An image in which every pixel outside `retained` has been replaced by the
/// NULL symbol. NULL is the absence of information, not a zero-valued pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct AblatedImage {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
    retained: IndexSet,
}

impl AblatedImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn retained(&self) -> &IndexSet {
        &self.retained
    }

    /// Pixel value at `index`, or `None` when the pixel is NULL.
    pub fn pixel(&self, index: usize) -> Option<&[f64]> {
        if self.retained.contains(index as u32) {
            Some(&self.values[index * self.channels..(index + 1) * self.channels])
        } else {
            None
        }
    }
}

/// Replaces every pixel outside `retained` with NULL.
pub fn ablate(image: &Image, retained: &IndexSet) -> Result<AblatedImage> {
    let d = image.num_pixels() as u32;
    if let Some(&bad) = retained.indices().iter().find(|&&i| i >= d) {
        return Err(Error::IndexOutOfRange(format!(
            "retained index {bad} >= pixel count {d}"
        )));
    }
    Ok(AblatedImage {
        width: image.width,
        height: image.height,
        channels: image.channels,
        values: image.values.clone(),
        retained: retained.clone(),
    })
}

/// How NULL pixels are presented to the base classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingScheme {
    /// Channel count doubles: intensity s becomes (s, 1-s) and NULL becomes
    /// all zeros, so NULL is equidistant from every encodable color.
    Multichannel,
    /// NULL pixels are replaced by the training-set mean pixel; channel
    /// count is unchanged.
    Mean,
}

impl EncodingScheme {
    /// Tensor channels per pixel for a source image with `ch` channels.
    pub fn encoded_channels(self, ch: usize) -> usize {
        match self {
            EncodingScheme::Multichannel => 2 * ch,
            EncodingScheme::Mean => ch,
        }
    }
}

/// A d-pixel tensor ready for classifier consumption.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTensor {
    values: Vec<f64>,
    num_pixels: usize,
    channels: usize,
    scheme: EncodingScheme,
}

impl EncodedTensor {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_pixels(&self) -> usize {
        self.num_pixels
    }

    /// Channels per pixel in the encoded tensor.
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn scheme(&self) -> EncodingScheme {
        self.scheme
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.channels..(index + 1) * self.channels]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Encodes an ablated image. The mean scheme requires the training-set mean
/// pixel (`channels` values).
pub fn encode(
    ablated: &AblatedImage,
    scheme: EncodingScheme,
    mean_pixel: Option<&[f64]>,
) -> Result<EncodedTensor> {
    let ch = ablated.channels;
    let d = ablated.num_pixels();
    match scheme {
        EncodingScheme::Multichannel => {
            let out_ch = 2 * ch;
            let mut values = vec![0.0; d * out_ch];
            for &i in ablated.retained.indices() {
                let i = i as usize;
                let px = &ablated.values[i * ch..(i + 1) * ch];
                let out = &mut values[i * out_ch..(i + 1) * out_ch];
                for c in 0..ch {
                    out[c] = px[c];
                    out[ch + c] = 1.0 - px[c];
                }
            }
            Ok(EncodedTensor {
                values,
                num_pixels: d,
                channels: out_ch,
                scheme,
            })
        }
        EncodingScheme::Mean => {
            let mean = mean_pixel.ok_or_else(|| {
                Error::InvalidParams("mean encoding requires a mean pixel".into())
            })?;
            if mean.len() != ch {
                return Err(Error::ShapeMismatch(format!(
                    "mean pixel has {} channels, image has {ch}",
                    mean.len()
                )));
            }
            let mut values = Vec::with_capacity(d * ch);
            for i in 0..d {
                match ablated.pixel(i) {
                    Some(px) => values.extend_from_slice(px),
                    None => values.extend_from_slice(mean),
                }
            }
            Ok(EncodedTensor {
                values,
                num_pixels: d,
                channels: ch,
                scheme,
            })
        }
    }
}
