//! Dataset ingestion (IDX containers, optionally gzipped) and synthetic
//! dataset generation for oracle tests and self-contained pipeline runs.

use crate::ablation::Image;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use flate2::read::GzDecoder;
use rand::Rng;
use std::io::Read;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// An immutable labeled image collection.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub split: Split,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, split: Split, num_classes: usize) -> Result<Self> {
        let ds = Self {
            images,
            labels,
            split,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} images but {} labels",
                self.images.len(),
                self.labels.len()
            )));
        }
        if self.images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::InvalidParams(format!(
                "label {bad} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// (width, height, channels) shared by every image.
    pub fn geometry(&self) -> Result<(usize, usize, usize)> {
        let first = &self.images[0];
        let geo = (first.width(), first.height(), first.channels());
        if self
            .images
            .iter()
            .any(|img| (img.width(), img.height(), img.channels()) != geo)
        {
            return Err(Error::ShapeMismatch("images have mixed geometry".into()));
        }
        Ok(geo)
    }

    /// Per-channel mean pixel over all pixels of all images.
    pub fn mean_pixel(&self) -> Result<Vec<f64>> {
        let (_, _, ch) = self.geometry()?;
        let mut sums = vec![0.0f64; ch];
        let mut count = 0u64;
        for img in &self.images {
            for i in 0..img.num_pixels() {
                for (c, v) in img.pixel(i).iter().enumerate() {
                    sums[c] += v;
                }
            }
            count += img.num_pixels() as u64;
        }
        Ok(sums.into_iter().map(|s| s / count as f64).collect())
    }

    /// The first `n` items.
    pub fn subset_first(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidParams(format!(
                "subset size {n} out of range for {} items",
                self.len()
            )));
        }
        Dataset::new(
            self.images[..n].to_vec(),
            self.labels[..n].to_vec(),
            self.split,
            self.num_classes,
        )
    }

    /// A seeded random subset of `n` distinct items, in draw order.
    pub fn subset_random(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidParams(format!(
                "subset size {n} out of range for {} items",
                self.len()
            )));
        }
        let mut rng = stream_rng(seed, 0);
        let mut picks: Vec<usize> = (0..self.len()).collect();
        for i in 0..n {
            let j = rng.gen_range(i..picks.len());
            picks.swap(i, j);
        }
        picks.truncate(n);
        Dataset::new(
            picks.iter().map(|&i| self.images[i].clone()).collect(),
            picks.iter().map(|&i| self.labels[i]).collect(),
            self.split,
            self.num_classes,
        )
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = std::fs::File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

fn read_u32_be(r: &mut dyn Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::DatasetFormat("truncated file".into()))?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads a big-endian IDX image/label pair. Pixel bytes are scaled to
/// `[0, 1]`; a count mismatch between the two files is rejected.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let mut ir = open_maybe_gz(images_path)?;
    if read_u32_be(&mut ir)? != IDX_IMAGES_MAGIC {
        return Err(Error::DatasetFormat(format!(
            "bad image magic in {}",
            images_path.display()
        )));
    }
    let count = read_u32_be(&mut ir)? as usize;
    let rows = read_u32_be(&mut ir)? as usize;
    let cols = read_u32_be(&mut ir)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    ir.read_exact(&mut pixels)
        .map_err(|_| Error::DatasetFormat("truncated image payload".into()))?;

    let mut lr = open_maybe_gz(labels_path)?;
    if read_u32_be(&mut lr)? != IDX_LABELS_MAGIC {
        return Err(Error::DatasetFormat(format!(
            "bad label magic in {}",
            labels_path.display()
        )));
    }
    let label_count = read_u32_be(&mut lr)? as usize;
    if label_count != count {
        return Err(Error::DatasetFormat(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let mut labels = vec![0u8; label_count];
    lr.read_exact(&mut labels)
        .map_err(|_| Error::DatasetFormat("truncated label payload".into()))?;

    let images = pixels
        .chunks(rows * cols)
        .map(|chunk| {
            Image::new(
                cols,
                rows,
                1,
                chunk.iter().map(|&b| b as f64 / 255.0).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = labels.into_iter().map(|l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(images, labels, split, num_classes)
}

/// Writes a grayscale dataset as an IDX image/label pair (uncompressed).
/// Intensities are quantized back to bytes, so a load/store round trip of
/// byte-sourced data is lossless.
pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    dataset.validate()?;
    let (cols, rows, ch) = dataset.geometry()?;
    if ch != 1 {
        return Err(Error::InvalidParams(
            "IDX export supports grayscale only".into(),
        ));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in &dataset.images {
        out.extend(img.values().iter().map(|&v| (v * 255.0).round() as u8));
    }
    std::fs::write(images_path, out)?;

    let mut out = Vec::new();
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    out.extend(dataset.labels.iter().map(|&l| l as u8));
    std::fs::write(labels_path, out)?;
    Ok(())
}

/// Enumerable dataset over `S^d` for a small pixel alphabet, labeled by a
/// deterministic rule. Used by the exhaustive soundness tests.
///
/// Level `l` maps to intensity `l / (s_size - 1)`. Images are enumerated
/// lexicographically; `size` takes a seeded subsample without replacement.
pub fn synthetic_lookup_dataset(
    d: usize,
    s_size: usize,
    rule: impl Fn(&[u8]) -> usize,
    size: Option<usize>,
    seed: u64,
) -> Result<Dataset> {
    if d == 0 || s_size < 2 {
        return Err(Error::InvalidParams("need d >= 1 and s_size >= 2".into()));
    }
    let total = (s_size as f64).powi(d as i32);
    if total > 1e6 {
        return Err(Error::InstanceTooLarge(format!(
            "{s_size}^{d} images exceeds the enumeration budget"
        )));
    }
    let total = total as usize;
    let mut ranks: Vec<usize> = (0..total).collect();
    if let Some(n) = size {
        if n == 0 || n > total {
            return Err(Error::InvalidParams(format!(
                "subsample size {n} out of range"
            )));
        }
        let mut rng = stream_rng(seed, 0);
        for i in 0..n {
            let j = rng.gen_range(i..total);
            ranks.swap(i, j);
        }
        ranks.truncate(n);
    }

    let mut images = Vec::with_capacity(ranks.len());
    let mut labels = Vec::with_capacity(ranks.len());
    let mut num_classes = 1;
    for &rank in &ranks {
        let levels = rank_to_levels(rank, d, s_size);
        let label = rule(&levels);
        num_classes = num_classes.max(label + 1);
        images.push(image_from_levels(&levels, s_size)?);
        labels.push(label);
    }
    Dataset::new(images, labels, Split::Train, num_classes)
}

/// Decodes a lexicographic rank into base-`s_size` pixel levels.
pub fn rank_to_levels(rank: usize, d: usize, s_size: usize) -> Vec<u8> {
    let mut levels = vec![0u8; d];
    let mut r = rank;
    for i in (0..d).rev() {
        levels[i] = (r % s_size) as u8;
        r /= s_size;
    }
    levels
}

/// Maps discrete pixel levels to a unit-interval grayscale image.
pub fn image_from_levels(levels: &[u8], s_size: usize) -> Result<Image> {
    let denom = (s_size - 1) as f64;
    Image::grayscale_flat(levels.iter().map(|&l| l as f64 / denom).collect())
}

// A 7x5 glyph per digit class for the generated corpus.
const GLYPHS: [[&str; 7]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

const CORPUS_SIDE: usize = 28;
const GLYPH_SCALE: usize = 3;

/// Generates a deterministic 28x28 grayscale digit corpus: one of ten glyph
/// classes per image, randomly placed, with intensity jitter and sparse
/// background noise. Item `i` depends only on `(seed, split, i)`, so train
/// and test splits drawn from different seeds or offsets never collide.
pub fn generate_digit_corpus(count: usize, seed: u64, split: Split) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidParams("count must be positive".into()));
    }
    let split_offset: u64 = match split {
        Split::Train => 0,
        Split::Test => 1 << 40,
    };
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = stream_rng(seed, split_offset + i as u64);
        let label = rng.gen_range(0..10usize);
        let glyph = &GLYPHS[label];
        let glyph_h = 7 * GLYPH_SCALE;
        let glyph_w = 5 * GLYPH_SCALE;
        let row0 = rng.gen_range(0..=CORPUS_SIDE - glyph_h);
        let col0 = rng.gen_range(0..=CORPUS_SIDE - glyph_w);
        let mut pixels = vec![0.0f64; CORPUS_SIDE * CORPUS_SIDE];
        for (gr, row) in glyph.iter().enumerate() {
            for (gc, cell) in row.bytes().enumerate() {
                if cell == b'1' {
                    for dr in 0..GLYPH_SCALE {
                        for dc in 0..GLYPH_SCALE {
                            let r = row0 + gr * GLYPH_SCALE + dr;
                            let c = col0 + gc * GLYPH_SCALE + dc;
                            pixels[r * CORPUS_SIDE + c] = rng.gen_range(0.75..1.0);
                        }
                    }
                }
            }
        }
        for p in pixels.iter_mut() {
            if *p == 0.0 {
                if rng.gen_range(0.0..1.0) < 0.02 {
                    *p = rng.gen_range(0.3..1.0);
                } else {
                    *p = rng.gen_range(0.0..0.08);
                }
            }
        }
        images.push(Image::new(CORPUS_SIDE, CORPUS_SIDE, 1, pixels)?);
        labels.push(label);
    }
    Dataset::new(images, labels, split, 10)
}
