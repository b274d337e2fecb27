//! CIFAR-10 binary ingestion, per-class subsampling, channel standardization,
//! teacher vectors and a synthetic stand-in dataset.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{image_shape, IMAGE_CHANNELS, IMAGE_SIZE, NUM_CLASSES};
use crate::sampler::Rng;
use crate::tensor::{Shape, Tensor};

/// Pixels per image (3 × 32 × 32).
pub const PIXELS: usize = IMAGE_CHANNELS * IMAGE_SIZE * IMAGE_SIZE;
/// One label byte followed by the pixel bytes.
pub const RECORD_BYTES: usize = 1 + PIXELS;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Clone, PartialEq, Debug)]
pub struct Dataset {
    /// `(n, 3, 32, 32)`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub name: String,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, name: impl Into<String>) -> Result<Self> {
        let s = images.shape();
        if s != image_shape(s.n) {
            return Err(Error::dim("Dataset", format!("images must be (n, 3, 32, 32), got {s}")));
        }
        if labels.len() != s.n {
            return Err(Error::dim(
                "Dataset",
                format!("{} images but {} labels", s.n, labels.len()),
            ));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::invalid("label", format!("{l} (classes: {NUM_CLASSES})")));
        }
        Ok(Dataset {
            images,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            name: self.name.clone(),
        }
    }

    /// Number of samples per class label.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Decodes CIFAR-10 binary records held in memory. `origin` names the source
/// in error messages.
pub fn parse_cifar10_records(bytes: &[u8], origin: &Path) -> Result<(Vec<f64>, Vec<usize>)> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::format(
            origin,
            format!("{} bytes is not a multiple of the {RECORD_BYTES}-byte record size", bytes.len()),
        ));
    }
    let records = bytes.len() / RECORD_BYTES;
    let mut pixels = Vec::with_capacity(records * PIXELS);
    let mut labels = Vec::with_capacity(records);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let label = rec[0] as usize;
        if label >= NUM_CLASSES {
            return Err(Error::format(origin, format!("record {i}: label byte {label} >= {NUM_CLASSES}")));
        }
        labels.push(label);
        pixels.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok((pixels, labels))
}

/// Loads and concatenates CIFAR-10 binary batch files; pixels are scaled to `[0, 1]`.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (p, l) = parse_cifar10_records(&bytes, path)?;
        pixels.extend(p);
        labels.extend(l);
    }
    let n = labels.len();
    let name = paths
        .iter()
        .map(|p| p.as_ref().file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect::<Vec<_>>()
        .join("+");
    Dataset::new(Tensor::from_vec(image_shape(n), pixels)?, labels, name)
}

/// Standard `cifar-10-batches-bin` directory: the five training batches and the test batch.
pub fn load_cifar10_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train: Vec<PathBuf> = TRAIN_FILES.iter().map(|f| dir.join(f)).collect();
    let mut train = load_cifar10_bin(&train)?;
    train.name = "cifar10-train".into();
    let mut test = load_cifar10_bin(&[dir.join(TEST_FILE)])?;
    test.name = "cifar10-test".into();
    Ok((train, test))
}

/// Writes `ds` as CIFAR-10 binary records; pixels are clamped to `[0, 1]`
/// and rounded to bytes.
pub fn write_cifar10_bin(ds: &Dataset, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(ds.len() * RECORD_BYTES);
    for (i, &label) in ds.labels.iter().enumerate() {
        bytes.push(label as u8);
        bytes.extend(
            ds.images
                .sample(i)
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Keeps exactly `per_class` uniformly chosen samples of every class present,
/// preserving the original order.
pub fn subsample_per_class(ds: &Dataset, per_class: usize, rng: &mut Rng) -> Result<Dataset> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut keep = Vec::with_capacity(per_class * NUM_CLASSES);
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < per_class {
            return Err(Error::invalid(
                "per-class sample count",
                format!("class {class} has {} samples, {per_class} requested", members.len()),
            ));
        }
        // Partial Fisher–Yates: the first `per_class` slots become the sample.
        for i in 0..per_class {
            let j = i + rng.below(members.len() - i);
            members.swap(i, j);
        }
        keep.extend_from_slice(&members[..per_class]);
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}

/// Per-channel mean and standard deviation.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; IMAGE_CHANNELS],
    pub std: [f64; IMAGE_CHANNELS],
}

fn channel_values(images: &Tensor, c: usize) -> impl Iterator<Item = f64> + '_ {
    let s = images.shape();
    (0..s.n).flat_map(move |n| {
        let start = images.index(n, c, 0, 0);
        images.data()[start..start + s.plane()].iter().copied()
    })
}

/// Population statistics over every pixel of each channel.
pub fn compute_norm_stats(ds: &Dataset) -> Result<NormStats> {
    if ds.is_empty() {
        return Err(Error::invalid("dataset", "cannot compute statistics of an empty dataset"));
    }
    let count = (ds.len() * IMAGE_SIZE * IMAGE_SIZE) as f64;
    let mut stats = NormStats {
        mean: [0.0; IMAGE_CHANNELS],
        std: [0.0; IMAGE_CHANNELS],
    };
    for c in 0..IMAGE_CHANNELS {
        let mean = channel_values(&ds.images, c).sum::<f64>() / count;
        let var = channel_values(&ds.images, c).map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::invalid("channel statistics", format!("channel {c} has zero std")));
        }
        stats.mean[c] = mean;
        stats.std[c] = std;
    }
    Ok(stats)
}

/// `(x − mean) / std` per channel.
pub fn normalize(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    if let Some(c) = stats.std.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::invalid("channel statistics", format!("channel {c} has zero std")));
    }
    let mut out = ds.clone();
    let s = out.images.shape();
    for n in 0..s.n {
        for c in 0..IMAGE_CHANNELS {
            let start = out.images.index(n, c, 0, 0);
            let (m, sd) = (stats.mean[c], stats.std[c]);
            for v in &mut out.images.data_mut()[start..start + s.plane()] {
                *v = (*v - m) / sd;
            }
        }
    }
    Ok(out)
}

/// Teacher vector with a single 1 at `label`.
pub fn one_hot(label: usize, classes: usize) -> Result<Vec<f64>> {
    if label >= classes {
        return Err(Error::invalid("label", format!("{label} (classes: {classes})")));
    }
    let mut row = vec![0.0; classes];
    row[label] = 1.0;
    Ok(row)
}

/// `(n, NUM_CLASSES)` matrix of one-hot teacher rows.
pub fn one_hot_batch(labels: &[usize]) -> Result<Tensor> {
    let mut t = Tensor::zeros(Shape::matrix(labels.len(), NUM_CLASSES));
    for (i, &l) in labels.iter().enumerate() {
        t.sample_mut(i).copy_from_slice(&one_hot(l, NUM_CLASSES)?);
    }
    Ok(t)
}

/// Mean colours of the synthetic classes. Any two differ by at least 0.5 in
/// some channel.
const SYNTH_PALETTE: [[f64; 3]; NUM_CLASSES] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
    [0.0, 0.0, 0.0],
    [0.5, 0.5, 0.5],
    [0.5, 1.0, 0.0],
];

/// Noise level of synthetic pixels around their class colour.
pub const SYNTH_NOISE: f64 = 0.1;

pub fn synthetic_class_color(class: usize) -> [f64; 3] {
    SYNTH_PALETTE[class]
}

/// Images whose pixels are the class colour plus `N(0, 0.1²)` noise; the
/// classes are linearly separable by channel means.
pub fn gen_synthetic(rng: &mut Rng, classes: usize, per_class: usize) -> Result<Dataset> {
    if classes == 0 || classes > NUM_CLASSES {
        return Err(Error::invalid("synthetic classes", format!("{classes} (1..={NUM_CLASSES})")));
    }
    let n = classes * per_class;
    let mut images = Tensor::zeros(image_shape(n));
    let mut labels = Vec::with_capacity(n);
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    for class in 0..classes {
        for k in 0..per_class {
            let i = class * per_class + k;
            let sample = images.sample_mut(i);
            rng.fill_normal(sample, SYNTH_NOISE);
            for (c, ch) in sample.chunks_exact_mut(plane).enumerate() {
                ch.iter_mut().for_each(|v| *v += SYNTH_PALETTE[class][c]);
            }
            labels.push(class);
        }
    }
    Dataset::new(images, labels, format!("synthetic-{classes}x{per_class}"))
}
