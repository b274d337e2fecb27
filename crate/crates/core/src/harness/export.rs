//! First-layer feature-map export as raw float dumps and 8-bit PGM images.
//!
//! For image `i` and channel `c` three files are written:
//! `img{i}_ch{c}.pgm` (binary P5, min-max scaled per channel),
//! `img{i}_ch{c}.f64` (row-major little-endian f64) and
//! `img{i}_ch{c}.txt` (sidecar header: `shape H W`, `min`, `max`).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mix::SplitLayer;
use crate::net::{stem_forward, ModelParams};
use crate::tensor::{Shape, Tensor};

/// Quantizes one channel to bytes: `floor(255·(x − min)/(max − min))`.
/// A constant channel maps to all zeros.
pub fn quantize_channel(values: &[f64]) -> Vec<u8> {
    let (min, max) = min_max(values);
    let range = max - min;
    if !(range > 0.0) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| (255.0 * (v - min) / range).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Binary PGM (P5, maxval 255) for an `h × w` channel.
pub fn pgm_bytes(values: &[f64], h: usize, w: usize) -> Vec<u8> {
    assert_eq!(values.len(), h * w, "pgm_bytes: size mismatch");
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(quantize_channel(values));
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the raw dump and its sidecar header for one `h × w` channel.
pub fn write_raw_map(path: &Path, values: &[f64], h: usize, w: usize) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write(path, &bytes)?;
    let (min, max) = min_max(values);
    write(
        &path.with_extension("txt"),
        format!("shape {h} {w}\nmin {min}\nmax {max}\n").as_bytes(),
    )
}

/// Reads a raw dump back as a `(1, 1, h, w)` tensor using its sidecar header.
pub fn load_raw_map(path: &Path) -> Result<Tensor> {
    let header_path = path.with_extension("txt");
    let header = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let dims: Vec<usize> = header
        .lines()
        .find_map(|l| l.strip_prefix("shape "))
        .ok_or_else(|| Error::format(&header_path, "missing `shape` line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::format(&header_path, format!("bad dimension {t:?}"))))
        .collect::<Result<_>>()?;
    let [h, w] = dims[..] else {
        return Err(Error::format(&header_path, "shape needs two dimensions"));
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != h * w * 8 {
        return Err(Error::format(
            path,
            format!("{} bytes for a {h}x{w} map", bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(Shape::new(1, 1, h, w), data)
}

/// Dumps every channel of `maps` (shape `(n, c, h, w)`) into `outdir`.
pub fn write_feature_maps(maps: &Tensor, outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let s = maps.shape();
    let mut written = Vec::with_capacity(s.n * s.c * 3);
    for i in 0..s.n {
        for c in 0..s.c {
            let start = maps.index(i, c, 0, 0);
            let channel = &maps.data()[start..start + s.plane()];
            let stem = format!("img{i}_ch{c}");
            let pgm = outdir.join(format!("{stem}.pgm"));
            write(&pgm, &pgm_bytes(channel, s.h, s.w))?;
            let raw = outdir.join(format!("{stem}.f64"));
            write_raw_map(&raw, channel, s.h, s.w)?;
            written.push(pgm);
            written.push(raw.with_extension("txt"));
            written.push(raw);
        }
    }
    Ok(written)
}

/// Exports the post-ReLU maps of convolution layer `layer` (only 1 is
/// supported) for already normalized `images`.
pub fn export_feature_maps(
    m: &ModelParams,
    images: &Tensor,
    layer: usize,
    outdir: &Path,
) -> Result<Vec<PathBuf>> {
    if layer != 1 {
        return Err(Error::invalid("export layer", format!("{layer} (only layer 1 is exported)")));
    }
    let (maps, _) = stem_forward(m, images, SplitLayer::Conv1)?;
    write_feature_maps(&maps, outdir)
}
