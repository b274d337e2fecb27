//! Convex combinations of tensors and teacher vectors under a shared draw.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::check_distribution;
use crate::sampler::MixDraw;
use crate::tensor::Tensor;

/// Where in the network the branches are mixed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum SplitLayer {
    /// Mix raw images (classic mixup).
    Input,
    /// Mix activations of the first conv block, before its pool.
    Conv1,
    /// Mix activations of the second conv block, before its pool.
    Conv2,
}

impl SplitLayer {
    pub const ALL: [SplitLayer; 3] = [SplitLayer::Input, SplitLayer::Conv1, SplitLayer::Conv2];

    pub fn from_index(l: usize) -> Result<Self> {
        match l {
            0 => Ok(SplitLayer::Input),
            1 => Ok(SplitLayer::Conv1),
            2 => Ok(SplitLayer::Conv2),
            _ => Err(Error::invalid("split layer", format!("{l} (expected 0, 1 or 2)"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            SplitLayer::Input => 0,
            SplitLayer::Conv1 => 1,
            SplitLayer::Conv2 => 2,
        }
    }
}

/// Mixing configuration: split point, number of mixed samples, concentration.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct MixSpec {
    pub split: SplitLayer,
    pub arity: usize,
    pub alpha: f64,
}

impl MixSpec {
    pub fn new(split: SplitLayer, arity: usize, alpha: f64) -> Result<Self> {
        if !(2..=3).contains(&arity) {
            return Err(Error::invalid("mix arity", format!("{arity} (expected 2 or 3)")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("{alpha} (must be > 0)")));
        }
        Ok(MixSpec { split, arity, alpha })
    }
}

/// `λ·a + (1 − λ)·b`.
pub fn mix2(a: &Tensor, b: &Tensor, lambda: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("lambda", format!("{lambda} outside [0, 1]")));
    }
    b.expect_shape("mix2", a.shape())?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    Tensor::from_vec(a.shape(), data)
}

/// `Σ uᵢ·xᵢ` accumulated left to right, so a pair draw reproduces [`mix2`] bitwise.
fn mix_slices(inputs: &[&[f64]], weights: &[f64], out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(inputs[0]) {
        *o = weights[0] * x;
    }
    for (src, &u) in inputs[1..].iter().zip(&weights[1..]) {
        for (o, &x) in out.iter_mut().zip(*src) {
            *o += u * x;
        }
    }
}

fn check_arity(op: &'static str, got: usize, draw: &MixDraw) -> Result<()> {
    if got != draw.arity() {
        return Err(Error::invalid(
            "mix arity",
            format!("{op}: {got} inputs for a {}-way draw", draw.arity()),
        ));
    }
    Ok(())
}

/// Weighted sum of `k` equally shaped tensors.
pub fn mixk(inputs: &[&Tensor], draw: &MixDraw) -> Result<Tensor> {
    check_arity("mixk", inputs.len(), draw)?;
    let shape = inputs[0].shape();
    for t in &inputs[1..] {
        t.expect_shape("mixk", shape)?;
    }
    let slices: Vec<&[f64]> = inputs.iter().map(|t| t.data()).collect();
    let mut out = Tensor::zeros(shape);
    mix_slices(&slices, draw.weights(), out.data_mut());
    Ok(out)
}

/// Mixes teacher rows with the same weights as the features.
pub fn mix_labels(targets: &[&[f64]], draw: &MixDraw) -> Result<Vec<f64>> {
    check_arity("mix_labels", targets.len(), draw)?;
    let classes = targets[0].len();
    for (i, t) in targets.iter().enumerate() {
        if t.len() != classes {
            return Err(Error::dim(
                "mix_labels",
                format!("target {i} has {} classes, expected {classes}", t.len()),
            ));
        }
        check_distribution(t).map_err(|detail| Error::invalid("teacher row", format!("target {i}: {detail}")))?;
    }
    let mut out = vec![0.0; classes];
    mix_slices(targets, draw.weights(), &mut out);
    Ok(out)
}

/// Per-sample mixing of `k` batches: sample `j` uses `draws[j]`.
pub fn mix_batch(inputs: &[&Tensor], draws: &[MixDraw]) -> Result<Tensor> {
    let shape = inputs
        .first()
        .ok_or_else(|| Error::invalid("mix arity", "no inputs"))?
        .shape();
    for t in &inputs[1..] {
        t.expect_shape("mix_batch", shape)?;
    }
    if draws.len() != shape.n {
        return Err(Error::dim(
            "mix_batch",
            format!("{} draws for {} samples", draws.len(), shape.n),
        ));
    }
    let mut out = Tensor::zeros(shape);
    for (j, draw) in draws.iter().enumerate() {
        check_arity("mix_batch", inputs.len(), draw)?;
        let slices: Vec<&[f64]> = inputs.iter().map(|t| t.sample(j)).collect();
        mix_slices(&slices, draw.weights(), out.sample_mut(j));
    }
    Ok(out)
}

/// Row-wise [`mix_labels`] over `(n, classes)` teacher matrices.
pub fn mix_label_batch(targets: &[&Tensor], draws: &[MixDraw]) -> Result<Tensor> {
    let shape = targets
        .first()
        .ok_or_else(|| Error::invalid("mix arity", "no targets"))?
        .shape();
    for t in &targets[1..] {
        t.expect_shape("mix_label_batch", shape)?;
    }
    if draws.len() != shape.n {
        return Err(Error::dim(
            "mix_label_batch",
            format!("{} draws for {} rows", draws.len(), shape.n),
        ));
    }
    let mut out = Tensor::zeros(shape);
    for (j, draw) in draws.iter().enumerate() {
        let rows: Vec<&[f64]> = targets.iter().map(|t| t.sample(j)).collect();
        let mixed = mix_labels(&rows, draw)?;
        out.sample_mut(j).copy_from_slice(&mixed);
    }
    Ok(out)
}
