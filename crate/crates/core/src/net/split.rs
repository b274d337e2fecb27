//! The reference CNN as a linear chain of stages, cut at the mix point into a
//! weight-shared stem (run once per branch) and a trunk (run on the mixture).

use super::params::{ModelGrads, ModelParams, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::mix::{mix_batch, mix_label_batch, MixSpec, SplitLayer};
use crate::ops::{
    conv2d_backward_with, conv2d_forward, linear_backward_with, linear_forward, maxpool2_backward,
    maxpool2_forward, relu_backward, relu_forward, softmax_xent_soft, ConvParams, PoolIndices,
};
use crate::sampler::{draw_mix, MixDraw, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Stage {
    Conv1,
    Pool1,
    Conv2,
    Pool2,
    Fc1,
    Fc2,
}

const STAGES: [Stage; 6] = [
    Stage::Conv1,
    Stage::Pool1,
    Stage::Conv2,
    Stage::Pool2,
    Stage::Fc1,
    Stage::Fc2,
];

/// Index of the first trunk stage. The mix point sits after a block's ReLU
/// and before its pool.
fn split_index(split: SplitLayer) -> usize {
    match split {
        SplitLayer::Input => 0,
        SplitLayer::Conv1 => 1,
        SplitLayer::Conv2 => 3,
    }
}

#[derive(Clone, Debug)]
enum StageCache {
    /// conv + ReLU: the layer input and the pre-activation.
    ConvRelu { input: Tensor, pre: Tensor },
    Pool(PoolIndices),
    /// fc + ReLU.
    Hidden { input: Tensor, pre: Tensor },
    Output { input: Tensor },
}

/// Everything a backward pass needs from one forward pass over a stage range.
#[derive(Clone, Debug)]
pub struct ActCache {
    first: usize,
    stages: Vec<StageCache>,
}

/// Which side of every ReLU and pool window a forward pass landed on.
///
/// Two passes with equal patterns lie in the same linear region of the
/// network, so finite differences between them are free of kink artefacts.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ActivationPattern {
    relu: Vec<bool>,
    argmax: Vec<usize>,
}

impl ActCache {
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn pattern(&self) -> ActivationPattern {
        let mut relu = Vec::new();
        let mut argmax = Vec::new();
        for s in &self.stages {
            match s {
                StageCache::ConvRelu { pre, .. } | StageCache::Hidden { pre, .. } => {
                    relu.extend(pre.data().iter().map(|&v| v > 0.0))
                }
                StageCache::Pool(idx) => argmax.extend_from_slice(&idx.argmax),
                StageCache::Output { .. } => {}
            }
        }
        ActivationPattern { relu, argmax }
    }
}

fn conv_relu(x: Tensor, p: &ConvParams) -> Result<(Tensor, StageCache)> {
    let pre = conv2d_forward(&x, p)?;
    let out = relu_forward(&pre);
    Ok((out, StageCache::ConvRelu { input: x, pre }))
}

fn run_stages(m: &ModelParams, x: Tensor, range: std::ops::Range<usize>) -> Result<(Tensor, ActCache)> {
    let first = range.start;
    let mut cur = x;
    let mut stages = Vec::with_capacity(range.len());
    for stage in &STAGES[range] {
        let (next, cache) = match stage {
            Stage::Conv1 => conv_relu(cur, &m.conv1)?,
            Stage::Conv2 => conv_relu(cur, &m.conv2)?,
            Stage::Pool1 | Stage::Pool2 => {
                let (y, idx) = maxpool2_forward(&cur)?;
                (y, StageCache::Pool(idx))
            }
            Stage::Fc1 => {
                let pre = linear_forward(&cur, &m.fc1)?;
                (relu_forward(&pre), StageCache::Hidden { input: cur, pre })
            }
            Stage::Fc2 => {
                let y = linear_forward(&cur, &m.fc2)?;
                (y, StageCache::Output { input: cur })
            }
        };
        stages.push(cache);
        cur = next;
    }
    Ok((cur, ActCache { first, stages }))
}

/// Backpropagates `upstream` through the cached stages, accumulating
/// parameter gradients into `grads`. Returns the gradient at the range's
/// input unless the range starts at the raw image.
fn backprop(
    m: &ModelParams,
    cache: &ActCache,
    upstream: Tensor,
    grads: &mut ModelGrads,
) -> Result<Option<Tensor>> {
    let mut g = upstream;
    for (offset, sc) in cache.stages.iter().enumerate().rev() {
        let idx = cache.first + offset;
        let want_input = idx > 0;
        let stage = STAGES[idx];
        g = match sc {
            StageCache::ConvRelu { input, pre } => {
                let (p, slot) = match stage {
                    Stage::Conv1 => (&m.conv1, &mut grads.conv1),
                    _ => (&m.conv2, &mut grads.conv2),
                };
                let dpre = relu_backward(pre, &g)?;
                let cg = conv2d_backward_with(input, p, &dpre, want_input)?;
                slot.accumulate(&cg.weights, &cg.bias);
                match cg.input {
                    Some(dx) => dx,
                    None => return Ok(None),
                }
            }
            StageCache::Pool(idx) => maxpool2_backward(idx, &g)?,
            StageCache::Hidden { input, pre } => {
                let dpre = relu_backward(pre, &g)?;
                let lg = linear_backward_with(input, &m.fc1, &dpre, true)?;
                grads.fc1.accumulate(&lg.weights, &lg.bias);
                lg.input.expect("input gradient requested")
            }
            StageCache::Output { input } => {
                let lg = linear_backward_with(input, &m.fc2, &g, true)?;
                grads.fc2.accumulate(&lg.weights, &lg.bias);
                lg.input.expect("input gradient requested")
            }
        };
    }
    Ok((cache.first > 0).then_some(g))
}

/// Layers up to and including the mix point. `Input` returns `x` unchanged.
pub fn stem_forward(m: &ModelParams, x: &Tensor, split: SplitLayer) -> Result<(Tensor, ActCache)> {
    ModelParams::check_input(x)?;
    run_stages(m, x.clone(), 0..split_index(split))
}

/// Remaining layers, from a (possibly mixed) stem output to logits.
pub fn trunk_forward(m: &ModelParams, f: &Tensor, split: SplitLayer) -> Result<(Tensor, ActCache)> {
    let expected = stem_output_shape(f.shape().n, split);
    f.expect_shape("trunk_forward", expected)?;
    run_stages(m, f.clone(), split_index(split)..STAGES.len())
}

/// Shape of the stem output for a batch of `n` images.
pub fn stem_output_shape(n: usize, split: SplitLayer) -> crate::tensor::Shape {
    use super::params::*;
    use crate::tensor::Shape;
    match split {
        SplitLayer::Input => image_shape(n),
        SplitLayer::Conv1 => Shape::new(n, CONV1_CHANNELS, IMAGE_SIZE, IMAGE_SIZE),
        SplitLayer::Conv2 => Shape::new(n, CONV2_CHANNELS, IMAGE_SIZE / 2, IMAGE_SIZE / 2),
    }
}

/// Fused single-network forward pass: image batch to logits.
pub fn forward(m: &ModelParams, x: &Tensor) -> Result<(Tensor, ActCache)> {
    ModelParams::check_input(x)?;
    run_stages(m, x.clone(), 0..STAGES.len())
}

/// Accumulates stem parameter gradients for one branch; `upstream` is the
/// gradient at that branch's stem output.
pub fn stem_backward(
    m: &ModelParams,
    cache: &ActCache,
    upstream: Tensor,
    grads: &mut ModelGrads,
) -> Result<()> {
    backprop(m, cache, upstream, grads).map(|_| ())
}

/// Accumulates trunk gradients and returns the gradient at the trunk input.
pub fn trunk_backward(
    m: &ModelParams,
    cache: &ActCache,
    upstream: Tensor,
    grads: &mut ModelGrads,
) -> Result<Option<Tensor>> {
    backprop(m, cache, upstream, grads)
}

/// Index of the largest logit per row; ties go to the lowest class.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let classes = logits.shape().per_sample();
    logits
        .data()
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Predicted class per image, evaluating the network as one piece.
pub fn predict(m: &ModelParams, x: &Tensor) -> Result<Vec<usize>> {
    let (logits, _) = forward(m, x)?;
    Ok(argmax_rows(&logits))
}

/// Mean loss and parameter gradients of a supervised batch.
pub fn plain_loss_grads(m: &ModelParams, x: &Tensor, targets: &Tensor) -> Result<(f64, ModelGrads)> {
    let (logits, cache) = forward(m, x)?;
    let (loss, dlogits) = softmax_xent_soft(&logits, targets)?;
    let mut grads = ModelGrads::zeros_like(m);
    backprop(m, &cache, dlogits, &mut grads)?;
    Ok((loss, grads))
}

/// Mean loss and gradients of a mixed batch for fixed per-sample draws.
///
/// Each branch runs the shared stem; features and teacher rows are mixed with
/// the same draw; the trunk runs once. Branch `i` receives `uᵢ` times the
/// gradient at the mixed feature, and all branches accumulate into the one
/// set of stem gradients in branch order.
pub fn mixed_loss_grads(
    m: &ModelParams,
    inputs: &[&Tensor],
    targets: &[&Tensor],
    split: SplitLayer,
    draws: &[MixDraw],
) -> Result<(f64, ModelGrads)> {
    check_branches(inputs, targets)?;
    let n = inputs[0].shape().n;
    if draws.len() != n {
        return Err(Error::dim("mixed step", format!("{} draws for batch of {n}", draws.len())));
    }

    let mut features = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (f, c) = stem_forward(m, x, split)?;
        features.push(f);
        caches.push(c);
    }
    let feature_refs: Vec<&Tensor> = features.iter().collect();
    let mixed = mix_batch(&feature_refs, draws)?;
    let mixed_targets = mix_label_batch(targets, draws)?;

    let (logits, trunk_cache) = trunk_forward(m, &mixed, split)?;
    let (loss, dlogits) = softmax_xent_soft(&logits, &mixed_targets)?;
    let mut grads = ModelGrads::zeros_like(m);
    let dmixed = backprop(m, &trunk_cache, dlogits, &mut grads)?;

    if let Some(dmixed) = dmixed {
        for (branch, cache) in caches.iter().enumerate() {
            let mut g = dmixed.clone();
            for (j, draw) in draws.iter().enumerate() {
                let u = draw.weights()[branch];
                g.sample_mut(j).iter_mut().for_each(|v| *v *= u);
            }
            stem_backward(m, cache, g, &mut grads)?;
        }
    }
    Ok((loss, grads))
}

fn check_branches(inputs: &[&Tensor], targets: &[&Tensor]) -> Result<()> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::invalid(
            "mix arity",
            format!("{} input batches, {} target batches", inputs.len(), targets.len()),
        ));
    }
    let n = inputs[0].shape().n;
    for (x, t) in inputs.iter().zip(targets) {
        if x.shape().n != n || t.shape().n != n {
            return Err(Error::dim("mixed step", "branch batches differ in size"));
        }
        if t.shape().per_sample() != NUM_CLASSES {
            return Err(Error::dim(
                "mixed step",
                format!("targets have {} classes, expected {NUM_CLASSES}", t.shape().per_sample()),
            ));
        }
    }
    Ok(())
}

fn ensure_finite(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Diverged(format!("loss is {loss}")))
    }
}

/// One SGD step on a mixed batch; draws one mix per pair/triplet from `rng`.
/// Returns the batch mean loss.
pub fn train_step_mixed(
    m: &mut ModelParams,
    inputs: &[&Tensor],
    targets: &[&Tensor],
    spec: &MixSpec,
    rng: &mut Rng,
    lr: f64,
    weight_decay: f64,
) -> Result<f64> {
    if inputs.len() != spec.arity {
        return Err(Error::invalid(
            "mix arity",
            format!("{} branches for a {}-way mix", inputs.len(), spec.arity),
        ));
    }
    check_branches(inputs, targets)?;
    let n = inputs[0].shape().n;
    let draws = (0..n)
        .map(|_| draw_mix(rng, spec.alpha, spec.arity))
        .collect::<Result<Vec<_>>>()?;
    let (loss, grads) = mixed_loss_grads(m, inputs, targets, spec.split, &draws)?;
    let loss = ensure_finite(loss)?;
    m.sgd_step(&grads, lr, weight_decay);
    Ok(loss)
}

/// One ordinary supervised SGD step. Returns the batch mean loss.
pub fn train_step_plain(
    m: &mut ModelParams,
    x: &Tensor,
    targets: &Tensor,
    lr: f64,
    weight_decay: f64,
) -> Result<f64> {
    let (loss, grads) = plain_loss_grads(m, x, targets)?;
    let loss = ensure_finite(loss)?;
    m.sgd_step(&grads, lr, weight_decay);
    Ok(loss)
}
