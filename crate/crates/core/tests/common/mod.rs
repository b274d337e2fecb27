//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use featmix::net::{image_shape, train_step_plain, ModelParams, NUM_CLASSES};
use featmix::ops::{conv2d_forward, linear_forward, maxpool2_forward, relu_forward};
use featmix::sampler::beta_symmetric;
use featmix::{Rng, Shape, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Maximum accepted relative error between analytic and numeric gradients.
pub const FD_TOL: f64 = 1e-6;
/// Gradients smaller than this are compared on an absolute scale: the
/// central-difference rounding noise of an O(1) loss is ~1e-11, so relative
/// error is not meaningful for components far below it.
pub const FD_FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn random_tensor(rng: &mut Rng, shape: Shape) -> Tensor {
    let mut t = Tensor::zeros(shape);
    rng.fill_normal(t.data_mut(), 1.0);
    t
}

pub fn random_images(rng: &mut Rng, n: usize) -> Tensor {
    random_tensor(rng, image_shape(n))
}

pub fn random_one_hot(rng: &mut Rng, n: usize) -> Tensor {
    let mut t = Tensor::zeros(Shape::matrix(n, NUM_CLASSES));
    for i in 0..n {
        t.sample_mut(i)[rng.below(NUM_CLASSES)] = 1.0;
    }
    t
}

/// `Σ a·b` over two equally sized slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central difference of `f` with respect to `x[i]`.
pub fn central_diff(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_STEP;
    let plus = f(x);
    x[i] = orig - FD_STEP;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * FD_STEP)
}

/// Max relative error of `analytic` against central differences of `f` at `x`,
/// over every coordinate.
pub fn fd_check_all(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| rel_err(analytic[i], central_diff(&mut x, i, &mut f)))
        .fold(0.0, f64::max)
}

/// Direct six-loop convolution with explicit zero padding.
pub fn conv_direct(x: &Tensor, w: &Tensor, b: &[f64], pad: usize, stride: usize) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    let ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    let mut out = Tensor::zeros(Shape::new(xs.n, ws.n, oh, ow));
    for n in 0..xs.n {
        for k in 0..ws.n {
            for p in 0..oh {
                for q in 0..ow {
                    let mut acc = b[k];
                    for c in 0..xs.c {
                        for s in 0..ws.h {
                            for t in 0..ws.w {
                                let y = (p * stride + s) as isize - pad as isize;
                                let xx = (q * stride + t) as isize - pad as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < xs.h && (xx as usize) < xs.w {
                                    acc += w.at(k, c, s, t) * x.at(n, c, y as usize, xx as usize);
                                }
                            }
                        }
                    }
                    out.set(n, k, p, q, acc);
                }
            }
        }
    }
    out
}

/// Per-window maximum by explicit comparison of the four cells.
pub fn pool_direct(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, s.h / 2, s.w / 2));
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..s.h / 2 {
                for j in 0..s.w / 2 {
                    let m = [
                        x.at(n, c, 2 * i, 2 * j),
                        x.at(n, c, 2 * i, 2 * j + 1),
                        x.at(n, c, 2 * i + 1, 2 * j),
                        x.at(n, c, 2 * i + 1, 2 * j + 1),
                    ]
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                    out.set(n, c, i, j, m);
                }
            }
        }
    }
    out
}

/// `(W·x + b)` per row by explicit loops.
pub fn linear_direct(x: &Tensor, w: &Tensor, b: &[f64]) -> Tensor {
    let (n, fin) = (x.shape().n, x.shape().per_sample());
    let fout = w.shape().n;
    let mut y = Tensor::zeros(Shape::matrix(n, fout));
    for r in 0..n {
        for o in 0..fout {
            let mut acc = b[o];
            for i in 0..fin {
                acc += w.data()[o * fin + i] * x.sample(r)[i];
            }
            y.sample_mut(r)[o] = acc;
        }
    }
    y
}

/// Soft-label cross-entropy evaluated term by term without any shift, for
/// moderate logits only.
pub fn xent_direct(z: &Tensor, t: &Tensor) -> f64 {
    let classes = z.shape().per_sample();
    let n = z.shape().n;
    let mut total = 0.0;
    for r in 0..n {
        let row = z.sample(r);
        let denom: f64 = row.iter().map(|v| v.exp()).sum();
        for i in 0..classes {
            let p = row[i].exp() / denom;
            total -= t.sample(r)[i] * p.ln();
        }
    }
    total / n as f64
}

/// The network written out layer by layer, ignoring the stem/trunk split.
pub fn monolithic_logits(m: &ModelParams, x: &Tensor) -> Tensor {
    let a1 = relu_forward(&conv2d_forward(x, &m.conv1).unwrap());
    let p1 = maxpool2_forward(&a1).unwrap().0;
    let a2 = relu_forward(&conv2d_forward(&p1, &m.conv2).unwrap());
    let p2 = maxpool2_forward(&a2).unwrap().0;
    let h = relu_forward(&linear_forward(&p2, &m.fc1).unwrap());
    linear_forward(&h, &m.fc2).unwrap()
}

/// Classic input mixup written independently of the split network: draw
/// λ per pair, blend pixels and teacher rows, then take a supervised step.
pub fn input_mixup_step(
    m: &mut ModelParams,
    x1: &Tensor,
    x2: &Tensor,
    t1: &Tensor,
    t2: &Tensor,
    alpha: f64,
    rng: &mut Rng,
    lr: f64,
    wd: f64,
) -> f64 {
    let n = x1.shape().n;
    let mut x = Tensor::zeros(x1.shape());
    let mut t = Tensor::zeros(t1.shape());
    for j in 0..n {
        let lam = beta_symmetric(rng, alpha).unwrap();
        for (o, (a, b)) in x.sample_mut(j).iter_mut().zip(x1.sample(j).iter().zip(x2.sample(j))) {
            *o = lam * a + (1.0 - lam) * b;
        }
        for (o, (a, b)) in t.sample_mut(j).iter_mut().zip(t1.sample(j).iter().zip(t2.sample(j))) {
            *o = lam * a + (1.0 - lam) * b;
        }
    }
    train_step_plain(m, &x, &t, lr, wd).unwrap()
}
