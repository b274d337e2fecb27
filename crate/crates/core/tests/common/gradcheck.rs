//! Finite-difference checks returning the worst relative error found.

use super::*;
use featmix::mix::{mix_batch, SplitLayer};
use featmix::net::{init_model, mixed_loss_grads, stem_forward, trunk_forward, ActivationPattern, ModelParams};
use featmix::ops::*;
use featmix::sampler::{dirichlet_symmetric, MixDraw};

/// Conv input, weight and bias gradients for a random layer with the given stride.
pub fn conv_fd_error(seed: u64, stride: usize) -> f64 {
    let mut rng = Rng::new(seed);
    let size = if stride == 1 { 5 } else { 7 };
    let x = random_tensor(&mut rng, Shape::new(2, 3, size, size));
    let p = ConvParams::new(
        random_tensor(&mut rng, Shape::new(4, 3, 3, 3)),
        (0..4).map(|_| rng.standard_normal()).collect(),
        1,
        stride,
    )
    .unwrap();
    let out = conv2d_forward(&x, &p).unwrap();
    let up = random_tensor(&mut rng, out.shape());
    let g = conv2d_backward(&x, &p, &up).unwrap();

    let e_x = fd_check_all(x.data(), g.input.as_ref().unwrap().data(), |v| {
        let xv = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
        dot(conv2d_forward(&xv, &p).unwrap().data(), up.data())
    });
    let e_w = fd_check_all(p.weights.data(), g.weights.data(), |v| {
        let mut q = p.clone();
        q.weights.data_mut().copy_from_slice(v);
        dot(conv2d_forward(&x, &q).unwrap().data(), up.data())
    });
    let e_b = fd_check_all(&p.bias, &g.bias, |v| {
        let mut q = p.clone();
        q.bias.copy_from_slice(v);
        dot(conv2d_forward(&x, &q).unwrap().data(), up.data())
    });
    e_x.max(e_w).max(e_b)
}

/// ReLU input gradient, skipping inputs within 1e-3 of the kink.
pub fn relu_fd_error(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = random_tensor(&mut rng, Shape::new(2, 3, 4, 4));
    let up = random_tensor(&mut rng, x.shape());
    let g = relu_backward(&x, &up).unwrap();
    let mut xv = x.data().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..xv.len() {
        if xv[i].abs() < 1e-3 {
            continue;
        }
        let num = central_diff(&mut xv, i, |v| {
            dot(relu_forward(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap()).data(), up.data())
        });
        worst = worst.max(rel_err(g.data()[i], num));
    }
    worst
}

/// Max-pool input gradient, skipping windows whose top two values are
/// within 1e-3. Returns (max error, checked count).
pub fn pool_fd_error(seed: u64) -> (f64, usize) {
    let mut rng = Rng::new(seed);
    let x = random_tensor(&mut rng, Shape::new(2, 3, 8, 8));
    let (y, idx) = maxpool2_forward(&x).unwrap();
    assert_eq!(y, pool_direct(&x));
    let up = random_tensor(&mut rng, y.shape());
    let g = maxpool2_backward(&idx, &up).unwrap();

    let s = x.shape();
    let mut xv = x.data().to_vec();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..xv.len() {
        let (n, rem) = (i / s.per_sample(), i % s.per_sample());
        let (c, rem) = (rem / s.plane(), rem % s.plane());
        let (h0, w0) = ((rem / s.w) & !1, (rem % s.w) & !1);
        let mut win = [
            x.at(n, c, h0, w0),
            x.at(n, c, h0, w0 + 1),
            x.at(n, c, h0 + 1, w0),
            x.at(n, c, h0 + 1, w0 + 1),
        ];
        win.sort_by(f64::total_cmp);
        if win[3] - win[2] < 1e-3 {
            continue;
        }
        let num = central_diff(&mut xv, i, |v| {
            let t = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            dot(maxpool2_forward(&t).unwrap().0.data(), up.data())
        });
        worst = worst.max(rel_err(g.data()[i], num));
        checked += 1;
    }
    (worst, checked)
}

pub fn linear_fd_error(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = random_tensor(&mut rng, Shape::matrix(4, 10));
    let p = LinearParams::new(
        random_tensor(&mut rng, Shape::matrix(7, 10)),
        (0..7).map(|_| rng.standard_normal()).collect(),
    )
    .unwrap();
    assert!(linear_forward(&x, &p).unwrap().max_abs_diff(&linear_direct(&x, &p.weights, &p.bias)) < 1e-12);
    let up = random_tensor(&mut rng, Shape::matrix(4, 7));
    let g = linear_backward(&x, &p, &up).unwrap();
    let e_x = fd_check_all(x.data(), g.input.as_ref().unwrap().data(), |v| {
        dot(linear_forward(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &p).unwrap().data(), up.data())
    });
    let e_w = fd_check_all(p.weights.data(), g.weights.data(), |v| {
        let mut q = p.clone();
        q.weights.data_mut().copy_from_slice(v);
        dot(linear_forward(&x, &q).unwrap().data(), up.data())
    });
    let e_b = fd_check_all(&p.bias, &g.bias, |v| {
        let mut q = p.clone();
        q.bias.copy_from_slice(v);
        dot(linear_forward(&x, &q).unwrap().data(), up.data())
    });
    e_x.max(e_w).max(e_b)
}

/// Rows of `λ·onehot(a) + (1 − λ)·onehot(b)` for random classes.
pub fn mixed_targets(rng: &mut Rng, n: usize, lambda: f64) -> Tensor {
    let mut t = Tensor::zeros(Shape::matrix(n, NUM_CLASSES));
    for r in 0..n {
        let a = rng.below(NUM_CLASSES);
        let b = rng.below(NUM_CLASSES);
        t.sample_mut(r)[a] += lambda;
        t.sample_mut(r)[b] += 1.0 - lambda;
    }
    t
}

/// Soft-label cross-entropy: value against the direct formula (asserted)
/// and logit gradient against finite differences.
pub fn xent_fd_error(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let z = random_tensor(&mut rng, Shape::matrix(5, NUM_CLASSES));
    let lambda = rng.uniform01();
    let t = mixed_targets(&mut rng, 5, lambda);
    let (loss, g) = softmax_xent_soft(&z, &t).unwrap();
    assert!((loss - xent_direct(&z, &t)).abs() < 1e-12);
    fd_check_all(z.data(), g.data(), |v| {
        softmax_xent_soft(&Tensor::from_vec(z.shape(), v.to_vec()).unwrap(), &t).unwrap().0
    })
}

/// Activation patterns of every stem branch and the trunk.
fn mixed_patterns(m: &ModelParams, inputs: &[&Tensor], split: SplitLayer, draws: &[MixDraw]) -> Vec<ActivationPattern> {
    let mut pats = Vec::new();
    let mut feats = Vec::new();
    for x in inputs {
        let (f, c) = stem_forward(m, x, split).unwrap();
        pats.push(c.pattern());
        feats.push(f);
    }
    let refs: Vec<&Tensor> = feats.iter().collect();
    let mixed = mix_batch(&refs, draws).unwrap();
    pats.push(trunk_forward(m, &mixed, split).unwrap().1.pattern());
    pats
}

/// Finite-difference check of the full mixed loss w.r.t. sampled coordinates
/// of every parameter group, with fixed draws. Coordinates whose ±step crosses
/// a ReLU kink or flips a pool argmax are skipped. Returns (max error, checked count).
pub fn end_to_end_fd(split: SplitLayer, arity: usize, seed: u64, per_group: usize) -> (f64, usize) {
    let mut rng = Rng::new(seed);
    let m = init_model(&mut rng);
    let n = 2;
    let xs: Vec<Tensor> = (0..arity).map(|_| random_images(&mut rng, n)).collect();
    let ts: Vec<Tensor> = (0..arity).map(|_| random_one_hot(&mut rng, n)).collect();
    let x_refs: Vec<&Tensor> = xs.iter().collect();
    let t_refs: Vec<&Tensor> = ts.iter().collect();
    let draws: Vec<MixDraw> = (0..n).map(|_| dirichlet_symmetric(&mut rng, 1.0, arity).unwrap()).collect();

    let (_, grads) = mixed_loss_grads(&m, &x_refs, &t_refs, split, &draws).unwrap();
    let base = mixed_patterns(&m, &x_refs, split, &draws);

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (group, (_, g)) in grads.arrays().iter().enumerate() {
        let mut picked = 0;
        let mut attempts = 0;
        while picked < per_group && attempts < per_group * 20 {
            attempts += 1;
            let i = rng.below(g.len());
            let mut same_region = true;
            let mut eval = |delta: f64| {
                let mut mp = m.clone();
                mp.arrays_mut()[group].1[i] += delta;
                if mixed_patterns(&mp, &x_refs, split, &draws) != base {
                    same_region = false;
                }
                mixed_loss_grads(&mp, &x_refs, &t_refs, split, &draws).unwrap().0
            };
            let num = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
            if !same_region {
                continue;
            }
            worst = worst.max(rel_err(g[i], num));
            picked += 1;
            checked += 1;
        }
    }
    (worst, checked)
}

/// The six mix layouts paired with a seed each.
pub const MIX_LAYOUTS: [(SplitLayer, usize, u64); 6] = [
    (SplitLayer::Input, 2, 201),
    (SplitLayer::Conv1, 2, 202),
    (SplitLayer::Conv2, 2, 203),
    (SplitLayer::Input, 3, 204),
    (SplitLayer::Conv1, 3, 205),
    (SplitLayer::Conv2, 3, 206),
];
