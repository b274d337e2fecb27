//! Plain SGD with L2 weight decay and the step learning-rate schedule.

/// Learning rate for the first `LR_DROP_EPOCH` epochs.
pub const LR_INITIAL: f64 = 0.01;
/// Learning rate after the single ×0.1 drop.
pub const LR_DECAYED: f64 = 0.001;
/// Last epoch (1-based) trained at [`LR_INITIAL`].
pub const LR_DROP_EPOCH: usize = 100;

/// `w ← w − lr·(g + weight_decay·w)`, elementwise.
pub fn sgd_update(weights: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
    assert_eq!(weights.len(), grads.len(), "sgd_update: length mismatch");
    for (w, g) in weights.iter_mut().zip(grads) {
        *w -= lr * (g + weight_decay * *w);
    }
}

/// Step schedule: 0.01 through epoch 100, 0.001 afterwards. `epoch` is 1-based.
pub fn lr_at_epoch(epoch: usize) -> f64 {
    if epoch <= LR_DROP_EPOCH {
        LR_INITIAL
    } else {
        LR_DECAYED
    }
}
