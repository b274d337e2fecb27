//! The reference CNN, split at the mix point into stem and trunk.

mod checkpoint;
mod params;
mod split;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use params::{
    image_shape, param_layout, LayerGrad, ModelGrads, ModelParams, CONV1_CHANNELS, CONV2_CHANNELS,
    FLAT_FEATURES, HIDDEN_UNITS, IMAGE_CHANNELS, IMAGE_SIZE, KERNEL, NUM_CLASSES,
};
pub use split::{
    argmax_rows, forward, mixed_loss_grads, plain_loss_grads, predict, stem_backward, stem_forward,
    stem_output_shape, train_step_mixed, train_step_plain, trunk_backward, trunk_forward,
    ActCache, ActivationPattern,
};

use crate::sampler::Rng;

/// He-initialized model drawn from `rng`.
pub fn init_model(rng: &mut Rng) -> ModelParams {
    ModelParams::init(rng)
}
