//! Differentiable layer primitives with hand-written adjoints.

mod activation;
mod conv;
pub(crate) mod gemm;
mod linear;
mod loss;
mod pool;
mod sgd;

pub use activation::{relu_backward, relu_forward};
pub use conv::{conv2d_backward, conv2d_backward_with, conv2d_forward, ConvGrads, ConvParams};
pub use linear::{linear_backward, linear_backward_with, linear_forward, LinearGrads, LinearParams};
pub use loss::{softmax_xent_soft, TARGET_SUM_TOL};
pub(crate) use loss::check_distribution;
pub use pool::{maxpool2_backward, maxpool2_forward, PoolIndices};
pub use sgd::{lr_at_epoch, sgd_update, LR_DECAYED, LR_DROP_EPOCH, LR_INITIAL};
