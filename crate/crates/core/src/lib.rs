//! Hidden-layer feature-map mixup for a small CNN.
//!
//! A weight-shared stem maps two or three images to feature maps, the maps
//! and their teacher vectors are mixed with Beta/Dirichlet weights, and the
//! trunk is trained on the mixture. Mixing at the input recovers classic
//! mixup. Everything runs on the CPU in double precision with hand-written
//! gradients.

pub mod data;
pub mod error;
pub mod harness;
pub mod mix;
pub mod net;
pub mod ops;
pub mod sampler;
pub mod tensor;

pub use error::{Error, Result};
pub use mix::{MixSpec, SplitLayer};
pub use net::ModelParams;
pub use sampler::{MixDraw, Rng};
pub use tensor::{Shape, Tensor};
