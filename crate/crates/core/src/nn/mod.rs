//! A small CPU convolutional network with hand-written backward passes.

pub mod encoder;
pub mod float;
pub mod layers;
pub mod mlp;
pub mod optim;
pub mod tensor;

pub use encoder::{Encoder, EncoderConfig, ForwardCache, StageConfig};
pub use float::Float;
pub use optim::{Adam, LrSchedule, Sgd};
pub use tensor::{ParamSet, Tensor};
