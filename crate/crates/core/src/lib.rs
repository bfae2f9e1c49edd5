pub mod autograd;
pub mod dataset;
pub mod error;
pub mod image;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default precision used by the CLI and service.
pub type Real = f32;
pub type Image = image::ImageTensor<Real>;
pub type Sample = dataset::SequenceSample<Real>;
pub type Gen = model::Generator<Real>;
pub type Disc = model::Discriminator<Real>;
pub type State = training::TrainState<Real>;
pub type Tensor32 = tensor::Tensor<Real>;
