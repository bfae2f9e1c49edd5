//! Generator and discriminator networks.

pub mod discriminator;
pub mod generator;
pub mod params;
pub mod spectral;

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

pub use discriminator::{receptive_field, receptive_field_of, Discriminator, DiscriminatorConfig, LayerSpec};
pub use generator::{Generator, GeneratorConfig, StageCounts};
pub use params::{Bound, ParamId, ParamStore};
pub use spectral::{spectral_normalize, SpectralState};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;
/// Variance floor inside instance normalization.
pub const NORM_EPS: f64 = 1e-5;

pub(crate) fn check_same_hw<T: Scalar>(imgs: &[&ImageTensor<T>]) -> Result<()> {
    let first = imgs[0];
    if imgs.iter().any(|i| !i.same_size(first)) {
        let sizes: Vec<_> = imgs.iter().map(|i| (i.height(), i.width())).collect();
        return Err(Error::ShapeMismatch(format!("inputs differ in size: {sizes:?}")));
    }
    Ok(())
}

/// Instance normalization of a `[n, c, h, w]` feature map with per-channel
/// affine gain and bias.
pub fn instance_normalize<T: Scalar>(features: &Tensor<T>, gain: &[T], bias: &[T]) -> Result<Tensor<T>> {
    let [_, c, h, w] = features.shape();
    if h * w < 2 {
        return Err(Error::InvalidInput(format!(
            "instance normalization needs at least 2 positions, got {h}x{w}"
        )));
    }
    if gain.len() != c || bias.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "{c} channels but {} gains and {} biases",
            gain.len(),
            bias.len()
        )));
    }
    let mut g = Graph::no_grad();
    let x = g.constant(features.clone());
    let gv = g.constant(Tensor::from_vec([1, c, 1, 1], gain.to_vec())?);
    let bv = g.constant(Tensor::from_vec([1, c, 1, 1], bias.to_vec())?);
    let y = g.instance_norm(x, gv, bv, lit(NORM_EPS));
    Ok(g.value(y).clone())
}
