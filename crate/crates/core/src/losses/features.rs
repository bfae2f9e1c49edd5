//! Frozen feature extractors for the perceptual (content and style) terms.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::SafeTensors;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::params::view_to_tensor;
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

/// Activation layers compared by the perceptual losses.
pub const STANDARD_LAYERS: [&str; 5] = ["relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1"];

/// A deterministic, frozen network exposing named activation layers.
///
/// Inputs are `[n, 3, h, w]` images in model range; any re-normalization the
/// network expects happens inside the implementation.
pub trait FeatureExtractor<T: Scalar>: Send + Sync {
    /// Layers the losses average over.
    fn declared_layers(&self) -> Vec<String>;

    /// Activations on `g`. Gradients flow to `image` but never into the
    /// extractor's own weights.
    fn extract(&self, g: &mut Graph<T>, image: Var) -> Result<Vec<(String, Var)>>;
}

/// One conv + ReLU stage, optionally preceded by 2x2 pooling.
#[derive(Clone, Debug)]
pub struct ConvStage<T> {
    pub name: String,
    pub weight: Arc<Tensor<T>>,
    pub bias: Arc<Tensor<T>>,
    pub pool_before: bool,
    pub pad: usize,
}

/// Small conv/ReLU/average-pool stack with fixed weights.
///
/// [`SimpleExtractor::seeded_toy`] has the five standard layer names, so
/// the full loss stack runs without pretrained weights.
#[derive(Clone, Debug)]
pub struct SimpleExtractor<T> {
    stages: Vec<ConvStage<T>>,
}

impl<T: Scalar> SimpleExtractor<T> {
    pub fn new(stages: Vec<ConvStage<T>>) -> Self {
        Self { stages }
    }

    /// Five 3x3 stages of widths 4, 8, 8, 16, 16 with Kaiming-style
    /// Gaussian weights drawn from `seed`; pooling between stages.
    pub fn seeded_toy(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = [4usize, 8, 8, 16, 16];
        let mut c_in = 3;
        let stages = STANDARD_LAYERS
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (name, c_out))| {
                let std = (2.0 / (9 * c_in) as f64).sqrt();
                let weight = Tensor::randn([c_out, c_in, 3, 3], std, &mut rng);
                let bias = Tensor::uniform([1, c_out, 1, 1], -0.05, 0.05, &mut rng);
                c_in = c_out;
                ConvStage {
                    name: name.to_string(),
                    weight: Arc::new(weight),
                    bias: Arc::new(bias),
                    pool_before: i > 0,
                    pad: 1,
                }
            })
            .collect();
        Self { stages }
    }
}

impl<T: Scalar> FeatureExtractor<T> for SimpleExtractor<T> {
    fn declared_layers(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.name.clone()).collect()
    }

    fn extract(&self, g: &mut Graph<T>, image: Var) -> Result<Vec<(String, Var)>> {
        let mut x = image;
        let mut out = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let [_, _, h, w] = g.value(x).shape();
            if s.pool_before && h >= 2 && w >= 2 {
                x = g.avg_pool2(x);
            }
            let wv = g.constant_shared(s.weight.clone());
            let bv = g.constant_shared(s.bias.clone());
            let y = g.conv2d(x, wv, Some(bv), 1, s.pad);
            x = g.relu(y);
            out.push((s.name.clone(), x));
        }
        Ok(out)
    }
}

/// Torchvision VGG-19 `features` indices of the convolutions up to
/// `relu5_1`, with a max-pool before indices 5, 10, 19 and 28.
const VGG19_CONVS: [usize; 13] = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28];
const VGG19_TAPS: [(usize, &str); 5] = [(0, "relu1_1"), (5, "relu2_1"), (10, "relu3_1"), (19, "relu4_1"), (28, "relu5_1")];
const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Pretrained VGG-19 truncated at `relu5_1`, loaded from a safetensors file
/// with torchvision names (`features.{i}.weight`, `features.{i}.bias`).
#[derive(Clone, Debug)]
pub struct Vgg19Extractor<T> {
    convs: Vec<(usize, Arc<Tensor<T>>, Arc<Tensor<T>>)>,
}

impl<T: Scalar> Vgg19Extractor<T> {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!(
                "pretrained VGG-19 weights not found at {}",
                path.display()
            )));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_safetensors(&bytes)
    }

    pub fn from_safetensors(bytes: &[u8]) -> Result<Self> {
        let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Format(e.to_string()))?;
        let mut convs = Vec::new();
        let mut c_in = 3;
        for idx in VGG19_CONVS {
            let get = |suffix: &str| -> Result<Tensor<T>> {
                let name = format!("features.{idx}.{suffix}");
                let view = st
                    .tensor(&name)
                    .map_err(|_| Error::Config(format!("VGG-19 weights lack {name}")))?;
                view_to_tensor(&view)
            };
            let w = get("weight")?;
            let [c_out, wc_in, k, _] = w.shape();
            if wc_in != c_in || k != 3 {
                return Err(Error::Config(format!(
                    "features.{idx}.weight has shape {:?}, expected [_, {c_in}, 3, 3]",
                    w.shape()
                )));
            }
            let b = get("bias")?.reshape([1, c_out, 1, 1])?;
            convs.push((idx, Arc::new(w), Arc::new(b)));
            c_in = c_out;
        }
        Ok(Self { convs })
    }
}

impl<T: Scalar> FeatureExtractor<T> for Vgg19Extractor<T> {
    fn declared_layers(&self) -> Vec<String> {
        STANDARD_LAYERS.iter().map(|s| s.to_string()).collect()
    }

    fn extract(&self, g: &mut Graph<T>, image: Var) -> Result<Vec<(String, Var)>> {
        // model range -> [0, 1] -> ImageNet statistics
        let scale: Vec<T> = IMAGENET_STD.iter().map(|s| lit(0.5 / s)).collect();
        let shift: Vec<T> = IMAGENET_MEAN
            .iter()
            .zip(IMAGENET_STD)
            .map(|(m, s)| lit((0.5 - m) / s))
            .collect();
        let mut x = g.channel_affine(image, &scale, &shift);
        let mut out = Vec::new();
        for (idx, w, b) in &self.convs {
            if matches!(idx, 5 | 10 | 19 | 28) {
                x = g.max_pool2(x);
            }
            let wv = g.constant_shared(w.clone());
            let bv = g.constant_shared(b.clone());
            let y = g.conv2d(x, wv, Some(bv), 1, 1);
            x = g.relu(y);
            if let Some((_, name)) = VGG19_TAPS.iter().find(|(i, _)| i == idx) {
                out.push((name.to_string(), x));
            }
        }
        Ok(out)
    }
}
