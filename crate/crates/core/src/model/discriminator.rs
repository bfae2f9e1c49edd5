//! Patch discriminator over (line art, colour) frame pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::{COLOR_CHANNELS, LINE_CHANNELS};
use super::params::{Bound, ParamId, ParamStore};
use super::spectral::{SpectralState, SIGMA_FLOOR};
use super::{INIT_STD, NORM_EPS};
use crate::autograd::{conv2d_out_size, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;
const KERNEL: usize = 4;
const PAD: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub n_layers: usize,
    pub base_channels: usize,
    pub use_spectral_norm: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            n_layers: 3,
            base_channels: 64,
            use_spectral_norm: true,
        }
    }
}

/// One convolution of the discriminator recipe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub instance_norm: bool,
    pub leaky_relu: bool,
}

impl DiscriminatorConfig {
    /// Line + colour for two consecutive frames.
    pub fn in_channels(&self) -> usize {
        2 * (LINE_CHANNELS + COLOR_CHANNELS)
    }

    /// `n_layers` stride-2 convs (width doubling, capped at 8x), one
    /// stride-1 conv, and a stride-1 conv to a single logit map.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let b = self.base_channels;
        let mut specs = vec![LayerSpec {
            in_channels: self.in_channels(),
            out_channels: b,
            kernel: KERNEL,
            stride: 2,
            pad: PAD,
            instance_norm: false,
            leaky_relu: true,
        }];
        let mut mult = 1;
        for n in 1..=self.n_layers {
            let prev = mult;
            mult = (1 << n).min(8);
            specs.push(LayerSpec {
                in_channels: b * prev,
                out_channels: b * mult,
                kernel: KERNEL,
                stride: if n == self.n_layers { 1 } else { 2 },
                pad: PAD,
                instance_norm: true,
                leaky_relu: true,
            });
        }
        specs.push(LayerSpec {
            in_channels: b * mult,
            out_channels: 1,
            kernel: KERNEL,
            stride: 1,
            pad: PAD,
            instance_norm: false,
            leaky_relu: false,
        });
        specs
    }

    /// Spatial size of the logit grid for an `h x w` input.
    pub fn logits_size(&self, h: usize, w: usize) -> (usize, usize) {
        self.layers().iter().fold((h, w), |(h, w), l| {
            (
                conv2d_out_size(h, l.kernel, l.stride, l.pad),
                conv2d_out_size(w, l.kernel, l.stride, l.pad),
            )
        })
    }
}

/// Input pixels seen by one output unit of a stack of `(kernel, stride)`
/// layers: `r <- r + (k - 1) * prod(previous strides)` starting from 1.
pub fn receptive_field_of(layers: &[(usize, usize)]) -> usize {
    let mut r = 1;
    let mut jump = 1;
    for &(k, s) in layers {
        r += (k - 1) * jump;
        jump *= s;
    }
    r
}

pub fn receptive_field(cfg: &DiscriminatorConfig) -> usize {
    let ks: Vec<(usize, usize)> = cfg.layers().iter().map(|l| (l.kernel, l.stride)).collect();
    receptive_field_of(&ks)
}

#[derive(Clone, Copy, Debug)]
struct LayerIds {
    weight: ParamId,
    bias: ParamId,
    norm: Option<(ParamId, ParamId)>,
}

#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    cfg: DiscriminatorConfig,
    specs: Vec<LayerSpec>,
    params: ParamStore<T>,
    layers: Vec<LayerIds>,
    spectral: Vec<SpectralState<T>>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(cfg: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if cfg.base_channels == 0 || cfg.n_layers == 0 {
            return Err(Error::InvalidParams("discriminator needs layers and channels".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = cfg.layers();
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let mut spectral = Vec::new();
        for (i, s) in specs.iter().enumerate() {
            let weight = params.insert(
                format!("conv.{i}.weight"),
                Tensor::randn([s.out_channels, s.in_channels, s.kernel, s.kernel], INIT_STD, &mut rng),
            );
            let bias = params.insert(format!("conv.{i}.bias"), Tensor::zeros([1, s.out_channels, 1, 1]));
            let norm = s.instance_norm.then(|| {
                (
                    params.insert(format!("conv.{i}.norm.gain"), Tensor::full([1, s.out_channels, 1, 1], T::one())),
                    params.insert(format!("conv.{i}.norm.bias"), Tensor::zeros([1, s.out_channels, 1, 1])),
                )
            });
            if cfg.use_spectral_norm {
                spectral.push(SpectralState::new(params.get(weight), &mut rng));
            }
            layers.push(LayerIds { weight, bias, norm });
        }
        Ok(Self {
            cfg,
            specs,
            params,
            layers,
            spectral,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn spectral_states(&self) -> &[SpectralState<T>] {
        &self.spectral
    }

    pub fn spectral_states_mut(&mut self) -> &mut [SpectralState<T>] {
        &mut self.spectral
    }

    /// One power-iteration step for every spectrally normalized weight.
    pub fn power_iterate(&mut self) {
        for (st, l) in self.spectral.iter_mut().zip(&self.layers) {
            st.step(self.params.get(l.weight));
        }
    }

    /// Logits `[n, 1, h', w']` for the channel-concatenated tuple
    /// `(line_prev, color_prev, line_curr, color_curr)`.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        line_prev: Var,
        color_prev: Var,
        line_curr: Var,
        color_curr: Var,
    ) -> Result<Var> {
        let parts = [line_prev, color_prev, line_curr, color_curr];
        let expect = [LINE_CHANNELS, COLOR_CHANNELS, LINE_CHANNELS, COLOR_CHANNELS];
        let first = g.value(line_prev).shape();
        for (&p, &c) in parts.iter().zip(&expect) {
            let s = g.value(p).shape();
            if s[1] != c || s[0] != first[0] || s[2..] != first[2..] {
                return Err(Error::ShapeMismatch(format!(
                    "discriminator input {s:?} (expected {c} channels at {}x{})",
                    first[2], first[3]
                )));
            }
        }
        let min_side = self.min_input_side();
        if first[2] < min_side || first[3] < min_side {
            return Err(Error::InvalidInput(format!(
                "discriminator input {}x{} smaller than {min_side}",
                first[2], first[3]
            )));
        }
        let mut x = g.concat_channels(&parts);
        for (i, (s, ids)) in self.specs.iter().zip(&self.layers).enumerate() {
            let mut w = b.var(ids.weight);
            if self.cfg.use_spectral_norm {
                let st = &self.spectral[i];
                w = g.spectral_scale(w, &st.u, &st.v, lit(SIGMA_FLOOR));
            }
            x = g.conv2d(x, w, Some(b.var(ids.bias)), s.stride, s.pad);
            if let Some((gain, bias)) = ids.norm {
                x = g.instance_norm(x, b.var(gain), b.var(bias), lit(NORM_EPS));
            }
            if s.leaky_relu {
                x = g.leaky_relu(x, lit(LEAKY_SLOPE));
            }
        }
        Ok(x)
    }

    /// Gradient-free forward on batched tensors.
    pub fn forward_batch(
        &self,
        line_prev: &Tensor<T>,
        color_prev: &Tensor<T>,
        line_curr: &Tensor<T>,
        color_curr: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let mut g = Graph::no_grad();
        let b = self.params.bind(&mut g, false);
        let vars = [line_prev, color_prev, line_curr, color_curr].map(|t| g.constant(t.clone()));
        let out = self.forward_graph(&mut g, &b, vars[0], vars[1], vars[2], vars[3])?;
        Ok(g.value(out).clone())
    }

    /// Smallest side for which every layer still has a valid output.
    pub fn min_input_side(&self) -> usize {
        (1..=4096)
            .find(|&n| {
                let mut s = n;
                self.specs.iter().all(|l| {
                    if s + 2 * l.pad < l.kernel {
                        return false;
                    }
                    s = conv2d_out_size(s, l.kernel, l.stride, l.pad);
                    // Instance norm needs two positions.
                    !(l.instance_norm && s * s < 2)
                })
            })
            .unwrap_or(usize::MAX)
    }
}
