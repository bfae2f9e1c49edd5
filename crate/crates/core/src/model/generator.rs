//! Residual encoder/decoder generator conditioned on line art, colour hints
//! and the previous colour frame.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamId, ParamStore};
use super::{check_same_hw, INIT_STD, NORM_EPS};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

pub const LINE_CHANNELS: usize = 1;
pub const HINT_CHANNELS: usize = 3;
pub const COLOR_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub n_residual_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            n_residual_blocks: 8,
        }
    }
}

impl GeneratorConfig {
    /// Stride-2 stages on each side of the residual trunk.
    pub const N_DOWN: usize = 2;
    pub const N_UP: usize = 2;

    pub fn in_channels(&self) -> usize {
        LINE_CHANNELS + HINT_CHANNELS + COLOR_CHANNELS
    }

    pub fn out_channels(&self) -> usize {
        COLOR_CHANNELS
    }

    /// Channel width of the residual trunk.
    pub fn trunk_channels(&self) -> usize {
        self.base_channels << Self::N_DOWN
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvIds {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct NormIds {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct ResidualIds {
    conv1: ConvIds,
    norm1: NormIds,
    conv2: ConvIds,
    norm2: NormIds,
}

/// Stage counts of a built generator, for architecture audits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageCounts {
    pub downsampling: usize,
    pub residual: usize,
    pub upsampling: usize,
}

#[derive(Clone, Debug)]
pub struct Generator<T> {
    cfg: GeneratorConfig,
    params: ParamStore<T>,
    stem: (ConvIds, NormIds),
    down: Vec<(ConvIds, NormIds)>,
    blocks: Vec<ResidualIds>,
    up: Vec<(ConvIds, NormIds)>,
    head: ConvIds,
}

fn add_conv<T: Scalar>(
    p: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    weight_shape: [usize; 4],
    out_channels: usize,
) -> ConvIds {
    ConvIds {
        weight: p.insert(format!("{name}.weight"), Tensor::randn(weight_shape, INIT_STD, rng)),
        bias: p.insert(format!("{name}.bias"), Tensor::zeros([1, out_channels, 1, 1])),
    }
}

fn add_norm<T: Scalar>(p: &mut ParamStore<T>, name: &str, channels: usize) -> NormIds {
    NormIds {
        gain: p.insert(format!("{name}.gain"), Tensor::full([1, channels, 1, 1], T::one())),
        bias: p.insert(format!("{name}.bias"), Tensor::zeros([1, channels, 1, 1])),
    }
}

impl<T: Scalar> Generator<T> {
    /// Gaussian-initialized weights (std 0.02), zero biases, unit norm gains.
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Result<Self> {
        if cfg.base_channels == 0 {
            return Err(Error::InvalidParams("base_channels must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let b = cfg.base_channels;

        let stem = (
            add_conv(&mut p, &mut rng, "stem", [b, cfg.in_channels(), 7, 7], b),
            add_norm(&mut p, "stem.norm", b),
        );
        let mut down = Vec::new();
        let mut ch = b;
        for i in 0..GeneratorConfig::N_DOWN {
            let name = format!("down.{i}");
            down.push((
                add_conv(&mut p, &mut rng, &name, [ch * 2, ch, 3, 3], ch * 2),
                add_norm(&mut p, &format!("{name}.norm"), ch * 2),
            ));
            ch *= 2;
        }
        let blocks = (0..cfg.n_residual_blocks)
            .map(|i| {
                let name = format!("res.{i}");
                ResidualIds {
                    conv1: add_conv(&mut p, &mut rng, &format!("{name}.conv1"), [ch, ch, 3, 3], ch),
                    norm1: add_norm(&mut p, &format!("{name}.norm1"), ch),
                    conv2: add_conv(&mut p, &mut rng, &format!("{name}.conv2"), [ch, ch, 3, 3], ch),
                    norm2: add_norm(&mut p, &format!("{name}.norm2"), ch),
                }
            })
            .collect();
        let mut up = Vec::new();
        for i in 0..GeneratorConfig::N_UP {
            let name = format!("up.{i}");
            // Transposed-conv weights are [c_in, c_out, k, k].
            up.push((
                add_conv(&mut p, &mut rng, &name, [ch, ch / 2, 3, 3], ch / 2),
                add_norm(&mut p, &format!("{name}.norm"), ch / 2),
            ));
            ch /= 2;
        }
        let head = add_conv(&mut p, &mut rng, "head", [cfg.out_channels(), ch, 7, 7], cfg.out_channels());
        Ok(Self {
            cfg,
            params: p,
            stem,
            down,
            blocks,
            up,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn stage_counts(&self) -> StageCounts {
        StageCounts {
            downsampling: self.down.len(),
            residual: self.blocks.len(),
            upsampling: self.up.len(),
        }
    }

    fn conv(g: &mut Graph<T>, b: &Bound, x: Var, c: ConvIds, stride: usize, reflect: usize) -> Var {
        let x = if reflect > 0 { g.pad_reflect(x, reflect) } else { x };
        g.conv2d(x, b.var(c.weight), Some(b.var(c.bias)), stride, 0)
    }

    fn norm(g: &mut Graph<T>, b: &Bound, x: Var, n: NormIds) -> Var {
        g.instance_norm(x, b.var(n.gain), b.var(n.bias), lit(NORM_EPS))
    }

    /// Forward on graph variables: `line` `[n,1,h,w]`, `hint` and `prev`
    /// `[n,3,h,w]`. Returns `[n,3,h,w]` in `(-1, 1)`.
    pub fn forward_graph(&self, g: &mut Graph<T>, b: &Bound, line: Var, hint: Var, prev: Var) -> Result<Var> {
        let shapes = [g.value(line).shape(), g.value(hint).shape(), g.value(prev).shape()];
        for (s, c, what) in [
            (shapes[0], LINE_CHANNELS, "line"),
            (shapes[1], HINT_CHANNELS, "hint"),
            (shapes[2], COLOR_CHANNELS, "prev"),
        ] {
            if s[1] != c {
                return Err(Error::InvalidInput(format!("{what} has {} channels, expected {c}", s[1])));
            }
            if s[0] != shapes[0][0] || s[2..] != shapes[0][2..] {
                return Err(Error::ShapeMismatch(format!("generator inputs {shapes:?}")));
            }
        }
        let (h, w) = (shapes[0][2], shapes[0][3]);
        let factor = 1 << GeneratorConfig::N_DOWN;
        if h % factor != 0 || w % factor != 0 || h < 2 * factor || w < 2 * factor {
            return Err(Error::InvalidInput(format!(
                "generator input {h}x{w} must be divisible by {factor}"
            )));
        }

        let x = g.concat_channels(&[line, hint, prev]);
        let x = Self::conv(g, b, x, self.stem.0, 1, 3);
        let x = Self::norm(g, b, x, self.stem.1);
        let mut x = g.relu(x);
        for &(c, n) in &self.down {
            let y = Self::conv(g, b, x, c, 2, 1);
            let y = Self::norm(g, b, y, n);
            x = g.relu(y);
        }
        for r in &self.blocks {
            let y = Self::conv(g, b, x, r.conv1, 1, 1);
            let y = Self::norm(g, b, y, r.norm1);
            let y = g.relu(y);
            let y = Self::conv(g, b, y, r.conv2, 1, 1);
            let y = Self::norm(g, b, y, r.norm2);
            x = g.add(x, y);
        }
        for &(c, n) in &self.up {
            let y = g.conv_transpose2d(x, b.var(c.weight), Some(b.var(c.bias)), 2, 1, 1);
            let y = Self::norm(g, b, y, n);
            x = g.relu(y);
        }
        let x = Self::conv(g, b, x, self.head, 1, 3);
        Ok(g.tanh(x))
    }

    /// Gradient-free batched forward.
    pub fn forward_batch(&self, line: &Tensor<T>, hint: &Tensor<T>, prev: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::no_grad();
        let b = self.params.bind(&mut g, false);
        let l = g.constant(line.clone());
        let h = g.constant(hint.clone());
        let p = g.constant(prev.clone());
        let out = self.forward_graph(&mut g, &b, l, h, p)?;
        Ok(Arc::try_unwrap(g.shared(out)).unwrap_or_else(|a| (*a).clone()))
    }

    /// `F_t = G(line, hint, prev)` for a single frame.
    pub fn forward(&self, line: &ImageTensor<T>, hint: &ImageTensor<T>, prev: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        check_same_hw(&[line, hint, prev])?;
        let out = self.forward_batch(&line.to_tensor(), &hint.to_tensor(), &prev.to_tensor())?;
        ImageTensor::from_tensor(&out, 0)
    }
}
