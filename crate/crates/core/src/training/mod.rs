//! Adversarial training with previous-frame conditioning.

mod adam;
mod checkpoint;

pub use adam::{Adam, ADAM_EPS};
pub use checkpoint::{
    load_generator, load_train_state, resolve_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::dataset::hints::mix_seed;
use crate::dataset::SequenceSample;
use crate::error::{Error, Result};
use crate::image::{ImageTensor, InputMode};
use crate::losses::{
    adversarial_loss_d_graph, joint_generator_loss_graph, FeatureExtractor, LossBreakdown, LossWeights,
    SimpleExtractor, Vgg19Extractor,
};
use crate::model::discriminator::{Discriminator, DiscriminatorConfig};
use crate::model::generator::{Generator, GeneratorConfig, COLOR_CHANNELS};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const GENERATOR_SALT: u64 = 1;
const DISCRIMINATOR_SALT: u64 = 2;
const ORDER_SALT: u64 = 3;
/// Decay of the exponential moving averages kept in [`TrainState`].
pub const ROLLING_DECAY: f64 = 0.9;

/// Source of the frozen network behind the content and style terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractorConfig {
    /// Seeded random-weight stand-in with the standard layer names.
    Toy { seed: u64 },
    /// Pretrained VGG-19 weights in safetensors form.
    Vgg19 { path: PathBuf },
}

impl ExtractorConfig {
    pub fn load<T: Scalar>(&self) -> Result<Box<dyn FeatureExtractor<T>>> {
        Ok(match self {
            Self::Toy { seed } => Box::new(SimpleExtractor::seeded_toy(*seed)),
            Self::Vgg19 { path } => Box::new(Vgg19Extractor::load(path)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub mode: InputMode,
    pub weights: LossWeights,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub extractor: Option<ExtractorConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            lr_g: 2e-4,
            lr_d: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            max_steps: 1000,
            seed: 0,
            mode: InputMode::LineArt,
            weights: LossWeights::default(),
            checkpoint_every: 500,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            extractor: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch_size must be at least 1".into()));
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {lr}")));
            }
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParams(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        self.weights.validate()
    }

    /// Loads the feature extractor, failing when the objective needs one and
    /// none is configured.
    pub fn load_extractor<T: Scalar>(&self) -> Result<Box<dyn FeatureExtractor<T>>> {
        match &self.extractor {
            Some(e) => e.load(),
            None if self.weights.needs_extractor(self.mode) => Err(Error::Config(
                "content/style losses need a feature extractor: configure pretrained VGG-19 weights \
                 or the toy extractor"
                    .into(),
            )),
            // Both perceptual weights are zero, so the extractor output is never used.
            None => Ok(Box::new(SimpleExtractor::seeded_toy(0))),
        }
    }
}

/// Desk-scale recipe that overfits a 10-frame 32x32 scene within 200 steps:
/// a narrow generator (base 16, one residual block), a narrow discriminator
/// (base 8), a fast discriminator learning rate, and adversarial and style
/// weights scaled down to 0.1 and 100. Uses the toy extractor with seed 0.
pub fn toy_overfit_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        lr_g: 1e-3,
        lr_d: 3e-2,
        max_steps: 200,
        checkpoint_every: 0,
        weights: LossWeights {
            lambda_adv: 0.1,
            lambda_style: 100.0,
            ..LossWeights::default()
        },
        generator: GeneratorConfig {
            base_channels: 16,
            n_residual_blocks: 1,
        },
        discriminator: DiscriminatorConfig {
            base_channels: 8,
            ..DiscriminatorConfig::default()
        },
        extractor: Some(ExtractorConfig::Toy { seed: 0 }),
        ..TrainConfig::default()
    }
}

/// One line of the loss log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub d_loss: f64,
    pub g_adv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_cont: Option<f64>,
    pub g_style: f64,
    pub g_l1: f64,
    pub g_total: f64,
}

impl StepRecord {
    fn new(step: u64, d_loss: f64, b: &LossBreakdown) -> Self {
        Self { step, d_loss, g_adv: b.adv, g_cont: b.cont, g_style: b.style, g_l1: b.l1, g_total: b.total }
    }
}

/// Exponential moving averages of the logged losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollingLoss {
    pub d_loss: f64,
    pub g_adv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_cont: Option<f64>,
    pub g_style: f64,
    pub g_l1: f64,
    pub g_total: f64,
}

impl RollingLoss {
    fn update(prev: Option<Self>, r: &StepRecord) -> Self {
        let Some(p) = prev else {
            return Self {
                d_loss: r.d_loss,
                g_adv: r.g_adv,
                g_cont: r.g_cont,
                g_style: r.g_style,
                g_l1: r.g_l1,
                g_total: r.g_total,
            };
        };
        let ema = |a: f64, b: f64| ROLLING_DECAY * a + (1.0 - ROLLING_DECAY) * b;
        Self {
            d_loss: ema(p.d_loss, r.d_loss),
            g_adv: ema(p.g_adv, r.g_adv),
            g_cont: p.g_cont.zip(r.g_cont).map(|(a, b)| ema(a, b)),
            g_style: ema(p.g_style, r.g_style),
            g_l1: ema(p.g_l1, r.g_l1),
            g_total: ema(p.g_total, r.g_total),
        }
    }
}

/// Everything needed to continue training. Randomness is a pure function of
/// the configured seed and `step`, so no generator state is stored.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub step: u64,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
    pub rolling: Option<RollingLoss>,
    pub skipped_steps: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let generator = Generator::new(cfg.generator, mix_seed(cfg.seed, GENERATOR_SALT))?;
        let discriminator = Discriminator::new(cfg.discriminator, mix_seed(cfg.seed, DISCRIMINATOR_SALT))?;
        let opt_g = Adam::new(generator.params(), cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2);
        let opt_d = Adam::new(discriminator.params(), cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2);
        Ok(Self { step: 0, generator, discriminator, opt_g, opt_d, rolling: None, skipped_steps: 0 })
    }
}

/// Batched tensors of a list of samples.
struct Batch<T> {
    line_prev: Tensor<T>,
    gt_prev: Tensor<T>,
    line_curr: Tensor<T>,
    gt_curr: Tensor<T>,
    hint_curr: Tensor<T>,
    hint_prev: Tensor<T>,
    starts: Vec<bool>,
}

impl<T: Scalar> Batch<T> {
    fn new(samples: &[&SequenceSample<T>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        for s in samples {
            s.validate()?;
        }
        let stack = |f: fn(&SequenceSample<T>) -> &ImageTensor<T>| -> Result<Tensor<T>> {
            let items: Vec<Tensor<T>> = samples.iter().map(|s| f(s).to_tensor()).collect();
            Tensor::stack(&items.iter().collect::<Vec<_>>())
        };
        Ok(Self {
            line_prev: stack(|s| &s.line_prev)?,
            gt_prev: stack(|s| &s.gt_prev)?,
            line_curr: stack(|s| &s.line_curr)?,
            gt_curr: stack(|s| &s.gt_curr)?,
            hint_curr: stack(|s| &s.hint_curr)?,
            hint_prev: stack(|s| &s.hint_prev)?,
            starts: samples.iter().map(|s| s.is_sequence_start).collect(),
        })
    }
}

fn blank_like<T: Scalar>(n: usize, h: usize, w: usize) -> Tensor<T> {
    Tensor::full([n, COLOR_CHANNELS, h, w], -T::one())
}

/// Previous frames for a batch: blank for sequence starts, otherwise the
/// generator's prediction of frame `t - 1` from a blank previous frame.
fn prev_frames<T: Scalar>(gen: &Generator<T>, b: &Batch<T>) -> Result<Tensor<T>> {
    let [n, _, h, w] = b.gt_curr.shape();
    let mut out = blank_like(n, h, w);
    let live: Vec<usize> = (0..n).filter(|&i| !b.starts[i]).collect();
    if live.is_empty() {
        return Ok(out);
    }
    let pick = |t: &Tensor<T>| {
        let items: Vec<Tensor<T>> = live.iter().map(|&i| t.select(i)).collect();
        Tensor::stack(&items.iter().collect::<Vec<_>>())
    };
    let pred = gen.forward_batch(&pick(&b.line_prev)?, &pick(&b.hint_prev)?, &blank_like(live.len(), h, w))?;
    let item = pred.item_len();
    for (k, &i) in live.iter().enumerate() {
        out.data_mut()[i * item..(i + 1) * item].copy_from_slice(pred.item(k));
    }
    Ok(out)
}

/// The previous frame the generator is conditioned on for `sample`. The
/// result is a plain tensor, so no gradient reaches the generator through it.
pub fn prev_frame_for<T: Scalar>(sample: &SequenceSample<T>, gen: &Generator<T>) -> Result<ImageTensor<T>> {
    if sample.is_sequence_start {
        return crate::inference::blank_frame(sample.height(), sample.width());
    }
    let blank = crate::inference::blank_frame(sample.height(), sample.width())?;
    gen.forward(&sample.line_prev, &sample.hint_prev, &blank)
}

/// One discriminator update followed by one generator update.
///
/// On a non-finite loss the state is left exactly as it was and
/// [`Error::NonFiniteLoss`] is returned.
pub fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    samples: &[&SequenceSample<T>],
    cfg: &TrainConfig,
    fx: &dyn FeatureExtractor<T>,
) -> Result<StepRecord> {
    let b = Batch::new(samples)?;
    let step = state.step + 1;
    let spectral_before = state.discriminator.spectral_states().to_vec();
    state.discriminator.power_iterate();
    let restore_spectral = |d: &mut Discriminator<T>| d.spectral_states_mut().clone_from_slice(&spectral_before);

    let prev = match prev_frames(&state.generator, &b) {
        Ok(p) => p,
        Err(e) => {
            restore_spectral(&mut state.discriminator);
            return Err(e);
        }
    };

    // Generator forward, kept alive for the generator update.
    let mut gg = Graph::new();
    let gb = state.generator.params().bind(&mut gg, true);
    let line_prev = gg.constant(b.line_prev.clone());
    let line_curr = gg.constant(b.line_curr.clone());
    let hint = gg.constant(b.hint_curr.clone());
    let prev_g = gg.constant(prev.clone());
    let fake = state.generator.forward_graph(&mut gg, &gb, line_curr, hint, prev_g)?;

    // Discriminator update: real vs detached fake sequences.
    let d_loss;
    let d_grads = {
        let mut gd = Graph::new();
        let db = state.discriminator.params().bind(&mut gd, true);
        let lp = gd.constant(b.line_prev.clone());
        let lc = gd.constant(b.line_curr.clone());
        let gp = gd.constant(b.gt_prev.clone());
        let gc = gd.constant(b.gt_curr.clone());
        let pv = gd.constant(prev);
        let fk = gd.constant_shared(gg.shared(fake));
        let real = state.discriminator.forward_graph(&mut gd, &db, lp, gp, lc, gc)?;
        let fake_logits = state.discriminator.forward_graph(&mut gd, &db, lp, pv, lc, fk)?;
        let loss = adversarial_loss_d_graph(&mut gd, real, fake_logits)?;
        d_loss = gd.value(loss).to_scalar().as_f64();
        if !d_loss.is_finite() {
            restore_spectral(&mut state.discriminator);
            return Err(Error::NonFiniteLoss { step, detail: format!("discriminator loss {d_loss}") });
        }
        let mut grads = gd.backward(loss);
        state.discriminator.params().gradients(&db, &mut grads)
    };
    let d_params_before = state.discriminator.params().clone();
    let opt_d_before = state.opt_d.clone();
    state.opt_d.step(state.discriminator.params_mut(), &d_grads);

    // Generator update against the refreshed discriminator.
    let db = state.discriminator.params().bind(&mut gg, false);
    let logits = state.discriminator.forward_graph(&mut gg, &db, line_prev, prev_g, line_curr, fake)?;
    let gt = gg.constant(b.gt_curr.clone());
    let terms = joint_generator_loss_graph(&mut gg, fake, gt, logits, &cfg.weights, fx, cfg.mode)?;
    let breakdown = terms.breakdown(&gg);
    if !breakdown.is_finite() {
        *state.discriminator.params_mut() = d_params_before;
        state.opt_d = opt_d_before;
        restore_spectral(&mut state.discriminator);
        return Err(Error::NonFiniteLoss { step, detail: format!("generator loss {breakdown:?}") });
    }
    let mut grads = gg.backward(terms.total);
    let g_grads = state.generator.params().gradients(&gb, &mut grads);
    drop(grads);
    drop(gg);
    state.opt_g.step(state.generator.params_mut(), &g_grads);

    state.step = step;
    let record = StepRecord::new(step, d_loss, &breakdown);
    state.rolling = Some(RollingLoss::update(state.rolling, &record));
    Ok(record)
}

/// Sample order: a fresh seeded permutation per pass over the data.
/// Position `p` of the stream is `perm[p / n][p % n]`.
#[derive(Clone, Debug)]
pub struct DataOrder {
    seed: u64,
    n: usize,
    cached: Option<(u64, Vec<usize>)>,
}

impl DataOrder {
    pub fn new(seed: u64, n: usize) -> Self {
        Self { seed: mix_seed(seed, ORDER_SALT), n, cached: None }
    }

    pub fn at(&mut self, position: u64) -> usize {
        let epoch = position / self.n as u64;
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(self.seed, epoch)));
            self.cached = Some((epoch, perm));
        }
        self.cached.as_ref().unwrap().1[(position % self.n as u64) as usize]
    }

    /// Sample indices of the batch for 0-based step `step`.
    pub fn batch(&mut self, step: u64, batch_size: usize) -> Vec<usize> {
        (0..batch_size as u64).map(|j| self.at(step * batch_size as u64 + j)).collect()
    }
}

/// Where the loop writes checkpoints and the loss log.
#[derive(Default)]
pub struct LoopOutput<'a> {
    pub checkpoint_dir: Option<&'a Path>,
    pub log: Option<&'a mut dyn Write>,
}

/// Runs [`train_step`] until `cfg.max_steps`, cycling through `samples`.
///
/// Non-finite steps are skipped (the step counter still advances). A
/// checkpoint is written every `cfg.checkpoint_every` steps and at the end.
pub fn train_loop<T: Scalar>(
    mut state: TrainState<T>,
    samples: &[SequenceSample<T>],
    cfg: &TrainConfig,
    fx: &dyn FeatureExtractor<T>,
    mut out: LoopOutput<'_>,
) -> Result<(TrainState<T>, Vec<StepRecord>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("training needs at least one sample".into()))?;
    let resolution = (first.height(), first.width());
    let mut order = DataOrder::new(cfg.seed, samples.len());
    let mut records = Vec::new();
    while state.step < cfg.max_steps {
        let batch: Vec<&SequenceSample<T>> =
            order.batch(state.step, cfg.batch_size).into_iter().map(|i| &samples[i]).collect();
        match train_step(&mut state, &batch, cfg, fx) {
            Ok(r) => {
                if let Some(log) = out.log.as_deref_mut() {
                    serde_json::to_writer(&mut *log, &r)?;
                    writeln!(log).and_then(|_| log.flush()).map_err(|e| Error::io("loss log", e))?;
                }
                records.push(r);
            }
            Err(Error::NonFiniteLoss { step, detail }) => {
                log::warn!("skipping step {step}: {detail}");
                state.step += 1;
                state.skipped_steps += 1;
            }
            Err(e) => return Err(e),
        }
        if let Some(dir) = out.checkpoint_dir {
            if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < cfg.max_steps {
                save_checkpoint(dir, &state, cfg, resolution)?;
            }
        }
    }
    if let Some(dir) = out.checkpoint_dir {
        save_checkpoint(dir, &state, cfg, resolution)?;
    }
    Ok((state, records))
}
