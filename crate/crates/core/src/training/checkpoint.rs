//! On-disk checkpoints: one directory per save holding safetensors weights
//! and a JSON sidecar, plus a `LATEST` pointer next to them.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Adam, RollingLoss, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::image::InputMode;
use crate::model::discriminator::{Discriminator, DiscriminatorConfig};
use crate::model::generator::{Generator, GeneratorConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: u32 = 1;
const META: &str = "meta.json";
const GENERATOR: &str = "generator.safetensors";
const DISCRIMINATOR: &str = "discriminator.safetensors";
const OPTIMIZER: &str = "optimizer.safetensors";
const LATEST: &str = "LATEST";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: u32,
    pub step: u64,
    pub height: usize,
    pub width: usize,
    pub mode: InputMode,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub rolling: Option<RollingLoss>,
    pub skipped_steps: u64,
    pub opt_g_steps: u64,
    pub opt_d_steps: u64,
}

impl CheckpointMeta {
    /// Errors unless frames of `height x width` match the trained resolution.
    pub fn check_resolution(&self, height: usize, width: usize) -> Result<()> {
        if (height, width) != (self.height, self.width) {
            return Err(Error::Config(format!(
                "checkpoint was trained at {}x{} but the data is {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn spectral_tensors<T: Scalar>(d: &Discriminator<T>) -> Vec<(String, Tensor<T>)> {
    d.spectral_states()
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            [("u", &s.u), ("v", &s.v)].map(|(k, x)| {
                (format!("spectral.{i}.{k}"), Tensor::from_vec([1, 1, 1, x.len()], x.clone()).unwrap())
            })
        })
        .collect()
}

/// Writes `root/step_NNNNNNNN/` and points `root/LATEST` at it. Both become
/// visible only once complete.
pub fn save_checkpoint<T: Scalar>(
    root: &Path,
    state: &TrainState<T>,
    cfg: &TrainConfig,
    resolution: (usize, usize),
) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let name = format!("step_{:08}", state.step);
    let tmp = root.join(format!(".{name}.tmp"));
    let dest = root.join(&name);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT,
        step: state.step,
        height: resolution.0,
        width: resolution.1,
        mode: cfg.mode,
        generator: *state.generator.config(),
        discriminator: *state.discriminator.config(),
        train: cfg.clone(),
        rolling: state.rolling,
        skipped_steps: state.skipped_steps,
        opt_g_steps: state.opt_g.t,
        opt_d_steps: state.opt_d.t,
    };
    write(&tmp.join(META), &serde_json::to_vec_pretty(&meta)?)?;
    write(&tmp.join(GENERATOR), &state.generator.params().to_safetensors(&[])?)?;
    let d = &state.discriminator;
    write(&tmp.join(DISCRIMINATOR), &d.params().to_safetensors(&spectral_tensors(d))?)?;
    let mut moments = state.opt_g.named_moments(state.generator.params(), "generator");
    moments.extend(state.opt_d.named_moments(d.params(), "discriminator"));
    // An empty parameter store still needs a valid file.
    write(&tmp.join(OPTIMIZER), &crate::model::params::ParamStore::<T>::new().to_safetensors(&moments)?)?;

    if dest.exists() {
        fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
    }
    fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    let latest_tmp = root.join(format!(".{LATEST}.tmp"));
    write(&latest_tmp, name.as_bytes())?;
    fs::rename(&latest_tmp, root.join(LATEST)).map_err(|e| Error::io(root.join(LATEST), e))?;
    Ok(dest)
}

/// Accepts a checkpoint directory or a root holding a `LATEST` pointer.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    if path.join(META).is_file() {
        return Ok(path.to_path_buf());
    }
    let latest = path.join(LATEST);
    if latest.is_file() {
        let name = fs::read_to_string(&latest).map_err(|e| Error::io(&latest, e))?;
        let dir = path.join(name.trim());
        if dir.join(META).is_file() {
            return Ok(dir);
        }
    }
    Err(Error::Config(format!("no checkpoint found at {}", path.display())))
}

fn load_meta(dir: &Path) -> Result<CheckpointMeta> {
    let meta: CheckpointMeta = serde_json::from_slice(&read(&dir.join(META))?)
        .map_err(|e| Error::Config(format!("unreadable checkpoint metadata in {}: {e}", dir.display())))?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!("unsupported checkpoint format {}", meta.format)));
    }
    Ok(meta)
}

fn bad_weights(dir: &Path, e: Error) -> Error {
    Error::Config(format!("checkpoint {} does not match its configuration: {e}", dir.display()))
}

/// Generator weights and metadata of a checkpoint.
pub fn load_generator<T: Scalar>(path: &Path) -> Result<(Generator<T>, CheckpointMeta)> {
    let dir = resolve_checkpoint(path)?;
    let meta = load_meta(&dir)?;
    let mut gen = Generator::new(meta.generator, 0)?;
    gen.params_mut()
        .load_safetensors(&read(&dir.join(GENERATOR))?)
        .map_err(|e| bad_weights(&dir, e))?;
    Ok((gen, meta))
}

fn take_vec<T: Scalar>(extra: &mut HashMap<String, Tensor<T>>, key: &str) -> Result<Vec<T>> {
    extra
        .remove(key)
        .map(Tensor::into_vec)
        .ok_or_else(|| Error::Format(format!("missing {key}")))
}

/// Full training state for resuming. Network shapes come from the
/// checkpoint; `cfg` must agree with them and supplies the optimizer
/// hyperparameters.
pub fn load_train_state<T: Scalar>(path: &Path, cfg: &TrainConfig) -> Result<(TrainState<T>, CheckpointMeta)> {
    let dir = resolve_checkpoint(path)?;
    let meta = load_meta(&dir)?;
    if meta.generator != cfg.generator || meta.discriminator != cfg.discriminator {
        return Err(Error::Config(format!(
            "checkpoint architecture {:?}/{:?} differs from the configured {:?}/{:?}",
            meta.generator, meta.discriminator, cfg.generator, cfg.discriminator
        )));
    }
    if meta.mode != cfg.mode {
        return Err(Error::Config(format!("checkpoint mode {} differs from configured {}", meta.mode, cfg.mode)));
    }
    let mut state = TrainState::<T>::new(cfg)?;
    state
        .generator
        .params_mut()
        .load_safetensors(&read(&dir.join(GENERATOR))?)
        .map_err(|e| bad_weights(&dir, e))?;
    let mut extra = state
        .discriminator
        .params_mut()
        .load_safetensors(&read(&dir.join(DISCRIMINATOR))?)
        .map_err(|e| bad_weights(&dir, e))?;
    for (i, s) in state.discriminator.spectral_states_mut().iter_mut().enumerate() {
        let u = take_vec(&mut extra, &format!("spectral.{i}.u"))?;
        let v = take_vec(&mut extra, &format!("spectral.{i}.v"))?;
        if u.len() != s.u.len() || v.len() != s.v.len() {
            return Err(bad_weights(&dir, Error::Format(format!("spectral state {i} has the wrong size"))));
        }
        s.u = u;
        s.v = v;
    }
    let mut moments = crate::model::params::ParamStore::<T>::new().load_safetensors(&read(&dir.join(OPTIMIZER))?)?;
    state.opt_g = Adam::new(state.generator.params(), cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2);
    state.opt_g.load_moments(state.generator.params(), "generator", &mut moments)?;
    state.opt_g.t = meta.opt_g_steps;
    state.opt_d = Adam::new(state.discriminator.params(), cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2);
    state.opt_d.load_moments(state.discriminator.params(), "discriminator", &mut moments)?;
    state.opt_d.t = meta.opt_d_steps;
    state.step = meta.step;
    state.rolling = meta.rolling;
    state.skipped_steps = meta.skipped_steps;
    Ok((state, meta))
}
