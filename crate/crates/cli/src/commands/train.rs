use std::fs::OpenOptions;
use std::io::BufWriter;

use serde_json::Value;

use hintcolor::losses::LossWeights;
use hintcolor::model::{DiscriminatorConfig, GeneratorConfig};
use hintcolor::training::{load_train_state, train_loop, LoopOutput, TrainConfig, TrainState};

use super::{collect_samples, create_dir, load_manifest};
use crate::config::overlay;
use crate::{CliError, TrainArgs};

pub const LOG_FILE: &str = "train_log.jsonl";

pub fn run(args: TrainArgs, seed: u64, overrides: Option<&Value>) -> Result<(), CliError> {
    let mut manifest = load_manifest(&args.manifest)?;
    let flags = TrainConfig {
        batch_size: args.batch_size,
        lr_g: args.lr_g,
        lr_d: args.lr_d,
        max_steps: args.max_steps,
        seed,
        mode: args.mode.unwrap_or(manifest.mode),
        weights: LossWeights {
            lambda_adv: args.lambda_adv,
            lambda_cont: args.lambda_cont,
            lambda_style: args.lambda_style,
            lambda_l1: args.lambda_l1,
        },
        checkpoint_every: args.checkpoint_every,
        generator: GeneratorConfig {
            base_channels: args.g_base,
            n_residual_blocks: args.g_blocks,
        },
        discriminator: DiscriminatorConfig {
            n_layers: args.d_layers,
            base_channels: args.d_base,
            ..DiscriminatorConfig::default()
        },
        extractor: args.extractor.config(),
        ..TrainConfig::default()
    };
    let cfg = overlay(flags, overrides)?;
    cfg.validate()?;
    let fx = cfg.load_extractor::<f32>()?;

    manifest.mode = cfg.mode;
    let samples = collect_samples(&manifest)?;
    let (h, w) = (samples[0].height(), samples[0].width());
    let state = match &args.resume {
        Some(path) => {
            let (state, meta) = load_train_state::<f32>(path, &cfg)?;
            meta.check_resolution(h, w)?;
            log::info!("resuming from step {}", state.step);
            state
        }
        None => TrainState::new(&cfg)?,
    };

    create_dir(&args.out)?;
    let log_path = args.out.join(LOG_FILE);
    let log_file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(args.resume.is_some())
        .truncate(args.resume.is_none())
        .open(&log_path)
        .map_err(|e| CliError::user(format!("cannot open {}: {e}", log_path.display())))?;
    let mut log = BufWriter::new(log_file);
    log::info!("training on {} samples of {h}x{w} for {} steps", samples.len(), cfg.max_steps);
    let (state, records) = train_loop(
        state,
        &samples,
        &cfg,
        fx.as_ref(),
        LoopOutput {
            checkpoint_dir: Some(&args.out),
            log: Some(&mut log),
        },
    )?;
    match records.last() {
        Some(r) => println!(
            "step {}  d_loss {:.4}  g_total {:.4}  g_l1 {:.4}  skipped {}",
            state.step, r.d_loss, r.g_total, r.g_l1, state.skipped_steps
        ),
        None => println!("step {}  no updates run", state.step),
    }
    Ok(())
}
