use serde::{Deserialize, Serialize};
use serde_json::Value;

use hintcolor::inference::{FrameModel, GroundTruth};
use hintcolor::metrics::{evaluate_sequence, FidFeatures};
use hintcolor::training::{load_generator, ExtractorConfig};

use super::{collect_samples, load_manifest};
use crate::config::overlay;
use crate::{CliError, EvalArgs};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalSettings {
    pub fid_layer: String,
    /// Source of FID features; the toy extractor with seed 0 when unset.
    pub extractor: Option<ExtractorConfig>,
}

pub fn run(args: EvalArgs, overrides: Option<&Value>) -> Result<(), CliError> {
    let settings = overlay(
        EvalSettings {
            fid_layer: args.fid_layer,
            extractor: args.extractor.config(),
        },
        overrides,
    )?;
    let fx = settings
        .extractor
        .clone()
        .unwrap_or(ExtractorConfig::Toy { seed: 0 })
        .load::<f32>()?;
    if !fx.declared_layers().contains(&settings.fid_layer) {
        return Err(CliError::user(format!(
            "FID layer {:?} is not one of {:?}",
            settings.fid_layer,
            fx.declared_layers()
        )));
    }

    let mut manifest = load_manifest(&args.manifest)?;
    let generator = match (&args.checkpoint, args.oracle_identity) {
        (_, true) => None,
        (Some(path), false) => {
            let (gen, meta) = load_generator::<f32>(path)?;
            manifest.mode = meta.mode;
            Some((gen, meta))
        }
        (None, false) => return Err(CliError::user("--checkpoint is required without --oracle-identity")),
    };
    let samples = collect_samples(&manifest)?;
    let model: &dyn FrameModel<f32> = match &generator {
        Some((gen, meta)) => {
            meta.check_resolution(samples[0].height(), samples[0].width())?;
            gen
        }
        None => &GroundTruth,
    };
    let features = FidFeatures {
        extractor: fx.as_ref(),
        layer: &settings.fid_layer,
    };
    let report = evaluate_sequence(model, &samples, &features)?;
    if let Some(path) = &args.report {
        let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::internal(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| CliError::user(format!("cannot write {}: {e}", path.display())))?;
    }
    println!("{report}");
    Ok(())
}
