use serde::{Deserialize, Serialize};
use serde_json::Value;

use hintcolor::dataset::{
    detect_scene_cuts, scene_ids, write_samples, CannyParams, DatasetManifest, FrameEntry, HintParams,
};
use hintcolor::image::{load_png, InputMode};

use super::{collect_samples, create_dir, list_pngs};
use crate::config::overlay;
use crate::{CliError, DatasetArgs};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSettings {
    pub mode: InputMode,
    pub canny: CannyParams,
    pub hints: HintParams,
    pub cut_threshold: f64,
    pub scene_cuts: Option<Vec<usize>>,
}

pub fn run(args: DatasetArgs, seed: u64, overrides: Option<&Value>) -> Result<(), CliError> {
    let settings = overlay(
        DatasetSettings {
            mode: args.mode,
            canny: CannyParams {
                gaussian_sigma: args.canny_sigma,
                low_threshold: args.canny_low,
                high_threshold: args.canny_high,
            },
            hints: HintParams {
                patch_size: args.patch_size,
                reveal_fraction: args.reveal_fraction,
                rng_seed: seed,
            },
            cut_threshold: args.cut_threshold,
            scene_cuts: args.scene_cuts,
        },
        overrides,
    )?;
    settings.canny.validate()?;

    let paths = list_pngs(&args.frames_dir)?;
    let cuts = match &settings.scene_cuts {
        Some(c) => c.clone(),
        None => {
            let frames = paths.iter().map(|p| load_png::<f32>(p)).collect::<hintcolor::Result<Vec<_>>>()?;
            detect_scene_cuts(&frames, settings.cut_threshold)?
        }
    };
    let scenes = scene_ids(paths.len(), &cuts);
    let frames = paths
        .iter()
        .zip(&scenes)
        .map(|(p, &scene)| {
            let path = p
                .canonicalize()
                .map_err(|e| CliError::user(format!("cannot resolve {}: {e}", p.display())))?;
            Ok(FrameEntry { path, scene })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = DatasetManifest {
        frames,
        mode: settings.mode,
        canny: settings.canny,
        hints: settings.hints,
    };
    manifest.validate()?;

    let samples = collect_samples(&manifest)?;
    create_dir(&args.out)?;
    manifest.save(&args.out.join("manifest.json"))?;
    let index = write_samples(&args.out, &samples)?;
    let n_scenes = scenes.last().map_or(0, |s| s + 1);
    println!("frames: {}  scenes: {n_scenes}  samples: {}", paths.len(), index.count);
    Ok(())
}
