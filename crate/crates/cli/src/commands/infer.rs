use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use hintcolor::dataset::{rasterize_placements, HintPlacement};
use hintcolor::image::{load_png, save_png, to_greyscale};
use hintcolor::inference::{colorize_sequence, FrameInput};
use hintcolor::training::load_generator;

use super::{create_dir, list_pngs};
use crate::config::overlay;
use crate::{CliError, InferArgs};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferSettings {
    pub patch_size: usize,
    pub scene_cuts: Vec<usize>,
}

/// Parses a hints file: a JSON object from frame index to placements.
/// Every index must name an existing frame.
pub fn read_hints(text: &str, n_frames: usize) -> Result<BTreeMap<usize, Vec<HintPlacement>>, CliError> {
    let raw: BTreeMap<String, Vec<HintPlacement>> =
        serde_json::from_str(text).map_err(|e| CliError::user(format!("hints file: {e}")))?;
    let mut out = BTreeMap::new();
    for (key, placements) in raw {
        let index: usize = key
            .trim()
            .parse()
            .map_err(|_| CliError::user(format!("hints file: {key:?} is not a frame index")))?;
        if index >= n_frames {
            return Err(CliError::user(format!(
                "hints file references frame {index}, but the sequence has {n_frames} frames"
            )));
        }
        out.insert(index, placements);
    }
    Ok(out)
}

pub fn run(args: InferArgs, overrides: Option<&Value>) -> Result<(), CliError> {
    let settings = overlay(
        InferSettings {
            patch_size: args.patch_size,
            scene_cuts: args.scene_cuts,
        },
        overrides,
    )?;
    let (gen, _meta) = load_generator::<f32>(&args.checkpoint)?;
    let paths = list_pngs(&args.line_art_dir)?;
    let hints = match &args.hints {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::user(format!("cannot read {}: {e}", path.display())))?;
            read_hints(&text, paths.len())?
        }
        None => BTreeMap::new(),
    };

    let mut frames = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        let img = load_png::<f32>(path)?;
        let line = if img.channels() == 3 { to_greyscale(&img)? } else { img };
        let placements = hints.get(&i).map(Vec::as_slice).unwrap_or(&[]);
        let hint = rasterize_placements(line.height(), line.width(), settings.patch_size, placements)
            .map_err(|e| CliError::user(format!("frame {i}: {e}")))?;
        frames.push(FrameInput {
            line,
            hint,
            new_scene: i == 0 || settings.scene_cuts.contains(&i),
        });
    }
    let outputs = colorize_sequence(&gen, &frames)?;
    create_dir(&args.out)?;
    for (i, img) in outputs.iter().enumerate() {
        save_png(img, &args.out.join(format!("frame_{i:04}.png")))?;
    }
    println!("wrote {} frames to {}", outputs.len(), args.out.display());
    Ok(())
}
