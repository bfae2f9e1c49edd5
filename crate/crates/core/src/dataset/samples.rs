//! Consecutive-frame training samples and their on-disk form.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::canny::{canny_edges, CannyParams};
use super::hints::{make_hint_map, HintParams};
use super::manifest::DatasetManifest;
use crate::error::{Error, Result};
use crate::image::{load_png, save_png, to_greyscale, ImageTensor, InputMode};
use crate::scalar::Scalar;

/// One training unit: frames `t - 1` and `t` of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample<T> {
    pub line_prev: ImageTensor<T>,
    pub gt_prev: ImageTensor<T>,
    pub line_curr: ImageTensor<T>,
    pub gt_curr: ImageTensor<T>,
    pub hint_curr: ImageTensor<T>,
    /// Hint map frame `t - 1` receives when it is itself the current frame;
    /// used to regenerate the previous prediction during training.
    pub hint_prev: ImageTensor<T>,
    /// Frame `t - 1` opens its scene, so the previous prediction is blank.
    pub is_sequence_start: bool,
    /// Manifest position of frame `t`.
    pub frame_index: usize,
    pub scene: u64,
}

impl<T: Scalar> SequenceSample<T> {
    pub fn height(&self) -> usize {
        self.gt_curr.height()
    }

    pub fn width(&self) -> usize {
        self.gt_curr.width()
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            (&self.line_prev, 1),
            (&self.gt_prev, 3),
            (&self.line_curr, 1),
            (&self.gt_curr, 3),
            (&self.hint_curr, 3),
            (&self.hint_prev, 3),
        ];
        for (img, c) in all {
            if !img.same_size(&self.gt_curr) || img.channels() != c {
                return Err(Error::ShapeMismatch(format!(
                    "sample {} mixes {}x{}x{} with {}x{}",
                    self.frame_index,
                    img.height(),
                    img.width(),
                    img.channels(),
                    self.height(),
                    self.width()
                )));
            }
        }
        Ok(())
    }
}

/// Dark-on-white line art: Canny edges become -1, everything else +1.
pub fn synthesize_line_art<T: Scalar>(frame: &ImageTensor<T>, params: &CannyParams) -> Result<ImageTensor<T>> {
    let grey = to_greyscale(frame)?;
    let edges = canny_edges(&grey, params)?;
    let data = edges
        .data
        .iter()
        .map(|&e| if e == 1 { -T::one() } else { T::one() })
        .collect();
    ImageTensor::new(frame.height(), frame.width(), 1, data)
}

/// Structural input for a colour frame under `mode`.
pub fn structure_input<T: Scalar>(frame: &ImageTensor<T>, mode: InputMode, canny: &CannyParams) -> Result<ImageTensor<T>> {
    match mode {
        InputMode::LineArt => synthesize_line_art(frame, canny),
        InputMode::Greyscale => to_greyscale(frame),
    }
}

/// Per-frame derived data.
#[derive(Clone, Debug)]
struct Prepared<T> {
    gt: ImageTensor<T>,
    line: ImageTensor<T>,
    hint: ImageTensor<T>,
}

fn prepare<T: Scalar>(
    gt: ImageTensor<T>,
    index: usize,
    mode: InputMode,
    canny: &CannyParams,
    hints: &HintParams,
) -> Result<Prepared<T>> {
    if gt.channels() != 3 {
        return Err(Error::InvalidInput(format!("frame {index} is not a colour image")));
    }
    let line = structure_input(&gt, mode, canny)?;
    let hint = make_hint_map(&gt, &hints.for_frame(index))?;
    Ok(Prepared { gt, line, hint })
}

/// `(t - 1, t)` manifest positions of every within-scene consecutive pair,
/// with the scene-start flag.
pub fn pair_indices(scenes: &[u64]) -> Vec<(usize, usize, bool)> {
    let mut pairs = Vec::new();
    let mut run_start = 0;
    for t in 1..scenes.len() {
        if scenes[t] != scenes[t - 1] {
            run_start = t;
            continue;
        }
        pairs.push((t - 1, t, t - 1 == run_start));
    }
    pairs
}

fn assemble<T: Scalar>(
    prev: &Result<Prepared<T>, String>,
    curr: &Result<Prepared<T>, String>,
    t: usize,
    start: bool,
    scene: u64,
) -> Result<SequenceSample<T>> {
    let (p, c) = match (prev, curr) {
        (Ok(p), Ok(c)) => (p, c),
        (Err(e), _) | (_, Err(e)) => return Err(Error::InvalidInput(e.clone())),
    };
    let sample = SequenceSample {
        line_prev: p.line.clone(),
        gt_prev: p.gt.clone(),
        line_curr: c.line.clone(),
        gt_curr: c.gt.clone(),
        hint_curr: c.hint.clone(),
        hint_prev: p.hint.clone(),
        is_sequence_start: start,
        frame_index: t,
        scene,
    };
    sample.validate()?;
    Ok(sample)
}

/// Builds samples from in-memory colour frames with scene ids.
pub fn samples_from_frames<T: Scalar>(
    frames: &[(ImageTensor<T>, u64)],
    mode: InputMode,
    canny: &CannyParams,
    hints: &HintParams,
) -> Result<Vec<SequenceSample<T>>> {
    canny.validate()?;
    let prepared: Vec<Result<Prepared<T>, String>> = frames
        .par_iter()
        .enumerate()
        .map(|(i, (f, _))| prepare(f.clone(), i, mode, canny, hints).map_err(|e| e.to_string()))
        .collect();
    let scenes: Vec<u64> = frames.iter().map(|(_, s)| *s).collect();
    pair_indices(&scenes)
        .into_iter()
        .map(|(a, b, start)| assemble(&prepared[a], &prepared[b], b, start, scenes[b]))
        .collect()
}

/// Streams samples for a manifest in manifest order. Frames are decoded and
/// processed in parallel chunks; a frame that fails to load yields an error
/// item for each pair touching it instead of aborting the stream.
pub fn build_samples<T: Scalar>(manifest: &DatasetManifest) -> impl Iterator<Item = Result<SequenceSample<T>>> + '_ {
    const CHUNK: usize = 32;
    let scenes: Vec<u64> = manifest.frames.iter().map(|f| f.scene).collect();
    let pairs = pair_indices(&scenes);
    let params_ok = manifest.canny.validate().map_err(|e| e.to_string());
    let mut cached: Vec<Option<Result<Prepared<T>, String>>> = Vec::new();
    let mut cached_from = 0usize;
    let mut chunks = pairs.chunks(CHUNK).map(<[_]>::to_vec).collect::<Vec<_>>().into_iter();
    let mut pending: std::vec::IntoIter<Result<SequenceSample<T>>> = Vec::new().into_iter();

    std::iter::from_fn(move || loop {
        if let Some(item) = pending.next() {
            return Some(item);
        }
        let chunk = chunks.next()?;
        let lo = chunk.first().map(|p| p.0).unwrap_or(0);
        let hi = chunk.last().map(|p| p.1).unwrap_or(0);
        // Keep the boundary frame shared with the previous chunk.
        let reuse = if lo >= cached_from && lo < cached_from + cached.len() {
            cached[lo - cached_from].take()
        } else {
            None
        };
        let fresh: Vec<Option<Result<Prepared<T>, String>>> = (lo..=hi)
            .into_par_iter()
            .map(|i| {
                if i == lo && reuse.is_some() {
                    return None;
                }
                let entry = &manifest.frames[i];
                Some(params_ok.clone().and_then(|_| {
                    load_png::<T>(&entry.path)
                        .and_then(|gt| prepare(gt, i, manifest.mode, &manifest.canny, &manifest.hints))
                        .map_err(|e| e.to_string())
                }))
            })
            .collect();
        cached = fresh;
        if reuse.is_some() {
            cached[0] = reuse;
        }
        cached_from = lo;
        let out: Vec<_> = chunk
            .iter()
            .map(|&(a, b, start)| {
                let p = cached[a - lo].as_ref().expect("prepared");
                let c = cached[b - lo].as_ref().expect("prepared");
                assemble(p, c, b, start, scenes[b])
            })
            .collect();
        pending = out.into_iter();
    })
}

/// Entry of the persisted sample index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub dir: String,
    pub frame_index: usize,
    pub scene: u64,
    pub is_sequence_start: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleIndex {
    pub count: usize,
    pub samples: Vec<SampleRecord>,
}

const SAMPLE_FILES: [&str; 6] = [
    "line_prev.png",
    "gt_prev.png",
    "line_curr.png",
    "gt_curr.png",
    "hint_curr.png",
    "hint_prev.png",
];

/// Writes each sample as a directory of PNGs under `out_dir/samples/`, plus
/// `out_dir/index.json`.
pub fn write_samples<T: Scalar>(out_dir: &Path, samples: &[SequenceSample<T>]) -> Result<SampleIndex> {
    let root = out_dir.join("samples");
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut records = Vec::with_capacity(samples.len());
    for (k, s) in samples.iter().enumerate() {
        let name = format!("{k:06}");
        let dir = root.join(&name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let imgs = [&s.line_prev, &s.gt_prev, &s.line_curr, &s.gt_curr, &s.hint_curr, &s.hint_prev];
        for (file, img) in SAMPLE_FILES.iter().zip(imgs) {
            save_png(img, &dir.join(file))?;
        }
        records.push(SampleRecord {
            dir: format!("samples/{name}"),
            frame_index: s.frame_index,
            scene: s.scene,
            is_sequence_start: s.is_sequence_start,
        });
    }
    let index = SampleIndex {
        count: records.len(),
        samples: records,
    };
    let path = out_dir.join("index.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&index)?).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

/// Reads samples written by [`write_samples`] (8-bit quantized).
pub fn read_samples<T: Scalar>(out_dir: &Path) -> Result<Vec<SequenceSample<T>>> {
    let path = out_dir.join("index.json");
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let index: SampleIndex = serde_json::from_slice(&bytes)?;
    index
        .samples
        .iter()
        .map(|r| {
            let dir: PathBuf = out_dir.join(&r.dir);
            let load = |f: &str| load_png::<T>(&dir.join(f));
            let s = SequenceSample {
                line_prev: load(SAMPLE_FILES[0])?,
                gt_prev: load(SAMPLE_FILES[1])?,
                line_curr: load(SAMPLE_FILES[2])?,
                gt_curr: load(SAMPLE_FILES[3])?,
                hint_curr: load(SAMPLE_FILES[4])?,
                hint_prev: load(SAMPLE_FILES[5])?,
                is_sequence_start: r.is_sequence_start,
                frame_index: r.frame_index,
                scene: r.scene,
            };
            s.validate()?;
            Ok(s)
        })
        .collect()
}
