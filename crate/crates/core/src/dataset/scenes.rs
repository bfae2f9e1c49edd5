use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::scalar::Scalar;

/// Default cut threshold on the mean absolute frame difference (model range).
pub const DEFAULT_CUT_THRESHOLD: f64 = 0.3;

/// Indices `i` where frame `i` starts a new shot: the mean absolute
/// per-pixel difference to frame `i - 1` exceeds `threshold`.
pub fn detect_scene_cuts<T: Scalar>(frames: &[ImageTensor<T>], threshold: f64) -> Result<Vec<usize>> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("scene-cut detection needs frames".into()));
    }
    let mut cuts = Vec::new();
    for (i, pair) in frames.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if !a.same_size(b) || a.channels() != b.channels() {
            return Err(Error::ShapeMismatch(format!(
                "frame {} is {}x{}x{}, frame {} is {}x{}x{}",
                i,
                a.height(),
                a.width(),
                a.channels(),
                i + 1,
                b.height(),
                b.width(),
                b.channels()
            )));
        }
        if a.mean_abs_diff(b).as_f64() > threshold {
            cuts.push(i + 1);
        }
    }
    Ok(cuts)
}

/// Scene id per frame given cut indices.
pub fn scene_ids(n_frames: usize, cuts: &[usize]) -> Vec<u64> {
    let mut scene = 0u64;
    (0..n_frames)
        .map(|i| {
            if cuts.contains(&i) && i > 0 {
                scene += 1;
            }
            scene
        })
        .collect()
}
