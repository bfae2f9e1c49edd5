//! Sequential colorization carrying the previous generated frame.

use crate::dataset::SequenceSample;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::generator::{Generator, COLOR_CHANNELS};
use crate::scalar::Scalar;

/// The all-black previous frame used at every scene start.
pub fn blank_frame<T: Scalar>(height: usize, width: usize) -> Result<ImageTensor<T>> {
    ImageTensor::blank(height, width, COLOR_CHANNELS)
}

/// Conditioning for one frame of a sequence.
#[derive(Clone, Debug)]
pub struct FrameInput<T> {
    pub line: ImageTensor<T>,
    pub hint: ImageTensor<T>,
    /// Drop the carried frame and condition on the blank frame instead.
    pub new_scene: bool,
}

/// Colorizes frames in order, feeding each output in as the next frame's
/// previous frame. The first frame always starts a scene.
pub fn colorize_sequence<T: Scalar>(gen: &Generator<T>, frames: &[FrameInput<T>]) -> Result<Vec<ImageTensor<T>>> {
    let mut out: Vec<ImageTensor<T>> = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let prev = match out.last() {
            Some(p) if !f.new_scene && i > 0 => {
                if !p.same_size(&f.line) {
                    return Err(Error::ShapeMismatch(format!("frame {i} changes resolution mid-scene")));
                }
                p.clone()
            }
            _ => blank_frame(f.line.height(), f.line.width())?,
        };
        out.push(gen.forward(&f.line, &f.hint, &prev)?);
    }
    Ok(out)
}

/// Colorizes every frame against the blank previous frame.
pub fn colorize_independent<T: Scalar>(gen: &Generator<T>, frames: &[FrameInput<T>]) -> Result<Vec<ImageTensor<T>>> {
    frames
        .iter()
        .map(|f| gen.forward(&f.line, &f.hint, &blank_frame(f.line.height(), f.line.width())?))
        .collect()
}

/// Something that predicts frame `t` of a sample given the carried frame.
pub trait FrameModel<T: Scalar>: Sync {
    fn predict(&self, sample: &SequenceSample<T>, prev: &ImageTensor<T>) -> Result<ImageTensor<T>>;
}

impl<T: Scalar> FrameModel<T> for Generator<T> {
    fn predict(&self, sample: &SequenceSample<T>, prev: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        self.forward(&sample.line_curr, &sample.hint_curr, prev)
    }
}

/// Returns the ground truth; the reference point of every metric.
#[derive(Clone, Copy, Debug, Default)]
pub struct GroundTruth;

impl<T: Scalar> FrameModel<T> for GroundTruth {
    fn predict(&self, sample: &SequenceSample<T>, _prev: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        Ok(sample.gt_curr.clone())
    }
}
