//! Procedural colour scenes for smoke tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::ImageTensor;
use crate::scalar::Scalar;

/// `n_frames` frames of one scene: a two-colour gradient background, a
/// static rectangle and a disc drifting across it, all with seeded colours.
pub fn synthetic_scene<T: Scalar>(n_frames: usize, height: usize, width: usize, seed: u64) -> Result<Vec<ImageTensor<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut colour = || -> [f64; 3] { [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)] };
    let (top, bottom, rect, disc) = (colour(), colour(), colour(), colour());
    let (h, w) = (height as f64, width as f64);
    let radius = h.min(w) * 0.18;
    (0..n_frames)
        .map(|f| {
            let t = if n_frames > 1 { f as f64 / (n_frames - 1) as f64 } else { 0.0 };
            let (cy, cx) = (h * (0.35 + 0.3 * t), w * (0.25 + 0.5 * t));
            let mut data = Vec::with_capacity(height * width * 3);
            for y in 0..height {
                for x in 0..width {
                    let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
                    let px = if (fy - cy).powi(2) + (fx - cx).powi(2) <= radius * radius {
                        disc
                    } else if fy > h * 0.55 && fy < h * 0.85 && fx > w * 0.6 && fx < w * 0.9 {
                        rect
                    } else {
                        let a = fy / h;
                        [0, 1, 2].map(|c| top[c] * (1.0 - a) + bottom[c] * a)
                    };
                    data.extend(px.iter().map(|&v| T::from_f64_lossy(v)));
                }
            }
            ImageTensor::new(height, width, 3, data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_move_and_repeat() {
        let a = synthetic_scene::<f32>(3, 32, 32, 1).unwrap();
        assert_eq!(a, synthetic_scene::<f32>(3, 32, 32, 1).unwrap());
        assert_ne!(a[0], a[2]);
        assert_ne!(a, synthetic_scene::<f32>(3, 32, 32, 2).unwrap());
    }
}
