//! Classical Canny edge detection on model-range greyscale images.
//!
//! Gaussian smoothing, Sobel gradients, non-maximum suppression along one of
//! four quantized orientations, double thresholding relative to the image's
//! largest gradient magnitude, and 8-connected hysteresis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub gaussian_sigma: f64,
    /// Fraction of the maximum gradient magnitude.
    pub low_threshold: f64,
    /// Fraction of the maximum gradient magnitude.
    pub high_threshold: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            gaussian_sigma: 1.0,
            low_threshold: 0.1,
            high_threshold: 0.2,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "gaussian_sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        if !in_unit(self.low_threshold) || !in_unit(self.high_threshold) {
            return Err(Error::InvalidParams(format!(
                "thresholds must lie in (0, 1), got low={} high={}",
                self.low_threshold, self.high_threshold
            )));
        }
        if self.low_threshold >= self.high_threshold {
            return Err(Error::InvalidParams(format!(
                "low threshold {} must be below high threshold {}",
                self.low_threshold, self.high_threshold
            )));
        }
        Ok(())
    }
}

/// Binary edge map, row-major, 1 at edge pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl EdgeMap {
    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    /// Replicated border.
    #[inline]
    fn at(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.v[y * self.w + x]
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

fn blur(src: &Plane, sigma: f64) -> Plane {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = (src.h, src.w);
    let mut tmp = Plane { h, w, v: vec![0.0; h * w] };
    for y in 0..h {
        for x in 0..w {
            tmp.v[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * src.at(y as isize, x as isize + i as isize - r))
                .sum();
        }
    }
    let mut out = Plane { h, w, v: vec![0.0; h * w] };
    for y in 0..h {
        for x in 0..w {
            out.v[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp.at(y as isize + i as isize - r, x as isize))
                .sum();
        }
    }
    out
}

pub fn canny_edges<T: Scalar>(img: &ImageTensor<T>, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    if img.channels() != 1 {
        return Err(Error::InvalidInput(format!(
            "edge detection needs a greyscale image, got {} channels",
            img.channels()
        )));
    }
    let (h, w) = (img.height(), img.width());
    let src = Plane {
        h,
        w,
        v: img.data().iter().map(|v| v.as_f64()).collect(),
    };
    let smooth = blur(&src, params.gaussian_sigma);

    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    let mut mag = vec![0.0f64; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dy: isize, dx: isize| smooth.at(y + dy, x + dx);
            let dx = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let dy = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = dx.hypot(dy);
        }
    }
    let max_mag = mag.iter().copied().fold(0.0, f64::max);
    let mut out = EdgeMap {
        height: h,
        width: w,
        data: vec![0; h * w],
    };
    // Flat images have no edges; the tiny floor absorbs blur round-off.
    if max_mag <= 1e-9 {
        return Ok(out);
    }

    // Non-maximum suppression. Magnitudes within round-off of each other
    // tie, and ties keep the lower-index pixel, so a symmetric step yields a
    // one-pixel line on a predictable side.
    let tie = 1e-9 * max_mag;
    let mut thin = vec![0.0f64; h * w];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (before, after) = if !(22.5..157.5).contains(&angle) {
                (mag[i - 1], mag[i + 1])
            } else if angle < 67.5 {
                (mag[i - w - 1], mag[i + w + 1])
            } else if angle < 112.5 {
                (mag[i - w], mag[i + w])
            } else {
                (mag[i - w + 1], mag[i + w - 1])
            };
            if m > before + tie && m + tie >= after {
                thin[i] = m;
            }
        }
    }

    let low = params.low_threshold * max_mag;
    let high = params.high_threshold * max_mag;
    let mut stack = Vec::new();
    for i in 0..h * w {
        if thin[i] >= high && out.data[i] == 0 {
            out.data[i] = 1;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (jy, jx) = ((j / w) as isize, (j % w) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (ny, nx) = (jy + dy, jx + dx);
                        if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                            continue;
                        }
                        let k = ny as usize * w + nx as usize;
                        if out.data[k] == 0 && thin[k] >= low {
                            out.data[k] = 1;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
