//! Sparse colour-hint maps: a few averaged ground-truth cells on black.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HintParams {
    pub patch_size: usize,
    pub reveal_fraction: f64,
    pub rng_seed: u64,
}

impl Default for HintParams {
    fn default() -> Self {
        Self {
            patch_size: 4,
            reveal_fraction: 0.01,
            rng_seed: 0,
        }
    }
}

impl HintParams {
    pub fn validate_for(&self, height: usize, width: usize) -> Result<()> {
        if self.patch_size == 0 || height % self.patch_size != 0 || width % self.patch_size != 0 {
            return Err(Error::InvalidParams(format!(
                "patch size {} does not divide {height}x{width}",
                self.patch_size
            )));
        }
        if !(0.0..=1.0).contains(&self.reveal_fraction) {
            return Err(Error::InvalidParams(format!(
                "reveal fraction {} outside [0, 1]",
                self.reveal_fraction
            )));
        }
        Ok(())
    }

    /// Number of cells revealed out of `n_cells`.
    pub fn reveal_count(&self, n_cells: usize) -> usize {
        // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
        ((self.reveal_fraction * n_cells as f64) + 1e-9).floor() as usize
    }

    /// Parameters for the frame at manifest position `frame_index`: same
    /// geometry, seed mixed with the index so every frame draws its own cells.
    pub fn for_frame(&self, frame_index: usize) -> HintParams {
        HintParams {
            rng_seed: mix_seed(self.rng_seed, frame_index as u64),
            ..*self
        }
    }
}

/// SplitMix64 finalizer over `seed + index`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean colour of every `patch x patch` cell, row-major over the cell grid.
pub fn cell_means<T: Scalar>(gt: &ImageTensor<T>, patch: usize) -> Vec<[T; 3]> {
    let (gh, gw) = (gt.height() / patch, gt.width() / patch);
    let area = T::from_usize(patch * patch).unwrap();
    let mut means = Vec::with_capacity(gh * gw);
    for cy in 0..gh {
        for cx in 0..gw {
            let mut acc = [T::zero(); 3];
            for y in cy * patch..(cy + 1) * patch {
                for x in cx * patch..(cx + 1) * patch {
                    for (a, &v) in acc.iter_mut().zip(gt.pixel(y, x)) {
                        *a += v;
                    }
                }
            }
            means.push(acc.map(|a| a / area));
        }
    }
    means
}

/// Black canvas with the given cells filled. Cells are `(cell_y, cell_x, rgb)`.
pub fn paint_cells<T: Scalar>(
    height: usize,
    width: usize,
    patch: usize,
    cells: impl IntoIterator<Item = (usize, usize, [T; 3])>,
) -> Result<ImageTensor<T>> {
    let mut data = vec![-T::one(); height * width * 3];
    for (cy, cx, rgb) in cells {
        if (cy + 1) * patch > height || (cx + 1) * patch > width {
            return Err(Error::InvalidInput(format!(
                "hint cell ({cy}, {cx}) outside {height}x{width}"
            )));
        }
        for y in cy * patch..(cy + 1) * patch {
            for x in cx * patch..(cx + 1) * patch {
                data[(y * width + x) * 3..][..3].copy_from_slice(&rgb);
            }
        }
    }
    ImageTensor::from_clamped(height, width, 3, data)
}

/// An artist-placed hint: the top-left pixel of one grid cell and its colour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintPlacement {
    pub x: usize,
    pub y: usize,
    pub rgb: [u8; 3],
}

/// Hint map from placements. Errors name the index of the first placement
/// that is off the grid or not fully inside the frame.
pub fn rasterize_placements<T: Scalar>(
    height: usize,
    width: usize,
    patch: usize,
    placements: &[HintPlacement],
) -> Result<ImageTensor<T>> {
    if patch == 0 {
        return Err(Error::InvalidParams("patch_size must be positive".into()));
    }
    let half = T::from_f64(127.5).unwrap();
    let mut cells = Vec::with_capacity(placements.len());
    for (i, h) in placements.iter().enumerate() {
        if h.x % patch != 0 || h.y % patch != 0 {
            return Err(Error::InvalidInput(format!(
                "hint {i}: ({}, {}) is not aligned to the {patch}-pixel grid",
                h.x, h.y
            )));
        }
        if h.x + patch > width || h.y + patch > height {
            return Err(Error::InvalidInput(format!(
                "hint {i}: cell at ({}, {}) extends outside {width}x{height}",
                h.x, h.y
            )));
        }
        let rgb = h.rgb.map(|v| T::from_u8(v).unwrap() / half - T::one());
        cells.push((h.y / patch, h.x / patch, rgb));
    }
    paint_cells(height, width, patch, cells)
}

/// Reveals `floor(fraction * cells)` distinct cells, chosen uniformly with a
/// seeded generator, each filled with its ground-truth mean colour.
pub fn make_hint_map<T: Scalar>(gt: &ImageTensor<T>, params: &HintParams) -> Result<ImageTensor<T>> {
    if gt.channels() != 3 {
        return Err(Error::InvalidInput("hint maps need a colour ground truth".into()));
    }
    params.validate_for(gt.height(), gt.width())?;
    let p = params.patch_size;
    let gw = gt.width() / p;
    let means = cell_means(gt, p);
    let k = params.reveal_count(means.len());
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let chosen = index::sample(&mut rng, means.len(), k);
    paint_cells(
        gt.height(),
        gt.width(),
        p,
        chosen.into_iter().map(|i| (i / gw, i % gw, means[i])),
    )
}
