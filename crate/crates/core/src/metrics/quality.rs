//! Full-reference image quality: SSIM and PSNR on the 8-bit scale.

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const PEAK: f64 = 255.0;
/// Reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

/// Model range `[-1, 1]` onto `[0, 255]`, without rounding.
pub(crate) fn to_8bit<T: Scalar>(img: &ImageTensor<T>) -> Vec<f64> {
    img.data().iter().map(|v| (v.as_f64() + 1.0) * 127.5).collect()
}

fn check_pair<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<()> {
    if !a.same_size(b) || a.channels() != b.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Valid-mode separable filtering of one `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid window positions and channels.
pub fn ssim<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    check_pair(a, b)?;
    let (h, w, c) = (a.height(), a.width(), a.channels());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!("{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let (a8, b8) = (to_8bit(a), to_8bit(b));
    let k = gaussian_window();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let plane = |src: &[f64], f: &dyn Fn(f64, f64) -> f64, other: &[f64]| -> Vec<f64> {
            (0..h * w).map(|i| f(src[i * c + ch], other[i * c + ch])).collect()
        };
        let pa = plane(&a8, &|x, _| x, &b8);
        let pb = plane(&b8, &|x, _| x, &a8);
        let paa = plane(&a8, &|x, _| x * x, &b8);
        let pbb = plane(&b8, &|x, _| x * x, &a8);
        let pab = plane(&a8, &|x, y| x * y, &b8);
        let [ma, mb, maa, mbb, mab] = [pa, pb, paa, pbb, pab].map(|p| filter_valid(&p, h, w, &k));
        for i in 0..ma.len() {
            let (mu_a, mu_b) = (ma[i], mb[i]);
            let var_a = maa[i] - mu_a * mu_a;
            let var_b = mbb[i] - mu_b * mu_b;
            let cov = mab[i] - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
        count += ma.len();
    }
    Ok(total / count as f64)
}

pub fn mse_8bit<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    check_pair(a, b)?;
    let (a8, b8) = (to_8bit(a), to_8bit(b));
    Ok(a8.iter().zip(&b8).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a8.len() as f64)
}

/// `10 log10(255^2 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    let mse = mse_8bit(a, b)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, c: usize, seed: u64) -> ImageTensor<f64> {
        let t = Tensor::<f64>::uniform([1, 1, 1, h * w * c], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        ImageTensor::new(h, w, c, t.into_vec()).unwrap()
    }

    fn from_8bit(h: usize, w: usize, c: usize, v: impl Fn(usize) -> f64) -> ImageTensor<f64> {
        ImageTensor::new(h, w, c, (0..h * w * c).map(|i| v(i) / 127.5 - 1.0).collect()).unwrap()
    }

    /// Direct 2-D window sums with explicit loops.
    fn ssim_reference(a: &ImageTensor<f64>, b: &ImageTensor<f64>) -> f64 {
        let (h, w, c) = (a.height(), a.width(), a.channels());
        let mut g = [[0.0; 11]; 11];
        let mut s = 0.0;
        for (y, row) in g.iter_mut().enumerate() {
            for (x, v) in row.iter_mut().enumerate() {
                let (dy, dx) = (y as f64 - 5.0, x as f64 - 5.0);
                *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
                s += *v;
            }
        }
        let px = |img: &ImageTensor<f64>, y, x, ch| (img.get(y, x, ch) + 1.0) * 127.5;
        let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
        let mut total = 0.0;
        let mut n = 0;
        for ch in 0..c {
            for y0 in 0..=h - 11 {
                for x0 in 0..=w - 11 {
                    let (mut ma, mut mb) = (0.0, 0.0);
                    for dy in 0..11 {
                        for dx in 0..11 {
                            let wt = g[dy][dx] / s;
                            ma += wt * px(a, y0 + dy, x0 + dx, ch);
                            mb += wt * px(b, y0 + dy, x0 + dx, ch);
                        }
                    }
                    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                    for dy in 0..11 {
                        for dx in 0..11 {
                            let wt = g[dy][dx] / s;
                            let (xa, xb) = (px(a, y0 + dy, x0 + dx, ch) - ma, px(b, y0 + dy, x0 + dx, ch) - mb);
                            va += wt * xa * xa;
                            vb += wt * xb * xb;
                            cov += wt * xa * xb;
                        }
                    }
                    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    n += 1;
                }
            }
        }
        total / n as f64
    }

    fn psnr_reference(a: &ImageTensor<f64>, b: &ImageTensor<f64>) -> f64 {
        let mut se = 0.0;
        for (x, y) in a.data().iter().zip(b.data()) {
            let d = (x - y) * 127.5;
            se += d * d;
        }
        10.0 * (255.0f64 * 255.0 / (se / a.data().len() as f64)).log10()
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let k = gaussian_window();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
        assert!(k[5] > k[4]);
    }

    #[test]
    fn identical_images() {
        let a = random(20, 24, 3, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    }

    #[test]
    fn grey_offset_matches_reference() {
        let a = from_8bit(16, 16, 1, |_| 128.0);
        let b = from_8bit(16, 16, 1, |_| 138.0);
        let got = ssim(&a, &b).unwrap();
        // constant planes: only the luminance term differs from 1
        let c1 = (0.01f64 * 255.0).powi(2);
        let want = (2.0 * 128.0 * 138.0 + c1) / (128.0f64.powi(2) + 138.0f64.powi(2) + c1);
        assert!(got < 1.0);
        assert!((got - want).abs() < 1e-6);
        assert!((got - ssim_reference(&a, &b)).abs() < 1e-6);
    }

    #[test]
    fn random_pairs_match_scalar_loops() {
        for seed in 0..2 {
            let a = random(64, 64, 3, seed);
            let b = random(64, 64, 3, seed + 100);
            assert!((ssim(&a, &b).unwrap() - ssim_reference(&a, &b)).abs() < 1e-6);
            assert!((psnr(&a, &b).unwrap() - psnr_reference(&a, &b)).abs() < 1e-6);
            assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
            assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        }
    }

    #[test]
    fn one_grey_level_gives_closed_form_psnr() {
        let a = from_8bit(16, 16, 3, |i| (i % 200) as f64);
        let b = from_8bit(16, 16, 3, |i| (i % 200) as f64 + 1.0);
        assert!((psnr(&a, &b).unwrap() - 20.0 * 255.0f64.log10()).abs() < 1e-9);
        assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-4);
    }

    #[test]
    fn psnr_falls_with_noise_amplitude() {
        let a = random(32, 32, 3, 7);
        let noise = random(32, 32, 3, 8);
        let vals: Vec<f64> = [0.01, 0.05, 0.2]
            .iter()
            .map(|amp| {
                let b = ImageTensor::from_clamped(32, 32, 3, a.data().iter().zip(noise.data()).map(|(x, n)| x * 0.7 + amp * n).collect()).unwrap();
                let a = ImageTensor::new(32, 32, 3, a.data().iter().map(|x| x * 0.7).collect()).unwrap();
                psnr(&a, &b).unwrap()
            })
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2], "{vals:?}");
    }

    #[test]
    fn errors() {
        let a = random(16, 16, 3, 0);
        assert!(ssim(&a, &random(16, 20, 3, 0)).is_err());
        assert!(psnr(&a, &random(16, 16, 1, 0)).is_err());
        let tiny = ImageTensor::<f64>::blank(16, 16, 1).unwrap();
        assert!(ssim(&tiny, &tiny).is_ok());
    }
}
