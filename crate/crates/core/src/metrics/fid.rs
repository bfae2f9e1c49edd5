//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::losses::FeatureExtractor;
use crate::scalar::Scalar;

/// Diagonal regularizer added to both covariances.
pub const FID_EPS: f64 = 1e-6;

fn moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mean, cov)
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clipped.
fn sqrt_psd(m: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new(m);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&roots) * q.transpose(), roots)
}

/// FID between row-wise feature sets `a` (`n x d`) and `b` (`m x d`).
pub fn fid(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch(format!("feature widths {} and {}", a.ncols(), b.ncols())));
    }
    if a.nrows() < 2 || b.nrows() < 2 {
        return Err(Error::InvalidInput(format!("FID needs two samples per set, got {} and {}", a.nrows(), b.nrows())));
    }
    let d = a.ncols();
    let eps = DMatrix::<f64>::identity(d, d) * FID_EPS;
    let (mu_a, cov_a) = moments(a);
    let (mu_b, cov_b) = moments(b);
    let (cov_a, cov_b) = (cov_a + &eps, cov_b + &eps);
    let (sqrt_a, _) = sqrt_psd(cov_a.clone());
    // Tr((A B)^1/2) = Tr((A^1/2 B A^1/2)^1/2), the latter symmetric
    let inner = &sqrt_a * &cov_b * &sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let (_, roots) = sqrt_psd(inner);
    let dist = (mu_a - mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * roots.sum();
    Ok(dist.max(0.0))
}

/// Spatially averaged activations of `layer` for each image, one row each.
pub fn pooled_features<T: Scalar>(
    fx: &dyn FeatureExtractor<T>,
    images: &[ImageTensor<T>],
    layer: &str,
) -> Result<DMatrix<f64>> {
    let rows = images
        .iter()
        .map(|img| {
            let mut g = Graph::no_grad();
            let x = g.constant(img.to_tensor());
            let feats = fx.extract(&mut g, x)?;
            let (_, v) = feats
                .into_iter()
                .find(|(n, _)| n == layer)
                .ok_or_else(|| Error::Config(format!("feature extractor has no layer {layer}")))?;
            let t = g.value(v);
            let [_, c, h, w] = t.shape();
            let hw = (h * w) as f64;
            Ok((0..c)
                .map(|ch| t.item(0)[ch * h * w..(ch + 1) * h * w].iter().map(|v| v.as_f64()).sum::<f64>() / hw)
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let d = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(rows.len(), d, rows.into_iter().flatten()))
}
