//! Power-iteration estimate of a weight's largest singular value.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

/// Floor on the estimated singular value.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Left/right singular-vector estimates for a weight viewed as
/// `[shape[0], rest]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
}

fn normalize<T: Scalar>(x: &mut [T]) {
    let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
    let norm = norm.max(lit(SIGMA_FLOOR));
    x.iter_mut().for_each(|v| *v /= norm);
}

fn mat_t_vec<T: Scalar>(w: &[T], rows: usize, cols: usize, u: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for (row, &ui) in w.chunks_exact(cols).zip(u).take(rows) {
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * ui;
        }
    }
    out
}

fn mat_vec<T: Scalar>(w: &[T], cols: usize, v: &[T]) -> Vec<T> {
    w.chunks_exact(cols)
        .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
        .collect()
}

impl<T: Scalar> SpectralState<T> {
    pub fn new<R: Rng + ?Sized>(weight: &Tensor<T>, rng: &mut R) -> Self {
        let rows = weight.shape()[0];
        let cols = weight.len() / rows;
        let mut u: Vec<T> = (0..rows)
            .map(|_| T::from_f64_lossy(StandardNormal.sample(rng)))
            .collect();
        normalize(&mut u);
        let mut v = mat_t_vec(weight.data(), rows, cols, &u);
        normalize(&mut v);
        Self { u, v }
    }

    /// One power-iteration step against `weight`.
    pub fn step(&mut self, weight: &Tensor<T>) {
        let rows = weight.shape()[0];
        let cols = weight.len() / rows;
        let mut v = mat_t_vec(weight.data(), rows, cols, &self.u);
        normalize(&mut v);
        let mut u = mat_vec(weight.data(), cols, &v);
        normalize(&mut u);
        self.u = u;
        self.v = v;
    }

    /// `u^T W v`, floored.
    pub fn sigma(&self, weight: &Tensor<T>) -> T {
        let cols = weight.len() / weight.shape()[0];
        let wv = mat_vec(weight.data(), cols, &self.v);
        wv.iter()
            .zip(&self.u)
            .map(|(&a, &b)| a * b)
            .sum::<T>()
            .max(lit(SIGMA_FLOOR))
    }
}

/// Runs one power-iteration step on `state` and returns `weight / sigma`.
/// An all-zero weight comes back unchanged.
pub fn spectral_normalize<T: Scalar>(weight: &Tensor<T>, state: &mut SpectralState<T>) -> Tensor<T> {
    state.step(weight);
    let sigma = state.sigma(weight);
    weight.map(|w| w / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eye(n: usize, s: f64) -> Tensor<f64> {
        let mut t = Tensor::zeros([n, n, 1, 1]);
        for i in 0..n {
            t.data_mut()[i * n + i] = s;
        }
        t
    }

    #[test]
    fn identity_is_fixed() {
        let w = eye(4, 1.0);
        let mut st = SpectralState::new(&w, &mut ChaCha8Rng::seed_from_u64(1));
        let out = spectral_normalize(&w, &mut st);
        assert!(out.max_abs_diff(&w) < 1e-12);
    }

    #[test]
    fn scaled_identity_becomes_identity() {
        let w = eye(4, 5.0);
        let mut st = SpectralState::new(&w, &mut ChaCha8Rng::seed_from_u64(2));
        let mut out = w.clone();
        for _ in 0..5 {
            out = spectral_normalize(&w, &mut st);
        }
        assert!(out.max_abs_diff(&eye(4, 1.0)) < 1e-9);
    }

    #[test]
    fn zero_weight_unchanged() {
        let w = Tensor::<f64>::zeros([3, 2, 1, 1]);
        let mut st = SpectralState::new(&w, &mut ChaCha8Rng::seed_from_u64(3));
        let out = spectral_normalize(&w, &mut st);
        assert_eq!(out, w);
    }

    #[test]
    fn random_matrix_converges_to_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = Tensor::<f64>::randn([8, 8, 1, 1], 1.0, &mut rng);
        let mut st = SpectralState::new(&w, &mut rng);
        let mut out = w.clone();
        for _ in 0..200 {
            out = spectral_normalize(&w, &mut st);
        }
        let m = nalgebra::DMatrix::from_row_slice(8, 8, out.data());
        let top = m.singular_values().max();
        assert!((top - 1.0).abs() < 1e-3, "top singular value {top}");
    }
}
