//! Instance normalization and the spectral weight rescaling.

use std::sync::Arc;

use super::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<T: Scalar> Graph<T> {
    /// Per item and channel: `(x - mean) / sqrt(var + eps) * gain + bias`
    /// with the biased spatial variance. `gain`/`bias` are `[1, c, 1, 1]`.
    pub fn instance_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Var {
        let [n, c, h, w] = self.value(x).shape();
        assert_eq!(self.value(gain).shape(), [1, c, 1, 1], "instance_norm gain");
        assert_eq!(self.value(bias).shape(), [1, c, 1, 1], "instance_norm bias");
        let hw = h * w;
        assert!(hw >= 2, "instance_norm needs at least 2 spatial positions");
        let count = T::from_usize(hw).unwrap();

        let xv = self.value(x);
        let gv = self.shared(gain);
        let bv = self.value(bias).clone();
        let mut xhat = Vec::with_capacity(n * c * hw);
        let mut inv_std = Vec::with_capacity(n * c);
        for plane in xv.data().chunks_exact(hw) {
            let mean = plane.iter().copied().sum::<T>() / count;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            xhat.extend(plane.iter().map(|&v| (v - mean) * inv));
        }
        let mut out = Vec::with_capacity(xhat.len());
        for (k, plane) in xhat.chunks_exact(hw).enumerate() {
            let ch = k % c;
            let (g, b) = (gv.data()[ch], bv.data()[ch]);
            out.extend(plane.iter().map(|&v| v * g + b));
        }
        let out = Tensor::from_vec([n, c, h, w], out).expect("sized");
        let xhat = Arc::new(xhat);
        self.push(out, &[x, gain, bias], move |grad| {
            let mut dx = Vec::with_capacity(n * c * hw);
            let mut dgain = vec![T::zero(); c];
            let mut dbias = vec![T::zero(); c];
            for (k, (gp, xp)) in grad.data().chunks_exact(hw).zip(xhat.chunks_exact(hw)).enumerate() {
                let ch = k % c;
                let gamma = gv.data()[ch];
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                for (&g, &xh) in gp.iter().zip(xp) {
                    sum_g += g;
                    sum_gx += g * xh;
                }
                dbias[ch] += sum_g;
                dgain[ch] += sum_gx;
                // d xhat = g * gamma; standard normalization backward.
                let scale = gamma * inv_std[k] / count;
                dx.extend(
                    gp.iter()
                        .zip(xp)
                        .map(|(&g, &xh)| scale * (count * g - sum_g - xh * sum_gx)),
                );
            }
            vec![
                Some(Tensor::from_vec([n, c, h, w], dx).expect("sized")),
                Some(Tensor::from_vec([1, c, 1, 1], dgain).expect("sized")),
                Some(Tensor::from_vec([1, c, 1, 1], dbias).expect("sized")),
            ]
        })
    }

    /// `w / (u^T W v)` where `W` is `w` flattened to `[shape[0], rest]` and
    /// `u`, `v` are fixed singular-vector estimates. The gradient flows
    /// through the estimated singular value as well as the weight.
    pub fn spectral_scale(&mut self, weight: Var, u: &[T], v: &[T], floor: T) -> Var {
        let wv = self.shared(weight);
        let rows = wv.shape()[0];
        let cols = wv.len() / rows;
        assert_eq!(u.len(), rows, "spectral u length");
        assert_eq!(v.len(), cols, "spectral v length");
        let sigma = wv
            .data()
            .chunks_exact(cols)
            .zip(u)
            .map(|(row, &ui)| ui * row.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>())
            .sum::<T>()
            .max(floor);
        let out = wv.map(|x| x / sigma);
        let (u, v) = (u.to_vec(), v.to_vec());
        self.push(out, &[weight], move |g| {
            let dot: T = g.data().iter().zip(wv.data()).map(|(&a, &b)| a * b).sum();
            let coef = dot / (sigma * sigma);
            let mut d = g.map(|x| x / sigma);
            for (i, row) in d.data_mut().chunks_exact_mut(cols).enumerate() {
                for (j, val) in row.iter_mut().enumerate() {
                    *val -= coef * u[i] * v[j];
                }
            }
            vec![Some(d)]
        })
    }
}
