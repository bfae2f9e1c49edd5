//! Scalar-valued loss primitives.

use std::sync::Arc;

use super::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Graph<T> {
    /// Mean binary cross-entropy of logits against an all-real (`true`) or
    /// all-fake target: `mean(-log sigmoid(z))` or `mean(-log(1 - sigmoid(z)))`.
    pub fn bce_with_logits(&mut self, logits: Var, real: bool) -> Var {
        let zv = self.shared(logits);
        let n = T::from_usize(zv.len()).unwrap();
        let sign = if real { -T::one() } else { T::one() };
        let total: T = zv.data().iter().map(|&z| softplus(sign * z)).sum();
        self.push(Tensor::scalar(total / n), &[logits], move |g| {
            let s = g.to_scalar() / n;
            let target = if real { T::one() } else { T::zero() };
            vec![Some(zv.map(|z| (sigmoid(z) - target) * s))]
        })
    }

    /// Mean absolute difference.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "l1 shapes");
        let diff = Arc::new(self.value(a).zip_map(self.value(b), |x, y| x - y));
        let n = T::from_usize(diff.len()).unwrap();
        let total: T = diff.data().iter().map(|d| d.abs()).sum();
        self.push(Tensor::scalar(total / n), &[a, b], move |g| {
            let s = g.to_scalar() / n;
            let da = diff.map(|d| {
                if d > T::zero() {
                    s
                } else if d < T::zero() {
                    -s
                } else {
                    T::zero()
                }
            });
            let db = da.map(|v| -v);
            vec![Some(da), Some(db)]
        })
    }

    /// Per-item Gram matrix `F F^T / (h*w*c)` with `F` the `[c, h*w]` feature
    /// matrix, returned as `[n, 1, c, c]`.
    pub fn gram(&mut self, x: Var) -> Var {
        let xv = self.shared(x);
        let [n, c, h, w] = xv.shape();
        let hw = h * w;
        let norm = T::one() / T::from_usize(hw * c).unwrap();
        let mut out = vec![T::zero(); n * c * c];
        for i in 0..n {
            T::gemm(
                c,
                hw,
                c,
                norm,
                xv.item(i),
                hw as isize,
                1,
                xv.item(i),
                1,
                hw as isize,
                T::zero(),
                &mut out[i * c * c..(i + 1) * c * c],
                c as isize,
                1,
            );
        }
        let out = Tensor::from_vec([n, 1, c, c], out).expect("sized");
        self.push(out, &[x], move |g| {
            let mut d = vec![T::zero(); n * c * hw];
            for i in 0..n {
                // dF = (G + G^T) F * norm
                let gi = &g.data()[i * c * c..(i + 1) * c * c];
                let mut sym = vec![T::zero(); c * c];
                for r in 0..c {
                    for s in 0..c {
                        sym[r * c + s] = gi[r * c + s] + gi[s * c + r];
                    }
                }
                T::gemm(
                    c,
                    c,
                    hw,
                    norm,
                    &sym,
                    c as isize,
                    1,
                    xv.item(i),
                    hw as isize,
                    1,
                    T::zero(),
                    &mut d[i * c * hw..(i + 1) * c * hw],
                    hw as isize,
                    1,
                );
            }
            vec![Some(Tensor::from_vec([n, c, h, w], d).expect("sized"))]
        })
    }
}
