//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::model::params::ParamStore;
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Updates applied so far.
    pub t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros = || params.iter().map(|(_, p)| Tensor::zeros(p.shape())).collect();
        Self { lr, beta1, beta2, t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) {
        assert_eq!(grads.len(), self.m.len(), "one gradient per parameter");
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2): (T, T) = (lit(self.beta1), lit(self.beta2));
        let c1: T = lit(1.0 - self.beta1.powi(t));
        let c2: T = lit(1.0 - self.beta2.powi(t));
        let lr: T = lit(self.lr);
        let eps: T = lit(ADAM_EPS);
        let one = T::one();
        for (((p, g), m), v) in params.values_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Moments as named tensors, `{prefix}.m.{param}` and `{prefix}.v.{param}`.
    pub fn named_moments(&self, params: &ParamStore<T>, prefix: &str) -> Vec<(String, Tensor<T>)> {
        let names: Vec<&str> = params.iter().map(|(n, _)| n).collect();
        let m = names.iter().zip(&self.m).map(|(n, t)| (format!("{prefix}.m.{n}"), t.clone()));
        let v = names.iter().zip(&self.v).map(|(n, t)| (format!("{prefix}.v.{n}"), t.clone()));
        m.chain(v).collect()
    }

    /// Restores moments written by [`Adam::named_moments`].
    pub fn load_moments(
        &mut self,
        params: &ParamStore<T>,
        prefix: &str,
        tensors: &mut std::collections::HashMap<String, Tensor<T>>,
    ) -> Result<()> {
        for (i, (name, p)) in params.iter().enumerate() {
            for (kind, slot) in [("m", &mut self.m[i]), ("v", &mut self.v[i])] {
                let key = format!("{prefix}.{kind}.{name}");
                let t = tensors
                    .remove(&key)
                    .ok_or_else(|| Error::Format(format!("optimizer state lacks {key}")))?;
                if t.shape() != p.shape() {
                    return Err(Error::Format(format!("optimizer tensor {key} has the wrong shape")));
                }
                *slot = t;
            }
        }
        Ok(())
    }
}
