//! Elementwise arithmetic, reductions, activations and layout ops.

use std::sync::Arc;

use super::{Graph, Var};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

impl<T: Scalar> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, &[a, b], |g| vec![Some(g.clone()), Some(g.clone())])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "sub shapes");
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, &[a, b], |g| vec![Some(g.clone()), Some(g.map(|v| -v))])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shapes");
        let (av, bv) = (self.shared(a), self.shared(b));
        let out = av.zip_map(&bv, |x, y| x * y);
        self.push(out, &[a, b], move |g| {
            vec![Some(g.zip_map(&bv, |x, y| x * y)), Some(g.zip_map(&av, |x, y| x * y))]
        })
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, &[a], move |g| vec![Some(g.map(|x| x * s))])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let shape = self.value(a).shape();
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, &[a], move |g| vec![Some(Tensor::full(shape, g.to_scalar()))])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let shape = self.value(a).shape();
        let n = T::from_usize(self.value(a).len()).unwrap();
        let out = Tensor::scalar(self.value(a).sum() / n);
        self.push(out, &[a], move |g| vec![Some(Tensor::full(shape, g.to_scalar() / n))])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, T::zero())
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let av = self.shared(a);
        let out = av.map(|x| if x > T::zero() { x } else { x * slope });
        self.push(out, &[a], move |g| {
            vec![Some(g.zip_map(&av, |g, x| if x > T::zero() { g } else { g * slope }))]
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = Arc::new(self.value(a).map(T::tanh));
        let y = out.clone();
        let v = self.push((*out).clone(), &[a], move |g| {
            vec![Some(g.zip_map(&y, |g, y| g * (T::one() - y * y)))]
        });
        v
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Var {
        let shapes: Vec<[usize; 4]> = parts.iter().map(|&p| self.value(p).shape()).collect();
        let [n, _, h, w] = shapes[0];
        for s in &shapes {
            assert!(s[0] == n && s[2] == h && s[3] == w, "concat shapes {shapes:?}");
        }
        let c_total: usize = shapes.iter().map(|s| s[1]).sum();
        let hw = h * w;
        let mut out = Vec::with_capacity(n * c_total * hw);
        for item in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).item(item));
            }
        }
        let out = Tensor::from_vec([n, c_total, h, w], out).expect("sized");
        self.push(out, parts, move |g| {
            let mut grads: Vec<Vec<T>> = shapes.iter().map(|s| Vec::with_capacity(s.iter().product())).collect();
            for item in 0..n {
                let mut off = item * c_total * hw;
                for (k, s) in shapes.iter().enumerate() {
                    let len = s[1] * hw;
                    grads[k].extend_from_slice(&g.data()[off..off + len]);
                    off += len;
                }
            }
            grads
                .into_iter()
                .zip(&shapes)
                .map(|(d, &s)| Some(Tensor::from_vec(s, d).expect("sized")))
                .collect()
        })
    }

    /// Reflection padding (edge pixel not repeated) on both spatial axes.
    pub fn pad_reflect(&mut self, a: Var, pad: usize) -> Var {
        let [n, c, h, w] = self.value(a).shape();
        assert!(pad < h && pad < w, "reflection pad {pad} too large for {h}x{w}");
        let (oh, ow) = (h + 2 * pad, w + 2 * pad);
        let reflect = move |i: isize, len: usize| -> usize {
            let len = len as isize;
            let mut i = i;
            if i < 0 {
                i = -i;
            }
            if i >= len {
                i = 2 * (len - 1) - i;
            }
            i as usize
        };
        // Source index of every output pixel.
        let map: Arc<Vec<usize>> = Arc::new(
            (0..oh)
                .flat_map(|y| {
                    (0..ow).map(move |x| {
                        reflect(y as isize - pad as isize, h) * w + reflect(x as isize - pad as isize, w)
                    })
                })
                .collect(),
        );
        let src = self.value(a);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in src.data().chunks_exact(h * w) {
            out.extend(map.iter().map(|&i| plane[i]));
        }
        let out = Tensor::from_vec([n, c, oh, ow], out).expect("sized");
        self.push(out, &[a], move |g| {
            let mut d = vec![T::zero(); n * c * h * w];
            for (dst, plane) in d.chunks_exact_mut(h * w).zip(g.data().chunks_exact(oh * ow)) {
                for (&i, &v) in map.iter().zip(plane) {
                    dst[i] += v;
                }
            }
            vec![Some(Tensor::from_vec([n, c, h, w], d).expect("sized"))]
        })
    }

    /// 2x2 average pooling with stride 2 (odd trailing rows/cols dropped).
    pub fn avg_pool2(&mut self, a: Var) -> Var {
        let [n, c, h, w] = self.value(a).shape();
        let (oh, ow) = (h / 2, w / 2);
        let quarter = lit::<T>(0.25);
        let src = self.value(a);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        for i in 0..n {
            for ch in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        let s = src.get(i, ch, 2 * y, 2 * x)
                            + src.get(i, ch, 2 * y + 1, 2 * x)
                            + src.get(i, ch, 2 * y, 2 * x + 1)
                            + src.get(i, ch, 2 * y + 1, 2 * x + 1);
                        out.set(i, ch, y, x, s * quarter);
                    }
                }
            }
        }
        self.push(out, &[a], move |g| {
            let mut d = Tensor::zeros([n, c, h, w]);
            for i in 0..n {
                for ch in 0..c {
                    for y in 0..oh {
                        for x in 0..ow {
                            let v = g.get(i, ch, y, x) * quarter;
                            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                d.set(i, ch, 2 * y + dy, 2 * x + dx, v);
                            }
                        }
                    }
                }
            }
            vec![Some(d)]
        })
    }

    /// 2x2 max pooling with stride 2.
    pub fn max_pool2(&mut self, a: Var) -> Var {
        let [n, c, h, w] = self.value(a).shape();
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(a);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut arg = vec![0usize; n * c * oh * ow];
        let mut k = 0;
        for i in 0..n {
            for ch in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut best = src.index(i, ch, 2 * y, 2 * x);
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let j = src.index(i, ch, 2 * y + dy, 2 * x + dx);
                            if src.data()[j] > src.data()[best] {
                                best = j;
                            }
                        }
                        arg[k] = best;
                        out.data_mut()[k] = src.data()[best];
                        k += 1;
                    }
                }
            }
        }
        self.push(out, &[a], move |g| {
            let mut d = Tensor::zeros([n, c, h, w]);
            for (&j, &v) in arg.iter().zip(g.data()) {
                d.data_mut()[j] += v;
            }
            vec![Some(d)]
        })
    }

    /// `x * scale[c] + shift[c]` with constant per-channel coefficients.
    pub fn channel_affine(&mut self, a: Var, scale: &[T], shift: &[T]) -> Var {
        let shape = self.value(a).shape();
        let [n, c, h, w] = shape;
        assert_eq!(scale.len(), c);
        assert_eq!(shift.len(), c);
        let hw = h * w;
        let mut out = self.value(a).clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let ch = (k / hw) % c;
            *v = *v * scale[ch] + shift[ch];
        }
        let scale = scale.to_vec();
        self.push(out, &[a], move |g| {
            let mut d = g.clone();
            for (k, v) in d.data_mut().iter_mut().enumerate() {
                *v *= scale[(k / hw) % c];
            }
            let _ = n;
            vec![Some(d)]
        })
    }
}
