//! Convolutions lowered to im2col + GEMM, one batch item per rayon task.


use rayon::prelude::*;

use super::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn conv2d_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    assert!(input + 2 * pad >= kernel, "kernel {kernel} larger than padded input {input}+2*{pad}");
    (input + 2 * pad - kernel) / stride + 1
}

pub fn conv_transpose2d_out_size(input: usize, kernel: usize, stride: usize, pad: usize, out_pad: usize) -> usize {
    (input - 1) * stride + kernel + out_pad - 2 * pad
}

/// Geometry shared by a conv and its adjoint: an image of `c x h x w`
/// sampled by a `k x k` window at stride `s` with zero padding `p`, giving a
/// `gh x gw` grid of columns.
#[derive(Clone, Copy, Debug)]
struct Patches {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    gh: usize,
    gw: usize,
}

impl Patches {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.gh * self.gw
    }

    /// `cols[(ci*k + ky)*k + kx, oy*gw + ox] = img[ci, oy*s + ky - p, ox*s + kx - p]`.
    fn im2col<T: Scalar>(&self, img: &[T], cols: &mut [T]) {
        let Patches { c, h, w, k, s, p, gh, gw } = *self;
        let l = gh * gw;
        for ci in 0..c {
            let plane = &img[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * l..][..l];
                    for oy in 0..gh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let dst = &mut row[oy * gw..(oy + 1) * gw];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p as isize;
                            *d = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Patches::im2col`]: scatter-adds columns back into `img`.
    fn col2im<T: Scalar>(&self, cols: &[T], img: &mut [T]) {
        let Patches { c, h, w, k, s, p, gh, gw } = *self;
        let l = gh * gw;
        for ci in 0..c {
            let plane = &mut img[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * l..][..l];
                    for oy in 0..gh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &v) in row[oy * gw..(oy + 1) * gw].iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Row-major `a (m x k) * b (k x n)` accumulated into `c`, optionally with
/// either operand transposed in place.
fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    beta: T,
    c: &mut [T],
) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    T::gemm(m, k, n, T::one(), a, rsa, csa, b, rsb, csb, beta, c, n as isize, 1);
}

fn sum_in_order<T: Scalar>(parts: Vec<Vec<T>>, len: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); len];
    for part in parts {
        for (a, b) in acc.iter_mut().zip(part) {
            *a += b;
        }
    }
    acc
}

impl<T: Scalar> Graph<T> {
    /// Cross-correlation with weight `[c_out, c_in, k, k]`, optional bias
    /// `[1, c_out, 1, 1]`, and zero padding.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Var {
        let [n, c_in, h, w] = self.value(x).shape();
        let [c_out, wc_in, k, k2] = self.value(weight).shape();
        assert_eq!(k, k2, "square kernels only");
        assert_eq!(c_in, wc_in, "conv2d input has {c_in} channels, weight expects {wc_in}");
        let geo = Patches {
            c: c_in,
            h,
            w,
            k,
            s: stride,
            p: pad,
            gh: conv2d_out_size(h, k, stride, pad),
            gw: conv2d_out_size(w, k, stride, pad),
        };
        let (rows, l) = (geo.rows(), geo.cols());
        let xv = self.shared(x);
        let wv = self.shared(weight);
        let bv = bias.map(|b| self.shared(b));

        let items: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut cols = vec![T::zero(); rows * l];
                geo.im2col(xv.item(i), &mut cols);
                let mut out = vec![T::zero(); c_out * l];
                if let Some(b) = &bv {
                    for (co, chunk) in out.chunks_exact_mut(l).enumerate() {
                        chunk.fill(b.data()[co]);
                    }
                }
                matmul(c_out, rows, l, wv.data(), false, &cols, false, T::one(), &mut out);
                out
            })
            .collect();
        let out = Tensor::from_vec([n, c_out, geo.gh, geo.gw], items.concat()).expect("sized");

        let mut parents = vec![x, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        self.push(out, &parents, move |g| {
            let per_item: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let gi = g.item(i);
                    let mut cols = vec![T::zero(); rows * l];
                    geo.im2col(xv.item(i), &mut cols);
                    let mut dw = vec![T::zero(); c_out * rows];
                    matmul(c_out, l, rows, gi, false, &cols, true, T::zero(), &mut dw);
                    let mut dcols = vec![T::zero(); rows * l];
                    matmul(rows, c_out, l, wv.data(), true, gi, false, T::zero(), &mut dcols);
                    let mut dx = vec![T::zero(); c_in * h * w];
                    geo.col2im(&dcols, &mut dx);
                    let db = if has_bias {
                        gi.chunks_exact(l).map(|r| r.iter().copied().sum()).collect()
                    } else {
                        Vec::new()
                    };
                    (dx, dw, db)
                })
                .collect();
            let mut dx = Vec::with_capacity(n * c_in * h * w);
            let mut dws = Vec::with_capacity(n);
            let mut dbs = Vec::with_capacity(n);
            for (a, b, c) in per_item {
                dx.extend(a);
                dws.push(b);
                dbs.push(c);
            }
            let mut grads = vec![
                Some(Tensor::from_vec([n, c_in, h, w], dx).expect("sized")),
                Some(Tensor::from_vec([c_out, c_in, k, k], sum_in_order(dws, c_out * rows)).expect("sized")),
            ];
            if has_bias {
                grads.push(Some(Tensor::from_vec([1, c_out, 1, 1], sum_in_order(dbs, c_out)).expect("sized")));
            }
            grads
        })
    }

    /// Transposed convolution with weight `[c_in, c_out, k, k]`: the adjoint
    /// of [`Graph::conv2d`] with the same stride and padding, plus
    /// `out_pad` extra rows/cols at the bottom/right.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Var {
        let [n, c_in, h, w] = self.value(x).shape();
        let [wc_in, c_out, k, k2] = self.value(weight).shape();
        assert_eq!(k, k2, "square kernels only");
        assert_eq!(c_in, wc_in, "conv_transpose2d input has {c_in} channels, weight expects {wc_in}");
        assert!(out_pad < stride, "output padding must be smaller than stride");
        let (oh, ow) = (
            conv_transpose2d_out_size(h, k, stride, pad, out_pad),
            conv_transpose2d_out_size(w, k, stride, pad, out_pad),
        );
        let geo = Patches {
            c: c_out,
            h: oh,
            w: ow,
            k,
            s: stride,
            p: pad,
            gh: h,
            gw: w,
        };
        let (rows, l) = (geo.rows(), geo.cols());
        let xv = self.shared(x);
        let wv = self.shared(weight);
        let bv = bias.map(|b| self.shared(b));

        let items: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut cols = vec![T::zero(); rows * l];
                matmul(rows, c_in, l, wv.data(), true, xv.item(i), false, T::zero(), &mut cols);
                let mut out = vec![T::zero(); c_out * oh * ow];
                geo.col2im(&cols, &mut out);
                if let Some(b) = &bv {
                    for (co, chunk) in out.chunks_exact_mut(oh * ow).enumerate() {
                        let bias = b.data()[co];
                        chunk.iter_mut().for_each(|v| *v += bias);
                    }
                }
                out
            })
            .collect();
        let out = Tensor::from_vec([n, c_out, oh, ow], items.concat()).expect("sized");

        let mut parents = vec![x, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        self.push(out, &parents, move |g| {
            let per_item: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let gi = g.item(i);
                    let mut dcols = vec![T::zero(); rows * l];
                    geo.im2col(gi, &mut dcols);
                    let mut dx = vec![T::zero(); c_in * l];
                    matmul(c_in, rows, l, wv.data(), false, &dcols, false, T::zero(), &mut dx);
                    let mut dw = vec![T::zero(); c_in * rows];
                    matmul(c_in, l, rows, xv.item(i), false, &dcols, true, T::zero(), &mut dw);
                    let db = if has_bias {
                        gi.chunks_exact(oh * ow).map(|r| r.iter().copied().sum()).collect()
                    } else {
                        Vec::new()
                    };
                    (dx, dw, db)
                })
                .collect();
            let mut dx = Vec::with_capacity(n * c_in * l);
            let mut dws = Vec::with_capacity(n);
            let mut dbs = Vec::with_capacity(n);
            for (a, b, c) in per_item {
                dx.extend(a);
                dws.push(b);
                dbs.push(c);
            }
            let mut grads = vec![
                Some(Tensor::from_vec([n, c_in, h, w], dx).expect("sized")),
                Some(Tensor::from_vec([c_in, c_out, k, k], sum_in_order(dws, c_in * rows)).expect("sized")),
            ];
            if has_bias {
                grads.push(Some(Tensor::from_vec([1, c_out, 1, 1], sum_in_order(dbs, c_out)).expect("sized")));
            }
            grads
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::max_rel_error;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rnd(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        Tensor::uniform(shape, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Direct seven-loop convolution.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], s: usize, p: usize) -> Tensor<f64> {
        let [n, ci, h, wd] = x.shape();
        let [co, _, k, _] = w.shape();
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (wd + 2 * p - k) / s + 1;
        let mut out = Tensor::zeros([n, co, oh, ow]);
        for i in 0..n {
            for o in 0..co {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = b[o];
                        for c in 0..ci {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (y * s + ky) as isize - p as isize;
                                    let ix = (xx * s + kx) as isize - p as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += x.get(i, c, iy as usize, ix as usize) * w.get(o, c, ky, kx);
                                    }
                                }
                            }
                        }
                        out.set(i, o, y, xx, acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_matches_direct_loops() {
        for (s, p, k) in [(1, 0, 3), (2, 1, 4), (1, 1, 4), (2, 1, 3)] {
            let x = rnd([2, 3, 9, 8], 1);
            let w = rnd([4, 3, k, k], 2);
            let b = [0.1, -0.2, 0.3, 0.0];
            let mut g = Graph::no_grad();
            let xv = g.constant(x.clone());
            let wv = g.constant(w.clone());
            let bv = g.constant(Tensor::from_vec([1, 4, 1, 1], b.to_vec()).unwrap());
            let y = g.conv2d(xv, wv, Some(bv), s, p);
            let expect = naive_conv(&x, &w, &b, s, p);
            assert_eq!(g.value(y).shape(), expect.shape());
            assert!(g.value(y).max_abs_diff(&expect) < 1e-12);
        }
    }

    #[test]
    fn transposed_conv_is_the_adjoint() {
        // <conv(x), y> == <x, conv_t(y)> for matching geometry.
        let x = rnd([1, 3, 8, 8], 3);
        let w = rnd([5, 3, 3, 3], 4);
        let mut g = Graph::no_grad();
        let xv = g.constant(x.clone());
        let wv = g.constant(w.clone());
        let cx = g.conv2d(xv, wv, None, 2, 1);
        let y = rnd(g.value(cx).shape(), 5);
        let yv = g.constant(y.clone());
        let ty = g.conv_transpose2d(yv, wv, None, 2, 1, 1);
        assert_eq!(g.value(ty).shape(), [1, 3, 8, 8]);
        let lhs: f64 = g.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(g.value(ty).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let w = rnd([4, 3, 3, 3], 6);
        let x = rnd([2, 3, 7, 7], 7);
        let probes: Vec<usize> = (0..x.len()).step_by(5).collect();
        let r = rnd([2, 4, 4, 4], 8);
        let err = max_rel_error(&x, &probes, |g, x| {
            let wv = g.constant(w.clone());
            let y = g.conv2d(x, wv, None, 2, 1);
            let rv = g.constant(r.clone());
            let m = g.mul(y, rv);
            g.sum(m)
        });
        assert!(err < 1e-6, "input grad {err}");

        let probes: Vec<usize> = (0..w.len()).collect();
        let err = max_rel_error(&w, &probes, |g, wv| {
            let xv = g.constant(x.clone());
            let y = g.conv2d(xv, wv, None, 2, 1);
            let rv = g.constant(r.clone());
            let m = g.mul(y, rv);
            g.sum(m)
        });
        assert!(err < 1e-6, "weight grad {err}");

        let wt = rnd([3, 2, 3, 3], 9);
        let rt = rnd([2, 2, 14, 14], 10);
        let probes: Vec<usize> = (0..wt.len()).collect();
        let err = max_rel_error(&wt, &probes, |g, wv| {
            let xv = g.constant(x.clone());
            let y = g.conv_transpose2d(xv, wv, None, 2, 1, 1);
            let rv = g.constant(rt.clone());
            let m = g.mul(y, rv);
            g.sum(m)
        });
        assert!(err < 1e-6, "transposed weight grad {err}");

        let probes: Vec<usize> = (0..x.len()).step_by(3).collect();
        let err = max_rel_error(&x, &probes, |g, xv| {
            let wv = g.constant(wt.clone());
            let b = g.constant(Tensor::from_vec([1, 2, 1, 1], vec![0.5, -0.5]).unwrap());
            let y = g.conv_transpose2d(xv, wv, Some(b), 2, 1, 1);
            let rv = g.constant(rt.clone());
            let m = g.mul(y, rv);
            g.sum(m)
        });
        assert!(err < 1e-6, "transposed input grad {err}");
    }

    #[test]
    fn bias_gradient_is_spatial_sum() {
        let x = rnd([2, 1, 5, 5], 11);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let wv = g.constant(Tensor::zeros([2, 1, 3, 3]));
        let b = g.param(std::sync::Arc::new(Tensor::zeros([1, 2, 1, 1])));
        let y = g.conv2d(xv, wv, Some(b), 1, 1);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert_eq!(grads.get(b).unwrap().data(), &[50.0, 50.0]);
    }
}
