//! Dense 2-D convolution via im2col and a blocked GEMM.

use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;

/// `C = A * B + beta * C` with optional transposes; all buffers row-major.
///
/// `A` is `m x k` (stored `k x m` when `trans_a`), `B` is `k x n` (stored
/// `n x k` when `trans_b`), `C` is `m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], trans_a: bool, b: &[f64], trans_b: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted buffer lengths cover every index reachable from
    // the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn out_size(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

/// Unfolds `x` into a `(in_ch*k*k) x (oh*ow)` matrix (zero padding).
pub(crate) fn im2col(x: &Tensor, s: &ConvShape) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (s.out_size(x.h), s.out_size(x.w));
    let p = oh * ow;
    let k = s.kernel;
    let mut cols = vec![0.0; s.patch_len() * p];
    for ci in 0..x.c {
        let plane = x.plane(ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                    for ox in 0..ow {
                        let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                        if ix >= 0 && ix < x.w as isize {
                            dst[oy * ow + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    (cols, oh, ow)
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im(cols: &[f64], s: &ConvShape, h: usize, w: usize) -> Tensor {
    let (oh, ow) = (s.out_size(h), s.out_size(w));
    let p = oh * ow;
    let k = s.kernel;
    let mut out = Tensor::zeros(s.in_ch, h, w);
    for ci in 0..s.in_ch {
        let plane = out.plane_mut(ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Standard convolution layer; weights are `out x in x k x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub shape: ConvShape,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv2d {
    /// Registers fan-in uniform parameters `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(store: &mut ParamStore, name: &str, shape: ConvShape, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (shape.patch_len() as f64).sqrt();
        let weight = store.add_uniform(
            format!("{name}.weight"),
            vec![shape.out_ch, shape.in_ch, shape.kernel, shape.kernel],
            bound,
            rng,
        );
        let bias = store.add_uniform(format!("{name}.bias"), vec![shape.out_ch], bound, rng);
        Self { shape, weight, bias }
    }

    /// Convolution without the bias term.
    pub(crate) fn linear_part(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.shape.in_ch, "conv input channels");
        let (cols, oh, ow) = im2col(x, &self.shape);
        let mut out = Tensor::zeros(self.shape.out_ch, oh, ow);
        gemm(
            self.shape.out_ch,
            self.shape.patch_len(),
            oh * ow,
            store.get(self.weight),
            false,
            &cols,
            false,
            0.0,
            &mut out.data,
        );
        out
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut out = self.linear_part(store, x);
        let bias = store.get(self.bias);
        for (o, &b) in bias.iter().enumerate() {
            for v in out.plane_mut(o) {
                *v += b;
            }
        }
        out
    }

    /// Backward of [`Conv2d::linear_part`]: accumulates the weight gradient
    /// and returns the input gradient when requested.
    pub(crate) fn linear_backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut Grads,
        want_input: bool,
    ) -> Option<Tensor> {
        let (cols, oh, ow) = im2col(x, &self.shape);
        let p = oh * ow;
        let j = self.shape.patch_len();
        assert_eq!(grad_out.data.len(), self.shape.out_ch * p, "conv grad shape");
        gemm(
            self.shape.out_ch,
            p,
            j,
            &grad_out.data,
            false,
            &cols,
            true,
            1.0,
            grads.get_mut(self.weight),
        );
        if !want_input {
            return None;
        }
        let mut dcols = vec![0.0; j * p];
        gemm(
            j,
            self.shape.out_ch,
            p,
            store.get(self.weight),
            true,
            &grad_out.data,
            false,
            0.0,
            &mut dcols,
        );
        Some(col2im(&dcols, &self.shape, x.h, x.w))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut Grads,
        want_input: bool,
    ) -> Option<Tensor> {
        let db = grads.get_mut(self.bias);
        for (o, slot) in db.iter_mut().enumerate() {
            *slot += grad_out.plane(o).iter().sum::<f64>();
        }
        self.linear_backward(store, x, grad_out, grads, want_input)
    }
}

/// Reference convolution with explicit loops, used to check the GEMM path.
#[cfg(test)]
pub(crate) fn naive_conv(x: &Tensor, weight: &[f64], bias: &[f64], s: &ConvShape) -> Tensor {
    let (oh, ow) = (s.out_size(x.h), s.out_size(x.w));
    let k = s.kernel;
    let mut out = Tensor::zeros(s.out_ch, oh, ow);
    for o in 0..s.out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[o];
                for ci in 0..s.in_ch {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                            let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                acc += weight[((o * s.in_ch + ci) * k + ky) * k + kx]
                                    * x.data[(ci * x.h + iy as usize) * x.w + ix as usize];
                            }
                        }
                    }
                }
                out.data[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn gemm_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(stride, pad) in &[(1, 1), (2, 1), (1, 0), (2, 0)] {
            let shape = ConvShape {
                in_ch: 3,
                out_ch: 4,
                kernel: 3,
                stride,
                pad,
            };
            let mut store = ParamStore::new();
            let conv = Conv2d::new(&mut store, "c", shape, &mut rng);
            let x = random_tensor(&mut rng, 3, 7, 6);
            let fast = conv.forward(&store, &x);
            let slow = naive_conv(&x, store.get(conv.weight), store.get(conv.bias), &shape);
            assert_eq!((fast.h, fast.w), (slow.h, slow.w));
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = ConvShape {
            in_ch: 2,
            out_ch: 3,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let mut store = ParamStore::new();
        let conv = Conv2d::new(&mut store, "c", shape, &mut rng);
        let x = random_tensor(&mut rng, 2, 5, 6);
        let probe = random_tensor(&mut rng, 3, shape.out_size(5), shape.out_size(6));
        let loss = |store: &ParamStore, x: &Tensor| -> f64 {
            conv.forward(store, x).data.iter().zip(&probe.data).map(|(a, b)| a * b).sum()
        };
        let mut grads = store.zero_grads();
        let dx = conv.backward(&store, &x, &probe, &mut grads, true).unwrap();
        let eps = 1e-6;
        for i in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[i] += eps;
            let mut xm = x.clone();
            xm.data[i] -= eps;
            let num = (loss(&store, &xp) - loss(&store, &xm)) / (2.0 * eps);
            assert!((num - dx.data[i]).abs() < 1e-7);
        }
        for id in [conv.weight, conv.bias] {
            for i in 0..store.get(id).len() {
                let mut sp = store.clone();
                sp.get_mut(id)[i] += eps;
                let mut sm = store.clone();
                sm.get_mut(id)[i] -= eps;
                let num = (loss(&sp, &x) - loss(&sm, &x)) / (2.0 * eps);
                assert!((num - grads.get(id)[i]).abs() < 1e-7);
            }
        }
    }
}
