//! Partial convolution: convolution restricted to valid inputs, rescaled by
//! the fraction of the window that is valid, with mask propagation.
//!
//! For every output position with window mask sum `s > 0`:
//! `x' = W^T (X * M) * (k*k / s) + b` and `m' = 1`; otherwise `x' = 0`,
//! `m' = 0`. `k*k` counts every window position, padding included, so the
//! renormalization holds exactly for constant inputs at the image border too.

use rand_chacha::ChaCha8Rng;

use super::conv::{Conv2d, ConvShape};
use super::params::{Grads, ParamStore};
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialConv2d {
    pub conv: Conv2d,
}

/// Result of one partial-convolution step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PartialConvOutput {
    pub features: Tensor,
    pub mask: Vec<u8>,
    /// Per-output-position renormalization factor (0 where invalid).
    pub scale: Vec<f64>,
}

/// Zeroes every position where `mask == 0`.
pub(crate) fn apply_mask(x: &Tensor, mask: &[u8]) -> Tensor {
    assert_eq!(mask.len(), x.plane_len(), "mask size");
    let mut out = Tensor::zeros(x.c, x.h, x.w);
    for c in 0..x.c {
        let src = x.plane(c);
        let dst = out.plane_mut(c);
        for ((d, &s), &m) in dst.iter_mut().zip(src).zip(mask) {
            if m != 0 {
                *d = s;
            }
        }
    }
    out
}

/// Number of valid inputs under each output window.
pub(crate) fn window_counts(mask: &[u8], h: usize, w: usize, shape: &ConvShape) -> (Vec<usize>, usize, usize) {
    let (oh, ow) = (shape.out_size(h), shape.out_size(w));
    let k = shape.kernel;
    let mut counts = vec![0usize; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut s = 0;
            for ky in 0..k {
                let iy = (oy * shape.stride + ky) as isize - shape.pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * shape.stride + kx) as isize - shape.pad as isize;
                    if ix >= 0 && ix < w as isize && mask[iy as usize * w + ix as usize] != 0 {
                        s += 1;
                    }
                }
            }
            counts[oy * ow + ox] = s;
        }
    }
    (counts, oh, ow)
}

impl PartialConv2d {
    pub fn new(store: &mut ParamStore, name: &str, shape: ConvShape, rng: &mut ChaCha8Rng) -> Self {
        assert!(shape.kernel % 2 == 1, "partial convolution kernels must be odd");
        Self {
            conv: Conv2d::new(store, name, shape, rng),
        }
    }

    pub fn shape(&self) -> &ConvShape {
        &self.conv.shape
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor, mask: &[u8]) -> PartialConvOutput {
        let masked = apply_mask(x, mask);
        let raw = self.conv.linear_part(store, &masked);
        let (counts, _, _) = window_counts(mask, x.h, x.w, &self.conv.shape);
        let window = (self.conv.shape.kernel * self.conv.shape.kernel) as f64;
        let scale: Vec<f64> = counts
            .iter()
            .map(|&s| if s > 0 { window / s as f64 } else { 0.0 })
            .collect();
        let bias = store.get(self.conv.bias);
        let mut features = raw;
        for (o, &b) in bias.iter().enumerate() {
            for (v, &sc) in features.plane_mut(o).iter_mut().zip(&scale) {
                *v = if sc > 0.0 { *v * sc + b } else { 0.0 };
            }
        }
        let mask_out = counts.iter().map(|&s| u8::from(s > 0)).collect();
        PartialConvOutput {
            features,
            mask: mask_out,
            scale,
        }
    }

    /// Accumulates parameter gradients and returns the input gradient
    /// (zero wherever the input mask is zero).
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        mask: &[u8],
        out: &PartialConvOutput,
        grad_out: &Tensor,
        grads: &mut Grads,
        want_input: bool,
    ) -> Option<Tensor> {
        let mut scaled = grad_out.clone();
        let db = grads.get_mut(self.conv.bias);
        for (o, slot) in db.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (g, &sc) in scaled.plane_mut(o).iter_mut().zip(&out.scale) {
                if sc > 0.0 {
                    acc += *g;
                    *g *= sc;
                } else {
                    *g = 0.0;
                }
            }
            *slot += acc;
        }
        let masked = apply_mask(x, mask);
        self.conv
            .linear_backward(store, &masked, &scaled, grads, want_input)
            .map(|dx| apply_mask(&dx, mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn layer_with(weight: Vec<f64>, bias: Vec<f64>, shape: ConvShape) -> (ParamStore, PartialConv2d) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = PartialConv2d::new(&mut store, "p", shape, &mut rng);
        store.get_mut(layer.conv.weight).copy_from_slice(&weight);
        store.get_mut(layer.conv.bias).copy_from_slice(&bias);
        (store, layer)
    }

    #[test]
    fn worked_example_three_by_three() {
        let shape = ConvShape {
            in_ch: 1,
            out_ch: 1,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let (store, layer) = layer_with(vec![1.0; 9], vec![0.0], shape);
        let x = Tensor::from_vec(1, 3, 3, (1..=9).map(f64::from).collect());
        let mask = [1, 1, 0, 1, 1, 0, 0, 0, 0];
        let out = layer.forward(&store, &x, &mask);
        assert_eq!(out.features.data[4], 27.0);
        assert_eq!(out.mask[4], 1);
    }

    #[test]
    fn empty_window_outputs_zero() {
        let shape = ConvShape {
            in_ch: 1,
            out_ch: 2,
            kernel: 3,
            stride: 1,
            pad: 1,
        };
        let (store, layer) = layer_with(vec![0.5; 18], vec![3.0, -1.0], shape);
        let x = Tensor::from_vec(1, 1, 5, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let mask = [1, 0, 0, 0, 0];
        let out = layer.forward(&store, &x, &mask);
        assert_eq!(out.mask, vec![1, 1, 0, 0, 0]);
        assert_eq!(out.features.plane(0)[2..], [0.0, 0.0, 0.0]);
        assert_eq!(out.features.plane(1)[2..], [0.0, 0.0, 0.0]);
    }
}
