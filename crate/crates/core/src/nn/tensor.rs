/// A single-sample `channels x height x width` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor buffer length");
        Self { c, h, w, data }
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Stacks channels of `parts` (all with equal spatial size).
    pub fn concat(parts: &[&Tensor]) -> Tensor {
        let (h, w) = (parts[0].h, parts[0].w);
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.data.len()).sum());
        let mut c = 0;
        for t in parts {
            assert!(t.h == h && t.w == w, "concat spatial mismatch");
            data.extend_from_slice(&t.data);
            c += t.c;
        }
        Tensor { c, h, w, data }
    }

    /// Splits channels into consecutive groups of the given sizes.
    pub fn split(&self, sizes: &[usize]) -> Vec<Tensor> {
        let n = self.plane_len();
        let mut off = 0;
        sizes
            .iter()
            .map(|&c| {
                let t = Tensor::from_vec(c, self.h, self.w, self.data[off * n..(off + c) * n].to_vec());
                off += c;
                t
            })
            .collect()
    }

    /// Nearest-neighbor 2x upsampling.
    pub fn upsample2(&self) -> Tensor {
        let (h2, w2) = (self.h * 2, self.w * 2);
        let mut out = Tensor::zeros(self.c, h2, w2);
        for c in 0..self.c {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..h2 {
                for x in 0..w2 {
                    dst[y * w2 + x] = src[(y / 2) * self.w + x / 2];
                }
            }
        }
        out
    }

    /// Adjoint of [`Tensor::upsample2`]: sums each 2x2 block.
    pub fn upsample2_backward(grad: &Tensor) -> Tensor {
        let (h, w) = (grad.h / 2, grad.w / 2);
        let mut out = Tensor::zeros(grad.c, h, w);
        for c in 0..grad.c {
            let src = grad.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..grad.h {
                for x in 0..grad.w {
                    dst[(y / 2) * w + x / 2] += src[y * grad.w + x];
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
