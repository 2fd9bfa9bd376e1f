//! Per-channel instance normalization, optionally restricted to a mask, and
//! the pointwise activations used by both networks.

use super::tensor::Tensor;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.1;

/// Normalization applied after each hidden convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    None,
    Instance,
}

impl std::str::FromStr for Norm {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.trim() {
            "none" => Ok(Norm::None),
            "instance" => Ok(Norm::Instance),
            other => Err(crate::error::Error::Usage(format!(
                "unknown normalization `{other}` (expected none|instance)"
            ))),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::None => "none",
            Norm::Instance => "instance",
        })
    }
}

#[derive(Debug, Clone)]
pub struct InstanceNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// Normalizes each channel with the mean/variance of the valid positions.
/// Invalid positions come out as zero.
pub fn instance_norm(x: &Tensor, mask: Option<&[u8]>) -> (Tensor, InstanceNormCache) {
    let n = x.plane_len();
    let valid = |i: usize| mask.is_none_or(|m| m[i] != 0);
    let count = (0..n).filter(|&i| valid(i)).count();
    let mut out = Tensor::zeros(x.c, x.h, x.w);
    let mut inv_std = vec![0.0; x.c];
    if count == 0 {
        return (out.clone(), InstanceNormCache { xhat: out, inv_std });
    }
    let cnt = count as f64;
    for c in 0..x.c {
        let plane = x.plane(c);
        let mean = (0..n).filter(|&i| valid(i)).map(|i| plane[i]).sum::<f64>() / cnt;
        let var = (0..n)
            .filter(|&i| valid(i))
            .map(|i| (plane[i] - mean).powi(2))
            .sum::<f64>()
            / cnt;
        let inv = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();
        inv_std[c] = inv;
        let dst = out.plane_mut(c);
        for i in 0..n {
            if valid(i) {
                dst[i] = (plane[i] - mean) * inv;
            }
        }
    }
    (out.clone(), InstanceNormCache { xhat: out, inv_std })
}

pub fn instance_norm_backward(cache: &InstanceNormCache, grad: &Tensor, mask: Option<&[u8]>) -> Tensor {
    let n = grad.plane_len();
    let valid = |i: usize| mask.is_none_or(|m| m[i] != 0);
    let count = (0..n).filter(|&i| valid(i)).count();
    let mut out = Tensor::zeros(grad.c, grad.h, grad.w);
    if count == 0 {
        return out;
    }
    let cnt = count as f64;
    for c in 0..grad.c {
        let g = grad.plane(c);
        let xh = cache.xhat.plane(c);
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for i in 0..n {
            if valid(i) {
                mean_g += g[i];
                mean_gx += g[i] * xh[i];
            }
        }
        mean_g /= cnt;
        mean_gx /= cnt;
        let inv = cache.inv_std[c];
        let dst = out.plane_mut(c);
        for i in 0..n {
            if valid(i) {
                dst[i] = inv * (g[i] - mean_g - xh[i] * mean_gx);
            }
        }
    }
    out
}

pub fn leaky_relu(x: &Tensor) -> Tensor {
    Tensor::from_vec(
        x.c,
        x.h,
        x.w,
        x.data.iter().map(|&v| if v > 0.0 { v } else { LEAKY_SLOPE * v }).collect(),
    )
}

/// Backward of [`leaky_relu`] given its input.
pub fn leaky_relu_backward(x: &Tensor, grad: &Tensor) -> Tensor {
    Tensor::from_vec(
        x.c,
        x.h,
        x.w,
        x.data
            .iter()
            .zip(&grad.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { LEAKY_SLOPE * g })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_norm_ignores_invalid_positions() {
        let x = Tensor::from_vec(1, 1, 4, vec![1.0, 3.0, 100.0, -50.0]);
        let mask = [1, 1, 0, 0];
        let (y, _) = instance_norm(&x, Some(&mask));
        let expected = 1.0 / (1.0 + INSTANCE_NORM_EPS).sqrt();
        assert!((y.data[0] + expected).abs() < 1e-12);
        assert!((y.data[1] - expected).abs() < 1e-12);
        assert_eq!(&y.data[2..], &[0.0, 0.0]);
    }

    #[test]
    fn norm_backward_matches_finite_differences() {
        let x = Tensor::from_vec(2, 2, 3, vec![0.3, -1.2, 0.8, 2.0, 0.1, -0.4, 1.5, 0.2, -0.9, 0.6, 0.0, 1.1]);
        let probe: Vec<f64> = (0..12).map(|i| ((i * 5) % 7) as f64 - 3.0).collect();
        let mask = [1, 1, 0, 1, 1, 1];
        let loss = |x: &Tensor| -> f64 {
            instance_norm(x, Some(&mask)).0.data.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = instance_norm(&x, Some(&mask));
        let dx = instance_norm_backward(&cache, &Tensor::from_vec(2, 2, 3, probe.clone()), Some(&mask));
        for i in 0..12 {
            let mut p = x.clone();
            p.data[i] += 1e-6;
            let mut m = x.clone();
            m.data[i] -= 1e-6;
            let num = (loss(&p) - loss(&m)) / 2e-6;
            assert!((num - dx.data[i]).abs() < 1e-6, "{i}: {num} vs {}", dx.data[i]);
        }
    }

    #[test]
    fn leaky_slope_is_point_one() {
        let x = Tensor::from_vec(1, 1, 3, vec![-2.0, 0.0, 3.0]);
        assert_eq!(leaky_relu(&x).data, vec![-0.2, 0.0, 3.0]);
    }
}
