//! Training objectives: frame L1, flow L1, edge-aware total variation and
//! their weighted sum, each with its gradient.
//!
//! The L1 terms are means over elements. The smoothness term is averaged
//! over neighbor pairs (right and above neighbor of every pixel), with the
//! per-pair terms `exp(-|I(p) - I(q)|_1 / sigma) * |F(p) - F(q)|_1`.

use crate::error::{ensure, Result};
use crate::flow::FlowField;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// Flow-loss weight.
    pub alpha: f64,
    /// Smoothness weight.
    pub beta: f64,
    /// Edge-preserving bandwidth.
    pub sigma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 5.0,
            sigma: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.alpha >= 0.0 && self.alpha.is_finite(), Usage, "alpha must be >= 0");
        ensure!(self.beta >= 0.0 && self.beta.is_finite(), Usage, "beta must be >= 0");
        ensure!(self.sigma > 0.0 && self.sigma.is_finite(), Usage, "sigma must be > 0");
        Ok(())
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn loss_frame(generated: &Image, target: &Image) -> Result<f64> {
    ensure!(generated.same_shape(target), Contract, "frame loss: image shapes differ");
    let n = generated.data().len() as f64;
    Ok(generated
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// `d loss_frame / d generated`.
pub fn loss_frame_grad(generated: &Image, target: &Image) -> Result<Vec<f64>> {
    ensure!(generated.same_shape(target), Contract, "frame loss: image shapes differ");
    let n = generated.data().len() as f64;
    Ok(generated
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| sign(a - b) / n)
        .collect())
}

pub fn loss_flow(generated: &FlowField, target: &FlowField) -> Result<f64> {
    ensure!(generated.same_size(target), Contract, "flow loss: flow sizes differ");
    let n = 2.0 * generated.u().len() as f64;
    let su: f64 = generated.u().iter().zip(target.u()).map(|(a, b)| (a - b).abs()).sum();
    let sv: f64 = generated.v().iter().zip(target.v()).map(|(a, b)| (a - b).abs()).sum();
    Ok((su + sv) / n)
}

/// `d loss_flow / d generated` as `(du, dv)`.
pub fn loss_flow_grad(generated: &FlowField, target: &FlowField) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure!(generated.same_size(target), Contract, "flow loss: flow sizes differ");
    let n = 2.0 * generated.u().len() as f64;
    Ok((
        generated.u().iter().zip(target.u()).map(|(a, b)| sign(a - b) / n).collect(),
        generated.v().iter().zip(target.v()).map(|(a, b)| sign(a - b) / n).collect(),
    ))
}

fn neighbor_pairs(h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..h).flat_map(move |y| {
        (0..w).flat_map(move |x| {
            let p = y * w + x;
            let right = (x + 1 < w).then(|| (p, p + 1));
            let above = (y > 0).then(|| (p, p - w));
            right.into_iter().chain(above)
        })
    })
}

fn pair_count(h: usize, w: usize) -> usize {
    (w - 1) * h + w * (h - 1)
}

fn check_tv(flow: &FlowField, frame: &Image) -> Result<()> {
    ensure!(
        flow.height() == frame.height() && flow.width() == frame.width(),
        Contract,
        "tv loss: flow is {}x{} but frame is {}x{}",
        flow.height(),
        flow.width(),
        frame.height(),
        frame.width()
    );
    Ok(())
}

fn color_distance(frame: &Image, p: usize, q: usize) -> f64 {
    (0..frame.channels())
        .map(|c| (frame.plane(c)[p] - frame.plane(c)[q]).abs())
        .sum()
}

pub fn loss_tv(flow: &FlowField, frame: &Image, sigma: f64) -> Result<f64> {
    check_tv(flow, frame)?;
    let (h, w) = (flow.height(), flow.width());
    let pairs = pair_count(h, w);
    if pairs == 0 {
        return Ok(0.0);
    }
    let (u, v) = (flow.u(), flow.v());
    let total: f64 = neighbor_pairs(h, w)
        .map(|(p, q)| {
            let weight = (-color_distance(frame, p, q) / sigma).exp();
            weight * ((u[p] - u[q]).abs() + (v[p] - v[q]).abs())
        })
        .sum();
    Ok(total / pairs as f64)
}

/// Gradient of the smoothness term with respect to the flow and the
/// weighting frame: `(du, dv, dframe)`.
pub fn loss_tv_grad(flow: &FlowField, frame: &Image, sigma: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_tv(flow, frame)?;
    let (h, w) = (flow.height(), flow.width());
    let n = h * w;
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut dframe = vec![0.0; frame.data().len()];
    let pairs = pair_count(h, w);
    if pairs == 0 {
        return Ok((du, dv, dframe));
    }
    let scale = 1.0 / pairs as f64;
    let (u, v) = (flow.u(), flow.v());
    for (p, q) in neighbor_pairs(h, w) {
        let weight = (-color_distance(frame, p, q) / sigma).exp();
        let su = sign(u[p] - u[q]);
        let sv = sign(v[p] - v[q]);
        du[p] += scale * weight * su;
        du[q] -= scale * weight * su;
        dv[p] += scale * weight * sv;
        dv[q] -= scale * weight * sv;
        let dist = (u[p] - u[q]).abs() + (v[p] - v[q]).abs();
        if dist != 0.0 {
            let coeff = -scale * dist * weight / sigma;
            for c in 0..frame.channels() {
                let s = sign(frame.plane(c)[p] - frame.plane(c)[q]);
                dframe[c * n + p] += coeff * s;
                dframe[c * n + q] -= coeff * s;
            }
        }
    }
    Ok((du, dv, dframe))
}

/// `frame + alpha * flow + beta * tv`.
pub fn loss_total(frame: f64, flow: f64, tv: f64, config: &LossConfig) -> f64 {
    frame + config.alpha * flow + config.beta * tv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueRange;

    fn img(c: usize, h: usize, w: usize, v: f64) -> Image {
        Image::filled(c, h, w, ValueRange::Normalized, v).unwrap()
    }

    #[test]
    fn frame_loss_examples() {
        let a = img(3, 4, 4, 0.5);
        assert_eq!(loss_frame(&a, &a).unwrap(), 0.0);
        assert_eq!(loss_frame(&a, &img(3, 4, 4, 0.0)).unwrap(), 0.5);
        assert!(loss_frame(&a, &img(3, 4, 5, 0.0)).is_err());
    }

    #[test]
    fn flow_loss_examples() {
        let a = FlowField::constant(3, 3, 1.0, 0.0);
        let b = FlowField::zeros(3, 3);
        assert_eq!(loss_flow(&a, &a).unwrap(), 0.0);
        assert_eq!(loss_flow(&a, &b).unwrap(), 0.5);
        assert_eq!(loss_flow(&b, &a).unwrap(), 0.5);
        assert!(loss_flow(&a, &FlowField::zeros(2, 3)).is_err());
    }

    #[test]
    fn tv_examples() {
        let frame = Image::from_fn(3, 4, 4, ValueRange::Normalized, |c, y, x| ((c + y + 2 * x) as f64 * 0.2).sin()).unwrap();
        assert_eq!(loss_tv(&FlowField::constant(4, 4, 2.0, -1.0), &frame, 0.1).unwrap(), 0.0);

        let flat = img(1, 1, 2, 0.3);
        let step = FlowField::new(1, 2, vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(loss_tv(&step, &flat, 0.1).unwrap(), 1.0);

        let edge = Image::new(1, 1, 2, ValueRange::Normalized, vec![0.2, 0.3]).unwrap();
        let value = loss_tv(&step, &edge, 0.1).unwrap();
        assert!((value - (-1.0f64).exp()).abs() < 1e-9, "{value}");
    }

    #[test]
    fn total_examples() {
        let cfg = LossConfig::default();
        assert_eq!(loss_total(1.0, 2.0, 3.0, &cfg), 17.0);
        assert_eq!(loss_total(0.0, 0.0, 0.0, &cfg), 0.0);
        let zero = LossConfig {
            alpha: 0.0,
            beta: 0.0,
            sigma: 0.1,
        };
        assert_eq!(loss_total(1.25, 9.0, 9.0, &zero), 1.25);
    }

    #[test]
    fn tv_gradient_matches_finite_differences() {
        let frame = Image::from_fn(3, 4, 5, ValueRange::Normalized, |c, y, x| ((c * 3 + y * 5 + x * 7) as f64 * 0.13).sin() * 0.2).unwrap();
        let flow = FlowField::from_fn(4, 5, |y, x| (((y * 5 + x) as f64 * 0.71).sin(), ((y * 5 + x) as f64 * 0.37).cos())).unwrap();
        let sigma = 0.3;
        let (du, dv, df) = loss_tv_grad(&flow, &frame, sigma).unwrap();
        let eps = 1e-7;
        for i in 0..20 {
            let mut u = flow.u().to_vec();
            u[i] += eps;
            let plus = loss_tv(&FlowField::new(4, 5, u.clone(), flow.v().to_vec()).unwrap(), &frame, sigma).unwrap();
            u[i] -= 2.0 * eps;
            let minus = loss_tv(&FlowField::new(4, 5, u, flow.v().to_vec()).unwrap(), &frame, sigma).unwrap();
            assert!(((plus - minus) / (2.0 * eps) - du[i]).abs() < 1e-6);
            let _ = dv[i];
        }
        for i in 0..frame.data().len() {
            let mut d = frame.data().to_vec();
            d[i] += eps;
            let plus = loss_tv(&flow, &Image::new(3, 4, 5, ValueRange::Normalized, d.clone()).unwrap(), sigma).unwrap();
            d[i] -= 2.0 * eps;
            let minus = loss_tv(&flow, &Image::new(3, 4, 5, ValueRange::Normalized, d).unwrap(), sigma).unwrap();
            assert!(((plus - minus) / (2.0 * eps) - df[i]).abs() < 1e-6);
        }
    }
}
