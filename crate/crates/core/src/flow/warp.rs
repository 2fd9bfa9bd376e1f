//! Backward warping with bilinear sampling and replicate borders.

use crate::error::{ensure, Result};
use crate::flow::FlowField;
use crate::image::Image;

/// Bilinear tap for one sample location, with coordinates clamped to the grid.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: f64,
    fy: f64,
    /// Whether the unclamped coordinate lies strictly inside the grid, i.e.
    /// the sample moves with the flow.
    live_x: bool,
    live_y: bool,
}

impl Tap {
    #[inline]
    pub(crate) fn new(sx: f64, sy: f64, width: usize, height: usize) -> Tap {
        let (x0, x1, fx, live_x) = axis(sx, width);
        let (y0, y1, fy, live_y) = axis(sy, height);
        Tap {
            x0,
            x1,
            y0,
            y1,
            fx,
            fy,
            live_x,
            live_y,
        }
    }

    #[inline]
    pub(crate) fn sample(&self, plane: &[f64], width: usize) -> f64 {
        let a = plane[self.y0 * width + self.x0];
        let b = plane[self.y0 * width + self.x1];
        let c = plane[self.y1 * width + self.x0];
        let d = plane[self.y1 * width + self.x1];
        let top = a + (b - a) * self.fx;
        let bottom = c + (d - c) * self.fx;
        top + (bottom - top) * self.fy
    }

    /// Partial derivatives of [`Tap::sample`] with respect to the unclamped
    /// sample coordinates. Zero along an axis where the coordinate is clamped.
    #[inline]
    pub(crate) fn gradient(&self, plane: &[f64], width: usize) -> (f64, f64) {
        let a = plane[self.y0 * width + self.x0];
        let b = plane[self.y0 * width + self.x1];
        let c = plane[self.y1 * width + self.x0];
        let d = plane[self.y1 * width + self.x1];
        let dx = if self.live_x {
            (1.0 - self.fy) * (b - a) + self.fy * (d - c)
        } else {
            0.0
        };
        let dy = if self.live_y {
            (1.0 - self.fx) * (c - a) + self.fx * (d - b)
        } else {
            0.0
        };
        (dx, dy)
    }
}

#[inline]
fn axis(s: f64, n: usize) -> (usize, usize, f64, bool) {
    let max = (n - 1) as f64;
    let live = s > 0.0 && s < max;
    let c = s.clamp(0.0, max);
    let i0 = c.floor();
    let mut lo = i0 as usize;
    let mut frac = c - i0;
    if lo >= n - 1 {
        lo = n - 1;
        frac = 0.0;
    }
    let hi = (lo + 1).min(n - 1);
    (lo, hi, frac, live)
}

/// Resamples `image` at `p + flow(p)` for every output pixel `p`.
pub fn warp_backward(image: &Image, flow: &FlowField) -> Result<Image> {
    ensure!(
        image.height() == flow.height() && image.width() == flow.width(),
        Contract,
        "warp: image is {}x{} but flow is {}x{}",
        image.height(),
        image.width(),
        flow.height(),
        flow.width()
    );
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let n = h * w;
    let mut out = vec![0.0; ch * n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let tap = Tap::new(x as f64 + flow.u()[i], y as f64 + flow.v()[i], w, h);
            for c in 0..ch {
                out[c * n + i] = tap.sample(image.plane(c), w);
            }
        }
    }
    // Convex combinations of in-range values stay in range.
    Ok(Image::from_parts_unchecked(ch, h, w, image.range(), out))
}

/// Gradient of a scalar loss with respect to the flow of a backward warp.
///
/// `grad_out` holds `dL/d warp(image, flow)` in the image's planar layout.
/// Returns `(dL/du, dL/dv)`.
pub fn warp_backward_flow_grad(
    image: &Image,
    flow: &FlowField,
    grad_out: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure!(
        image.height() == flow.height() && image.width() == flow.width(),
        Contract,
        "warp gradient: image and flow sizes differ"
    );
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let n = h * w;
    ensure!(
        grad_out.len() == ch * n,
        Contract,
        "warp gradient: upstream gradient has {} values, expected {}",
        grad_out.len(),
        ch * n
    );
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let tap = Tap::new(x as f64 + flow.u()[i], y as f64 + flow.v()[i], w, h);
            for c in 0..ch {
                let g = grad_out[c * n + i];
                if g != 0.0 {
                    let (gx, gy) = tap.gradient(image.plane(c), w);
                    du[i] += g * gx;
                    dv[i] += g * gy;
                }
            }
        }
    }
    Ok((du, dv))
}

/// How per-step flows are accumulated during animation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComposeMode {
    /// Warp the accumulated field through the new step (exact for backward flows).
    #[default]
    Warp,
    /// Plain component-wise addition.
    Add,
}

/// Chains two backward flows: warping by the result equals warping by
/// `accumulated` and then by `step`.
///
/// `result(p) = step(p) + accumulated(p + step(p))`.
pub fn compose_flows(accumulated: &FlowField, step: &FlowField) -> Result<FlowField> {
    ensure!(
        accumulated.same_size(step),
        Contract,
        "compose: accumulated flow is {}x{} but step is {}x{}",
        accumulated.height(),
        accumulated.width(),
        step.height(),
        step.width()
    );
    let (h, w) = (step.height(), step.width());
    let mut u = Vec::with_capacity(h * w);
    let mut v = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (su, sv) = (step.u()[i], step.v()[i]);
            let tap = Tap::new(x as f64 + su, y as f64 + sv, w, h);
            u.push(su + tap.sample(accumulated.u(), w));
            v.push(sv + tap.sample(accumulated.v(), w));
        }
    }
    Ok(FlowField::from_parts_unchecked(h, w, u, v))
}

/// Accumulates according to `mode`.
pub fn accumulate_flow(accumulated: &FlowField, step: &FlowField, mode: ComposeMode) -> Result<FlowField> {
    match mode {
        ComposeMode::Warp => compose_flows(accumulated, step),
        ComposeMode::Add => {
            ensure!(accumulated.same_size(step), Contract, "accumulate: flow sizes differ");
            Ok(FlowField::from_parts_unchecked(
                step.height(),
                step.width(),
                accumulated.u().iter().zip(step.u()).map(|(a, b)| a + b).collect(),
                accumulated.v().iter().zip(step.v()).map(|(a, b)| a + b).collect(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueRange;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(1, h, w, ValueRange::Raw8, |_, _, x| x as f64).unwrap()
    }

    #[test]
    fn zero_flow_is_identity() {
        let img = Image::from_fn(3, 5, 7, ValueRange::Normalized, |c, y, x| {
            ((c + 2 * y + 3 * x) as f64 * 0.37).sin()
        })
        .unwrap();
        let out = warp_backward(&img, &FlowField::zeros(5, 7)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn unit_shift_on_ramp_matches_clamped_loop() {
        let (h, w) = (4, 6);
        let out = warp_backward(&ramp(h, w), &FlowField::constant(h, w, 1.0, 0.0)).unwrap();
        for y in 0..h {
            for x in 0..w {
                let expected = ((x + 1).min(w - 1)) as f64;
                assert_eq!(out.get(0, y, x), expected);
            }
        }
    }

    #[test]
    fn half_pixel_shift_interpolates() {
        let (h, w) = (3, 6);
        let out = warp_backward(&ramp(h, w), &FlowField::constant(h, w, 0.5, 0.0)).unwrap();
        for y in 0..h {
            for x in 0..w - 1 {
                assert!((out.get(0, y, x) - (x as f64 + 0.5)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_sizes_error() {
        assert!(warp_backward(&ramp(3, 3), &FlowField::zeros(3, 4)).is_err());
        assert!(compose_flows(&FlowField::zeros(3, 3), &FlowField::zeros(2, 3)).is_err());
    }

    #[test]
    fn compose_with_zero_is_exact() {
        let f = FlowField::from_fn(5, 6, |y, x| ((x as f64 * 0.3).sin(), (y as f64 * 0.2).cos())).unwrap();
        let z = FlowField::zeros(5, 6);
        assert_eq!(compose_flows(&z, &f).unwrap(), f);
        assert_eq!(compose_flows(&f, &z).unwrap(), f);
    }

    #[test]
    fn constant_flows_sum() {
        let a = FlowField::constant(8, 8, 0.7, -0.3);
        let b = FlowField::constant(8, 8, 1.1, 0.4);
        let c = compose_flows(&a, &b).unwrap();
        for y in 2..6 {
            for x in 2..6 {
                let (u, v) = c.at(y, x);
                assert!((u - 1.8).abs() < 1e-6 && (v - 0.1).abs() < 1e-6);
            }
        }
        let added = accumulate_flow(&a, &b, ComposeMode::Add).unwrap();
        assert!((added.at(0, 0).0 - 1.8).abs() < 1e-12);
    }

    #[test]
    fn flow_gradient_matches_finite_differences() {
        let img = Image::from_fn(3, 6, 7, ValueRange::Normalized, |c, y, x| {
            (0.5 * x as f64 + 0.3 * y as f64 + c as f64).sin() * 0.9
        })
        .unwrap();
        let flow = FlowField::from_fn(6, 7, |y, x| {
            (0.31 + 0.17 * ((x * 3 + y) % 5) as f64, -0.23 + 0.11 * ((x + 2 * y) % 4) as f64)
        })
        .unwrap();
        let weights: Vec<f64> = (0..img.data().len()).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.4).collect();
        let loss = |f: &FlowField| -> f64 {
            let out = warp_backward(&img, f).unwrap();
            out.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let (du, dv) = warp_backward_flow_grad(&img, &flow, &weights).unwrap();
        let eps = 1e-6;
        for i in 0..flow.u().len() {
            for comp in 0..2 {
                let mut u = flow.u().to_vec();
                let mut v = flow.v().to_vec();
                let plane = if comp == 0 { &mut u } else { &mut v };
                plane[i] += eps;
                let plus = loss(&FlowField::new(6, 7, u.clone(), v.clone()).unwrap());
                let plane = if comp == 0 { &mut u } else { &mut v };
                plane[i] -= 2.0 * eps;
                let minus = loss(&FlowField::new(6, 7, u, v).unwrap());
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = if comp == 0 { du[i] } else { dv[i] };
                assert!((numeric - analytic).abs() < 1e-6, "pixel {i} comp {comp}: {numeric} vs {analytic}");
            }
        }
    }
}
