//! Optical-flow color wheel rendering (Middlebury convention).
//!
//! Hue encodes direction and saturation encodes speed relative to a fixed
//! `max_magnitude`; zero flow is white.

use crate::error::{ensure, Result};
use crate::flow::FlowField;
use crate::image::{Image, ValueRange};

const RY: usize = 15;
const YG: usize = 6;
const GC: usize = 4;
const CB: usize = 11;
const BM: usize = 13;
const MR: usize = 6;

fn color_wheel() -> Vec<[f64; 3]> {
    let mut wheel = Vec::with_capacity(RY + YG + GC + CB + BM + MR);
    for i in 0..RY {
        wheel.push([255.0, 255.0 * i as f64 / RY as f64, 0.0]);
    }
    for i in 0..YG {
        wheel.push([255.0 - 255.0 * i as f64 / YG as f64, 255.0, 0.0]);
    }
    for i in 0..GC {
        wheel.push([0.0, 255.0, 255.0 * i as f64 / GC as f64]);
    }
    for i in 0..CB {
        wheel.push([0.0, 255.0 - 255.0 * i as f64 / CB as f64, 255.0]);
    }
    for i in 0..BM {
        wheel.push([255.0 * i as f64 / BM as f64, 0.0, 255.0]);
    }
    for i in 0..MR {
        wheel.push([255.0, 0.0, 255.0 - 255.0 * i as f64 / MR as f64]);
    }
    wheel
}

/// Renders `flow` as a raw-range RGB image.
pub fn flow_to_color(flow: &FlowField, max_magnitude: f64) -> Result<Image> {
    ensure!(
        max_magnitude.is_finite() && max_magnitude > 0.0,
        Contract,
        "max_magnitude must be positive, got {max_magnitude}"
    );
    let wheel = color_wheel();
    let ncols = wheel.len();
    let n = flow.height() * flow.width();
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let (u, v) = (flow.u()[i], flow.v()[i]);
        let rad = (u.hypot(v) / max_magnitude).min(1.0);
        let a = (-v).atan2(-u) / std::f64::consts::PI;
        let fk = (a + 1.0) / 2.0 * (ncols - 1) as f64;
        let k0 = (fk.floor() as usize).min(ncols - 1);
        let k1 = (k0 + 1) % ncols;
        let f = fk - k0 as f64;
        for c in 0..3 {
            let col0 = wheel[k0][c] / 255.0;
            let col1 = wheel[k1][c] / 255.0;
            let col = (1.0 - f) * col0 + f * col1;
            let col = 1.0 - rad * (1.0 - col);
            data[c * n + i] = (255.0 * col).clamp(0.0, 255.0);
        }
    }
    Image::new(3, flow.height(), flow.width(), ValueRange::Raw8, data)
}
