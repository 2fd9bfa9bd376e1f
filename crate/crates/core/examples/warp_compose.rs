//! Backward warping and flow composition.
//!
//! Warps a smooth image twice in a row and compares against a single warp
//! by the composed flow.

use flowanim::flow::{compose_flows, warp_backward, FlowField};
use flowanim::image::{Image, ValueRange};

fn main() -> flowanim::Result<()> {
    let (h, w) = (48, 64);
    let img = Image::from_fn(3, h, w, ValueRange::Normalized, |c, y, x| {
        0.8 * ((x as f64 * 0.11 + c as f64).sin() * (y as f64 * 0.07).cos())
    })?;
    let a = FlowField::from_fn(h, w, |y, _| (1.5 * (y as f64 / h as f64), 0.5))?;
    let b = FlowField::from_fn(h, w, |_, x| (-0.5, (x as f64 * 0.05).sin()))?;

    let twice = warp_backward(&warp_backward(&img, &a)?, &b)?;
    let once = warp_backward(&img, &compose_flows(&a, &b)?)?;

    let mut worst = 0.0f64;
    for y in 4..h - 4 {
        for x in 4..w - 4 {
            for c in 0..3 {
                worst = worst.max((twice.get(c, y, x) - once.get(c, y, x)).abs());
            }
        }
    }
    println!("sequential vs composed warp, max interior difference: {worst:.2e}");
    let identity = warp_backward(&img, &FlowField::zeros(h, w))?;
    println!("zero flow reproduces the image exactly: {}", identity == img);
    Ok(())
}
