//! Color-coded flow visualization and the .flo round trip.
//!
//! Usage: `cargo run --example flow_viz -- [out.png]`

use flowanim::flow::{decode_flo, encode_flo, flow_to_color, FlowField};

fn main() -> flowanim::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("flowanim_wheel.png").display().to_string());
    let n = 96;
    let c = (n / 2) as f64;
    // Dyadic values survive the f32 storage of .flo exactly.
    let flow = FlowField::from_fn(n, n, |y, x| ((x as f64 - c) / 16.0, (y as f64 - c) / 16.0))?;
    let bytes = encode_flo(&flow);
    println!(".flo size {} bytes, round trip exact: {}", bytes.len(), decode_flo(&bytes)? == flow);
    flow_to_color(&flow, 4.0)?.save_png(&out)?;
    println!("wrote {out}");
    Ok(())
}
