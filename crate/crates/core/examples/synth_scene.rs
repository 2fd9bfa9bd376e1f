//! Synthetic scene rendering and the clip directory layout.
//!
//! Usage: `cargo run --example synth_scene -- [out_dir]`

use flowanim::mask::SemanticClass;
use flowanim::synth::{load_clip, make_scene, save_clip, scene_manifest, Geometry, Layer, Motion, Region, Scene, Texture};

fn main() -> flowanim::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("flowanim_scene").display().to_string());
    let tex = |base: [f64; 3], f: f64| Texture { base, amplitude: 0.3, freq_x: f, freq_y: f * 0.7, phase: 0.4 };
    let scene = Scene {
        width: 64,
        height: 48,
        frame_count: 9,
        seed: 5,
        noise: 0.02,
        background: Layer { texture: tex([0.1, 0.3, -0.2], 0.05), motion: Motion::Constant { u: 0.0, v: 0.0 } },
        regions: vec![
            Region {
                class: SemanticClass::Sky,
                geometry: Geometry::Rect { x0: 0, y0: 0, x1: 64, y1: 16 },
                texture: tex([-0.2, 0.1, 0.6], 0.08),
                motion: Motion::Constant { u: 1.0, v: 0.0 },
            },
            Region {
                class: SemanticClass::Water,
                geometry: Geometry::HalfPlane { nx: 0.0, ny: 1.0, offset: 36.0 },
                texture: tex([-0.4, -0.2, 0.2], 0.12),
                motion: Motion::Sinusoidal { u: 0.0, v: 0.5, amp_u: 1.0, amp_v: 0.0, period: 8.0, phase: 0.0 },
            },
        ],
    };
    println!("{}", serde_json::to_string_pretty(&scene).expect("serializable"));
    let clip = make_scene(&scene)?;
    save_clip(&out, &clip, &scene_manifest(&scene, &clip))?;
    let back = load_clip(&out, 4)?;
    println!("wrote {} frames to {out}; stride-4 reload has {} frames", clip.len(), back.len());
    println!("composed sky motion over 4 steps: {:?}", back.flows[0].at(4, 10));
    Ok(())
}
