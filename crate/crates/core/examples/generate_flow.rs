//! Latent map construction and flow generation.

use flowanim::encoder::LatentSet;
use flowanim::generator::{build_latent_map, generate_flow};
use flowanim::model::{Model, ModelConfig};
use flowanim::synth::{make_scene, two_region_scene};

fn main() -> flowanim::Result<()> {
    let model = Model::new(ModelConfig::toy(), 1)?;
    let clip = make_scene(&two_region_scene(64, 1, 9, (0.0, 0.0), (0.0, 0.0)))?;
    let mut z = LatentSet::zeros(6, 2);
    z.set_row(1, vec![0.5, -0.5], true);
    z.set_row(4, vec![-1.0, 1.0], true);
    let map = build_latent_map(&z, &clip.masks[0])?;
    println!("latent at top-left {:?}, bottom-left {:?}", map.at(0, 0), map.at(63, 0));

    let flow = generate_flow(&model.store, &model.generator, &map, &clip.frames[0])?;
    let bound = model.config.generator.max_displacement(64);
    println!(
        "generated {}x{} flow, max |component| {:.3} px (bound {bound:.1} px)",
        flow.height(),
        flow.width(),
        flow.max_abs_component()
    );
    Ok(())
}
