//! Controllable animation: motion for each semantic taken from its own
//! reference, plus speed control.
//!
//! Trains a toy model first (a few hundred steps), or loads one.
//! Usage: `cargo run --release --example animate_controlled -- [checkpoint]`

use flowanim::inference::{animate, mean_flow_in_mask, AnimateOptions, FixedMasks, ReferenceClip, ReferenceSet};
use flowanim::loss::LossConfig;
use flowanim::mask::SemanticClass;
use flowanim::model::{Checkpoint, Model, ModelConfig};
use flowanim::synth::{make_scene, toy_dataset, two_region_scene};
use flowanim::train::{train, TrainConfig};

fn main() -> flowanim::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => Checkpoint::load(path)?.model,
        None => {
            let data = toy_dataset(50, 64, 3, 1)?;
            let cfg = TrainConfig { max_steps: Some(600), ..TrainConfig::toy(0) };
            train(&data, Model::new(ModelConfig::toy(), 0)?, &cfg, &LossConfig::default())?.model
        }
    };
    let target = make_scene(&two_region_scene(64, 1, 42, (0.0, 0.0), (0.0, 0.0)))?;
    let right = make_scene(&two_region_scene(64, 3, 7, (1.0, 0.0), (2.0, 0.0)))?;
    let left = make_scene(&two_region_scene(64, 3, 8, (1.0, 0.0), (-2.0, 0.0)))?;
    let refs = vec![ReferenceClip::from_clip("right", &right)?, ReferenceClip::from_clip("left", &left)?];
    let water = SemanticClass::Water.index();
    let masks = &target.masks[0];
    let opts = AnimateOptions { steps: 4, ..AnimateOptions::default() };

    for (label, r) in [("water from `right`", 0), ("water from `left`", 1)] {
        let mut assignment = vec![0; 6];
        assignment[water] = r;
        let set = ReferenceSet { refs: refs.clone(), assignment, speeds: vec![1.0; 6] };
        let out = animate(&model, &target.frames[0], &set, &mut FixedMasks(masks.clone()), &opts)?;
        let (u, v, _) = mean_flow_in_mask(&out.step_flows, masks, water)?;
        println!("{label}: mean water flow ({u:+.3}, {v:+.3}), {} frames", out.frames.len());
    }
    for speed in [0.25, 1.0, 4.0] {
        let mut set = ReferenceSet::single(refs[0].clone(), 6);
        set.speeds[water] = speed;
        let out = animate(&model, &target.frames[0], &set, &mut FixedMasks(masks.clone()), &opts)?;
        let (_, _, m) = mean_flow_in_mask(&out.step_flows, masks, water)?;
        println!("water speed x{speed}: mean flow magnitude {m:.3} px");
    }
    Ok(())
}
