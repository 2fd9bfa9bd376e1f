//! Trains the narrow model on the two-region toy task and reports flow
//! reconstruction error before and after.
//!
//! Usage: `cargo run --release --example train_toy -- [steps] [checkpoint]`

use flowanim::loss::LossConfig;
use flowanim::model::{Checkpoint, Model, ModelConfig};
use flowanim::synth::toy_dataset;
use flowanim::train::{reconstruction_epe, train_with, TrainConfig};

fn main() -> flowanim::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse().expect("steps")).unwrap_or(2000);
    let out = args.next();

    let train_set = toy_dataset(50, 64, 3, 1)?;
    let val_set = toy_dataset(10, 64, 2, 999)?;
    let model = Model::new(ModelConfig::toy(), 0)?;
    println!("untrained EPE {:.3} px", reconstruction_epe(&model, &val_set, 1)?);

    let cfg = TrainConfig { max_steps: Some(steps), ..TrainConfig::toy(0) };
    let start = std::time::Instant::now();
    let outcome = train_with(&train_set, model, &cfg, &LossConfig::default(), |e| {
        if e.epoch % 20 == 0 {
            println!("epoch {:>3} step {:>4} loss {:.4} (frame {:.4} flow {:.4} tv {:.4})", e.epoch, e.steps, e.total, e.frame, e.flow, e.tv);
        }
    })?;
    println!("{} steps in {:.1?}", outcome.steps, start.elapsed());
    println!("trained EPE {:.3} px", reconstruction_epe(&outcome.model, &val_set, 1)?);
    if let Some(path) = out {
        Checkpoint { model: outcome.model, metadata: serde_json::json!({"example": "train_toy", "steps": steps}) }.save(&path)?;
        println!("saved {path}");
    }
    Ok(())
}
