//! A short training run with checkpoints and an epoch log, then a resume.
//!
//!     cargo run --example training

use mimo_djscc::data::synthetic_dataset;
use mimo_djscc::model::ImageShape;
use mimo_djscc::scheme::Scheme;
use mimo_djscc::train::{Checkpoint, TrainConfig, TrainOutput, Trainer};

fn main() -> mimo_djscc::Result<()> {
    let shape = ImageShape::new(3, 8, 8);
    let data = synthetic_dataset(300, shape, 1);
    let dir = std::env::temp_dir().join("mimo-djscc-training-example");
    let _ = std::fs::remove_dir_all(&dir);

    let cfg = TrainConfig {
        scheme: Scheme::Parallel,
        width: 8,
        batch_size: 8,
        initial_lr: 3e-3,
        epochs: 2,
        ..TrainConfig::default()
    };
    let output = TrainOutput {
        checkpoint_dir: Some(dir.join("checkpoints")),
        log_path: Some(dir.join("train.log")),
    };
    let out = Trainer::new(&cfg).output(output).run(cfg.build_system(shape)?, &data)?;
    print!("{}", std::fs::read_to_string(dir.join("train.log")).unwrap_or_default());
    println!("precoding path cross-check gap: {:.1e}", out.crosscheck_gap.unwrap_or(0.0));

    // Continue the same run for two more epochs.
    let saved = Checkpoint::load(&dir.join("checkpoints").join("last.json"))?;
    let more = TrainConfig { epochs: 4, ..cfg };
    let resumed = Trainer::new(&more).resume(&saved, &data)?;
    for r in &resumed.last.history {
        println!("epoch {} val_loss {:.1}", r.epoch, r.val_loss);
    }
    Ok(())
}
