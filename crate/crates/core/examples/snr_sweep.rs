//! Trains two schemes briefly and compares their PSNR-vs-SNR curves; writes
//! the CSV and plot.
//!
//!     cargo run --example snr_sweep

use mimo_djscc::data::synthetic_dataset;
use mimo_djscc::eval::{emit_report, snr_sweep_eval, EvalConfig};
use mimo_djscc::model::ImageShape;
use mimo_djscc::scheme::Scheme;
use mimo_djscc::train::{train, TrainConfig};

fn main() -> mimo_djscc::Result<()> {
    let shape = ImageShape::new(3, 8, 8);
    let data = synthetic_dataset(400, shape, 1);
    let test = synthetic_dataset(40, shape, 2);
    let eval = EvalConfig {
        snrs_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
        draws_per_image: 2,
        ..EvalConfig::default()
    };
    let mut results = Vec::new();
    for scheme in [Scheme::Serial, Scheme::Multiplexing] {
        let cfg = TrainConfig { scheme, width: 8, batch_size: 8, initial_lr: 3e-3, epochs: 3, ..TrainConfig::default() };
        let system = train(cfg.build_system(shape)?, &data, &cfg)?.best.system()?;
        results.extend(snr_sweep_eval(&system, &test, &eval)?);
    }
    for r in &results {
        println!("{:<13} {:>5.1} dB  PSNR {:.2} ± {:.2}", r.scheme, r.snr_db, r.psnr_db, r.psnr_std);
    }
    let out = std::env::temp_dir().join("mimo-djscc-sweep-example");
    let files = emit_report(&results, &[], &out)?;
    println!("wrote {:?} and {:?}", files.eval_csv.unwrap(), files.plots);
    Ok(())
}
