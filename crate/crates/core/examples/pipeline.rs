//! The config-driven pipeline behind the `mimo-djscc` binary, step by step:
//! resolve a TOML config with overrides, train, evaluate, report.
//!
//!     cargo run --example pipeline

use mimo_djscc::cli::OutputLock;
use mimo_djscc::config::ExperimentConfig;
use mimo_djscc::eval::{emit_report, snr_sweep_eval};
use mimo_djscc::train::{TrainOutput, Trainer};

const CONFIG: &str = r#"
schema = 1

[dataset]
kind = "synthetic"
train_count = 200
test_count = 20

[train]
scheme = "serial"
width = 8
epochs = 5
batch_size = 8
initial_lr = 3e-3

[eval]
snrs_db = [0.0, 6.0, 12.0, 18.0]
draws_per_image = 2
"#;

fn main() -> mimo_djscc::Result<()> {
    let root = std::env::temp_dir().join("mimo-djscc-pipeline-example");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).expect("temp dir");
    let path = root.join("experiment.toml");
    std::fs::write(&path, CONFIG).expect("write config");

    let overrides = ["train.epochs=2".to_string(), format!("output_dir=\"{}\"", root.join("out").display())];
    let cfg = ExperimentConfig::resolve(Some(&path), &overrides)?;
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    println!("resolved config:\n{}", cfg.to_toml());

    let (train_set, test_set) = cfg.dataset.load()?;
    let output = TrainOutput {
        checkpoint_dir: Some(cfg.output_dir.join("checkpoints")),
        log_path: Some(cfg.output_dir.join("logs").join("train.log")),
    };
    let system = cfg.train.build_system(cfg.dataset.shape())?;
    let trained = Trainer::new(&cfg.train).output(output).run(system, &train_set)?;
    let results = snr_sweep_eval(&trained.best.system()?, &test_set, &cfg.eval)?;
    let files = emit_report(&results, &[], &cfg.output_dir)?;
    println!("artifacts: {:?}, {:?}", files.eval_csv.unwrap(), files.plots);
    Ok(())
}
