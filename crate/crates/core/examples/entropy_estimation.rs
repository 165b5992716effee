//! Nearest-neighbour entropy estimates: calibration on known laws, then the
//! sub-channel sweep over singular-value ratios.
//!
//!     cargo run --example entropy_estimation

use mimo_djscc::data::synthetic_dataset;
use mimo_djscc::entropy::{knn_entropy, subchannel_entropy_sweep, EntropyEstimatorConfig, EntropySweepConfig};
use mimo_djscc::model::ImageShape;
use mimo_djscc::rng::rng_from;
use mimo_djscc::scheme::Scheme;
use mimo_djscc::train::TrainConfig;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn main() -> mimo_djscc::Result<()> {
    let cfg = EntropyEstimatorConfig::default();
    let mut rng = rng_from(1);
    let n = 4000;
    let gauss: Vec<f64> = (0..2 * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let unif: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
    let truth = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    println!("2-D Gaussian: {:.3} nats (exact {truth:.3})", knn_entropy(&gauss, &cfg)?);
    println!("unit square:  {:.3} nats (exact 0)", knn_entropy(&unif, &cfg)?);

    // Untrained model, so the numbers only show the mechanics.
    let shape = ImageShape::new(3, 8, 8);
    let system = TrainConfig { width: 8, ..TrainConfig::default() }.build_system(shape)?;
    let images = synthetic_dataset(120, shape, 2);
    let sweep = EntropySweepConfig {
        ratios: vec![1.0, 2.0, 4.0],
        estimator: EntropyEstimatorConfig { sample_budget: 1500, ..cfg },
        ..EntropySweepConfig::default()
    };
    assert_eq!(system.scheme, Scheme::Serial);
    for r in subchannel_entropy_sweep(&system, &images, &sweep, false)? {
        println!(
            "λ₁/λ₂ = {}: entropy {:.3?} nats, capacity {:.3?} nats, gap {:.3}",
            r.ratio, r.per_subchannel_entropy, r.per_subchannel_capacity, r.gap()
        );
    }
    Ok(())
}
