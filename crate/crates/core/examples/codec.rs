//! Serial and parallel attention codecs: shapes, power, and how the
//! attention gates respond to CSI.
//!
//!     cargo run --example codec

use mimo_djscc::channel::ChannelConfig;
use mimo_djscc::data::synthetic_dataset;
use mimo_djscc::model::{CodecModel, CsiVector, ImageShape, ModelSpec, Structure};

fn main() -> mimo_djscc::Result<()> {
    let image = ImageShape::new(3, 32, 32);
    let x = synthetic_dataset(1, image, 5).image(0);
    let cfg = ChannelConfig::new(2, 2);

    for structure in [Structure::Serial, Structure::Parallel] {
        let spec = ModelSpec::precoded(structure, image, 2, 1.0 / 12.0, 32, 1)?;
        let model = CodecModel::new(spec)?;
        println!(
            "{structure:?}: {} branch(es), {} parameters ({} in attention)",
            model.branches.len(),
            model.param_count(),
            model.attention_param_count()
        );

        let csi = CsiVector::for_structure(structure, &[14.0, 2.0]);
        let z = model.encode(&x, &csi, &cfg)?;
        println!("  Z is {}x{}, ‖Z‖² = {:.1}", z.n_streams(), z.channel_uses(), z.energy());

        let y = model.decode(&z, &csi)?;
        println!("  reconstruction {:?}, pixel range [{:.1}, {:.1}]", y.shape(),
            y.data.iter().cloned().fold(f64::INFINITY, f64::min),
            y.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max));

        let low = model.encoder_gates(&x, &CsiVector::for_structure(structure, &[0.0, -8.0]))?;
        let high = model.encoder_gates(&x, &CsiVector::for_structure(structure, &[22.0, 15.0]))?;
        let shift = low.iter().zip(&high).map(|(a, b)| (a - b).abs()).sum::<f64>() / low.len() as f64;
        println!("  mean attention change between poor and good CSI: {shift:.4}");
    }
    Ok(())
}
