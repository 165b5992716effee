//! Non-precoded transmission: Alamouti diversity and MMSE multiplexing.
//!
//!     cargo run --example baselines

use mimo_djscc::baselines::{alamouti_combine, alamouti_encode, mmse_equalize, EqualizerConfig};
use mimo_djscc::channel::{sample_rayleigh_channel, ChannelConfig, C64};

fn main() -> mimo_djscc::Result<()> {
    let cfg = ChannelConfig::new(2, 2);
    let h = sample_rayleigh_channel(&cfg, 4)?.h;
    let symbols = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.5), C64::new(0.3, -0.7)];

    let x = alamouti_encode(&symbols)?;
    println!("Alamouti block (2 antennas × {} slots):\n{x:.3}", x.ncols());
    let out = alamouti_combine(&(&h * &x), &h, 0.1)?;
    let shown: Vec<String> = out.symbols.iter().map(|s| format!("{s:.3}")).collect();
    println!("combined (noiseless): {}", shown.join(", "));
    println!("post-combining noise variance at σ² = 0.1: {:.4}", out.noise_variance);

    // Two streams at once, separated by the MMSE equalizer.
    let z = nalgebra::DMatrix::from_row_slice(2, 2, &symbols);
    let y = &h * &z;
    for delta in [1.0, 0.1, 0.0] {
        let est = mmse_equalize(&y, &h, &EqualizerConfig::mmse(delta)?)?;
        println!("MMSE δ = {delta}: residual {:.2e}", (est - &z).norm());
    }
    Ok(())
}
