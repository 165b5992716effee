//! Transmission without precoding: Alamouti space-time diversity and
//! spatial multiplexing with linear equalization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, C64};
use crate::error::{Error, Result};

/// Maps symbol pairs `(s₁, s₂)` onto two antennas over two slots:
/// slot 1 sends `(s₁, s₂)`, slot 2 sends `(−s₂*, s₁*)`. Every entry is scaled
/// by `1/√2` so that the per-use total power equals the symbol power.
pub fn alamouti_encode(symbols: &[C64]) -> Result<CMatrix> {
    if symbols.is_empty() || symbols.len() % 2 != 0 {
        return Err(Error::Input(format!(
            "Alamouti coding needs an even, non-zero number of symbols, got {}",
            symbols.len()
        )));
    }
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let mut x = CMatrix::zeros(2, symbols.len());
    for (p, pair) in symbols.chunks_exact(2).enumerate() {
        let (s1, s2) = (pair[0], pair[1]);
        x[(0, 2 * p)] = s1 * a;
        x[(1, 2 * p)] = s2 * a;
        x[(0, 2 * p + 1)] = -s2.conj() * a;
        x[(1, 2 * p + 1)] = s1.conj() * a;
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct AlamoutiOutput {
    pub symbols: Vec<C64>,
    /// Per-symbol noise variance after combining, `2σ²/‖h‖_F²`.
    pub noise_variance: f64,
}

/// Maximum-ratio Alamouti combining for an `N_r × 2` channel that is constant
/// over each two-slot block. The channel gain `‖h‖_F²` and the encoder's
/// `1/√2` split are divided out, so a noiseless round trip is the identity.
pub fn alamouti_combine(received: &CMatrix, h: &CMatrix, noise_variance: f64) -> Result<AlamoutiOutput> {
    if h.ncols() != 2 {
        return Err(Error::Input(format!("Alamouti combining needs 2 transmit antennas, channel has {}", h.ncols())));
    }
    if received.nrows() != h.nrows() || received.ncols() % 2 != 0 {
        return Err(Error::Input(format!(
            "received block is {}x{}, expected {} rows and an even number of slots",
            received.nrows(),
            received.ncols(),
            h.nrows()
        )));
    }
    let gain: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    if gain < 1e-24 {
        return Err(Error::Degenerate("Alamouti combining over an all-zero channel".into()));
    }
    let scale = std::f64::consts::SQRT_2 / gain;
    let mut symbols = Vec::with_capacity(received.ncols());
    for p in 0..received.ncols() / 2 {
        let mut s1 = C64::new(0.0, 0.0);
        let mut s2 = C64::new(0.0, 0.0);
        for r in 0..h.nrows() {
            let (h1, h2) = (h[(r, 0)], h[(r, 1)]);
            let (y1, y2) = (received[(r, 2 * p)], received[(r, 2 * p + 1)]);
            s1 += h1.conj() * y1 + h2 * y2.conj();
            s2 += h2.conj() * y1 - h1 * y2.conj();
        }
        symbols.push(s1 * scale);
        symbols.push(s2 * scale);
    }
    Ok(AlamoutiOutput {
        symbols,
        noise_variance: 2.0 * noise_variance / gain,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualizerScheme {
    Mmse,
    ZeroForcing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualizerConfig {
    /// `σ² / P_s`; ignored for zero forcing.
    pub regularizer: f64,
    pub scheme: EqualizerScheme,
}

impl EqualizerConfig {
    pub fn mmse(regularizer: f64) -> Result<Self> {
        if !(regularizer >= 0.0) {
            return Err(Error::Config(format!("MMSE regularizer must be non-negative, got {regularizer}")));
        }
        Ok(EqualizerConfig {
            regularizer,
            scheme: EqualizerScheme::Mmse,
        })
    }

    pub fn zero_forcing() -> Self {
        EqualizerConfig {
            regularizer: 0.0,
            scheme: EqualizerScheme::ZeroForcing,
        }
    }
}

/// Equalization matrix `G = (hᴴh + δI)⁻¹ hᴴ`, so that `Ẑ = G Y`.
pub fn equalizer_matrix(h: &CMatrix, cfg: &EqualizerConfig) -> Result<CMatrix> {
    let hh = h.adjoint() * h;
    let n = hh.nrows();
    let gram = match cfg.scheme {
        EqualizerScheme::ZeroForcing => {
            let sv = h.clone().singular_values();
            let max = sv.max();
            let min = sv.min();
            if h.ncols() > h.nrows() || !(max > 0.0) || min / max < 1e-12 {
                return Err(Error::Numerical(format!(
                    "zero-forcing needs a full-column-rank channel (singular values {:?})",
                    sv.as_slice()
                )));
            }
            hh
        }
        EqualizerScheme::Mmse => {
            if !(cfg.regularizer >= 0.0) {
                return Err(Error::Config(format!("MMSE regularizer must be non-negative, got {}", cfg.regularizer)));
            }
            hh + DMatrix::<C64>::identity(n, n) * C64::new(cfg.regularizer, 0.0)
        }
    };
    let lu = gram.lu();
    lu.solve(&h.adjoint())
        .ok_or_else(|| Error::Numerical("equalizer Gram matrix is singular".into()))
}

/// `Ẑ = (hᴴh + δI)⁻¹ hᴴ Y` for an `N_r × k` received block.
pub fn mmse_equalize(received: &CMatrix, h: &CMatrix, cfg: &EqualizerConfig) -> Result<CMatrix> {
    if received.nrows() != h.nrows() {
        return Err(Error::Input(format!(
            "received block has {} rows, channel has {} receive antennas",
            received.nrows(),
            h.nrows()
        )));
    }
    Ok(equalizer_matrix(h, cfg)? * received)
}
