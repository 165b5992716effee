//! Real ↔ complex mapping of encoder outputs and the differentiable power
//! normalization used during training.
//!
//! Layout: consecutive real pairs `(re, im)` form one complex symbol, and
//! symbols are laid out row-major by stream, so `raw[2(i·k + j)]` is
//! `Re z[i, j]`.

use crate::channel::{CMatrix, ChannelConfig, FeatureMatrix, C64};
use crate::error::{Error, Result};

pub fn to_complex_features(raw: &[f64], n_streams: usize) -> Result<FeatureMatrix> {
    if n_streams == 0 || raw.is_empty() || raw.len() % (2 * n_streams) != 0 {
        return Err(Error::Input(format!(
            "cannot map {} reals onto {} complex streams",
            raw.len(),
            n_streams
        )));
    }
    let k = raw.len() / (2 * n_streams);
    Ok(FeatureMatrix::new(CMatrix::from_fn(n_streams, k, |i, j| {
        let b = 2 * (i * k + j);
        C64::new(raw[b], raw[b + 1])
    })))
}

pub fn from_complex_features(z: &FeatureMatrix) -> Vec<f64> {
    let (rows, k) = z.data.shape();
    let mut out = Vec::with_capacity(2 * rows * k);
    for i in 0..rows {
        for j in 0..k {
            let v = z.data[(i, j)];
            out.push(v.re);
            out.push(v.im);
        }
    }
    out
}

/// Power normalization on the real representation. Returns the scaled vector
/// and the scale factor `sqrt(k·P / ‖raw‖²)`.
pub fn normalize_raw(raw: &[f64], channel_uses: usize, cfg: &ChannelConfig) -> Result<(Vec<f64>, f64)> {
    let energy: f64 = raw.iter().map(|v| v * v).sum();
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot power-normalize encoder output with energy {energy}"
        )));
    }
    let scale = (channel_uses as f64 * cfg.power / energy).sqrt();
    Ok((raw.iter().map(|v| v * scale).collect(), scale))
}

/// Gradient of `y = scale · s` with `scale = c / ‖s‖`, pulled back to `s`:
/// `(c/‖s‖) (g − s (sᵀg) / ‖s‖²)`.
pub fn normalize_raw_backward(raw: &[f64], scale: f64, grad_out: &[f64]) -> Vec<f64> {
    let energy: f64 = raw.iter().map(|v| v * v).sum();
    let dot: f64 = raw.iter().zip(grad_out).map(|(s, g)| s * g).sum();
    raw.iter()
        .zip(grad_out)
        .map(|(s, g)| scale * (g - s * dot / energy))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mapping_definition() {
        let z = to_complex_features(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert_eq!(z.data.shape(), (1, 2));
        assert_eq!(z.data[(0, 0)], C64::new(1.0, 2.0));
        assert_eq!(z.data[(0, 1)], C64::new(3.0, 4.0));
    }

    #[test]
    fn bad_lengths() {
        assert!(matches!(to_complex_features(&[1.0, 2.0, 3.0], 1), Err(Error::Input(_))));
        assert!(matches!(to_complex_features(&[1.0, 2.0], 2), Err(Error::Input(_))));
        assert!(matches!(to_complex_features(&[], 1), Err(Error::Input(_))));
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let cfg = ChannelConfig::new(2, 2);
        let raw = vec![0.3, -1.0, 2.0, 0.7, -0.2, 0.9, 1.1, -0.4];
        let w = [1.0, 2.0, -1.0, 0.5, 0.3, -0.7, 0.2, 1.5];
        let loss = |r: &[f64]| -> f64 {
            let (y, _) = normalize_raw(r, 2, &cfg).unwrap();
            y.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, scale) = normalize_raw(&raw, 2, &cfg).unwrap();
        let g = normalize_raw_backward(&raw, scale, &w);
        for i in 0..raw.len() {
            let mut r = raw.clone();
            r[i] += 1e-6;
            let up = loss(&r);
            r[i] -= 2e-6;
            assert!(((up - loss(&r)) / 2e-6 - g[i]).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn mapping_is_an_isometric_bijection(
            streams in 1usize..4,
            k in 1usize..6,
            seed in proptest::collection::vec(-100.0f64..100.0, 48),
        ) {
            let raw: Vec<f64> = seed[..2 * streams * k].to_vec();
            let z = to_complex_features(&raw, streams).unwrap();
            prop_assert_eq!(z.data.shape(), (streams, k));
            prop_assert_eq!(from_complex_features(&z), raw.clone());
            let e: f64 = raw.iter().map(|v| v * v).sum();
            prop_assert!((z.energy() - e).abs() <= 1e-9 * e.max(1.0));
        }
    }
}
