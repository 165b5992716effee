//! Non-parametric differential entropy of encoder outputs.
//!
//! The estimator is the k-nearest-neighbour form
//! `Ĥ = ψ(N) − ψ(k) + ln c_d + (d/N) Σ ln ε(i)`, where `ε(i)` is the
//! Euclidean distance from sample `i` to its k-th nearest neighbour and
//! `c_d` the volume of the unit `d`-ball. Results are in nats.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::channel::build_fixed_singular_channel;
use crate::data::ImageSet;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::scheme::System;

/// Digamma function for `x > 0`: upward recurrence to `x ≥ 6`, then the
/// asymptotic expansion.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma is evaluated only for finite x > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Bernoulli terms B_2n / (2n x^2n), n = 1..7, in Horner form.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    Ok(acc + x.ln() - 0.5 / x - series)
}

/// Volume of the unit Euclidean ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} · 2π / d
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut n = if d % 2 == 0 { 2 } else { 3 };
    while n <= d {
        v *= std::f64::consts::TAU / n as f64;
        n += 2;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborRule {
    /// `k = ⌊√N⌋`.
    SqrtN,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyEstimatorConfig {
    pub dim: usize,
    pub neighbor_rule: NeighborRule,
    /// Overrides the Euclidean unit-ball volume when set.
    pub unit_ball_volume: Option<f64>,
    pub min_distance_floor: f64,
    /// Points per sub-channel fed to the estimator by the sweep.
    pub sample_budget: usize,
}

impl Default for EntropyEstimatorConfig {
    fn default() -> Self {
        EntropyEstimatorConfig {
            dim: 2,
            neighbor_rule: NeighborRule::SqrtN,
            unit_ball_volume: None,
            min_distance_floor: 1e-12,
            sample_budget: 10_000,
        }
    }
}

impl EntropyEstimatorConfig {
    pub fn neighbors(&self, n: usize) -> usize {
        match self.neighbor_rule {
            NeighborRule::SqrtN => (n as f64).sqrt().floor() as usize,
            NeighborRule::Fixed(k) => k,
        }
    }

    pub fn ball_volume(&self) -> f64 {
        self.unit_ball_volume.unwrap_or_else(|| unit_ball_volume(self.dim))
    }
}

/// Estimates the differential entropy (nats) of `samples`, a row-major
/// `N × dim` array. Neighbour search is exact.
pub fn knn_entropy(samples: &[f64], cfg: &EntropyEstimatorConfig) -> Result<f64> {
    let d = cfg.dim;
    if d == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    if samples.len() % d != 0 {
        return Err(Error::Input(format!("{} values do not form {d}-dimensional points", samples.len())));
    }
    let n = samples.len() / d;
    if n < 10 {
        return Err(Error::Input(format!("need at least 10 samples, got {n}")));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("samples contain NaN".into()));
    }
    let k = cfg.neighbors(n);
    if k == 0 || k >= n {
        return Err(Error::Config(format!("neighbour count k={k} must satisfy 1 ≤ k < N={n}")));
    }
    if samples.chunks_exact(d).all(|p| p == &samples[..d]) {
        return Err(Error::Degenerate("all samples are identical".into()));
    }

    let floor = cfg.min_distance_floor;
    let mut dist = vec![0.0; n - 1];
    let mut log_sum = 0.0;
    for i in 0..n {
        let pi = &samples[i * d..(i + 1) * d];
        let mut m = 0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let pj = &samples[j * d..(j + 1) * d];
            dist[m] = pi.iter().zip(pj).map(|(a, b)| (a - b) * (a - b)).sum();
            m += 1;
        }
        let (_, kth, _) = dist.select_nth_unstable_by(k - 1, f64::total_cmp);
        log_sum += kth.sqrt().max(floor).ln();
    }
    Ok(digamma(n as f64)? - digamma(k as f64)? + cfg.ball_volume().ln() + d as f64 * log_sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub ratio: f64,
    /// Estimated entropy per sub-channel (nats), strongest first.
    pub per_subchannel_entropy: Vec<f64>,
    /// `ln(1 + SNR_i)` per sub-channel (nats).
    pub per_subchannel_capacity: Vec<f64>,
    pub sample_count: usize,
    /// False when the sweep ran on an untrained model.
    pub model_trained: bool,
}

impl EntropyReport {
    pub fn gap(&self) -> f64 {
        self.per_subchannel_entropy[0] - self.per_subchannel_entropy[self.per_subchannel_entropy.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySweepConfig {
    pub ratios: Vec<f64>,
    pub snr_db: f64,
    pub estimator: EntropyEstimatorConfig,
    pub seed: u64,
}

impl Default for EntropySweepConfig {
    fn default() -> Self {
        EntropySweepConfig {
            ratios: vec![1.0, 1.5, 2.0, 3.0, 4.0],
            snr_db: 10.0,
            estimator: EntropyEstimatorConfig::default(),
            seed: 0,
        }
    }
}

/// For each singular-value ratio `r = λ₁/λ₂`, encodes the dataset over
/// 2-stream channels with `λ ∝ (r, 1)`, `Σλ² = N_s`, and estimates the
/// entropy of each sub-channel's complex symbols viewed as 2-D points.
pub fn subchannel_entropy_sweep(
    system: &System,
    dataset: &ImageSet,
    sweep: &EntropySweepConfig,
    model_trained: bool,
) -> Result<Vec<EntropyReport>> {
    if !system.scheme.is_precoded() {
        return Err(Error::Config(format!("{} has no SVD sub-channels to probe", system.scheme)));
    }
    if system.antennas.n_streams != 2 {
        return Err(Error::Config("the singular-value ratio sweep needs exactly 2 streams".into()));
    }
    if dataset.is_empty() || sweep.ratios.is_empty() {
        return Err(Error::Input("entropy sweep needs images and at least one ratio".into()));
    }
    if !model_trained {
        log::warn!("entropy sweep running on an untrained model");
    }
    let est = EntropyEstimatorConfig { dim: 2, ..sweep.estimator.clone() };
    let cfg = system.antennas.with_snr_db(sweep.snr_db);
    let ns = cfg.n_streams;
    let mut reports = Vec::with_capacity(sweep.ratios.len());
    for (ri, &r) in sweep.ratios.iter().enumerate() {
        if !(r >= 1.0) {
            return Err(Error::Input(format!("singular-value ratio must be ≥ 1, got {r}")));
        }
        let mut points: Vec<Vec<f64>> = vec![Vec::new(); ns];
        let mut capacity = Vec::new();
        for i in 0..dataset.len() {
            let seed = derive_seed(sweep.seed, &[ri as u64, i as u64]);
            let realization = build_fixed_singular_channel(&cfg, &[r, 1.0], seed)?;
            let draw = system.draw_from_realization(realization, sweep.snr_db)?;
            if capacity.is_empty() {
                capacity = draw.csi_snrs_db().iter().map(|db| (1.0 + 10f64.powf(db / 10.0)).ln()).collect();
            }
            let z = system.encode(&dataset.image(i), &draw)?;
            for (s, pts) in points.iter_mut().enumerate() {
                for v in z.data.row(s).iter() {
                    pts.push(v.re);
                    pts.push(v.im);
                }
            }
        }
        let available = points[0].len() / 2;
        let n = available.min(est.sample_budget);
        let mut entropies = Vec::with_capacity(ns);
        for (s, pts) in points.iter().enumerate() {
            let chosen = if n < available {
                let mut rng = rng_from(derive_seed(sweep.seed, &[u64::MAX, ri as u64, s as u64]));
                let mut idx = sample(&mut rng, available, n).into_vec();
                idx.sort_unstable();
                idx.iter().flat_map(|&j| [pts[2 * j], pts[2 * j + 1]]).collect()
            } else {
                pts.clone()
            };
            entropies.push(knn_entropy(&chosen, &est)?);
        }
        reports.push(EntropyReport {
            ratio: r,
            per_subchannel_entropy: entropies,
            per_subchannel_capacity: capacity,
            sample_count: n,
            model_trained,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Euler–Mascheroni constant from the Euler–Maclaurin expansion of the
    /// harmonic numbers, independent of the digamma code path.
    fn euler_gamma() -> f64 {
        let n = 1000.0f64;
        let h: f64 = (1..=1000).map(|i| 1.0 / i as f64).sum();
        h - n.ln() - 1.0 / (2.0 * n) + 1.0 / (12.0 * n * n) - 1.0 / (120.0 * n.powi(4))
    }

    #[test]
    fn digamma_reference_points() {
        let g = euler_gamma();
        assert!((g - 0.577_215_664_901_532_9).abs() < 1e-13);
        assert!((digamma(1.0).unwrap() + g).abs() < 1e-10);
        assert!((digamma(2.0).unwrap() - (1.0 - g)).abs() < 1e-10);
        // ψ(1/2) = −γ − 2 ln 2
        assert!((digamma(0.5).unwrap() + g + 2.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn digamma_recurrence() {
        for x in [0.5, 1.0, 3.7, 6.2, 40.0] {
            let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!((d - 1.0 / x).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn digamma_domain() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(-1.5), Err(Error::Domain(_))));
        assert!(matches!(digamma(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn estimator_errors() {
        let cfg = EntropyEstimatorConfig::default();
        assert!(matches!(knn_entropy(&[0.0; 10], &cfg), Err(Error::Input(_))));
        assert!(matches!(knn_entropy(&[1.0; 40], &cfg), Err(Error::Degenerate(_))));
        let mut v: Vec<f64> = (0..40).map(|i| i as f64).collect();
        v[3] = f64::NAN;
        assert!(matches!(knn_entropy(&v, &cfg), Err(Error::Input(_))));
        let cfg = EntropyEstimatorConfig {
            neighbor_rule: NeighborRule::Fixed(20),
            ..Default::default()
        };
        let v: Vec<f64> = (0..40).map(|i| i as f64).collect();
        assert!(matches!(knn_entropy(&v, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_points_are_floored() {
        let mut v: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        v.extend_from_slice(&v.clone()[..40]);
        let cfg = EntropyEstimatorConfig {
            neighbor_rule: NeighborRule::Fixed(1),
            ..Default::default()
        };
        assert!(knn_entropy(&v, &cfg).unwrap().is_finite());
    }
}
