//! Rayleigh block-fading MIMO channels with SVD precoding.
//!
//! A realization `H = U Σ Vᴴ` is precoded with `V` and combined with `Uᴴ`,
//! which turns the MIMO link into `N_s` parallel scalar sub-channels
//! `ẑ_i = λ_i z_i + ŵ_i` with equivalent SNR `λ_i² P / (N_s σ²)`.
//!
//! Conventions used throughout the crate:
//! - `power` is the average total transmit power per channel use, so a
//!   power-normalized `N_s × k` feature matrix has `‖Z‖_F² = k·P`.
//! - The scalar system SNR is `P/σ²`, i.e. `σ² = P·10^(−SNR_dB/10)`.
//! - Complex noise of variance `σ²` puts `σ²/2` on each real component.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_streams: usize,
    pub power: f64,
    pub noise_variance: f64,
}

impl ChannelConfig {
    /// `n_tx × n_rx` link carrying `min(n_tx, n_rx)` streams at unit power and unit noise.
    pub fn new(n_tx: usize, n_rx: usize) -> Self {
        ChannelConfig {
            n_tx,
            n_rx,
            n_streams: n_tx.min(n_rx),
            power: 1.0,
            noise_variance: 1.0,
        }
    }

    pub fn with_streams(mut self, n_streams: usize) -> Self {
        self.n_streams = n_streams;
        self
    }

    pub fn with_noise_variance(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }

    /// Sets `σ²` from a system SNR in dB (`SNR = P/σ²`). `+∞` gives a noiseless link.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_variance = noise_variance_for_snr(self.power, snr_db);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 || self.n_streams == 0 {
            return Err(Error::Config(format!(
                "antenna and stream counts must be positive (n_tx={}, n_rx={}, n_streams={})",
                self.n_tx, self.n_rx, self.n_streams
            )));
        }
        if self.n_streams > self.n_tx.min(self.n_rx) {
            return Err(Error::Config(format!(
                "n_streams={} exceeds min(n_tx={}, n_rx={})",
                self.n_streams, self.n_tx, self.n_rx
            )));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::Config(format!("power must be positive, got {}", self.power)));
        }
        // σ² = 0 is accepted for noiseless probes; negative or NaN is not.
        if !(self.noise_variance >= 0.0) {
            return Err(Error::Config(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// System SNR `P/σ²` in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.power / self.noise_variance).log10()
    }
}

pub fn noise_variance_for_snr(power: f64, snr_db: f64) -> f64 {
    power * 10f64.powf(-snr_db / 10.0)
}

/// One channel draw together with its full SVD.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `N_r × N_t` channel matrix.
    pub h: CMatrix,
    /// `N_r × N_r` unitary combiner basis.
    pub u: CMatrix,
    /// `N_t × N_t` unitary precoder basis.
    pub v: CMatrix,
    /// All `min(N_r, N_t)` singular values, descending.
    pub spectrum: Vec<f64>,
    n_streams: usize,
}

impl ChannelRealization {
    /// Decomposes `h` and keeps the strongest `n_streams` sub-channels.
    pub fn from_matrix(h: CMatrix, n_streams: usize) -> Result<Self> {
        let (n_rx, n_tx) = h.shape();
        if n_streams == 0 || n_streams > n_rx.min(n_tx) {
            return Err(Error::Config(format!(
                "cannot carry {n_streams} streams over a {n_rx}x{n_tx} channel"
            )));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Input("channel matrix has non-finite entries".into()));
        }
        let svd = h.clone().svd(true, true);
        let u_thin = svd.u.ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not produce Vᴴ".into()))?;
        let r = svd.singular_values.len();

        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let spectrum: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
        let u_sorted = CMatrix::from_fn(n_rx, r, |row, col| u_thin[(row, order[col])]);
        let v_sorted = CMatrix::from_fn(n_tx, r, |row, col| v_t[(order[col], row)].conj());

        Ok(ChannelRealization {
            u: complete_unitary(&u_sorted),
            v: complete_unitary(&v_sorted),
            h,
            spectrum,
            n_streams,
        })
    }

    /// Singular values of the `N_s` active sub-channels (the `λ_i`), descending.
    pub fn sigma(&self) -> &[f64] {
        &self.spectrum[..self.n_streams]
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    /// `U Σ Vᴴ` rebuilt from the stored factors.
    pub fn reconstruct(&self) -> CMatrix {
        let (n_rx, n_tx) = self.h.shape();
        let mut sigma = CMatrix::zeros(n_rx, n_tx);
        for (i, &s) in self.spectrum.iter().enumerate() {
            sigma[(i, i)] = C64::new(s, 0.0);
        }
        &self.u * sigma * self.v.adjoint()
    }
}

/// Extends a matrix with orthonormal columns to a square unitary matrix by
/// Gram–Schmidt against the standard basis.
fn complete_unitary(partial: &CMatrix) -> CMatrix {
    let n = partial.nrows();
    let mut cols: Vec<nalgebra::DVector<C64>> = partial.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while cols.len() < n && e < n {
        let mut cand = nalgebra::DVector::<C64>::zeros(n);
        cand[e] = C64::new(1.0, 0.0);
        e += 1;
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&cand);
                cand -= c * proj;
            }
        }
        let norm = cand.norm();
        if norm > 1e-6 {
            cols.push(cand / C64::new(norm, 0.0));
        }
    }
    CMatrix::from_columns(&cols)
}

pub(crate) fn complex_gaussian(rng: &mut Rng, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, variance: f64, rng: &mut Rng) -> CMatrix {
    // Column-major fill order, fixed so that seeds map to identical matrices.
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_gaussian(rng, variance);
        }
    }
    m
}

/// Draws `H` with i.i.d. CN(0, 1) entries from a seeded generator.
pub fn sample_rayleigh_channel(cfg: &ChannelConfig, seed: u64) -> Result<ChannelRealization> {
    sample_rayleigh_channel_with(cfg, &mut rng_from(seed))
}

pub fn sample_rayleigh_channel_with(cfg: &ChannelConfig, rng: &mut Rng) -> Result<ChannelRealization> {
    cfg.validate()?;
    let h = gaussian_matrix(cfg.n_rx, cfg.n_tx, 1.0, rng);
    ChannelRealization::from_matrix(h, cfg.n_streams)
}

/// Haar-distributed unitary matrix: QR of a complex Gaussian matrix with the
/// phases of `R`'s diagonal folded back into `Q`.
pub fn random_unitary(n: usize, rng: &mut Rng) -> CMatrix {
    let g = gaussian_matrix(n, n, 1.0, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Builds `H = U diag(λ) Vᴴ` with random unitary `U`, `V` and prescribed
/// singular values, rescaled so that `Σ λ_i² = N_s`.
pub fn build_fixed_singular_channel(
    cfg: &ChannelConfig,
    singular_values: &[f64],
    seed: u64,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    if singular_values.len() != cfg.n_streams {
        return Err(Error::Input(format!(
            "expected {} singular values, got {}",
            cfg.n_streams,
            singular_values.len()
        )));
    }
    if singular_values.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Input(format!(
            "singular values must be positive and finite, got {singular_values:?}"
        )));
    }
    if singular_values.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Input(format!(
            "singular values must be in descending order, got {singular_values:?}"
        )));
    }
    let energy: f64 = singular_values.iter().map(|s| s * s).sum();
    let scale = (cfg.n_streams as f64 / energy).sqrt();
    let lambdas: Vec<f64> = singular_values.iter().map(|s| s * scale).collect();

    let mut rng = rng_from(seed);
    let u = random_unitary(cfg.n_rx, &mut rng);
    let v = random_unitary(cfg.n_tx, &mut rng);
    let mut sigma = CMatrix::zeros(cfg.n_rx, cfg.n_tx);
    for (i, &l) in lambdas.iter().enumerate() {
        sigma[(i, i)] = C64::new(l, 0.0);
    }
    let h = &u * sigma * v.adjoint();

    let mut spectrum = vec![0.0; cfg.n_rx.min(cfg.n_tx)];
    spectrum[..lambdas.len()].copy_from_slice(&lambdas);
    Ok(ChannelRealization {
        h,
        u,
        v,
        spectrum,
        n_streams: cfg.n_streams,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubchannelState {
    pub snrs_linear: Vec<f64>,
    pub snrs_db: Vec<f64>,
}

impl SubchannelState {
    pub fn from_linear(snrs_linear: Vec<f64>) -> Self {
        let snrs_db = snrs_linear.iter().map(|s| 10.0 * s.log10()).collect();
        SubchannelState { snrs_linear, snrs_db }
    }
}

/// Equivalent per-sub-channel SNRs `λ_i² P / (N_s σ²)`.
pub fn compute_subchannel_snrs(realization: &ChannelRealization, cfg: &ChannelConfig) -> Result<SubchannelState> {
    check_realization(realization, cfg)?;
    let ns = cfg.n_streams as f64;
    let snrs = realization
        .sigma()
        .iter()
        .map(|l| l * l * cfg.power / (ns * cfg.noise_variance))
        .collect();
    Ok(SubchannelState::from_linear(snrs))
}

fn check_realization(realization: &ChannelRealization, cfg: &ChannelConfig) -> Result<()> {
    if realization.h.shape() != (cfg.n_rx, cfg.n_tx) || realization.n_streams != cfg.n_streams {
        return Err(Error::Input(format!(
            "realization is {}x{} with {} streams, config expects {}x{} with {}",
            realization.h.nrows(),
            realization.h.ncols(),
            realization.n_streams,
            cfg.n_rx,
            cfg.n_tx,
            cfg.n_streams
        )));
    }
    Ok(())
}

/// The complex `N_s × k` encoder output (or its received counterpart).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: CMatrix,
}

impl FeatureMatrix {
    pub fn new(data: CMatrix) -> Self {
        FeatureMatrix { data }
    }

    pub fn n_streams(&self) -> usize {
        self.data.nrows()
    }

    /// Channel uses `k`.
    pub fn channel_uses(&self) -> usize {
        self.data.ncols()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Scales `z` so that `‖z‖_F² = k·P`.
pub fn normalize_power(z: &FeatureMatrix, cfg: &ChannelConfig) -> Result<FeatureMatrix> {
    let energy = z.energy();
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot power-normalize a feature matrix with energy {energy}"
        )));
    }
    let scale = (z.channel_uses() as f64 * cfg.power / energy).sqrt();
    Ok(FeatureMatrix::new(z.data.map(|v| v * scale)))
}

fn check_features(z: &FeatureMatrix, cfg: &ChannelConfig) -> Result<()> {
    if z.n_streams() != cfg.n_streams {
        return Err(Error::Input(format!(
            "feature matrix has {} rows, config carries {} streams",
            z.n_streams(),
            cfg.n_streams
        )));
    }
    Ok(())
}

/// `Ẑ = Uᴴ (H V Z_pad + W)`, first `N_s` rows. `Z` is zero-padded to `N_t` rows.
pub fn transmit_full_path(
    z: &FeatureMatrix,
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    seed: u64,
) -> Result<FeatureMatrix> {
    transmit_full_path_with(z, realization, cfg, &mut rng_from(seed))
}

pub fn transmit_full_path_with(
    z: &FeatureMatrix,
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    rng: &mut Rng,
) -> Result<FeatureMatrix> {
    check_realization(realization, cfg)?;
    check_features(z, cfg)?;
    let k = z.channel_uses();
    let mut padded = CMatrix::zeros(cfg.n_tx, k);
    padded.rows_mut(0, cfg.n_streams).copy_from(&z.data);
    let mut y = &realization.h * (&realization.v * padded);
    if cfg.noise_variance > 0.0 {
        y += gaussian_matrix(cfg.n_rx, k, cfg.noise_variance, rng);
    }
    let combined = realization.u.adjoint() * y;
    Ok(FeatureMatrix::new(combined.rows(0, cfg.n_streams).into_owned()))
}

/// `ẑ_i = λ_i z_i + ŵ_i` row by row.
pub fn transmit_equivalent(
    z: &FeatureMatrix,
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    seed: u64,
) -> Result<FeatureMatrix> {
    transmit_equivalent_with(z, realization, cfg, &mut rng_from(seed))
}

pub fn transmit_equivalent_with(
    z: &FeatureMatrix,
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    rng: &mut Rng,
) -> Result<FeatureMatrix> {
    check_realization(realization, cfg)?;
    check_features(z, cfg)?;
    let sigma = realization.sigma();
    let mut out = z.data.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v *= sigma[i];
        }
    }
    if cfg.noise_variance > 0.0 {
        out += gaussian_matrix(cfg.n_streams, z.channel_uses(), cfg.noise_variance, rng);
    }
    Ok(FeatureMatrix::new(out))
}
