//! End-to-end transmission systems: a codec plus the way its feature matrix
//! crosses the MIMO channel.
//!
//! | scheme         | rows of Z | link                                   | CSI fed to attention     |
//! |----------------|-----------|----------------------------------------|--------------------------|
//! | `serial`       | `N_s`     | SVD precoding, `ẑ_i = λ_i z_i + ŵ_i`  | sub-channel SNRs (dB)    |
//! | `parallel`     | `N_s`     | same                                   | SNRs + one-hot per branch|
//! | `multiplexing` | `N_t`     | `Y = HZ + W`, MMSE equalization        | system SNR (dB)          |
//! | `diversity`    | `1`       | Alamouti over 2 antennas, MRC          | system SNR (dB)          |

use serde::{Deserialize, Serialize};

use crate::baselines::{alamouti_combine, alamouti_encode, equalizer_matrix, EqualizerConfig};
use crate::channel::{
    compute_subchannel_snrs, gaussian_matrix, transmit_equivalent_with, transmit_full_path_with, CMatrix,
    ChannelConfig, ChannelRealization, FeatureMatrix, C64,
};
use crate::error::{Error, Result};
use crate::features::{from_complex_features, normalize_raw, normalize_raw_backward, to_complex_features};
use crate::model::{CodecModel, CsiVector, DecodeTrace, EncodeTrace, ImageShape, ModelSpec, Structure};
use crate::nn::Tensor;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Serial,
    Parallel,
    Multiplexing,
    Diversity,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Serial, Scheme::Parallel, Scheme::Multiplexing, Scheme::Diversity];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Serial => "serial",
            Scheme::Parallel => "parallel",
            Scheme::Multiplexing => "multiplexing",
            Scheme::Diversity => "diversity",
        }
    }

    pub fn is_precoded(self) -> bool {
        matches!(self, Scheme::Serial | Scheme::Parallel)
    }

    /// Architecture for this scheme on the given antenna configuration.
    pub fn model_spec(
        self,
        image: ImageShape,
        antennas: &ChannelConfig,
        bandwidth_ratio: f64,
        width: usize,
        seed: u64,
    ) -> Result<ModelSpec> {
        antennas.validate()?;
        match self {
            Scheme::Serial => ModelSpec::precoded(Structure::Serial, image, antennas.n_streams, bandwidth_ratio, width, seed),
            Scheme::Parallel => {
                ModelSpec::precoded(Structure::Parallel, image, antennas.n_streams, bandwidth_ratio, width, seed)
            }
            Scheme::Multiplexing | Scheme::Diversity => {
                let rows = if self == Scheme::Multiplexing { antennas.n_tx } else { 1 };
                if self == Scheme::Diversity && antennas.n_tx != 2 {
                    return Err(Error::Config(format!(
                        "the Alamouti diversity scheme needs exactly 2 transmit antennas, got {}",
                        antennas.n_tx
                    )));
                }
                let mut spec = ModelSpec::precoded(Structure::Serial, image, rows, bandwidth_ratio, width, seed)?;
                spec.n_snrs = 1;
                if self == Scheme::Diversity && spec.channel_uses % 2 != 0 {
                    return Err(Error::Config(format!(
                        "Alamouti coding needs an even number of channel uses, got {}",
                        spec.channel_uses
                    )));
                }
                Ok(spec)
            }
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

/// Which channel model carries precoded features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkPath {
    /// Diagonal sub-channel model.
    Equivalent,
    /// Explicit `Uᴴ(H V Z + W)`.
    Full,
}

#[derive(Debug, Clone)]
enum DrawKind {
    Precoded(ChannelRealization),
    Multiplexing { h: CMatrix, equalizer: CMatrix, effective: CMatrix },
    Diversity { h: CMatrix },
}

/// One block-fading channel state with its noise level.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    /// Antenna counts plus the `σ²` of this draw.
    pub cfg: ChannelConfig,
    pub snr_db: f64,
    kind: DrawKind,
    csi_snrs_db: Vec<f64>,
    structure: Structure,
}

impl ChannelDraw {
    /// SNR values (dB) handed to the attention modules.
    pub fn csi_snrs_db(&self) -> &[f64] {
        &self.csi_snrs_db
    }

    pub fn csi(&self) -> Vec<CsiVector> {
        CsiVector::for_structure(self.structure, &self.csi_snrs_db)
    }

    pub fn realization(&self) -> Option<&ChannelRealization> {
        match &self.kind {
            DrawKind::Precoded(r) => Some(r),
            _ => None,
        }
    }

    pub fn h(&self) -> &CMatrix {
        match &self.kind {
            DrawKind::Precoded(r) => &r.h,
            DrawKind::Multiplexing { h, .. } | DrawKind::Diversity { h } => h,
        }
    }

    /// The same channel with noise switched off; CSI is unchanged.
    pub fn noiseless(&self) -> ChannelDraw {
        let mut d = self.clone();
        d.cfg.noise_variance = 0.0;
        d
    }
}

/// A codec bound to a transmission scheme and antenna configuration.
#[derive(Debug, Clone)]
pub struct System {
    pub scheme: Scheme,
    pub model: CodecModel,
    /// Antenna counts and power; `noise_variance` is set per draw.
    pub antennas: ChannelConfig,
}

pub struct SampleTrace {
    pub recon: Tensor,
    pub loss: f64,
    enc: EncodeTrace,
    raw: Vec<f64>,
    scale: f64,
    link_gain: LinkGrad,
    dec: DecodeTrace,
}

enum LinkGrad {
    RowGains(Vec<f64>),
    Linear(CMatrix),
    Identity,
}

/// `(1/n) Σ (x̂ − x)²` for one image in the 0–255 domain.
pub fn image_mse(x: &Tensor, x_hat: &Tensor) -> f64 {
    x.data.iter().zip(&x_hat.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.data.len() as f64
}

impl System {
    pub fn new(scheme: Scheme, antennas: ChannelConfig, spec: ModelSpec) -> Result<Self> {
        antennas.validate()?;
        let model = CodecModel::new(spec)?;
        let sys = System { scheme, model, antennas };
        sys.check()?;
        Ok(sys)
    }

    pub fn from_model(scheme: Scheme, antennas: ChannelConfig, model: CodecModel) -> Result<Self> {
        let sys = System { scheme, model, antennas };
        sys.check()?;
        Ok(sys)
    }

    fn check(&self) -> Result<()> {
        let spec = &self.model.spec;
        let expected_rows = match self.scheme {
            Scheme::Serial | Scheme::Parallel => self.antennas.n_streams,
            Scheme::Multiplexing => self.antennas.n_tx,
            Scheme::Diversity => 1,
        };
        let structure_ok = match self.scheme {
            Scheme::Serial | Scheme::Multiplexing | Scheme::Diversity => spec.structure == Structure::Serial,
            Scheme::Parallel => spec.structure == Structure::Parallel,
        };
        let snrs_ok = if self.scheme.is_precoded() { spec.n_snrs == self.antennas.n_streams } else { spec.n_snrs == 1 };
        if spec.n_streams != expected_rows || !structure_ok || !snrs_ok {
            return Err(Error::Config(format!(
                "model ({:?}, {} rows, {} SNR inputs) does not fit the {} scheme on {}x{}",
                spec.structure, spec.n_streams, spec.n_snrs, self.scheme, self.antennas.n_tx, self.antennas.n_rx
            )));
        }
        if self.scheme == Scheme::Diversity && (self.antennas.n_tx != 2 || spec.channel_uses % 2 != 0) {
            return Err(Error::Config("diversity scheme needs 2 transmit antennas and an even k".into()));
        }
        Ok(())
    }

    /// Wraps a channel matrix `H` (`N_r × N_t`) at the given system SNR.
    pub fn draw_from_matrix(&self, h: CMatrix, snr_db: f64) -> Result<ChannelDraw> {
        let cfg = self.antennas.with_snr_db(snr_db);
        let structure = self.model.spec.structure;
        match self.scheme {
            Scheme::Serial | Scheme::Parallel => {
                let realization = ChannelRealization::from_matrix(h, cfg.n_streams)?;
                self.draw_from_realization(realization, snr_db)
            }
            Scheme::Multiplexing => {
                let per_stream_power = cfg.power / cfg.n_tx as f64;
                let eq = EqualizerConfig::mmse(cfg.noise_variance / per_stream_power)?;
                let equalizer = equalizer_matrix(&h, &eq)?;
                let effective = &equalizer * &h;
                Ok(ChannelDraw {
                    cfg,
                    snr_db,
                    kind: DrawKind::Multiplexing { h, equalizer, effective },
                    csi_snrs_db: vec![snr_db],
                    structure,
                })
            }
            Scheme::Diversity => Ok(ChannelDraw {
                cfg,
                snr_db,
                kind: DrawKind::Diversity { h },
                csi_snrs_db: vec![snr_db],
                structure,
            }),
        }
    }

    /// Precoded draw over a given (possibly constructed) realization.
    pub fn draw_from_realization(&self, realization: ChannelRealization, snr_db: f64) -> Result<ChannelDraw> {
        if !self.scheme.is_precoded() {
            return Err(Error::Config(format!("{} does not use SVD precoding", self.scheme)));
        }
        let cfg = self.antennas.with_snr_db(snr_db);
        let state = compute_subchannel_snrs(&realization, &cfg)?;
        Ok(ChannelDraw {
            cfg,
            snr_db,
            kind: DrawKind::Precoded(realization),
            csi_snrs_db: state.snrs_db,
            structure: self.model.spec.structure,
        })
    }

    /// Fresh Rayleigh channel at the given SNR.
    pub fn sample_draw(&self, snr_db: f64, rng: &mut Rng) -> Result<ChannelDraw> {
        let h = gaussian_matrix(self.antennas.n_rx, self.antennas.n_tx, 1.0, rng);
        self.draw_from_matrix(h, snr_db)
    }

    /// Encoder output after power normalization.
    pub fn encode(&self, image: &Tensor, draw: &ChannelDraw) -> Result<FeatureMatrix> {
        self.model.encode(image, &draw.csi(), &draw.cfg)
    }

    /// Carries a power-normalized feature matrix across the channel and
    /// returns what the decoder sees.
    pub fn transmit(&self, z: &FeatureMatrix, draw: &ChannelDraw, path: LinkPath, rng: &mut Rng) -> Result<FeatureMatrix> {
        Ok(self.transmit_inner(z, draw, path, rng)?.0)
    }

    fn transmit_inner(
        &self,
        z: &FeatureMatrix,
        draw: &ChannelDraw,
        path: LinkPath,
        rng: &mut Rng,
    ) -> Result<(FeatureMatrix, LinkGrad)> {
        let cfg = &draw.cfg;
        match &draw.kind {
            DrawKind::Precoded(r) => {
                let out = match path {
                    LinkPath::Equivalent => transmit_equivalent_with(z, r, cfg, rng)?,
                    LinkPath::Full => transmit_full_path_with(z, r, cfg, rng)?,
                };
                Ok((out, LinkGrad::RowGains(r.sigma().to_vec())))
            }
            DrawKind::Multiplexing { h, equalizer, effective } => {
                let mut y = h * &z.data;
                if cfg.noise_variance > 0.0 {
                    y += gaussian_matrix(cfg.n_rx, z.channel_uses(), cfg.noise_variance, rng);
                }
                Ok((FeatureMatrix::new(equalizer * y), LinkGrad::Linear(effective.clone())))
            }
            DrawKind::Diversity { h } => {
                let symbols: Vec<C64> = z.data.iter().copied().collect();
                let x = alamouti_encode(&symbols)?;
                let mut y = h * x;
                if cfg.noise_variance > 0.0 {
                    y += gaussian_matrix(cfg.n_rx, y.ncols(), cfg.noise_variance, rng);
                }
                let out = alamouti_combine(&y, h, cfg.noise_variance)?;
                Ok((
                    FeatureMatrix::new(CMatrix::from_row_slice(1, out.symbols.len(), &out.symbols)),
                    LinkGrad::Identity,
                ))
            }
        }
    }

    /// Full forward pass for one image; keeps everything needed for backward.
    pub fn forward(&self, image: &Tensor, draw: &ChannelDraw, path: LinkPath, rng: &mut Rng) -> Result<SampleTrace> {
        let csi = draw.csi();
        let spec = &self.model.spec;
        let (raw, enc) = self.model.encode_raw(image, &csi)?;
        let (norm, scale) = normalize_raw(&raw, spec.channel_uses, &draw.cfg)?;
        let z = to_complex_features(&norm, spec.n_streams)?;
        let (received, link_gain) = self.transmit_inner(&z, draw, path, rng)?;
        let (recon, dec) = self.model.decode_raw(&from_complex_features(&received), &csi)?;
        let loss = image_mse(image, &recon);
        Ok(SampleTrace {
            recon,
            loss,
            enc,
            raw,
            scale,
            link_gain,
            dec,
        })
    }

    /// Reconstruction of `image` over `draw`.
    pub fn reconstruct(&self, image: &Tensor, draw: &ChannelDraw, rng: &mut Rng) -> Result<Tensor> {
        Ok(self.forward(image, draw, LinkPath::Equivalent, rng)?.recon)
    }

    /// Accumulates `weight · ∂(per-image MSE)/∂θ` into `grads` and returns the
    /// gradient w.r.t. the encoder input with the reconstruction target held
    /// fixed (same weighting).
    pub fn backward(&self, image: &Tensor, trace: &SampleTrace, weight: f64, grads: &mut [f64]) -> Tensor {
        let n = image.data.len() as f64;
        let g_img = Tensor::from_vec(
            image.c,
            image.h,
            image.w,
            trace
                .recon
                .data
                .iter()
                .zip(&image.data)
                .map(|(r, x)| {
                    // Clamped pixels pass no gradient.
                    if *r <= 0.0 || *r >= crate::model::PIXEL_MAX {
                        0.0
                    } else {
                        weight * 2.0 * (r - x) / n
                    }
                })
                .collect(),
        );
        let g_received = self.model.decode_raw_backward(&trace.dec, &g_img, grads);
        let k = self.model.spec.channel_uses;
        let g_sent = match &trace.link_gain {
            LinkGrad::RowGains(gains) => g_received
                .iter()
                .enumerate()
                .map(|(i, g)| g * gains[i / (2 * k)])
                .collect(),
            LinkGrad::Linear(a) => {
                let gz = to_complex_features(&g_received, a.nrows()).expect("gradient shape");
                from_complex_features(&FeatureMatrix::new(a.adjoint() * gz.data))
            }
            LinkGrad::Identity => g_received,
        };
        let g_raw = normalize_raw_backward(&trace.raw, trace.scale, &g_sent);
        self.model.encode_raw_backward(&trace.enc, &g_raw, grads)
    }
}
