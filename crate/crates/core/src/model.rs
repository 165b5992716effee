//! Serial and parallel DJSCC codecs.
//!
//! Both structures are built from the same branch: an encoder of four
//! residual blocks (two of them stride-2), each followed by a CSI attention
//! module, and a mirrored decoder that upsamples back to the image size.
//!
//! - **Serial**: one branch emits all `N_s` rows of the feature matrix and
//!   sees the SNRs of every sub-channel.
//! - **Parallel**: `N_s` branches with identical layout and separate
//!   parameters; branch `i` emits row `i` and additionally sees a one-hot
//!   index. Decoder branch outputs are concatenated channel-wise and fused by
//!   one convolution.
//!
//! Pixels enter the network scaled to `[0, 1]`; reconstructions leave it in
//! `[0, 255]`.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, FeatureMatrix};
use crate::error::{Error, Result};
use crate::features::{from_complex_features, normalize_raw, to_complex_features};
use crate::nn::{Attention, Conv2d, Layer, LayerCache, ParamStore, ResBlock, Sequential, Tensor};
use crate::nn::tensor::sigmoid;
use crate::rng::rng_from;

pub const PIXEL_MAX: f64 = 255.0;

/// SNRs are divided by this many dB before entering the attention modules.
pub const CSI_DB_UNIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl ImageShape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        ImageShape { c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// `k = ρ·C·H·W`, required to be a positive integer.
pub fn channel_uses_for(image: ImageShape, bandwidth_ratio: f64) -> Result<usize> {
    let k = bandwidth_ratio * image.numel() as f64;
    let rounded = k.round();
    if !(rounded >= 1.0) || (k - rounded).abs() > 1e-9 * k.abs().max(1.0) {
        return Err(Error::Config(format!(
            "bandwidth ratio {bandwidth_ratio} on a {}x{}x{} image gives {k} channel uses, not a positive integer",
            image.c, image.h, image.w
        )));
    }
    Ok(rounded as usize)
}

/// Conditioning vector of one attention-equipped branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiVector {
    pub snrs_db: Vec<f64>,
    pub index_onehot: Option<Vec<f64>>,
}

impl CsiVector {
    pub fn serial(snrs_db: Vec<f64>) -> Self {
        CsiVector {
            snrs_db,
            index_onehot: None,
        }
    }

    /// One vector per sub-network, each carrying all SNRs plus its own index.
    pub fn parallel(snrs_db: &[f64]) -> Vec<CsiVector> {
        (0..snrs_db.len())
            .map(|i| {
                let mut onehot = vec![0.0; snrs_db.len()];
                onehot[i] = 1.0;
                CsiVector {
                    snrs_db: snrs_db.to_vec(),
                    index_onehot: Some(onehot),
                }
            })
            .collect()
    }

    /// CSI list for a structure: one vector (serial) or one per stream (parallel).
    pub fn for_structure(structure: Structure, snrs_db: &[f64]) -> Vec<CsiVector> {
        match structure {
            Structure::Serial => vec![CsiVector::serial(snrs_db.to_vec())],
            Structure::Parallel => CsiVector::parallel(snrs_db),
        }
    }

    pub fn len(&self) -> usize {
        self.snrs_db.len() + self.index_onehot.as_ref().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Network input: SNRs in units of [`CSI_DB_UNIT`] dB, then the one-hot index.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.snrs_db.iter().map(|s| s / CSI_DB_UNIT).collect();
        if let Some(o) = &self.index_onehot {
            v.extend_from_slice(o);
        }
        v
    }

    /// Position of the hot entry, validating that the one-hot is well formed.
    pub fn hot_index(&self) -> Result<Option<usize>> {
        let Some(o) = &self.index_onehot else {
            return Ok(None);
        };
        let ones: Vec<usize> = o.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
        if ones.len() != 1 || o.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config(format!("malformed one-hot index {o:?}")));
        }
        Ok(Some(ones[0]))
    }
}

/// Architecture hyperparameters; everything needed to rebuild a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub structure: Structure,
    pub image: ImageShape,
    /// Rows of the feature matrix.
    pub n_streams: usize,
    /// Channel uses `k` per stream.
    pub channel_uses: usize,
    /// Feature width of every residual block.
    pub width: usize,
    /// SNR entries in the CSI vector (excluding the one-hot index).
    pub n_snrs: usize,
    pub seed: u64,
}

impl ModelSpec {
    /// Precoded codec: CSI holds the `N_s` sub-channel SNRs.
    pub fn precoded(
        structure: Structure,
        image: ImageShape,
        n_streams: usize,
        bandwidth_ratio: f64,
        width: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(ModelSpec {
            structure,
            image,
            n_streams,
            channel_uses: channel_uses_for(image, bandwidth_ratio)?,
            width,
            n_snrs: n_streams,
            seed,
        })
    }

    pub fn branches(&self) -> usize {
        match self.structure {
            Structure::Serial => 1,
            Structure::Parallel => self.n_streams,
        }
    }

    pub fn rows_per_branch(&self) -> usize {
        match self.structure {
            Structure::Serial => self.n_streams,
            Structure::Parallel => 1,
        }
    }

    pub fn csi_len(&self) -> usize {
        match self.structure {
            Structure::Serial => self.n_snrs,
            Structure::Parallel => self.n_snrs + self.n_streams,
        }
    }

    pub fn code_grid(&self) -> (usize, usize) {
        (self.image.h / 4, self.image.w / 4)
    }

    /// Channels of the encoder's output map for one branch.
    pub fn code_channels(&self) -> usize {
        let (h, w) = self.code_grid();
        2 * self.rows_per_branch() * self.channel_uses / (h * w)
    }

    pub fn validate(&self) -> Result<()> {
        let ImageShape { c, h, w } = self.image;
        if c == 0 || h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Config(format!(
                "image size {c}x{h}x{w} must be non-empty with height and width divisible by 4"
            )));
        }
        if self.n_streams == 0 || self.width == 0 || self.channel_uses == 0 || self.n_snrs == 0 {
            return Err(Error::Config("streams, width, channel uses and CSI length must be positive".into()));
        }
        let (gh, gw) = self.code_grid();
        let reals = 2 * self.rows_per_branch() * self.channel_uses;
        if reals % (gh * gw) != 0 {
            return Err(Error::Config(format!(
                "{reals} real outputs per branch do not tile the {gh}x{gw} code grid"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub encoder: Sequential,
    pub decoder: Sequential,
}

#[derive(Debug, Clone)]
pub struct CodecModel {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub branches: Vec<Branch>,
    /// Final image-producing convolution (the fusion stage in the parallel structure).
    pub tail: Conv2d,
}

pub struct EncodeTrace {
    caches: Vec<Vec<LayerCache>>,
}

pub struct DecodeTrace {
    caches: Vec<Vec<LayerCache>>,
    features: Tensor,
    logits: Tensor,
}

impl CodecModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from(spec.seed);
        let mut params = ParamStore::new();
        let (w, csi, cc) = (spec.width, spec.csi_len(), spec.code_channels());
        let mut branches = Vec::with_capacity(spec.branches());
        for b in 0..spec.branches() {
            let mut encoder = Sequential::default();
            let stages = [(spec.image.c, 2), (w, 1), (w, 2), (w, 1)];
            for (i, &(c_in, stride)) in stages.iter().enumerate() {
                let name = format!("enc.{b}.res{i}");
                encoder.push(Layer::Res(ResBlock::new(&mut params, &name, c_in, w, stride, false, &mut rng)));
                let name = format!("enc.{b}.att{i}");
                encoder.push(Layer::Attn(Attention::new(&mut params, &name, w, csi, &mut rng)));
            }
            encoder.push(Layer::Conv(Conv2d::new(&mut params, &format!("enc.{b}.out"), w, cc, 3, 1, true, &mut rng)));

            let mut decoder = Sequential::default();
            decoder.push(Layer::Conv(Conv2d::new(&mut params, &format!("dec.{b}.in"), cc, w, 3, 1, false, &mut rng)));
            for (i, up) in [false, true, false, true].into_iter().enumerate() {
                let name = format!("dec.{b}.res{i}");
                decoder.push(Layer::Res(ResBlock::new(&mut params, &name, w, w, 1, up, &mut rng)));
                let name = format!("dec.{b}.att{i}");
                decoder.push(Layer::Attn(Attention::new(&mut params, &name, w, csi, &mut rng)));
            }
            branches.push(Branch { encoder, decoder });
        }
        let tail = Conv2d::new(&mut params, "tail", spec.branches() * w, spec.image.c, 3, 1, true, &mut rng);
        Ok(CodecModel {
            spec,
            params,
            branches,
            tail,
        })
    }

    pub fn structure(&self) -> Structure {
        self.spec.structure
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn attention_param_count(&self) -> usize {
        self.branches
            .iter()
            .flat_map(|b| b.encoder.attention_modules().chain(b.decoder.attention_modules()))
            .map(Attention::param_count)
            .sum()
    }

    fn check_csi(&self, csi: &[CsiVector]) -> Result<Vec<Vec<f64>>> {
        if csi.len() != self.spec.branches() {
            return Err(Error::Config(format!(
                "{:?} model needs {} CSI vectors, got {}",
                self.spec.structure,
                self.spec.branches(),
                csi.len()
            )));
        }
        let mut seen = vec![false; csi.len()];
        for (i, c) in csi.iter().enumerate() {
            if c.snrs_db.len() != self.spec.n_snrs {
                return Err(Error::Config(format!(
                    "CSI carries {} SNRs, model expects {}",
                    c.snrs_db.len(),
                    self.spec.n_snrs
                )));
            }
            match (self.spec.structure, c.hot_index()?) {
                (Structure::Serial, None) => {}
                (Structure::Serial, Some(_)) => {
                    return Err(Error::Config("serial structure takes no sub-channel index".into()))
                }
                (Structure::Parallel, None) => {
                    return Err(Error::Config(format!("sub-network {i} is missing its one-hot index")))
                }
                (Structure::Parallel, Some(idx)) => {
                    if c.index_onehot.as_ref().map(Vec::len) != Some(self.spec.n_streams) {
                        return Err(Error::Config(format!("one-hot index of sub-network {i} has wrong length")));
                    }
                    if idx != i || seen[idx] {
                        return Err(Error::Config(format!(
                            "sub-network {i} received one-hot index {idx}; indices must be 0..{} in order",
                            self.spec.n_streams
                        )));
                    }
                    seen[idx] = true;
                }
            }
        }
        Ok(csi.iter().map(CsiVector::to_vec).collect())
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let s = self.spec.image;
        if image.shape() != (s.c, s.h, s.w) {
            return Err(Error::Input(format!(
                "image is {:?}, model expects {}x{}x{}",
                image.shape(),
                s.c,
                s.h,
                s.w
            )));
        }
        Ok(())
    }

    /// Encoder output before power normalization: `2·N_s·k` reals in the
    /// interleaved layout of [`to_complex_features`]. Branch `b` fills rows
    /// `b·rows_per_branch ..`.
    pub fn encode_raw(&self, image: &Tensor, csi: &[CsiVector]) -> Result<(Vec<f64>, EncodeTrace)> {
        self.check_image(image)?;
        let csi = self.check_csi(csi)?;
        let x = Tensor::from_vec(
            image.c,
            image.h,
            image.w,
            image.data.iter().map(|v| v / PIXEL_MAX).collect(),
        );
        let mut raw = Vec::with_capacity(2 * self.spec.n_streams * self.spec.channel_uses);
        let mut caches = Vec::with_capacity(self.branches.len());
        for (branch, c) in self.branches.iter().zip(&csi) {
            let (y, cache) = branch.encoder.forward(&self.params.values, &x, c)?;
            raw.extend_from_slice(&y.data);
            caches.push(cache);
        }
        Ok((raw, EncodeTrace { caches }))
    }

    /// Gradient of the encoder w.r.t. the pixel-domain input image.
    pub fn encode_raw_backward(&self, trace: &EncodeTrace, grad_raw: &[f64], g: &mut [f64]) -> Tensor {
        let (gh, gw) = self.spec.code_grid();
        let cc = self.spec.code_channels();
        let per = cc * gh * gw;
        let mut gx: Option<Tensor> = None;
        for (b, (branch, cache)) in self.branches.iter().zip(&trace.caches).enumerate() {
            let gy = Tensor::from_vec(cc, gh, gw, grad_raw[b * per..(b + 1) * per].to_vec());
            let gb = branch.encoder.backward(&self.params.values, cache, &gy, g);
            match gx.as_mut() {
                Some(acc) => acc.add_assign(&gb),
                None => gx = Some(gb),
            }
        }
        let mut gx = gx.expect("model has at least one branch");
        gx.data.iter_mut().for_each(|v| *v /= PIXEL_MAX);
        gx
    }

    /// Encodes and power-normalizes to an `N_s × k` feature matrix.
    pub fn encode(&self, image: &Tensor, csi: &[CsiVector], cfg: &ChannelConfig) -> Result<FeatureMatrix> {
        let (raw, _) = self.encode_raw(image, csi)?;
        let (norm, _) = normalize_raw(&raw, self.spec.channel_uses, cfg)?;
        to_complex_features(&norm, self.spec.n_streams)
    }

    pub fn decode_raw(&self, received: &[f64], csi: &[CsiVector]) -> Result<(Tensor, DecodeTrace)> {
        let expected = 2 * self.spec.n_streams * self.spec.channel_uses;
        if received.len() != expected {
            return Err(Error::Input(format!(
                "decoder expects {expected} received reals, got {}",
                received.len()
            )));
        }
        let csi = self.check_csi(csi)?;
        let (gh, gw) = self.spec.code_grid();
        let cc = self.spec.code_channels();
        let per = cc * gh * gw;
        let mut feats = Vec::with_capacity(self.branches.len());
        let mut caches = Vec::with_capacity(self.branches.len());
        for (b, (branch, c)) in self.branches.iter().zip(&csi).enumerate() {
            let x = Tensor::from_vec(cc, gh, gw, received[b * per..(b + 1) * per].to_vec());
            let (y, cache) = branch.decoder.forward(&self.params.values, &x, c)?;
            feats.push(y);
            caches.push(cache);
        }
        let features = Tensor::concat(&feats);
        let logits = self.tail.forward(&self.params.values, &features);
        let mut out = logits.clone();
        for v in &mut out.data {
            *v = (PIXEL_MAX * sigmoid(*v)).clamp(0.0, PIXEL_MAX);
        }
        Ok((
            out,
            DecodeTrace {
                caches,
                features,
                logits,
            },
        ))
    }

    /// Gradient of the decoder w.r.t. the received reals, given the gradient
    /// w.r.t. the pixel-domain reconstruction.
    pub fn decode_raw_backward(&self, trace: &DecodeTrace, grad_image: &Tensor, g: &mut [f64]) -> Vec<f64> {
        let p = &self.params.values;
        let mut g_logits = grad_image.clone();
        for (gv, &l) in g_logits.data.iter_mut().zip(&trace.logits.data) {
            let s = sigmoid(l);
            *gv *= PIXEL_MAX * s * (1.0 - s);
        }
        let g_feat = self.tail.backward(p, &trace.features, &g_logits, g);
        let parts = g_feat.split(&vec![self.spec.width; self.branches.len()]);
        let mut out = Vec::with_capacity(2 * self.spec.n_streams * self.spec.channel_uses);
        for ((branch, cache), gpart) in self.branches.iter().zip(&trace.caches).zip(&parts) {
            out.extend(branch.decoder.backward(p, cache, gpart, g).data);
        }
        out
    }

    pub fn decode(&self, received: &FeatureMatrix, csi: &[CsiVector]) -> Result<Tensor> {
        if received.n_streams() != self.spec.n_streams || received.channel_uses() != self.spec.channel_uses {
            return Err(Error::Input(format!(
                "received matrix is {}x{}, model expects {}x{}",
                received.n_streams(),
                received.channel_uses(),
                self.spec.n_streams,
                self.spec.channel_uses
            )));
        }
        Ok(self.decode_raw(&from_complex_features(received), csi)?.0)
    }

    /// Attention vectors of every module in encoder order, then decoder order,
    /// for one image and CSI.
    pub fn encoder_gates(&self, image: &Tensor, csi: &[CsiVector]) -> Result<Vec<f64>> {
        let (_, trace) = self.encode_raw(image, csi)?;
        Ok(trace
            .caches
            .iter()
            .flatten()
            .filter_map(|c| match c {
                LayerCache::Attn(a) => Some(a.gates().to_vec()),
                _ => None,
            })
            .flatten()
            .collect())
    }
}

fn require(model: &CodecModel, structure: Structure) -> Result<()> {
    if model.structure() != structure {
        return Err(Error::Config(format!(
            "expected a {structure:?} model, got {:?}",
            model.structure()
        )));
    }
    Ok(())
}

pub fn serial_encode(image: &Tensor, model: &CodecModel, csi: &CsiVector, cfg: &ChannelConfig) -> Result<FeatureMatrix> {
    require(model, Structure::Serial)?;
    model.encode(image, std::slice::from_ref(csi), cfg)
}

pub fn serial_decode(received: &FeatureMatrix, model: &CodecModel, csi: &CsiVector) -> Result<Tensor> {
    require(model, Structure::Serial)?;
    model.decode(received, std::slice::from_ref(csi))
}

pub fn parallel_encode(
    image: &Tensor,
    model: &CodecModel,
    csi_list: &[CsiVector],
    cfg: &ChannelConfig,
) -> Result<FeatureMatrix> {
    require(model, Structure::Parallel)?;
    model.encode(image, csi_list, cfg)
}

pub fn parallel_decode(received: &FeatureMatrix, model: &CodecModel, csi_list: &[CsiVector]) -> Result<Tensor> {
    require(model, Structure::Parallel)?;
    model.decode(received, csi_list)
}
