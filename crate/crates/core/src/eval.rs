//! PSNR sweeps over test SNR, CSV emission and plots.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::ImageSet;
use crate::entropy::EntropyReport;
use crate::error::{Error, Result};
use crate::model::PIXEL_MAX;
use crate::nn::Tensor;
use crate::plot::{LinePlot, Series};
use crate::rng::child_rng;
use crate::scheme::{image_mse, System};

/// Returned for a perfect reconstruction instead of `+∞`.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const EVAL_CSV_HEADER: &str = "scheme,snr_db,psnr_db,psnr_std,n_draws";
pub const ENTROPY_CSV_HEADER: &str = "ratio,subchannel,entropy_nats,capacity_nats,n_samples,model_trained";

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (PIXEL_MAX * PIXEL_MAX / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// `10·log10(255² / MSE)` in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Input(format!("PSNR of {:?} against {:?}", x.shape(), x_hat.shape())));
    }
    Ok(psnr_from_mse(image_mse(x, x_hat)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub scheme: String,
    pub snr_db: f64,
    pub psnr_db: f64,
    pub psnr_std: f64,
    /// Channel realizations averaged over (images × draws per image).
    #[serde(rename = "n_draws")]
    pub n_channel_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub snrs_db: Vec<f64>,
    pub draws_per_image: usize,
    pub seed: u64,
    /// Skip the additive noise while still feeding the nominal CSI.
    pub noiseless: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            snrs_db: (0..=11).map(|i| 2.0 * i as f64).collect(),
            draws_per_image: 10,
            seed: 2024,
            noiseless: false,
        }
    }
}

/// Average PSNR per test SNR. Image `i`, draw `d` always uses the stream
/// `[seed, i, d]`, so every scheme and every SNR point sees the same channel
/// matrices and the same unit-variance noise pattern.
pub fn snr_sweep_eval(system: &System, dataset: &ImageSet, cfg: &EvalConfig) -> Result<Vec<EvalResult>> {
    if cfg.snrs_db.is_empty() {
        return Err(Error::Input("SNR sweep is empty".into()));
    }
    if dataset.is_empty() || cfg.draws_per_image == 0 {
        return Err(Error::Input("evaluation needs at least one image and one draw".into()));
    }
    let mut results = Vec::with_capacity(cfg.snrs_db.len());
    for &snr in &cfg.snrs_db {
        let mut values = Vec::with_capacity(dataset.len() * cfg.draws_per_image);
        for i in 0..dataset.len() {
            let image = dataset.image(i);
            for d in 0..cfg.draws_per_image {
                let mut rng = child_rng(cfg.seed, &[i as u64, d as u64]);
                let mut draw = system.sample_draw(snr, &mut rng)?;
                if cfg.noiseless {
                    draw = draw.noiseless();
                }
                let recon = system.reconstruct(&image, &draw, &mut rng)?;
                values.push(psnr(&image, &recon)?);
            }
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        results.push(EvalResult {
            scheme: system.scheme.name().to_string(),
            snr_db: snr,
            psnr_db: mean,
            psnr_std: var.sqrt(),
            n_channel_draws: values.len(),
        });
    }
    Ok(results)
}

/// Largest PSNR decrease between neighbouring points of one scheme's curve,
/// ordered by SNR (0 when the curve never goes down).
pub fn max_adjacent_drop(results: &[EvalResult]) -> f64 {
    let mut pts: Vec<(f64, f64)> = results.iter().map(|r| (r.snr_db, r.psnr_db)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

pub fn write_eval_csv(results: &[EvalResult], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in results {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != EVAL_CSV_HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            msg: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EntropyRow {
    ratio: f64,
    subchannel: usize,
    entropy_nats: f64,
    capacity_nats: f64,
    n_samples: usize,
    model_trained: bool,
}

pub fn write_entropy_csv(reports: &[EntropyReport], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for rep in reports {
        for (s, (&h, &c)) in rep.per_subchannel_entropy.iter().zip(&rep.per_subchannel_capacity).enumerate() {
            w.serialize(EntropyRow {
                ratio: rep.ratio,
                subchannel: s,
                entropy_nats: h,
                capacity_nats: c,
                n_samples: rep.sample_count,
                model_trained: rep.model_trained,
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_entropy_csv(path: &Path) -> Result<Vec<EntropyReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out: Vec<EntropyReport> = Vec::new();
    for row in r.deserialize::<EntropyRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        match out.last_mut() {
            Some(rep) if rep.ratio == row.ratio && row.subchannel == rep.per_subchannel_entropy.len() => {
                rep.per_subchannel_entropy.push(row.entropy_nats);
                rep.per_subchannel_capacity.push(row.capacity_nats);
            }
            _ => out.push(EntropyReport {
                ratio: row.ratio,
                per_subchannel_entropy: vec![row.entropy_nats],
                per_subchannel_capacity: vec![row.capacity_nats],
                sample_count: row.n_samples,
                model_trained: row.model_trained,
            }),
        }
    }
    Ok(out)
}

pub fn psnr_plot(results: &[EvalResult]) -> LinePlot {
    let mut names: Vec<&str> = Vec::new();
    for r in results {
        if !names.contains(&r.scheme.as_str()) {
            names.push(&r.scheme);
        }
    }
    LinePlot::new(
        names
            .into_iter()
            .map(|n| {
                let mut points: Vec<(f64, f64)> =
                    results.iter().filter(|r| r.scheme == n).map(|r| (r.snr_db, r.psnr_db)).collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series {
                    label: n.to_string(),
                    points,
                }
            })
            .collect(),
    )
    .labels("PSNR VS SNR", "SNR (DB)", "PSNR (DB)")
}

pub fn entropy_plot(reports: &[EntropyReport]) -> LinePlot {
    let streams = reports.iter().map(|r| r.per_subchannel_entropy.len()).max().unwrap_or(0);
    LinePlot::new(
        (0..streams)
            .map(|s| Series {
                label: format!("subchannel {s}"),
                points: reports
                    .iter()
                    .filter_map(|r| r.per_subchannel_entropy.get(s).map(|h| (r.ratio, *h)))
                    .collect(),
            })
            .collect(),
    )
    .labels("SUB-CHANNEL ENTROPY", "SINGULAR VALUE RATIO", "ENTROPY (NATS)")
}

#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub eval_csv: Option<PathBuf>,
    pub entropy_csv: Option<PathBuf>,
    pub plots: Vec<PathBuf>,
}

/// Writes `results/eval.csv`, `results/entropy.csv` and the matching PNG
/// plots under `out_dir` for whichever inputs are non-empty.
pub fn emit_report(results: &[EvalResult], entropy: &[EntropyReport], out_dir: &Path) -> Result<ReportFiles> {
    if results.is_empty() && entropy.is_empty() {
        return Err(Error::Input("nothing to report".into()));
    }
    let mut files = ReportFiles::default();
    if !results.is_empty() {
        let csv = out_dir.join("results").join("eval.csv");
        write_eval_csv(results, &csv)?;
        files.eval_csv = Some(csv);
        let png = out_dir.join("plots").join("psnr_vs_snr.png");
        psnr_plot(results).save_png(&png)?;
        files.plots.push(png);
    }
    if !entropy.is_empty() {
        let csv = out_dir.join("results").join("entropy.csv");
        write_entropy_csv(entropy, &csv)?;
        files.entropy_csv = Some(csv);
        let png = out_dir.join("plots").join("entropy_vs_ratio.png");
        entropy_plot(entropy).save_png(&png)?;
        files.plots.push(png);
    }
    Ok(files)
}
