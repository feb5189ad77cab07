//! SNR sweeps over the test split.

use num_complex::Complex64;

use super::config::{ExperimentConfig, Mode};
use super::dataset::Dataset;
use crate::autonet::network::normalize_rows;
use crate::autonet::{Checkpoint, CheckpointMode, CodecParams};
use crate::clustering::Constellation;
use crate::error::{Error, Result};
use crate::metrics::{constellation_usage, modulation_rms, EvalReport, SnrPoint, SweepLabels};
use crate::modem::{ChannelConfig, Modem, Snr};
use crate::par;
use crate::quantizer::{grid_for_order, UniformQuantizer};
use crate::rng::{streams, Rng};

/// Checkpoint mode a config mode produces.
pub fn checkpoint_mode_for(mode: Mode) -> CheckpointMode {
    match mode {
        Mode::Analog => CheckpointMode::Analog,
        Mode::IdmcR | Mode::SteBaseline => CheckpointMode::Regular,
        Mode::IdmcI => CheckpointMode::Irregular,
    }
}

/// Modem for a checkpoint; irregular checkpoints need their constellation.
pub fn modem_for(
    ck: &Checkpoint,
    order: usize,
    constellation: Option<&Constellation>,
) -> Result<Modem> {
    match ck.mode() {
        CheckpointMode::Analog => Ok(Modem::Analog),
        CheckpointMode::Regular => {
            let d = ck
                .params()
                .distance
                .ok_or_else(|| Error::config("regular checkpoint without grid step"))?;
            Ok(Modem::Regular(UniformQuantizer::with_bounds(
                d,
                grid_for_order(order)?,
            )?))
        }
        CheckpointMode::Irregular => {
            let c = constellation
                .ok_or_else(|| Error::config("idmc_i evaluation needs a constellation file"))?;
            if c.order() != order {
                return Err(Error::config(format!(
                    "constellation has {} points, config order is {}",
                    c.order(),
                    order
                )));
            }
            Ok(Modem::Irregular(c.clone()))
        }
    }
}

/// Labels for the sweep CSV of `cfg`.
pub fn labels(cfg: &ExperimentConfig) -> SweepLabels {
    SweepLabels {
        mode: cfg.mode.name().to_string(),
        order: if cfg.mode == Mode::Analog {
            0
        } else {
            cfg.order
        },
        cbr: cfg.cbr,
        seed: cfg.seed,
    }
}

/// Runs `params` through `modem` and the channel at every grid SNR.
///
/// Each grid point and repeat draws noise from its own substream, so two
/// models evaluated with the same seed see the same noise.
pub fn evaluate_with_modem(
    params: &CodecParams,
    modem: &Modem,
    cfg: &ExperimentConfig,
    data: &Dataset,
) -> Result<EvalReport> {
    if cfg.snr_eval.is_empty() {
        return Err(Error::arg("evaluation SNR grid is empty"));
    }
    if data.test.rows() == 0 {
        return Err(Error::arg("test split is empty"));
    }
    let arch = params.architecture()?;
    if arch.image_len != data.image_len() {
        return Err(Error::config(format!(
            "model expects {} pixels per image, dataset has {}",
            arch.image_len,
            data.image_len()
        )));
    }
    let max = data.max_value();
    let repeats = cfg.eval_repeats.max(1);
    let root = Rng::new(cfg.seed, streams::EVAL);
    let grid: Vec<(usize, Snr)> = cfg.snr_eval.iter().copied().enumerate().collect();
    let results = par::map_slice(&grid, |&(i, snr)| -> Result<(SnrPoint, Vec<Complex64>)> {
        let channel = ChannelConfig::new(snr)?;
        let y = normalize_rows(&params.encode_batch(&data.test, snr))?;
        let symbols: Vec<Complex64> = y
            .data()
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        let runs = if snr == Snr::Noiseless { 1 } else { repeats };
        let mut total = 0.0;
        for r in 0..runs {
            let mut z = y.clone();
            modem.map_interleaved(z.data_mut());
            let mut rng = root.substream(((i as u64) << 16) | r as u64);
            channel.add_noise_interleaved(z.data_mut(), &mut rng);
            modem.map_interleaved(z.data_mut());
            let x_hat = params.decode_batch(&z, snr);
            let sq: f64 = data
                .test
                .data()
                .iter()
                .zip(x_hat.data())
                .map(|(a, b)| (a - b.clamp(0.0, 1.0)).powi(2))
                .sum();
            total += sq / data.test.data().len() as f64;
        }
        let mse = total / runs as f64 * max * max;
        let point = SnrPoint {
            snr,
            psnr_db: crate::metrics::psnr_from_mse(mse, max),
            mse,
        };
        Ok((point, symbols))
    });
    let mut per_snr = Vec::with_capacity(grid.len());
    let mut pooled = Vec::new();
    for r in results {
        let (p, s) = r?;
        per_snr.push(p);
        pooled.extend(s);
    }
    let rms = modulation_rms(&pooled, modem);
    let usage = constellation_usage(&pooled, modem);
    EvalReport::new(per_snr, max, rms, usage)
}

/// Evaluates a checkpoint produced under `cfg`.
pub fn evaluate_sweep(
    ck: &Checkpoint,
    cfg: &ExperimentConfig,
    data: &Dataset,
    constellation: Option<&Constellation>,
) -> Result<EvalReport> {
    let want = checkpoint_mode_for(cfg.mode);
    if ck.mode() != want {
        return Err(Error::config(format!(
            "checkpoint is {}, config mode {} expects {}",
            ck.mode().name(),
            cfg.mode.name(),
            want.name()
        )));
    }
    let modem = modem_for(ck, cfg.order, constellation)?;
    evaluate_with_modem(ck.params(), &modem, cfg, data)
}
