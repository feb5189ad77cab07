//! The three training phases, the from-scratch grid baseline and symbol
//! sampling.

use log::{debug, info};
use num_complex::Complex64;

use super::config::{ExperimentConfig, Mode};
use super::dataset::Dataset;
use crate::autonet::network::normalize_rows;
use crate::autonet::{
    adam_step, forward_batch, AdamState, Checkpoint, CheckpointMode, CodecParams, Link, Matrix,
};
use crate::clustering::{self, Constellation, KMeansFit, SymbolSample};
use crate::error::{Error, Result};
use crate::modem::{ChannelConfig, Snr};
use crate::quantizer::{grid_for_order, UniformQuantizer};
use crate::rng::{streams, Rng};

const PHASE_ANALOG: (u64, &str) = (1, "analog");
const PHASE_FINETUNE: (u64, &str) = (2, "finetune");
const PHASE_STE: (u64, &str) = (3, "ste");

/// Loss history of one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    /// Mean loss over the first epoch's batches before any update.
    pub initial_loss: f64,
    /// Mean batch loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses
            .last()
            .copied()
            .unwrap_or(self.initial_loss)
    }
}

#[derive(Clone, Debug)]
pub struct PhaseOutput {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

#[derive(Clone, Debug)]
pub struct ClusterOutput {
    pub constellation: Constellation,
    pub sample: SymbolSample,
    pub fit: KMeansFit,
}

fn check_data(cfg: &ExperimentConfig, data: &Dataset) -> Result<()> {
    if data.image_len() != cfg.image_len() {
        return Err(Error::config(format!(
            "dataset image length {} differs from configured {}",
            data.image_len(),
            cfg.image_len()
        )));
    }
    if data.train.rows() == 0 {
        return Err(Error::config("training split is empty"));
    }
    Ok(())
}

fn check_architecture(ck: &Checkpoint, cfg: &ExperimentConfig) -> Result<()> {
    let have = ck.architecture();
    let want = cfg.architecture();
    if have != want {
        return Err(Error::config(format!(
            "checkpoint architecture {have:?} does not match configuration {want:?}"
        )));
    }
    Ok(())
}

fn fill_noise(noise: &mut Matrix, snr: Snr, rng: &mut Rng) -> Result<()> {
    let ch = ChannelConfig::new(snr)?;
    ch.add_noise_interleaved(noise.data_mut(), rng);
    Ok(())
}

fn train_loop(
    params: &mut CodecParams,
    link: &Link,
    data: &Matrix,
    cfg: &ExperimentConfig,
    epochs: usize,
    base_lr: f64,
    (phase, label): (u64, &str),
) -> Result<TrainLog> {
    let rows = data.rows();
    let two_k = 2 * cfg.symbols();
    let batch = cfg.batch_size.min(rows);
    let epoch_rngs = |epoch: u64| {
        let tag = (phase << 32) | epoch;
        (
            Rng::new(cfg.seed, streams::SHUFFLE).substream(tag),
            Rng::new(cfg.seed, streams::SNR).substream(tag),
            Rng::new(cfg.seed, streams::NOISE).substream(tag),
        )
    };
    let run_epoch = |params: &mut CodecParams,
                     state: Option<&mut AdamState>,
                     epoch: u64,
                     lr: f64|
     -> Result<f64> {
        let (mut shuffle, mut snr_rng, mut noise_rng) = epoch_rngs(epoch);
        let mut order: Vec<usize> = (0..rows).collect();
        shuffle.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0usize;
        let mut state = state;
        for idx in order.chunks(batch) {
            let x = data.select_rows(idx);
            let snr = Snr::Db(snr_rng.uniform_range(cfg.snr_train_low, cfg.snr_train_high));
            let mut noise = Matrix::zeros(idx.len(), two_k);
            fill_noise(&mut noise, snr, &mut noise_rng)?;
            let pass = forward_batch(params, &x, snr, link, &noise)?;
            total += pass.loss_value();
            batches += 1;
            if let Some(st) = state.as_deref_mut() {
                let grads = pass.gradients(params);
                adam_step(params, &grads, lr, cfg.distance_lr_scale, st)?;
                if !params.is_finite() {
                    return Err(Error::Numerical("parameters became non-finite".into()));
                }
            }
        }
        Ok(total / batches as f64)
    };
    // Same draws as epoch 0, without updates.
    let initial_loss = run_epoch(params, None, 0, 0.0)?;
    let mut state = AdamState::new();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = cfg.scheduled(base_lr, epoch, epochs);
        let loss = run_epoch(params, Some(&mut state), epoch as u64, lr)?;
        debug!("{label} epoch {epoch}: loss {loss:.6} lr {lr:e}");
        epoch_losses.push(loss);
    }
    if let Some(last) = epoch_losses.last() {
        info!(
            "{label}: {epochs} epochs, loss {initial_loss:.6} -> {last:.6}{}",
            params
                .distance
                .map(|d| format!(", d = {d:.5}"))
                .unwrap_or_default()
        );
    }
    Ok(TrainLog {
        initial_loss,
        epoch_losses,
    })
}

/// Freshly initialized codec for the configured architecture.
pub fn initial_params(cfg: &ExperimentConfig) -> CodecParams {
    CodecParams::init(&cfg.architecture(), &mut Rng::new(cfg.seed, streams::INIT))
}

/// Phase 1: train encoder and decoder with no modem; AWGN is applied to
/// the normalized encoder output.
pub fn run_phase1_analog(cfg: &ExperimentConfig, data: &Dataset) -> Result<PhaseOutput> {
    cfg.validate()?;
    check_data(cfg, data)?;
    let mut params = initial_params(cfg);
    let log = train_loop(
        &mut params,
        &Link::Analog,
        &data.train,
        cfg,
        cfg.epochs_analog,
        cfg.lr,
        PHASE_ANALOG,
    )?;
    Ok(PhaseOutput {
        checkpoint: Checkpoint::new(CheckpointMode::Analog, &params)?,
        log,
    })
}

/// Encodes `images` at per-image SNRs drawn from the training range and
/// pools their power-normalized symbols.
pub fn sample_symbols(
    ck: &Checkpoint,
    cfg: &ExperimentConfig,
    data: &Dataset,
    images: usize,
) -> Result<SymbolSample> {
    if images == 0 || images > data.train.rows() {
        return Err(Error::arg(format!(
            "requested {images} images but the training split has {}",
            data.train.rows()
        )));
    }
    let root = Rng::new(cfg.seed, streams::CLUSTER);
    let mut pick = root.substream(0);
    let mut idx: Vec<usize> = (0..data.train.rows()).collect();
    for i in 0..images {
        let j = i + pick.below(idx.len() - i);
        idx.swap(i, j);
    }
    idx.truncate(images);
    let mut snr_rng = root.substream(1);
    let snrs: Vec<Snr> = (0..images)
        .map(|_| Snr::Db(snr_rng.uniform_range(cfg.snr_train_low, cfg.snr_train_high)))
        .collect();
    let y = normalize_rows(
        &ck.params()
            .encode_rows(&data.train.select_rows(&idx), &snrs),
    )?;
    let points = y
        .data()
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    SymbolSample::new(points, images)
}

/// Phase 2: fit an irregular constellation to sampled encoder outputs of
/// the analog model.
pub fn run_phase2_cluster(
    ck: &Checkpoint,
    cfg: &ExperimentConfig,
    data: &Dataset,
) -> Result<ClusterOutput> {
    cfg.validate()?;
    if cfg.mode != Mode::IdmcI {
        return Err(Error::config(
            "clustering applies to mode = \"idmc_i\" only",
        ));
    }
    check_architecture(ck, cfg)?;
    let sample = sample_symbols(ck, cfg, data, cfg.cluster_sample_images)?;
    let mut rng = Rng::new(cfg.seed, streams::CLUSTER).substream(2);
    let fit = clustering::fit(&sample, cfg.order, &mut rng, &cfg.kmeans_options())?;
    info!(
        "clustered {} symbols into {} points in {} rounds (converged: {})",
        sample.len(),
        cfg.order,
        fit.iterations,
        fit.converged
    );
    Ok(ClusterOutput {
        constellation: fit.constellation.clone(),
        sample,
        fit,
    })
}

/// Grid step from one calibration batch of normalized encoder outputs.
pub fn calibrate_distance(ck: &Checkpoint, cfg: &ExperimentConfig, data: &Dataset) -> Result<f64> {
    let bounds = grid_for_order(cfg.order)?;
    let mut rng = Rng::new(cfg.seed, streams::CALIBRATION);
    let mut idx: Vec<usize> = (0..data.train.rows()).collect();
    rng.shuffle(&mut idx);
    idx.truncate(cfg.batch_size.min(idx.len()));
    let snr = Snr::Db(rng.uniform_range(cfg.snr_train_low, cfg.snr_train_high));
    let y = normalize_rows(&ck.params().encode_batch(&data.train.select_rows(&idx), snr))?;
    UniformQuantizer::initial_distance(bounds, y.data())
}

/// Phase 3: fine-tune the phase-1 model through the discrete chain.
pub fn run_phase3_finetune(
    ck: &Checkpoint,
    cfg: &ExperimentConfig,
    data: &Dataset,
    constellation: Option<&Constellation>,
) -> Result<PhaseOutput> {
    cfg.validate()?;
    check_data(cfg, data)?;
    if ck.mode() != CheckpointMode::Analog {
        return Err(Error::config(format!(
            "fine-tuning starts from an analog checkpoint, got {}",
            ck.mode().name()
        )));
    }
    check_architecture(ck, cfg)?;
    let mut params = ck.params().clone();
    let (link, mode) = match cfg.mode {
        Mode::IdmcR => {
            params.distance = Some(calibrate_distance(ck, cfg, data)?);
            let link = Link::Regular {
                bounds: grid_for_order(cfg.order)?,
                learn_distance: true,
            };
            (link, CheckpointMode::Regular)
        }
        Mode::IdmcI => {
            let c = constellation
                .ok_or_else(|| Error::config("idmc_i fine-tuning needs a constellation file"))?;
            if c.order() != cfg.order {
                return Err(Error::config(format!(
                    "constellation has {} points, config order is {}",
                    c.order(),
                    cfg.order
                )));
            }
            (Link::Irregular(c.clone()), CheckpointMode::Irregular)
        }
        other => {
            return Err(Error::config(format!(
                "fine-tuning needs mode idmc_r or idmc_i, not {}",
                other.name()
            )))
        }
    };
    let log = train_loop(
        &mut params,
        &link,
        &data.train,
        cfg,
        cfg.epochs_finetune,
        cfg.finetune_lr(),
        PHASE_FINETUNE,
    )?;
    Ok(PhaseOutput {
        checkpoint: Checkpoint::new(mode, &params)?,
        log,
    })
}

/// Baseline: the digital system trained from random initialization through
/// a fixed unit-step grid, without analog pretraining.
pub fn run_ste_baseline(cfg: &ExperimentConfig, data: &Dataset) -> Result<PhaseOutput> {
    cfg.validate()?;
    check_data(cfg, data)?;
    let mut params = initial_params(cfg);
    params.distance = Some(1.0);
    let link = Link::Regular {
        bounds: grid_for_order(cfg.order)?,
        learn_distance: false,
    };
    let log = train_loop(
        &mut params,
        &link,
        &data.train,
        cfg,
        cfg.ste_epochs(),
        cfg.lr,
        PHASE_STE,
    )?;
    Ok(PhaseOutput {
        checkpoint: Checkpoint::new(CheckpointMode::Regular, &params)?,
        log,
    })
}
