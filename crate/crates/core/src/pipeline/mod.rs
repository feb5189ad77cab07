//! Experiment configuration, data, the training phases and evaluation.

pub mod config;
pub mod dataset;
pub mod phases;
pub mod sweep;

use std::fmt::Write as _;
use std::path::Path;

pub use config::{DatasetSource, ExperimentConfig, KMeansInit, Mode};
pub use dataset::Dataset;
pub use phases::{
    calibrate_distance, initial_params, run_phase1_analog, run_phase2_cluster, run_phase3_finetune,
    run_ste_baseline, sample_symbols, ClusterOutput, PhaseOutput, TrainLog,
};
pub use sweep::{checkpoint_mode_for, evaluate_sweep, evaluate_with_modem, labels, modem_for};

use crate::autonet::Checkpoint;
use crate::clustering::Constellation;
use crate::error::Result;
use crate::io_util::write_atomic;
use crate::metrics::{csv_float, sweep_csv, EvalReport};

pub const LOSS_HEADER: &str = "phase,epoch,loss";

/// Everything a full run produces.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    /// Analog checkpoint from phase 1; absent for the from-scratch baseline.
    pub analog: Option<Checkpoint>,
    pub constellation: Option<Constellation>,
    pub checkpoint: Checkpoint,
    pub logs: Vec<(&'static str, TrainLog)>,
    pub report: EvalReport,
}

impl ExperimentOutput {
    pub fn losses_csv(&self) -> String {
        let mut out = format!("{LOSS_HEADER}\n");
        for (phase, log) in &self.logs {
            writeln!(out, "{phase},init,{}", csv_float(log.initial_loss)).unwrap();
            for (e, l) in log.epoch_losses.iter().enumerate() {
                writeln!(out, "{phase},{e},{}", csv_float(*l)).unwrap();
            }
        }
        out
    }
}

/// Runs the phases `cfg.mode` calls for, then the sweep.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut logs = Vec::new();
    let (analog, constellation, checkpoint) = match cfg.mode {
        Mode::SteBaseline => {
            let out = run_ste_baseline(cfg, data)?;
            logs.push(("ste", out.log));
            (None, None, out.checkpoint)
        }
        mode => {
            let p1 = run_phase1_analog(cfg, data)?;
            logs.push(("analog", p1.log));
            let analog = p1.checkpoint;
            match mode {
                Mode::Analog => (Some(analog.clone()), None, analog),
                Mode::IdmcR => {
                    let p3 = run_phase3_finetune(&analog, cfg, data, None)?;
                    logs.push(("finetune", p3.log));
                    (Some(analog), None, p3.checkpoint)
                }
                _ => {
                    let c = run_phase2_cluster(&analog, cfg, data)?.constellation;
                    let p3 = run_phase3_finetune(&analog, cfg, data, Some(&c))?;
                    logs.push(("finetune", p3.log));
                    (Some(analog), Some(c), p3.checkpoint)
                }
            }
        }
    };
    let report = evaluate_sweep(&checkpoint, cfg, data, constellation.as_ref())?;
    Ok(ExperimentOutput {
        analog,
        constellation,
        checkpoint,
        logs,
        report,
    })
}

/// Writes `phase1.ckpt`, `constellation.txt`, `final.ckpt`, `sweep.csv` and
/// `losses.csv` into `dir` (created if needed).
pub fn write_outputs(out: &ExperimentOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(a) = &out.analog {
        a.save(&dir.join("phase1.ckpt"))?;
    }
    if let Some(c) = &out.constellation {
        c.save(&dir.join("constellation.txt"))?;
    }
    out.checkpoint.save(&dir.join("final.ckpt"))?;
    write_atomic(
        &dir.join("sweep.csv"),
        sweep_csv(&out.report, &labels(cfg)).as_bytes(),
    )?;
    write_atomic(&dir.join("losses.csv"), out.losses_csv().as_bytes())?;
    Ok(())
}
