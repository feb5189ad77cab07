use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use idmc::autonet::Checkpoint;
use idmc::clustering::Constellation;
use idmc::io_util::write_atomic;
use idmc::metrics::{csv_float, export_symbol_distribution, sweep_csv};
use idmc::modem::Snr;
use idmc::pipeline::{self, Dataset, ExperimentConfig};
use idmc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "idmc",
    version,
    about = "Distribution-matched digital image transmission"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Modulation order M.
    #[arg(long)]
    order: Option<usize>,
    /// SNR in dB or `noiseless`. For `evaluate` this replaces the grid
    /// (repeat the flag for several points); otherwise it pins the
    /// training SNR range to one value.
    #[arg(long)]
    snr: Vec<String>,
    /// Output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Phase 1: train the analog autoencoder.
    TrainAnalog(Common),
    /// Phase 2: fit an irregular constellation to the analog encoder outputs.
    FitConstellation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Phase 3: fine-tune an analog checkpoint through the modem.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        constellation: Option<PathBuf>,
    },
    /// Train the grid system from scratch with a fixed unit step.
    TrainSte(Common),
    /// Sweep the SNR grid and write the results CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        constellation: Option<PathBuf>,
    },
    /// Histogram of the analog encoder outputs. Writes `<out>` plus
    /// `<out stem>_i.csv` and `<out stem>_q.csv` marginals.
    ExportDistribution {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 41)]
        bins: usize,
    },
}

fn load_config(c: &Common, sweep: bool) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(order) = c.order {
        cfg.order = order;
    }
    if !c.snr.is_empty() {
        let snrs = c
            .snr
            .iter()
            .map(|s| Snr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        if sweep {
            cfg.snr_eval = snrs;
        } else {
            let [Snr::Db(db)] = snrs[..] else {
                return Err(Error::arg("training takes a single finite --snr"));
            };
            cfg.snr_train_low = db;
            cfg.snr_train_high = db;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_losses(out: &Path, phase: &str, log: &pipeline::TrainLog) -> Result<()> {
    let mut text = format!("{}\n", pipeline::LOSS_HEADER);
    text.push_str(&format!("{phase},init,{}\n", csv_float(log.initial_loss)));
    for (e, l) in log.epoch_losses.iter().enumerate() {
        text.push_str(&format!("{phase},{e},{}\n", csv_float(*l)));
    }
    write_atomic(&out.with_extension("losses.csv"), text.as_bytes())
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("distribution");
    out.with_file_name(format!("{stem}{suffix}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainAnalog(c) => {
            let cfg = load_config(&c, false)?;
            let data = Dataset::from_config(&cfg)?;
            let out = pipeline::run_phase1_analog(&cfg, &data)?;
            out.checkpoint.save(&c.out)?;
            write_losses(&c.out, "analog", &out.log)?;
        }
        Command::FitConstellation {
            common: c,
            checkpoint,
        } => {
            let cfg = load_config(&c, false)?;
            let data = Dataset::from_config(&cfg)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let out = pipeline::run_phase2_cluster(&ck, &cfg, &data)?;
            out.constellation.save(&c.out)?;
        }
        Command::Finetune {
            common: c,
            checkpoint,
            constellation,
        } => {
            let cfg = load_config(&c, false)?;
            let data = Dataset::from_config(&cfg)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let cons = constellation
                .as_deref()
                .map(Constellation::load)
                .transpose()?;
            let out = pipeline::run_phase3_finetune(&ck, &cfg, &data, cons.as_ref())?;
            out.checkpoint.save(&c.out)?;
            write_losses(&c.out, "finetune", &out.log)?;
        }
        Command::TrainSte(c) => {
            let cfg = load_config(&c, false)?;
            let data = Dataset::from_config(&cfg)?;
            let out = pipeline::run_ste_baseline(&cfg, &data)?;
            out.checkpoint.save(&c.out)?;
            write_losses(&c.out, "ste", &out.log)?;
        }
        Command::Evaluate {
            common: c,
            checkpoint,
            constellation,
        } => {
            let cfg = load_config(&c, true)?;
            let data = Dataset::from_config(&cfg)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let cons = constellation
                .as_deref()
                .map(Constellation::load)
                .transpose()?;
            let report = pipeline::evaluate_sweep(&ck, &cfg, &data, cons.as_ref())?;
            for p in &report.per_snr {
                info!("snr {}: psnr {:.3} dB", p.snr, p.psnr_db);
            }
            write_atomic(
                &c.out,
                sweep_csv(&report, &pipeline::labels(&cfg)).as_bytes(),
            )?;
        }
        Command::ExportDistribution {
            common: c,
            checkpoint,
            bins,
        } => {
            let cfg = load_config(&c, false)?;
            let data = Dataset::from_config(&cfg)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let sample = pipeline::sample_symbols(&ck, &cfg, &data, cfg.cluster_sample_images)?;
            let dist = export_symbol_distribution(&sample, bins)?;
            info!(
                "center/edge density ratio {:.3}",
                dist.center_to_edge_ratio()
            );
            write_atomic(&c.out, dist.histogram_csv().as_bytes())?;
            write_atomic(&sibling(&c.out, "_i.csv"), dist.marginal_i_csv().as_bytes())?;
            write_atomic(&sibling(&c.out, "_q.csv"), dist.marginal_q_csv().as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
