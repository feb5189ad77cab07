//! Experiment configuration: a flat TOML document with typed fields and
//! unknown-key rejection.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer};

use crate::autonet::Architecture;
use crate::clustering::{Initialization, KMeansOptions};
use crate::error::{Error, Result};
use crate::modem::Snr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Continuous symbols, no modem.
    Analog,
    /// Analog pretraining, then fine-tuning through a learned-step grid.
    IdmcR,
    /// Analog pretraining, K-means constellation, then fine-tuning.
    IdmcI,
    /// Fixed unit-step grid trained from scratch.
    SteBaseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Analog => "analog",
            Mode::IdmcR => "idmc_r",
            Mode::IdmcI => "idmc_i",
            Mode::SteBaseline => "ste_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        Ok(match s {
            "analog" => Mode::Analog,
            "idmc_r" => Mode::IdmcR,
            "idmc_i" => Mode::IdmcI,
            "ste_baseline" => Mode::SteBaseline,
            other => return Err(Error::config(format!("unknown mode {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic,
    Directory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum KMeansInit {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "kmeans++")]
    KMeansPlusPlus,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn value(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

fn real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Number::deserialize(d)?.value())
}

fn real_opt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Ok(Option::<Number>::deserialize(d)?.map(Number::value))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SnrEntry {
    Number(Number),
    Word(String),
}

fn snr_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Snr>, D::Error> {
    let raw = Vec::<SnrEntry>::deserialize(d)?;
    raw.into_iter()
        .map(|e| match e {
            SnrEntry::Number(n) => {
                let v = n.value();
                if v.is_finite() {
                    Ok(Snr::Db(v))
                } else {
                    Err(serde::de::Error::custom(
                        "SNR values must be finite or \"noiseless\"",
                    ))
                }
            }
            SnrEntry::Word(w) => Snr::parse(&w).map_err(serde::de::Error::custom),
        })
        .collect()
}

/// Every knob of an experiment. See `configs/example.toml` for an annotated
/// file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Modulation order M (square for the grid modes).
    pub order: usize,
    /// Channel bandwidth ratio k / n.
    #[serde(deserialize_with = "real")]
    pub cbr: f64,
    #[serde(deserialize_with = "real")]
    pub snr_train_low: f64,
    #[serde(deserialize_with = "real")]
    pub snr_train_high: f64,
    #[serde(deserialize_with = "snr_list")]
    pub snr_eval: Vec<Snr>,
    pub epochs_analog: usize,
    pub epochs_finetune: usize,
    /// Defaults to `epochs_analog + epochs_finetune`.
    pub epochs_ste: Option<usize>,
    pub batch_size: usize,
    #[serde(deserialize_with = "real")]
    pub lr: f64,
    /// Base rate for the fine-tuning phase; defaults to `lr`.
    #[serde(deserialize_with = "real_opt")]
    pub lr_finetune: Option<f64>,
    /// Fraction of a phase's epochs after which the rate drops.
    #[serde(deserialize_with = "real")]
    pub lr_drop_at: f64,
    #[serde(deserialize_with = "real")]
    pub lr_drop_factor: f64,
    /// Multiplier on `lr` for the grid step d.
    #[serde(deserialize_with = "real")]
    pub distance_lr_scale: f64,
    pub seed: u64,
    /// Hidden layer widths; empty means two layers of width 4n.
    pub hidden: Vec<usize>,
    pub dataset: DatasetSource,
    pub dataset_dir: Option<PathBuf>,
    pub image_height: usize,
    pub image_width: usize,
    pub image_channels: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub data_seed: u64,
    pub cluster_sample_images: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_init: KMeansInit,
    /// Noise realizations per test image and SNR point.
    pub eval_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::IdmcI,
            order: 16,
            cbr: 1.0 / 24.0,
            snr_train_low: 0.0,
            snr_train_high: 20.0,
            snr_eval: [0.0, 5.0, 10.0, 15.0, 20.0]
                .iter()
                .map(|&d| Snr::Db(d))
                .collect(),
            epochs_analog: 60,
            epochs_finetune: 20,
            epochs_ste: None,
            batch_size: 64,
            lr: 2e-4,
            lr_finetune: None,
            lr_drop_at: 0.8,
            lr_drop_factor: 0.1,
            distance_lr_scale: 1.0,
            seed: 1,
            hidden: Vec::new(),
            dataset: DatasetSource::Synthetic,
            dataset_dir: None,
            image_height: 8,
            image_width: 8,
            image_channels: 1,
            train_size: 2048,
            test_size: 512,
            data_seed: 0x1d3c,
            cluster_sample_images: 50,
            kmeans_max_iters: 300,
            kmeans_init: KMeansInit::Random,
            eval_repeats: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn image_len(&self) -> usize {
        self.image_height * self.image_width * self.image_channels
    }

    /// Complex symbols per image, `round(cbr * n)`.
    pub fn symbols(&self) -> usize {
        (self.cbr * self.image_len() as f64).round() as usize
    }

    pub fn architecture(&self) -> Architecture {
        let n = self.image_len();
        let hidden = if self.hidden.is_empty() {
            vec![4 * n, 4 * n]
        } else {
            self.hidden.clone()
        };
        Architecture {
            image_len: n,
            symbols: self.symbols(),
            hidden,
        }
    }

    pub fn ste_epochs(&self) -> usize {
        self.epochs_ste
            .unwrap_or(self.epochs_analog + self.epochs_finetune)
    }

    pub fn kmeans_options(&self) -> KMeansOptions {
        KMeansOptions {
            max_iters: self.kmeans_max_iters,
            init: match self.kmeans_init {
                KMeansInit::Random => Initialization::Random,
                KMeansInit::KMeansPlusPlus => Initialization::KMeansPlusPlus,
            },
        }
    }

    /// Learning rate for `epoch` of a phase lasting `epochs`.
    pub fn lr_at(&self, epoch: usize, epochs: usize) -> f64 {
        self.scheduled(self.lr, epoch, epochs)
    }

    pub fn finetune_lr(&self) -> f64 {
        self.lr_finetune.unwrap_or(self.lr)
    }

    /// Step schedule applied to an arbitrary base rate.
    pub fn scheduled(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        let drop = (self.lr_drop_at * epochs as f64).floor() as usize;
        if epoch >= drop {
            base * self.lr_drop_factor
        } else {
            base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.image_len() == 0 {
            return fail("image dimensions must be positive".into());
        }
        if !(self.cbr > 0.0 && self.cbr <= 1.0) {
            return fail(format!("cbr {} outside (0, 1]", self.cbr));
        }
        if self.symbols() == 0 {
            return fail(format!(
                "cbr {} leaves no symbols for n = {}",
                self.cbr,
                self.image_len()
            ));
        }
        if !self.snr_train_low.is_finite() || !self.snr_train_high.is_finite() {
            return fail("training SNR range must be finite".into());
        }
        if self.snr_train_low > self.snr_train_high {
            return fail(format!(
                "snr_train_low {} exceeds snr_train_high {}",
                self.snr_train_low, self.snr_train_high
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return fail(format!("lr {} must be positive", self.lr));
        }
        if let Some(r) = self.lr_finetune {
            if !(r > 0.0) || !r.is_finite() {
                return fail(format!("lr_finetune {r} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.lr_drop_at) || !(self.lr_drop_factor > 0.0) {
            return fail("learning-rate drop settings out of range".into());
        }
        if !(self.distance_lr_scale >= 0.0) {
            return fail("distance_lr_scale must be >= 0".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return fail("hidden widths must be positive".into());
        }
        if self.train_size == 0 || self.test_size == 0 {
            return fail("train_size and test_size must be positive".into());
        }
        if self.eval_repeats == 0 {
            return fail("eval_repeats must be positive".into());
        }
        match self.mode {
            Mode::Analog => {}
            Mode::IdmcI => {
                if self.order < 2 {
                    return fail(format!("order {} must be >= 2", self.order));
                }
            }
            Mode::IdmcR | Mode::SteBaseline => {
                crate::quantizer::grid_for_order(self.order)
                    .map_err(|e| Error::config(e.to_string()))?;
            }
        }
        if self.dataset == DatasetSource::Directory && self.dataset_dir.is_none() {
            return fail("dataset = \"directory\" needs dataset_dir".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.symbols(), 3);
        assert!((c.symbols() as f64 / c.image_len() as f64 - c.cbr).abs() <= 1.0 / 64.0);
        assert_eq!(c.architecture().hidden, vec![256, 256]);
        assert_eq!(c.ste_epochs(), 80);
    }

    #[test]
    fn parses_typed_values() {
        let c = ExperimentConfig::from_toml(
            r#"
            mode = "idmc_r"
            order = 64
            cbr = 0.25
            snr_train_low = 0
            snr_eval = [0, 2.5, "noiseless"]
            kmeans_init = "kmeans++"
            hidden = [16]
            "#,
        )
        .unwrap();
        assert_eq!(c.mode, Mode::IdmcR);
        assert_eq!(c.order, 64);
        assert_eq!(c.snr_eval, vec![Snr::Db(0.0), Snr::Db(2.5), Snr::Noiseless]);
        assert_eq!(c.kmeans_init, KMeansInit::KMeansPlusPlus);
        assert_eq!(c.symbols(), 16);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ExperimentConfig::from_toml("modee = \"analog\"").is_err());
        assert!(ExperimentConfig::from_toml("mode = \"digital\"").is_err());
        assert!(ExperimentConfig::from_toml("cbr = 0").is_err());
        assert!(ExperimentConfig::from_toml("cbr = 1.5").is_err());
        assert!(ExperimentConfig::from_toml("snr_train_low = 30").is_err());
        assert!(ExperimentConfig::from_toml("mode = \"idmc_r\"\norder = 8").is_err());
        assert!(ExperimentConfig::from_toml("dataset = \"directory\"").is_err());
        assert!(ExperimentConfig::from_toml("batch_size = \"big\"").is_err());
        assert!(ExperimentConfig::from_toml("snr_eval = [\"loud\"]").is_err());
        let e = ExperimentConfig::from_toml("bogus = 1").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn learning_rate_drops_once() {
        let c = ExperimentConfig::default();
        assert_eq!(c.lr_at(0, 10), 2e-4);
        assert_eq!(c.lr_at(7, 10), 2e-4);
        assert!((c.lr_at(8, 10) - 2e-5).abs() < 1e-20);
        assert!((c.lr_at(9, 10) - 2e-5).abs() < 1e-20);
    }
}
