//! Reconstruction quality and symbol diagnostics.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::clustering::SymbolSample;
use crate::complex::ComplexVec;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::modem::{Modem, Snr};

/// `10 log10(max^2 / mse)`; zero MSE yields `+inf`.
pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (max_value * max_value / mse).log10()
}

/// PSNR on denormalized pixels, `MAX = 2^bit_depth - 1` of the reference.
pub fn psnr(x: &ImageTensor, x_hat: &ImageTensor) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::arg(format!(
            "shape {:?} vs {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    let max = x.max_value();
    let se: f64 = x
        .pixels()
        .iter()
        .zip(x_hat.pixels())
        .map(|(a, b)| {
            let d = (a - b) * max;
            d * d
        })
        .sum();
    Ok(psnr_from_mse(se / x.len() as f64, max))
}

/// Formats a float for CSV output, spelling infinities as `inf`/`-inf`.
pub fn csv_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// RMS distance between continuous symbols and their modulated versions.
pub fn modulation_error_stats(y: &ComplexVec, z: &ComplexVec) -> Result<f64> {
    if y.len() != z.len() || y.is_empty() {
        return Err(Error::arg(format!("lengths {} and {}", y.len(), z.len())));
    }
    Ok(rms_error(y.as_slice(), z.as_slice()))
}

pub(crate) fn rms_error(y: &[Complex64], z: &[Complex64]) -> f64 {
    let s: f64 = y.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum();
    (s / y.len() as f64).sqrt()
}

/// RMS modulation error of mapping `points` onto `modem`'s constellation.
pub fn modulation_rms(points: &[Complex64], modem: &Modem) -> f64 {
    let z: Vec<Complex64> = points.iter().map(|&p| modem.nearest(p)).collect();
    rms_error(points, &z)
}

/// Per-point usage counts over the constellation.
pub fn constellation_usage(symbols: &[Complex64], modem: &Modem) -> Option<Vec<u64>> {
    let m = modem.order()?;
    let mut counts = vec![0u64; m];
    for &s in symbols {
        counts[modem.point_index(s).unwrap()] += 1;
    }
    Some(counts)
}

/// 2-D (I, Q) histogram with marginal densities over the square
/// `[-half_width, half_width]^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolDistribution {
    pub bins: usize,
    pub half_width: f64,
    /// Row-major `[i_bin * bins + q_bin]`.
    pub counts: Vec<u64>,
    pub marginal_i: Vec<f64>,
    pub marginal_q: Vec<f64>,
    pub total: u64,
}

pub const DISTRIBUTION_HEADER: &str = "bin_i,bin_q,count";
pub const MARGINAL_HEADER: &str = "bin,center,density";

/// Histograms the sample over a square just covering its largest
/// coordinate magnitude.
pub fn export_symbol_distribution(
    samples: &SymbolSample,
    bins: usize,
) -> Result<SymbolDistribution> {
    if bins == 0 {
        return Err(Error::arg("bin count must be at least 1"));
    }
    let pts = samples.points();
    let extent = pts
        .iter()
        .map(|p| p.re.abs().max(p.im.abs()))
        .fold(0.0, f64::max);
    let half_width = if extent > 0.0 { extent } else { 1.0 };
    let width = 2.0 * half_width / bins as f64;
    let bin_of =
        |v: f64| (((v + half_width) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
    let mut counts = vec![0u64; bins * bins];
    let mut mi = vec![0u64; bins];
    let mut mq = vec![0u64; bins];
    for p in pts {
        let (i, q) = (bin_of(p.re), bin_of(p.im));
        counts[i * bins + q] += 1;
        mi[i] += 1;
        mq[q] += 1;
    }
    let total = pts.len() as u64;
    let density = |m: Vec<u64>| {
        m.into_iter()
            .map(|c| c as f64 / (total as f64 * width))
            .collect()
    };
    Ok(SymbolDistribution {
        bins,
        half_width,
        counts,
        marginal_i: density(mi),
        marginal_q: density(mq),
        total,
    })
}

impl SymbolDistribution {
    pub fn count(&self, i: usize, q: usize) -> u64 {
        self.counts[i * self.bins + q]
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        let width = 2.0 * self.half_width / self.bins as f64;
        -self.half_width + (b as f64 + 0.5) * width
    }

    /// Count of the bin containing the origin divided by the mean count of
    /// the outermost ring of bins.
    pub fn center_to_edge_ratio(&self) -> f64 {
        let b = self.bins;
        let c = self.count(b / 2, b / 2) as f64;
        if b < 3 {
            return 1.0;
        }
        let mut edge = 0u64;
        let mut n = 0u64;
        for i in 0..b {
            for q in 0..b {
                if i == 0 || q == 0 || i == b - 1 || q == b - 1 {
                    edge += self.count(i, q);
                    n += 1;
                }
            }
        }
        let mean_edge = edge as f64 / n as f64;
        if mean_edge == 0.0 {
            if c > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            c / mean_edge
        }
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = format!("{DISTRIBUTION_HEADER}\n");
        for i in 0..self.bins {
            for q in 0..self.bins {
                writeln!(out, "{i},{q},{}", self.count(i, q)).unwrap();
            }
        }
        out
    }

    fn marginal_csv(&self, m: &[f64]) -> String {
        let mut out = format!("{MARGINAL_HEADER}\n");
        for (b, d) in m.iter().enumerate() {
            writeln!(out, "{b},{},{}", self.bin_center(b), csv_float(*d)).unwrap();
        }
        out
    }

    pub fn marginal_i_csv(&self) -> String {
        self.marginal_csv(&self.marginal_i)
    }

    pub fn marginal_q_csv(&self) -> String {
        self.marginal_csv(&self.marginal_q)
    }
}

/// One evaluated SNR point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrPoint {
    pub snr: Snr,
    pub psnr_db: f64,
    /// Mean squared error on the denormalized pixel scale.
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// PSNR of the grid-averaged MSE.
    pub psnr_db: f64,
    pub mse: f64,
    pub per_snr: Vec<SnrPoint>,
    pub modulation_error_rms: f64,
    pub constellation_usage: Option<Vec<u64>>,
}

impl EvalReport {
    pub fn new(
        per_snr: Vec<SnrPoint>,
        max_value: f64,
        modulation_error_rms: f64,
        constellation_usage: Option<Vec<u64>>,
    ) -> Result<Self> {
        if per_snr.is_empty() {
            return Err(Error::arg("report needs at least one SNR point"));
        }
        let mse = per_snr.iter().map(|p| p.mse).sum::<f64>() / per_snr.len() as f64;
        Ok(EvalReport {
            psnr_db: psnr_from_mse(mse, max_value),
            mse,
            per_snr,
            modulation_error_rms,
            constellation_usage,
        })
    }
}

pub const SWEEP_HEADER: &str = "snr_db,psnr_db,mse,mode,order,cbr,seed";

/// Labels attached to every sweep CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepLabels {
    pub mode: String,
    /// Modulation order; 0 for analog.
    pub order: usize,
    pub cbr: f64,
    pub seed: u64,
}

pub fn sweep_csv(report: &EvalReport, labels: &SweepLabels) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for p in &report.per_snr {
        let snr = match p.snr {
            Snr::Db(db) => csv_float(db),
            Snr::Noiseless => "inf".into(),
        };
        writeln!(
            out,
            "{snr},{},{},{},{},{},{}",
            csv_float(p.psnr_db),
            csv_float(p.mse),
            labels.mode,
            labels.order,
            csv_float(labels.cbr),
            labels.seed
        )
        .unwrap();
    }
    out
}
