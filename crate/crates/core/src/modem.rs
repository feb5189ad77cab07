//! Transmission chain: power normalization, modulation, AWGN, demodulation.
//!
//! Power normalization is applied to the encoder output before modulation;
//! constellations live in that normalized space and the receiver never
//! rescales.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::clustering::{nearest_index, Constellation};
use crate::complex::{power_of, ComplexVec};
use crate::error::{Error, Result};
use crate::quantizer::UniformQuantizer;
use crate::rng::Rng;

/// Channel SNR in dB, or the explicit noiseless sentinel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Snr {
    Db(f64),
    Noiseless,
}

impl Snr {
    /// Normalized conditioning value fed to the networks (`dB / 20`).
    /// The noiseless sentinel conditions as the top of the training range.
    pub fn conditioning(&self) -> f64 {
        match self {
            Snr::Db(db) => db / 20.0,
            Snr::Noiseless => 1.0,
        }
    }

    pub fn parse(text: &str) -> Result<Snr> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("noiseless") || t.eq_ignore_ascii_case("inf") {
            return Ok(Snr::Noiseless);
        }
        let db: f64 = t
            .parse()
            .map_err(|_| Error::arg(format!("bad SNR value {text:?}")))?;
        if !db.is_finite() {
            return Err(Error::arg(format!(
                "SNR {text:?} must be finite or \"noiseless\""
            )));
        }
        Ok(Snr::Db(db))
    }
}

impl std::fmt::Display for Snr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Snr::Db(db) => write!(f, "{db}"),
            Snr::Noiseless => f.write_str("inf"),
        }
    }
}

/// AWGN channel at a given SNR under the unit-average-power convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    snr: Snr,
}

impl ChannelConfig {
    pub fn new(snr: Snr) -> Result<Self> {
        if let Snr::Db(db) = snr {
            if !db.is_finite() {
                return Err(Error::arg("SNR must be finite; use Snr::Noiseless"));
            }
        }
        Ok(ChannelConfig { snr })
    }

    pub fn from_db(snr_db: f64) -> Result<Self> {
        Self::new(Snr::Db(snr_db))
    }

    pub fn noiseless() -> Self {
        ChannelConfig {
            snr: Snr::Noiseless,
        }
    }

    pub fn snr(&self) -> Snr {
        self.snr
    }

    /// Total complex noise variance `10^(-snr_db/10)`; zero when noiseless.
    pub fn noise_variance(&self) -> f64 {
        match self.snr {
            Snr::Db(db) => 10f64.powf(-db / 10.0),
            Snr::Noiseless => 0.0,
        }
    }

    /// Adds CN(0, sigma^2) noise in place to interleaved `(re, im)` reals.
    pub fn add_noise_interleaved(&self, reals: &mut [f64], rng: &mut Rng) {
        let var = self.noise_variance();
        if var == 0.0 {
            return;
        }
        let scale = (var / 2.0).sqrt();
        for v in reals.iter_mut() {
            *v += rng.gaussian() * scale;
        }
    }
}

/// Modulator/demodulator pair sharing one constellation.
#[derive(Clone, Debug, PartialEq)]
pub enum Modem {
    /// Continuous symbols; modulation and demodulation are identity maps.
    Analog,
    /// Square grid: per-axis quantization with a learned step.
    Regular(UniformQuantizer),
    /// Arbitrary point set with nearest-point search.
    Irregular(Constellation),
}

impl Modem {
    pub fn is_analog(&self) -> bool {
        matches!(self, Modem::Analog)
    }

    /// Number of constellation points (`None` for analog).
    pub fn order(&self) -> Option<usize> {
        match self {
            Modem::Analog => None,
            Modem::Regular(q) => Some(q.order()),
            Modem::Irregular(c) => Some(c.order()),
        }
    }

    /// Nearest constellation point.
    #[inline]
    pub fn nearest(&self, s: Complex64) -> Complex64 {
        match self {
            Modem::Analog => s,
            Modem::Regular(q) => Complex64::new(q.quantize_finite(s.re), q.quantize_finite(s.im)),
            Modem::Irregular(c) => c.point(nearest_index(s, c.points())),
        }
    }

    /// Index of the nearest point; regular grids are indexed row-major over
    /// (in-phase code, quadrature code).
    pub fn point_index(&self, s: Complex64) -> Option<usize> {
        match self {
            Modem::Analog => None,
            Modem::Regular(q) => {
                let b = q.bounds();
                let code = |v: f64| (q.quantize_finite(v) / q.distance()).round() as i32 - b.lower;
                Some(code(s.re) as usize * b.levels() + code(s.im) as usize)
            }
            Modem::Irregular(c) => Some(nearest_index(s, c.points())),
        }
    }

    /// Materialized point list (regular grids in `point_index` order).
    pub fn points(&self) -> Option<Vec<Complex64>> {
        match self {
            Modem::Analog => None,
            Modem::Regular(q) => {
                let levels: Vec<f64> = q.levels().collect();
                Some(
                    levels
                        .iter()
                        .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re, im)))
                        .collect(),
                )
            }
            Modem::Irregular(c) => Some(c.points().to_vec()),
        }
    }

    /// Smallest distance between two constellation points.
    pub fn min_distance(&self) -> f64 {
        match self {
            Modem::Analog => 0.0,
            Modem::Regular(q) => q.distance(),
            Modem::Irregular(c) => c.min_distance(),
        }
    }

    /// In-place nearest-point mapping of interleaved `(re, im)` reals.
    pub fn map_interleaved(&self, reals: &mut [f64]) {
        match self {
            Modem::Analog => {}
            Modem::Regular(q) => {
                for v in reals.iter_mut() {
                    *v = q.quantize_finite(*v);
                }
            }
            Modem::Irregular(c) => {
                for pair in reals.chunks_exact_mut(2) {
                    let p = c.point(nearest_index(Complex64::new(pair[0], pair[1]), c.points()));
                    pair[0] = p.re;
                    pair[1] = p.im;
                }
            }
        }
    }
}

/// Scales `y` to unit average power.
pub fn normalize_power(y: &ComplexVec) -> Result<ComplexVec> {
    if y.is_empty() {
        return Err(Error::arg("cannot normalize an empty block"));
    }
    let p = power_of(y.as_slice());
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::arg(format!("block power {p} cannot be normalized")));
    }
    let scale = 1.0 / p.sqrt();
    Ok(y.map(|c| c * scale))
}

pub fn modulate(y: &ComplexVec, modem: &Modem) -> ComplexVec {
    y.map(|c| modem.nearest(c))
}

pub fn demodulate(z_hat: &ComplexVec, modem: &Modem) -> ComplexVec {
    z_hat.map(|c| modem.nearest(c))
}

/// `z + n`, `n ~ CN(0, sigma^2 I)`.
pub fn transmit(z: &ComplexVec, channel: &ChannelConfig, rng: &mut Rng) -> ComplexVec {
    let mut reals = z.to_interleaved();
    channel.add_noise_interleaved(&mut reals, rng);
    ComplexVec::from_interleaved(&reals).expect("even length")
}

/// One block's trip through the chain, kept for debugging.
#[derive(Clone, Debug)]
pub struct Trace {
    pub y: ComplexVec,
    pub z: ComplexVec,
    pub z_hat: ComplexVec,
    pub y_hat: ComplexVec,
}

/// Runs normalize, modulate, transmit, demodulate on one block.
pub fn run_chain(
    y: &ComplexVec,
    modem: &Modem,
    channel: &ChannelConfig,
    rng: &mut Rng,
) -> Result<Trace> {
    let y = normalize_power(y)?;
    let z = modulate(&y, modem);
    let z_hat = transmit(&z, channel, rng);
    let y_hat = demodulate(&z_hat, modem);
    Ok(Trace { y, z, z_hat, y_hat })
}

pub const TRACE_HEADER: &str = "index,y_re,y_im,z_re,z_im,zhat_re,zhat_im,yhat_re,yhat_im";

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for i in 0..self.y.len() {
            let (y, z, zh, yh) = (self.y[i], self.z[i], self.z_hat[i], self.y_hat[i]);
            writeln!(
                out,
                "{i},{},{},{},{},{},{},{},{}",
                y.re, y.im, z.re, z.im, zh.re, zh.im, yh.re, yh.im
            )
            .unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_csv().as_bytes())
    }
}
