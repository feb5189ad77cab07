//! Digital image transmission over simulated AWGN channels with modulation
//! matched to the distribution of learned encoder outputs.
//!
//! An autoencoder maps each image to `k` complex symbols. The symbols are
//! normalized to unit power, mapped onto a finite constellation, sent over
//! an AWGN channel, demapped and decoded. Two constellation families are
//! supported: a square grid with a trainable step ([`quantizer`]) and an
//! irregular set fitted by K-means to encoder outputs ([`clustering`]).
//! [`pipeline`] runs analog pretraining, clustering and fine-tuning through
//! a straight-through estimator, and evaluates PSNR over an SNR grid.

pub mod autonet;
pub mod clustering;
pub mod complex;
pub mod error;
pub mod image;
pub mod io_util;
pub mod metrics;
pub mod modem;
pub mod par;
pub mod pipeline;
pub mod quantizer;
pub mod rng;

pub use error::{Error, Result};
