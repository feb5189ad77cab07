//! Regular (square-grid) modulation: a clipped, rounded, rescaled quantizer
//! with a trainable step `d` shared by the in-phase and quadrature axes.
//!
//! Forward: `q(s) = round(clip(s / d, lower, upper)) * d`, rounding half away
//! from zero. Backward for `d` is the LSQ-style closed form
//! `round(s/d) - s/d` inside the clip range and `clip(s/d)` outside; the
//! input gradient is passed straight through inside `[lower, upper]`
//! (boundary included) and zeroed outside.

use crate::error::{Error, Result};

/// Inclusive per-axis integer code range `{lower, ..., upper}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodeBounds {
    pub lower: i32,
    pub upper: i32,
}

impl CodeBounds {
    pub fn levels(&self) -> usize {
        (self.upper - self.lower + 1) as usize
    }
}

/// Per-axis code bounds for a square QAM of order `order`.
///
/// With `L = sqrt(order)` levels per axis the codes are
/// `-floor(L/2) ..= ceil(L/2) - 1`.
pub fn grid_for_order(order: usize) -> Result<CodeBounds> {
    let side = (order as f64).sqrt().round() as usize;
    if order < 4 || side * side != order {
        return Err(Error::arg(format!(
            "modulation order {order} is not a square >= 4"
        )));
    }
    let side = side as i32;
    Ok(CodeBounds {
        lower: -(side / 2),
        upper: (side + 1) / 2 - 1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformQuantizer {
    distance: f64,
    bounds: CodeBounds,
}

impl UniformQuantizer {
    pub fn new(distance: f64, lower: i32, upper: i32) -> Result<Self> {
        Self::with_bounds(distance, CodeBounds { lower, upper })
    }

    pub fn with_bounds(distance: f64, bounds: CodeBounds) -> Result<Self> {
        if !(distance > 0.0) || !distance.is_finite() {
            return Err(Error::arg(format!(
                "step {distance} must be finite and > 0"
            )));
        }
        if bounds.lower >= bounds.upper {
            return Err(Error::arg(format!(
                "clip bounds [{}, {}] are empty or degenerate",
                bounds.lower, bounds.upper
            )));
        }
        Ok(UniformQuantizer { distance, bounds })
    }

    pub fn for_order(distance: f64, order: usize) -> Result<Self> {
        Self::with_bounds(distance, grid_for_order(order)?)
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn bounds(&self) -> CodeBounds {
        self.bounds
    }

    /// Copy with a new step size.
    pub fn with_distance(&self, distance: f64) -> Result<Self> {
        Self::with_bounds(distance, self.bounds)
    }

    /// Number of points in the 2-D grid (levels squared).
    pub fn order(&self) -> usize {
        self.bounds.levels() * self.bounds.levels()
    }

    /// Reconstruction levels `lower*d, ..., upper*d`.
    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        (self.bounds.lower..=self.bounds.upper).map(move |c| c as f64 * self.distance)
    }

    pub fn quantize(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::arg(format!("cannot quantize non-finite value {s}")));
        }
        Ok(self.quantize_finite(s))
    }

    /// Same as [`quantize`](Self::quantize) without the finiteness check.
    #[inline]
    pub(crate) fn quantize_finite(&self, s: f64) -> f64 {
        let u = (s / self.distance).clamp(self.bounds.lower as f64, self.bounds.upper as f64);
        u.round() * self.distance
    }

    /// Closed-form derivative of the quantized output with respect to `d`.
    #[inline]
    pub fn grad_wrt_distance(&self, s: f64) -> f64 {
        let u = s / self.distance;
        let (lo, hi) = (self.bounds.lower as f64, self.bounds.upper as f64);
        if lo < u && u < hi {
            u.round() - u
        } else {
            u.clamp(lo, hi)
        }
    }

    /// Straight-through factor for the input gradient.
    #[inline]
    pub fn grad_wrt_input(&self, s: f64) -> f64 {
        let u = s / self.distance;
        if (self.bounds.lower as f64) <= u && u <= (self.bounds.upper as f64) {
            1.0
        } else {
            0.0
        }
    }

    /// Step initialization from a calibration sample of per-axis values:
    /// `2 * E|s| / sqrt(Q)` with `Q = max(upper, -lower)` positive levels.
    pub fn initial_distance(bounds: CodeBounds, samples: &[f64]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::arg("empty calibration sample"));
        }
        let mean_abs = samples.iter().map(|s| s.abs()).sum::<f64>() / samples.len() as f64;
        let q = bounds.upper.max(-bounds.lower).max(1) as f64;
        let d = 2.0 * mean_abs / q.sqrt();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "calibration produced invalid step {d}"
            )));
        }
        Ok(d)
    }
}
