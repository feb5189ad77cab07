//! Complex symbol vectors and Gaussian sampling.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fixed-length vector of complex channel symbols.
///
/// Real-valued network outputs map onto symbols with the interleaved
/// convention `(re0, im0, re1, im1, ...)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVec {
    elements: Vec<Complex64>,
}

impl ComplexVec {
    pub fn new(elements: Vec<Complex64>) -> Self {
        ComplexVec { elements }
    }

    pub fn zeros(k: usize) -> Self {
        ComplexVec {
            elements: vec![Complex64::new(0.0, 0.0); k],
        }
    }

    /// Pairs `2k` interleaved reals into `k` symbols.
    pub fn from_interleaved(reals: &[f64]) -> Result<Self> {
        if reals.len() % 2 != 0 {
            return Err(Error::arg(format!(
                "interleaved length {} is odd",
                reals.len()
            )));
        }
        Ok(ComplexVec {
            elements: reals
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect(),
        })
    }

    pub fn to_interleaved(&self) -> Vec<f64> {
        self.elements.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.elements
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.elements.iter()
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.elements
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexVec {
        ComplexVec {
            elements: self.elements.iter().map(|&c| f(c)).collect(),
        }
    }
}

impl From<Vec<Complex64>> for ComplexVec {
    fn from(elements: Vec<Complex64>) -> Self {
        ComplexVec { elements }
    }
}

impl std::ops::Index<usize> for ComplexVec {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.elements[i]
    }
}

/// `(1/k) * sum |v_i|^2`.
pub fn average_power(v: &ComplexVec) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::arg("average power of an empty vector"));
    }
    Ok(power_of(v.as_slice()))
}

pub(crate) fn power_of(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64
}

/// Draws `k` samples of CN(0, variance): real and imaginary parts are
/// independent with variance `variance / 2` each.
pub fn sample_complex_gaussian(rng: &mut Rng, k: usize, variance: f64) -> Result<ComplexVec> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::arg(format!(
            "noise variance {variance} must be finite and >= 0"
        )));
    }
    if k == 0 {
        return Err(Error::arg("sample count must be at least 1"));
    }
    if variance == 0.0 {
        return Ok(ComplexVec::zeros(k));
    }
    let scale = (variance / 2.0).sqrt();
    Ok(ComplexVec {
        elements: (0..k)
            .map(|_| {
                let re = rng.gaussian() * scale;
                let im = rng.gaussian() * scale;
                Complex64::new(re, im)
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::streams;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn power_examples() {
        let v = ComplexVec::new(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(average_power(&v).unwrap(), 1.0);
        let v = ComplexVec::new(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(average_power(&v).unwrap(), 2.0);
        assert_eq!(average_power(&ComplexVec::zeros(3)).unwrap(), 0.0);
        assert!(average_power(&ComplexVec::new(vec![])).is_err());
    }

    #[test]
    fn zero_variance_gives_exact_zeros() {
        let mut rng = Rng::new(11, streams::NOISE);
        let v = sample_complex_gaussian(&mut rng, 4, 0.0).unwrap();
        assert!(v.iter().all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn negative_variance_rejected() {
        let mut rng = Rng::new(11, streams::NOISE);
        assert!(sample_complex_gaussian(&mut rng, 4, -1.0).is_err());
        assert!(sample_complex_gaussian(&mut rng, 0, 1.0).is_err());
    }

    #[test]
    fn unit_variance_power() {
        let mut rng = Rng::new(2024, streams::NOISE);
        let v = sample_complex_gaussian(&mut rng, 1_000_000, 1.0).unwrap();
        let p = average_power(&v).unwrap();
        assert!((0.99..=1.01).contains(&p), "power {p}");
    }

    #[test]
    fn half_variance_split_per_axis() {
        let mut rng = Rng::new(77, streams::NOISE);
        let v = sample_complex_gaussian(&mut rng, 1_000_000, 0.5).unwrap();
        let k = v.len() as f64;
        let mean_re = v.iter().map(|z| z.re).sum::<f64>() / k;
        let var_re = v.iter().map(|z| (z.re - mean_re).powi(2)).sum::<f64>() / (k - 1.0);
        assert!((0.2475..=0.2525).contains(&var_re), "re variance {var_re}");
        // Moments: mean magnitude < 0.01 sigma.
        let mean_im = v.iter().map(|z| z.im).sum::<f64>() / k;
        assert!(mean_re.abs() < 0.01 * 0.5f64.sqrt());
        assert!(mean_im.abs() < 0.01 * 0.5f64.sqrt());
    }

    #[test]
    fn interleaving_round_trip() {
        let reals = [1.0, 2.0, 3.0, 4.0];
        let v = ComplexVec::from_interleaved(&reals).unwrap();
        assert_eq!(v[1], c(3.0, 4.0));
        assert_eq!(v.to_interleaved(), reals);
        assert!(ComplexVec::from_interleaved(&[1.0]).is_err());
    }
}
