//! Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).

use super::network::CodecParams;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over parallel parameter/gradient slices. `lr` holds one
    /// learning rate per slice. Nothing is modified when any gradient is
    /// non-finite.
    pub fn update(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        lr: &[f64],
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != lr.len() {
            return Err(Error::arg(
                "parameter, gradient and rate lists differ in length",
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::arg(format!(
                    "slice {i}: {} params vs {} grads",
                    p.len(),
                    g.len()
                )));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient {} at slice {i} index {j}; step aborted",
                    g[j]
                )));
            }
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != grads.len()
            || self
                .first
                .iter()
                .zip(grads)
                .any(|(m, g)| m.len() != g.len())
        {
            return Err(Error::arg(
                "optimizer state does not match parameter layout",
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let rate = lr[i];
            for j in 0..g.len() {
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= rate * mh / (vh.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

/// Adam step on codec parameters. The grid step `d`, when present, uses
/// `lr * distance_lr_scale`.
pub fn adam_step(
    params: &mut CodecParams,
    grads: &CodecParams,
    lr: f64,
    distance_lr_scale: f64,
    state: &mut AdamState,
) -> Result<()> {
    let has_distance = params.distance.is_some();
    let g = grads.slices();
    let mut p = params.slices_mut();
    let mut rates = vec![lr; p.len()];
    if has_distance {
        *rates.last_mut().unwrap() = lr * distance_lr_scale;
    }
    state.update(&mut p, &g, &rates)?;
    drop(p);
    if let Some(d) = params.distance {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "grid step left the positive range: {d}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new();
        let mut x = vec![1.5, -2.0];
        for _ in 0..10 {
            s.update(&mut [&mut x[..]], &[&[0.0, 0.0]], &[0.1]).unwrap();
        }
        assert_eq!(x, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new();
        let mut x = vec![0.0];
        s.update(&mut [&mut x[..]], &[&[1.0]], &[2e-4]).unwrap();
        // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
        assert!((x[0] + 2e-4 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut s = AdamState::new();
        let mut x = vec![0.0];
        let lr = 1e-3;
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..5000 {
            s.update(&mut [&mut x[..]], &[&[3.0]], &[lr]).unwrap();
            step = prev - x[0];
            prev = x[0];
        }
        assert!((step - lr).abs() < 1e-6 * lr, "{step}");
    }

    #[test]
    fn non_finite_gradient_aborts_without_change() {
        let mut s = AdamState::new();
        let mut x = vec![1.0, 2.0];
        let err = s
            .update(&mut [&mut x[..]], &[&[0.5, f64::NAN]], &[0.1])
            .unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert_eq!(x, vec![1.0, 2.0]);
        assert_eq!(s.steps(), 0);
    }
}
