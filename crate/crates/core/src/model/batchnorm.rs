//! Per-channel batch normalization over (batch x vertices).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S: Scalar> {
    pub scale: Vec<S>,
    pub shift: Vec<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub initialized: bool,
}

/// Intermediates retained by a train-mode forward for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<S: Scalar> {
    /// Normalized activations (before scale/shift), same shape as the data.
    pub norm: Vec<S>,
    /// Per-channel 1/sqrt(var + eps).
    pub inv_std: Vec<S>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(channels: usize) -> Self {
        Self {
            scale: vec![S::ONE; channels],
            shift: vec![S::ZERO; channels],
            running_mean: vec![S::ZERO; channels],
            running_var: vec![S::ONE; channels],
            initialized: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    /// Normalizes `data` (row-major rows x channels) in place with batch
    /// statistics and updates the running statistics.
    pub fn forward_train(&mut self, data: &mut [S], rows: usize) -> BnCache<S> {
        let c = self.channels();
        debug_assert_eq!(data.len(), rows * c);
        let eps = S::from_f64(BN_EPS);
        let momentum = S::from_f64(BN_MOMENTUM);
        let inv_rows = S::from_f64(1.0 / rows as f64);

        let mut norm = vec![S::ZERO; data.len()];
        let mut inv_std = vec![S::ZERO; c];
        for ch in 0..c {
            let mut mean = S::ZERO;
            for r in 0..rows {
                mean += data[r * c + ch];
            }
            mean *= inv_rows;
            let mut var = S::ZERO;
            for r in 0..rows {
                let d = data[r * c + ch] - mean;
                var += d * d;
            }
            var *= inv_rows;
            let istd = S::ONE / (var + eps).sqrt();
            inv_std[ch] = istd;

            for r in 0..rows {
                let nv = (data[r * c + ch] - mean) * istd;
                norm[r * c + ch] = nv;
                data[r * c + ch] = self.scale[ch] * nv + self.shift[ch];
            }

            // Running stats follow the usual convention: blend with momentum,
            // variance stored unbiased.
            let var_running = if rows > 1 {
                var * S::from_f64(rows as f64 / (rows as f64 - 1.0))
            } else {
                var
            };
            self.running_mean[ch] =
                (S::ONE - momentum) * self.running_mean[ch] + momentum * mean;
            self.running_var[ch] =
                (S::ONE - momentum) * self.running_var[ch] + momentum * var_running;
        }
        self.initialized = true;
        BnCache { norm, inv_std }
    }

    /// Normalizes with running statistics; fails before any train step.
    pub fn forward_eval(&self, data: &mut [S], rows: usize) -> Result<()> {
        if !self.initialized {
            return Err(Error::BnUninitialized);
        }
        let c = self.channels();
        debug_assert_eq!(data.len(), rows * c);
        let eps = S::from_f64(BN_EPS);
        for ch in 0..c {
            let istd = S::ONE / (self.running_var[ch] + eps).sqrt();
            let mean = self.running_mean[ch];
            for r in 0..rows {
                data[r * c + ch] = self.scale[ch] * (data[r * c + ch] - mean) * istd + self.shift[ch];
            }
        }
        Ok(())
    }

    /// Backward through a train-mode forward (batch statistics).
    ///
    /// `dz` is the gradient at the output; `dy` receives the gradient at the
    /// input; `dscale`/`dshift` are accumulated.
    pub fn backward(
        &self,
        cache: &BnCache<S>,
        dz: &[S],
        rows: usize,
        dscale: &mut [S],
        dshift: &mut [S],
        dy: &mut [S],
    ) {
        let c = self.channels();
        debug_assert_eq!(dz.len(), rows * c);
        let inv_rows = S::from_f64(1.0 / rows as f64);
        for ch in 0..c {
            let mut sum_dz = S::ZERO;
            let mut sum_dz_norm = S::ZERO;
            for r in 0..rows {
                let i = r * c + ch;
                sum_dz += dz[i];
                sum_dz_norm += dz[i] * cache.norm[i];
            }
            dshift[ch] += sum_dz;
            dscale[ch] += sum_dz_norm;

            let g = self.scale[ch] * cache.inv_std[ch];
            let mean_dz = sum_dz * inv_rows;
            let mean_dz_norm = sum_dz_norm * inv_rows;
            for r in 0..rows {
                let i = r * c + ch;
                dy[i] = g * (dz[i] - mean_dz - cache.norm[i] * mean_dz_norm);
            }
        }
    }
}
