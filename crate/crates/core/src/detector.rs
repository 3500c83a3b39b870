//! Windowed chi-square residue detector.

use std::collections::VecDeque;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_WINDOW: usize = 5;

/// `rᵀ Σ⁻¹ r` for a residue `r` given the inverse residue covariance.
pub fn chi_square_statistic(residue: &[f64], cov_inv: &Matrix) -> f64 {
    cov_inv.quad_form(residue)
}

/// Threshold on the window mean of chi-square statistics that yields the
/// requested false-alarm rate for Gaussian residues of dimension `m`.
/// The window sum of `N_w` statistics is chi-square with `N_w m` degrees of
/// freedom, so the threshold is its `1 - far` quantile divided by `N_w`.
pub fn threshold_for_far(m: usize, window: usize, far: f64) -> Result<f64> {
    if m == 0 || window == 0 {
        return Err(Error::Config("detector needs m ≥ 1 and window ≥ 1".into()));
    }
    if !(far > 0.0 && far < 1.0) {
        return Err(Error::Config(format!("false-alarm rate {far} must lie in (0, 1)")));
    }
    let dist = ChiSquared::new((m * window) as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - far) / window as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOutput {
    pub statistic: f64,
    pub g: f64,
    pub alarm: bool,
}

/// Sliding-window detector. Until the window fills, `g` averages the
/// statistics seen so far.
#[derive(Debug, Clone)]
pub struct DetectorState {
    cov_inv: Matrix,
    window: usize,
    threshold: f64,
    recent: VecDeque<f64>,
}

impl DetectorState {
    pub fn new(residue_cov: &Matrix, window: usize, threshold: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("detector window must be ≥ 1".into()));
        }
        Ok(Self {
            cov_inv: residue_cov.inverse()?,
            window,
            threshold,
            recent: VecDeque::with_capacity(window),
        })
    }

    pub fn with_far(residue_cov: &Matrix, window: usize, far: f64) -> Result<Self> {
        let th = threshold_for_far(residue_cov.rows(), window, far)?;
        Self::new(residue_cov, window, th)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn step(&mut self, residue: &[f64]) -> DetectorOutput {
        let statistic = chi_square_statistic(residue, &self.cov_inv);
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(statistic);
        let g = self.recent.iter().sum::<f64>() / self.recent.len() as f64;
        DetectorOutput {
            statistic,
            g,
            alarm: g > self.threshold,
        }
    }

    pub fn reset(&mut self) {
        self.recent.clear();
    }
}
