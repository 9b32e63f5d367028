//! Finite mixtures of normals, the form every posterior draw takes once its
//! parameters are fixed (and, for conditional models, the covariates too).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::densities::pick_index;
use crate::error::{Error, Result};
use crate::measures::{GriddedCdf, GriddedDensity};
use crate::numerics::{log_sum_exp, normal_cdf, normal_ln_pdf, EvaluationGrid};

/// Components with smaller weight are skipped when a mixture is evaluated on a
/// grid; the total skipped mass is below `L` times this.
const NEGLIGIBLE_WEIGHT: f64 = 1e-12;

/// A normal mixture: weights, means and variances of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDraw {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl MixtureDraw {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let d = Self {
            weights,
            means,
            variances,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn single(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.weights.len();
        if l == 0 || self.means.len() != l || self.variances.len() != l {
            return Err(Error::Dimension(format!(
                "mixture with {} weights, {} means and {} variances",
                l,
                self.means.len(),
                self.variances.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::param("weights", "must be nonnegative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("weights", format!("must sum to 1, sum is {total}")));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("means", "must be finite"));
        }
        if self.variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::param("variances", "must be positive"));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    fn active(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .filter(|((w, _), _)| **w > NEGLIGIBLE_WEIGHT)
            .map(|((w, m), v)| (*w, *m, v.sqrt()))
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }

    /// Log density by log-sum-exp, finite even far in the tails.
    pub fn ln_pdf(&self, y: f64) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .filter(|((w, _), _)| **w > 0.0)
            .map(|((w, m), v)| w.ln() + normal_ln_pdf(y, *m, v.sqrt()))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.active()
            .map(|(w, m, s)| w * normal_cdf(y, m, s))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, mu), v)| w * (v + (mu - m) * (mu - m)))
            .sum()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = pick_index(&self.weights, rng.random::<f64>());
        let z: f64 = rng.sample(StandardNormal);
        self.means[k] + self.variances[k].sqrt() * z
    }

    /// Density values at every grid point (no normalization check).
    pub fn density_values(&self, grid: &EvaluationGrid) -> Vec<f64> {
        let mut out = vec![0.0; grid.len()];
        let h = grid.spacing();
        for (w, m, s) in self.active() {
            // only points within 40 sd contribute anything representable
            let lo = ((m - 40.0 * s - grid.lower()) / h).floor().max(0.0) as usize;
            let hi = (((m + 40.0 * s - grid.lower()) / h).ceil().max(0.0) as usize).min(grid.len() - 1);
            if lo > hi || lo >= grid.len() {
                continue;
            }
            let c = w / (s * (2.0 * std::f64::consts::PI).sqrt());
            for (i, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let z = (grid.point(i) - m) / s;
                *o += c * (-0.5 * z * z).exp();
            }
        }
        out
    }

    /// The mixture density on a grid, checked to integrate to one within `tolerance`.
    pub fn gridded_density(&self, grid: &EvaluationGrid, tolerance: f64) -> Result<GriddedDensity> {
        GriddedDensity::with_tolerance(*grid, self.density_values(grid), tolerance)
    }

    /// The mixture CDF on a grid from sums of normal CDFs.
    pub fn gridded_cdf(&self, grid: &EvaluationGrid) -> Result<GriddedCdf> {
        GriddedCdf::from_fn(*grid, |y| self.cdf(y))
    }
}
