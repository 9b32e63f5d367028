//! Evaluation grids, composite Simpson integration, the standard normal
//! density and distribution functions, and seeded random streams.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grid points used for posterior functionals unless configured otherwise.
pub const DEFAULT_GRID_POINTS: usize = 501;

/// Fraction of the pooled data range added on each side of the default grid.
pub const DEFAULT_GRID_PADDING: f64 = 0.15;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Equally spaced abscissa `lower, lower + h, ..., upper` with an odd number of points.
///
/// Points are generated on demand as `lower + i * h`, with the last point pinned to
/// `upper`, so the grid is `Copy` and cheap to share between densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    lower: f64,
    upper: f64,
    n_points: usize,
}

impl EvaluationGrid {
    pub fn new(lower: f64, upper: f64, n_points: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "bounds must be finite, got [{lower}, {upper}]"
            )));
        }
        if lower >= upper {
            return Err(Error::InvalidGrid(format!(
                "lower bound {lower} must be below upper bound {upper}"
            )));
        }
        if n_points < 3 || n_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "number of points must be odd and at least 3, got {n_points}"
            )));
        }
        Ok(Self {
            lower,
            upper,
            n_points,
        })
    }

    /// Grid covering the pooled range of several samples, padded by `padding * R`
    /// on both sides where `R` is the pooled range.
    ///
    /// With `include_zero`, the grid is extended so that it contains zero and
    /// reaches at least `-padding * R` below it; CDF-based functionals of
    /// positive biomarkers need the mass that mixture fits place there.
    pub fn covering(
        samples: &[&[f64]],
        n_points: usize,
        padding: f64,
        include_zero: bool,
    ) -> Result<Self> {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in samples.iter().flat_map(|s| s.iter()) {
            if !v.is_finite() {
                return Err(Error::InvalidGrid("samples contain non-finite values".into()));
            }
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() {
            return Err(Error::InvalidGrid("no observations to cover".into()));
        }
        if !(padding >= 0.0) {
            return Err(Error::InvalidGrid(format!("padding must be nonnegative, got {padding}")));
        }
        let range = max - min;
        if range <= 0.0 {
            return Err(Error::InvalidGrid("pooled data range is zero".into()));
        }
        let mut lower = min - padding * range;
        let mut upper = max + padding * range;
        if include_zero {
            lower = lower.min(-padding * range);
            upper = upper.max(0.0);
        }
        Self::new(lower, upper, n_points)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.point(i))
    }

    /// Evaluate `f` at every grid point.
    pub fn map<F: FnMut(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.iter().map(f).collect()
    }
}

/// Composite Simpson's rule for values sampled on an equally spaced grid.
///
/// Uses compensated summation so that the rule stays exact for cubics up to a
/// few ulps even on long grids.
pub fn simpson(values: &[f64], spacing: f64) -> Result<f64> {
    let n = values.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!(
            "Simpson's rule needs an odd number of at least 3 values, got {n}"
        )));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
    }
    Ok(simpson_unchecked(values, spacing))
}

/// Simpson's rule without the length checks; callers guarantee an odd length >= 3.
pub(crate) fn simpson_unchecked(values: &[f64], spacing: f64) -> f64 {
    let n = values.len();
    let mut sum = NeumaierSum::default();
    sum.add(values[0]);
    sum.add(values[n - 1]);
    for (i, &v) in values.iter().enumerate().take(n - 1).skip(1) {
        sum.add(if i % 2 == 1 { 4.0 * v } else { 2.0 * v });
    }
    sum.value() * spacing / 3.0
}

/// Running cumulative Simpson integral at every even-indexed point, with the
/// odd points filled in by the trapezoid-corrected half-step rule.
pub fn cumulative_simpson(values: &[f64], spacing: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!(
            "Simpson's rule needs an odd number of at least 3 values, got {n}"
        )));
    }
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let (f0, f1, f2) = (values[i], values[i + 1], values[i + 2]);
        // half panel from the quadratic through (f0, f1, f2)
        out[i + 1] = acc + spacing * (5.0 * f0 + 8.0 * f1 - f2) / 12.0;
        acc += spacing * (f0 + 4.0 * f1 + f2) / 3.0;
        out[i + 2] = acc;
        i += 2;
    }
    Ok(out)
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, `0.5 * erfc(-x / sqrt 2)`.
///
/// The complementary error function comes from `libm` (a port of the musl
/// implementation), which keeps full relative precision in both tails.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn std_normal_ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        std_normal_cdf(x).ln()
    } else {
        // asymptotic Mills ratio: Φ(x) ≈ φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶)
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + series.ln()
    }
}

#[inline]
pub fn normal_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    std_normal_pdf((y - mean) / sd) / sd
}

#[inline]
pub fn normal_ln_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    -0.5 * z * z - LN_SQRT_2PI - sd.ln()
}

#[inline]
pub fn normal_cdf(y: f64, mean: f64, sd: f64) -> f64 {
    std_normal_cdf((y - mean) / sd)
}

/// `ln Σ exp(x_i)` without overflow; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha20 with the 64-bit stream selector set to `stream_id`:
/// the same pair always yields the same sequence and different stream ids give
/// non-overlapping keystreams. One stream per task; streams are not shared
/// across threads.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream on the same seed, keyed by a purpose tag and indices.
    pub fn derive(seed: u64, tag: StreamTag, indices: &[u64]) -> Self {
        Self::new(seed, stream_key(tag, indices))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Purposes that get disjoint stream-id ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    DataGeneration = 1,
    Estimation = 2,
    DesignSelection = 3,
    Predictive = 4,
    Chain = 5,
}

fn stream_key(tag: StreamTag, indices: &[u64]) -> u64 {
    // splitmix64-style mixing of the tag and each index
    let mut h = (tag as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for &i in indices {
        h ^= i.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
