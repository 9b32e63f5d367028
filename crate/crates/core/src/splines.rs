//! Cubic B-spline bases on clamped knot vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary and interior knots of a cubic spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    lower: f64,
    upper: f64,
    interior: Vec<f64>,
}

impl KnotVector {
    pub fn new(lower: f64, upper: f64, interior: Vec<f64>) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::param(
                "knots",
                format!("boundary knots must be finite with lower < upper, got [{lower}, {upper}]"),
            ));
        }
        let mut prev = lower;
        for &k in &interior {
            if !(k > prev) {
                return Err(Error::param("knots", "interior knots must be strictly increasing"));
            }
            prev = k;
        }
        if prev >= upper && !interior.is_empty() {
            return Err(Error::param("knots", "interior knots must lie strictly inside the boundary"));
        }
        Ok(Self {
            lower,
            upper,
            interior,
        })
    }

    /// Boundary knots at the data range and `k` interior knots at the
    /// equally spaced quantiles `j/(k+1)`, `j = 1..k` (one knot sits at the median).
    pub fn from_quantiles(data: &[f64], k: usize) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("knots", "covariate values must be finite"));
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = match (sorted.first(), sorted.last()) {
            (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
            _ => {
                return Err(Error::DegenerateData(
                    "a spline covariate needs at least two distinct values".into(),
                ))
            }
        };
        let interior: Vec<f64> = (1..=k)
            .map(|j| quantile_sorted(&sorted, j as f64 / (k + 1) as f64))
            .collect();
        Self::new(lo, hi, interior).map_err(|_| {
            Error::DegenerateData(format!(
                "{k} interior knots at covariate quantiles are not distinct; use fewer knots"
            ))
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// Number of columns the retained basis contributes, `K + 3`.
    pub fn n_columns(&self) -> usize {
        self.interior.len() + 3
    }

    /// The full knot sequence with the boundary knots repeated four times.
    fn augmented(&self) -> Vec<f64> {
        let mut t = vec![self.lower; 4];
        t.extend_from_slice(&self.interior);
        t.extend(std::iter::repeat_n(self.upper, 4));
        t
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data (the usual type-7 rule).
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// All `K + 4` cubic B-splines at `x` by the Cox–de Boor recursion.
///
/// The right boundary belongs to the last interval so that the basis sums to
/// one on the closed range.
pub fn bspline_basis_full(x: f64, knots: &KnotVector) -> Result<Vec<f64>> {
    if !knots.contains(x) {
        return Err(Error::param(
            "x",
            format!("{x} lies outside the boundary knots [{}, {}]", knots.lower, knots.upper),
        ));
    }
    let t = knots.augmented();
    let n_basis = t.len() - 4;
    // knot span: t[span] <= x < t[span + 1], with 3 <= span <= n_basis - 1
    let mut span = 3;
    while span < n_basis - 1 && x >= t[span + 1] {
        span += 1;
    }
    // de Boor's triangular scheme for the four nonzero functions on the span
    let mut b = [0.0f64; 4];
    b[0] = 1.0;
    let mut left = [0.0f64; 4];
    let mut right = [0.0f64; 4];
    for j in 1..=3 {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { b[r] / denom } else { 0.0 };
            b[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        b[j] = saved;
    }
    let mut out = vec![0.0; n_basis];
    for (r, v) in b.iter().enumerate() {
        out[span - 3 + r] = *v;
    }
    Ok(out)
}

/// The `K + 3` retained basis columns: the full basis without its first
/// function, so that together with an intercept the columns span the cubic
/// spline space without collinearity.
pub fn bspline_basis(x: f64, knots: &KnotVector) -> Result<Vec<f64>> {
    let mut full = bspline_basis_full(x, knots)?;
    full.remove(0);
    Ok(full)
}
