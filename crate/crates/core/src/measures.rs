//! Discrimination measures computed from densities and CDFs on a shared grid:
//! the underlap coefficient, overlap coefficients, the three-class Youden
//! index, the volume under the ROC surface, and intersection points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{simpson, simpson_unchecked, std_normal_cdf, std_normal_pdf, EvaluationGrid};

/// Default tolerance on `|∫f − 1|` for a gridded density.
pub const DEFAULT_NORM_TOLERANCE: f64 = 0.01;

/// Bisection tolerance for intersection locations.
pub const INTERSECTION_TOLERANCE: f64 = 1e-8;

/// Crossings whose shared height is below this fraction of the largest
/// density value are far-tail noise and are not reported.
pub const INTERSECTION_MIN_RELATIVE_HEIGHT: f64 = 1e-6;

/// Density values on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDensity {
    grid: EvaluationGrid,
    values: Vec<f64>,
}

impl GriddedDensity {
    /// Checked construction with the default normalization tolerance.
    pub fn new(grid: EvaluationGrid, values: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(grid, values, DEFAULT_NORM_TOLERANCE)
    }

    pub fn with_tolerance(grid: EvaluationGrid, values: Vec<f64>, tolerance: f64) -> Result<Self> {
        let d = Self::partial(grid, values)?;
        let integral = d.integral();
        if (integral - 1.0).abs() > tolerance {
            return Err(Error::Normalization {
                integral,
                tolerance,
            });
        }
        Ok(d)
    }

    /// Values of a density over part of its support; no normalization check.
    ///
    /// Useful for integrating over a range split into several uniform pieces.
    pub fn partial(grid: EvaluationGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} density values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("density", format!("values must be finite and nonnegative, found {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: EvaluationGrid, f: F) -> Result<Self> {
        Self::new(grid, grid.map(f))
    }

    pub fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        simpson_unchecked(&self.values, self.grid.spacing())
    }

    /// Value between grid points by four-point Lagrange interpolation.
    pub fn interpolate(&self, y: f64) -> f64 {
        cubic_interpolate(&self.grid, &self.values, y)
    }
}

/// Cumulative distribution values on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedCdf {
    grid: EvaluationGrid,
    values: Vec<f64>,
}

impl GriddedCdf {
    pub fn new(grid: EvaluationGrid, values: Vec<f64>) -> Result<Self> {
        let c = Self::partial(grid, values)?;
        let (first, last) = (c.values[0], c.values[c.values.len() - 1]);
        if first > 0.01 || last < 0.99 {
            return Err(Error::InvalidGrid(format!(
                "CDF runs from {first:.4} to {last:.4}; the grid must cover the bulk of the distribution"
            )));
        }
        Ok(c)
    }

    /// Like [`GriddedCdf::new`] without requiring the grid to span the bulk
    /// of the distribution.
    pub fn partial(grid: EvaluationGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} CDF values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("cdf", "values must lie in [0, 1]"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("cdf", "values must be nondecreasing"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: EvaluationGrid, f: F) -> Result<Self> {
        Self::new(grid, grid.map(f))
    }

    pub fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn shared_grid<'a>(mut grids: impl Iterator<Item = &'a EvaluationGrid>) -> Result<EvaluationGrid> {
    let first = *grids
        .next()
        .ok_or_else(|| Error::param("densities", "at least one density is required"))?;
    if grids.all(|g| *g == first) {
        Ok(first)
    } else {
        Err(Error::GridMismatch)
    }
}

fn pointwise_integral(densities: &[&GriddedDensity], reduce: fn(f64, f64) -> f64) -> Result<f64> {
    let grid = shared_grid(densities.iter().map(|d| &d.grid))?;
    let combined: Vec<f64> = (0..grid.len())
        .map(|i| {
            densities[1..]
                .iter()
                .fold(densities[0].values[i], |acc, d| reduce(acc, d.values[i]))
        })
        .collect();
    simpson(&combined, grid.spacing())
}

/// Underlap coefficient: the integral of the pointwise maximum of `H ≥ 2` densities.
pub fn unl(densities: &[&GriddedDensity]) -> Result<f64> {
    if densities.len() < 2 {
        return Err(Error::param("densities", format!("need at least 2 groups, got {}", densities.len())));
    }
    pointwise_integral(densities, f64::max)
}

/// Two-class overlap coefficient, the integral of the pointwise minimum.
pub fn ovl2(f: &GriddedDensity, g: &GriddedDensity) -> Result<f64> {
    pointwise_integral(&[f, g], f64::min)
}

/// Three-class overlap, the integral of the three-way pointwise minimum.
pub fn ovl3(f1: &GriddedDensity, f2: &GriddedDensity, f3: &GriddedDensity) -> Result<f64> {
    pointwise_integral(&[f1, f2, f3], f64::min)
}

/// Three-class underlap by inclusion–exclusion over the overlap coefficients.
pub fn unl_from_ovl(f1: &GriddedDensity, f2: &GriddedDensity, f3: &GriddedDensity) -> Result<f64> {
    Ok(3.0 - ovl2(f1, f2)? - ovl2(f1, f3)? - ovl2(f2, f3)? + ovl3(f1, f2, f3)?)
}

/// Three-class Youden index with the thresholds that attain it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Youden3 {
    pub value: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Maximize `F1(c1) + F2(c2) − F2(c1) − F3(c2) + 1` over grid pairs `c1 < c2`.
///
/// The objective separates into `F1 − F2` at `c1` and `F2 − F3` at `c2`. When
/// their individual maximizers are already ordered they are the answer;
/// otherwise a suffix maximum of `F2 − F3` over later grid points gives the
/// exact constrained optimum in one pass. Ties go to the smallest `c1`, then
/// the smallest `c2`.
pub fn yi3(f1: &GriddedCdf, f2: &GriddedCdf, f3: &GriddedCdf) -> Result<Youden3> {
    let grid = shared_grid([&f1.grid, &f2.grid, &f3.grid].into_iter())?;
    let n = grid.len();
    let a: Vec<f64> = (0..n).map(|i| f1.values[i] - f2.values[i]).collect();
    let b: Vec<f64> = (0..n).map(|i| f2.values[i] - f3.values[i]).collect();
    let i_star = argmax_first(&a);
    let j_star = argmax_first(&b);
    let (i, j) = if i_star < j_star {
        (i_star, j_star)
    } else {
        // suffix[i] = first index of the largest b over j > i
        let mut suffix = vec![n - 1; n];
        for i in (0..n - 1).rev() {
            let next = i + 1;
            suffix[i] = if i + 2 < n && b[suffix[next]] > b[next] { suffix[next] } else { next };
        }
        let mut best = (f64::NEG_INFINITY, 0, 1);
        for i in 0..n - 1 {
            let v = a[i] + b[suffix[i]];
            if v > best.0 {
                best = (v, i, suffix[i]);
            }
        }
        (best.1, best.2)
    };
    Ok(Youden3 {
        value: a[i] + b[j] + 1.0,
        c1: grid.point(i),
        c2: grid.point(j),
    })
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Empirical volume under the ROC surface, the fraction of triples with
/// `y1 < y2 < y3`.
///
/// Computed exactly in `O(n log n)`: for each `y2` the numbers of smaller `y1`
/// and larger `y3` are found by binary search. A tie between two members of a
/// triple counts ½, and a three-way tie counts ¼.
pub fn vus_empirical(s1: &[f64], s2: &[f64], s3: &[f64]) -> Result<f64> {
    for (name, s) in [("s1", s1), ("s2", s2), ("s3", s3)] {
        if s.is_empty() {
            return Err(Error::param(name, "sample is empty"));
        }
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::param(name, "sample contains NaN"));
        }
    }
    let mut a = s1.to_vec();
    let mut c = s3.to_vec();
    a.sort_by(f64::total_cmp);
    c.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for &y in s2 {
        let below = a.partition_point(|&v| v < y);
        let below_eq = a.partition_point(|&v| v <= y);
        let above_eq = c.len() - c.partition_point(|&v| v < y);
        let above = c.len() - c.partition_point(|&v| v <= y);
        let lower = below as f64 + 0.5 * (below_eq - below) as f64;
        let upper = above as f64 + 0.5 * (above_eq - above) as f64;
        total += lower * upper;
    }
    Ok(total / (s1.len() as f64 * s2.len() as f64 * s3.len() as f64))
}

/// `Pr(Y1 < Y2 < Y3) = ∫ F1 f2 (1 − F3)` on a shared grid.
pub fn vus_gridded(f1: &GriddedCdf, f2: &GriddedDensity, f3: &GriddedCdf) -> Result<f64> {
    if f1.grid() != f2.grid() || f2.grid() != f3.grid() {
        return Err(Error::GridMismatch);
    }
    let v: Vec<f64> = (0..f2.values().len())
        .map(|i| f1.values()[i] * f2.values()[i] * (1.0 - f3.values()[i]))
        .collect();
    simpson(&v, f2.grid().spacing())
}

/// VUS of three normal groups with a common standard deviation.
pub fn vus_trinormal(mu1: f64, mu2: f64, mu3: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let grid = EvaluationGrid::new(-8.0, 8.0, 2001)?;
    let (d12, d23) = ((mu2 - mu1) / sigma, (mu3 - mu2) / sigma);
    let v = grid.map(|y| std_normal_cdf(y + d12) * std_normal_cdf(-y + d23) * std_normal_pdf(y));
    simpson(&v, grid.spacing())
}

/// UNL of three normal groups with a common standard deviation.
///
/// The closed form assumes ordered means; UNL does not depend on group labels,
/// so the means are sorted first.
pub fn unl_trinormal(mu1: f64, mu2: f64, mu3: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let mut m = [mu1, mu2, mu3];
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("mu", "means must be finite"));
    }
    m.sort_by(f64::total_cmp);
    Ok(2.0 * std_normal_cdf((m[2] - m[1]) / (2.0 * sigma)) + 2.0 * std_normal_cdf((m[1] - m[0]) / (2.0 * sigma))
        - 1.0)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::param("sigma", format!("must be positive, got {sigma}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntersectionKind {
    /// The remaining density lies below the shared height: the pointwise
    /// maximum switches groups here.
    Outer,
    /// The remaining density lies above: invisible in the pointwise maximum.
    Inner,
}

/// A crossing of two of three densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPoint {
    pub location: f64,
    pub kind: IntersectionKind,
    /// Zero-based indices of the two densities that cross, smaller first.
    pub pair: (usize, usize),
    /// Common density value at the crossing.
    pub height: f64,
}

/// Locate and classify all pairwise crossings of three gridded densities.
///
/// Sign changes of each pairwise difference are bracketed on the grid and
/// refined by bisection on a local cubic interpolant. Crossings of the same
/// pair closer than one grid cell are merged, tangential contacts are not
/// reported, and neither are far-tail crossings at negligible height. Three
/// identical densities have no crossings and give an empty result.
pub fn classify_intersections(
    f1: &GriddedDensity,
    f2: &GriddedDensity,
    f3: &GriddedDensity,
) -> Result<Vec<IntersectionPoint>> {
    let grid = shared_grid([&f1.grid, &f2.grid, &f3.grid].into_iter())?;
    let ds = [f1, f2, f3];
    let scan: [&[f64]; 3] = [&f1.values, &f2.values, &f3.values];
    Ok(intersections_on_scan(&grid, scan, |k, y| ds[k].interpolate(y)))
}

/// Crossings of three densities given as functions, scanned on `grid` and
/// refined with exact function values.
pub fn classify_intersections_fn<F: Fn(usize, f64) -> f64>(
    grid: &EvaluationGrid,
    density: F,
) -> Vec<IntersectionPoint> {
    let vals: Vec<Vec<f64>> = (0..3).map(|k| grid.map(|y| density(k, y))).collect();
    intersections_on_scan(grid, [&vals[0], &vals[1], &vals[2]], density)
}

fn intersections_on_scan<F: Fn(usize, f64) -> f64>(
    grid: &EvaluationGrid,
    scan: [&[f64]; 3],
    eval: F,
) -> Vec<IntersectionPoint> {
    let peak = scan
        .iter()
        .flat_map(|v| v.iter())
        .copied()
        .fold(0.0, f64::max);
    let min_height = INTERSECTION_MIN_RELATIVE_HEIGHT * peak;
    let h = grid.spacing();
    let mut out = Vec::new();
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let third = 3 - a - b;
        let diff = |i: usize| scan[a][i] - scan[b][i];
        let mut roots: Vec<f64> = Vec::new();
        // index and sign of the last nonzero difference
        let mut last: Option<(usize, f64)> = None;
        for i in 0..grid.len() {
            let d = diff(i);
            if d == 0.0 {
                continue;
            }
            if let Some((j, s)) = last {
                if s * d < 0.0 {
                    let f = |y: f64| eval(a, y) - eval(b, y);
                    roots.push(bisect(f, grid.point(j), grid.point(i), s));
                }
            }
            last = Some((i, d.signum()));
        }
        // merge same-pair crossings closer than one cell
        let mut merged: Vec<f64> = Vec::new();
        for r in roots {
            match merged.last_mut() {
                Some(prev) if r - *prev < h => *prev = 0.5 * (*prev + r),
                _ => merged.push(r),
            }
        }
        for location in merged {
            let height = 0.5 * (eval(a, location) + eval(b, location));
            if height < min_height {
                continue;
            }
            let kind = if eval(third, location) < height {
                IntersectionKind::Outer
            } else {
                IntersectionKind::Inner
            };
            out.push(IntersectionPoint {
                location,
                kind,
                pair: (a, b),
                height,
            });
        }
    }
    out.sort_by(|p, q| p.location.total_cmp(&q.location));
    out
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, sign_lo: f64) -> f64 {
    while hi - lo > INTERSECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// UNL recomputed from outer intersection points: the points split the grid
/// into intervals, and on each interval the density with the most mass there
/// is integrated. Mass rather than the value at one point decides, so a
/// dropped far-tail crossing cannot hand an interval to the wrong density.
pub fn unl_from_intersections(densities: &[&GriddedDensity], points: &[IntersectionPoint]) -> Result<f64> {
    let grid = shared_grid(densities.iter().map(|d| &d.grid))?;
    let mut cuts: Vec<f64> = points
        .iter()
        .filter(|p| p.kind == IntersectionKind::Outer)
        .map(|p| p.location)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut edges = vec![grid.lower()];
    edges.extend(cuts.iter().copied().filter(|c| *c > grid.lower() && *c < grid.upper()));
    edges.push(grid.upper());
    let piece_of = |y: f64| edges[1..edges.len() - 1].partition_point(|&c| c < y);
    let mut mass = vec![vec![0.0; densities.len()]; edges.len() - 1];
    for (i, y) in grid.iter().enumerate() {
        for (d, dens) in densities.iter().enumerate() {
            mass[piece_of(y)][d] += dens.values[i];
        }
    }
    let winners: Vec<usize> = edges
        .windows(2)
        .zip(&mass)
        .map(|(w, m)| {
            let mid = 0.5 * (w[0] + w[1]);
            let key = |d: usize| (m[d], densities[d].interpolate(mid));
            (0..densities.len())
                .max_by(|&p, &q| key(p).partial_cmp(&key(q)).expect("finite densities"))
                .expect("nonempty")
        })
        .collect();
    let mut piece = 0;
    let values: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(i, y)| {
            while piece + 1 < winners.len() && y > edges[piece + 1] {
                piece += 1;
            }
            densities[winners[piece]].values[i]
        })
        .collect();
    simpson(&values, grid.spacing())
}

fn cubic_interpolate(grid: &EvaluationGrid, values: &[f64], y: f64) -> f64 {
    let n = grid.len();
    let h = grid.spacing();
    let t = ((y - grid.lower()) / h).clamp(0.0, (n - 1) as f64);
    let cell = (t.floor() as usize).min(n - 2);
    let start = cell.saturating_sub(1).min(n - 4);
    let xs: Vec<f64> = (start..start + 4).map(|i| i as f64).collect();
    let mut acc = 0.0;
    for (k, &xk) in xs.iter().enumerate() {
        let mut l = 1.0;
        for (m, &xm) in xs.iter().enumerate() {
            if m != k {
                l *= (t - xm) / (xk - xm);
            }
        }
        acc += l * values[start + k];
    }
    acc
}
