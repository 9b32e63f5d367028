//! Analytic densities used to generate data and to compute true measure values.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, normal_pdf, std_normal_cdf, std_normal_ln_cdf, std_normal_pdf};

/// One of the four families the simulation scenarios are built from.
///
/// `Gamma` uses the (shape, rate) parameterization. Skew-normal densities are
/// `2/ω · φ((y−ξ)/ω) · Φ(α(y−ξ)/ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensitySpec {
    Normal {
        mean: f64,
        sd: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    SkewNormal {
        location: f64,
        scale: f64,
        shape: f64,
    },
    NormalMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        sds: Vec<f64>,
    },
}

impl DensitySpec {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        let s = DensitySpec::Normal { mean, sd };
        s.validate()?;
        Ok(s)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let s = DensitySpec::Gamma { shape, rate };
        s.validate()?;
        Ok(s)
    }

    pub fn skew_normal(location: f64, scale: f64, shape: f64) -> Result<Self> {
        let s = DensitySpec::SkewNormal {
            location,
            scale,
            shape,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn normal_mixture(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let s = DensitySpec::NormalMixture {
            weights,
            means,
            sds,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        fn finite(name: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be finite, got {v}")))
            }
        }
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {v}")))
            }
        }
        match self {
            DensitySpec::Normal { mean, sd } => {
                finite("mean", *mean)?;
                positive("sd", *sd)
            }
            DensitySpec::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)
            }
            DensitySpec::SkewNormal {
                location,
                scale,
                shape,
            } => {
                finite("location", *location)?;
                positive("scale", *scale)?;
                finite("shape", *shape)
            }
            DensitySpec::NormalMixture {
                weights,
                means,
                sds,
            } => {
                if weights.is_empty() {
                    return Err(Error::param("weights", "mixture needs at least one component"));
                }
                if weights.len() != means.len() || weights.len() != sds.len() {
                    return Err(Error::param(
                        "weights",
                        format!(
                            "weights, means and sds differ in length ({}, {}, {})",
                            weights.len(),
                            means.len(),
                            sds.len()
                        ),
                    ));
                }
                for &w in weights {
                    if !(w >= 0.0) || !w.is_finite() {
                        return Err(Error::param("weights", format!("must be nonnegative, got {w}")));
                    }
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::param("weights", format!("must sum to 1, sum is {total}")));
                }
                means.iter().try_for_each(|&m| finite("means", m))?;
                sds.iter().try_for_each(|&s| positive("sds", s))
            }
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match *self {
            DensitySpec::Normal { mean, sd } => normal_pdf(y, mean, sd),
            DensitySpec::Gamma { shape, rate } => gamma_pdf(y, shape, rate),
            DensitySpec::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let z = (y - location) / scale;
                2.0 / scale * std_normal_pdf(z) * std_normal_cdf(shape * z)
            }
            DensitySpec::NormalMixture {
                ref weights,
                ref means,
                ref sds,
            } => weights
                .iter()
                .zip(means)
                .zip(sds)
                .map(|((w, m), s)| w * normal_pdf(y, *m, *s))
                .sum(),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let v = match *self {
            DensitySpec::Normal { mean, sd } => normal_cdf(y, mean, sd),
            DensitySpec::Gamma { shape, rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    statrs::function::gamma::gamma_lr(shape, rate * y)
                }
            }
            DensitySpec::SkewNormal {
                location,
                scale,
                shape,
            } => {
                skew_normal_std_cdf((y - location) / scale, shape)
            }
            DensitySpec::NormalMixture {
                ref weights,
                ref means,
                ref sds,
            } => weights
                .iter()
                .zip(means)
                .zip(sds)
                .map(|((w, m), s)| w * normal_cdf(y, *m, *s))
                .sum(),
        };
        v.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DensitySpec::Normal { mean, .. } => mean,
            DensitySpec::Gamma { shape, rate } => shape / rate,
            DensitySpec::SkewNormal {
                location,
                scale,
                shape,
            } => location + scale * sn_delta(shape) * FRAC_2_PI.sqrt(),
            DensitySpec::NormalMixture {
                ref weights,
                ref means,
                ..
            } => weights.iter().zip(means).map(|(w, m)| w * m).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            DensitySpec::Normal { sd, .. } => sd * sd,
            DensitySpec::Gamma { shape, rate } => shape / (rate * rate),
            DensitySpec::SkewNormal { scale, shape, .. } => {
                let d = sn_delta(shape);
                scale * scale * (1.0 - FRAC_2_PI * d * d)
            }
            DensitySpec::NormalMixture {
                ref weights,
                ref means,
                ref sds,
            } => {
                let m = self.mean();
                weights
                    .iter()
                    .zip(means)
                    .zip(sds)
                    .map(|((w, mu), s)| w * (s * s + (mu - m) * (mu - m)))
                    .sum()
            }
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Quantile by bracketing and bisection on the CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param("p", format!("must lie in (0, 1), got {p}")));
        }
        let (m, s) = (self.mean(), self.sd());
        let mut step = s.max(1e-8);
        let mut lo = m - step;
        while self.cdf(lo) > p {
            step *= 2.0;
            lo = m - step;
        }
        step = s.max(1e-8);
        let mut hi = m + step;
        while self.cdf(hi) < p {
            step *= 2.0;
            hi = m + step;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// An interval holding all but a negligible amount (about 1e-12) of the mass.
    pub fn effective_support(&self) -> (f64, f64) {
        let eps = 1e-12;
        let lo = match self {
            DensitySpec::Gamma { .. } => 0.0,
            _ => self.quantile(eps).unwrap_or(self.mean() - 8.0 * self.sd()),
        };
        let hi = self.quantile(1.0 - eps).unwrap_or(self.mean() + 8.0 * self.sd());
        (lo, hi)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DensitySpec::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            DensitySpec::Gamma { shape, rate } => {
                // validated parameters, so construction cannot fail
                Gamma::new(shape, 1.0 / rate)
                    .expect("validated gamma parameters")
                    .sample(rng)
            }
            DensitySpec::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let d = sn_delta(shape);
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                location + scale * (d * z0.abs() + (1.0 - d * d).sqrt() * z1)
            }
            DensitySpec::NormalMixture {
                ref weights,
                ref means,
                ref sds,
            } => {
                let k = pick_index(weights, rng.random::<f64>());
                let z: f64 = rng.sample(StandardNormal);
                means[k] + sds[k] * z
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::param("n", "sample size must be at least 1"));
        }
        Ok((0..n).map(|_| self.sample_one(rng)).collect())
    }
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::Normal { mean, sd } => write!(f, "N({mean}, {sd}^2)"),
            DensitySpec::Gamma { shape, rate } => write!(f, "Gamma(shape={shape}, rate={rate})"),
            DensitySpec::SkewNormal {
                location,
                scale,
                shape,
            } => write!(f, "SN({location}, {scale}, {shape})"),
            DensitySpec::NormalMixture {
                weights,
                means,
                sds,
            } => {
                write!(f, "Mix[")?;
                for (i, ((w, m), s)) in weights.iter().zip(means).zip(sds).enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{w}*N({m}, {s}^2)")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Command-line form: `normal:MEAN,SD`, `gamma:SHAPE,RATE`,
/// `skew_normal:LOCATION,SCALE,SHAPE` or `mixture:W,MEAN,SD;W,MEAN,SD;...`.
impl std::str::FromStr for DensitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::param("density", format!("`{s}`: {why}"));
        let (family, args) = s.split_once(':').ok_or_else(|| bad("expected FAMILY:PARAMS"))?;
        let nums = |t: &str| -> Result<Vec<f64>> {
            t.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad("parameters must be numbers")))
                .collect()
        };
        let exact = |t: &str, k: usize| -> Result<Vec<f64>> {
            let v = nums(t)?;
            if v.len() == k {
                Ok(v)
            } else {
                Err(bad(&format!("expected {k} parameters")))
            }
        };
        match family.trim() {
            "normal" => {
                let v = exact(args, 2)?;
                Self::normal(v[0], v[1])
            }
            "gamma" => {
                let v = exact(args, 2)?;
                Self::gamma(v[0], v[1])
            }
            "skew_normal" => {
                let v = exact(args, 3)?;
                Self::skew_normal(v[0], v[1], v[2])
            }
            "mixture" => {
                let (mut w, mut m, mut sd) = (Vec::new(), Vec::new(), Vec::new());
                for comp in args.split(';') {
                    let v = exact(comp, 3)?;
                    w.push(v[0]);
                    m.push(v[1]);
                    sd.push(v[2]);
                }
                Self::normal_mixture(w, m, sd)
            }
            _ => Err(bad("unknown family")),
        }
    }
}

/// Index `k` with `sum(weights[..k]) <= u < sum(weights[..=k])`, clamped to the last
/// positive weight.
pub(crate) fn pick_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = k;
            acc += w;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Standard skew-normal CDF. `Φ(z) − 2T(z, α)` loses all precision on the
/// light tail (both terms agree to many digits), so there the tail integral
/// `2∫_{−∞}^z φ(t) Φ(αt) dt` is summed directly in log space.
fn skew_normal_std_cdf(z: f64, alpha: f64) -> f64 {
    if alpha < 0.0 {
        return 1.0 - skew_normal_std_cdf(-z, -alpha);
    }
    if z >= 0.0 || alpha == 0.0 {
        return std_normal_cdf(z) - 2.0 * owens_t(z, alpha);
    }
    // ln Φ is concave with slope at least |x| for x < 0, so the integrand at
    // z − s is below exp(−c s − s²/2) times its value at s = 0
    let c = (1.0 + alpha * alpha) * z.abs();
    let reach = -c + (c * c + 80.0).sqrt();
    let (nodes, weights) = gauss_legendre_20();
    let panels = 16;
    let half = 0.5 * reach / panels as f64;
    let ln_two_phi = std::f64::consts::LN_2 - 0.5 * (2.0 * PI).ln();
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (2 * p + 1) as f64 * half;
        for (x, w) in nodes.iter().zip(weights) {
            let t = z - (mid + half * x);
            total += w * (ln_two_phi - 0.5 * t * t + std_normal_ln_cdf(alpha * t)).exp();
        }
    }
    total * half
}

fn sn_delta(shape: f64) -> f64 {
    shape / (1.0 + shape * shape).sqrt()
}

fn gamma_pdf(y: f64, shape: f64, rate: f64) -> f64 {
    if y < 0.0 {
        return 0.0;
    }
    if y == 0.0 {
        return match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => rate,
            _ => 0.0,
        };
    }
    ((shape - 1.0) * y.ln() - rate * y + shape * rate.ln() - libm::lgamma(shape)).exp()
}

/// Owen's T function `T(h, a) = 1/(2π) ∫₀^a exp(−h²(1+x²)/2) / (1+x²) dx`.
///
/// Composite 20-point Gauss–Legendre; the integrand is analytic on the real
/// line, so a panel count growing with |a| gives near machine accuracy.
pub fn owens_t(h: f64, a: f64) -> f64 {
    if a == 0.0 || h.is_infinite() {
        return 0.0;
    }
    if a < 0.0 {
        return -owens_t(h, -a);
    }
    let (nodes, weights) = gauss_legendre_20();
    let panels = (a.ceil() as usize).clamp(1, 64) * 4;
    let width = a / panels as f64;
    let h2 = 0.5 * h * h;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            let t = mid + half * x;
            let q = 1.0 + t * t;
            s += w * (-h2 * q).exp() / q;
        }
        total += half * s;
    }
    total / (2.0 * PI)
}

const GL_ORDER: usize = 20;

/// Nodes and weights of the Gauss–Legendre rule on [−1, 1], found by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre_20() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{simpson, EvaluationGrid, RngStream};

    fn simpson_integral(spec: &DensitySpec, lo: f64, hi: f64, n: usize) -> f64 {
        let g = EvaluationGrid::new(lo, hi, n).unwrap();
        simpson(&g.map(|y| spec.pdf(y)), g.spacing()).unwrap()
    }

    fn all_specs() -> Vec<DensitySpec> {
        vec![
            DensitySpec::normal(-3.25, 1.0).unwrap(),
            DensitySpec::gamma(3.0, 1.0).unwrap(),
            DensitySpec::gamma(1.5, 1.0).unwrap(),
            DensitySpec::skew_normal(6.0, 2.0, 5.0).unwrap(),
            DensitySpec::skew_normal(0.1, 2.0, -5.0).unwrap(),
            DensitySpec::normal_mixture(vec![0.5, 0.5], vec![-6.0, -3.0], vec![1.0, 1.0]).unwrap(),
        ]
    }

    /// Specs whose densities are smooth enough for Simpson checks at a fixed
    /// resolution; Γ(1.5, 1) has a square-root cusp at zero.
    fn smooth_specs() -> Vec<DensitySpec> {
        all_specs()
            .into_iter()
            .filter(|s| !matches!(s, DensitySpec::Gamma { shape, .. } if *shape < 2.0))
            .collect()
    }

    #[test]
    fn reference_values() {
        let n = DensitySpec::normal(0.0, 1.0).unwrap();
        assert!((n.pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(n.cdf(0.0), 0.5);
        let sn = DensitySpec::skew_normal(0.0, 1.0, 0.0).unwrap();
        for y in [-2.0, -0.3, 0.0, 1.7] {
            assert!((sn.pdf(y) - n.pdf(y)).abs() < 1e-15);
            assert!((sn.cdf(y) - n.cdf(y)).abs() < 1e-15);
        }
        let mix = DensitySpec::normal_mixture(vec![0.5, 0.5], vec![-2.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert!((mix.cdf(0.0) - 0.5).abs() < 1e-15);
        let sn5 = DensitySpec::skew_normal(0.0, 1.0, 5.0).unwrap();
        assert!((sn5.cdf(12.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gamma_normalizes() {
        let g = DensitySpec::gamma(3.0, 1.0).unwrap();
        assert!((simpson_integral(&g, 0.0, 60.0, 6001) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn every_family_normalizes() {
        for spec in smooth_specs() {
            let (lo, hi) = (spec.mean() - 14.0 * spec.sd(), spec.mean() + 14.0 * spec.sd());
            let lo = if matches!(spec, DensitySpec::Gamma { .. }) { 0.0 } else { lo };
            let total = simpson_integral(&spec, lo, hi, 20_001);
            assert!((total - 1.0).abs() < 1e-6, "{spec}: {total}");
        }
    }

    #[test]
    fn cdf_matches_cumulative_integral() {
        for spec in smooth_specs() {
            let (lo, hi) = spec.effective_support();
            let g = EvaluationGrid::new(lo, hi, 8001).unwrap();
            let pdf = g.map(|y| spec.pdf(y));
            let cum = crate::numerics::cumulative_simpson(&pdf, g.spacing()).unwrap();
            let base = spec.cdf(lo);
            let mut prev = 0.0;
            for (i, y) in g.iter().enumerate() {
                let c = spec.cdf(y);
                assert!(c >= prev - 1e-15, "{spec} not monotone at {y}");
                prev = c;
                assert!((c - base - cum[i]).abs() < 1e-6, "{spec} at {y}: {c} vs {}", cum[i]);
            }
        }
    }

    #[test]
    fn skew_normal_cdf_matches_scipy() {
        // scipy.stats.skewnorm(a=5, loc=6, scale=2).cdf(y)
        let sn = DensitySpec::skew_normal(6.0, 2.0, 5.0).unwrap();
        let cases = [
            (6.5, 0.205_029_295_511_625_8),
            (7.0, 0.383_198_073_936_440_34),
            (9.0, 0.866_385_597_462_284),
        ];
        for (y, want) in cases {
            assert!((sn.cdf(y) - want).abs() < 1e-10, "y={y}: {}", sn.cdf(y));
        }
    }

    #[test]
    fn skew_normal_light_tail_keeps_relative_accuracy() {
        // 2∫φ(t)Φ(αt) by 40-digit mpmath quadrature; scipy's skewnorm is
        // itself off by up to 1e-3 relative this far out
        let sn = DensitySpec::skew_normal(0.0, 1.0, 5.0).unwrap();
        let cases = [
            (-0.5, 2.731_513_884_140_962_5e-4),
            (-1.0, 4.987_676_700_658_269e-9),
            (-2.0, 1.553_268_267_871_062_7e-26),
            (-3.0, 4.136_670_760_060_564_3e-55),
        ];
        for (z, want) in cases {
            assert!((sn.cdf(z) / want - 1.0).abs() < 1e-12, "z={z}: {}", sn.cdf(z));
        }
        let neg = DensitySpec::skew_normal(0.0, 1.0, -3.0).unwrap();
        assert!((neg.cdf(0.7) - 0.998_762_690_884_714).abs() < 1e-12);
        assert!((neg.cdf(2.0) - 0.999_999_999_994_910_8).abs() < 1e-14);

        let g = EvaluationGrid::new(-12.0, 12.0, 4001).unwrap();
        for spec in [sn, neg] {
            let v = g.map(|y| spec.cdf(y));
            assert!(v.windows(2).all(|w| w[1] >= w[0]), "{spec}");
        }
    }

    #[test]
    fn gamma_cdf_matches_reference() {
        // closed form for integer shape: 1 − e^{−x}(1 + x + x²/2)
        let g = DensitySpec::gamma(3.0, 1.0).unwrap();
        for x in [0.1f64, 1.0, 3.0, 7.5, 20.0] {
            let want = 1.0 - (-x).exp() * (1.0 + x + x * x / 2.0);
            assert!((g.cdf(x) - want).abs() < 1e-13, "x={x}");
        }
        // Γ(1.5, 1): erf(√x) − 2√(x/π)·e^{−x}
        let g = DensitySpec::gamma(1.5, 1.0).unwrap();
        for x in [0.01f64, 0.5, 2.0, 9.0] {
            let want = libm::erf(x.sqrt()) - 2.0 * (x / PI).sqrt() * (-x).exp();
            assert!((g.cdf(x) - want).abs() < 1e-13, "x={x}");
        }
        let g = DensitySpec::gamma(2.0, 0.5).unwrap();
        assert!((g.cdf(4.0) - (1.0 - (-2.0f64).exp() * 3.0)).abs() < 1e-13);
    }

    #[test]
    fn owens_t_reference_values() {
        // T(h, 1) = Φ(h)(1 − Φ(h)) / 2
        for h in [0.0, 0.5, 1.3, 3.0] {
            let p = std_normal_cdf(h);
            assert!((owens_t(h, 1.0) - 0.5 * p * (1.0 - p)).abs() < 1e-15);
        }
        // T(0, a) = atan(a) / (2π)
        for a in [0.3, 5.0, 40.0] {
            assert!((owens_t(0.0, a) - a.atan() / (2.0 * PI)).abs() < 1e-14, "a={a}");
        }
    }

    #[test]
    fn sample_means() {
        let mut rng = RngStream::new(1, 0);
        let n = 100_000;
        let mean = |s: &DensitySpec, rng: &mut RngStream| {
            s.sample(n, rng).unwrap().iter().sum::<f64>() / n as f64
        };
        assert!(mean(&DensitySpec::normal(0.0, 1.0).unwrap(), &mut rng).abs() < 0.02);
        assert!((mean(&DensitySpec::gamma(3.0, 1.0).unwrap(), &mut rng) - 3.0).abs() < 0.05);
        let sn = DensitySpec::skew_normal(0.0, 1.0, 5.0).unwrap();
        assert!((sn.mean() - 0.7824).abs() < 1e-4);
        assert!((mean(&sn, &mut rng) - sn.mean()).abs() < 0.02);
    }

    #[test]
    fn analytic_moments_match_quadrature() {
        for spec in smooth_specs() {
            let (lo, hi) = spec.effective_support();
            let g = EvaluationGrid::new(lo, hi, 20_001).unwrap();
            let m = simpson(&g.map(|y| y * spec.pdf(y)), g.spacing()).unwrap();
            let v = simpson(&g.map(|y| (y - m).powi(2) * spec.pdf(y)), g.spacing()).unwrap();
            assert!((m - spec.mean()).abs() < 1e-6, "{spec}");
            assert!((v - spec.variance()).abs() < 1e-6, "{spec}");
        }
    }

    #[test]
    fn ks_distance_below_critical_value() {
        // 1% critical value of the KS statistic is about 1.628 / sqrt(n)
        let n = 10_000;
        let crit = 1.628 / (n as f64).sqrt();
        for spec in all_specs() {
            let mut passes = 0;
            let reps = 20;
            for r in 0..reps {
                let mut rng = RngStream::new(99, r);
                let mut s = spec.sample(n, &mut rng).unwrap();
                s.sort_by(f64::total_cmp);
                let d = s
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| {
                        let c = spec.cdf(y);
                        (c - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - c)
                    })
                    .fold(0.0, f64::max);
                if d < crit {
                    passes += 1;
                }
            }
            assert!(passes as f64 >= 0.95 * reps as f64, "{spec}: {passes}/{reps}");
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(DensitySpec::normal(0.0, 0.0).is_err());
        assert!(DensitySpec::gamma(-1.0, 1.0).is_err());
        assert!(DensitySpec::skew_normal(0.0, -2.0, 1.0).is_err());
        assert!(DensitySpec::normal_mixture(vec![0.5, 0.4], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(DensitySpec::normal_mixture(vec![1.0], vec![0.0, 1.0], vec![1.0]).is_err());
        let mut rng = RngStream::new(0, 0);
        assert!(DensitySpec::normal(0.0, 1.0).unwrap().sample(0, &mut rng).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for spec in all_specs() {
            for p in [1e-6, 0.1, 0.5, 0.9, 1.0 - 1e-6] {
                let q = spec.quantile(p).unwrap();
                assert!((spec.cdf(q) - p).abs() < 1e-10, "{spec} p={p}");
            }
        }
    }

    #[test]
    fn parses_command_line_form() {
        assert_eq!("normal:-3.25,1".parse::<DensitySpec>().unwrap(), DensitySpec::normal(-3.25, 1.0).unwrap());
        assert_eq!(
            "skew_normal:6,2,5".parse::<DensitySpec>().unwrap(),
            DensitySpec::skew_normal(6.0, 2.0, 5.0).unwrap()
        );
        assert_eq!(
            "mixture:0.5,-6,1;0.5,-3,1".parse::<DensitySpec>().unwrap(),
            DensitySpec::normal_mixture(vec![0.5, 0.5], vec![-6.0, -3.0], vec![1.0, 1.0]).unwrap()
        );
        assert!("gamma:3".parse::<DensitySpec>().is_err());
        assert!("normal:0,-1".parse::<DensitySpec>().is_err());
        assert!("cauchy:0,1".parse::<DensitySpec>().is_err());
    }
}
