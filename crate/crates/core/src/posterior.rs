//! Posterior functionals of fitted mixtures: UNL and YI3 ensembles,
//! interval summaries, comparison probabilities, convergence diagnostics and
//! posterior predictive checks.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateRecord, GroupDataset};
use crate::error::{Error, Result};
use crate::lsbp::{design_rows, ConditionalMixtureDraw, FitResult};
use crate::measures::{unl, yi3, GriddedCdf, GriddedDensity};
use crate::mixture::MixtureDraw;
use crate::numerics::EvaluationGrid;
use crate::splines::quantile_sorted;

/// S posterior draws of a scalar functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarEnsemble {
    pub label: String,
    pub draws: Vec<f64>,
}

/// Median, mean and a central interval; quantiles interpolate linearly
/// between order statistics (position `p (S − 1)` in the sorted draws).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

fn summarize_values(values: &[f64], level: f64) -> Result<Summary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param("level", "must lie strictly between 0 and 1"));
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData("a summary needs at least two draws".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok(Summary {
        median: quantile_sorted(&sorted, 0.5),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        lower: quantile_sorted(&sorted, alpha / 2.0),
        upper: quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    })
}

impl ScalarEnsemble {
    pub fn new(label: impl Into<String>, draws: Vec<f64>) -> Result<Self> {
        if draws.len() < 2 {
            return Err(Error::InsufficientData("an ensemble needs at least two draws".into()));
        }
        if let Some(i) = draws.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("ensemble draw {i} is not finite")));
        }
        Ok(Self {
            label: label.into(),
            draws,
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn summarize(&self, level: f64) -> Result<Summary> {
        summarize_values(&self.draws, level)
    }
}

/// S posterior draws of a functional at each point of a covariate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveEnsemble {
    pub records: Vec<CovariateRecord>,
    /// `values[s][j]` is draw `s` at `records[j]`.
    pub values: Vec<Vec<f64>>,
}

impl CurveEnsemble {
    pub fn new(records: Vec<CovariateRecord>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData("an ensemble needs at least two draws".into()));
        }
        if values.iter().any(|r| r.len() != records.len()) {
            return Err(Error::Dimension("curve draws do not match the covariate grid".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("curve ensemble has non-finite values".into()));
        }
        Ok(Self { records, values })
    }

    pub fn n_draws(&self) -> usize {
        self.values.len()
    }

    /// Draws at grid point `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    /// Pointwise summaries along the covariate grid.
    pub fn summarize(&self, level: f64) -> Result<Vec<Summary>> {
        (0..self.records.len())
            .map(|j| summarize_values(&self.column(j), level))
            .collect()
    }
}

fn aligned_len<T>(groups: &[&[T]]) -> Result<usize> {
    if groups.len() < 2 {
        return Err(Error::param("groups", "need at least two groups"));
    }
    let s = groups[0].len();
    if groups.iter().any(|g| g.len() != s) {
        return Err(Error::Dimension(format!(
            "groups have unequal numbers of draws: {:?}",
            groups.iter().map(|g| g.len()).collect::<Vec<_>>()
        )));
    }
    Ok(s)
}

/// UNL of one draw per group, plus each density's in-grid mass.
fn unl_of_mixtures(mixtures: &[MixtureDraw], grid: &EvaluationGrid) -> Result<(f64, Vec<f64>)> {
    let dens: Vec<GriddedDensity> = mixtures
        .iter()
        .map(|m| GriddedDensity::partial(*grid, m.density_values(grid)))
        .collect::<Result<_>>()?;
    let masses = dens.iter().map(GriddedDensity::integral).collect();
    Ok((unl(&dens.iter().collect::<Vec<_>>())?, masses))
}

/// Posterior draws keep a little mass in components drawn from the prior,
/// which can sit off the grid, so single draws may fall short of one.
/// Only a shortfall of the average in-grid mass (a grid too narrow for the
/// fit itself) is an error; short single draws are counted and logged.
fn check_masses(masses: &[Vec<f64>], tolerance: f64) -> Result<()> {
    let n = masses.len() as f64;
    let groups = masses.first().map_or(0, Vec::len);
    for g in 0..groups {
        let mean = masses.iter().map(|m| m[g]).sum::<f64>() / n;
        if (mean - 1.0).abs() > tolerance {
            return Err(Error::Normalization {
                integral: mean,
                tolerance,
            });
        }
        let short = masses.iter().filter(|m| (m[g] - 1.0).abs() > tolerance).count();
        if short > 0 {
            log::info!(
                "group {}: {short} of {} draws have in-grid mass off by more than {tolerance}",
                g + 1,
                masses.len()
            );
        }
    }
    Ok(())
}

/// UNL of draw `s` of every group, for each `s`. Draw `s` of one group is
/// paired with draw `s` of the others.
pub fn unl_ensemble(groups: &[&[MixtureDraw]], grid: &EvaluationGrid, tolerance: f64) -> Result<ScalarEnsemble> {
    let s = aligned_len(groups)?;
    let (draws, masses): (Vec<f64>, Vec<Vec<f64>>) = (0..s)
        .into_par_iter()
        .map(|k| {
            let mix: Vec<MixtureDraw> = groups.iter().map(|g| g[k].clone()).collect();
            unl_of_mixtures(&mix, grid)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    check_masses(&masses, tolerance)?;
    ScalarEnsemble::new("unl", draws)
}

/// Three-class Youden index per draw, from the mixtures' analytic CDFs.
/// As with densities, only the average CDF values at the grid ends must
/// lie within 0.01 of 0 and 1.
pub fn yi3_ensemble(groups: [&[MixtureDraw]; 3], grid: &EvaluationGrid) -> Result<ScalarEnsemble> {
    let s = aligned_len(&groups)?;
    let (draws, ends): (Vec<f64>, Vec<[(f64, f64); 3]>) = (0..s)
        .into_par_iter()
        .map(|k| {
            let c: Vec<GriddedCdf> = groups
                .iter()
                .map(|g| GriddedCdf::partial(*grid, grid.map(|y| g[k].cdf(y))))
                .collect::<Result<_>>()?;
            let ends = [0, 1, 2].map(|i| (c[i].values()[0], c[i].values()[grid.len() - 1]));
            Ok((yi3(&c[0], &c[1], &c[2])?.value, ends))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    for g in 0..3 {
        let first = ends.iter().map(|e| e[g].0).sum::<f64>() / s as f64;
        let last = ends.iter().map(|e| e[g].1).sum::<f64>() / s as f64;
        if first > 0.01 || last < 0.99 {
            return Err(Error::InvalidGrid(format!(
                "group {}: average CDF runs from {first:.4} to {last:.4}; widen the grid",
                g + 1
            )));
        }
    }
    ScalarEnsemble::new("yi3", draws)
}

/// Covariate-specific UNL for every draw and every covariate record.
/// Records outside a fit's covariate range are clamped with a warning.
/// The in-grid mass check applies separately at every record.
pub fn covariate_unl_ensemble(
    fits: &[&FitResult],
    records: &[CovariateRecord],
    grid: &EvaluationGrid,
    tolerance: f64,
) -> Result<CurveEnsemble> {
    let groups: Vec<&[ConditionalMixtureDraw]> = fits.iter().map(|f| f.draws.as_slice()).collect();
    let s = aligned_len(&groups)?;
    let mut rows = Vec::with_capacity(fits.len());
    for f in fits {
        let mut per = Vec::with_capacity(records.len());
        for r in records {
            let (z, u, clamped) = design_rows(&f.model.design, r)?;
            if clamped {
                log::warn!("covariate record {r:?} is outside the fitted range and was clamped");
            }
            per.push((z, u));
        }
        rows.push(per);
    }
    let evaluated: Vec<Vec<(f64, Vec<f64>)>> = (0..s)
        .into_par_iter()
        .map(|k| {
            (0..records.len())
                .map(|j| {
                    let mix: Vec<MixtureDraw> = (0..fits.len())
                        .map(|g| groups[g][k].mixture_for_rows(&rows[g][j].0, &rows[g][j].1))
                        .collect();
                    unl_of_mixtures(&mix, grid)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    for j in 0..records.len() {
        let masses: Vec<Vec<f64>> = evaluated.iter().map(|row| row[j].1.clone()).collect();
        check_masses(&masses, tolerance)?;
    }
    let values = evaluated
        .into_iter()
        .map(|row| row.into_iter().map(|(v, _)| v).collect())
        .collect();
    CurveEnsemble::new(records.to_vec(), values)
}

/// Share of paired draws with `a_s > b_s`; ties count as not greater.
pub fn compare_prob(a: &ScalarEnsemble, b: &ScalarEnsemble) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "ensembles have {} and {} draws",
            a.len(),
            b.len()
        )));
    }
    let wins = a.draws.iter().zip(&b.draws).filter(|(x, y)| x > y).count();
    Ok(wins as f64 / a.len() as f64)
}

fn autocovariances(x: &[f64]) -> (f64, impl Fn(usize) -> f64 + '_) {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let acov = move |k: usize| -> f64 {
        (0..n - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum::<f64>() / n as f64
    };
    (m, acov)
}

/// Asymptotic variance `σ²` of the chain mean (so `Var(x̄) ≈ σ²/n`) from
/// Geyer's initial monotone positive sequence, i.e. an estimate of `2π`
/// times the spectral density at zero.
fn asymptotic_variance(x: &[f64]) -> Result<f64> {
    let n = x.len();
    let (_, acov) = autocovariances(x);
    let g0 = acov(0);
    if !(g0 > 1e-300) {
        return Err(Error::DegenerateData("chain has zero variance".into()));
    }
    let mut total = -g0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let pair = acov(k) + acov(k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        total += 2.0 * pair;
        prev = pair;
        k += 2;
    }
    Ok(total.max(g0 / n as f64))
}

fn check_chain(chain: &[f64]) -> Result<()> {
    if chain.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "diagnostics need at least 100 iterations, got {}",
            chain.len()
        )));
    }
    if chain.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("chain has non-finite values".into()));
    }
    Ok(())
}

/// Effective sample size `n γ₀ / σ²`.
pub fn ess(chain: &[f64]) -> Result<f64> {
    check_chain(chain)?;
    let (_, acov) = autocovariances(chain);
    let g0 = acov(0);
    Ok(chain.len() as f64 * g0 / asymptotic_variance(chain)?)
}

/// Geweke z-score: mean of the first 10% minus mean of the last 50%, scaled
/// by the spectral variance estimate of each segment.
pub fn geweke(chain: &[f64]) -> Result<f64> {
    check_chain(chain)?;
    let n = chain.len();
    let a = &chain[..n / 10];
    let b = &chain[n - n / 2..];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let va = asymptotic_variance(a)? / a.len() as f64;
    let vb = asymptotic_variance(b)? / b.len() as f64;
    Ok((mean(a) - mean(b)) / (va + vb).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictiveStat {
    /// `m₃ / m₂^{3/2}` with moments about the sample mean.
    Skewness,
    /// Excess kurtosis `m₄ / m₂² − 3`.
    Kurtosis,
}

impl PredictiveStat {
    pub fn compute(self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        let moment = |p: i32| y.iter().map(|v| (v - m).powi(p)).sum::<f64>() / n;
        let m2 = moment(2);
        match self {
            PredictiveStat::Skewness => moment(3) / m2.powf(1.5),
            PredictiveStat::Kurtosis => moment(4) / (m2 * m2) - 3.0,
        }
    }
}

impl std::str::FromStr for PredictiveStat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skewness" => Ok(PredictiveStat::Skewness),
            "kurtosis" => Ok(PredictiveStat::Kurtosis),
            other => Err(Error::param("stat", format!("unknown statistic `{other}`"))),
        }
    }
}

/// Replicate statistics and the observed value.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveCheck {
    pub stat: PredictiveStat,
    pub observed: f64,
    pub replicates: Vec<f64>,
}

impl PredictiveCheck {
    /// Share of replicates at or above the observed value.
    pub fn upper_tail(&self) -> f64 {
        self.replicates.iter().filter(|r| **r >= self.observed).count() as f64 / self.replicates.len() as f64
    }
}

fn check_reps(n_rep: usize, n_draws: usize) -> Result<()> {
    if n_rep < 100 {
        return Err(Error::param("n_rep", "need at least 100 replicates"));
    }
    if n_draws == 0 {
        return Err(Error::InsufficientData("no posterior draws".into()));
    }
    Ok(())
}

/// Replicate `r` uses draw `⌊r S / n_rep⌋`, so replicates spread evenly over the chain.
fn draw_index(r: usize, n_rep: usize, s: usize) -> usize {
    r * s / n_rep
}

/// Posterior predictive check for an unconditional fit: each replicate is a
/// dataset the size of `observed` drawn from one posterior mixture.
pub fn posterior_predictive_stats<R: Rng + ?Sized>(
    draws: &[MixtureDraw],
    observed: &[f64],
    stat: PredictiveStat,
    n_rep: usize,
    rng: &mut R,
) -> Result<PredictiveCheck> {
    check_reps(n_rep, draws.len())?;
    let mut buf = vec![0.0; observed.len()];
    let replicates = (0..n_rep)
        .map(|r| {
            let d = &draws[draw_index(r, n_rep, draws.len())];
            buf.iter_mut().for_each(|v| *v = d.sample_one(rng));
            stat.compute(&buf)
        })
        .collect();
    Ok(PredictiveCheck {
        stat,
        observed: stat.compute(observed),
        replicates,
    })
}

/// Posterior predictive check for a conditional fit, resampling at the
/// observed covariates.
pub fn posterior_predictive_stats_conditional<R: Rng + ?Sized>(
    fit: &FitResult,
    data: &GroupDataset,
    stat: PredictiveStat,
    n_rep: usize,
    rng: &mut R,
) -> Result<PredictiveCheck> {
    check_reps(n_rep, fit.draws.len())?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..data.len())
        .map(|i| design_rows(&fit.model.design, &data.record(i)).map(|(z, u, _)| (z, u)))
        .collect::<Result<_>>()?;
    let mut buf = vec![0.0; data.len()];
    let replicates = (0..n_rep)
        .map(|r| {
            let d = &fit.draws[draw_index(r, n_rep, fit.draws.len())];
            for (v, (z, u)) in buf.iter_mut().zip(&rows) {
                *v = d.mixture_for_rows(z, u).sample_one(rng);
            }
            stat.compute(&buf)
        })
        .collect();
    Ok(PredictiveCheck {
        stat,
        observed: stat.compute(&data.outcomes),
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_ensemble_summary() {
        let e = ScalarEnsemble::new("c", vec![1.7; 50]).unwrap();
        let s = e.summarize(0.95).unwrap();
        assert_eq!((s.median, s.lower, s.upper), (1.7, 1.7, 1.7));
    }

    #[test]
    fn percentile_rule_on_one_to_hundred() {
        let e = ScalarEnsemble::new("r", (1..=100).map(f64::from).collect()).unwrap();
        let s = e.summarize(0.95).unwrap();
        // positions 0.025·99 and 0.975·99 in the sorted draws
        assert!((s.lower - (1.0 + 2.475)).abs() < 1e-12);
        assert!((s.upper - (1.0 + 96.525)).abs() < 1e-12);
        assert_eq!(s.median, 50.5);
        assert!(e.summarize(1.0).is_err());
        assert!(ScalarEnsemble::new("x", vec![1.0]).is_err());
    }

    #[test]
    fn compare_prob_conventions() {
        let a = ScalarEnsemble::new("a", vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(compare_prob(&a, &a).unwrap(), 0.0);
        let b = ScalarEnsemble::new("b", vec![2.0, 3.0, 4.0]).unwrap();
        assert_eq!(compare_prob(&b, &a).unwrap(), 1.0);
        let c = ScalarEnsemble::new("c", vec![1.0, 2.0]).unwrap();
        assert!(compare_prob(&a, &c).is_err());

        let mut rng = RngStream::new(11, 0);
        let n = 100_000;
        let x = ScalarEnsemble::new("x", (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let y = ScalarEnsemble::new("y", (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        assert!((compare_prob(&x, &y).unwrap() - 0.5).abs() < 0.01);
    }

    #[test]
    fn identical_groups_give_one() {
        let d = vec![MixtureDraw::new(vec![0.4, 0.6], vec![-1.0, 1.5], vec![1.0, 0.5]).unwrap(); 4];
        let g = EvaluationGrid::new(-10.0, 10.0, 1001).unwrap();
        let e = unl_ensemble(&[&d, &d, &d], &g, 0.01).unwrap();
        assert!(e.draws.iter().all(|v| (v - 1.0).abs() < 1e-6));
        let y = yi3_ensemble([&d, &d, &d], &g).unwrap();
        assert!(y.draws.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn degenerate_draw_reproduces_reference_unl() {
        let g = EvaluationGrid::new(-10.0, 10.0, 2001).unwrap();
        let one = |m: f64| vec![MixtureDraw::single(m, 1.0).unwrap(); 2];
        let (a, b, c) = (one(-3.25), one(0.0), one(3.25));
        let e = unl_ensemble(&[&a, &b, &c], &g, 0.01).unwrap();
        assert!((e.draws[0] - 2.792).abs() < 0.005);
        let y = yi3_ensemble([&a, &b, &c], &g).unwrap();
        assert!((y.draws[0] - 2.792).abs() < 0.005);
        assert!(y.draws[0] <= e.draws[0] + 1e-6);
        let short = one(0.0)[..1].to_vec();
        assert!(unl_ensemble(&[&a, &b, &short], &g, 0.01).is_err());
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let d = vec![MixtureDraw::single(0.0, 1.0).unwrap(); 3];
        let g = EvaluationGrid::new(-1.5, 1.5, 301).unwrap();
        assert!(matches!(
            unl_ensemble(&[&d, &d, &d], &g, 0.01),
            Err(Error::Normalization { .. })
        ));
    }

    fn normal_chain(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 3);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn iid_diagnostics() {
        let mut ok = 0;
        for seed in 0..100 {
            let c = normal_chain(10_000, seed);
            if geweke(&c).unwrap().abs() < 3.0 {
                ok += 1;
            }
            if seed < 10 {
                let e = ess(&c).unwrap();
                assert!((e / 10_000.0 - 1.0).abs() < 0.15, "{e}");
            }
        }
        assert!(ok >= 99, "{ok}");
    }

    #[test]
    fn ar1_ess() {
        let rho: f64 = 0.9;
        let mut rng = RngStream::new(5, 3);
        let n = 20_000;
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = rho * x[t - 1] + (1.0 - rho * rho).sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        let target = n as f64 * (1.0 - rho) / (1.0 + rho);
        let e = ess(&x).unwrap();
        assert!((e / target - 1.0).abs() < 0.3, "{e} vs {target}");
    }

    #[test]
    fn trend_is_flagged() {
        let c: Vec<f64> = (0..1000).map(|t| 1.0 + t as f64 * 0.01 + 0.1 * (t as f64).sin()).collect();
        assert!(geweke(&c).unwrap().abs() > 3.0);
        assert!(matches!(ess(&[2.0; 200]), Err(Error::DegenerateData(_))));
        assert!(ess(&[1.0; 50]).is_err());
    }

    #[test]
    fn predictive_replicates() {
        let d = vec![MixtureDraw::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(); 10];
        let obs = normal_chain(200, 1);
        let mut rng = RngStream::new(2, 0);
        let pc = posterior_predictive_stats(&d, &obs, PredictiveStat::Skewness, 400, &mut rng).unwrap();
        assert_eq!(pc.replicates.len(), 400);
        let m = pc.replicates.iter().sum::<f64>() / 400.0;
        assert!(m.abs() < 0.05, "{m}");
        assert!(posterior_predictive_stats(&d, &obs, PredictiveStat::Kurtosis, 99, &mut rng).is_err());
    }

    #[test]
    fn sample_moments_reference() {
        let y = [1.0, 2.0, 3.0, 10.0];
        // m2 = 12.5, m3 = 45, m4 = 348.5 about mean 4
        assert!((PredictiveStat::Skewness.compute(&y) - 45.0 / 12.5f64.powf(1.5)).abs() < 1e-12);
        assert!((PredictiveStat::Kurtosis.compute(&y) - (348.5 / 156.25 - 3.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn summary_is_ordered(v in proptest::collection::vec(-100.0f64..100.0, 2..200), level in 0.01f64..0.99) {
            let e = ScalarEnsemble::new("p", v.clone()).unwrap();
            let s = e.summarize(level).unwrap();
            prop_assert!(s.lower <= s.median && s.median <= s.upper);
            let mut rev = v;
            rev.reverse();
            let r = ScalarEnsemble::new("p", rev).unwrap().summarize(level).unwrap();
            prop_assert_eq!(r.median, s.median);
        }

        #[test]
        fn compare_prob_complements(v in proptest::collection::vec(-1.0f64..1.0, 2..100)) {
            let a = ScalarEnsemble::new("a", v.clone()).unwrap();
            let b = ScalarEnsemble::new("b", v.iter().rev().map(|x| x + 1e-3).collect()).unwrap();
            if a.draws.iter().zip(&b.draws).all(|(x, y)| x != y) {
                prop_assert!((compare_prob(&a, &b).unwrap() + compare_prob(&b, &a).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
}
