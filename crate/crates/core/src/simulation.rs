//! Simulation scenarios, their true underlap values, data generation and
//! the replicate study runner.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateColumn, CovariateRecord, GroupDataset};
use crate::densities::DensitySpec;
use crate::design::EffectSpec;
use crate::dpm::{fit_dpm, DpmHyper, McmcSettings};
use crate::error::{Error, Result};
use crate::lsbp::{fit_lsbp, select_design, standard_candidates, FitResult, LsbpHyper};
use crate::measures::{unl, GriddedDensity};
use crate::numerics::{EvaluationGrid, RngStream, StreamTag, DEFAULT_GRID_PADDING, DEFAULT_GRID_POINTS};
use crate::posterior::{covariate_unl_ensemble, unl_ensemble, Summary};

/// Points used for every true-value integration.
pub const TRUTH_GRID_POINTS: usize = 2001;

/// Name of the covariate in conditional scenarios.
pub const COVARIATE: &str = "x";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    I,
    II,
    III,
}

/// Separation level of an unconditional scenario, from well separated to
/// heavily overlapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Separation {
    High,
    Mid,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    Unconditional(Family, Separation),
    Conditional(Family),
}

impl ScenarioId {
    pub fn all() -> Vec<ScenarioId> {
        let mut out = Vec::new();
        for f in [Family::I, Family::II, Family::III] {
            for s in [Separation::High, Separation::Mid, Separation::Low] {
                out.push(ScenarioId::Unconditional(f, s));
            }
        }
        out.extend([Family::I, Family::II, Family::III].map(ScenarioId::Conditional));
        out
    }

    pub fn is_conditional(&self) -> bool {
        matches!(self, ScenarioId::Conditional(_))
    }

    /// The tabulated true UNL of an unconditional scenario.
    pub fn tabulated_unl(&self) -> Option<f64> {
        use Family::*;
        use Separation::*;
        match *self {
            ScenarioId::Unconditional(f, s) => Some(match (f, s) {
                (I, High) => 2.792,
                (I, Mid) => 1.919,
                (I, Low) => 1.139,
                (II, High) => 2.527,
                (II, Mid) => 1.855,
                (II, Low) => 1.191,
                (III, High) => 2.508,
                (III, Mid) => 1.933,
                (III, Low) => 1.143,
            }),
            ScenarioId::Conditional(_) => None,
        }
    }

    /// Group densities of an unconditional scenario.
    pub fn densities(&self) -> Result<[DensitySpec; 3]> {
        use Family::*;
        use Separation::*;
        let n = DensitySpec::normal;
        let sn = DensitySpec::skew_normal;
        let g = DensitySpec::gamma;
        let mix = |a: f64, b: f64| DensitySpec::normal_mixture(vec![0.5, 0.5], vec![a, b], vec![1.0, 1.0]);
        match *self {
            ScenarioId::Unconditional(f, s) => Ok(match (f, s) {
                (I, High) => [n(-3.25, 1.0)?, n(0.0, 1.0)?, n(3.25, 1.0)?],
                (I, Mid) => [n(-1.3, 1.0)?, n(0.0, 1.0)?, n(1.15, 1.0)?],
                (I, Low) => [n(-0.2, 1.0)?, n(0.0, 1.0)?, n(0.15, 1.0)?],
                (II, High) => [g(3.0, 1.0)?, sn(6.0, 2.0, 5.0)?, sn(8.0, 2.0, 5.0)?],
                (II, Mid) => [g(3.0, 1.0)?, sn(2.0, 2.5, 5.0)?, sn(4.25, 2.0, 5.0)?],
                (II, Low) => [g(1.5, 1.0)?, sn(0.1, 2.0, 5.0)?, sn(0.25, 2.0, 5.0)?],
                (III, High) => [mix(-6.0, -3.0)?, mix(0.5, 3.25)?, mix(3.5, 6.25)?],
                (III, Mid) => [mix(-2.25, 0.5)?, mix(2.75, 5.5)?, mix(3.0, 5.75)?],
                (III, Low) => [mix(0.15, 2.75)?, mix(0.5, 3.0)?, mix(0.85, 3.15)?],
            }),
            ScenarioId::Conditional(_) => Err(Error::UnknownScenario(format!(
                "{self} is conditional; use conditional_densities"
            ))),
        }
    }

    /// Group densities of a conditional scenario at covariate value `x`.
    pub fn conditional_densities(&self, x: f64) -> Result<[DensitySpec; 3]> {
        let n = DensitySpec::normal;
        let pi = std::f64::consts::PI;
        match *self {
            ScenarioId::Conditional(Family::I) => Ok([
                n(0.25 + x, 1.0)?,
                n(1.0 + 1.5 * x, 1.5)?,
                n(2.5 + 4.0 * x, 1.75)?,
            ]),
            ScenarioId::Conditional(Family::II) => Ok([
                n(-0.75 + (pi * x + 1.25).sin(), 0.5)?,
                n(0.75 + (pi * x).sin(), 1.25 + x * x)?,
                n(2.35 + x * x, 1.0)?,
            ]),
            ScenarioId::Conditional(Family::III) => {
                let w = 1.0 / (1.0 + (-x).exp());
                Ok([
                    n(-0.75 + (pi * x + 1.25).sin(), 1.0)?,
                    DensitySpec::normal_mixture(vec![w, 1.0 - w], vec![x, x * x], vec![0.5, 0.75])?,
                    DensitySpec::gamma(3.0 + x * x, 0.5 + x.exp())?,
                ])
            }
            ScenarioId::Unconditional(..) => Err(Error::UnknownScenario(format!(
                "{self} is unconditional; use densities"
            ))),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = |x: Family| match x {
            Family::I => "I",
            Family::II => "II",
            Family::III => "III",
        };
        match self {
            ScenarioId::Unconditional(a, s) => {
                let s = match s {
                    Separation::High => "high",
                    Separation::Mid => "mid",
                    Separation::Low => "low",
                };
                write!(f, "U-{}/{s}", fam(*a))
            }
            ScenarioId::Conditional(a) => write!(f, "C-{}", fam(*a)),
        }
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownScenario(s.to_string());
        let fam = |x: &str| match x {
            "I" => Ok(Family::I),
            "II" => Ok(Family::II),
            "III" => Ok(Family::III),
            _ => Err(unknown()),
        };
        if let Some(rest) = s.strip_prefix("U-") {
            let (f, sep) = rest.split_once('/').ok_or_else(unknown)?;
            let sep = match sep {
                "high" => Separation::High,
                "mid" => Separation::Mid,
                "low" => Separation::Low,
                _ => return Err(unknown()),
            };
            Ok(ScenarioId::Unconditional(fam(f)?, sep))
        } else if let Some(rest) = s.strip_prefix("C-") {
            Ok(ScenarioId::Conditional(fam(rest)?))
        } else {
            Err(unknown())
        }
    }
}

impl Serialize for ScenarioId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScenarioId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A scenario together with sample sizes, replicate count and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub sizes: [usize; 3],
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_replicates() -> usize {
    20
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId, sizes: [usize; 3], replicates: usize, seed: u64) -> Self {
        Self {
            id,
            sizes,
            replicates,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.contains(&0) {
            return Err(Error::param("sizes", "every group needs at least one observation"));
        }
        if self.replicates == 0 {
            return Err(Error::param("replicates", "need at least one replicate"));
        }
        Ok(())
    }
}

/// UNL of three densities on a grid spanning eight standard deviations
/// either side of every mean.
fn unl_of_specs(specs: &[DensitySpec; 3]) -> Result<f64> {
    let lo = specs.iter().map(|d| d.mean() - 8.0 * d.sd()).fold(f64::INFINITY, f64::min);
    let hi = specs.iter().map(|d| d.mean() + 8.0 * d.sd()).fold(f64::NEG_INFINITY, f64::max);
    let grid = EvaluationGrid::new(lo, hi, TRUTH_GRID_POINTS)?;
    let dens: Vec<GriddedDensity> = specs
        .iter()
        .map(|d| GriddedDensity::from_fn(grid, |y| d.pdf(y)))
        .collect::<Result<_>>()?;
    unl(&[&dens[0], &dens[1], &dens[2]])
}

/// True UNL of an unconditional scenario, integrated from its densities.
pub fn computed_unl(id: ScenarioId) -> Result<f64> {
    unl_of_specs(&id.densities()?)
}

/// True covariate-specific UNL of a conditional scenario at `x`.
pub fn conditional_truth(id: ScenarioId, x: f64) -> Result<f64> {
    unl_of_specs(&id.conditional_densities(x)?)
}

/// True values: the tabulated UNL for unconditional scenarios (one entry) or
/// the UNL at each covariate value for conditional ones.
pub fn scenario_truth(id: ScenarioId, xs: &[f64]) -> Result<Vec<f64>> {
    match id.tabulated_unl() {
        Some(v) => Ok(vec![v]),
        None => xs.iter().map(|&x| conditional_truth(id, x)).collect(),
    }
}

/// Three datasets for replicate `replicate`. Group `g` draws from stream
/// `(seed, replicate, g)`, so replicates and groups are independent.
pub fn generate(spec: &ScenarioSpec, replicate: usize) -> Result<[GroupDataset; 3]> {
    spec.validate()?;
    let make = |g: usize| -> Result<GroupDataset> {
        let mut rng = RngStream::derive(spec.seed, StreamTag::DataGeneration, &[replicate as u64, g as u64]);
        let label = format!("g{}", g + 1);
        let n = spec.sizes[g];
        if spec.id.is_conditional() {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = x
                .iter()
                .map(|&xi| Ok(spec.id.conditional_densities(xi)?[g].sample_one(&mut rng)))
                .collect::<Result<Vec<f64>>>()?;
            GroupDataset::new(label, y)?.with_covariate(COVARIATE, CovariateColumn::Continuous(x))
        } else {
            GroupDataset::new(label, spec.id.densities()?[g].sample(n, &mut rng)?)
        }
    };
    Ok([make(0)?, make(1)?, make(2)?])
}

/// Interval estimates at each evaluation point (one point when unconditional).
pub trait ReplicateEstimator: Sync {
    fn estimate(&self, data: &[GroupDataset; 3], replicate: usize) -> Result<Vec<Summary>>;
}

/// Three independent DPM fits summarized by the UNL ensemble.
#[derive(Debug, Clone)]
pub struct DpmEstimator {
    pub hyper: DpmHyper,
    pub mcmc: McmcSettings,
    pub grid_points: usize,
    pub padding: f64,
    pub tolerance: f64,
    pub level: f64,
    pub seed: u64,
}

impl DpmEstimator {
    pub fn new(mcmc: McmcSettings, seed: u64) -> Self {
        Self {
            hyper: DpmHyper::default(),
            mcmc,
            grid_points: DEFAULT_GRID_POINTS,
            padding: DEFAULT_GRID_PADDING,
            tolerance: crate::measures::DEFAULT_NORM_TOLERANCE,
            level: 0.95,
            seed,
        }
    }
}

impl ReplicateEstimator for DpmEstimator {
    fn estimate(&self, data: &[GroupDataset; 3], replicate: usize) -> Result<Vec<Summary>> {
        let draws = (0..3)
            .into_par_iter()
            .map(|g| {
                let mut rng = RngStream::derive(self.seed, StreamTag::Estimation, &[replicate as u64, g as u64]);
                fit_dpm(&data[g].outcomes, &self.hyper, &self.mcmc, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let samples: Vec<&[f64]> = data.iter().map(|d| d.outcomes.as_slice()).collect();
        let grid = EvaluationGrid::covering(&samples, self.grid_points, self.padding, false)?;
        let e = unl_ensemble(&[&draws[0], &draws[1], &draws[2]], &grid, self.tolerance)?;
        Ok(vec![e.summarize(self.level)?])
    }
}

/// How the conditional estimator chooses its effect specification.
#[derive(Debug, Clone)]
pub enum DesignChoice {
    Fixed(EffectSpec),
    /// WAIC search over linear and spline candidates with up to this many interior knots.
    Select { max_knots: usize, mcmc: McmcSettings },
}

/// Three conditional fits summarized by the UNL curve over `xs`.
#[derive(Debug, Clone)]
pub struct LsbpEstimator {
    pub hyper: LsbpHyper,
    pub mcmc: McmcSettings,
    pub design: DesignChoice,
    pub xs: Vec<f64>,
    pub grid_points: usize,
    pub padding: f64,
    pub tolerance: f64,
    pub level: f64,
    pub seed: u64,
}

impl LsbpEstimator {
    pub fn new(mcmc: McmcSettings, design: DesignChoice, xs: Vec<f64>, seed: u64) -> Self {
        Self {
            hyper: LsbpHyper::default(),
            mcmc,
            design,
            xs,
            grid_points: DEFAULT_GRID_POINTS,
            padding: DEFAULT_GRID_PADDING,
            tolerance: crate::measures::DEFAULT_NORM_TOLERANCE,
            level: 0.95,
            seed,
        }
    }

    fn fit_group(&self, data: &GroupDataset, replicate: usize, g: usize) -> Result<FitResult> {
        let spec = match &self.design {
            DesignChoice::Fixed(s) => s.clone(),
            DesignChoice::Select { max_knots, mcmc } => {
                let cands = standard_candidates(COVARIATE, *max_knots);
                let stream = (replicate as u64) << 8 | g as u64;
                select_design(data, &cands, &self.hyper, mcmc, self.seed, stream)?
                    .spec()
                    .clone()
            }
        };
        let mut rng = RngStream::derive(self.seed, StreamTag::Estimation, &[replicate as u64, g as u64]);
        fit_lsbp(data, &spec, &self.hyper, &self.mcmc, &mut rng)
    }
}

impl ReplicateEstimator for LsbpEstimator {
    fn estimate(&self, data: &[GroupDataset; 3], replicate: usize) -> Result<Vec<Summary>> {
        let fits = (0..3)
            .into_par_iter()
            .map(|g| self.fit_group(&data[g], replicate, g))
            .collect::<Result<Vec<_>>>()?;
        let samples: Vec<&[f64]> = data.iter().map(|d| d.outcomes.as_slice()).collect();
        let grid = EvaluationGrid::covering(&samples, self.grid_points, self.padding, false)?;
        let records: Vec<CovariateRecord> = self.xs.iter().map(|&x| CovariateRecord::continuous(COVARIATE, x)).collect();
        let curve = covariate_unl_ensemble(&[&fits[0], &fits[1], &fits[2]], &records, &grid, self.tolerance)?;
        curve.summarize(self.level)
    }
}

/// Operating characteristics at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub x: Option<f64>,
    pub truth: f64,
    pub mean_median: f64,
    pub bias: f64,
    pub coverage: f64,
    pub mean_width: f64,
}

/// Replicate study results. Failed replicates are listed and excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: ScenarioId,
    pub sizes: [usize; 3],
    pub rows: Vec<CoverageRow>,
    /// Per successful replicate: its index and its summaries.
    pub estimates: Vec<(usize, Vec<Summary>)>,
    pub failures: Vec<(usize, String)>,
    /// Absolute error of the posterior median, averaged over points then replicates.
    pub mean_abs_error: f64,
}

/// Generate and fit every replicate (in parallel), then compare against the truth.
/// `xs` are the covariate values for conditional scenarios and ignored otherwise.
pub fn run_replicates(spec: &ScenarioSpec, xs: &[f64], estimator: &dyn ReplicateEstimator) -> Result<CoverageReport> {
    spec.validate()?;
    let truth = scenario_truth(spec.id, xs)?;
    let results: Vec<Result<Vec<Summary>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let data = generate(spec, r)?;
            let est = estimator.estimate(&data, r)?;
            if est.len() != truth.len() {
                return Err(Error::Dimension(format!(
                    "estimator returned {} points, truth has {}",
                    est.len(),
                    truth.len()
                )));
            }
            Ok(est)
        })
        .collect();
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(e) => estimates.push((r, e)),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    let k = estimates.len() as f64;
    let rows = truth
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let col = estimates.iter().map(|(_, e)| e[j]);
            let mean_median = col.clone().map(|s| s.median).sum::<f64>() / k;
            CoverageRow {
                x: spec.id.is_conditional().then(|| xs[j]),
                truth: t,
                mean_median,
                bias: mean_median - t,
                coverage: col.clone().filter(|s| s.lower <= t && t <= s.upper).count() as f64 / k,
                mean_width: col.map(|s| s.upper - s.lower).sum::<f64>() / k,
            }
        })
        .collect();
    let mean_abs_error = estimates
        .iter()
        .map(|(_, e)| e.iter().zip(&truth).map(|(s, t)| (s.median - t).abs()).sum::<f64>() / truth.len() as f64)
        .sum::<f64>()
        / k;
    Ok(CoverageReport {
        scenario: spec.id,
        sizes: spec.sizes,
        rows,
        estimates,
        failures,
        mean_abs_error,
    })
}
