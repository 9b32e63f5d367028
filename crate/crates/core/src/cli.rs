//! The `underlap` command-line tool.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::data::{CovariateColumn, CovariateRecord, GroupDataset};
use crate::densities::DensitySpec;
use crate::design::EffectSpec;
use crate::dpm::{fit_dpm, McmcSettings};
use crate::error::{Error, Result};
use crate::io::{
    conditional_draws_table, config_hash, ensemble_table, fmt_num, mixture_draws_table, read_dataset, read_ensemble,
    ColumnKind, DataConfig, DatasetSchema, Provenance, RunConfig, Table,
};
use crate::lsbp::{fit_lsbp, select_design, standard_candidates, FitResult};
use crate::measures::{
    classify_intersections, ovl2, ovl3, unl, vus_gridded, yi3, GriddedCdf, GriddedDensity, IntersectionKind,
};
use crate::mixture::MixtureDraw;
use crate::numerics::{cumulative_simpson, EvaluationGrid, RngStream, StreamTag};
use crate::posterior::{
    covariate_unl_ensemble, ess, geweke, posterior_predictive_stats, posterior_predictive_stats_conditional,
    unl_ensemble, yi3_ensemble, PredictiveStat, ScalarEnsemble,
};
use crate::simulation::{
    run_replicates, DesignChoice, DpmEstimator, LsbpEstimator, ScenarioId, ScenarioSpec, COVARIATE,
};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "UNDERLAP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "underlap", version, about = "Underlap coefficient estimation for multi-class biomarkers")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// UNL, OVL, YI3, VUS and density intersections for given densities.
    Measures(MeasuresArgs),
    /// Unconditional fit of every group with a DP mixture.
    Fit(FitArgs),
    /// Covariate-dependent fit and the UNL curve over a covariate grid.
    FitCov(FitCovArgs),
    /// Replicate study of a simulation scenario.
    Simulate(SimulateArgs),
    /// Posterior predictive skewness or kurtosis.
    Ppc(PpcArgs),
    /// Posterior probability that one ensemble exceeds another.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct MeasuresArgs {
    /// Analytic density, e.g. `normal:0,1`, `gamma:3,1`, `skew_normal:6,2,5`,
    /// `mixture:0.5,-6,1;0.5,-3,1`. Give two or three, in class order.
    #[arg(long = "density", value_name = "SPEC")]
    pub densities: Vec<String>,

    /// CSV of gridded densities with columns `y,f1,f2[,f3]` on an equally spaced grid.
    #[arg(long, conflicts_with = "densities")]
    pub gridded: Option<PathBuf>,

    /// Grid points for analytic densities (odd).
    #[arg(long, default_value_t = 2001)]
    pub points: usize,

    #[arg(long, requires = "upper")]
    pub lower: Option<f64>,

    #[arg(long, requires = "lower")]
    pub upper: Option<f64>,

    /// Density normalization tolerance.
    #[arg(long, default_value_t = crate::measures::DEFAULT_NORM_TOLERANCE)]
    pub tolerance: f64,

    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Data CSV (overrides the configuration's `data.path`).
    #[arg(long)]
    pub data: Option<PathBuf>,

    #[arg(long)]
    pub group_col: Option<String>,

    #[arg(long)]
    pub outcome_col: Option<String>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub burn: Option<usize>,

    #[arg(long)]
    pub save: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitCovArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Continuous covariate the UNL curve runs over.
    #[arg(long, default_value = COVARIATE)]
    pub covariate: String,

    /// Effect specification, e.g. `weights~x;means~bs(x,K=2)`.
    #[arg(long, conflicts_with = "select_design")]
    pub effects: Option<String>,

    /// Choose each group's effect specification by WAIC.
    #[arg(long)]
    pub select_design: bool,

    /// Largest number of interior knots tried by `--select-design`.
    #[arg(long, default_value_t = 4)]
    pub max_knots: usize,

    /// Covariate grid as `LOWER:UPPER:POINTS` (default: data range, 41 points).
    #[arg(long, allow_hyphen_values = true)]
    pub x_grid: Option<String>,

    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario, e.g. `U-I`, `U-II/low` or `C-III`.
    pub scenario: String,

    /// Separation for unconditional scenarios: high, mid or low.
    pub separation: Option<String>,

    /// Common group size.
    #[arg(long, default_value_t = 200, conflicts_with = "sizes")]
    pub n: usize,

    /// Group sizes as `n1,n2,n3`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub sizes: Option<Vec<usize>>,

    #[arg(long, default_value_t = 20)]
    pub reps: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, default_value_t = 2000)]
    pub burn: usize,

    #[arg(long, default_value_t = 5000)]
    pub save: usize,

    /// Conditional scenarios: covariate grid as `LOWER:UPPER:POINTS`.
    #[arg(long, default_value = "-0.8:0.8:17", allow_hyphen_values = true)]
    pub x_grid: String,

    /// Conditional scenarios: effect specification (default linear in x).
    #[arg(long, conflicts_with = "select_design")]
    pub effects: Option<String>,

    #[arg(long)]
    pub select_design: bool,

    #[arg(long, short)]
    pub out: Option<PathBuf>,

    /// Grid padding as a fraction of the pooled data range.
    #[arg(long, default_value_t = crate::numerics::DEFAULT_GRID_PADDING)]
    pub padding: f64,

    /// Largest allowed deviation of the mean in-grid mass of a group's draws from 1.
    #[arg(long, default_value_t = crate::measures::DEFAULT_NORM_TOLERANCE)]
    pub tolerance: f64,

    /// Also write every replicate's summaries here.
    #[arg(long)]
    pub replicates_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PpcArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// skewness or kurtosis.
    #[arg(long, default_value = "skewness")]
    pub stat: String,

    #[arg(long, default_value_t = 500)]
    pub n_rep: usize,

    /// Fit conditionally on this continuous covariate.
    #[arg(long)]
    pub covariate: Option<String>,

    #[arg(long, requires = "covariate")]
    pub effects: Option<String>,

    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,

    /// Ensemble label to read from the first file.
    #[arg(long)]
    pub label_a: Option<String>,

    #[arg(long)]
    pub label_b: Option<String>,
}

/// Parse arguments, configure threads and logging, and run.
pub fn main_with_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                return Err(Error::config("arguments", e.to_string().trim_end().to_string()));
            }
            e.print()?;
            return Ok(());
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    run(cli.command)
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Measures(a) => measures(a),
        Command::Fit(a) => fit(a),
        Command::FitCov(a) => fit_cov(a),
        Command::Simulate(a) => simulate(a),
        Command::Ppc(a) => ppc(a),
        Command::Compare(a) => compare(a),
    }
}

fn measures(a: MeasuresArgs) -> Result<()> {
    let (dens, cdfs, key) = if let Some(path) = &a.gridded {
        gridded_inputs(path, a.tolerance)?
    } else {
        analytic_inputs(&a)?
    };
    let h = dens.len();
    let refs: Vec<&GriddedDensity> = dens.iter().collect();
    let mut t = Table::new(["quantity", "value", "detail"]);
    t.push(vec!["unl".into(), fmt_num(unl(&refs)?), String::new()]);
    for i in 0..h {
        for j in i + 1..h {
            t.push(vec![
                "ovl2".into(),
                fmt_num(ovl2(&dens[i], &dens[j])?),
                format!("{}-{}", i + 1, j + 1),
            ]);
        }
    }
    if h == 3 {
        t.push(vec!["ovl3".into(), fmt_num(ovl3(&dens[0], &dens[1], &dens[2])?), String::new()]);
        let y = yi3(&cdfs[0], &cdfs[1], &cdfs[2])?;
        t.push(vec!["yi3".into(), fmt_num(y.value), String::new()]);
        t.push(vec!["yi3_c1".into(), fmt_num(y.c1), String::new()]);
        t.push(vec!["yi3_c2".into(), fmt_num(y.c2), String::new()]);
        t.push(vec![
            "vus".into(),
            fmt_num(vus_gridded(&cdfs[0], &dens[1], &cdfs[2])?),
            String::new(),
        ]);
        for p in classify_intersections(&dens[0], &dens[1], &dens[2])? {
            let kind = match p.kind {
                IntersectionKind::Outer => "outer",
                IntersectionKind::Inner => "inner",
            };
            t.push(vec![
                "intersection".into(),
                fmt_num(p.location),
                format!("{kind} {}-{}", p.pair.0 + 1, p.pair.1 + 1),
            ]);
        }
    }
    let prov = Provenance {
        seed: None,
        config_hash: config_hash(&key),
    };
    t.write(a.out.as_deref(), &prov)
}

type MeasureInputs = (Vec<GriddedDensity>, Vec<GriddedCdf>, String);

fn analytic_inputs(a: &MeasuresArgs) -> Result<MeasureInputs> {
    if !(2..=3).contains(&a.densities.len()) {
        return Err(Error::config("density", "give two or three densities (or --gridded)"));
    }
    let specs: Vec<DensitySpec> = a.densities.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let grid = match (a.lower, a.upper) {
        (Some(l), Some(u)) => EvaluationGrid::new(l, u, a.points)?,
        _ => {
            let (lo, hi) = specs.iter().map(DensitySpec::effective_support).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(l, h), (a, b)| (l.min(a), h.max(b)),
            );
            EvaluationGrid::new(lo, hi, a.points)?
        }
    };
    let dens = specs
        .iter()
        .map(|d| GriddedDensity::with_tolerance(grid, grid.map(|y| d.pdf(y)), a.tolerance))
        .collect::<Result<_>>()?;
    let cdfs = specs
        .iter()
        .map(|d| GriddedCdf::from_fn(grid, |y| d.cdf(y)))
        .collect::<Result<_>>()?;
    let key = format!("{:?} {grid:?} {}", a.densities, a.tolerance);
    Ok((dens, cdfs, key))
}

fn gridded_inputs(path: &Path, tolerance: f64) -> Result<MeasureInputs> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let h = headers.len() - 1;
    if headers.get(0) != Some("y") || !(2..=3).contains(&h) {
        return Err(Error::config("gridded", "expected columns y,f1,f2[,f3]"));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); h + 1];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (j, col) in cols.iter_mut().enumerate() {
            let v: f64 = rec.get(j).unwrap_or("").parse().map_err(|_| Error::Data {
                row: k + 2,
                column: headers[j].to_string(),
                reason: "not a number".into(),
            })?;
            col.push(v);
        }
    }
    let y = &cols[0];
    if y.len() < 3 {
        return Err(Error::InvalidGrid("need at least three grid points".into()));
    }
    let grid = EvaluationGrid::new(y[0], y[y.len() - 1], y.len())?;
    if y.iter().enumerate().any(|(i, v)| (v - grid.point(i)).abs() > 1e-9 * (1.0 + v.abs())) {
        return Err(Error::InvalidGrid("grid points must be equally spaced".into()));
    }
    let mut dens = Vec::new();
    let mut cdfs = Vec::new();
    for col in &cols[1..] {
        let d = GriddedDensity::with_tolerance(grid, col.clone(), tolerance)?;
        let c: Vec<f64> = cumulative_simpson(col, grid.spacing())?
            .into_iter()
            .map(|v| (v / d.integral()).clamp(0.0, 1.0))
            .collect();
        let mut c = c;
        for i in 1..c.len() {
            c[i] = c[i].max(c[i - 1]);
        }
        cdfs.push(GriddedCdf::new(grid, c)?);
        dens.push(d);
    }
    let key = format!("{} {:?}", path.display(), cols);
    Ok((dens, cdfs, key))
}

/// Configuration with command-line overrides applied, and the provenance
/// derived from it.
fn effective_config(d: &DataArgs) -> Result<(RunConfig, Provenance)> {
    let mut cfg = match &d.config {
        Some(p) => RunConfig::load(p)?.0,
        None => RunConfig::default(),
    };
    if let Some(s) = d.seed {
        cfg.seed = s;
    }
    if let Some(b) = d.burn {
        cfg.mcmc.burn = b;
    }
    if let Some(s) = d.save {
        cfg.mcmc.save = s;
    }
    let mut data = cfg.data.clone().unwrap_or(DataConfig {
        path: PathBuf::new(),
        group: "group".into(),
        outcome: "outcome".into(),
        continuous: Vec::new(),
        categorical: Vec::new(),
    });
    if let Some(p) = &d.data {
        data.path = p.clone();
    }
    if let Some(g) = &d.group_col {
        data.group = g.clone();
    }
    if let Some(o) = &d.outcome_col {
        data.outcome = o.clone();
    }
    if data.path.as_os_str().is_empty() {
        return Err(Error::config("data.path", "no data file given (use --data or the configuration)"));
    }
    cfg.data = Some(data);
    cfg.validate()?;
    let prov = Provenance {
        seed: Some(cfg.seed),
        config_hash: config_hash(&cfg.to_toml()),
    };
    Ok((cfg, prov))
}

fn load_groups(cfg: &RunConfig, extra: &[String]) -> Result<Vec<GroupDataset>> {
    let data = cfg.data.as_ref().expect("effective config has data");
    let mut schema: DatasetSchema = data.schema();
    for c in extra {
        if !schema.covariates.iter().any(|(n, _)| n == c) {
            schema = schema.with_covariate(c.clone(), ColumnKind::Continuous);
        }
    }
    let groups = read_dataset(&data.path, &schema)?;
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two groups, found {}",
            groups.len()
        )));
    }
    Ok(groups)
}

fn outcome_grid(groups: &[GroupDataset], cfg: &RunConfig, include_zero: bool) -> Result<EvaluationGrid> {
    let samples: Vec<&[f64]> = groups.iter().map(|g| g.outcomes.as_slice()).collect();
    EvaluationGrid::covering(&samples, cfg.grid.points, cfg.grid.padding, include_zero)
}

fn summary_row(e: &ScalarEnsemble, level: f64) -> Result<Vec<String>> {
    let s = e.summarize(level)?;
    Ok(vec![
        e.label.clone(),
        fmt_num(s.median),
        fmt_num(s.lower),
        fmt_num(s.upper),
        fmt_num(s.mean),
    ])
}

fn diagnostics_rows(t: &mut Table, e: &ScalarEnsemble) {
    let g = geweke(&e.draws).map(fmt_num).unwrap_or_else(|_| "NA".into());
    let n = ess(&e.draws).map(fmt_num).unwrap_or_else(|_| "NA".into());
    t.push(vec![e.label.clone(), g, n]);
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let (cfg, prov) = effective_config(&a.data)?;
    let groups = load_groups(&cfg, &[])?;
    let draws: Vec<Vec<MixtureDraw>> = groups
        .par_iter()
        .enumerate()
        .map(|(g, d)| {
            let mut rng = RngStream::derive(cfg.seed, StreamTag::Chain, &[g as u64]);
            fit_dpm(&d.outcomes, cfg.dpm_for(&d.label), &cfg.mcmc, &mut rng)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&[MixtureDraw]> = draws.iter().map(Vec::as_slice).collect();
    let grid = outcome_grid(&groups, &cfg, false)?;
    let unl_e = unl_ensemble(&refs, &grid, cfg.grid.tolerance)?;
    let mut ensembles = vec![unl_e];
    if groups.len() == 3 {
        let cdf_grid = outcome_grid(&groups, &cfg, true)?;
        ensembles.push(yi3_ensemble([refs[0], refs[1], refs[2]], &cdf_grid)?);
    }

    let mut summary = Table::new(["label", "median", "lower", "upper", "mean"]);
    summary.notes.push(format!(
        "groups in class order: {}",
        groups.iter().map(|g| g.label.as_str()).collect::<Vec<_>>().join(",")
    ));
    let mut diag = Table::new(["chain", "geweke_z", "ess"]);
    for e in &ensembles {
        summary.push(summary_row(e, cfg.level)?);
        diagnostics_rows(&mut diag, e);
    }
    let labelled: Vec<(&str, &[MixtureDraw])> = groups.iter().map(|g| g.label.as_str()).zip(refs).collect();
    create_dir(&a.out_dir)?;
    summary.write(Some(&a.out_dir.join("summary.csv")), &prov)?;
    ensemble_table(&ensembles.iter().collect::<Vec<_>>()).write(Some(&a.out_dir.join("ensemble.csv")), &prov)?;
    diag.write(Some(&a.out_dir.join("diagnostics.csv")), &prov)?;
    mixture_draws_table(&labelled).write(Some(&a.out_dir.join("draws.csv")), &prov)?;
    Ok(())
}

fn parse_x_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::config("x_grid", format!("expected LOWER:UPPER:POINTS, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(lo <= hi) || (n == 1 && lo != hi) {
        return Err(bad());
    }
    Ok((0..n)
        .map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect())
}

fn covariate_range(groups: &[GroupDataset], name: &str) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for g in groups {
        match g.covariate(name) {
            Some(CovariateColumn::Continuous(v)) => {
                for x in v {
                    lo = lo.min(*x);
                    hi = hi.max(*x);
                }
            }
            _ => return Err(Error::MissingColumn(name.to_string())),
        }
    }
    Ok((lo, hi))
}

/// Fit each group conditionally, choosing designs by WAIC when asked.
fn conditional_fits(
    groups: &[GroupDataset],
    cfg: &RunConfig,
    covariate: &str,
    fixed: Option<&EffectSpec>,
    select: Option<usize>,
) -> Result<Vec<(FitResult, Option<crate::lsbp::DesignSelection>)>> {
    groups
        .par_iter()
        .enumerate()
        .map(|(g, d)| {
            let hyper = cfg.lsbp_for(&d.label);
            if let Some(k) = select {
                let cands = standard_candidates(covariate, k);
                let sel = select_design(d, &cands, hyper, &cfg.mcmc, cfg.seed, g as u64)?;
                let fit = sel.fit.clone();
                return Ok((fit, Some(sel)));
            }
            let spec = match cfg.effects_for(&d.label)? {
                Some(s) if fixed.is_none() => s,
                _ => fixed.cloned().unwrap_or_else(|| EffectSpec::linear(covariate)),
            };
            let mut rng = RngStream::derive(cfg.seed, StreamTag::Chain, &[g as u64]);
            Ok((fit_lsbp(d, &spec, hyper, &cfg.mcmc, &mut rng)?, None))
        })
        .collect()
}

fn fit_cov(a: FitCovArgs) -> Result<()> {
    let (mut cfg, _) = effective_config(&a.data)?;
    if let Some(e) = &a.effects {
        e.parse::<EffectSpec>()?;
        cfg.effects = Some(e.clone());
    }
    let fixed: Option<EffectSpec> = a.effects.as_deref().map(str::parse).transpose()?;
    let prov = Provenance {
        seed: Some(cfg.seed),
        config_hash: config_hash(&format!(
            "{}covariate={} select={} max_knots={} x_grid={:?}",
            cfg.to_toml(),
            a.covariate,
            a.select_design,
            a.max_knots,
            a.x_grid
        )),
    };
    let groups = load_groups(&cfg, std::slice::from_ref(&a.covariate))?;
    let xs = match &a.x_grid {
        Some(s) => parse_x_grid(s)?,
        None => {
            let (lo, hi) = covariate_range(&groups, &a.covariate)?;
            parse_x_grid(&format!("{lo}:{hi}:41"))?
        }
    };
    let fits = conditional_fits(&groups, &cfg, &a.covariate, fixed.as_ref(), a.select_design.then_some(a.max_knots))?;
    let grid = outcome_grid(&groups, &cfg, false)?;
    let records: Vec<CovariateRecord> = xs.iter().map(|&x| CovariateRecord::continuous(a.covariate.clone(), x)).collect();
    let fit_refs: Vec<&FitResult> = fits.iter().map(|(f, _)| f).collect();
    let curve = covariate_unl_ensemble(&fit_refs, &records, &grid, cfg.grid.tolerance)?;

    let mut ct = Table::new([a.covariate.as_str(), "median", "lower", "upper", "mean"]);
    for (x, s) in xs.iter().zip(curve.summarize(cfg.level)?) {
        ct.push(vec![fmt_num(*x), fmt_num(s.median), fmt_num(s.lower), fmt_num(s.upper), fmt_num(s.mean)]);
    }
    let mut wt = Table::new(["group", "effects", "complexity", "waic", "lppd", "p_waic", "chosen"]);
    for (g, (fit, sel)) in groups.iter().zip(&fits) {
        match sel {
            Some(sel) => {
                for (j, c) in sel.candidates.iter().enumerate() {
                    wt.push(vec![
                        g.label.clone(),
                        c.spec.to_string(),
                        c.complexity.to_string(),
                        c.waic.map_or_else(|| "NA".into(), fmt_num),
                        if j == sel.chosen { fmt_num(fit.waic.lppd) } else { "NA".into() },
                        if j == sel.chosen { fmt_num(fit.waic.p_waic) } else { "NA".into() },
                        (j == sel.chosen).to_string(),
                    ]);
                }
            }
            None => wt.push(vec![
                g.label.clone(),
                fit.model.design.spec().to_string(),
                fit.model.design.complexity().to_string(),
                fmt_num(fit.waic.waic),
                fmt_num(fit.waic.lppd),
                fmt_num(fit.waic.p_waic),
                "true".into(),
            ]),
        }
    }
    create_dir(&a.out_dir)?;
    ct.write(Some(&a.out_dir.join("curve.csv")), &prov)?;
    wt.write(Some(&a.out_dir.join("waic.csv")), &prov)?;
    for (g, (fit, _)) in groups.iter().zip(&fits) {
        conditional_draws_table(&g.label, &fit.draws)?.write(Some(&a.out_dir.join(format!("draws_{}.csv", g.label))), &prov)?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let name = match &a.separation {
        Some(s) => format!("{}/{s}", a.scenario),
        None => a.scenario.clone(),
    };
    let id: ScenarioId = name.parse()?;
    let sizes = match &a.sizes {
        Some(v) => [v[0], v[1], v[2]],
        None => [a.n; 3],
    };
    let spec = ScenarioSpec::new(id, sizes, a.reps, a.seed);
    spec.validate()?;
    let mcmc = McmcSettings::new(a.burn, a.save);
    mcmc.validate()?;
    if !(a.tolerance > 0.0 && a.tolerance < 1.0) {
        return Err(Error::config("tolerance", "must lie in (0, 1)"));
    }
    let xs = parse_x_grid(&a.x_grid)?;
    let report = if id.is_conditional() {
        let design = if a.select_design {
            DesignChoice::Select { max_knots: 4, mcmc }
        } else {
            let e = match &a.effects {
                Some(s) => s.parse()?,
                None => EffectSpec::linear(COVARIATE),
            };
            DesignChoice::Fixed(e)
        };
        let mut est = LsbpEstimator::new(mcmc, design, xs.clone(), a.seed);
        est.padding = a.padding;
        est.tolerance = a.tolerance;
        run_replicates(&spec, &xs, &est)?
    } else {
        let mut est = DpmEstimator::new(mcmc, a.seed);
        est.padding = a.padding;
        est.tolerance = a.tolerance;
        run_replicates(&spec, &[], &est)?
    };
    let prov = Provenance {
        seed: Some(a.seed),
        config_hash: config_hash(&format!(
            "{id} {sizes:?} reps={} burn={} save={} x_grid={} effects={:?} select={} padding={} tolerance={}",
            a.reps, a.burn, a.save, a.x_grid, a.effects, a.select_design, a.padding, a.tolerance
        )),
    };
    let mut t = Table::new([
        "scenario",
        "n1",
        "n2",
        "n3",
        "x",
        "truth",
        "mean_median",
        "bias",
        "coverage",
        "mean_width",
        "replicates",
        "failed",
    ]);
    for r in &report.rows {
        t.push(vec![
            id.to_string(),
            sizes[0].to_string(),
            sizes[1].to_string(),
            sizes[2].to_string(),
            r.x.map_or_else(|| "NA".into(), fmt_num),
            fmt_num(r.truth),
            fmt_num(r.mean_median),
            fmt_num(r.bias),
            fmt_num(r.coverage),
            fmt_num(r.mean_width),
            report.estimates.len().to_string(),
            report.failures.len().to_string(),
        ]);
    }
    for (r, msg) in &report.failures {
        t.notes.push(format!("replicate {r} failed: {msg}"));
    }
    t.write(a.out.as_deref(), &prov)?;
    if let Some(p) = &a.replicates_out {
        let mut rt = Table::new(["replicate", "x", "median", "lower", "upper", "mean"]);
        for (r, est) in &report.estimates {
            for (j, s) in est.iter().enumerate() {
                rt.push(vec![
                    r.to_string(),
                    if id.is_conditional() { fmt_num(xs[j]) } else { "NA".into() },
                    fmt_num(s.median),
                    fmt_num(s.lower),
                    fmt_num(s.upper),
                    fmt_num(s.mean),
                ]);
            }
        }
        rt.write(Some(p), &prov)?;
    }
    Ok(())
}

fn ppc(a: PpcArgs) -> Result<()> {
    let stat: PredictiveStat = a.stat.parse()?;
    let (cfg, mut prov) = effective_config(&a.data)?;
    prov.config_hash = config_hash(&format!(
        "{} stat={} n_rep={} covariate={:?} effects={:?}",
        cfg.to_toml(),
        a.stat,
        a.n_rep,
        a.covariate,
        a.effects
    ));
    let extra: Vec<String> = a.covariate.iter().cloned().collect();
    let groups = load_groups(&cfg, &extra)?;
    let fixed: Option<EffectSpec> = a.effects.as_deref().map(str::parse).transpose()?;
    let checks = groups
        .par_iter()
        .enumerate()
        .map(|(g, d)| {
            let mut rng = RngStream::derive(cfg.seed, StreamTag::Chain, &[g as u64]);
            let mut prng = RngStream::derive(cfg.seed, StreamTag::Predictive, &[g as u64]);
            match &a.covariate {
                Some(c) => {
                    let spec = match (&fixed, cfg.effects_for(&d.label)?) {
                        (Some(s), _) => s.clone(),
                        (None, Some(s)) => s,
                        (None, None) => EffectSpec::linear(c),
                    };
                    let fit = fit_lsbp(d, &spec, cfg.lsbp_for(&d.label), &cfg.mcmc, &mut rng)?;
                    posterior_predictive_stats_conditional(&fit, d, stat, a.n_rep, &mut prng)
                }
                None => {
                    let draws = fit_dpm(&d.outcomes, cfg.dpm_for(&d.label), &cfg.mcmc, &mut rng)?;
                    posterior_predictive_stats(&draws, &d.outcomes, stat, a.n_rep, &mut prng)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(["group", "stat", "kind", "index", "value"]);
    for (d, c) in groups.iter().zip(&checks) {
        t.push(vec![d.label.clone(), a.stat.clone(), "observed".into(), "0".into(), fmt_num(c.observed)]);
        t.push(vec![d.label.clone(), a.stat.clone(), "upper_tail".into(), "0".into(), fmt_num(c.upper_tail())]);
        for (r, v) in c.replicates.iter().enumerate() {
            t.push(vec![d.label.clone(), a.stat.clone(), "replicate".into(), r.to_string(), fmt_num(*v)]);
        }
    }
    t.write(a.out.as_deref(), &prov)
}

fn compare(a: CompareArgs) -> Result<()> {
    let x = read_ensemble(&a.a, a.label_a.as_deref())?;
    let y = read_ensemble(&a.b, a.label_b.as_deref())?;
    let p = crate::posterior::compare_prob(&x, &y)?;
    println!("{p:?}");
    Ok(())
}
