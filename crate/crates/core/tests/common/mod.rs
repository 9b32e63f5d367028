//! Reference calculations shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use underlap::densities::DensitySpec;
use underlap::dpm::{stick_breaking, DpmHyper, DpmSampler};
use underlap::io::{write_dataset, ColumnKind, DatasetSchema, Provenance};
use underlap::lsbp::{LsbpHyper, LsbpSampler};
use underlap::measures::{unl, GriddedCdf, GriddedDensity};
use underlap::numerics::{simpson, EvaluationGrid, RngStream};
use underlap::polya_gamma::sample_pg1;
use underlap::posterior::ess;
use underlap::simulation::{generate, ScenarioSpec};

/// A Monte Carlo estimate next to its reference value.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
}

impl Check {
    pub fn z(&self) -> f64 {
        (self.estimate - self.target) / self.se
    }

    pub fn within(&self, k: f64) -> bool {
        self.z().abs() <= k
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: estimate {:.6} target {:.6} se {:.2e} z {:+.2}",
            self.name,
            self.estimate,
            self.target,
            self.se,
            self.z()
        )
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Mean of an autocorrelated chain with its effective-sample-size standard error.
fn chain_check(name: &str, chain: &[f64], target: f64) -> Check {
    let n_eff = ess(chain).expect("chain long enough for ESS");
    Check {
        name: name.into(),
        estimate: mean(chain),
        se: sd(chain) / n_eff.sqrt(),
        target,
    }
}

fn iid_check(name: &str, xs: &[f64], target: f64) -> Check {
    Check {
        name: name.into(),
        estimate: mean(xs),
        se: sd(xs) / (xs.len() as f64).sqrt(),
        target,
    }
}

/// Posterior expectations of `g(σ²)` by Simpson quadrature over `t = ln σ²`,
/// given the log marginal posterior density of `σ²`.
fn sigma2_quadrature<F, G>(log_post: F, centre: f64, half_width: f64, g: G) -> Vec<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> Vec<f64>,
{
    let n = 4001;
    let h = 2.0 * half_width / (n - 1) as f64;
    let ts: Vec<f64> = (0..n).map(|i| centre - half_width + i as f64 * h).collect();
    // density of t is p(σ²) σ²
    let lp: Vec<f64> = ts.iter().map(|&t| log_post(t.exp()) + t).collect();
    let max = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|v| (v - max).exp()).collect();
    let norm = simpson(&w, h).unwrap();
    let k = g(1.0).len();
    (0..k)
        .map(|j| {
            let vals: Vec<f64> = ts.iter().zip(&w).map(|(&t, &wi)| wi * g(t.exp())[j]).collect();
            simpson(&vals, h).unwrap() / norm
        })
        .collect()
}

/// Single-component DPM against the semi-conjugate normal model: posterior
/// means of `μ`, `μ²` and `σ²` from quadrature over the variance.
pub fn dpm_single_normal(seed: u64, iterations: usize) -> Vec<Check> {
    let mut rng = RngStream::new(seed, 11);
    let noise = Normal::new(0.7, 1.3).unwrap();
    let y: Vec<f64> = (0..40).map(|_| noise.sample(&mut rng)).collect();
    let hyper = DpmHyper {
        l: 1,
        ..DpmHyper::default()
    };

    let n = y.len() as f64;
    let ybar = mean(&y);
    let ss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let (a0, b2, a, b) = (hyper.a_mu, hyper.b2_mu, hyper.a_sig, hyper.b_sig);
    let log_post = |s2: f64| {
        let marg = s2 / n + b2;
        -(a + 1.0) * s2.ln() - b / s2 - 0.5 * (n - 1.0) * s2.ln() - ss / (2.0 * s2)
            - 0.5 * marg.ln()
            - (ybar - a0).powi(2) / (2.0 * marg)
    };
    let cond = |s2: f64| {
        let v = 1.0 / (1.0 / b2 + n / s2);
        let m = v * (a0 / b2 + n * ybar / s2);
        vec![m, v + m * m, s2]
    };
    let exact = sigma2_quadrature(log_post, (ss / n).ln(), 4.0, cond);

    let mut sampler = DpmSampler::new(y, hyper, &mut rng).unwrap();
    for _ in 0..1000 {
        sampler.step(&mut rng);
    }
    let (mut mu, mut mu2, mut s2) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..iterations {
        sampler.step(&mut rng);
        let st = sampler.state();
        mu.push(st.means[0]);
        mu2.push(st.means[0] * st.means[0]);
        s2.push(st.variances[0]);
    }
    vec![
        chain_check("dpm E[mu]", &mu, exact[0]),
        chain_check("dpm E[mu^2]", &mu2, exact[1]),
        chain_check("dpm E[sigma^2]", &s2, exact[2]),
    ]
}

/// Single-component LSBP against Bayesian linear regression with independent
/// normal coefficients and an inverse-gamma variance.
pub fn lsbp_linear_regression(seed: u64, iterations: usize) -> Vec<Check> {
    let mut rng = RngStream::new(seed, 12);
    let noise = Normal::new(0.0, 0.6).unwrap();
    let n = 40;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|&xi| 0.5 + 1.2 * xi + noise.sample(&mut rng)).collect();
    let hyper = LsbpHyper {
        l: 1,
        ..LsbpHyper::default()
    };
    let prior_var = 10.0;

    let u = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let yv = DVector::from_vec(y.clone());
    let utu = u.transpose() * &u;
    let uty = u.transpose() * &yv;
    let (a, b) = (hyper.a_sig, hyper.b_sig);
    let log_post = |s2: f64| {
        let c = DMatrix::identity(n, n) * s2 + &u * u.transpose() * prior_var;
        let chol = c.cholesky().unwrap();
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = yv.dot(&chol.solve(&yv));
        -(a + 1.0) * s2.ln() - b / s2 - 0.5 * logdet - 0.5 * quad
    };
    let cond = |s2: f64| {
        let prec = &utu / s2 + DMatrix::identity(2, 2) / prior_var;
        let v = prec.try_inverse().unwrap();
        let m = &v * &uty / s2;
        vec![m[0], m[1], v[(1, 1)] + m[1] * m[1], s2]
    };
    let resid: f64 = {
        let fit = utu.clone().cholesky().unwrap().solve(&uty);
        (&yv - &u * fit).norm_squared()
    };
    let exact = sigma2_quadrature(log_post, (resid / n as f64).ln(), 4.0, cond);

    let z = vec![vec![1.0]; n];
    let rows: Vec<Vec<f64>> = x.iter().map(|&xi| vec![1.0, xi]).collect();
    let mut sampler = LsbpSampler::new(z, rows, y, &hyper, &mut rng).unwrap();
    for _ in 0..1000 {
        sampler.step(&mut rng).unwrap();
    }
    let (mut b0, mut b1, mut b1sq, mut s2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..iterations {
        sampler.step(&mut rng).unwrap();
        b0.push(sampler.beta[0][0]);
        b1.push(sampler.beta[0][1]);
        b1sq.push(sampler.beta[0][1].powi(2));
        s2.push(sampler.variances[0]);
    }
    vec![
        chain_check("lsbp E[beta_0]", &b0, exact[0]),
        chain_check("lsbp E[beta_1]", &b1, exact[1]),
        chain_check("lsbp E[beta_1^2]", &b1sq, exact[2]),
        chain_check("lsbp E[sigma^2]", &s2, exact[3]),
    ]
}

/// `E[PG(1, c)] = tanh(c/2) / (2c)`, and `1/4` at zero.
pub fn pg_mean(c: f64) -> f64 {
    if c == 0.0 {
        0.25
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

pub fn pg_means(draws: usize, seed: u64) -> Vec<Check> {
    [0.0, 0.5, 2.0, 5.0]
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let mut rng = RngStream::new(seed, 20 + k as u64);
            let xs: Vec<f64> = (0..draws).map(|_| sample_pg1(c, &mut rng).unwrap()).collect();
            iid_check(&format!("PG(1,{c}) mean"), &xs, pg_mean(c))
        })
        .collect()
}

/// Prior mass beyond the first `l` components of the untruncated
/// stick-breaking process, averaged over prior draws.
pub fn tail_weight(alpha: f64, l: usize, draws: usize, seed: u64) -> Check {
    let mut rng = RngStream::new(seed, 30);
    let beta = Beta::new(1.0, alpha).unwrap();
    let mut sticks = vec![0.0; l + 1];
    let tails: Vec<f64> = (0..draws)
        .map(|_| {
            for v in sticks.iter_mut().take(l) {
                *v = beta.sample(&mut rng);
            }
            sticks[l] = 1.0;
            stick_breaking(&sticks)[l]
        })
        .collect();
    iid_check("tail weight", &tails, (alpha / (alpha + 1.0)).powi(l as i32))
}

/// A normal mixture with one to three components.
pub fn random_mixture<R: Rng + ?Sized>(rng: &mut R) -> DensitySpec {
    let k = rng.random_range(1..=3);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
    let sds = (0..k).map(|_| rng.random_range(0.3..2.0)).collect();
    DensitySpec::normal_mixture(weights, means, sds).unwrap()
}

/// Grid spanning the effective supports of all densities.
pub fn grid_for(specs: &[&DensitySpec], n: usize) -> EvaluationGrid {
    let (lo, hi) = specs
        .iter()
        .map(|d| d.effective_support())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (a, b)| (l.min(a), h.max(b)));
    EvaluationGrid::new(lo, hi, n).unwrap()
}

pub fn gridded(spec: &DensitySpec, grid: EvaluationGrid) -> GriddedDensity {
    GriddedDensity::from_fn(grid, |y| spec.pdf(y)).unwrap()
}

pub fn gridded_cdf(spec: &DensitySpec, grid: EvaluationGrid) -> GriddedCdf {
    GriddedCdf::from_fn(grid, |y| spec.cdf(y)).unwrap()
}

/// UNL of the densities of `exp(Y)`, `f(ln z) / z`, integrated in `z` over
/// pieces of equal width on the log scale, each with its own uniform grid.
pub fn unl_after_exp(specs: &[DensitySpec]) -> f64 {
    let refs: Vec<&DensitySpec> = specs.iter().collect();
    let g = grid_for(&refs, 3);
    let (lo, hi) = (g.lower(), g.upper());
    let pieces = ((hi - lo) / 0.25).ceil() as usize;
    let width = (hi - lo) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let a = (lo + k as f64 * width).exp();
            let b = (lo + (k + 1) as f64 * width).exp();
            let grid = EvaluationGrid::new(a, b, 201).unwrap();
            let dens: Vec<GriddedDensity> = specs
                .iter()
                .map(|d| GriddedDensity::partial(grid, grid.map(|z| d.pdf(z.ln()) / z)).unwrap())
                .collect();
            let r: Vec<&GriddedDensity> = dens.iter().collect();
            unl(&r).unwrap()
        })
        .sum()
}

/// The `--density` argument for a density.
pub fn cli_spec(spec: &DensitySpec) -> String {
    match spec {
        DensitySpec::Normal { mean, sd } => format!("normal:{mean},{sd}"),
        DensitySpec::Gamma { shape, rate } => format!("gamma:{shape},{rate}"),
        DensitySpec::SkewNormal { location, scale, shape } => format!("skew_normal:{location},{scale},{shape}"),
        DensitySpec::NormalMixture { weights, means, sds } => {
            let parts: Vec<String> = (0..weights.len())
                .map(|i| format!("{},{},{}", weights[i], means[i], sds[i]))
                .collect();
            format!("mixture:{}", parts.join(";"))
        }
    }
}

pub fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_underlap"))
        .args(args)
        .env("UNDERLAP_THREADS", "2")
        .output()
        .expect("binary runs")
}

/// Writes a three-group dataset without covariates and one with a covariate `x`.
pub fn write_sample_data(dir: &Path) -> (PathBuf, PathBuf) {
    let prov = Provenance {
        seed: Some(5),
        config_hash: "test".into(),
    };
    let plain = ScenarioSpec::new("U-I/mid".parse().unwrap(), [80, 80, 80], 1, 5);
    let cond = ScenarioSpec::new("C-I".parse().unwrap(), [80, 80, 80], 1, 5);
    let p = dir.join("plain.csv");
    let c = dir.join("cond.csv");
    write_dataset(&p, &generate(&plain, 0).unwrap(), &DatasetSchema::default(), &prov).unwrap();
    let schema = DatasetSchema::default().with_covariate("x", ColumnKind::Continuous);
    write_dataset(&c, &generate(&cond, 0).unwrap(), &schema, &prov).unwrap();
    (p, c)
}

/// Every seeded subcommand with short chains, relative to a data directory
/// and an output directory.
pub fn seeded_runs(data: &Path, out: &Path) -> Vec<(&'static str, Vec<String>)> {
    let (plain, cond) = (data.join("plain.csv"), data.join("cond.csv"));
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let short = ["--seed", "11", "--burn", "100", "--save", "200"].map(String::from);
    let with = |head: &[&str], tail: &[String]| -> Vec<String> {
        head.iter().map(|v| v.to_string()).chain(tail.iter().cloned()).collect()
    };
    vec![
        ("fit", with(&["fit", "--data", &s(&plain), "--out-dir", &s(&out.join("fit"))], &short)),
        (
            "fit-cov",
            with(
                &["fit-cov", "--data", &s(&cond), "--x-grid", "-0.5:0.5:5", "--out-dir", &s(&out.join("fitcov"))],
                &short,
            ),
        ),
        (
            "ppc",
            with(&["ppc", "--data", &s(&plain), "--n-rep", "100", "--out", &s(&out.join("ppc.csv"))], &short),
        ),
        (
            "simulate",
            with(
                &[
                    "simulate", "U-I", "high", "--n", "200", "--reps", "5", "--seed", "7", "--burn", "200", "--save",
                    "400", "--out",
                ],
                &[s(&out.join("sim.csv"))],
            ),
        ),
    ]
}

/// Runs every seeded subcommand twice into separate directories and reports,
/// per command, whether all output files matched byte for byte.
pub fn cli_determinism() -> Vec<(String, std::result::Result<(), String>)> {
    let data = tempfile::tempdir().unwrap();
    write_sample_data(data.path());
    let outs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let runs: Vec<_> = outs.iter().map(|o| seeded_runs(data.path(), o.path())).collect();
    let mut report = Vec::new();
    for k in 0..runs[0].len() {
        let name = runs[0][k].0.to_string();
        let mut status = Ok(());
        let mut stdouts = Vec::new();
        for r in &runs {
            let args: Vec<&str> = r[k].1.iter().map(String::as_str).collect();
            let o = run_cli(&args);
            if !o.status.success() {
                status = Err(format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
            }
            stdouts.push(o.stdout);
        }
        if status.is_ok() && stdouts[0] != stdouts[1] {
            status = Err("stdout differs".into());
        }
        if status.is_ok() {
            let a = files_under(outs[0].path());
            let b = files_under(outs[1].path());
            if a != b {
                status = Err("output files differ".into());
            }
        }
        report.push((name, status));
    }
    report
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
