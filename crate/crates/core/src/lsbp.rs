//! Covariate-dependent mixture of normals with logit stick-breaking weights,
//! fitted by Gibbs sampling with Pólya-gamma augmentation, plus WAIC and
//! WAIC-guided choice among candidate effect specifications.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{mean_sd, CovariateRecord, GroupDataset};
use crate::design::{Design, EffectSpec, RangePolicy};
use crate::dpm::{inverse_gamma, McmcSettings};
use crate::error::{Error, Result};
use crate::mixture::MixtureDraw;
use crate::numerics::{RngStream, StreamTag};
use crate::polya_gamma::sample_pg1;

/// WAIC difference within which a simpler design is preferred.
pub const WAIC_TOLERANCE: f64 = 5.0;

/// Gaussian prior on a coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefPrior {
    /// Every coefficient `N(mean, variance)` independently, whatever the
    /// dimension of the design.
    Isotropic { mean: f64, variance: f64 },
    /// Explicit mean vector and covariance matrix; the dimension must match
    /// the design.
    Full { mean: Vec<f64>, covariance: Vec<Vec<f64>> },
}

impl Default for CoefPrior {
    fn default() -> Self {
        CoefPrior::Isotropic {
            mean: 0.0,
            variance: 10.0,
        }
    }
}

impl CoefPrior {
    /// Prior mean and precision for a design of dimension `q`.
    fn resolve(&self, name: &str, q: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match self {
            CoefPrior::Isotropic { mean, variance } => {
                if !(variance.is_finite() && *variance > 0.0) || !mean.is_finite() {
                    return Err(Error::param(name, "isotropic prior needs a finite mean and positive variance"));
                }
                Ok((DVector::from_element(q, *mean), DMatrix::identity(q, q) / *variance))
            }
            CoefPrior::Full { mean, covariance } => {
                if mean.len() != q || covariance.len() != q || covariance.iter().any(|r| r.len() != q) {
                    return Err(Error::param(
                        name,
                        format!("prior has dimension {} but the design has {q} columns", mean.len()),
                    ));
                }
                let cov = DMatrix::from_fn(q, q, |i, j| covariance[i][j]);
                if (0..q).any(|i| (0..q).any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs())))
                {
                    return Err(Error::param(name, "prior covariance must be symmetric"));
                }
                let chol = cov
                    .cholesky()
                    .ok_or_else(|| Error::param(name, "prior covariance must be positive definite"))?;
                Ok((DVector::from_vec(mean.clone()), chol.inverse()))
            }
        }
    }
}

/// Priors and truncation level for the conditional mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsbpHyper {
    pub gamma: CoefPrior,
    pub beta: CoefPrior,
    pub a_sig: f64,
    pub b_sig: f64,
    #[serde(rename = "components")]
    pub l: usize,
}

impl Default for LsbpHyper {
    fn default() -> Self {
        Self {
            gamma: CoefPrior::default(),
            beta: CoefPrior::default(),
            a_sig: 2.0,
            b_sig: 0.5,
            l: 20,
        }
    }
}

impl LsbpHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_sig > 0.0 && self.a_sig.is_finite()) {
            return Err(Error::param("a_sig", "must be positive"));
        }
        if !(self.b_sig > 0.0 && self.b_sig.is_finite()) {
            return Err(Error::param("b_sig", "must be positive"));
        }
        if self.l == 0 {
            return Err(Error::param("components", "need at least one component"));
        }
        Ok(())
    }
}

/// What a fitted model needs to evaluate its draws at new covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct LsbpModel {
    pub design: Design,
    pub y_center: f64,
    pub y_scale: f64,
    pub l: usize,
}

/// One posterior draw of all coefficients, on the standardized scale.
#[derive(Debug, Clone)]
pub struct ConditionalMixtureDraw {
    model: Arc<LsbpModel>,
    /// `(L − 1) × Q^v`, row-major.
    pub gamma: Vec<f64>,
    /// `L × Q^μ`, row-major.
    pub beta: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PartialEq for ConditionalMixtureDraw {
    fn eq(&self, other: &Self) -> bool {
        self.gamma == other.gamma && self.beta == other.beta && self.variances == other.variances
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln σ(x)` and `ln(1 − σ(x))` for the logistic function, without overflow.
fn log_sigmoids(x: f64) -> (f64, f64) {
    let sp = |t: f64| t.max(0.0) + (-t.abs()).exp().ln_1p();
    (-sp(-x), -sp(x))
}

impl ConditionalMixtureDraw {
    pub fn new(model: Arc<LsbpModel>, gamma: Vec<f64>, beta: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let (qv, qu, l) = (model.design.weights().dim(), model.design.means().dim(), model.l);
        if gamma.len() != (l - 1) * qv || beta.len() != l * qu || variances.len() != l {
            return Err(Error::Dimension(format!(
                "draw sizes ({}, {}, {}) do not match L = {l}, Q^v = {qv}, Q^μ = {qu}",
                gamma.len(),
                beta.len(),
                variances.len()
            )));
        }
        Ok(Self {
            model,
            gamma,
            beta,
            variances,
        })
    }

    pub fn model(&self) -> &Arc<LsbpModel> {
        &self.model
    }

    /// Stick-breaking weights for a weight-design row.
    pub fn weights_for_row(&self, z: &[f64]) -> Vec<f64> {
        let l = self.model.l;
        let qv = z.len();
        let mut w = Vec::with_capacity(l);
        let mut log_rest = 0.0;
        for k in 0..l - 1 {
            let (lv, l1v) = log_sigmoids(dot(z, &self.gamma[k * qv..(k + 1) * qv]));
            w.push((log_rest + lv).exp());
            log_rest += l1v;
        }
        w.push(log_rest.exp());
        w
    }

    /// The conditional mixture for given design rows, on the original outcome scale.
    pub fn mixture_for_rows(&self, z: &[f64], u: &[f64]) -> MixtureDraw {
        let m = &self.model;
        let qu = u.len();
        MixtureDraw {
            weights: self.weights_for_row(z),
            means: (0..m.l)
                .map(|k| m.y_center + m.y_scale * dot(u, &self.beta[k * qu..(k + 1) * qu]))
                .collect(),
            variances: self.variances.iter().map(|v| v * m.y_scale * m.y_scale).collect(),
        }
    }

    /// The conditional mixture at a covariate record. Values outside the
    /// fitted covariate ranges are clamped; the flag reports whether that happened.
    pub fn mixture_at(&self, record: &CovariateRecord) -> Result<(MixtureDraw, bool)> {
        let (z, u, clamped) = design_rows(&self.model.design, record)?;
        Ok((self.mixture_for_rows(&z, &u), clamped))
    }
}

/// Weight and mean design rows for a record, clamping out-of-range values.
pub fn design_rows(design: &Design, record: &CovariateRecord) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let mut clamped = false;
    let z = design.weights().row(record, RangePolicy::Clamp, &mut clamped)?;
    let u = design.means().row(record, RangePolicy::Clamp, &mut clamped)?;
    Ok((z, u, clamped))
}

/// WAIC with its pieces; `pointwise` holds `(lppd_i, p_waic_i)` per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicSummary {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub pointwise: Vec<(f64, f64)>,
}

/// Streaming per-observation accumulators for WAIC.
#[derive(Debug, Clone)]
struct WaicAccumulator {
    count: usize,
    max: Vec<f64>,
    sum_exp: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WaicAccumulator {
    fn new(n: usize) -> Self {
        Self {
            count: 0,
            max: vec![f64::NEG_INFINITY; n],
            sum_exp: vec![0.0; n],
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, loglik: &[f64]) -> Result<()> {
        self.count += 1;
        let c = self.count as f64;
        for (i, &ll) in loglik.iter().enumerate() {
            if !ll.is_finite() {
                return Err(Error::Numerical(format!("non-finite log density for observation {i}")));
            }
            if ll > self.max[i] {
                self.sum_exp[i] = self.sum_exp[i] * (self.max[i] - ll).exp() + 1.0;
                self.max[i] = ll;
            } else {
                self.sum_exp[i] += (ll - self.max[i]).exp();
            }
            let d = ll - self.mean[i];
            self.mean[i] += d / c;
            self.m2[i] += d * (ll - self.mean[i]);
        }
        Ok(())
    }

    fn finish(&self) -> Result<WaicSummary> {
        if self.count < 2 {
            return Err(Error::InsufficientData("WAIC needs at least two draws".into()));
        }
        let s = self.count as f64;
        let pointwise: Vec<(f64, f64)> = (0..self.max.len())
            .map(|i| (self.max[i] + (self.sum_exp[i] / s).ln(), self.m2[i] / (s - 1.0)))
            .collect();
        let lppd: f64 = pointwise.iter().map(|p| p.0).sum();
        let p_waic: f64 = pointwise.iter().map(|p| p.1).sum();
        Ok(WaicSummary {
            waic: -2.0 * (lppd - p_waic),
            lppd,
            p_waic,
            pointwise,
        })
    }
}

/// WAIC from a matrix of pointwise log-likelihoods, one row per draw.
pub fn waic_from_loglik(rows: &[Vec<f64>]) -> Result<WaicSummary> {
    let n = rows.first().map_or(0, Vec::len);
    let mut acc = WaicAccumulator::new(n);
    for r in rows {
        if r.len() != n {
            return Err(Error::Dimension("log-likelihood rows differ in length".into()));
        }
        acc.push(r)?;
    }
    acc.finish()
}

/// Posterior draws and fit criteria of one conditional model.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: Arc<LsbpModel>,
    pub draws: Vec<ConditionalMixtureDraw>,
    pub waic: WaicSummary,
}

/// Gibbs sampler state and data, all on the standardized scale.
pub struct LsbpSampler {
    z: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    y: Vec<f64>,
    l: usize,
    a_sig: f64,
    b_sig: f64,
    gamma_prior: (DVector<f64>, DMatrix<f64>),
    beta_prior: (DVector<f64>, DMatrix<f64>),
    pub allocations: Vec<usize>,
    pub gamma: Vec<DVector<f64>>,
    pub beta: Vec<DVector<f64>>,
    pub variances: Vec<f64>,
    scratch: Vec<f64>,
}

impl LsbpSampler {
    /// Start from uniform allocations, coefficients at their prior means and
    /// variances drawn from the prior.
    pub fn new<R: Rng + ?Sized>(
        z: Vec<Vec<f64>>,
        u: Vec<Vec<f64>>,
        y: Vec<f64>,
        hyper: &LsbpHyper,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        let n = y.len();
        if z.len() != n || u.len() != n {
            return Err(Error::Dimension("design rows do not match the outcomes".into()));
        }
        let qv = z.first().map_or(1, Vec::len);
        let qu = u.first().map_or(1, Vec::len);
        if z.iter().any(|r| r.len() != qv) || u.iter().any(|r| r.len() != qu) {
            return Err(Error::Dimension("design rows have unequal lengths".into()));
        }
        let gamma_prior = hyper.gamma.resolve("gamma", qv)?;
        let beta_prior = hyper.beta.resolve("beta", qu)?;
        let l = hyper.l;
        Ok(Self {
            allocations: (0..n).map(|_| rng.random_range(0..l)).collect(),
            gamma: vec![gamma_prior.0.clone(); l.saturating_sub(1)],
            beta: vec![beta_prior.0.clone(); l],
            variances: (0..l).map(|_| inverse_gamma(hyper.a_sig, hyper.b_sig, rng)).collect(),
            z,
            u,
            y,
            l,
            a_sig: hyper.a_sig,
            b_sig: hyper.b_sig,
            gamma_prior,
            beta_prior,
            scratch: vec![0.0; l],
        })
    }

    fn log_weights(&self, z: &[f64], out: &mut [f64]) {
        let mut log_rest = 0.0;
        for k in 0..self.l - 1 {
            let (lv, l1v) = log_sigmoids(dot(z, self.gamma[k].as_slice()));
            out[k] = log_rest + lv;
            log_rest += l1v;
        }
        out[self.l - 1] = log_rest;
    }

    /// Allocations from `ω_l(x_i) φ(y_i | u_i'β_l, σ²_l)`, normalized in log space.
    pub fn update_allocations<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let l = self.l;
        let mut lp = std::mem::take(&mut self.scratch);
        let half_log_var: Vec<f64> = self.variances.iter().map(|v| 0.5 * v.ln()).collect();
        for i in 0..self.y.len() {
            self.log_weights(&self.z[i], &mut lp);
            let mut max = f64::NEG_INFINITY;
            for k in 0..l {
                let d = self.y[i] - dot(&self.u[i], self.beta[k].as_slice());
                lp[k] += -half_log_var[k] - 0.5 * d * d / self.variances[k];
                max = max.max(lp[k]);
            }
            let mut total = 0.0;
            for v in lp.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = l - 1;
            for (k, p) in lp.iter().enumerate() {
                acc += p;
                if target < acc {
                    pick = k;
                    break;
                }
            }
            while lp[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            self.allocations[i] = pick;
        }
        self.scratch = lp;
    }

    /// Pólya-gamma augmentation and Gaussian draws for each `γ_l`, `l < L`.
    pub fn update_gamma<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (mu0, prec0) = &self.gamma_prior;
        let qv = mu0.len();
        for k in 0..self.l.saturating_sub(1) {
            let mut prec = prec0.clone();
            let mut b = prec0 * mu0;
            for i in 0..self.y.len() {
                let g = self.allocations[i];
                if g < k {
                    continue;
                }
                let zi = &self.z[i];
                let zeta = sample_pg1(dot(zi, self.gamma[k].as_slice()), rng)?;
                let work = if g == k { 0.5 } else { -0.5 };
                for a in 0..qv {
                    b[a] += zi[a] * work;
                    for c in 0..=a {
                        prec[(a, c)] += zeta * zi[a] * zi[c];
                    }
                }
            }
            symmetrize_lower(&mut prec);
            self.gamma[k] = sample_gaussian(&prec, &b, rng)?;
        }
        Ok(())
    }

    /// Gaussian full conditional of each `β_l` given its allocated observations.
    pub fn update_beta<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (mu0, prec0) = &self.beta_prior;
        let qu = mu0.len();
        let mut precs: Vec<DMatrix<f64>> = vec![prec0.clone(); self.l];
        let prior_b = prec0 * mu0;
        let mut bs: Vec<DVector<f64>> = vec![DVector::zeros(qu); self.l];
        for i in 0..self.y.len() {
            let k = self.allocations[i];
            let ui = &self.u[i];
            for a in 0..qu {
                bs[k][a] += ui[a] * self.y[i];
                for c in 0..=a {
                    precs[k][(a, c)] += ui[a] * ui[c] / self.variances[k];
                }
            }
        }
        for k in 0..self.l {
            let mut prec = std::mem::replace(&mut precs[k], DMatrix::zeros(0, 0));
            symmetrize_lower(&mut prec);
            let b = &bs[k] / self.variances[k] + &prior_b;
            self.beta[k] = sample_gaussian(&prec, &b, rng)?;
        }
        Ok(())
    }

    /// `σ²_l ~ IG(a + n_l/2, b + ½ Σ (y_i − u_i'β_l)²)`.
    pub fn update_variances<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut counts = vec![0usize; self.l];
        let mut ss = vec![0.0; self.l];
        for i in 0..self.y.len() {
            let k = self.allocations[i];
            let d = self.y[i] - dot(&self.u[i], self.beta[k].as_slice());
            counts[k] += 1;
            ss[k] += d * d;
        }
        for k in 0..self.l {
            self.variances[k] = inverse_gamma(self.a_sig + 0.5 * counts[k] as f64, self.b_sig + 0.5 * ss[k], rng);
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.update_allocations(rng);
        self.update_gamma(rng)?;
        self.update_beta(rng)?;
        self.update_variances(rng);
        Ok(())
    }

    /// Standardized-scale log density of every observation under the current state.
    fn loglik(&self, out: &mut [f64]) {
        let mut lw = vec![0.0; self.l];
        let c = 0.5 * (2.0 * std::f64::consts::PI).ln();
        for i in 0..self.y.len() {
            self.log_weights(&self.z[i], &mut lw);
            let mut max = f64::NEG_INFINITY;
            for k in 0..self.l {
                let d = self.y[i] - dot(&self.u[i], self.beta[k].as_slice());
                lw[k] += -c - 0.5 * self.variances[k].ln() - 0.5 * d * d / self.variances[k];
                max = max.max(lw[k]);
            }
            out[i] = max + lw.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        }
    }

    fn snapshot(&self, model: &Arc<LsbpModel>) -> ConditionalMixtureDraw {
        ConditionalMixtureDraw {
            model: Arc::clone(model),
            gamma: self.gamma.iter().flat_map(|g| g.iter().copied()).collect(),
            beta: self.beta.iter().flat_map(|b| b.iter().copied()).collect(),
            variances: self.variances.clone(),
        }
    }
}

fn symmetrize_lower(m: &mut DMatrix<f64>) {
    let q = m.nrows();
    for a in 0..q {
        for c in 0..a {
            m[(c, a)] = m[(a, c)];
        }
    }
}

/// Draw from `N(P⁻¹ b, P⁻¹)` through the Cholesky factor of the precision `P`.
pub fn sample_gaussian<R: Rng + ?Sized>(prec: &DMatrix<f64>, b: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let chol = prec
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("full-conditional precision is not positive definite".into()))?;
    let mean = chol.solve(b);
    let eps = DVector::from_fn(b.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let offset = chol
        .l()
        .transpose()
        .solve_upper_triangular(&eps)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok(mean + offset)
}

/// Fit the conditional mixture to one group. Outcomes and continuous
/// covariates are standardized; draws evaluate back on the original scale.
pub fn fit_lsbp<R: Rng + ?Sized>(
    data: &GroupDataset,
    spec: &EffectSpec,
    hyper: &LsbpHyper,
    mcmc: &McmcSettings,
    rng: &mut R,
) -> Result<FitResult> {
    mcmc.validate()?;
    hyper.validate()?;
    data.validate()?;
    if data.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 observations, got {}",
            data.len()
        )));
    }
    let (y_center, sd) = mean_sd(&data.outcomes);
    if sd * sd < 1e-12 {
        return Err(Error::DegenerateData("outcome variance is zero".into()));
    }
    let design = Design::resolve(spec, data)?;
    let (z, u) = design.matrices(data)?;
    let y: Vec<f64> = data.outcomes.iter().map(|v| (v - y_center) / sd).collect();
    let model = Arc::new(LsbpModel {
        design,
        y_center,
        y_scale: sd,
        l: hyper.l,
    });
    let mut sampler = LsbpSampler::new(z, u, y, hyper, rng)?;
    for _ in 0..mcmc.burn {
        sampler.step(rng)?;
    }
    let n = data.len();
    let log_scale = sd.ln();
    let mut acc = WaicAccumulator::new(n);
    let mut ll = vec![0.0; n];
    let mut draws = Vec::with_capacity(mcmc.save);
    for _ in 0..mcmc.save {
        for _ in 0..mcmc.thin {
            sampler.step(rng)?;
        }
        sampler.loglik(&mut ll);
        ll.iter_mut().for_each(|v| *v -= log_scale);
        acc.push(&ll)?;
        draws.push(sampler.snapshot(&model));
    }
    let waic = if mcmc.save >= 2 {
        acc.finish()?
    } else {
        WaicSummary {
            waic: f64::NAN,
            lppd: f64::NAN,
            p_waic: f64::NAN,
            pointwise: Vec::new(),
        }
    };
    Ok(FitResult { model, draws, waic })
}

/// WAIC of a fit's draws on a dataset, from the full conditional mixture per draw.
pub fn waic(fit: &FitResult, data: &GroupDataset) -> Result<WaicSummary> {
    if fit.draws.len() < 2 {
        return Err(Error::InsufficientData("WAIC needs at least two draws".into()));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..data.len())
        .map(|i| design_rows(&fit.model.design, &data.record(i)).map(|(z, u, _)| (z, u)))
        .collect::<Result<_>>()?;
    let mut acc = WaicAccumulator::new(data.len());
    let mut ll = vec![0.0; data.len()];
    for d in &fit.draws {
        for (i, (z, u)) in rows.iter().enumerate() {
            ll[i] = d.mixture_for_rows(z, u).ln_pdf(data.outcomes[i]);
        }
        acc.push(&ll)?;
    }
    acc.finish()
}

/// One candidate's outcome in a design search.
#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub spec: EffectSpec,
    pub complexity: usize,
    pub waic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DesignSelection {
    pub chosen: usize,
    pub candidates: Vec<CandidateResult>,
    pub fit: FitResult,
}

impl DesignSelection {
    pub fn spec(&self) -> &EffectSpec {
        &self.candidates[self.chosen].spec
    }
}

/// Linear effects, then cubic splines with 0..=`max_knots` interior knots on
/// the means and on the weights (never both at once).
pub fn standard_candidates(covariate: &str, max_knots: usize) -> Vec<EffectSpec> {
    let mut out = vec![EffectSpec::linear(covariate)];
    for k in 0..=max_knots {
        out.push(EffectSpec::spline_means(covariate, k));
        out.push(EffectSpec::spline_weights(covariate, k));
    }
    out
}

/// Fit every candidate and keep the simplest whose WAIC is within
/// [`WAIC_TOLERANCE`] of the best. Complexity is `Q^v + Q^μ`; equal
/// complexity falls back to the order in which candidates were given.
/// Candidate `j` is fitted with stream `(seed, j)`.
pub fn select_design(
    data: &GroupDataset,
    candidates: &[EffectSpec],
    hyper: &LsbpHyper,
    mcmc: &McmcSettings,
    seed: u64,
    stream: u64,
) -> Result<DesignSelection> {
    if candidates.is_empty() {
        return Err(Error::param("candidates", "at least one candidate is required"));
    }
    let fits: Vec<Result<(FitResult, usize)>> = candidates
        .par_iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut rng = RngStream::derive(seed, StreamTag::DesignSelection, &[stream, j as u64]);
            let fit = fit_lsbp(data, spec, hyper, mcmc, &mut rng)?;
            let c = fit.model.design.complexity();
            if !fit.waic.waic.is_finite() {
                return Err(Error::Numerical("WAIC is not finite".into()));
            }
            Ok((fit, c))
        })
        .collect();
    let mut results = Vec::with_capacity(candidates.len());
    let mut kept: Vec<Option<FitResult>> = Vec::with_capacity(candidates.len());
    for (spec, r) in candidates.iter().zip(fits) {
        match r {
            Ok((fit, c)) => {
                results.push(CandidateResult {
                    spec: spec.clone(),
                    complexity: c,
                    waic: Some(fit.waic.waic),
                    error: None,
                });
                kept.push(Some(fit));
            }
            Err(e) => {
                log::warn!("candidate {spec} failed: {e}");
                results.push(CandidateResult {
                    spec: spec.clone(),
                    complexity: usize::MAX,
                    waic: None,
                    error: Some(e.to_string()),
                });
                kept.push(None);
            }
        }
    }
    let best = results
        .iter()
        .filter_map(|r| r.waic)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        let msgs: Vec<String> = results.iter().filter_map(|r| r.error.clone()).collect();
        return Err(Error::AllFitsFailed(msgs.join("; ")));
    }
    let chosen = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.waic.is_some_and(|w| w <= best + WAIC_TOLERANCE))
        .min_by_key(|(j, r)| (r.complexity, *j))
        .map(|(j, _)| j)
        .expect("the best candidate qualifies");
    let fit = kept[chosen].take().expect("chosen candidate has a fit");
    Ok(DesignSelection {
        chosen,
        candidates: results,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateColumn;

    fn linear_data(n: usize, seed: u64) -> GroupDataset {
        let mut rng = RngStream::new(seed, 0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|xi| 0.25 + xi + rng.sample::<f64, _>(StandardNormal))
            .collect();
        GroupDataset::new("g", y)
            .unwrap()
            .with_covariate("x", CovariateColumn::Continuous(x))
            .unwrap()
    }

    #[test]
    fn weights_are_a_simplex() {
        let data = linear_data(200, 1);
        let mut rng = RngStream::new(2, 0);
        let fit = fit_lsbp(&data, &EffectSpec::linear("x"), &LsbpHyper::default(), &McmcSettings::new(50, 50), &mut rng)
            .unwrap();
        for d in &fit.draws {
            for i in 0..100 {
                let x = -1.0 + 2.0 * i as f64 / 99.0;
                let (m, _) = d.mixture_at(&CovariateRecord::continuous("x", x)).unwrap();
                assert!(m.weights.iter().all(|w| *w >= 0.0));
                assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(fit.waic.waic.is_finite());
    }

    #[test]
    fn conditional_mean_recovered() {
        let data = linear_data(500, 3);
        let mut rng = RngStream::new(4, 0);
        let fit = fit_lsbp(
            &data,
            &EffectSpec::linear("x"),
            &LsbpHyper::default(),
            &McmcSettings::new(500, 500),
            &mut rng,
        )
        .unwrap();
        let at0 = CovariateRecord::continuous("x", 0.0);
        let mean = fit
            .draws
            .iter()
            .map(|d| d.mixture_at(&at0).unwrap().0.mean())
            .sum::<f64>()
            / fit.draws.len() as f64;
        assert!((mean - 0.25).abs() < 0.1, "{mean}");
    }

    #[test]
    fn duplicated_draw_has_zero_p_waic() {
        let ll = vec![-1.0, -2.5, -0.3];
        let w = waic_from_loglik(&vec![ll.clone(); 10]).unwrap();
        assert!(w.p_waic.abs() < 1e-15);
        assert!((w.waic - -2.0 * ll.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn streaming_and_recomputed_waic_agree() {
        let data = linear_data(100, 5);
        let mut rng = RngStream::new(6, 0);
        let fit = fit_lsbp(&data, &EffectSpec::linear("x"), &LsbpHyper::default(), &McmcSettings::new(30, 40), &mut rng)
            .unwrap();
        let again = waic(&fit, &data).unwrap();
        assert!((again.waic - fit.waic.waic).abs() < 1e-8 * fit.waic.waic.abs());
    }

    #[test]
    fn zero_covariate_gives_flat_conditional_density() {
        let mut data = linear_data(100, 7);
        data.covariates[0].1 = CovariateColumn::Continuous(vec![0.0; 100]);
        let mut rng = RngStream::new(8, 0);
        let fit = fit_lsbp(&data, &EffectSpec::linear("x"), &LsbpHyper::default(), &McmcSettings::new(20, 20), &mut rng)
            .unwrap();
        // a constant covariate has a zero design column, so x has no effect
        let d = &fit.draws[19];
        let a = d.mixture_for_rows(&[1.0, 0.0], &[1.0, 0.0]);
        for x in [-1.0, 0.0, 2.0] {
            let (m, _) = d.mixture_at(&CovariateRecord::continuous("x", x)).unwrap();
            for y in [-2.0, 0.0, 1.5] {
                assert!((m.pdf(y) - a.pdf(y)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn selection_prefers_simplest_within_tolerance() {
        let data = linear_data(60, 9);
        let cands = vec![EffectSpec::linear("x")];
        let s = select_design(&data, &cands, &LsbpHyper::default(), &McmcSettings::new(20, 20), 1, 0).unwrap();
        assert_eq!(s.chosen, 0);
        assert!(select_design(&data, &[], &LsbpHyper::default(), &McmcSettings::new(20, 20), 1, 0).is_err());
        let bad = vec![EffectSpec::linear("nope")];
        assert!(matches!(
            select_design(&data, &bad, &LsbpHyper::default(), &McmcSettings::new(20, 20), 1, 0),
            Err(Error::AllFitsFailed(_))
        ));
    }

    #[test]
    fn standard_candidate_order() {
        let c = standard_candidates("x", 4);
        assert_eq!(c.len(), 11);
        assert_eq!(c[0], EffectSpec::linear("x"));
        assert_eq!(c[1], EffectSpec::spline_means("x", 0));
        assert_eq!(c[2], EffectSpec::spline_weights("x", 0));
    }

    #[test]
    fn full_prior_dimension_is_checked() {
        let p = CoefPrior::Full {
            mean: vec![0.0; 2],
            covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert!(p.resolve("beta", 2).is_ok());
        assert!(p.resolve("beta", 3).is_err());
        let not_pd = CoefPrior::Full {
            mean: vec![0.0; 2],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(not_pd.resolve("beta", 2).is_err());
    }

    #[test]
    fn gaussian_sampler_moments() {
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let cov = prec.clone().try_inverse().unwrap();
        let mean = &cov * &b;
        let mut rng = RngStream::new(1, 1);
        let n = 100_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| sample_gaussian(&prec, &b, &mut rng).unwrap()).collect();
        let m: DVector<f64> = draws.iter().fold(DVector::zeros(2), |a, d| a + d) / n as f64;
        for i in 0..2 {
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((m[i] - mean[i]).abs() < 3.0 * se);
        }
        let c01 = draws.iter().map(|d| (d[0] - m[0]) * (d[1] - m[1])).sum::<f64>() / n as f64;
        assert!((c01 - cov[(0, 1)]).abs() < 0.01);
    }
}
