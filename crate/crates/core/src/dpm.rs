//! Truncated Dirichlet-process mixture of normals for one group, fitted by
//! blocked Gibbs sampling.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::mean_sd;
use crate::error::{Error, Result};
use crate::mixture::MixtureDraw;

/// Prior hyperparameters: `μ ~ N(a_mu, b2_mu)`, `σ² ~ IG(a_sig, b_sig)`,
/// stick-breaking concentration `alpha`, truncation `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpmHyper {
    pub a_mu: f64,
    pub b2_mu: f64,
    pub a_sig: f64,
    pub b_sig: f64,
    pub alpha: f64,
    #[serde(rename = "components")]
    pub l: usize,
}

impl Default for DpmHyper {
    fn default() -> Self {
        Self {
            a_mu: 0.0,
            b2_mu: 10.0,
            a_sig: 2.0,
            b_sig: 0.5,
            alpha: 1.0,
            l: 20,
        }
    }
}

impl DpmHyper {
    /// `L = 1` is accepted and reduces the model to a single normal.
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        if !self.a_mu.is_finite() {
            return Err(Error::param("a_mu", "must be finite"));
        }
        pos("b2_mu", self.b2_mu)?;
        pos("a_sig", self.a_sig)?;
        pos("b_sig", self.b_sig)?;
        pos("alpha", self.alpha)?;
        if self.l == 0 {
            return Err(Error::param("components", "need at least one component"));
        }
        Ok(())
    }
}

/// Chain lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSettings {
    pub burn: usize,
    pub save: usize,
    pub thin: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            burn: 2000,
            save: 5000,
            thin: 1,
        }
    }
}

impl McmcSettings {
    pub fn new(burn: usize, save: usize) -> Self {
        Self { burn, save, thin: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn == 0 {
            return Err(Error::param("burn", "must be at least 1"));
        }
        if self.save == 0 {
            return Err(Error::param("save", "must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::param("thin", "must be at least 1"));
        }
        Ok(())
    }
}

/// Sampler state on the standardized scale. Allocations are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmState {
    pub allocations: Vec<usize>,
    pub sticks: Vec<f64>,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// `ω_1 = v_1`, `ω_l = v_l Π_{m<l} (1 − v_m)`; the last stick is 1.
pub fn stick_breaking(sticks: &[f64]) -> Vec<f64> {
    let mut rest = 1.0;
    sticks
        .iter()
        .map(|v| {
            let w = v * rest;
            rest *= 1.0 - v;
            w
        })
        .collect()
}

pub(crate) fn inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive inverse-gamma parameters");
    1.0 / g.sample(rng)
}

/// Blocked Gibbs sampler for one group's standardized outcomes.
#[derive(Debug, Clone)]
pub struct DpmSampler {
    y: Vec<f64>,
    hyper: DpmHyper,
    state: DpmState,
    counts: Vec<usize>,
    log_probs: Vec<f64>,
}

impl DpmSampler {
    /// A sampler started from the prior: uniform allocations, sticks at their
    /// prior mean, atoms drawn from the centring distribution.
    pub fn new<R: Rng + ?Sized>(y: Vec<f64>, hyper: DpmHyper, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let l = hyper.l;
        let allocations = (0..y.len()).map(|_| rng.random_range(0..l)).collect();
        let mut sticks = vec![1.0 / (1.0 + hyper.alpha); l];
        sticks[l - 1] = 1.0;
        let means = (0..l)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                hyper.a_mu + hyper.b2_mu.sqrt() * z
            })
            .collect();
        let variances = (0..l).map(|_| inverse_gamma(hyper.a_sig, hyper.b_sig, rng)).collect();
        let weights = stick_breaking(&sticks);
        let state = DpmState {
            allocations,
            sticks,
            weights,
            means,
            variances,
        };
        Self::with_state(y, hyper, state)
    }

    pub fn with_state(y: Vec<f64>, hyper: DpmHyper, state: DpmState) -> Result<Self> {
        hyper.validate()?;
        let l = hyper.l;
        if state.sticks.len() != l || state.means.len() != l || state.variances.len() != l || state.weights.len() != l
        {
            return Err(Error::Dimension(format!("state does not have {l} components")));
        }
        if state.allocations.len() != y.len() || state.allocations.iter().any(|&g| g >= l) {
            return Err(Error::Dimension("allocations do not match the data".into()));
        }
        Ok(Self {
            y,
            counts: vec![0; l],
            log_probs: vec![0.0; l],
            hyper,
            state,
        })
    }

    pub fn state(&self) -> &DpmState {
        &self.state
    }

    /// Sample each allocation with probability ∝ `ω_l φ(y_i | μ_l, σ²_l)`,
    /// normalized in log space.
    pub fn update_allocations<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let l = self.hyper.l;
        let st = &mut self.state;
        // per-component constants: ln ω − ½ ln σ², and −1/(2σ²)
        let consts: Vec<(f64, f64, f64)> = (0..l)
            .map(|k| {
                let lw = if st.weights[k] > 0.0 { st.weights[k].ln() } else { f64::NEG_INFINITY };
                (lw - 0.5 * st.variances[k].ln(), st.means[k], -0.5 / st.variances[k])
            })
            .collect();
        for (i, &yi) in self.y.iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for (k, &(c, m, q)) in consts.iter().enumerate() {
                let d = yi - m;
                let lp = c + q * d * d;
                self.log_probs[k] = lp;
                max = max.max(lp);
            }
            let mut total = 0.0;
            for lp in self.log_probs.iter_mut() {
                *lp = (*lp - max).exp();
                total += *lp;
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = l - 1;
            for (k, p) in self.log_probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            // guard against landing on a zero-probability tail component
            while self.log_probs[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            st.allocations[i] = pick;
        }
    }

    fn recount(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        for &g in &self.state.allocations {
            self.counts[g] += 1;
        }
    }

    /// `v_l ~ Beta(n_l + 1, α + Σ_{m>l} n_m)` for `l < L`, `v_L = 1`.
    pub fn update_sticks<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.recount();
        let l = self.hyper.l;
        let mut after: usize = self.counts.iter().sum();
        for k in 0..l - 1 {
            after -= self.counts[k];
            let a = self.counts[k] as f64 + 1.0;
            let b = self.hyper.alpha + after as f64;
            self.state.sticks[k] = Beta::new(a, b).expect("positive beta parameters").sample(rng);
        }
        self.state.sticks[l - 1] = 1.0;
        self.state.weights = stick_breaking(&self.state.sticks);
    }

    /// Conjugate normal and inverse-gamma full conditionals; empty components
    /// draw from the prior.
    pub fn update_atoms<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.recount();
        let l = self.hyper.l;
        let mut sums = vec![0.0; l];
        for (&g, &yi) in self.state.allocations.iter().zip(&self.y) {
            sums[g] += yi;
        }
        let h = &self.hyper;
        for k in 0..l {
            let n = self.counts[k] as f64;
            let s2 = self.state.variances[k];
            let prec = 1.0 / h.b2_mu + n / s2;
            let mean = (h.a_mu / h.b2_mu + sums[k] / s2) / prec;
            let z: f64 = rng.sample(StandardNormal);
            self.state.means[k] = mean + z / prec.sqrt();
        }
        let mut ss = vec![0.0; l];
        for (&g, &yi) in self.state.allocations.iter().zip(&self.y) {
            let d = yi - self.state.means[g];
            ss[g] += d * d;
        }
        for k in 0..l {
            let shape = h.a_sig + 0.5 * self.counts[k] as f64;
            let rate = h.b_sig + 0.5 * ss[k];
            self.state.variances[k] = inverse_gamma(shape, rate, rng);
        }
    }

    /// One full Gibbs sweep in the order allocations, sticks, atoms.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.update_allocations(rng);
        self.update_sticks(rng);
        self.update_atoms(rng);
    }

    /// Current mixture mapped back through `y = center + scale · z`.
    pub fn draw(&self, center: f64, scale: f64) -> MixtureDraw {
        MixtureDraw {
            weights: self.state.weights.clone(),
            means: self.state.means.iter().map(|m| center + scale * m).collect(),
            variances: self.state.variances.iter().map(|v| v * scale * scale).collect(),
        }
    }
}

/// Fit one group: standardize, run the chain, and return the saved draws on
/// the original outcome scale.
pub fn fit_dpm<R: Rng + ?Sized>(
    y: &[f64],
    hyper: &DpmHyper,
    mcmc: &McmcSettings,
    rng: &mut R,
) -> Result<Vec<MixtureDraw>> {
    mcmc.validate()?;
    if y.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 observations, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("y", "outcomes must be finite"));
    }
    let (center, sd) = mean_sd(y);
    if sd * sd < 1e-12 {
        return Err(Error::DegenerateData("outcome variance is zero".into()));
    }
    let z: Vec<f64> = y.iter().map(|v| (v - center) / sd).collect();
    let mut sampler = DpmSampler::new(z, hyper.clone(), rng)?;
    for _ in 0..mcmc.burn {
        sampler.step(rng);
    }
    let mut draws = Vec::with_capacity(mcmc.save);
    for _ in 0..mcmc.save {
        for _ in 0..mcmc.thin {
            sampler.step(rng);
        }
        draws.push(sampler.draw(center, sd));
    }
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{normal_pdf, RngStream};

    fn state(l: usize, n: usize) -> DpmState {
        let mut sticks = vec![0.5; l];
        sticks[l - 1] = 1.0;
        DpmState {
            allocations: vec![0; n],
            weights: stick_breaking(&sticks),
            sticks,
            means: (0..l).map(|k| k as f64).collect(),
            variances: vec![1.0; l],
        }
    }

    fn se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn stick_breaking_sums_to_one() {
        let w = stick_breaking(&[0.3, 0.9, 0.2, 1.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[1] - 0.7 * 0.9).abs() < 1e-15);
    }

    #[test]
    fn allocation_follows_weights_and_likelihood() {
        let hyper = DpmHyper {
            l: 2,
            ..Default::default()
        };
        let mut st = state(2, 1);
        st.sticks = vec![1.0 - 1e-9, 1.0];
        st.weights = stick_breaking(&st.sticks);
        let mut s = DpmSampler::with_state(vec![0.0], hyper.clone(), st).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut hits = 0;
        for _ in 0..10_000 {
            s.update_allocations(&mut rng);
            hits += (s.state().allocations[0] == 0) as usize;
        }
        assert!(hits >= 9_900);

        // equal weights and variances, observation midway between the means
        let mut st = state(2, 1);
        st.sticks = vec![0.5, 1.0];
        st.weights = stick_breaking(&st.sticks);
        let mut s = DpmSampler::with_state(vec![0.5], hyper, st).unwrap();
        let reps = 10_000;
        let mut ones = Vec::with_capacity(reps);
        for _ in 0..reps {
            s.update_allocations(&mut rng);
            ones.push((s.state().allocations[0] == 0) as usize as f64);
        }
        let (m, e) = se(&ones);
        assert!((m - 0.5).abs() < 3.0 * e);
    }

    #[test]
    fn allocation_probabilities_match_direct_formula() {
        let l = 4;
        let hyper = DpmHyper { l, ..Default::default() };
        let st = DpmState {
            allocations: vec![0],
            sticks: vec![0.2, 0.5, 0.4, 1.0],
            weights: stick_breaking(&[0.2, 0.5, 0.4, 1.0]),
            means: vec![-1.0, 0.3, 0.8, 2.0],
            variances: vec![0.5, 1.0, 0.2, 2.0],
        };
        let y = 0.6;
        let direct: Vec<f64> = (0..l)
            .map(|k| st.weights[k] * normal_pdf(y, st.means[k], st.variances[k].sqrt()))
            .collect();
        let total: f64 = direct.iter().sum();
        let mut s = DpmSampler::with_state(vec![y], hyper, st).unwrap();
        let mut rng = RngStream::new(5, 0);
        let reps = 40_000;
        let mut counts = vec![0usize; l];
        for _ in 0..reps {
            s.update_allocations(&mut rng);
            counts[s.state().allocations[0]] += 1;
        }
        for k in 0..l {
            let p = direct[k] / total;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            let f = counts[k] as f64 / reps as f64;
            assert!((f - p).abs() < 3.5 * se + 1e-12, "k={k}: {f} vs {p}");
        }
    }

    #[test]
    fn empty_sticks_and_atoms_follow_the_prior() {
        let l = 3;
        let hyper = DpmHyper {
            l,
            alpha: 2.0,
            ..Default::default()
        };
        let mut st = state(l, 0);
        st.allocations.clear();
        let mut s = DpmSampler::with_state(vec![], hyper.clone(), st).unwrap();
        let mut rng = RngStream::new(8, 0);
        let reps = 10_000;
        let (mut v1, mut mu, mut s2) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..reps {
            s.update_sticks(&mut rng);
            s.update_atoms(&mut rng);
            v1.push(s.state().sticks[0]);
            mu.push(s.state().means[1]);
            s2.push(1.0 / s.state().variances[1]);
            assert_eq!(s.state().sticks[l - 1], 1.0);
            assert!((s.state().weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (m, e) = se(&v1);
        assert!((m - 1.0 / (1.0 + hyper.alpha)).abs() < 3.0 * e);
        let (m, e) = se(&mu);
        assert!((m - hyper.a_mu).abs() < 3.0 * e);
        let var = mu.iter().map(|x| x * x).sum::<f64>() / reps as f64;
        assert!((var - hyper.b2_mu).abs() < 0.05 * hyper.b2_mu * 3.0);
        // 1/σ² ~ Gamma(a, rate b) has mean a/b
        let (m, e) = se(&s2);
        assert!((m - hyper.a_sig / hyper.b_sig).abs() < 3.0 * e);
    }

    #[test]
    fn full_component_stick_mean() {
        let l = 3;
        let n = 50;
        let hyper = DpmHyper { l, ..Default::default() };
        let mut s = DpmSampler::with_state(vec![0.0; n], hyper.clone(), state(l, n)).unwrap();
        let mut rng = RngStream::new(9, 0);
        let v: Vec<f64> = (0..10_000)
            .map(|_| {
                s.update_sticks(&mut rng);
                s.state().sticks[0]
            })
            .collect();
        let (m, e) = se(&v);
        let want = (n as f64 + 1.0) / (n as f64 + 1.0 + hyper.alpha);
        assert!((m - want).abs() < 3.0 * e);
    }

    #[test]
    fn single_observation_mean_conditional() {
        // n_l = 1 at y = 1.2 with σ² fixed at 1 by resetting it each sweep
        let hyper = DpmHyper {
            l: 1,
            ..Default::default()
        };
        let y = 1.2;
        let mut rng = RngStream::new(10, 0);
        let mut means = Vec::new();
        for _ in 0..20_000 {
            let st = DpmState {
                allocations: vec![0],
                sticks: vec![1.0],
                weights: vec![1.0],
                means: vec![0.0],
                variances: vec![1.0],
            };
            let mut s = DpmSampler::with_state(vec![y], hyper.clone(), st).unwrap();
            s.update_atoms(&mut rng);
            means.push(s.state().means[0]);
        }
        let (m, e) = se(&means);
        let want = (hyper.a_mu / hyper.b2_mu + y) / (1.0 / hyper.b2_mu + 1.0);
        assert!((m - want).abs() < 3.0 * e);
    }

    #[test]
    fn variance_conditional_parameters() {
        // with fixed allocations and the mean pinned by a tiny prior variance,
        // 1/σ² follows Gamma(a + n/2, b + ½Σ(y − μ)²)
        let hyper = DpmHyper {
            l: 1,
            a_mu: 0.5,
            b2_mu: 1e-14,
            ..Default::default()
        };
        let y = vec![0.1, 1.4, -0.3, 0.9];
        let st = DpmState {
            allocations: vec![0; 4],
            sticks: vec![1.0],
            weights: vec![1.0],
            means: vec![0.5],
            variances: vec![1.0],
        };
        let mut s = DpmSampler::with_state(y.clone(), hyper.clone(), st).unwrap();
        let mut rng = RngStream::new(11, 0);
        let prec: Vec<f64> = (0..40_000)
            .map(|_| {
                s.update_atoms(&mut rng);
                1.0 / s.state().variances[0]
            })
            .collect();
        let shape = hyper.a_sig + 2.0;
        let rate = hyper.b_sig + 0.5 * y.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>();
        let (m, e) = se(&prec);
        assert!((m - shape / rate).abs() < 3.0 * e, "{m} vs {}", shape / rate);
    }

    #[test]
    fn fit_recovers_standard_normal_density() {
        let mut rng = RngStream::new(12, 0);
        let y: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let draws = fit_dpm(&y, &DpmHyper::default(), &McmcSettings::new(500, 1000), &mut rng).unwrap();
        assert_eq!(draws.len(), 1000);
        for d in &draws {
            assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let at0 = draws.iter().map(|d| d.pdf(0.0)).sum::<f64>() / draws.len() as f64;
        assert!((at0 - 0.3989).abs() < 0.05, "{at0}");
    }

    #[test]
    fn fit_is_deterministic_and_guards_input() {
        let y: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let run = |seed| fit_dpm(&y, &DpmHyper::default(), &McmcSettings::new(20, 20), &mut RngStream::new(seed, 0)).unwrap();
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            fit_dpm(&[1.0; 5], &DpmHyper::default(), &McmcSettings::default(), &mut rng),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            fit_dpm(&[1.0; 20], &DpmHyper::default(), &McmcSettings::default(), &mut rng),
            Err(Error::DegenerateData(_))
        ));
    }
}
