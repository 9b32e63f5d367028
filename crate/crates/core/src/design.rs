//! Effect specifications for covariate-dependent mixtures and the design rows
//! they produce.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{mean_sd, CovariateColumn, CovariateRecord, CovariateValue, GroupDataset};
use crate::error::{Error, Result};
use crate::splines::{bspline_basis, KnotVector};

/// One block of columns in a linear predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    /// Standardized continuous covariate.
    Linear { covariate: String },
    /// Dummy columns for every level except the first in sorted order.
    Categorical { covariate: String },
    /// `K + 3` cubic B-spline columns with `knots` interior knots.
    Bspline { covariate: String, knots: usize },
    /// Product of standardized continuous covariates (an interaction column).
    Product { covariates: Vec<String> },
}

impl Term {
    pub fn linear(covariate: impl Into<String>) -> Self {
        Term::Linear {
            covariate: covariate.into(),
        }
    }

    pub fn bspline(covariate: impl Into<String>, knots: usize) -> Self {
        Term::Bspline {
            covariate: covariate.into(),
            knots,
        }
    }

    pub fn categorical(covariate: impl Into<String>) -> Self {
        Term::Categorical {
            covariate: covariate.into(),
        }
    }

    fn is_spline(&self) -> bool {
        matches!(self, Term::Bspline { .. })
    }

    fn covariates(&self) -> Vec<&str> {
        match self {
            Term::Linear { covariate } | Term::Categorical { covariate } | Term::Bspline { covariate, .. } => {
                vec![covariate.as_str()]
            }
            Term::Product { covariates } => covariates.iter().map(String::as_str).collect(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Linear { covariate } => write!(f, "{covariate}"),
            Term::Categorical { covariate } => write!(f, "cat({covariate})"),
            Term::Bspline { covariate, knots } => write!(f, "bs({covariate},K={knots})"),
            Term::Product { covariates } => write!(f, "{}", covariates.join("*")),
        }
    }
}

/// Terms of the stick-breaking weight predictor and of the component-mean
/// predictor. Both always carry an intercept.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EffectSpec {
    #[serde(default)]
    pub weights: Vec<Term>,
    #[serde(default)]
    pub means: Vec<Term>,
}

impl EffectSpec {
    pub fn new(weights: Vec<Term>, means: Vec<Term>) -> Self {
        Self { weights, means }
    }

    /// Linear effect of one covariate on both weights and means.
    pub fn linear(covariate: &str) -> Self {
        Self::new(vec![Term::linear(covariate)], vec![Term::linear(covariate)])
    }

    /// A spline on the means, linear weights.
    pub fn spline_means(covariate: &str, knots: usize) -> Self {
        Self::new(vec![Term::linear(covariate)], vec![Term::bspline(covariate, knots)])
    }

    /// A spline on the weights, linear means.
    pub fn spline_weights(covariate: &str, knots: usize) -> Self {
        Self::new(vec![Term::bspline(covariate, knots)], vec![Term::linear(covariate)])
    }

    /// Structural checks that do not need data: splines enter at most one of
    /// the two predictors, and no covariate is repeated within a predictor.
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(Term::is_spline) && self.means.iter().any(Term::is_spline) {
            return Err(Error::config(
                "effects",
                "a spline may enter the weights or the means, not both",
            ));
        }
        for (which, terms) in [("weights", &self.weights), ("means", &self.means)] {
            for (i, t) in terms.iter().enumerate() {
                if let Term::Product { covariates } = t {
                    if covariates.len() < 2 {
                        return Err(Error::config(which, "a product term needs at least two covariates"));
                    }
                }
                if let Term::Bspline { knots, .. } = t {
                    if *knots > 20 {
                        return Err(Error::config(which, format!("{knots} interior knots is too many")));
                    }
                }
                if terms[..i].contains(t) {
                    return Err(Error::config(which, format!("term `{t}` is repeated")));
                }
            }
        }
        Ok(())
    }

    /// Names of all covariates the spec refers to.
    pub fn covariates(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in self.weights.iter().chain(&self.means) {
            for c in t.covariates() {
                if !out.iter().any(|o| o == c) {
                    out.push(c.to_string());
                }
            }
        }
        out
    }
}

impl fmt::Display for EffectSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |ts: &[Term]| {
            if ts.is_empty() {
                "1".to_string()
            } else {
                ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("+")
            }
        };
        write!(f, "weights~{};means~{}", join(&self.weights), join(&self.means))
    }
}

impl std::str::FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config("effects", format!("cannot parse term `{s}`"));
        let name_ok = |n: &str| !n.is_empty() && n.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.');
        if let Some(inner) = s.strip_prefix("cat(").and_then(|r| r.strip_suffix(')')) {
            let n = inner.trim();
            return if name_ok(n) { Ok(Term::categorical(n)) } else { Err(bad()) };
        }
        if let Some(inner) = s.strip_prefix("bs(").and_then(|r| r.strip_suffix(')')) {
            let (n, k) = inner.split_once(',').ok_or_else(bad)?;
            let k = k.trim().strip_prefix("K=").ok_or_else(bad)?;
            let k: usize = k.trim().parse().map_err(|_| bad())?;
            let n = n.trim();
            return if name_ok(n) { Ok(Term::bspline(n, k)) } else { Err(bad()) };
        }
        if s.contains('*') {
            let parts: Vec<String> = s.split('*').map(|p| p.trim().to_string()).collect();
            if parts.iter().all(|p| name_ok(p)) {
                return Ok(Term::Product { covariates: parts });
            }
            return Err(bad());
        }
        if name_ok(s) {
            Ok(Term::linear(s))
        } else {
            Err(bad())
        }
    }
}

/// Parses the `weights~...;means~...` form produced by `Display`; `1` is the
/// intercept-only predictor and a missing side is intercept-only too.
impl std::str::FromStr for EffectSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = EffectSpec::default();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (side, rhs) = part
                .split_once('~')
                .ok_or_else(|| Error::config("effects", format!("expected `weights~...` or `means~...`, got `{part}`")))?;
            let terms = if rhs.trim() == "1" {
                Vec::new()
            } else {
                split_terms(rhs).into_iter().map(|t| t.parse()).collect::<Result<Vec<Term>>>()?
            };
            match side.trim() {
                "weights" => spec.weights = terms,
                "means" => spec.means = terms,
                other => return Err(Error::config("effects", format!("unknown predictor `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Split on `+` outside parentheses.
fn split_terms(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            '+' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// How to treat covariate values outside the range seen when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangePolicy {
    Strict,
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
struct Scaling {
    name: String,
    center: f64,
    scale: f64,
    min: f64,
    max: f64,
}

impl Scaling {
    fn fit(name: &str, v: &[f64]) -> Self {
        let (center, sd) = mean_sd(v);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            name: name.to_string(),
            center,
            // a constant column stays constant (zero) instead of dividing by zero
            scale: if sd > 1e-12 { sd } else { 1.0 },
            min,
            max,
        }
    }

    fn apply(&self, x: f64, policy: RangePolicy, clamped: &mut bool) -> Result<f64> {
        let x = bound(&self.name, x, self.min, self.max, policy, clamped)?;
        Ok((x - self.center) / self.scale)
    }
}

fn bound(name: &str, x: f64, min: f64, max: f64, policy: RangePolicy, clamped: &mut bool) -> Result<f64> {
    if x >= min && x <= max {
        return Ok(x);
    }
    if !x.is_finite() {
        return Err(Error::param(name, format!("covariate value {x} is not finite")));
    }
    match policy {
        RangePolicy::Strict => Err(Error::param(
            name,
            format!("value {x} lies outside the fitted range [{min}, {max}]"),
        )),
        RangePolicy::Clamp => {
            *clamped = true;
            Ok(x.clamp(min, max))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ResolvedTerm {
    Linear(Scaling),
    Categorical { name: String, levels: Vec<String> },
    Bspline { name: String, knots: KnotVector },
    Product(Vec<Scaling>),
}

impl ResolvedTerm {
    fn dim(&self) -> usize {
        match self {
            ResolvedTerm::Linear(_) | ResolvedTerm::Product(_) => 1,
            ResolvedTerm::Categorical { levels, .. } => levels.len() - 1,
            ResolvedTerm::Bspline { knots, .. } => knots.n_columns(),
        }
    }
}

/// One resolved linear predictor: intercept plus term columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    terms: Vec<ResolvedTerm>,
    dim: usize,
}

impl Predictor {
    fn resolve(terms: &[Term], data: &GroupDataset) -> Result<Self> {
        let continuous = |name: &str| -> Result<&[f64]> {
            match data.covariate(name) {
                Some(CovariateColumn::Continuous(v)) => Ok(v),
                Some(CovariateColumn::Categorical(_)) => Err(Error::config(
                    name,
                    "categorical covariate used where a continuous one is required",
                )),
                None => Err(Error::MissingColumn(name.to_string())),
            }
        };
        let mut resolved = Vec::with_capacity(terms.len());
        for t in terms {
            resolved.push(match t {
                Term::Linear { covariate } => ResolvedTerm::Linear(Scaling::fit(covariate, continuous(covariate)?)),
                Term::Bspline { covariate, knots } => ResolvedTerm::Bspline {
                    name: covariate.clone(),
                    knots: KnotVector::from_quantiles(continuous(covariate)?, *knots)?,
                },
                Term::Product { covariates } => ResolvedTerm::Product(
                    covariates
                        .iter()
                        .map(|c| Ok(Scaling::fit(c, continuous(c)?)))
                        .collect::<Result<_>>()?,
                ),
                Term::Categorical { covariate } => {
                    let mut levels: Vec<String> = match data.covariate(covariate) {
                        Some(CovariateColumn::Categorical(v)) => v.clone(),
                        Some(CovariateColumn::Continuous(v)) => v.iter().map(|x| x.to_string()).collect(),
                        None => return Err(Error::MissingColumn(covariate.clone())),
                    };
                    levels.sort();
                    levels.dedup();
                    if levels.len() < 2 {
                        return Err(Error::DegenerateData(format!(
                            "categorical covariate `{covariate}` has a single level"
                        )));
                    }
                    ResolvedTerm::Categorical {
                        name: covariate.clone(),
                        levels,
                    }
                }
            });
        }
        let dim = 1 + resolved.iter().map(ResolvedTerm::dim).sum::<usize>();
        Ok(Self { terms: resolved, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The design row for a record; sets `clamped` when a value was moved
    /// into the fitted range.
    pub fn row(&self, rec: &CovariateRecord, policy: RangePolicy, clamped: &mut bool) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.dim);
        row.push(1.0);
        for t in &self.terms {
            match t {
                ResolvedTerm::Linear(s) => row.push(s.apply(continuous_value(rec, &s.name)?, policy, clamped)?),
                ResolvedTerm::Product(parts) => {
                    let mut p = 1.0;
                    for s in parts {
                        p *= s.apply(continuous_value(rec, &s.name)?, policy, clamped)?;
                    }
                    row.push(p);
                }
                ResolvedTerm::Bspline { name, knots } => {
                    let x = bound(name, continuous_value(rec, name)?, knots.lower(), knots.upper(), policy, clamped)?;
                    row.extend(bspline_basis(x, knots)?);
                }
                ResolvedTerm::Categorical { name, levels } => {
                    let level = match rec.get(name) {
                        Some(CovariateValue::Categorical(s)) => s.clone(),
                        Some(CovariateValue::Continuous(v)) => v.to_string(),
                        None => return Err(Error::MissingColumn(name.clone())),
                    };
                    let idx = levels.iter().position(|l| *l == level).ok_or_else(|| {
                        Error::param(name.clone(), format!("unknown level `{level}`"))
                    })?;
                    row.extend((1..levels.len()).map(|k| if k == idx { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(row)
    }
}

fn continuous_value(rec: &CovariateRecord, name: &str) -> Result<f64> {
    match rec.get(name) {
        Some(CovariateValue::Continuous(v)) => Ok(*v),
        Some(CovariateValue::Categorical(s)) => s
            .parse::<f64>()
            .map_err(|_| Error::param(name, format!("expected a number, got `{s}`"))),
        None => Err(Error::MissingColumn(name.to_string())),
    }
}

/// An effect specification resolved against fitting data: covariate
/// scalings, knot locations, and category levels are fixed here.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    spec: EffectSpec,
    weights: Predictor,
    means: Predictor,
}

impl Design {
    pub fn resolve(spec: &EffectSpec, data: &GroupDataset) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec: spec.clone(),
            weights: Predictor::resolve(&spec.weights, data)?,
            means: Predictor::resolve(&spec.means, data)?,
        })
    }

    pub fn spec(&self) -> &EffectSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Predictor {
        &self.weights
    }

    pub fn means(&self) -> &Predictor {
        &self.means
    }

    /// `Q^v + Q^μ`, the complexity used to rank candidate designs.
    pub fn complexity(&self) -> usize {
        self.weights.dim + self.means.dim
    }

    /// Row-major weight and mean design matrices for every observation.
    pub fn matrices(&self, data: &GroupDataset) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut z = Vec::with_capacity(data.len());
        let mut u = Vec::with_capacity(data.len());
        let mut clamped = false;
        for i in 0..data.len() {
            let rec = data.record(i);
            z.push(self.weights.row(&rec, RangePolicy::Strict, &mut clamped)?);
            u.push(self.means.row(&rec, RangePolicy::Strict, &mut clamped)?);
        }
        Ok((z, u))
    }
}
