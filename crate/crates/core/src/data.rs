//! Per-group outcome samples with optional covariates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single covariate value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Continuous(f64),
    Categorical(String),
}

impl std::fmt::Display for CovariateValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CovariateValue::Continuous(v) => write!(f, "{v}"),
            CovariateValue::Categorical(s) => f.write_str(s),
        }
    }
}

/// A full covariate column.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateColumn {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
}

impl CovariateColumn {
    pub fn len(&self) -> usize {
        match self {
            CovariateColumn::Continuous(v) => v.len(),
            CovariateColumn::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> CovariateValue {
        match self {
            CovariateColumn::Continuous(v) => CovariateValue::Continuous(v[i]),
            CovariateColumn::Categorical(v) => CovariateValue::Categorical(v[i].clone()),
        }
    }
}

/// Named covariate values for one subject, e.g. one point of an evaluation
/// grid over covariate space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateRecord {
    pub values: Vec<(String, CovariateValue)>,
}

impl CovariateRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: CovariateValue) -> Self {
        self.values.push((name.into(), value));
        self
    }

    pub fn continuous(name: impl Into<String>, value: f64) -> Self {
        Self::new().with(name, CovariateValue::Continuous(value))
    }

    pub fn get(&self, name: &str) -> Option<&CovariateValue> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

/// Outcomes of one group and their covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDataset {
    pub label: String,
    pub outcomes: Vec<f64>,
    pub covariates: Vec<(String, CovariateColumn)>,
}

impl GroupDataset {
    pub fn new(label: impl Into<String>, outcomes: Vec<f64>) -> Result<Self> {
        let d = Self {
            label: label.into(),
            outcomes,
            covariates: Vec::new(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_covariate(mut self, name: impl Into<String>, column: CovariateColumn) -> Result<Self> {
        let name = name.into();
        if self.covariates.iter().any(|(n, _)| *n == name) {
            return Err(Error::param("covariates", format!("duplicate covariate `{name}`")));
        }
        self.covariates.push((name, column));
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.outcomes.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "outcomes",
                format!("group `{}` has a non-finite outcome at position {i}", self.label),
            ));
        }
        for (name, col) in &self.covariates {
            if col.len() != self.outcomes.len() {
                return Err(Error::Dimension(format!(
                    "covariate `{name}` has {} values for {} outcomes in group `{}`",
                    col.len(),
                    self.outcomes.len(),
                    self.label
                )));
            }
            if let CovariateColumn::Continuous(v) = col {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::param(name.clone(), "covariate values must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn covariate(&self, name: &str) -> Option<&CovariateColumn> {
        self.covariates.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Covariates of observation `i` as a record.
    pub fn record(&self, i: usize) -> CovariateRecord {
        CovariateRecord {
            values: self
                .covariates
                .iter()
                .map(|(n, c)| (n.clone(), c.value(i)))
                .collect(),
        }
    }
}

/// Mean and (n − 1)-denominator standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}
