//! Reading and writing datasets, ensembles and run configurations.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{CovariateColumn, GroupDataset};
use crate::design::EffectSpec;
use crate::dpm::{DpmHyper, McmcSettings};
use crate::error::{Error, Result};
use crate::lsbp::{ConditionalMixtureDraw, LsbpHyper};
use crate::measures::DEFAULT_NORM_TOLERANCE;
use crate::mixture::MixtureDraw;
use crate::numerics::{DEFAULT_GRID_PADDING, DEFAULT_GRID_POINTS};
use crate::posterior::ScalarEnsemble;

/// Format with 17 significant digits, like C's `%.17g`.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-5..17).contains(&exp) {
        format!("{}e{}{:02}", trim(mant.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    }
}

/// First 16 hex digits of the SHA-256 of a configuration's text.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// The comment line that opens every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl Provenance {
    pub fn line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# underlap {} seed={seed} config_hash={}",
            env!("CARGO_PKG_VERSION"),
            self.config_hash
        )
    }
}

/// A header row plus string cells, written in one go.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Extra comment lines after the provenance line (without the `#`).
    pub notes: Vec<String>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self, provenance: &Provenance) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "{}", provenance.line())?;
        for n in &self.notes {
            writeln!(out, "# {n}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        Ok(out)
    }

    /// Write to `path`, or to standard output when `path` is `None`.
    pub fn write(&self, path: Option<&Path>, provenance: &Provenance) -> Result<()> {
        let bytes = self.to_bytes(provenance)?;
        match path {
            Some(p) => std::fs::write(p, bytes)?,
            None => std::io::stdout().write_all(&bytes)?,
        }
        Ok(())
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

/// Which columns of a data file hold the group label, the outcome and the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    #[serde(default = "default_group_column")]
    pub group: String,
    #[serde(default = "default_outcome_column")]
    pub outcome: String,
    #[serde(default)]
    pub covariates: Vec<(String, ColumnKind)>,
}

fn default_group_column() -> String {
    "group".into()
}

fn default_outcome_column() -> String {
    "outcome".into()
}

impl Default for DatasetSchema {
    fn default() -> Self {
        Self {
            group: default_group_column(),
            outcome: default_outcome_column(),
            covariates: Vec::new(),
        }
    }
}

impl DatasetSchema {
    pub fn with_covariate(mut self, name: impl Into<String>, kind: ColumnKind) -> Self {
        self.covariates.push((name.into(), kind));
        self
    }
}

/// One dataset per distinct group label, sorted by label. Row numbers in
/// errors count the header as row 1.
pub fn read_dataset_from<R: Read>(reader: R, schema: &DatasetSchema) -> Result<Vec<GroupDataset>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let gi = find(&schema.group)?;
    let yi = find(&schema.outcome)?;
    let ci: Vec<usize> = schema.covariates.iter().map(|(n, _)| find(n)).collect::<Result<_>>()?;

    struct Acc {
        y: Vec<f64>,
        cols: Vec<CovariateColumn>,
    }
    let mut groups: BTreeMap<String, Acc> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 2;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let label = cell(gi);
        if label.is_empty() {
            return Err(Error::Data {
                row,
                column: schema.group.clone(),
                reason: "missing group label".into(),
            });
        }
        let parse_num = |i: usize, column: &str| -> Result<f64> {
            let v: f64 = cell(i).parse().map_err(|_| Error::Data {
                row,
                column: column.to_string(),
                reason: format!("`{}` is not a number", cell(i)),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    column: column.to_string(),
                    reason: "value must be finite".into(),
                });
            }
            Ok(v)
        };
        let y = parse_num(yi, &schema.outcome)?;
        let acc = groups.entry(label.to_string()).or_insert_with(|| Acc {
            y: Vec::new(),
            cols: schema
                .covariates
                .iter()
                .map(|(_, kind)| match kind {
                    ColumnKind::Continuous => CovariateColumn::Continuous(Vec::new()),
                    ColumnKind::Categorical => CovariateColumn::Categorical(Vec::new()),
                })
                .collect(),
        });
        acc.y.push(y);
        for (j, &i) in ci.iter().enumerate() {
            match &mut acc.cols[j] {
                CovariateColumn::Continuous(v) => v.push(parse_num(i, &schema.covariates[j].0)?),
                CovariateColumn::Categorical(v) => {
                    if cell(i).is_empty() {
                        return Err(Error::Data {
                            row,
                            column: schema.covariates[j].0.clone(),
                            reason: "missing category".into(),
                        });
                    }
                    v.push(cell(i).to_string())
                }
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData("the data file has no rows".into()));
    }
    groups
        .into_iter()
        .map(|(label, acc)| {
            let mut d = GroupDataset::new(label, acc.y)?;
            for ((name, _), col) in schema.covariates.iter().zip(acc.cols) {
                d = d.with_covariate(name.clone(), col)?;
            }
            Ok(d)
        })
        .collect()
}

pub fn read_dataset(path: &Path, schema: &DatasetSchema) -> Result<Vec<GroupDataset>> {
    read_dataset_from(std::fs::File::open(path)?, schema)
}

/// Datasets as a table with the schema's column names.
pub fn dataset_table(datasets: &[GroupDataset], schema: &DatasetSchema) -> Result<Table> {
    let mut cols = vec![schema.group.clone(), schema.outcome.clone()];
    cols.extend(schema.covariates.iter().map(|(n, _)| n.clone()));
    let mut t = Table::new(cols);
    for d in datasets {
        let covs: Vec<&CovariateColumn> = schema
            .covariates
            .iter()
            .map(|(n, _)| d.covariate(n).ok_or_else(|| Error::MissingColumn(n.clone())))
            .collect::<Result<_>>()?;
        for i in 0..d.len() {
            let mut row = vec![d.label.clone(), fmt_num(d.outcomes[i])];
            for c in &covs {
                row.push(match c {
                    CovariateColumn::Continuous(v) => fmt_num(v[i]),
                    CovariateColumn::Categorical(v) => v[i].clone(),
                });
            }
            t.push(row);
        }
    }
    Ok(t)
}

pub fn write_dataset(path: &Path, datasets: &[GroupDataset], schema: &DatasetSchema, prov: &Provenance) -> Result<()> {
    dataset_table(datasets, schema)?.write(Some(path), prov)
}

/// Ensemble files hold `label,iteration,value` rows.
pub fn ensemble_table(ensembles: &[&ScalarEnsemble]) -> Table {
    let mut t = Table::new(["label", "iteration", "value"]);
    for e in ensembles {
        for (s, v) in e.draws.iter().enumerate() {
            t.push(vec![e.label.clone(), s.to_string(), fmt_num(*v)]);
        }
    }
    t
}

/// Read an ensemble file. With several labels present, `label` picks one.
pub fn read_ensemble(path: &Path, label: Option<&str>) -> Result<ScalarEnsemble> {
    let mut rdr = csv_reader(std::fs::File::open(path)?);
    let mut found: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let headers = rdr.headers()?.clone();
    let li = headers.iter().position(|h| h == "label").ok_or_else(|| Error::MissingColumn("label".into()))?;
    let vi = headers.iter().position(|h| h == "value").ok_or_else(|| Error::MissingColumn("value".into()))?;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec.get(vi).unwrap_or("").parse().map_err(|_| Error::Data {
            row: k + 2,
            column: "value".into(),
            reason: "not a number".into(),
        })?;
        found.entry(rec.get(li).unwrap_or("").to_string()).or_default().push(v);
    }
    let (name, draws) = match label {
        Some(l) => (
            l.to_string(),
            found
                .remove(l)
                .ok_or_else(|| Error::param("label", format!("no ensemble labelled `{l}` in {}", path.display())))?,
        ),
        None if found.len() == 1 => found.pop_first().expect("one entry"),
        None => {
            return Err(Error::param(
                "label",
                format!("{} holds several ensembles; choose one of {:?}", path.display(), found.keys().collect::<Vec<_>>()),
            ))
        }
    };
    ScalarEnsemble::new(name, draws)
}

/// Mixture draws in long form: `group,iteration,component,weight,mean,variance`.
pub fn mixture_draws_table(groups: &[(&str, &[MixtureDraw])]) -> Table {
    let mut t = Table::new(["group", "iteration", "component", "weight", "mean", "variance"]);
    for (label, draws) in groups {
        for (s, d) in draws.iter().enumerate() {
            for k in 0..d.n_components() {
                t.push(vec![
                    label.to_string(),
                    s.to_string(),
                    k.to_string(),
                    fmt_num(d.weights[k]),
                    fmt_num(d.means[k]),
                    fmt_num(d.variances[k]),
                ]);
            }
        }
    }
    t
}

/// Conditional draws, one row per iteration, in blocks `gamma_l_q`
/// (l < L−1), `beta_l_q` and `var_l`, all on the standardized scale. The
/// notes record the outcome standardization and the effect specification.
pub fn conditional_draws_table(label: &str, draws: &[ConditionalMixtureDraw]) -> Result<Table> {
    let first = draws
        .first()
        .ok_or_else(|| Error::InsufficientData("no draws to write".into()))?;
    let m = first.model();
    let (qv, qu, l) = (m.design.weights().dim(), m.design.means().dim(), m.l);
    let mut cols = vec!["group".to_string(), "iteration".to_string()];
    for k in 0..l - 1 {
        cols.extend((0..qv).map(|q| format!("gamma_{k}_{q}")));
    }
    for k in 0..l {
        cols.extend((0..qu).map(|q| format!("beta_{k}_{q}")));
    }
    cols.extend((0..l).map(|k| format!("var_{k}")));
    let mut t = Table::new(cols);
    t.notes.push(format!(
        "group={label} effects={} y_center={} y_scale={}",
        m.design.spec(),
        fmt_num(m.y_center),
        fmt_num(m.y_scale)
    ));
    for (s, d) in draws.iter().enumerate() {
        let mut row = vec![label.to_string(), s.to_string()];
        row.extend(d.gamma.iter().chain(&d.beta).chain(&d.variances).map(|v| fmt_num(*v)));
        t.push(row);
    }
    Ok(t)
}

/// Evaluation grid settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub points: usize,
    pub padding: f64,
    pub tolerance: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_GRID_POINTS,
            padding: DEFAULT_GRID_PADDING,
            tolerance: DEFAULT_NORM_TOLERANCE,
        }
    }
}

/// Per-group settings that override the run-wide ones.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub dpm: Option<DpmHyper>,
    pub lsbp: Option<LsbpHyper>,
    pub effects: Option<String>,
}

/// Input data location and layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_group_column")]
    pub group: String,
    #[serde(default = "default_outcome_column")]
    pub outcome: String,
    #[serde(default)]
    pub continuous: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl DataConfig {
    pub fn schema(&self) -> DatasetSchema {
        let mut s = DatasetSchema {
            group: self.group.clone(),
            outcome: self.outcome.clone(),
            covariates: Vec::new(),
        };
        for c in &self.continuous {
            s = s.with_covariate(c.clone(), ColumnKind::Continuous);
        }
        for c in &self.categorical {
            s = s.with_covariate(c.clone(), ColumnKind::Categorical);
        }
        s
    }
}

/// Everything a `fit`, `fit-cov` or `ppc` run needs, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Credible level of reported intervals.
    pub level: f64,
    pub grid: GridConfig,
    pub mcmc: McmcSettings,
    pub dpm: DpmHyper,
    pub lsbp: LsbpHyper,
    /// Effect specification in `weights~...;means~...` form.
    pub effects: Option<String>,
    pub groups: BTreeMap<String, GroupConfig>,
    pub data: Option<DataConfig>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            level: 0.95,
            grid: GridConfig::default(),
            mcmc: McmcSettings::default(),
            dpm: DpmHyper::default(),
            lsbp: LsbpHyper::default(),
            effects: None,
            groups: BTreeMap::new(),
            data: None,
            output_dir: None,
        }
    }
}

fn wrap(field: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::config(format!("{field}.{name}"), reason),
        Error::Config { field: f, reason } => Error::config(format!("{field}.{f}"), reason),
        other => Error::config(field, other.to_string()),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config("level", "must lie strictly between 0 and 1"));
        }
        if self.grid.points < 3 || self.grid.points.is_multiple_of(2) {
            return Err(Error::config("grid.points", "must be odd and at least 3"));
        }
        if !(self.grid.padding >= 0.0 && self.grid.padding.is_finite()) {
            return Err(Error::config("grid.padding", "must be nonnegative"));
        }
        if !(self.grid.tolerance > 0.0 && self.grid.tolerance < 1.0) {
            return Err(Error::config("grid.tolerance", "must lie in (0, 1)"));
        }
        self.mcmc.validate().map_err(|e| wrap("mcmc", e))?;
        let check_dpm = |field: &str, h: &DpmHyper| -> Result<()> {
            h.validate().map_err(|e| wrap(field, e))?;
            if h.l < 2 {
                return Err(Error::config(format!("{field}.components"), "need at least 2 components"));
            }
            Ok(())
        };
        let check_lsbp = |field: &str, h: &LsbpHyper| -> Result<()> {
            h.validate().map_err(|e| wrap(field, e))?;
            if h.l < 2 {
                return Err(Error::config(format!("{field}.components"), "need at least 2 components"));
            }
            Ok(())
        };
        check_dpm("dpm", &self.dpm)?;
        check_lsbp("lsbp", &self.lsbp)?;
        if let Some(e) = &self.effects {
            e.parse::<EffectSpec>().map_err(|err| wrap("effects", err))?;
        }
        for (label, g) in &self.groups {
            if let Some(h) = &g.dpm {
                check_dpm(&format!("groups.{label}.dpm"), h)?;
            }
            if let Some(h) = &g.lsbp {
                check_lsbp(&format!("groups.{label}.lsbp"), h)?;
            }
            if let Some(e) = &g.effects {
                e.parse::<EffectSpec>().map_err(|err| wrap(&format!("groups.{label}.effects"), err))?;
            }
        }
        Ok(())
    }

    pub fn dpm_for(&self, label: &str) -> &DpmHyper {
        self.groups.get(label).and_then(|g| g.dpm.as_ref()).unwrap_or(&self.dpm)
    }

    pub fn lsbp_for(&self, label: &str) -> &LsbpHyper {
        self.groups.get(label).and_then(|g| g.lsbp.as_ref()).unwrap_or(&self.lsbp)
    }

    /// The group's effect specification, if any is configured.
    pub fn effects_for(&self, label: &str) -> Result<Option<EffectSpec>> {
        self.groups
            .get(label)
            .and_then(|g| g.effects.as_ref())
            .or(self.effects.as_ref())
            .map(|s| s.parse())
            .transpose()
    }
}
