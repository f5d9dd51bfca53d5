//! Versioned TOML run configuration. Command-line flags override keys.
//!
//! ```toml
//! version = 1
//!
//! [dataset]
//! source = "synthetic-2d"   # synthetic-1d, law_school, communities, adult, csv
//! n = 10000
//! gamma = 0.5
//!
//! [run]
//! methods = ["erm", "ot-u-w2"]
//! lambda_grid = "default"
//! seeds = 10
//! ```

use std::path::{Path, PathBuf};

use fairot_core::data::CsvSchema;
use fairot_core::domain::DEFAULT_TAU;
use fairot_core::estimators::{DEFAULT_LOGISTIC_ITERS, DEFAULT_NEIGHBORS};
use fairot_core::Lambda;
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::grid::parse_grid;
use crate::methods::Method;

pub const CONFIG_VERSION: u32 = 1;

const LAW_SCHOOL_SCHEMA: &str = include_str!("../../../schemas/law_school.toml");
const COMMUNITIES_SCHEMA: &str = include_str!("../../../schemas/communities.toml");
const ADULT_SCHEMA: &str = include_str!("../../../schemas/adult.toml");

/// Schema text shipped for a named real dataset.
pub fn builtin_schema(name: &str) -> Option<&'static str> {
    match name {
        "law_school" => Some(LAW_SCHOOL_SCHEMA),
        "communities" => Some(COMMUNITIES_SCHEMA),
        "adult" => Some(ADULT_SCHEMA),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Linear,
    /// Analytic regression function; synthetic sources only.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Logistic,
    /// Analytic group posterior; synthetic sources only.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: String,
    /// CSV location; defaults to `data/<source>.csv` for named datasets.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Schema file; named datasets fall back to the shipped schema.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_grid_spec")]
    pub lambda_grid: String,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_base")]
    pub base: BaseKind,
    #[serde(default = "default_classifier")]
    pub classifier: ClassifierKind,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_logistic_iters")]
    pub logistic_iters: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            methods: default_methods(),
            lambda_grid: default_grid_spec(),
            seeds: default_seeds(),
            base_seed: 0,
            base: default_base(),
            classifier: default_classifier(),
            neighbors: default_neighbors(),
            tau: default_tau(),
            logistic_iters: default_logistic_iters(),
            out: default_out(),
        }
    }
}

fn default_n() -> usize {
    10_000
}
fn default_gamma() -> f64 {
    0.5
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_grid_spec() -> String {
    "default".into()
}
fn default_seeds() -> usize {
    10
}
fn default_base() -> BaseKind {
    BaseKind::Linear
}
fn default_classifier() -> ClassifierKind {
    ClassifierKind::Logistic
}
fn default_neighbors() -> usize {
    DEFAULT_NEIGHBORS
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_logistic_iters() -> usize {
    DEFAULT_LOGISTIC_ITERS
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    dataset: DatasetSection,
    #[serde(default)]
    run: RunSection,
}

/// Where rows come from after resolving names, paths and schemas.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic1d { n: usize, gamma: f64 },
    Synthetic2d { n: usize, gamma: f64 },
    Csv { path: PathBuf, schema: CsvSchema },
}

impl DataSource {
    pub fn is_synthetic(&self) -> bool {
        !matches!(self, DataSource::Csv { .. })
    }
}

/// Flags that replace config keys when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dataset: Option<String>,
    pub schema: Option<PathBuf>,
    pub seeds: Option<usize>,
    pub out: Option<PathBuf>,
    pub lambda_grid: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dataset: DatasetSection,
    pub run: RunSection,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config {
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        if raw.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                raw.version
            )));
        }
        Ok(Config {
            dataset: raw.dataset,
            run: raw.run,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config { line, message } => CliError::Config {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    /// Defaults for a dataset given only on the command line.
    pub fn for_dataset(source: &str) -> Self {
        Config {
            dataset: DatasetSection {
                source: source.to_string(),
                path: None,
                schema: None,
                n: default_n(),
                gamma: default_gamma(),
                test_fraction: default_test_fraction(),
            },
            run: RunSection::default(),
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(d) = &overrides.dataset {
            if d.ends_with(".csv") {
                self.dataset.source = "csv".into();
                self.dataset.path = Some(PathBuf::from(d));
            } else {
                self.dataset.source = d.clone();
                self.dataset.path = None;
            }
        }
        if let Some(s) = &overrides.schema {
            self.dataset.schema = Some(s.clone());
        }
        if let Some(k) = overrides.seeds {
            self.run.seeds = k;
        }
        if let Some(o) = &overrides.out {
            self.run.out = o.clone();
        }
        if let Some(g) = &overrides.lambda_grid {
            self.run.lambda_grid = g.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(CliError::config(format!("test_fraction must lie in (0, 1), got {}", d.test_fraction)));
        }
        if !(0.0..=1.0).contains(&d.gamma) {
            return Err(CliError::config(format!("gamma must lie in [0, 1], got {}", d.gamma)));
        }
        let r = &self.run;
        if r.seeds == 0 {
            return Err(CliError::config("seeds must be at least 1"));
        }
        if r.methods.is_empty() {
            return Err(CliError::config("no methods selected"));
        }
        if r.neighbors == 0 {
            return Err(CliError::config("neighbors must be at least 1"));
        }
        if !(r.tau.is_finite() && r.tau >= 0.0) {
            return Err(CliError::config(format!("tau must be finite and >= 0, got {}", r.tau)));
        }
        self.lambda_grid()?;
        Ok(())
    }

    pub fn lambda_grid(&self) -> Result<Vec<Lambda>> {
        parse_grid(&self.run.lambda_grid)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.run.seeds as u64).map(move |k| self.run.base_seed.wrapping_add(k))
    }

    pub fn source(&self) -> Result<DataSource> {
        let d = &self.dataset;
        let synthetic = match d.source.as_str() {
            "synthetic-1d" => Some(DataSource::Synthetic1d { n: d.n, gamma: d.gamma }),
            "synthetic-2d" => Some(DataSource::Synthetic2d { n: d.n, gamma: d.gamma }),
            _ => None,
        };
        if let Some(s) = synthetic {
            return Ok(s);
        }
        let schema = match (&d.schema, builtin_schema(&d.source)) {
            (Some(path), _) => CsvSchema::load(path).map_err(CliError::Dataset)?,
            (None, Some(text)) => CsvSchema::from_toml_str(text).map_err(CliError::Dataset)?,
            (None, None) if d.source == "csv" => {
                return Err(CliError::config("csv sources need a schema file"))
            }
            (None, None) => {
                return Err(CliError::config(format!("unknown dataset source {:?}", d.source)))
            }
        };
        let path = match &d.path {
            Some(p) => p.clone(),
            None if d.source == "csv" => return Err(CliError::config("csv sources need a path")),
            None => PathBuf::from(format!("data/{}.csv", d.source)),
        };
        Ok(DataSource::Csv { path, schema })
    }
}
