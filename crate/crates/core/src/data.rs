//! Synthetic generators with exact oracles, CSV ingestion driven by a TOML
//! schema, target scaling and stratified splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Deserialize;

use crate::domain::{Dataset, Group};
use crate::error::{Error, Result};
use crate::estimators::sigmoid;

/// Seeded xoshiro256++ stream with Box-Muller normals. Bit-reproducible
/// across platforms for a given seed.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`, by rejection.
    pub fn below(&mut self, n: usize) -> usize {
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

/// Draws `(S, X)` with `X = gamma Z + sqrt(1 - gamma^2) N`, `Z = +-1`.
fn confounded(rng: &mut Rng, gamma: f64) -> (Group, f64) {
    let s = if rng.uniform() < 0.5 { Group::Plus } else { Group::Minus };
    let z = if s == Group::Plus { 1.0 } else { -1.0 };
    let noise = rng.normal();
    (s, gamma * z + (1.0 - gamma * gamma).sqrt() * noise)
}

/// `Y = 3 tanh(1.5 X) + N(0, 0.25)` with one confounded feature.
pub fn gen_synthetic_1d(n: usize, gamma: f64, seed: u64) -> Result<Dataset> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(Error::Empty("synthetic sample size"));
    }
    let mut rng = Rng::new(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for _ in 0..n {
        let (g, xi) = confounded(&mut rng, gamma);
        let eps = 0.5 * rng.normal();
        x.push(xi);
        y.push(oracle_eta_1d(xi) + eps);
        s.push(g);
    }
    Dataset::from_flat(x, 1, y, s)
}

/// `Y = 2 X1 - X2 + N(0, 0.25)` with `X1` confounded and `X2 ~ N(0, 1)`.
pub fn gen_synthetic_2d(n: usize, gamma: f64, seed: u64) -> Result<Dataset> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(Error::Empty("synthetic sample size"));
    }
    let mut rng = Rng::new(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for _ in 0..n {
        let (g, x1) = confounded(&mut rng, gamma);
        let x2 = rng.normal();
        let eps = 0.5 * rng.normal();
        x.push(x1);
        x.push(x2);
        y.push(oracle_eta_2d(&[x1, x2]) + eps);
        s.push(g);
    }
    Dataset::from_flat(x, 2, y, s)
}

pub fn oracle_eta_1d(x: f64) -> f64 {
    3.0 * (1.5 * x).tanh()
}

/// `P(S = + | X = x)` for the confounded feature.
pub fn oracle_posterior_1d(x: f64, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("posterior needs gamma in [0, 1), got {gamma}")));
    }
    Ok(sigmoid(2.0 * gamma * x / (1.0 - gamma * gamma)))
}

pub fn oracle_eta_2d(x: &[f64]) -> f64 {
    2.0 * x[0] - x[1]
}

/// The second feature is independent of the group.
pub fn oracle_posterior_2d(x: &[f64], gamma: f64) -> Result<f64> {
    oracle_posterior_1d(x[0], gamma)
}

/// How the sensitive column is binarized; rows that match are `plus`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum PositiveRule {
    Equals { value: String },
    OneOf { values: Vec<String> },
    /// Numeric value strictly above the threshold.
    Above { threshold: f64 },
    /// The sensitive column is at least every listed column.
    Argmax { columns: Vec<String> },
}

/// Column roles for a CSV file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub target: String,
    pub sensitive: String,
    pub positive: PositiveRule,
    /// Feature columns; all remaining columns when absent.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    /// Columns one-hot encoded even if their values parse as numbers.
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    /// Cell values treated as missing.
    #[serde(default)]
    pub na_values: Vec<String>,
    /// Drop inferred feature columns that contain a missing cell.
    #[serde(default)]
    pub drop_na_columns: bool,
}

impl CsvSchema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Csv {
            row,
            message: format!("{kind:?}"),
        },
    }
}

/// Reads a CSV with a header row. Numeric feature columns pass through;
/// others are one-hot encoded with levels in sorted order. The target is
/// returned unscaled; see [`TargetScaler`]. Row numbers in errors are file
/// line numbers.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let headers: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(records.len() + 2, |p| p.line() as usize);
        records.push((line, rec.iter().map(String::from).collect::<Vec<_>>()));
    }
    parse_table(&headers, &records, schema)
}

fn column(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
}

fn parse_number(cell: &str, line: usize, name: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Csv {
            row: line,
            message: format!("column {name:?}: cannot parse {cell:?} as a number"),
        }),
    }
}

fn parse_table(
    headers: &[String],
    records: &[(usize, Vec<String>)],
    schema: &CsvSchema,
) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::Empty("csv has no data rows"));
    }
    let t_col = column(headers, &schema.target)?;
    let s_col = column(headers, &schema.sensitive)?;
    let argmax_cols: Vec<usize> = match &schema.positive {
        PositiveRule::Argmax { columns } => {
            columns.iter().map(|c| column(headers, c)).collect::<Result<_>>()?
        }
        _ => Vec::new(),
    };
    for name in schema.drop.iter().chain(&schema.categorical) {
        column(headers, name)?;
    }

    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| column(headers, n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&c| c != t_col && c != s_col && !schema.drop.contains(&headers[c]))
            .filter(|&c| {
                !schema.drop_na_columns
                    || !records.iter().any(|(_, cells)| schema.na_values.contains(&cells[c]))
            })
            .collect(),
    };

    let mut target = Vec::with_capacity(records.len());
    let mut sensitive = Vec::with_capacity(records.len());
    for (line, cells) in records {
        target.push(parse_number(&cells[t_col], *line, &schema.target)?);
        let cell = &cells[s_col];
        let plus = match &schema.positive {
            PositiveRule::Equals { value } => cell == value,
            PositiveRule::OneOf { values } => values.iter().any(|v| v == cell),
            PositiveRule::Above { threshold } => {
                parse_number(cell, *line, &schema.sensitive)? > *threshold
            }
            PositiveRule::Argmax { columns } => {
                let own = parse_number(cell, *line, &schema.sensitive)?;
                let mut best = true;
                for (name, &c) in columns.iter().zip(&argmax_cols) {
                    if parse_number(&cells[c], *line, name)? > own {
                        best = false;
                    }
                }
                best
            }
        };
        sensitive.push(if plus { Group::Plus } else { Group::Minus });
    }
    for g in [Group::Plus, Group::Minus] {
        let count = sensitive.iter().filter(|&&s| s == g).count();
        if count < 2 {
            return Err(Error::GroupTooSmall { group: g, count, needed: 2 });
        }
    }

    // Each feature column expands to one numeric column or a block of
    // indicator columns.
    enum Encoding {
        Numeric,
        OneHot(BTreeMap<String, usize>),
    }
    let mut encodings = Vec::with_capacity(feature_cols.len());
    let mut width = 0;
    for &c in &feature_cols {
        let name = &headers[c];
        let categorical = schema.categorical.contains(name)
            || records.iter().any(|(_, cells)| cells[c].parse::<f64>().is_err())
                && records.first().is_some_and(|(_, cells)| cells[c].parse::<f64>().is_err());
        if categorical {
            let levels: BTreeSet<&str> = records.iter().map(|(_, cells)| cells[c].as_str()).collect();
            let map: BTreeMap<String, usize> =
                levels.into_iter().enumerate().map(|(k, l)| (l.to_string(), k)).collect();
            width += map.len();
            encodings.push(Encoding::OneHot(map));
        } else {
            width += 1;
            encodings.push(Encoding::Numeric);
        }
    }

    let mut features = Vec::with_capacity(records.len() * width);
    for (line, cells) in records {
        for (&c, enc) in feature_cols.iter().zip(&encodings) {
            match enc {
                Encoding::Numeric => features.push(parse_number(&cells[c], *line, &headers[c])?),
                Encoding::OneHot(levels) => {
                    let hit = levels[cells[c].as_str()];
                    features.extend((0..levels.len()).map(|k| if k == hit { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    Dataset::from_flat(features, width, target, sensitive)
}

/// Affine map of the training target range onto [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScaler {
    pub min: f64,
    pub max: f64,
}

impl TargetScaler {
    pub fn fit(target: &[f64]) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Empty("target"));
        }
        let (min, max) = target
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(max > min) {
            return Err(Error::param("target", "constant target cannot be scaled"));
        }
        Ok(TargetScaler { min, max })
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.min) / (self.max - self.min) * 2.0 - 1.0
    }

    pub fn inverse(&self, z: f64) -> f64 {
        (z + 1.0) / 2.0 * (self.max - self.min) + self.min
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        dataset.with_target(dataset.target().iter().map(|&y| self.scale(y)).collect())
    }
}

/// Sorted train and test row indices, split within each group.
pub fn stratified_split_indices(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::param("test_fraction", format!("must lie in [0, 1], got {test_fraction}")));
    }
    let mut rng = Rng::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for g in [Group::Plus, Group::Minus] {
        let mut idx: Vec<usize> =
            (0..dataset.len()).filter(|&i| dataset.sensitive()[i] == g).collect();
        if idx.len() < 2 {
            return Err(Error::GroupTooSmall { group: g, count: idx.len(), needed: 2 });
        }
        for i in (1..idx.len()).rev() {
            let j = rng.below(i + 1);
            idx.swap(i, j);
        }
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(dataset, test_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
