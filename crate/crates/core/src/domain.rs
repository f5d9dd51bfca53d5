//! Shared data types. Everything here is immutable once constructed and
//! validated on the way in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a pseudo-measure.
pub const MEASURE_MASS_TOL: f64 = 1e-9;
/// Tolerance on transport plan marginals.
pub const PLAN_MARGINAL_TOL: f64 = 1e-7;
/// Tolerance on `p_plus + p_minus = 1`.
pub const PRIOR_SUM_TOL: f64 = 1e-12;

/// Binary sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Plus,
    Minus,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::Plus => Group::Minus,
            Group::Minus => Group::Plus,
        }
    }

    /// Parses the usual spellings of the two labels. Anything else is rejected.
    pub fn parse_label(label: &str) -> Option<Group> {
        match label.trim() {
            "+" | "plus" | "Plus" | "PLUS" => Some(Group::Plus),
            "-" | "\u{2212}" | "minus" | "Minus" | "MINUS" => Some(Group::Minus),
            _ => None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Plus => f.write_str("plus"),
            Group::Minus => f.write_str("minus"),
        }
    }
}

/// One unvalidated input row, as it comes out of a reader.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub features: Vec<f64>,
    pub target: f64,
    pub sensitive: String,
}

/// Features, target and sensitive attribute for `n` individuals.
///
/// Features are stored row-major in a single buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    target: Vec<f64>,
    sensitive: Vec<Group>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, target: Vec<f64>, sensitive: Vec<Group>) -> Result<Self> {
        let n_features = features.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(features.len() * n_features);
        for (row, f) in features.iter().enumerate() {
            if f.len() != n_features {
                return Err(Error::Dimension {
                    row: Some(row),
                    expected: n_features,
                    found: f.len(),
                });
            }
            flat.extend_from_slice(f);
        }
        Self::from_flat(flat, n_features, target, sensitive)
    }

    pub fn from_flat(
        features: Vec<f64>,
        n_features: usize,
        target: Vec<f64>,
        sensitive: Vec<Group>,
    ) -> Result<Self> {
        let n = target.len();
        if n == 0 {
            return Err(Error::Empty("dataset has no rows"));
        }
        if sensitive.len() != n {
            return Err(Error::Dimension {
                row: None,
                expected: n,
                found: sensitive.len(),
            });
        }
        if features.len() != n * n_features {
            return Err(Error::Dimension {
                row: None,
                expected: n * n_features,
                found: features.len(),
            });
        }
        for (row, y) in target.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::NonFinite { row, what: "target" });
            }
        }
        if n_features > 0 {
            for (row, chunk) in features.chunks(n_features).enumerate() {
                if chunk.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { row, what: "feature" });
                }
            }
        }
        Ok(Dataset {
            features,
            n_features,
            target,
            sensitive,
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn sensitive(&self) -> &[Group] {
        &self.sensitive
    }

    pub fn count(&self, group: Group) -> usize {
        self.sensitive.iter().filter(|&&s| s == group).count()
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            target: indices.iter().map(|&i| self.target[i]).collect(),
            sensitive: indices.iter().map(|&i| self.sensitive[i]).collect(),
        }
    }

    /// Same rows with the target replaced.
    pub fn with_target(&self, target: Vec<f64>) -> Result<Dataset> {
        Self::from_flat(
            self.features.clone(),
            self.n_features,
            target,
            self.sensitive.clone(),
        )
    }

    /// Appends the sensitive attribute as a trailing 0/1 feature (1 for plus).
    pub fn with_sensitive_feature(&self) -> Dataset {
        let p = self.n_features + 1;
        let mut features = Vec::with_capacity(self.len() * p);
        for i in 0..self.len() {
            features.extend_from_slice(self.row(i));
            features.push(if self.sensitive[i] == Group::Plus { 1.0 } else { 0.0 });
        }
        Dataset {
            features,
            n_features: p,
            target: self.target.clone(),
            sensitive: self.sensitive.clone(),
        }
    }
}

/// Builds a [`Dataset`] from raw rows, reporting the first offending row.
pub fn validate_dataset(rows: &[RawRow]) -> Result<Dataset> {
    let first = rows.first().ok_or(Error::Empty("no rows"))?;
    let p = first.features.len();
    let mut features = Vec::with_capacity(rows.len() * p);
    let mut target = Vec::with_capacity(rows.len());
    let mut sensitive = Vec::with_capacity(rows.len());
    for (row, r) in rows.iter().enumerate() {
        if r.features.len() != p {
            return Err(Error::Dimension {
                row: Some(row),
                expected: p,
                found: r.features.len(),
            });
        }
        if r.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, what: "feature" });
        }
        if !r.target.is_finite() {
            return Err(Error::NonFinite { row, what: "target" });
        }
        let s = Group::parse_label(&r.sensitive).ok_or_else(|| Error::InvalidLabel {
            row,
            label: r.sensitive.clone(),
        })?;
        features.extend_from_slice(&r.features);
        target.push(r.target);
        sensitive.push(s);
    }
    Dataset::from_flat(features, p, target, sensitive)
}

/// Group probabilities `p+ = P(S = +)` and `p- = P(S = -)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupPriors {
    p_plus: f64,
    p_minus: f64,
}

impl GroupPriors {
    pub fn new(p_plus: f64, p_minus: f64) -> Result<Self> {
        let open_unit = |p: f64| p.is_finite() && p > 0.0 && p < 1.0;
        if !open_unit(p_plus) || !open_unit(p_minus) {
            return Err(Error::param(
                "group priors",
                format!("need 0 < p < 1, got p+={p_plus}, p-={p_minus}"),
            ));
        }
        if (p_plus + p_minus - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(Error::param(
                "group priors",
                format!("p+ + p- = {} != 1", p_plus + p_minus),
            ));
        }
        Ok(GroupPriors { p_plus, p_minus })
    }

    pub fn from_plus(p_plus: f64) -> Result<Self> {
        Self::new(p_plus, 1.0 - p_plus)
    }

    /// Empirical frequencies of the two labels.
    pub fn from_groups(groups: &[Group]) -> Result<Self> {
        let n = groups.len();
        if n == 0 {
            return Err(Error::Empty("no sensitive labels"));
        }
        let plus = groups.iter().filter(|&&g| g == Group::Plus).count();
        if plus == 0 || plus == n {
            return Err(Error::SingleClass);
        }
        let minus = n - plus;
        Self::new(plus as f64 / n as f64, minus as f64 / n as f64)
    }

    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        Self::from_groups(dataset.sensitive())
    }

    pub fn plus(&self) -> f64 {
        self.p_plus
    }

    pub fn minus(&self) -> f64 {
        self.p_minus
    }

    pub fn of(&self, group: Group) -> f64 {
        match group {
            Group::Plus => self.p_plus,
            Group::Minus => self.p_minus,
        }
    }
}

/// A support point `(h, d)` of a pseudo-measure with its normalized mass `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoPoint {
    /// Base prediction.
    pub h: f64,
    /// Signed group probability ratio.
    pub d: f64,
    /// Normalized mass.
    pub w: f64,
}

/// Empirical positive or negative part of the signed measure, pushed to the
/// `(h, d)` plane. May be empty when the corresponding side has no points.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMeasure {
    side: Group,
    points: Vec<PseudoPoint>,
}

impl PseudoMeasure {
    pub fn new(side: Group, points: Vec<PseudoPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.h.is_finite() || !p.d.is_finite() {
                return Err(Error::NonFinite { row: i, what: "pseudo-point" });
            }
            let right_sign = match side {
                Group::Plus => p.d > 0.0,
                Group::Minus => p.d < 0.0,
            };
            if !right_sign {
                return Err(Error::Invariant(format!(
                    "point {i} has d={} on the {side} side",
                    p.d
                )));
            }
            if !(p.w.is_finite() && p.w >= 0.0) {
                return Err(Error::Invariant(format!("point {i} has mass {}", p.w)));
            }
        }
        if !points.is_empty() {
            let total: f64 = points.iter().map(|p| p.w).sum();
            if (total - 1.0).abs() > MEASURE_MASS_TOL {
                return Err(Error::Invariant(format!(
                    "{side} pseudo-measure has total mass {total}"
                )));
            }
        }
        Ok(PseudoMeasure { side, points })
    }

    pub fn side(&self) -> Group {
        self.side
    }

    pub fn points(&self) -> &[PseudoPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.w).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    /// Index into the plus side (rows).
    pub i: usize,
    /// Index into the minus side (columns).
    pub j: usize,
    pub mass: f64,
}

/// Sparse coupling between two discrete measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Vec<PlanEntry>,
    n_plus: usize,
    n_minus: usize,
}

impl TransportPlan {
    /// Builds a plan, checking indices and positivity of every entry.
    pub fn new(entries: Vec<PlanEntry>, n_plus: usize, n_minus: usize) -> Result<Self> {
        for e in &entries {
            if e.i >= n_plus || e.j >= n_minus {
                return Err(Error::IndexOutOfRange {
                    row: e.i,
                    col: e.j,
                    rows: n_plus,
                    cols: n_minus,
                });
            }
            if !(e.mass.is_finite() && e.mass > 0.0) {
                return Err(Error::Invariant(format!(
                    "plan entry ({}, {}) has mass {}",
                    e.i, e.j, e.mass
                )));
            }
        }
        Ok(TransportPlan {
            entries,
            n_plus,
            n_minus,
        })
    }

    /// Builds a plan and also checks both marginals against `a` and `b`.
    pub fn with_marginals(entries: Vec<PlanEntry>, a: &[f64], b: &[f64]) -> Result<Self> {
        let plan = Self::new(entries, a.len(), b.len())?;
        plan.check_marginals(a, b, PLAN_MARGINAL_TOL)?;
        Ok(plan)
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn n_minus(&self) -> usize {
        self.n_minus
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut rows = vec![0.0; self.n_plus];
        for e in &self.entries {
            rows[e.i] += e.mass;
        }
        rows
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut cols = vec![0.0; self.n_minus];
        for e in &self.entries {
            cols[e.j] += e.mass;
        }
        cols
    }

    pub fn check_marginals(&self, a: &[f64], b: &[f64], tol: f64) -> Result<()> {
        if a.len() != self.n_plus || b.len() != self.n_minus {
            return Err(Error::Dimension {
                row: None,
                expected: self.n_plus * self.n_minus,
                found: a.len() * b.len(),
            });
        }
        for (i, (r, w)) in self.row_sums().iter().zip(a).enumerate() {
            if (r - w).abs() > tol {
                return Err(Error::Invariant(format!("row {i} carries {r}, expected {w}")));
            }
        }
        for (j, (c, w)) in self.col_sums().iter().zip(b).enumerate() {
            if (c - w).abs() > tol {
                return Err(Error::Invariant(format!("column {j} carries {c}, expected {w}")));
            }
        }
        Ok(())
    }

    /// Dense `n_plus x n_minus` view, for small problems and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n_minus]; self.n_plus];
        for e in &self.entries {
            m[e.i][e.j] += e.mass;
        }
        m
    }
}

/// Fairness penalty between the two prediction distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Penalty {
    /// Squared Wasserstein-2.
    W2,
    /// Total variation.
    TV,
}

/// Whether the sensitive attribute is observed at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Aware,
    Unaware,
}

/// Penalty strength. `Infinite` is the exact-fairness limit and is handled
/// by dedicated branches everywhere, never by a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Finite(f64),
    Infinite,
}

impl Lambda {
    pub fn finite(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::param("lambda", format!("must be >= 0, got {value}")));
        }
        if value.is_infinite() {
            return Ok(Lambda::Infinite);
        }
        Ok(Lambda::Finite(value))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Lambda::Infinite)
    }

    /// Value as a float, `+inf` for the sentinel.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Lambda::Finite(v) => v,
            Lambda::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Finite(v) => write!(f, "{v}"),
            Lambda::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" | "+inf" => Ok(Lambda::Infinite),
            _ => {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::param("lambda", format!("cannot parse {t:?}")))?;
                Lambda::finite(v)
            }
        }
    }
}

/// Default dead-zone threshold on `|d|`.
pub const DEFAULT_TAU: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationConfig {
    pub penalty: Penalty,
    pub setting: Setting,
    pub lambda: Lambda,
    pub tau: f64,
}

impl RelaxationConfig {
    pub fn new(penalty: Penalty, setting: Setting, lambda: Lambda, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::param("tau", format!("must be finite and >= 0, got {tau}")));
        }
        if let Lambda::Finite(v) = lambda {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param("lambda", format!("must be >= 0, got {v}")));
            }
        }
        Ok(RelaxationConfig {
            penalty,
            setting,
            lambda,
            tau,
        })
    }

    pub fn unaware(penalty: Penalty, lambda: Lambda) -> Self {
        RelaxationConfig {
            penalty,
            setting: Setting::Unaware,
            lambda,
            tau: DEFAULT_TAU,
        }
    }

    pub fn aware(penalty: Penalty, lambda: Lambda) -> Self {
        RelaxationConfig {
            penalty,
            setting: Setting::Aware,
            lambda,
            tau: DEFAULT_TAU,
        }
    }
}

/// Accuracy and unfairness of one predictor on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub mse: f64,
    pub w2: f64,
    /// 50-bin histogram total variation.
    pub tv: f64,
    pub ks: f64,
    /// KS evaluated on a 50-point grid.
    pub ks_grid: f64,
    pub var_plus: f64,
    pub var_minus: f64,
}

impl FairnessReport {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("mse", self.mse),
            ("w2", self.w2),
            ("var_plus", self.var_plus),
            ("var_minus", self.var_minus),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Invariant(format!("report field {name} = {v}")));
            }
        }
        let unit = [("tv", self.tv), ("ks", self.ks), ("ks_grid", self.ks_grid)];
        for (name, v) in unit {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::Invariant(format!("report field {name} = {v}")));
            }
        }
        Ok(())
    }
}
