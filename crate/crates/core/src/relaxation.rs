//! Relaxed transport costs and targets for the unaware setting, the
//! projection of a coupling onto per-point pseudo-labels, and the fitted
//! fair predictor.
//!
//! For a coupled pair `z1 = (h1, d1)` on the plus side and `z2 = (h2, d2)` on
//! the minus side, with `a1 = |d1|` and `a2 = |d2|`, the kernels below are
//! the minimum over `(y1, y2)` of
//! `(h1 - y1)^2 / a1 + (h2 - y2)^2 / a2 + lambda * penalty(y1, y2)`
//! together with its minimizer.

use crate::decomposition::{build_partition, estimate_delta, JordanPartition};
use crate::domain::{
    Dataset, GroupPriors, Lambda, Penalty, PseudoPoint, RelaxationConfig, Setting, TransportPlan,
};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_nonparametric, predict_nonparametric, NonparametricRegressor, PosteriorModel, Regressor,
};
use crate::ot::{solve_transport, CostMatrix};

/// Targets of one coupled pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTargets {
    pub y_plus: f64,
    pub y_minus: f64,
    /// Both predictions collapsed to the common barycenter.
    pub merged: bool,
}

fn masses(z1: &PseudoPoint, z2: &PseudoPoint) -> Result<(f64, f64)> {
    let (a1, a2) = (z1.d.abs(), z2.d.abs());
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::param("d", "both points need a nonzero signed ratio"));
    }
    if !(z1.h.is_finite() && z2.h.is_finite() && a1.is_finite() && a2.is_finite()) {
        return Err(Error::param("pseudo-point", "coordinates must be finite"));
    }
    Ok((a1, a2))
}

fn check_lambda(lambda: Lambda) -> Result<()> {
    if let Lambda::Finite(v) = lambda {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::param("lambda", format!("must be >= 0, got {v}")));
        }
    }
    Ok(())
}

/// `(a2 h1 + a1 h2) / (a1 + a2)`, returning `h1` itself for a zero gap.
#[inline]
pub fn barycenter(h1: f64, a1: f64, h2: f64, a2: f64) -> f64 {
    if h1 == h2 {
        h1
    } else {
        (a2 * h1 + a1 * h2) / (a1 + a2)
    }
}

#[inline]
fn w2_cost_raw(h1: f64, a1: f64, h2: f64, a2: f64, lambda: Lambda) -> f64 {
    let g2 = (h1 - h2) * (h1 - h2);
    match lambda {
        Lambda::Infinite => g2 / (a1 + a2),
        Lambda::Finite(l) => l * g2 / (1.0 + l * (a1 + a2)),
    }
}

#[inline]
fn w2_targets_raw(h1: f64, a1: f64, h2: f64, a2: f64, lambda: Lambda) -> PairTargets {
    match lambda {
        Lambda::Infinite => {
            let y = barycenter(h1, a1, h2, a2);
            PairTargets {
                y_plus: y,
                y_minus: y,
                merged: true,
            }
        }
        Lambda::Finite(l) => {
            let g = h1 - h2;
            let denom = 1.0 + l * (a1 + a2);
            let y_plus = h1 - l * a1 * g / denom;
            let y_minus = h2 + l * a2 * g / denom;
            PairTargets {
                y_plus,
                y_minus,
                merged: y_plus == y_minus,
            }
        }
    }
}

/// Squared gap normalized by the summed masses; the TV merge threshold.
#[inline]
pub fn tv_threshold(h1: f64, a1: f64, h2: f64, a2: f64) -> f64 {
    (h1 - h2) * (h1 - h2) / (a1 + a2)
}

#[inline]
fn tv_cost_raw(h1: f64, a1: f64, h2: f64, a2: f64, lambda: Lambda) -> f64 {
    let t = tv_threshold(h1, a1, h2, a2);
    match lambda {
        Lambda::Infinite => t,
        Lambda::Finite(l) => l.min(t),
    }
}

#[inline]
fn tv_targets_raw(h1: f64, a1: f64, h2: f64, a2: f64, lambda: Lambda) -> PairTargets {
    let merge = match lambda {
        Lambda::Infinite => true,
        Lambda::Finite(l) => tv_threshold(h1, a1, h2, a2) <= l,
    };
    if merge {
        let y = barycenter(h1, a1, h2, a2);
        PairTargets {
            y_plus: y,
            y_minus: y,
            merged: true,
        }
    } else {
        PairTargets {
            y_plus: h1,
            y_minus: h2,
            merged: false,
        }
    }
}

/// `lambda (h1 - h2)^2 / (1 + lambda (a1 + a2))`; the unrelaxed cost
/// `(h1 - h2)^2 / (a1 + a2)` at `Infinite`.
pub fn cost_w2_unaware(z1: &PseudoPoint, z2: &PseudoPoint, lambda: Lambda) -> Result<f64> {
    let (a1, a2) = masses(z1, z2)?;
    check_lambda(lambda)?;
    Ok(w2_cost_raw(z1.h, a1, z2.h, a2, lambda))
}

pub fn targets_w2(z1: &PseudoPoint, z2: &PseudoPoint, lambda: Lambda) -> Result<PairTargets> {
    let (a1, a2) = masses(z1, z2)?;
    check_lambda(lambda)?;
    Ok(w2_targets_raw(z1.h, a1, z2.h, a2, lambda))
}

/// `min(lambda, (h1 - h2)^2 / (a1 + a2))`.
pub fn cost_tv_unaware(z1: &PseudoPoint, z2: &PseudoPoint, lambda: Lambda) -> Result<f64> {
    let (a1, a2) = masses(z1, z2)?;
    check_lambda(lambda)?;
    Ok(tv_cost_raw(z1.h, a1, z2.h, a2, lambda))
}

/// Merges to the barycenter when the threshold is at most `lambda`.
pub fn targets_tv(z1: &PseudoPoint, z2: &PseudoPoint, lambda: Lambda) -> Result<PairTargets> {
    let (a1, a2) = masses(z1, z2)?;
    check_lambda(lambda)?;
    Ok(tv_targets_raw(z1.h, a1, z2.h, a2, lambda))
}

/// Pairwise targets indexed by (plus point, minus point).
pub trait TargetLookup {
    fn targets(&self, i: usize, j: usize) -> PairTargets;
}

/// Dense table of pairwise targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTable {
    rows: usize,
    cols: usize,
    values: Vec<PairTargets>,
}

impl TargetTable {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> PairTargets {
        self.values[i * self.cols + j]
    }
}

impl TargetLookup for TargetTable {
    fn targets(&self, i: usize, j: usize) -> PairTargets {
        self.get(i, j)
    }
}

/// Costs and targets evaluated on demand from the two pseudo-measures, so
/// large problems never materialize `n_plus x n_minus` tables.
#[derive(Debug, Clone, Copy)]
pub struct RelaxedProblem<'a> {
    plus: &'a [PseudoPoint],
    minus: &'a [PseudoPoint],
    penalty: Penalty,
    lambda: Lambda,
}

impl<'a> RelaxedProblem<'a> {
    pub fn new(partition: &'a JordanPartition, config: &RelaxationConfig) -> Result<Self> {
        if partition.is_degenerate() {
            return Err(Error::DegeneratePartition);
        }
        check_lambda(config.lambda)?;
        Ok(RelaxedProblem {
            plus: partition.measure_plus.points(),
            minus: partition.measure_minus.points(),
            penalty: config.penalty,
            lambda: config.lambda,
        })
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (&self.plus[i], &self.minus[j]);
        match self.penalty {
            Penalty::W2 => w2_cost_raw(p.h, p.d.abs(), q.h, q.d.abs(), self.lambda),
            Penalty::TV => tv_cost_raw(p.h, p.d.abs(), q.h, q.d.abs(), self.lambda),
        }
    }
}

impl TargetLookup for RelaxedProblem<'_> {
    #[inline]
    fn targets(&self, i: usize, j: usize) -> PairTargets {
        let (p, q) = (&self.plus[i], &self.minus[j]);
        match self.penalty {
            Penalty::W2 => w2_targets_raw(p.h, p.d.abs(), q.h, q.d.abs(), self.lambda),
            Penalty::TV => tv_targets_raw(p.h, p.d.abs(), q.h, q.d.abs(), self.lambda),
        }
    }
}

/// Dense cost matrix and target table for a partition.
pub fn assemble_relaxed_problem(
    partition: &JordanPartition,
    config: &RelaxationConfig,
) -> Result<(CostMatrix, TargetTable)> {
    let problem = RelaxedProblem::new(partition, config)?;
    let (rows, cols) = (problem.plus.len(), problem.minus.len());
    let cost = CostMatrix::from_fn(rows, cols, |i, j| problem.cost(i, j))?;
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            values.push(problem.targets(i, j));
        }
    }
    Ok((cost, TargetTable { rows, cols, values }))
}

/// One pseudo-label per indexed point: plus and minus points take the
/// plan-weighted average of their pairwise targets, zero-side points keep
/// their base prediction.
///
/// Computed as `h + sum_j (P_ij / w_i) (y_ij - h)` so that targets equal to
/// `h` reproduce `h` exactly.
pub fn barycentric_project(
    plan: &TransportPlan,
    partition: &JordanPartition,
    targets: &impl TargetLookup,
) -> Result<Vec<f64>> {
    let plus = partition.measure_plus.points();
    let minus = partition.measure_minus.points();
    if plan.n_plus() != plus.len() || plan.n_minus() != minus.len() {
        return Err(Error::Dimension {
            row: None,
            expected: plus.len() * minus.len(),
            found: plan.n_plus() * plan.n_minus(),
        });
    }
    let mut shift_plus = vec![0.0; plus.len()];
    let mut shift_minus = vec![0.0; minus.len()];
    let mut row_mass = vec![0.0; plus.len()];
    let mut col_mass = vec![0.0; minus.len()];
    for e in plan.entries() {
        let t = targets.targets(e.i, e.j);
        shift_plus[e.i] += e.mass / plus[e.i].w * (t.y_plus - plus[e.i].h);
        shift_minus[e.j] += e.mass / minus[e.j].w * (t.y_minus - minus[e.j].h);
        row_mass[e.i] += e.mass;
        col_mass[e.j] += e.mass;
    }
    let mut labels = partition.h_values().to_vec();
    for (k, &idx) in partition.plus_indices.iter().enumerate() {
        if !(row_mass[k] > 0.0) {
            return Err(Error::Invariant(format!("plus point {idx} has no transported mass")));
        }
        labels[idx] = plus[k].h + shift_plus[k];
    }
    for (k, &idx) in partition.minus_indices.iter().enumerate() {
        if !(col_mass[k] > 0.0) {
            return Err(Error::Invariant(format!("minus point {idx} has no transported mass")));
        }
        labels[idx] = minus[k].h + shift_minus[k];
    }
    Ok(labels)
}

/// Plan and pseudo-labels for one configuration. A degenerate partition
/// has no plan and keeps the base predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub plan: Option<TransportPlan>,
    pub pseudo_labels: Vec<f64>,
}

pub fn solve_relaxed(
    partition: &JordanPartition,
    config: &RelaxationConfig,
) -> Result<RelaxedSolution> {
    if partition.is_degenerate() {
        return Ok(RelaxedSolution {
            plan: None,
            pseudo_labels: partition.h_values().to_vec(),
        });
    }
    let problem = RelaxedProblem::new(partition, config)?;
    let a = partition.measure_plus.weights();
    let b = partition.measure_minus.weights();
    let plan = solve_transport(&a, &b, |i, j| problem.cost(i, j))?;
    let pseudo_labels = barycentric_project(&plan, partition, &problem)?;
    Ok(RelaxedSolution {
        plan: Some(plan),
        pseudo_labels,
    })
}

/// Base predictions, signed ratios and priors on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSignals {
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    pub priors: GroupPriors,
}

pub fn training_signals<B, C>(dataset: &Dataset, base: &B, classifier: &C) -> Result<TrainingSignals>
where
    B: Regressor + ?Sized,
    C: PosteriorModel + ?Sized,
{
    let priors = GroupPriors::from_dataset(dataset)?;
    let mut h = Vec::with_capacity(dataset.len());
    let mut d = Vec::with_capacity(dataset.len());
    for x in dataset.rows() {
        h.push(base.predict(x)?);
        d.push(estimate_delta(classifier, &priors, x)?);
    }
    Ok(TrainingSignals { h, d, priors })
}

/// The learned map from `(h, d)` to a fair prediction.
#[derive(Debug, Clone)]
pub struct FairMap {
    tau: f64,
    map: Option<NonparametricRegressor>,
    solution: RelaxedSolution,
}

impl FairMap {
    /// Solves the relaxed problem on a partition of `signals` and fits the
    /// out-of-sample map on every training point.
    pub fn fit(
        signals: &TrainingSignals,
        partition: &JordanPartition,
        config: &RelaxationConfig,
        neighbors: usize,
    ) -> Result<Self> {
        if config.setting != Setting::Unaware {
            return Err(Error::param("setting", "the transport pipeline is for the unaware setting"));
        }
        let solution = solve_relaxed(partition, config)?;
        let map = if solution.plan.is_some() {
            let inputs: Vec<(f64, f64)> =
                signals.h.iter().zip(&signals.d).map(|(&h, &d)| (h, d)).collect();
            Some(fit_nonparametric(&inputs, &solution.pseudo_labels, neighbors)?)
        } else {
            None
        };
        Ok(FairMap {
            tau: config.tau,
            map,
            solution,
        })
    }

    /// True when the partition was one-sided and the map is the identity.
    pub fn is_identity(&self) -> bool {
        self.map.is_none()
    }

    pub fn solution(&self) -> &RelaxedSolution {
        &self.solution
    }

    pub fn pseudo_labels(&self) -> &[f64] {
        &self.solution.pseudo_labels
    }

    pub fn predict(&self, h: f64, d: f64) -> f64 {
        match &self.map {
            Some(map) if d.abs() > self.tau => predict_nonparametric(map, h, d),
            _ => h,
        }
    }
}

/// Base regressor, attribute classifier and learned fair map.
#[derive(Debug, Clone)]
pub struct FairPredictor<B, C> {
    pub base: B,
    pub classifier: C,
    pub priors: GroupPriors,
    pub config: RelaxationConfig,
    pub fair_map: FairMap,
}

pub fn fit_fair_predictor<B: Regressor, C: PosteriorModel>(
    dataset: &Dataset,
    base: B,
    classifier: C,
    config: &RelaxationConfig,
    neighbors: usize,
) -> Result<FairPredictor<B, C>> {
    let signals = training_signals(dataset, &base, &classifier)?;
    let partition = build_partition(&signals.h, &signals.d, config.tau)?;
    let fair_map = FairMap::fit(&signals, &partition, config, neighbors)?;
    Ok(FairPredictor {
        base,
        classifier,
        priors: signals.priors,
        config: *config,
        fair_map,
    })
}

impl<B: Regressor, C: PosteriorModel> FairPredictor<B, C> {
    pub fn predict_fair(&self, x: &[f64]) -> Result<f64> {
        let h = self.base.predict(x)?;
        let d = estimate_delta(&self.classifier, &self.priors, x)?;
        Ok(self.fair_map.predict(h, d))
    }

    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        dataset.rows().map(|x| self.predict_fair(x)).collect()
    }
}

pub fn predict_fair<B: Regressor, C: PosteriorModel>(
    predictor: &FairPredictor<B, C>,
    x: &[f64],
) -> Result<f64> {
    predictor.predict_fair(x)
}
