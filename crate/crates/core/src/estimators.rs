//! Base learners: least squares for the regression function, logistic
//! regression for the group posterior, and a k-nearest-neighbour regressor
//! on the `(h, d)` plane for the final out-of-sample map.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::domain::{Dataset, Group};
use crate::error::{Error, Result};

/// Anything that predicts a real value from a feature vector.
pub trait Regressor {
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

/// Anything that estimates `P(S = + | X = x)`.
pub trait PosteriorModel {
    fn posterior_plus(&self, x: &[f64]) -> Result<f64>;
}

impl<T: Regressor + ?Sized> Regressor for &T {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        (**self).predict(x)
    }
}

impl<T: PosteriorModel + ?Sized> PosteriorModel for &T {
    fn posterior_plus(&self, x: &[f64]) -> Result<f64> {
        (**self).posterior_plus(x)
    }
}

/// Wraps a closure as a regressor, e.g. an analytic regression function.
#[derive(Clone)]
pub struct OracleRegressor<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Regressor for OracleRegressor<F> {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }
}

/// Wraps a closure as a group posterior.
#[derive(Clone)]
pub struct OraclePosterior<F>(pub F);

impl<F: Fn(&[f64]) -> f64> PosteriorModel for OraclePosterior<F> {
    fn posterior_plus(&self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            row: None,
            expected,
            found,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Ridge added to the normal equations; zero unless the design was
    /// rank deficient.
    pub ridge: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
            return Err(Error::Invariant("linear model weights must be finite".into()));
        }
        Ok(LinearModel {
            weights,
            intercept,
            ridge: 0.0,
        })
    }
}

impl Regressor for LinearModel {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        predict_linear(self, x)
    }
}

pub fn predict_linear(model: &LinearModel, x: &[f64]) -> Result<f64> {
    check_dim(model.weights.len(), x.len())?;
    Ok(dot(&model.weights, x) + model.intercept)
}

/// In-place Cholesky of a symmetric positive definite `p x p` matrix stored
/// row-major. Fails when a pivot is not clearly positive.
fn cholesky(a: &mut [f64], p: usize, pivot_floor: f64) -> bool {
    for j in 0..p {
        let mut s = a[j * p + j];
        for k in 0..j {
            s -= a[j * p + k] * a[j * p + k];
        }
        if !(s > pivot_floor) {
            return false;
        }
        let l = s.sqrt();
        a[j * p + j] = l;
        for i in j + 1..p {
            let mut t = a[i * p + j];
            for k in 0..j {
                t -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = t / l;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], p: usize, rhs: &[f64]) -> Vec<f64> {
    let mut z = rhs.to_vec();
    for i in 0..p {
        let mut s = z[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[k * p + i] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    z
}

/// Ordinary least squares with intercept, via centered normal equations.
///
/// A rank-deficient design falls back to a ridge of `1e-10 * trace` (grown
/// tenfold until the factorization succeeds); the ridge used is recorded on
/// the model.
pub fn fit_ols(x: &Dataset, y: &[f64]) -> Result<LinearModel> {
    let n = x.len();
    check_dim(n, y.len())?;
    if n == 0 {
        return Err(Error::Empty("no rows to fit"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invariant("non-finite regression target".into()));
    }
    let p = x.n_features();
    let nf = n as f64;
    let mut mean_x = vec![0.0; p];
    for row in x.rows() {
        for (m, v) in mean_x.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean_x.iter_mut().for_each(|m| *m /= nf);
    let mean_y = y.iter().sum::<f64>() / nf;

    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut centered = vec![0.0; p];
    for (row, &yi) in x.rows().zip(y) {
        for k in 0..p {
            centered[k] = row[k] - mean_x[k];
        }
        let ry = yi - mean_y;
        for a in 0..p {
            let ca = centered[a];
            rhs[a] += ca * ry;
            for b in 0..=a {
                gram[a * p + b] += ca * centered[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
    }

    let trace: f64 = (0..p).map(|k| gram[k * p + k]).sum();
    let max_diag = (0..p).map(|k| gram[k * p + k]).fold(0.0, f64::max);
    let mut ridge = 0.0;
    let weights = if p == 0 || max_diag == 0.0 {
        vec![0.0; p]
    } else {
        let floor = 1e-12 * max_diag;
        loop {
            let mut l = gram.clone();
            for k in 0..p {
                l[k * p + k] += ridge;
            }
            if cholesky(&mut l, p, floor) {
                break cholesky_solve(&l, p, &rhs);
            }
            ridge = if ridge == 0.0 { 1e-10 * trace } else { ridge * 10.0 };
            if ridge > trace {
                return Err(Error::Invariant("normal equations could not be factored".into()));
            }
        }
    };
    let intercept = mean_y - dot(&weights, &mean_x);
    let mut model = LinearModel::new(weights, intercept)?;
    model.ridge = ridge;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Gradient iterations actually run.
    pub iterations: usize,
    /// Gradient norm (in standardized coordinates) at exit.
    pub gradient_norm: f64,
}

impl LogisticModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
            return Err(Error::Invariant("logistic model weights must be finite".into()));
        }
        Ok(LogisticModel {
            weights,
            intercept,
            iterations: 0,
            gradient_norm: 0.0,
        })
    }
}

impl PosteriorModel for LogisticModel {
    fn posterior_plus(&self, x: &[f64]) -> Result<f64> {
        predict_proba(self, x)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

const PROBA_FLOOR: f64 = 1e-15;

/// `sigma(w.x + b)`, kept strictly inside (0, 1).
pub fn predict_proba(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    check_dim(model.weights.len(), x.len())?;
    let z = dot(&model.weights, x) + model.intercept;
    Ok(sigmoid(z).clamp(PROBA_FLOOR, 1.0 - PROBA_FLOOR))
}

pub const DEFAULT_LOGISTIC_ITERS: usize = 2000;
const LOGISTIC_GRAD_TOL: f64 = 1e-6;
const ARMIJO_C: f64 = 1e-4;

/// Unregularized logistic regression for `P(S = + | x)`, fitted by
/// full-batch gradient descent with Armijo backtracking on internally
/// standardized features.
pub fn fit_logistic(x: &Dataset, s: &[Group], max_iters: usize) -> Result<LogisticModel> {
    let n = x.len();
    check_dim(n, s.len())?;
    let plus = s.iter().filter(|&&g| g == Group::Plus).count();
    if plus == 0 || plus == n {
        return Err(Error::SingleClass);
    }
    let p = x.n_features();
    let nf = n as f64;

    let mut mean = vec![0.0; p];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut scale = vec![0.0; p];
    for row in x.rows() {
        for k in 0..p {
            scale[k] += (row[k] - mean[k]).powi(2);
        }
    }
    for k in 0..p {
        let sd = (scale[k] / nf).sqrt();
        scale[k] = if sd > 1e-12 * (1.0 + mean[k].abs()) { sd } else { 1.0 };
    }
    let z: Vec<f64> = x
        .rows()
        .flat_map(|row| (0..p).map(move |k| (row[k], k)))
        .map(|(v, k)| (v - mean[k]) / scale[k])
        .collect();
    let labels: Vec<f64> = s
        .iter()
        .map(|&g| if g == Group::Plus { 1.0 } else { 0.0 })
        .collect();

    // theta = [w_1..w_p, b]
    let loss = |theta: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let zi = dot(&theta[..p], &z[i * p..(i + 1) * p]) + theta[p];
            total += softplus(zi) - labels[i] * zi;
        }
        total / nf
    };
    let gradient = |theta: &[f64], g: &mut [f64]| {
        g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = &z[i * p..(i + 1) * p];
            let r = sigmoid(dot(&theta[..p], row) + theta[p]) - labels[i];
            for k in 0..p {
                g[k] += r * row[k];
            }
            g[p] += r;
        }
        g.iter_mut().for_each(|v| *v /= nf);
    };

    let mut theta = vec![0.0; p + 1];
    let mut grad = vec![0.0; p + 1];
    let mut trial = vec![0.0; p + 1];
    let mut current = loss(&theta);
    let mut step = 1.0;
    let mut iterations = 0;
    gradient(&theta, &mut grad);
    let mut gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    while iterations < max_iters && gnorm > LOGISTIC_GRAD_TOL {
        let g2 = gnorm * gnorm;
        step *= 2.0;
        loop {
            for k in 0..=p {
                trial[k] = theta[k] - step * grad[k];
            }
            let candidate = loss(&trial);
            if candidate <= current - ARMIJO_C * step * g2 {
                current = candidate;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                break;
            }
        }
        if step < 1e-20 {
            break;
        }
        std::mem::swap(&mut theta, &mut trial);
        iterations += 1;
        gradient(&theta, &mut grad);
        gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    }

    let weights: Vec<f64> = (0..p).map(|k| theta[k] / scale[k]).collect();
    let intercept = theta[p] - (0..p).map(|k| theta[k] * mean[k] / scale[k]).sum::<f64>();
    let mut model = LogisticModel::new(weights, intercept)?;
    model.iterations = iterations;
    model.gradient_norm = gnorm;
    Ok(model)
}

pub const DEFAULT_NEIGHBORS: usize = 15;

/// Inverse-distance weighted k-nearest-neighbour regression on the
/// `(h, d)` plane, after per-axis standardization with training statistics.
#[derive(Debug, Clone)]
pub struct NonparametricRegressor {
    k: usize,
    center: [f64; 2],
    scale: [f64; 2],
    /// Standardized training inputs sorted by first coordinate, each with
    /// its original index.
    sorted: Vec<([f64; 2], usize)>,
    targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

fn axis_stats(values: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let sd = if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 1.0 };
    (mean, sd)
}

pub fn fit_nonparametric(
    inputs: &[(f64, f64)],
    targets: &[f64],
    neighbors: usize,
) -> Result<NonparametricRegressor> {
    if inputs.is_empty() {
        return Err(Error::Empty("no training points for the fair map"));
    }
    check_dim(inputs.len(), targets.len())?;
    if neighbors == 0 {
        return Err(Error::param("neighbors", "must be at least 1"));
    }
    for (i, ((h, d), t)) in inputs.iter().zip(targets).enumerate() {
        if !(h.is_finite() && d.is_finite() && t.is_finite()) {
            return Err(Error::NonFinite { row: i, what: "fair map training point" });
        }
    }
    let n = inputs.len() as f64;
    let (mh, sh) = axis_stats(inputs.iter().map(|p| p.0), n);
    let (md, sd) = axis_stats(inputs.iter().map(|p| p.1), n);
    let mut sorted: Vec<([f64; 2], usize)> = inputs
        .iter()
        .enumerate()
        .map(|(i, &(h, d))| ([(h - mh) / sh, (d - md) / sd], i))
        .collect();
    sorted.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.1.cmp(&b.1)));
    Ok(NonparametricRegressor {
        k: neighbors.min(inputs.len()),
        center: [mh, md],
        scale: [sh, sd],
        sorted,
        targets: targets.to_vec(),
    })
}

impl NonparametricRegressor {
    pub fn neighbors(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn nearest(&self, q: [f64; 2]) -> Vec<Candidate> {
        let k = self.k;
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let start = self.sorted.partition_point(|(p, _)| p[0] < q[0]);
        let consider = |idx: usize, heap: &mut BinaryHeap<Candidate>| -> bool {
            let (p, original) = self.sorted[idx];
            let du2 = (p[0] - q[0]).powi(2);
            if heap.len() == k && du2 > heap.peek().map_or(f64::INFINITY, |c| c.dist2) {
                return false;
            }
            let c = Candidate {
                dist2: du2 + (p[1] - q[1]).powi(2),
                index: original,
            };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(c);
            }
            true
        };
        let mut left = start;
        let mut right = start;
        let (mut go_left, mut go_right) = (true, true);
        while go_left || go_right {
            if go_right {
                if right < self.sorted.len() {
                    go_right = consider(right, &mut heap);
                    right += 1;
                } else {
                    go_right = false;
                }
            }
            if go_left {
                if left > 0 {
                    left -= 1;
                    go_left = consider(left, &mut heap);
                } else {
                    go_left = false;
                }
            }
        }
        heap.into_sorted_vec()
    }
}

pub fn predict_nonparametric(model: &NonparametricRegressor, h: f64, d: f64) -> f64 {
    let q = [
        (h - model.center[0]) / model.scale[0],
        (d - model.center[1]) / model.scale[1],
    ];
    let neighbors = model.nearest(q);
    let exact: Vec<&Candidate> = neighbors.iter().filter(|c| c.dist2 == 0.0).collect();
    if !exact.is_empty() {
        return exact.iter().map(|c| model.targets[c.index]).sum::<f64>() / exact.len() as f64;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in &neighbors {
        let w = 1.0 / c.dist2.sqrt();
        num += w * model.targets[c.index];
        den += w;
    }
    num / den
}
