//! Closed-form maps for the aware setting, where the sensitive attribute is
//! available at prediction time.

use crate::domain::{Group, GroupPriors, Lambda, Penalty, TransportPlan};
use crate::error::{Error, Result};
use crate::ot::solve_monotone_1d;

/// Weighted empirical distribution on sorted support points.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
    /// `cumulative[i]` is the mass of the first `i` values.
    cumulative: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Uniform weights on a sample, sorted internally.
    pub fn from_sample(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Empty("empirical distribution"));
        }
        if let Some(i) = sample.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, what: "sample value" });
        }
        let mut values = sample.to_vec();
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let weights = vec![1.0 / n as f64; n];
        // Ratios i / n keep ranks from different samples exactly comparable.
        let cumulative = (0..=n).map(|i| i as f64 / n as f64).collect();
        Ok(EmpiricalDistribution {
            values,
            weights,
            cumulative,
        })
    }

    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("empirical distribution"));
        }
        if values.len() != weights.len() {
            return Err(Error::Dimension {
                row: None,
                expected: values.len(),
                found: weights.len(),
            });
        }
        if values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Unsorted("distribution"));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Invariant(format!("weight {i} must be positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!("weights sum to {total}")));
        }
        let mut cumulative = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        *cumulative.last_mut().expect("nonempty") = 1.0;
        Ok(EmpiricalDistribution {
            values,
            weights,
            cumulative,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Right-continuous: mass of values `<= y`.
    pub fn cdf(&self, y: f64) -> f64 {
        self.cumulative[self.values.partition_point(|&v| v <= y)]
    }

    /// Left-continuous generalized inverse: smallest value whose CDF is at
    /// least `t`, for `t` in (0, 1].
    pub fn quantile(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::param("t", format!("quantile level {t} outside (0, 1]")));
        }
        let idx = self.cumulative[1..].partition_point(|&c| c < t);
        Ok(self.values[idx.min(self.values.len() - 1)])
    }

    /// CDF value at `y`, clamped to `[1/(2n), 1]` so it is a valid
    /// quantile level.
    pub fn rank(&self, y: f64) -> f64 {
        self.cdf(y).max(0.5 / self.len() as f64)
    }
}

pub fn cdf(dist: &EmpiricalDistribution, y: f64) -> f64 {
    dist.cdf(y)
}

pub fn quantile(dist: &EmpiricalDistribution, t: f64) -> Result<f64> {
    dist.quantile(t)
}

fn dist_of<'a>(
    s: Group,
    plus: &'a EmpiricalDistribution,
    minus: &'a EmpiricalDistribution,
) -> &'a EmpiricalDistribution {
    match s {
        Group::Plus => plus,
        Group::Minus => minus,
    }
}

/// `p+ Q+(t) + p- Q-(t)`: the barycenter of the two group distributions at
/// quantile level `t`.
pub fn exact_fair_at_level(
    t: f64,
    dist_plus: &EmpiricalDistribution,
    dist_minus: &EmpiricalDistribution,
    priors: &GroupPriors,
) -> Result<f64> {
    Ok(priors.plus() * dist_plus.quantile(t)? + priors.minus() * dist_minus.quantile(t)?)
}

/// Exactly fair prediction for a point with base prediction `h` in group
/// `s`, through its within-group rank.
pub fn exact_fair_aware(
    h: f64,
    s: Group,
    dist_plus: &EmpiricalDistribution,
    dist_minus: &EmpiricalDistribution,
    priors: &GroupPriors,
) -> Result<f64> {
    let t = dist_of(s, dist_plus, dist_minus).rank(h);
    exact_fair_at_level(t, dist_plus, dist_minus, priors)
}

/// Weight kept on the base prediction: `p+ p- / (p+ p- + lambda)`.
pub fn interpolation_alpha(priors: &GroupPriors, lambda: Lambda) -> f64 {
    match lambda {
        Lambda::Infinite => 0.0,
        Lambda::Finite(l) => {
            let pp = priors.plus() * priors.minus();
            pp / (pp + l)
        }
    }
}

/// `(1 - alpha) f + alpha h` for the exactly fair value `f` at level `t`.
pub fn interpolate_w2_at_level(
    h: f64,
    t: f64,
    dist_plus: &EmpiricalDistribution,
    dist_minus: &EmpiricalDistribution,
    priors: &GroupPriors,
    lambda: Lambda,
) -> Result<f64> {
    let f = exact_fair_at_level(t, dist_plus, dist_minus, priors)?;
    let alpha = interpolation_alpha(priors, lambda);
    Ok((1.0 - alpha) * f + alpha * h)
}

/// Geodesic interpolation between the base and the exactly fair aware
/// predictor.
pub fn interpolate_w2_aware(
    h: f64,
    s: Group,
    dist_plus: &EmpiricalDistribution,
    dist_minus: &EmpiricalDistribution,
    priors: &GroupPriors,
    lambda: Lambda,
) -> Result<f64> {
    let t = dist_of(s, dist_plus, dist_minus).rank(h);
    interpolate_w2_at_level(h, t, dist_plus, dist_minus, priors, lambda)
}

/// Aware TV targets of a matched pair: both become `p+ h1 + p- h2` when
/// `p+ p- (h1 - h2)^2 <= lambda`, otherwise they stay put.
pub fn aware_tv_predict(h1: f64, h2: f64, priors: &GroupPriors, lambda: Lambda) -> (f64, f64) {
    let merge = match lambda {
        Lambda::Infinite => true,
        Lambda::Finite(l) => priors.plus() * priors.minus() * (h1 - h2) * (h1 - h2) <= l,
    };
    if merge {
        let y = if h1 == h2 { h1 } else { priors.plus() * h1 + priors.minus() * h2 };
        (y, y)
    } else {
        (h1, h2)
    }
}

/// Aware TV pseudo-labels on two training samples: monotone coupling, pairwise
/// thresholding, then plan-weighted averaging per point. Returns labels in
/// the input order of each sample.
pub fn aware_tv_pseudo_labels(
    sample_plus: &[f64],
    sample_minus: &[f64],
    priors: &GroupPriors,
    lambda: Lambda,
) -> Result<(Vec<f64>, Vec<f64>, TransportPlan)> {
    let order = |x: &[f64]| {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        idx
    };
    if sample_plus.is_empty() || sample_minus.is_empty() {
        return Err(Error::Empty("group sample"));
    }
    let op = order(sample_plus);
    let om = order(sample_minus);
    let xp: Vec<f64> = op.iter().map(|&i| sample_plus[i]).collect();
    let xm: Vec<f64> = om.iter().map(|&i| sample_minus[i]).collect();
    let wp = vec![1.0 / xp.len() as f64; xp.len()];
    let wm = vec![1.0 / xm.len() as f64; xm.len()];
    let plan = solve_monotone_1d(&xp, &wp, &xm, &wm)?;
    let mut shift_p = vec![0.0; xp.len()];
    let mut shift_m = vec![0.0; xm.len()];
    for e in plan.entries() {
        let (y1, y2) = aware_tv_predict(xp[e.i], xm[e.j], priors, lambda);
        shift_p[e.i] += e.mass / wp[e.i] * (y1 - xp[e.i]);
        shift_m[e.j] += e.mass / wm[e.j] * (y2 - xm[e.j]);
    }
    let mut lp = vec![0.0; xp.len()];
    let mut lm = vec![0.0; xm.len()];
    for (k, &i) in op.iter().enumerate() {
        lp[i] = xp[k] + shift_p[k];
    }
    for (k, &j) in om.iter().enumerate() {
        lm[j] = xm[k] + shift_m[k];
    }
    Ok((lp, lm, plan))
}

/// A per-group map applied to a base prediction.
pub trait GroupTransport {
    fn transport(&self, h: f64, s: Group) -> Result<f64>;
}

/// Aware predictor built from the base predictions of a training set split
/// by the true group.
#[derive(Debug, Clone, PartialEq)]
pub struct AwarePredictor {
    pub dist_plus: EmpiricalDistribution,
    pub dist_minus: EmpiricalDistribution,
    pub priors: GroupPriors,
    pub penalty: Penalty,
    pub lambda: Lambda,
}

impl AwarePredictor {
    pub fn fit(
        h: &[f64],
        sensitive: &[Group],
        penalty: Penalty,
        lambda: Lambda,
    ) -> Result<Self> {
        if h.len() != sensitive.len() {
            return Err(Error::Dimension {
                row: None,
                expected: h.len(),
                found: sensitive.len(),
            });
        }
        let priors = GroupPriors::from_groups(sensitive)?;
        let pick = |g: Group| -> Vec<f64> {
            h.iter().zip(sensitive).filter(|(_, &s)| s == g).map(|(&v, _)| v).collect()
        };
        Ok(AwarePredictor {
            dist_plus: EmpiricalDistribution::from_sample(&pick(Group::Plus))?,
            dist_minus: EmpiricalDistribution::from_sample(&pick(Group::Minus))?,
            priors,
            penalty,
            lambda,
        })
    }

    pub fn predict(&self, h: f64, s: Group) -> Result<f64> {
        match self.penalty {
            Penalty::W2 => interpolate_w2_aware(
                h,
                s,
                &self.dist_plus,
                &self.dist_minus,
                &self.priors,
                self.lambda,
            ),
            Penalty::TV => {
                let t = dist_of(s, &self.dist_plus, &self.dist_minus).rank(h);
                let partner = dist_of(s.other(), &self.dist_plus, &self.dist_minus).quantile(t)?;
                Ok(match s {
                    Group::Plus => aware_tv_predict(h, partner, &self.priors, self.lambda).0,
                    Group::Minus => aware_tv_predict(partner, h, &self.priors, self.lambda).1,
                })
            }
        }
    }
}

impl GroupTransport for AwarePredictor {
    fn transport(&self, h: f64, s: Group) -> Result<f64> {
        self.predict(h, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relaxation::{cost_tv_unaware, targets_tv};
    use crate::domain::PseudoPoint;
    use crate::metrics::w2_empirical;
    use proptest::prelude::*;

    fn uniform(v: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::from_sample(v).unwrap()
    }

    fn half() -> GroupPriors {
        GroupPriors::from_plus(0.5).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let d = uniform(&[3.0, 1.0, 2.0]);
        assert_eq!(d.cdf(0.0), 0.0);
        assert_eq!(d.cdf(10.0), 1.0);
        assert_eq!(d.cdf(2.0), 2.0 / 3.0);
    }

    #[test]
    fn quantile_examples() {
        let d = uniform(&[1.0, 2.0, 3.0]);
        assert_eq!(d.quantile(1.0).unwrap(), 3.0);
        assert_eq!(d.quantile(0.5).unwrap(), 2.0);
        assert_eq!(d.quantile(1.0 / 3.0).unwrap(), 1.0);
        let single = uniform(&[4.2]);
        for t in [1e-9, 0.3, 1.0] {
            assert_eq!(single.quantile(t).unwrap(), 4.2);
        }
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.5).is_err());
    }

    #[test]
    fn weighted_distribution() {
        let d = EmpiricalDistribution::new(vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        assert_eq!(d.cdf(0.5), 0.25);
        assert_eq!(d.quantile(0.3).unwrap(), 1.0);
        assert!(EmpiricalDistribution::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn exact_map_examples() {
        let (p, m) = (uniform(&[1.0]), uniform(&[3.0]));
        for (h, s) in [(1.0, Group::Plus), (3.0, Group::Minus), (-7.0, Group::Plus)] {
            assert_eq!(exact_fair_aware(h, s, &p, &m, &half()).unwrap(), 2.0);
        }
        let same = uniform(&[0.0, 1.0, 2.0]);
        for h in [0.0, 1.0, 2.0] {
            assert_eq!(exact_fair_aware(h, Group::Plus, &same, &same, &half()).unwrap(), h);
        }
        let (p, m) = (uniform(&[0.0, 2.0]), uniform(&[1.0, 3.0]));
        assert_eq!(exact_fair_aware(0.0, Group::Plus, &p, &m, &half()).unwrap(), 0.5);
    }

    #[test]
    fn interpolation_examples() {
        let (p, m) = (uniform(&[0.0, 2.0]), uniform(&[1.0, 3.0]));
        let pr = half();
        assert_eq!(interpolate_w2_aware(0.0, Group::Plus, &p, &m, &pr, Lambda::Finite(0.0)).unwrap(), 0.0);
        assert_eq!(
            interpolate_w2_aware(2.0, Group::Plus, &p, &m, &pr, Lambda::Infinite).unwrap(),
            exact_fair_aware(2.0, Group::Plus, &p, &m, &pr).unwrap()
        );
        let skew = GroupPriors::from_plus(0.7).unwrap();
        let alpha = interpolation_alpha(&skew, Lambda::Finite(0.21));
        assert!((alpha - 0.5).abs() < 1e-15);
        let f = exact_fair_aware(2.0, Group::Plus, &p, &m, &skew).unwrap();
        let y = interpolate_w2_aware(2.0, Group::Plus, &p, &m, &skew, Lambda::Finite(0.21)).unwrap();
        assert!((y - 0.5 * (2.0 + f)).abs() < 1e-15);
    }

    #[test]
    fn aware_tv_examples() {
        let pr = half();
        for l in [Lambda::Finite(0.0), Lambda::Finite(3.0), Lambda::Infinite] {
            assert_eq!(aware_tv_predict(1.5, 1.5, &pr, l), (1.5, 1.5));
        }
        assert_eq!(aware_tv_predict(1.0, 0.0, &pr, Lambda::Finite(0.1)), (1.0, 0.0));
        assert_eq!(aware_tv_predict(1.0, 0.0, &pr, Lambda::Finite(0.3)), (0.5, 0.5));
    }

    #[test]
    fn aware_tv_labels_on_samples() {
        let (lp, lm, plan) =
            aware_tv_pseudo_labels(&[2.0, 0.0], &[3.0, 1.0], &half(), Lambda::Finite(0.3)).unwrap();
        assert_eq!(plan.entries().len(), 2);
        assert_eq!(lp, vec![2.5, 0.5]);
        assert_eq!(lm, vec![2.5, 0.5]);
    }

    #[test]
    fn predictor_fit_and_predict() {
        let h = [0.0, 1.0, 2.0, 3.0];
        let s = [Group::Plus, Group::Minus, Group::Plus, Group::Minus];
        let ap = AwarePredictor::fit(&h, &s, Penalty::W2, Lambda::Infinite).unwrap();
        assert_eq!(ap.predict(0.0, Group::Plus).unwrap(), 0.5);
        assert_eq!(ap.predict(1.0, Group::Minus).unwrap(), 0.5);
        let tv = AwarePredictor::fit(&h, &s, Penalty::TV, Lambda::Finite(0.3)).unwrap();
        assert_eq!(tv.predict(2.0, Group::Plus).unwrap(), 2.5);
        assert_eq!(tv.predict(3.0, Group::Minus).unwrap(), 2.5);
        assert!(AwarePredictor::fit(&h, &[Group::Plus; 4], Penalty::W2, Lambda::Infinite).is_err());
    }

    proptest! {
        #[test]
        fn exact_map_equalizes_equal_size_groups(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30),
            p in 0.05f64..0.95,
        ) {
            let a: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let b: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let (dp, dm) = (uniform(&a), uniform(&b));
            let pr = GroupPriors::from_plus(p).unwrap();
            let img_p: Vec<f64> = a.iter()
                .map(|&h| exact_fair_aware(h, Group::Plus, &dp, &dm, &pr).unwrap()).collect();
            let img_m: Vec<f64> = b.iter()
                .map(|&h| exact_fair_aware(h, Group::Minus, &dp, &dm, &pr).unwrap()).collect();
            prop_assert!(w2_empirical(&img_p, &img_m).unwrap() < 1e-9);
        }

        #[test]
        fn interpolation_identity_is_exact(
            a in proptest::collection::vec(-5.0f64..5.0, 1..20),
            b in proptest::collection::vec(-5.0f64..5.0, 1..20),
            p in 0.05f64..0.95, l in 0.0f64..50.0, idx in 0usize..20,
        ) {
            let (dp, dm) = (uniform(&a), uniform(&b));
            let pr = GroupPriors::from_plus(p).unwrap();
            let h = a[idx % a.len()];
            let lam = Lambda::Finite(l);
            let alpha = interpolation_alpha(&pr, lam);
            let f = exact_fair_aware(h, Group::Plus, &dp, &dm, &pr).unwrap();
            let y = interpolate_w2_aware(h, Group::Plus, &dp, &dm, &pr, lam).unwrap();
            prop_assert!((y - (1.0 - alpha) * f - alpha * h).abs() <= 1e-14 * (1.0 + f.abs() + h.abs()));
        }

        #[test]
        fn aware_tv_matches_unaware_kernel(
            h1 in -3.0f64..3.0, h2 in -3.0f64..3.0, p in 0.05f64..0.95, l in 0.0f64..5.0,
        ) {
            let pr = GroupPriors::from_plus(p).unwrap();
            let z1 = PseudoPoint { h: h1, d: 1.0 / pr.plus(), w: 1.0 };
            let z2 = PseudoPoint { h: h2, d: -1.0 / pr.minus(), w: 1.0 };
            let lam = Lambda::Finite(l);
            let cost = cost_tv_unaware(&z1, &z2, lam).unwrap();
            let aware_cost = l.min(pr.plus() * pr.minus() * (h1 - h2).powi(2));
            prop_assert!((cost - aware_cost).abs() < 1e-12);
            let t = targets_tv(&z1, &z2, lam).unwrap();
            let (y1, y2) = aware_tv_predict(h1, h2, &pr, lam);
            prop_assert!((t.y_plus - y1).abs() < 1e-12);
            prop_assert!((t.y_minus - y2).abs() < 1e-12);
        }
    }
}
