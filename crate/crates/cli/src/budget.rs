//! Line search for the lambda that reaches a target fraction of the base
//! predictor's unfairness.

use std::fmt;
use std::str::FromStr;

use fairot_core::Lambda;

use crate::config::Config;
use crate::emit::metric;
use crate::error::{CliError, Result};
use crate::methods::Method;
use crate::sweep::{evaluate, SeedContext};

pub const BUDGET_TOLERANCE: f64 = 0.02;
pub const BUDGET_MAX_ITERS: usize = 40;
pub const BRACKET: (f64, f64) = (1e-4, 1e6);
const BRACKET_LIMITS: (f64, f64) = (1e-12, 1e14);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnfairnessMetric {
    W2,
    Tv,
    Ks,
    KsGrid,
}

impl UnfairnessMetric {
    pub fn field(self) -> &'static str {
        match self {
            UnfairnessMetric::W2 => "w2",
            UnfairnessMetric::Tv => "tv",
            UnfairnessMetric::Ks => "ks",
            UnfairnessMetric::KsGrid => "ks_grid",
        }
    }
}

impl fmt::Display for UnfairnessMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.field())
    }
}

impl FromStr for UnfairnessMetric {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "w2" => Ok(UnfairnessMetric::W2),
            "tv" => Ok(UnfairnessMetric::Tv),
            "ks" => Ok(UnfairnessMetric::Ks),
            "ks_grid" | "ks-grid" => Ok(UnfairnessMetric::KsGrid),
            other => Err(CliError::Usage(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetResult {
    pub lambda: Lambda,
    /// Achieved unfairness divided by the base unfairness.
    pub achieved_ratio: f64,
    pub evaluations: usize,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

/// Bisection on `log lambda` against a nonincreasing `ratio`. The bracket
/// starts at [`BRACKET`] and widens by factors of 100 when the target lies
/// outside it.
pub fn match_budget_with<F>(target: f64, mut ratio: F) -> Result<BudgetResult>
where
    F: FnMut(Lambda) -> Result<f64>,
{
    if !(0.0..=1.0).contains(&target) {
        return Err(CliError::Usage(format!("target fraction must lie in [0, 1], got {target}")));
    }
    let mut evaluations = 0;
    let mut eval = |l: f64, evaluations: &mut usize| {
        *evaluations += 1;
        ratio(Lambda::Finite(l))
    };
    if target >= 1.0 {
        let r = eval(0.0, &mut evaluations)?;
        return Ok(BudgetResult { lambda: Lambda::Finite(0.0), achieved_ratio: r, evaluations, converged: true });
    }
    if target <= 0.0 {
        evaluations += 1;
        let r = ratio(Lambda::Infinite)?;
        return Ok(BudgetResult { lambda: Lambda::Infinite, achieved_ratio: r, evaluations, converged: true });
    }

    let (mut lo, mut hi) = BRACKET;
    let mut r_lo = eval(lo, &mut evaluations)?;
    let mut r_hi = eval(hi, &mut evaluations)?;
    while r_lo < target - BUDGET_TOLERANCE && lo > BRACKET_LIMITS.0 {
        lo /= 100.0;
        r_lo = eval(lo, &mut evaluations)?;
    }
    while r_hi > target + BUDGET_TOLERANCE && hi < BRACKET_LIMITS.1 {
        hi *= 100.0;
        r_hi = eval(hi, &mut evaluations)?;
    }
    let done = |l: f64, r: f64, evaluations: usize, converged: bool| BudgetResult {
        lambda: Lambda::Finite(l),
        achieved_ratio: r,
        evaluations,
        converged,
    };
    if (r_lo - target).abs() <= BUDGET_TOLERANCE {
        return Ok(done(lo, r_lo, evaluations, true));
    }
    if (r_hi - target).abs() <= BUDGET_TOLERANCE {
        return Ok(done(hi, r_hi, evaluations, true));
    }
    if !(r_hi <= target && target <= r_lo) {
        return Err(CliError::Budget {
            target,
            low: r_lo.min(r_hi),
            high: r_lo.max(r_hi),
        });
    }

    let mut best = if (r_lo - target).abs() < (r_hi - target).abs() { (lo, r_lo) } else { (hi, r_hi) };
    for _ in 0..BUDGET_MAX_ITERS {
        let mid = (lo * hi).sqrt();
        let r = eval(mid, &mut evaluations)?;
        if (r - target).abs() < (best.1 - target).abs() {
            best = (mid, r);
        }
        if (r - target).abs() <= BUDGET_TOLERANCE {
            return Ok(done(mid, r, evaluations, true));
        }
        if r > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(done(best.0, best.1, evaluations, false))
}

/// Matches `target` times the ERM unfairness of `ctx` on its test split.
pub fn match_budget(
    ctx: &SeedContext,
    method: Method,
    target: f64,
    unfairness: UnfairnessMetric,
    config: &Config,
) -> Result<BudgetResult> {
    if !method.uses_lambda() {
        return Err(CliError::Usage("budget matching needs a method that depends on lambda".into()));
    }
    let base = metric(&evaluate(ctx, Method::Erm, Lambda::Finite(0.0), config)?, unfairness.field());
    if !(base > 0.0) {
        return Err(CliError::Usage(format!("base {unfairness} unfairness is zero; nothing to match")));
    }
    match_budget_with(target, |l| {
        Ok(metric(&evaluate(ctx, method, l, config)?, unfairness.field()) / base)
    })
}
