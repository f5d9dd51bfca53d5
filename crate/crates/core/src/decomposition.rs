//! Signed group probability and the sign partition of the training points.

use crate::domain::{Group, GroupPriors, PseudoMeasure, PseudoPoint};
use crate::error::{Error, Result};
use crate::estimators::PosteriorModel;

/// `P(+|x)/p+ - P(-|x)/p-` for a posterior value `P(+|x)`.
pub fn delta_from_posterior(posterior_plus: f64, priors: &GroupPriors) -> f64 {
    posterior_plus / priors.plus() - (1.0 - posterior_plus) / priors.minus()
}

pub fn estimate_delta<P: PosteriorModel + ?Sized>(
    classifier: &P,
    priors: &GroupPriors,
    x: &[f64],
) -> Result<f64> {
    let p = classifier.posterior_plus(x)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invariant(format!("posterior {p} outside [0, 1]")));
    }
    Ok(delta_from_posterior(p, priors))
}

/// Indices (0-based) split by the sign of `d` with dead zone `tau`, and the
/// two normalized pseudo-measures. Point `k` of `measure_plus` corresponds
/// to `plus_indices[k]`, likewise for the minus side.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanPartition {
    pub plus_indices: Vec<usize>,
    pub minus_indices: Vec<usize>,
    pub zero_indices: Vec<usize>,
    pub measure_plus: PseudoMeasure,
    pub measure_minus: PseudoMeasure,
    h: Vec<f64>,
}

impl JordanPartition {
    /// True when either side is empty; the transport problem is then vacuous.
    pub fn is_degenerate(&self) -> bool {
        self.measure_plus.is_empty() || self.measure_minus.is_empty()
    }

    /// Number of indexed points across all three lists.
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Base predictions of every indexed point.
    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    pub fn side_indices(&self, side: Group) -> &[usize] {
        match side {
            Group::Plus => &self.plus_indices,
            Group::Minus => &self.minus_indices,
        }
    }

    pub fn measure(&self, side: Group) -> &PseudoMeasure {
        match side {
            Group::Plus => &self.measure_plus,
            Group::Minus => &self.measure_minus,
        }
    }
}

fn normalized_side(h: &[f64], d: &[f64], indices: &[usize]) -> Vec<PseudoPoint> {
    let total: f64 = indices.iter().map(|&i| d[i].abs()).sum();
    indices
        .iter()
        .map(|&i| PseudoPoint {
            h: h[i],
            d: d[i],
            w: d[i].abs() / total,
        })
        .collect()
}

pub fn build_partition(h_values: &[f64], d_values: &[f64], tau: f64) -> Result<JordanPartition> {
    if h_values.len() != d_values.len() {
        return Err(Error::Dimension {
            row: None,
            expected: h_values.len(),
            found: d_values.len(),
        });
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::param("tau", format!("must be finite and >= 0, got {tau}")));
    }
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let mut zero = Vec::new();
    for (i, (&h, &d)) in h_values.iter().zip(d_values).enumerate() {
        if !h.is_finite() {
            return Err(Error::NonFinite { row: i, what: "base prediction" });
        }
        if !d.is_finite() {
            return Err(Error::NonFinite { row: i, what: "signed group probability" });
        }
        if d > tau {
            plus.push(i);
        } else if d < -tau {
            minus.push(i);
        } else {
            zero.push(i);
        }
    }
    let measure_plus = PseudoMeasure::new(Group::Plus, normalized_side(h_values, d_values, &plus))?;
    let measure_minus =
        PseudoMeasure::new(Group::Minus, normalized_side(h_values, d_values, &minus))?;
    Ok(JordanPartition {
        plus_indices: plus,
        minus_indices: minus,
        zero_indices: zero,
        measure_plus,
        measure_minus,
        h: h_values.to_vec(),
    })
}
