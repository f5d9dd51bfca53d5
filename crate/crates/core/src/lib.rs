//! Post-processing of regression predictions towards relaxed demographic
//! parity with optimal-transport maps.
//!
//! The unaware pipeline estimates the signed group probability
//! `d(x) = P(+|x)/p+ - P(-|x)/p-`, splits the training points by its sign,
//! couples the two sides with a relaxed transport cost, and learns a map
//! from `(h, d)` to the resulting pseudo-labels. The aware module provides
//! the closed-form quantile maps used when the sensitive attribute is
//! observed at prediction time.

pub mod aware;
pub mod baselines;
pub mod data;
pub mod decomposition;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod metrics;
pub mod ot;
pub mod relaxation;

pub use domain::{
    Dataset, FairnessReport, Group, GroupPriors, Lambda, Penalty, PlanEntry, PseudoMeasure,
    PseudoPoint, RelaxationConfig, Setting, TransportPlan,
};
pub use error::{Error, Result};
