//! Plug-in baselines: apply the aware group maps with the sensitive
//! attribute replaced by a classifier's guess.

use crate::aware::GroupTransport;
use crate::domain::Group;
use crate::error::{Error, Result};
use crate::estimators::{PosteriorModel, Regressor};

/// Group chosen by thresholding the posterior; a tie at 0.5 goes to plus.
pub fn hard_group(posterior_plus: f64) -> Group {
    if posterior_plus >= 0.5 {
        Group::Plus
    } else {
        Group::Minus
    }
}

fn check_posterior(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invariant(format!("posterior {p} outside [0, 1]")));
    }
    Ok(p)
}

/// `T_s(h)` for the thresholded group `s`.
pub fn hard_from_parts<T: GroupTransport + ?Sized>(h: f64, posterior_plus: f64, maps: &T) -> Result<f64> {
    maps.transport(h, hard_group(check_posterior(posterior_plus)?))
}

/// `P(+|x) T_+(h) + P(-|x) T_-(h)`.
pub fn soft_from_parts<T: GroupTransport + ?Sized>(h: f64, posterior_plus: f64, maps: &T) -> Result<f64> {
    let p = check_posterior(posterior_plus)?;
    let tp = maps.transport(h, Group::Plus)?;
    let tm = maps.transport(h, Group::Minus)?;
    if tp == tm {
        return Ok(tp);
    }
    Ok(p * tp + (1.0 - p) * tm)
}

pub fn plug_in_hard<B, C, T>(x: &[f64], base: &B, classifier: &C, maps: &T) -> Result<f64>
where
    B: Regressor + ?Sized,
    C: PosteriorModel + ?Sized,
    T: GroupTransport + ?Sized,
{
    hard_from_parts(base.predict(x)?, classifier.posterior_plus(x)?, maps)
}

pub fn plug_in_soft<B, C, T>(x: &[f64], base: &B, classifier: &C, maps: &T) -> Result<f64>
where
    B: Regressor + ?Sized,
    C: PosteriorModel + ?Sized,
    T: GroupTransport + ?Sized,
{
    soft_from_parts(base.predict(x)?, classifier.posterior_plus(x)?, maps)
}
