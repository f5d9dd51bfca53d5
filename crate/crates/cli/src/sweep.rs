//! Per-seed preparation and the (seed, method, lambda) fan-out.

use std::time::Instant;

use fairot_core::aware::AwarePredictor;
use fairot_core::baselines::{hard_from_parts, soft_from_parts};
use fairot_core::data::{
    gen_synthetic_1d, gen_synthetic_2d, load_csv, oracle_eta_1d, oracle_eta_2d,
    oracle_posterior_1d, oracle_posterior_2d, stratified_split, TargetScaler,
};
use fairot_core::decomposition::{build_partition, estimate_delta, JordanPartition};
use fairot_core::estimators::{fit_logistic, fit_ols, LinearModel, LogisticModel, PosteriorModel, Regressor};
use fairot_core::metrics::build_report;
use fairot_core::relaxation::{training_signals, FairMap, TrainingSignals};
use fairot_core::{Dataset, FairnessReport, Group, Lambda, RelaxationConfig};
use rayon::prelude::*;

use crate::config::{BaseKind, ClassifierKind, Config, DataSource};
use crate::error::{CliError, Result};
use crate::methods::Method;

/// One evaluated point of a trade-off curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: Method,
    /// `None` for methods that ignore lambda.
    pub lambda: Option<Lambda>,
    pub seed: u64,
    pub report: FairnessReport,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub enum BaseModel {
    Linear(LinearModel),
    Oracle1d,
    Oracle2d,
}

impl Regressor for BaseModel {
    fn predict(&self, x: &[f64]) -> fairot_core::Result<f64> {
        match self {
            BaseModel::Linear(m) => m.predict(x),
            BaseModel::Oracle1d => Ok(oracle_eta_1d(x[0])),
            BaseModel::Oracle2d => Ok(oracle_eta_2d(x)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Classifier {
    Logistic(LogisticModel),
    Oracle1d(f64),
    Oracle2d(f64),
}

impl PosteriorModel for Classifier {
    fn posterior_plus(&self, x: &[f64]) -> fairot_core::Result<f64> {
        match *self {
            Classifier::Logistic(ref m) => m.posterior_plus(x),
            Classifier::Oracle1d(gamma) => oracle_posterior_1d(x[0], gamma),
            Classifier::Oracle2d(gamma) => oracle_posterior_2d(x, gamma),
        }
    }
}

/// Rows loaded once and shared by every seed.
#[derive(Debug, Clone)]
pub enum LoadedSource {
    Synthetic(DataSource),
    Table(Dataset),
}

pub fn load_source(source: &DataSource) -> Result<LoadedSource> {
    match source {
        DataSource::Csv { path, schema } => match load_csv(path, schema) {
            Ok(ds) => Ok(LoadedSource::Table(ds)),
            Err(fairot_core::Error::Io(e)) => Err(CliError::io(path, e)),
            Err(e) => Err(CliError::Dataset(e)),
        },
        other => Ok(LoadedSource::Synthetic(other.clone())),
    }
}

/// Everything the methods need for one seed: fitted base models, training
/// signals and partition, and test-split inputs.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub seed: u64,
    pub base: BaseModel,
    pub classifier: Classifier,
    pub signals: TrainingSignals,
    pub partition: JordanPartition,
    pub train_sensitive: Vec<Group>,
    pub test_h: Vec<f64>,
    pub test_d: Vec<f64>,
    pub test_posterior: Vec<f64>,
    pub test_target: Vec<f64>,
    pub test_sensitive: Vec<Group>,
}

fn split_for_seed(config: &Config, loaded: &LoadedSource, seed: u64) -> Result<(Dataset, Dataset)> {
    let frac = config.dataset.test_fraction;
    match loaded {
        LoadedSource::Synthetic(src) => {
            let ds = match *src {
                DataSource::Synthetic1d { n, gamma } => gen_synthetic_1d(n, gamma, seed),
                DataSource::Synthetic2d { n, gamma } => gen_synthetic_2d(n, gamma, seed),
                DataSource::Csv { .. } => unreachable!("csv sources are loaded as tables"),
            }
            .map_err(CliError::Dataset)?;
            stratified_split(&ds, frac, seed).map_err(CliError::Dataset)
        }
        LoadedSource::Table(ds) => {
            let (train, test) = stratified_split(ds, frac, seed).map_err(CliError::Dataset)?;
            let scaler = TargetScaler::fit(train.target()).map_err(CliError::Dataset)?;
            Ok((
                scaler.apply(&train).map_err(CliError::Dataset)?,
                scaler.apply(&test).map_err(CliError::Dataset)?,
            ))
        }
    }
}

pub fn prepare_seed(config: &Config, loaded: &LoadedSource, seed: u64) -> Result<SeedContext> {
    let (train, test) = split_for_seed(config, loaded, seed)?;
    let synthetic = match loaded {
        LoadedSource::Synthetic(src) => Some(src),
        LoadedSource::Table(_) => None,
    };
    let base = match (config.run.base, synthetic) {
        (BaseKind::Linear, _) => {
            BaseModel::Linear(fit_ols(&train, train.target()).map_err(CliError::Compute)?)
        }
        (BaseKind::Oracle, Some(DataSource::Synthetic1d { .. })) => BaseModel::Oracle1d,
        (BaseKind::Oracle, Some(DataSource::Synthetic2d { .. })) => BaseModel::Oracle2d,
        (BaseKind::Oracle, _) => {
            return Err(CliError::config("the oracle base model needs a synthetic source"))
        }
    };
    let classifier = match (config.run.classifier, synthetic) {
        (ClassifierKind::Logistic, _) => Classifier::Logistic(
            fit_logistic(&train, train.sensitive(), config.run.logistic_iters)
                .map_err(CliError::Compute)?,
        ),
        (ClassifierKind::Oracle, Some(DataSource::Synthetic1d { gamma, .. })) => {
            Classifier::Oracle1d(*gamma)
        }
        (ClassifierKind::Oracle, Some(DataSource::Synthetic2d { gamma, .. })) => {
            Classifier::Oracle2d(*gamma)
        }
        (ClassifierKind::Oracle, _) => {
            return Err(CliError::config("the oracle classifier needs a synthetic source"))
        }
    };

    let signals = training_signals(&train, &base, &classifier).map_err(CliError::Compute)?;
    let partition =
        build_partition(&signals.h, &signals.d, config.run.tau).map_err(CliError::Compute)?;

    let mut test_h = Vec::with_capacity(test.len());
    let mut test_d = Vec::with_capacity(test.len());
    let mut test_posterior = Vec::with_capacity(test.len());
    for x in test.rows() {
        test_h.push(base.predict(x).map_err(CliError::Compute)?);
        test_posterior.push(classifier.posterior_plus(x).map_err(CliError::Compute)?);
        test_d.push(estimate_delta(&classifier, &signals.priors, x).map_err(CliError::Compute)?);
    }
    Ok(SeedContext {
        seed,
        base,
        classifier,
        train_sensitive: train.sensitive().to_vec(),
        signals,
        partition,
        test_h,
        test_d,
        test_posterior,
        test_target: test.target().to_vec(),
        test_sensitive: test.sensitive().to_vec(),
    })
}

/// Test-split predictions of one method at one lambda.
pub fn predict_test(
    ctx: &SeedContext,
    method: Method,
    lambda: Lambda,
    config: &Config,
) -> Result<Vec<f64>> {
    let Some((penalty, setting)) = method.relaxation() else {
        return Ok(ctx.test_h.clone());
    };
    let relax = RelaxationConfig::new(penalty, setting, lambda, config.run.tau).map_err(CliError::Compute)?;
    match method {
        Method::Erm => unreachable!("handled above"),
        Method::OtUnawareW2 | Method::OtUnawareTv => {
            let map = FairMap::fit(&ctx.signals, &ctx.partition, &relax, config.run.neighbors)
                .map_err(CliError::Compute)?;
            Ok(ctx.test_h.iter().zip(&ctx.test_d).map(|(&h, &d)| map.predict(h, d)).collect())
        }
        Method::OtAwareW2 | Method::OtAwareTv => {
            let ap = AwarePredictor::fit(&ctx.signals.h, &ctx.train_sensitive, penalty, lambda)
                .map_err(CliError::Compute)?;
            ctx.test_h
                .iter()
                .zip(&ctx.test_sensitive)
                .map(|(&h, &s)| ap.predict(h, s).map_err(CliError::Compute))
                .collect()
        }
        Method::PluginHard | Method::PluginSoft => {
            let ap = AwarePredictor::fit(&ctx.signals.h, &ctx.train_sensitive, penalty, lambda)
                .map_err(CliError::Compute)?;
            let rule = if method == Method::PluginHard { hard_from_parts } else { soft_from_parts };
            ctx.test_h
                .iter()
                .zip(&ctx.test_posterior)
                .map(|(&h, &p)| rule(h, p, &ap).map_err(CliError::Compute))
                .collect()
        }
    }
}

pub fn evaluate(
    ctx: &SeedContext,
    method: Method,
    lambda: Lambda,
    config: &Config,
) -> Result<FairnessReport> {
    let pred = predict_test(ctx, method, lambda, config)?;
    build_report(&pred, &ctx.test_target, &ctx.test_sensitive).map_err(CliError::Compute)
}

/// Runs every (seed, method, lambda) combination. Records are ordered by
/// seed, then method as configured, then grid position.
pub fn run_sweep(config: &Config) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let grid = config.lambda_grid()?;
    let loaded = load_source(&config.source()?)?;
    let seeds: Vec<u64> = config.seeds().collect();
    let contexts = seeds
        .par_iter()
        .map(|&seed| prepare_seed(config, &loaded, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut tasks = Vec::new();
    for ctx in &contexts {
        for &method in &config.run.methods {
            if method.uses_lambda() {
                tasks.extend(grid.iter().map(|&l| (ctx, method, Some(l))));
            } else {
                tasks.push((ctx, method, None));
            }
        }
    }
    tasks
        .into_par_iter()
        .map(|(ctx, method, lambda)| {
            let start = Instant::now();
            let report = evaluate(ctx, method, lambda.unwrap_or(Lambda::Finite(0.0)), config)?;
            Ok(SweepRecord {
                method,
                lambda,
                seed: ctx.seed,
                report,
                wall_seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
