//! Simulation metrics and the replicated benchmark runner.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovModel, Theta};
use crate::error::{Result, SpinError};
use crate::estimate::{
    fit_full_oracle, fit_spin, OracleOptions, PartitionSpec, SpinOptions, VarianceMethod,
    DEFAULT_ORACLE_CAP,
};
use crate::geometry::NeighborIndex;
use crate::partition::PartitionScheme;
use crate::predict::{predict, BetaMode, PredictionTask, DEFAULT_NEIGHBORS};
use crate::simulate::{simulate, stream_rng, SimConfig, SimMethod, DEFAULT_GEOSTAT_CAP};

/// Two-sided 90% normal quantile.
pub const Z90: f64 = 1.645;

/// `sqrt(mean((estimate - truth)^2))`.
pub fn compute_rmse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(SpinError::EmptyInput("no estimates"));
    }
    let ss: f64 = estimates.iter().map(|e| (e - truth).powi(2)).sum();
    Ok((ss / estimates.len() as f64).sqrt())
}

/// Fraction of replicates whose interval `estimate -/+ 1.645 se` contains
/// `truth`.
pub fn compute_ci90(estimates: &[f64], stderrs: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(SpinError::EmptyInput("no estimates"));
    }
    if estimates.len() != stderrs.len() {
        return Err(SpinError::DimensionMismatch(format!(
            "{} estimates, {} standard errors",
            estimates.len(),
            stderrs.len()
        )));
    }
    if stderrs.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return Err(SpinError::InvalidParameter(
            "standard errors must be positive".into(),
        ));
    }
    let hits = estimates
        .iter()
        .zip(stderrs)
        .filter(|(e, s)| (*e - truth).abs() < Z90 * *s)
        .count();
    Ok(hits as f64 / estimates.len() as f64)
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(SpinError::DimensionMismatch(format!(
            "{:?} predictions against {:?} realized values",
            a.shape(),
            b.shape()
        )));
    }
    if a.is_empty() {
        return Err(SpinError::EmptyInput("no predictions"));
    }
    Ok(())
}

/// Root mean squared prediction error over a K x J table of predictions.
pub fn compute_rmspe(pred: &DMatrix<f64>, realized: &DMatrix<f64>) -> Result<f64> {
    check_shapes(pred, realized)?;
    Ok(((pred - realized).norm_squared() / pred.len() as f64).sqrt())
}

/// Fraction of `|pred - realized| < 1.645 sqrt(variance)` over a K x J table.
pub fn compute_pi90(
    pred: &DMatrix<f64>,
    variance: &DMatrix<f64>,
    realized: &DMatrix<f64>,
) -> Result<f64> {
    check_shapes(pred, realized)?;
    check_shapes(variance, realized)?;
    let hits = pred
        .iter()
        .zip(variance.iter())
        .zip(realized.iter())
        .filter(|((p, v), r)| (*p - *r).abs() < Z90 * v.max(0.0).sqrt())
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// An integer that is either fixed or drawn uniformly from `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntDist {
    Fixed(usize),
    Uniform { min: usize, max: usize },
}

impl IntDist {
    /// Maps `u` in `[0, 1)` onto the support.
    fn at(&self, u: f64) -> usize {
        match *self {
            IntDist::Fixed(v) => v,
            IntDist::Uniform { min, max } => {
                let span = (max - min + 1) as f64;
                min + ((u * span) as usize).min(max - min)
            }
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        match *self {
            IntDist::Fixed(0) => Err(SpinError::InvalidParameter(format!(
                "{what} must be positive"
            ))),
            IntDist::Uniform { min, max } if min == 0 || min > max => Err(
                SpinError::InvalidParameter(format!("{what} needs 0 < min <= max")),
            ),
            _ => Ok(()),
        }
    }

    fn label(&self) -> String {
        match *self {
            IntDist::Fixed(v) => v.to_string(),
            IntDist::Uniform { min, max } => format!("{min}..{max}"),
        }
    }
}

/// A real number that is either fixed or drawn uniformly from `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FloatDist {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
}

impl FloatDist {
    fn at(&self, u: f64) -> f64 {
        match *self {
            FloatDist::Fixed(v) => v,
            FloatDist::Uniform { min, max } => min + u * (max - min),
        }
    }
}

fn default_grid_side() -> usize {
    40
}
fn default_tau2() -> FloatDist {
    FloatDist::Fixed(10.0)
}
fn default_nugget() -> FloatDist {
    FloatDist::Fixed(0.1)
}
fn default_range() -> FloatDist {
    FloatDist::Uniform { min: 0.0, max: 2.0 }
}
fn default_geostat_cap() -> usize {
    DEFAULT_GEOSTAT_CAP
}
fn default_oracle_cap() -> usize {
    DEFAULT_ORACLE_CAP
}
fn default_neighbors() -> usize {
    DEFAULT_NEIGHBORS
}
fn default_model() -> CovModel {
    CovModel::Exponential
}
fn default_var() -> VarianceMethod {
    VarianceMethod::Exact
}

/// Distribution of simulated data sets. Replicate `k` uses
/// `methods[k % methods.len()]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    pub methods: Vec<SimMethod>,
    /// Observed sample size for GEOSTAT replicates.
    pub n: IntDist,
    /// Observed sample size for SUMSINE replicates; defaults to `n`.
    #[serde(default)]
    pub n_sumsine: Option<IntDist>,
    #[serde(default = "default_grid_side")]
    pub grid_side: usize,
    #[serde(default = "default_tau2")]
    pub tau2: FloatDist,
    #[serde(default = "default_nugget")]
    pub nugget: FloatDist,
    #[serde(default = "default_range")]
    pub range: FloatDist,
    #[serde(default = "default_geostat_cap")]
    pub geostat_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionDist {
    pub scheme: PartitionScheme,
    pub size: IntDist,
}

impl PartitionDist {
    fn label(&self) -> String {
        format!("{}-{}", self.scheme, self.size.label())
    }
}

/// One estimation/prediction strategy compared across replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub cope: PartitionDist,
    pub fefe: PartitionDist,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    #[serde(default = "default_var")]
    pub variance_method: VarianceMethod,
    #[serde(default)]
    pub beta_mode: BetaMode,
    #[serde(default = "default_model")]
    pub model: CovModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub replicates: usize,
    pub seed: u64,
    pub sim: SimSpec,
    pub configs: Vec<RunConfig>,
    /// Adds a dense full-covariance row.
    #[serde(default)]
    pub include_full: bool,
    #[serde(default = "default_oracle_cap")]
    pub oracle_cap: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(SpinError::InvalidParameter(
                "replicates must be at least 1".into(),
            ));
        }
        if self.sim.methods.is_empty() {
            return Err(SpinError::InvalidParameter("no simulation methods".into()));
        }
        if self.configs.is_empty() && !self.include_full {
            return Err(SpinError::InvalidParameter("nothing to run".into()));
        }
        self.sim.n.validate("n")?;
        if let Some(d) = self.sim.n_sumsine {
            d.validate("n_sumsine")?;
        }
        if self.sim.grid_side == 0 {
            return Err(SpinError::InvalidParameter(
                "grid_side must be positive".into(),
            ));
        }
        for c in &self.configs {
            c.cope.size.validate("cope size")?;
            c.fefe.size.validate("fefe size")?;
            if c.neighbors == 0 {
                return Err(SpinError::InvalidParameter(
                    "neighbors must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One row of results, named after the benchmark table columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    #[serde(rename = "METHOD")]
    pub method: String,
    #[serde(rename = "COPE")]
    pub cope: String,
    #[serde(rename = "FEFE")]
    pub fefe: String,
    #[serde(rename = "RMSE_1")]
    pub rmse_1: f64,
    #[serde(rename = "RMSE_2")]
    pub rmse_2: f64,
    #[serde(rename = "RMSPE")]
    pub rmspe: f64,
    #[serde(rename = "CI90_1")]
    pub ci90_1: f64,
    #[serde(rename = "CI90_2")]
    pub ci90_2: f64,
    #[serde(rename = "PI90")]
    pub pi90: f64,
    #[serde(rename = "TIME_C")]
    pub time_c: f64,
    #[serde(rename = "TIME_F")]
    pub time_f: f64,
    #[serde(rename = "TIME_P")]
    pub time_p: f64,
    #[serde(rename = "K")]
    pub replicates: usize,
    #[serde(rename = "FAILED")]
    pub failed: usize,
}

/// Estimates and predictions of one strategy on one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub theta: Theta,
    pub beta: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub predictions: Vec<f64>,
    pub variances: Vec<f64>,
    pub time_c: f64,
    pub time_f: f64,
    pub time_p: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub seed: u64,
    pub method: SimMethod,
    pub n: usize,
    pub theta: Option<Theta>,
    pub beta_true: DVector<f64>,
    pub realized: Vec<f64>,
    /// Indexed like `ExperimentSpec::configs`.
    pub configs: Vec<std::result::Result<ReplicateOutcome, SpinError>>,
    pub full: Option<std::result::Result<ReplicateOutcome, SpinError>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<MetricSummary>,
    pub records: Vec<ReplicateRecord>,
}

/// SplitMix64 finalizer; spreads consecutive replicate indices.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn replicate_seed(seed: u64, k: usize) -> u64 {
    mix(seed ^ mix(k as u64))
}

/// Draws of the per-replicate random design, taken from stream 4.
const STREAM_DESIGN: u64 = 4;

fn run_config(
    data: &crate::estimate::SpatialDataset,
    task: &PredictionTask,
    cfg: &RunConfig,
    size_u: (f64, f64),
    seed: u64,
) -> Result<ReplicateOutcome> {
    let n = data.n();
    let opts = SpinOptions {
        model: cfg.model,
        cope: PartitionSpec {
            scheme: cfg.cope.scheme,
            size: cfg.cope.size.at(size_u.0).min(n),
        },
        fefe: PartitionSpec {
            scheme: cfg.fefe.scheme,
            size: cfg.fefe.size.at(size_u.1).min(n),
        },
        variance_method: cfg.variance_method,
        seed,
        ..Default::default()
    };
    let fit = fit_spin(data, &opts)?;
    let t = Instant::now();
    let index = NeighborIndex::build(&data.points)?;
    let task = PredictionTask {
        m: cfg.neighbors.min(n),
        ..task.clone()
    };
    let pred = predict(&fit, data, &index, &task, cfg.beta_mode)?;
    Ok(ReplicateOutcome {
        theta: fit.theta_hat,
        std_errors: fit.std_errors(),
        beta: fit.beta_hat,
        predictions: pred.values,
        variances: pred.variances,
        time_c: fit.timings.covariance.as_secs_f64(),
        time_f: fit.timings.fixed_effects.as_secs_f64(),
        time_p: t.elapsed().as_secs_f64(),
    })
}

fn run_full(
    data: &crate::estimate::SpatialDataset,
    task: &PredictionTask,
    cap: usize,
    model: CovModel,
    start: Option<Theta>,
) -> Result<ReplicateOutcome> {
    let t0 = Instant::now();
    let opts = OracleOptions {
        model,
        cap,
        initial: start,
        ..Default::default()
    };
    let fit = fit_full_oracle(data, None, &opts)?;
    let time_c = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (predictions, variances) = fit.predict(&task.sites, &task.x_pred)?;
    Ok(ReplicateOutcome {
        theta: fit.theta,
        std_errors: fit.cov_beta.diagonal().map(|v| v.max(0.0).sqrt()),
        beta: fit.beta,
        predictions,
        variances,
        time_c,
        time_f: 0.0,
        time_p: t1.elapsed().as_secs_f64(),
    })
}

fn run_replicate(spec: &ExperimentSpec, k: usize) -> Result<ReplicateRecord> {
    let seed = replicate_seed(spec.seed, k);
    let method = spec.sim.methods[k % spec.sim.methods.len()];
    let mut rng = stream_rng(seed, STREAM_DESIGN);
    let u: [f64; 6] = std::array::from_fn(|_| rng.random());
    let n = match method {
        SimMethod::Sumsine => spec.sim.n_sumsine.unwrap_or(spec.sim.n).at(u[0]),
        SimMethod::Geostat => spec.sim.n.at(u[0]),
    };
    let theta = match method {
        SimMethod::Geostat => Some(Theta::new(
            spec.sim.tau2.at(u[1]),
            spec.sim.nugget.at(u[2]),
            spec.sim.range.at(u[3]).max(1e-6),
            CovModel::Spherical,
        )?),
        SimMethod::Sumsine => None,
    };
    let real = simulate(&SimConfig {
        method,
        n,
        grid_side: spec.sim.grid_side,
        theta,
        seed,
        geostat_cap: spec.sim.geostat_cap,
    })?;
    let data = real.observed()?;
    let task = PredictionTask {
        sites: real.grid_points().to_vec(),
        x_pred: real.grid_x(),
        m: DEFAULT_NEIGHBORS,
    };
    let configs: Vec<_> = spec
        .configs
        .iter()
        .map(|cfg| {
            let out = run_config(&data, &task, cfg, (u[4], u[5]), seed);
            if let Err(e) = &out {
                log::warn!("replicate {k}: {e}");
            }
            out
        })
        .collect();
    let full = spec.include_full.then(|| {
        // warm start at the first strategy's estimate when there is one
        let start = configs
            .iter()
            .find_map(|c| c.as_ref().ok())
            .map(|o| o.theta);
        let model = spec
            .configs
            .first()
            .map_or(CovModel::Exponential, |c| c.model);
        run_full(&data, &task, spec.oracle_cap, model, start)
    });
    Ok(ReplicateRecord {
        seed,
        method,
        n,
        theta,
        beta_true: real.beta_true.clone(),
        realized: real.grid_y().iter().copied().collect(),
        configs,
        full,
    })
}

fn summarize<'a>(
    method: &str,
    cope: String,
    fefe: String,
    outcomes: impl Iterator<Item = (&'a ReplicateRecord, Option<&'a ReplicateOutcome>)>,
) -> Result<MetricSummary> {
    let mut used: Vec<(&ReplicateRecord, &ReplicateOutcome)> = Vec::new();
    let mut failed = 0;
    for (rec, out) in outcomes {
        match out {
            Some(o) => used.push((rec, o)),
            None => failed += 1,
        }
    }
    if used.is_empty() {
        return Err(SpinError::InsufficientData {
            requested: 1,
            available: 0,
        });
    }
    let coef = |p: usize| -> (Vec<f64>, Vec<f64>, f64) {
        (
            used.iter().map(|(_, o)| o.beta[p]).collect(),
            used.iter().map(|(_, o)| o.std_errors[p]).collect(),
            used[0].0.beta_true[p],
        )
    };
    let (b1, s1, t1) = coef(1);
    let (b2, s2, t2) = coef(2);
    // every replicate shares grid_side, so a single K x J table suffices
    let j = used[0].1.predictions.len();
    let k = used.len();
    let pred = DMatrix::from_fn(k, j, |r, c| used[r].1.predictions[c]);
    let var = DMatrix::from_fn(k, j, |r, c| used[r].1.variances[c]);
    let real = DMatrix::from_fn(k, j, |r, c| used[r].0.realized[c]);
    let mean = |f: &dyn Fn(&ReplicateOutcome) -> f64| {
        used.iter().map(|(_, o)| f(o)).sum::<f64>() / k as f64
    };
    Ok(MetricSummary {
        method: method.to_string(),
        cope,
        fefe,
        rmse_1: compute_rmse(&b1, t1)?,
        rmse_2: compute_rmse(&b2, t2)?,
        rmspe: compute_rmspe(&pred, &real)?,
        ci90_1: compute_ci90(&b1, &s1, t1)?,
        ci90_2: compute_ci90(&b2, &s2, t2)?,
        pi90: compute_pi90(&pred, &var, &real)?,
        time_c: mean(&|o| o.time_c),
        time_f: mean(&|o| o.time_f),
        time_p: mean(&|o| o.time_p),
        replicates: k,
        failed,
    })
}

/// Runs every strategy (and optionally the dense oracle) on `replicates`
/// simulated data sets and reports one row per strategy. Replicates run in
/// parallel on independent seeds and are aggregated in replicate order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let results: Vec<Result<ReplicateRecord>> = (0..spec.replicates)
        .into_par_iter()
        .map(|k| run_replicate(spec, k))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut sim_failures = 0;
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("replicate {k} could not be simulated: {e}");
                sim_failures += 1;
            }
        }
    }
    let mut rows = Vec::new();
    for (c, cfg) in spec.configs.iter().enumerate() {
        let mut row = summarize(
            "SPIN",
            cfg.cope.label(),
            cfg.fefe.label(),
            records.iter().map(|r| (r, r.configs[c].as_ref().ok())),
        )?;
        row.failed += sim_failures;
        rows.push(row);
    }
    if spec.include_full {
        let mut row = summarize(
            "Full",
            "-".into(),
            "-".into(),
            records
                .iter()
                .map(|r| (r, r.full.as_ref().and_then(|f| f.as_ref().ok()))),
        )?;
        row.failed += sim_failures;
        rows.push(row);
    }
    Ok(ExperimentResult { rows, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(compute_rmse(&[1.0, 1.0, 1.0], 1.0).unwrap(), 0.0);
        assert_eq!(compute_rmse(&[0.0, 2.0], 1.0).unwrap(), 1.0);
        let a = compute_rmse(&[0.3, 1.7, 2.2, 0.9], 1.0).unwrap();
        let b = compute_rmse(&[2.2, 0.9, 0.3, 1.7], 1.0).unwrap();
        assert_eq!(a, b);
        assert!(compute_rmse(&[], 1.0).is_err());
    }

    #[test]
    fn ci90_examples() {
        assert_eq!(
            compute_ci90(&[3.0, -5.0], &[1e300, 1e300], 1.0).unwrap(),
            1.0
        );
        assert_eq!(
            compute_ci90(&[1.1, 0.9], &[1e-12, 1e-12], 1.0).unwrap(),
            0.0
        );
        assert_eq!(compute_ci90(&[1.0], &[0.1], 1.0).unwrap(), 1.0);
        assert!(compute_ci90(&[1.0], &[0.0], 1.0).is_err());
        assert!(compute_ci90(&[1.0], &[-1.0], 1.0).is_err());
    }

    #[test]
    fn rmspe_examples() {
        let real = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(compute_rmspe(&real, &real).unwrap(), 0.0);
        let shifted = real.add_scalar(-0.5);
        assert!((compute_rmspe(&shifted, &real).unwrap() - 0.5).abs() < 1e-15);
        let p = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let z = DMatrix::zeros(1, 2);
        assert!((compute_rmspe(&p, &z).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(compute_rmspe(&p, &real).is_err());
    }

    #[test]
    fn pi90_examples() {
        let p = DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 0.0, 0.0]);
        let r = DMatrix::from_row_slice(1, 4, &[0.5, 1.0, 2.0, -3.0]);
        let v = DMatrix::from_element(1, 4, 1.0);
        // half-width 1.645 covers 0.5 and 1.0 only
        assert_eq!(compute_pi90(&p, &v, &r).unwrap(), 0.5);
    }

    #[test]
    fn int_dist_mapping() {
        let d = IntDist::Uniform { min: 25, max: 225 };
        assert_eq!(d.at(0.0), 25);
        assert_eq!(d.at(0.999_999_999), 225);
        assert_eq!(IntDist::Fixed(7).at(0.3), 7);
        assert!(IntDist::Uniform { min: 5, max: 4 }.validate("x").is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{
            "replicates": 2, "seed": 5,
            "sim": {"methods": ["geostat"], "n": 100, "grid_side": 5, "range": 0.5},
            "configs": [{"cope": {"scheme": "compact", "size": 50},
                         "fefe": {"scheme": "random", "size": {"min": 25, "max": 50}}}]
        }"#;
        let spec: ExperimentSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.sim.range, FloatDist::Fixed(0.5));
        assert_eq!(spec.configs[0].neighbors, 50);
        assert_eq!(
            spec.configs[0].fefe.size,
            IntDist::Uniform { min: 25, max: 50 }
        );
        spec.validate().unwrap();
        let back: ExperimentSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back.configs[0].fefe, spec.configs[0].fefe);
    }

    fn small_spec(k: usize) -> ExperimentSpec {
        ExperimentSpec {
            replicates: k,
            seed: 11,
            sim: SimSpec {
                methods: vec![SimMethod::Geostat, SimMethod::Sumsine],
                n: IntDist::Fixed(150),
                n_sumsine: None,
                grid_side: 5,
                tau2: FloatDist::Fixed(10.0),
                nugget: FloatDist::Fixed(0.1),
                range: FloatDist::Uniform { min: 0.0, max: 2.0 },
                geostat_cap: 1000,
            },
            configs: vec![RunConfig {
                cope: PartitionDist {
                    scheme: PartitionScheme::Compact,
                    size: IntDist::Fixed(50),
                },
                fefe: PartitionDist {
                    scheme: PartitionScheme::Compact,
                    size: IntDist::Fixed(50),
                },
                neighbors: 20,
                variance_method: VarianceMethod::Exact,
                beta_mode: BetaMode::Global,
                model: CovModel::Exponential,
            }],
            include_full: true,
            oracle_cap: 1000,
        }
    }

    #[test]
    fn single_replicate_runs() {
        let res = run_experiment(&small_spec(1)).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert_eq!(res.rows[0].replicates, 1);
        assert_eq!(res.rows[1].method, "Full");
        assert!(res
            .rows
            .iter()
            .all(|r| r.rmspe.is_finite() && (0.0..=1.0).contains(&r.pi90)));
    }

    #[test]
    fn full_row_fits_the_strategy_model() {
        let mut spec = small_spec(1);
        spec.configs[0].model = CovModel::Spherical;
        let res = run_experiment(&spec).unwrap();
        let full = res.records[0].full.as_ref().unwrap().as_ref().unwrap();
        assert_eq!(full.theta.model, CovModel::Spherical);
    }

    #[test]
    fn deterministic_metrics() {
        let a = run_experiment(&small_spec(2)).unwrap();
        let b = run_experiment(&small_spec(2)).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(
                (x.rmse_1, x.rmse_2, x.rmspe, x.ci90_1, x.pi90),
                (y.rmse_1, y.rmse_2, y.rmspe, y.ci90_1, y.pi90)
            );
        }
        assert_eq!(a.records[1].method, SimMethod::Sumsine);
    }

    #[test]
    fn invalid_specs() {
        let mut s = small_spec(1);
        s.replicates = 0;
        assert!(run_experiment(&s).is_err());
        let mut s = small_spec(1);
        s.configs[0].cope.size = IntDist::Fixed(0);
        assert!(s.validate().is_err());
    }
}
