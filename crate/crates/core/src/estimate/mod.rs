//! Covariance-parameter and fixed-effect estimation.
//!
//! Covariance parameters are found by minimizing the REML objective with the
//! covariance replaced by its block-diagonal restriction. The fixed effects
//! are the pooled GLS estimator under that same restriction, and its variance
//! can be computed exactly under the full covariance or approximated from the
//! per-block fits.

mod blocks;
mod oracle;
mod reml;
mod variance;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{CovModel, Theta};
use crate::error::{Result, SpinError};
use crate::geometry::{standardize_points, Point2D};
use crate::partition::{partition, PartitionAssignment, PartitionScheme};

pub(crate) use blocks::information_inverse;
pub use blocks::{fit_fixed_effects, Block, BlockCache};
pub use oracle::{
    dense_reml_objective, fit_full_oracle, DenseFit, OracleOptions, DEFAULT_ORACLE_CAP,
};
pub use reml::{fit_covariance, initial_theta, reml_objective, CovarianceFit, RemlOptions};
pub use variance::{var_beta_alt1, var_beta_alt2, var_beta_exact, VarianceEstimate};

/// Observed data of the spatial linear model.
#[derive(Debug, Clone)]
pub struct SpatialDataset {
    pub points: Vec<Point2D>,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub coef_names: Vec<String>,
}

impl SpatialDataset {
    pub fn new(
        points: Vec<Point2D>,
        y: DVector<f64>,
        x: DMatrix<f64>,
        coef_names: Vec<String>,
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(SpinError::EmptyInput("dataset has no observations"));
        }
        if y.len() != n || x.nrows() != n {
            return Err(SpinError::DimensionMismatch(format!(
                "{} points, {} responses, {} design rows",
                n,
                y.len(),
                x.nrows()
            )));
        }
        if coef_names.len() != x.ncols() {
            return Err(SpinError::DimensionMismatch(format!(
                "{} coefficient names for {} design columns",
                coef_names.len(),
                x.ncols()
            )));
        }
        if x.ncols() == 0 || n < x.ncols() {
            return Err(SpinError::RankDeficient(format!(
                "{} observations for {} coefficients",
                n,
                x.ncols()
            )));
        }
        if points.iter().any(|p| !p.is_finite())
            || y.iter().any(|v| !v.is_finite())
            || x.iter().any(|v| !v.is_finite())
        {
            return Err(SpinError::InvalidParameter(
                "non-finite value in dataset".into(),
            ));
        }
        let rank = x.clone().svd(false, false).rank(1e-10 * x.norm().max(1.0));
        if rank < x.ncols() {
            return Err(SpinError::RankDeficient(format!(
                "design has rank {rank} < {} columns",
                x.ncols()
            )));
        }
        Ok(SpatialDataset {
            points,
            y,
            x,
            coef_names,
        })
    }

    /// Prepends an intercept column to `covariates`.
    pub fn with_intercept(
        points: Vec<Point2D>,
        y: DVector<f64>,
        covariates: &DMatrix<f64>,
        covariate_names: &[String],
    ) -> Result<Self> {
        let x = design_with_intercept(covariates);
        let mut names = vec!["(Intercept)".to_string()];
        names.extend(covariate_names.iter().cloned());
        Self::new(points, y, x, names)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }

    /// Copy with observations rearranged as `order[k]`-th original at row `k`.
    pub fn reordered(&self, order: &[usize]) -> SpatialDataset {
        SpatialDataset {
            points: order.iter().map(|&i| self.points[i]).collect(),
            y: DVector::from_iterator(order.len(), order.iter().map(|&i| self.y[i])),
            x: self.x.select_rows(order),
            coef_names: self.coef_names.clone(),
        }
    }
}

pub fn design_with_intercept(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let n = covariates.nrows();
    let mut x = DMatrix::from_element(n, covariates.ncols() + 1, 1.0);
    x.columns_mut(1, covariates.ncols()).copy_from(covariates);
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    /// Full-covariance variance with the cross-block correction.
    Exact,
    /// Spread of the per-block estimates around the pooled one.
    Empirical,
    /// Pooled per-block GLS variances.
    Pooled,
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceMethod::Exact => "exact",
            VarianceMethod::Empirical => "empirical",
            VarianceMethod::Pooled => "pooled",
        })
    }
}

impl FromStr for VarianceMethod {
    type Err = SpinError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(VarianceMethod::Exact),
            "empirical" | "alt1" => Ok(VarianceMethod::Empirical),
            "pooled" | "alt2" => Ok(VarianceMethod::Pooled),
            other => Err(SpinError::InvalidParameter(format!(
                "unknown variance method `{other}`"
            ))),
        }
    }
}

/// How to build one partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    pub size: usize,
}

impl PartitionSpec {
    pub fn compact(size: usize) -> Self {
        PartitionSpec {
            scheme: PartitionScheme::Compact,
            size,
        }
    }

    pub fn build(&self, points: &[Point2D], seed: u64) -> Result<PartitionAssignment> {
        partition(self.scheme, points, self.size.min(points.len()), seed)
    }
}

#[derive(Debug, Clone)]
pub struct SpinOptions {
    pub model: CovModel,
    /// Partition for covariance-parameter estimation.
    pub cope: PartitionSpec,
    /// Partition for fixed-effect estimation.
    pub fefe: PartitionSpec,
    pub variance_method: VarianceMethod,
    pub seed: u64,
    pub reml: RemlOptions,
    /// Build partitions on standardized coordinates; estimation still uses
    /// the original ones.
    pub standardize_coords: bool,
}

impl Default for SpinOptions {
    fn default() -> Self {
        SpinOptions {
            model: CovModel::Exponential,
            cope: PartitionSpec::compact(50),
            fefe: PartitionSpec::compact(50),
            variance_method: VarianceMethod::Exact,
            seed: 0,
            reml: RemlOptions::default(),
            standardize_coords: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitTimings {
    pub covariance: Duration,
    pub fixed_effects: Duration,
}

/// Output of estimation and input to prediction.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub theta_hat: Theta,
    pub beta_hat: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    pub variance_method: VarianceMethod,
    pub cope_partition: PartitionAssignment,
    pub partition: PartitionAssignment,
    pub block_cache: BlockCache,
    pub reml_value: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub timings: FitTimings,
}

impl FittedModel {
    pub fn std_errors(&self) -> DVector<f64> {
        self.cov_beta.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Estimates `beta` and its variance for a known `theta` on a given
/// fixed-effects partition.
pub fn fit_fixed_effects_with_variance(
    data: &SpatialDataset,
    part: &PartitionAssignment,
    theta: &Theta,
    method: VarianceMethod,
) -> Result<(DVector<f64>, BlockCache, VarianceEstimate)> {
    let (beta, cache) = fit_fixed_effects(data, part, theta)?;
    let var = match method {
        VarianceMethod::Exact => VarianceEstimate::clean(var_beta_exact(data, &cache)?),
        VarianceMethod::Empirical => var_beta_alt1(&cache, &beta)?,
        VarianceMethod::Pooled => var_beta_alt2(&cache)?,
    };
    Ok((beta, cache, var))
}

/// Rebuilds a fitted model from saved covariance parameters, fixed-effects
/// partition and `cov_beta`; `beta` and the block cache are recomputed from
/// `data`.
pub fn restore_fitted_model(
    data: &SpatialDataset,
    theta: Theta,
    partition: PartitionAssignment,
    cov_beta: DMatrix<f64>,
    variance_method: VarianceMethod,
) -> Result<FittedModel> {
    theta.validate()?;
    let r = data.n_coef();
    if cov_beta.shape() != (r, r) {
        return Err(SpinError::DimensionMismatch(format!(
            "cov_beta is {}x{}, model has {r} coefficients",
            cov_beta.nrows(),
            cov_beta.ncols()
        )));
    }
    let (beta_hat, block_cache) = fit_fixed_effects(data, &partition, &theta)?;
    Ok(FittedModel {
        theta_hat: theta,
        beta_hat,
        cov_beta,
        variance_method,
        cope_partition: partition.clone(),
        partition,
        block_cache,
        reml_value: f64::NAN,
        converged: true,
        warnings: Vec::new(),
        timings: FitTimings::default(),
    })
}

/// The whole estimation pipeline: partition, REML, pooled GLS, variance.
pub fn fit_spin(data: &SpatialDataset, opts: &SpinOptions) -> Result<FittedModel> {
    let t0 = Instant::now();
    let scaled;
    let part_points = if opts.standardize_coords {
        scaled = standardize_points(&data.points);
        &scaled
    } else {
        &data.points
    };
    let cope_partition = opts.cope.build(part_points, opts.seed)?;
    let cov_fit = fit_covariance(data, &cope_partition, opts.model, &opts.reml)?;
    let covariance = t0.elapsed();

    let t1 = Instant::now();
    let partition = if opts.fefe == opts.cope {
        cope_partition.clone()
    } else {
        opts.fefe.build(part_points, opts.seed.wrapping_add(1))?
    };
    let (beta_hat, block_cache, var) =
        fit_fixed_effects_with_variance(data, &partition, &cov_fit.theta, opts.variance_method)?;
    let fixed_effects = t1.elapsed();

    let mut warnings = var.warnings;
    if !cov_fit.converged {
        warnings.push(format!(
            "covariance optimizer stopped after {} iterations without converging",
            cov_fit.iterations
        ));
    }
    Ok(FittedModel {
        theta_hat: cov_fit.theta,
        beta_hat,
        cov_beta: var.matrix,
        variance_method: opts.variance_method,
        cope_partition,
        partition,
        block_cache,
        reml_value: cov_fit.reml_value,
        converged: cov_fit.converged,
        warnings,
        timings: FitTimings {
            covariance,
            fixed_effects,
        },
    })
}
