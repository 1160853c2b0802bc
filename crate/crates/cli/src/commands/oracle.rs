use clap::Args;
use nalgebra::DMatrix;
use serde::Serialize;
use spin_core::covariance::build_cov_matrix;
use spin_core::estimate::{
    fit_covariance, fit_fixed_effects_with_variance, fit_full_oracle, OracleOptions, PartitionSpec,
    RemlOptions, DEFAULT_ORACLE_CAP,
};
use spin_core::geometry::bounding_box;
use spin_core::partition::PartitionScheme;
use spin_core::predict::{predict, BetaMode, BlockRegionGrid, PredictionTask};
use spin_core::{CovModel, FittedModel, NeighborIndex, Point2D, Theta, VarianceMethod};

use super::fit::DataArgs;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct CompareOracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Covariance parameters; all three given fixes them, none given
    /// estimates them on the partition.
    #[arg(long)]
    pub tau2: Option<f64>,
    #[arg(long)]
    pub nugget: Option<f64>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long, default_value = "exponential")]
    pub model: CovModel,
    #[arg(long, default_value = "compact")]
    pub partition: PartitionScheme,
    #[arg(long, default_value_t = 50)]
    pub part_size: usize,
    /// Neighbours per prediction; defaults to all observations.
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// Prediction sites form a side x side grid over the data's bounding box.
    #[arg(long, default_value_t = 5)]
    pub sites_side: usize,
    /// Largest n the dense comparison accepts.
    #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub groups: usize,
    pub theta: Theta,
    pub neighbors: usize,
    pub beta_partitioned: Vec<f64>,
    pub beta_full: Vec<f64>,
    /// Euclidean norm of the coefficient difference.
    pub beta_gap: f64,
    /// Relative Frobenius distance between the exact variance of the
    /// partitioned estimator and `Q S Q'` formed densely.
    pub variance_gap: f64,
    /// Largest absolute difference between partitioned and dense point
    /// predictions.
    pub prediction_gap: f64,
}

pub fn run(args: &CompareOracleArgs) -> CliResult<()> {
    let report = compare(args)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

pub fn compare(args: &CompareOracleArgs) -> CliResult<OracleReport> {
    let (data, _) = args.data.load()?;
    let n = data.n();
    if n > args.cap {
        return Err(CliError::Data(format!(
            "{n} observations exceed the dense comparison limit of {}",
            args.cap
        )));
    }
    if args.part_size == 0 || args.sites_side == 0 {
        return Err(CliError::Usage(
            "--part-size and --sites-side must be positive".into(),
        ));
    }
    let m = args.neighbors.unwrap_or(n);
    if m == 0 || m > n {
        return Err(CliError::Usage(format!(
            "--neighbors must be between 1 and {n}, got {m}"
        )));
    }
    let part = PartitionSpec {
        scheme: args.partition,
        size: args.part_size.min(n),
    }
    .build(&data.points, args.seed)?;
    let theta = match (args.tau2, args.nugget, args.range) {
        (Some(t), Some(e), Some(r)) => Theta::new(t, e, r, args.model)?,
        (None, None, None) => {
            fit_covariance(&data, &part, args.model, &RemlOptions::default())?.theta
        }
        _ => {
            return Err(CliError::Usage(
                "give all of --tau2, --nugget, --range or none".into(),
            ))
        }
    };

    let (beta, cache, var) =
        fit_fixed_effects_with_variance(&data, &part, &theta, VarianceMethod::Exact)?;
    let q = cache.assemble_q();
    let qsq = &q * build_cov_matrix(&data.points, &theta) * q.transpose();
    let variance_gap = (&var.matrix - &qsq).norm() / qsq.norm();

    let dense = fit_full_oracle(
        &data,
        Some(theta),
        &OracleOptions {
            cap: args.cap,
            ..Default::default()
        },
    )?;
    let beta_gap = (&beta - &dense.beta).norm();

    let sites = site_grid(&data.points, args.sites_side);
    let means = DMatrix::from_fn(1, data.n_coef(), |_, j| data.x.column(j).mean());
    let x_pred = DMatrix::from_fn(sites.len(), data.n_coef(), |_, j| means[(0, j)]);
    let fit = FittedModel {
        theta_hat: theta,
        beta_hat: beta.clone(),
        cov_beta: var.matrix,
        variance_method: VarianceMethod::Exact,
        cope_partition: part.clone(),
        partition: part,
        block_cache: cache,
        reml_value: f64::NAN,
        converged: true,
        warnings: var.warnings,
        timings: Default::default(),
    };
    let index = NeighborIndex::build(&data.points)?;
    let task = PredictionTask {
        sites: sites.clone(),
        x_pred: x_pred.clone(),
        m,
    };
    let spin = predict(&fit, &data, &index, &task, BetaMode::Global)?;
    let (full, _) = dense.predict(&sites, &x_pred)?;
    let prediction_gap = spin
        .values
        .iter()
        .zip(&full)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(OracleReport {
        n,
        groups: fit.partition.num_groups(),
        theta,
        neighbors: m,
        beta_partitioned: beta.iter().copied().collect(),
        beta_full: dense.beta.iter().copied().collect(),
        beta_gap,
        variance_gap,
        prediction_gap,
    })
}

fn site_grid(points: &[Point2D], side: usize) -> Vec<Point2D> {
    let (lo, hi) = bounding_box(points).expect("dataset is non-empty");
    BlockRegionGrid::regular(lo, hi, side)
        .expect("side is positive")
        .points()
        .to_vec()
}
