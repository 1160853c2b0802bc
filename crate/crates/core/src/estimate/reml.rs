use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use super::blocks::gather_points;
use super::SpatialDataset;
use crate::covariance::{build_cov_matrix, CholFactor, CovModel, Theta};
use crate::error::{Result, SpinError};
use crate::geometry::{bounding_box, euclidean_distance, Point2D};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::partition::PartitionAssignment;

/// Lower bound on the nugget as a fraction of the sill during optimization.
pub const NUGGET_FLOOR: f64 = 1e-8;

const LOG_PARAM_LIMIT: f64 = 40.0;

#[derive(Debug, Clone, Default)]
pub struct RemlOptions {
    /// Starting point; defaults to [`initial_theta`].
    pub initial: Option<Theta>,
    pub nelder_mead: NelderMeadOptions,
}

#[derive(Debug, Clone)]
pub struct CovarianceFit {
    pub theta: Theta,
    pub reml_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best objective value after each optimizer iteration.
    pub history: Vec<f64>,
}

/// Data of one group, gathered once and reused across objective calls.
struct GroupData {
    points: Vec<Point2D>,
    xy: DMatrix<f64>,
}

pub(crate) struct RemlProblem {
    groups: Vec<GroupData>,
    n_coef: usize,
}

impl RemlProblem {
    pub(crate) fn new(data: &SpatialDataset, part: &PartitionAssignment) -> Result<Self> {
        if part.len() != data.n() {
            return Err(SpinError::DimensionMismatch(format!(
                "partition covers {} observations, dataset has {}",
                part.len(),
                data.n()
            )));
        }
        let r = data.n_coef();
        let groups = part
            .members()
            .into_iter()
            .map(|ids| {
                let mut xy = DMatrix::zeros(ids.len(), r + 1);
                for (k, &i) in ids.iter().enumerate() {
                    for c in 0..r {
                        xy[(k, c)] = data.x[(i, c)];
                    }
                    xy[(k, r)] = data.y[i];
                }
                GroupData {
                    points: gather_points(&data.points, &ids),
                    xy,
                }
            })
            .collect();
        Ok(RemlProblem { groups, n_coef: r })
    }

    /// `sum log|S_ii| + sum r_i' S_ii^{-1} r_i + log|sum X_i' S_ii^{-1} X_i|`
    /// with `r_i = y_i - X_i beta_bd(theta)`.
    pub(crate) fn objective(&self, theta: &Theta) -> Result<f64> {
        let r = self.n_coef;
        // whitened [X_i | y_i] and log-determinant per block
        let whitened: Vec<(f64, DMatrix<f64>)> = self
            .groups
            .par_iter()
            .map(|g| {
                let f = CholFactor::new(build_cov_matrix(&g.points, theta))?;
                Ok((f.log_det(), f.whiten(&g.xy)?))
            })
            .collect::<Result<_>>()?;

        let mut log_det = 0.0;
        let mut txx = DMatrix::zeros(r, r);
        let mut txy = DVector::zeros(r);
        for (ld, w) in &whitened {
            log_det += ld;
            let wx = w.columns(0, r);
            let wy = w.column(r);
            txx += wx.transpose() * wx;
            txy += wx.transpose() * wy;
        }
        let txx = (&txx + txx.transpose()) * 0.5;
        let chol = Cholesky::new(txx)
            .ok_or_else(|| SpinError::RankDeficient("T_xx is not positive definite".into()))?;
        let beta = chol.solve(&txy);
        let log_det_txx = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        let quad: f64 = whitened
            .iter()
            .map(|(_, w)| (w.column(r) - w.columns(0, r) * &beta).norm_squared())
            .sum();
        Ok(log_det + quad + log_det_txx)
    }
}

/// Partitioned REML objective (additive constant dropped).
pub fn reml_objective(
    data: &SpatialDataset,
    part: &PartitionAssignment,
    theta: &Theta,
) -> Result<f64> {
    theta.validate()?;
    RemlProblem::new(data, part)?.objective(theta)
}

/// Starting values: half the OLS residual variance for both variance
/// components, a quarter of the bounding-box diagonal for the range.
pub fn initial_theta(data: &SpatialDataset, model: CovModel) -> Result<Theta> {
    let xtx = data.x.transpose() * &data.x;
    let beta = xtx
        .lu()
        .solve(&(data.x.transpose() * &data.y))
        .ok_or_else(|| SpinError::RankDeficient("X'X is singular".into()))?;
    let resid = &data.y - &data.x * beta;
    let n = resid.len();
    let mean = resid.mean();
    let var = if n > 1 {
        resid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        1.0
    };
    let var = if var > 0.0 { var } else { 1.0 };
    let (lo, hi) = bounding_box(&data.points).ok_or(SpinError::EmptyInput("no points"))?;
    let diag = euclidean_distance(&lo, &hi);
    let range = if diag > 0.0 { diag / 4.0 } else { 1.0 };
    Theta::new(var / 2.0, var / 2.0, range, model)
}

pub(crate) fn theta_from_log(x: &[f64], model: CovModel) -> Theta {
    let c = |v: f64| v.clamp(-LOG_PARAM_LIMIT, LOG_PARAM_LIMIT).exp();
    let partial_sill = c(x[0]);
    let raw_nugget = c(x[1]);
    // nugget >= NUGGET_FLOOR * (partial_sill + nugget)
    let floor = NUGGET_FLOOR * partial_sill / (1.0 - NUGGET_FLOOR);
    Theta {
        partial_sill,
        nugget: raw_nugget.max(floor),
        range: c(x[2]),
        model,
    }
}

/// Minimizes the partitioned REML objective over log-transformed
/// `(partial sill, nugget, range)` with Nelder-Mead.
pub fn fit_covariance(
    data: &SpatialDataset,
    part: &PartitionAssignment,
    model: CovModel,
    opts: &RemlOptions,
) -> Result<CovarianceFit> {
    let problem = RemlProblem::new(data, part)?;
    let start = match opts.initial {
        Some(t) => Theta { model, ..t },
        None => initial_theta(data, model)?,
    };
    start.validate()?;
    let x0 = [
        start.partial_sill.max(1e-12).ln(),
        start.nugget.max(1e-12).ln(),
        start.range.ln(),
    ];
    let result = nelder_mead(
        |x| {
            problem
                .objective(&theta_from_log(x, model))
                .unwrap_or(f64::INFINITY)
        },
        &x0,
        &opts.nelder_mead,
    );
    if !result.f.is_finite() {
        return Err(SpinError::NotPositiveDefinite { size: data.n() });
    }
    if !result.converged {
        log::warn!(
            "REML optimizer hit {} iterations; returning best value {}",
            result.iterations,
            result.f
        );
    }
    Ok(CovarianceFit {
        theta: theta_from_log(&result.x, model),
        reml_value: result.f,
        converged: result.converged,
        iterations: result.iterations,
        evaluations: result.evaluations,
        history: result.history,
    })
}
