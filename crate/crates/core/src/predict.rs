//! Nearest-neighbour point kriging and grid-approximated block kriging.
//!
//! Global mode plugs the pooled `beta_hat` into simple kriging on the `m`
//! nearest observations and inflates the variance by the uncertainty of
//! `beta_hat`. Local mode re-estimates `beta` from the neighbourhood alone.
//! Cross covariances between distinct sites carry no nugget, so a nugget
//! smooths rather than interpolates.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{build_cov_matrix, build_cov_vector, CholFactor, Theta};
use crate::error::{Result, SpinError};
use crate::estimate::{FittedModel, SpatialDataset};
use crate::geometry::{euclidean_distance, NeighborIndex, Point2D};

pub const DEFAULT_NEIGHBORS: usize = 50;
pub const DEFAULT_SUBSAMPLE_CAP: usize = 5000;
/// Rows of the implicit covariance matrices generated per work unit.
pub const ROW_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaMode {
    #[default]
    Global,
    Local,
}

impl fmt::Display for BetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BetaMode::Global => "global",
            BetaMode::Local => "local",
        })
    }
}

impl FromStr for BetaMode {
    type Err = SpinError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(BetaMode::Global),
            "local" => Ok(BetaMode::Local),
            other => Err(SpinError::InvalidParameter(format!(
                "unknown beta mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointPrediction {
    pub value: f64,
    pub variance: f64,
    /// Neighbour ids in order of increasing distance.
    pub neighbors: Vec<usize>,
    /// Set when a negative variance was clamped to zero.
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct PredictionTask {
    pub sites: Vec<Point2D>,
    pub x_pred: DMatrix<f64>,
    pub m: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PredictionResult {
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
    pub neighbors: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Grid approximation of a region with averaging weights.
#[derive(Debug, Clone)]
pub struct BlockRegionGrid {
    points: Vec<Point2D>,
    weights: Vec<f64>,
}

impl BlockRegionGrid {
    /// Equal weights `1/N`.
    pub fn uniform(points: Vec<Point2D>) -> Result<Self> {
        if points.is_empty() {
            return Err(SpinError::EmptyInput("block grid has no points"));
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(BlockRegionGrid { points, weights })
    }

    /// `side x side` cell centres of the rectangle `[lo, hi]`.
    pub fn regular(lo: Point2D, hi: Point2D, side: usize) -> Result<Self> {
        let pts = (0..side * side)
            .map(|k| {
                let (r, c) = (k / side, k % side);
                Point2D::new(
                    lo.s1 + (c as f64 + 0.5) / side as f64 * (hi.s1 - lo.s1),
                    lo.s2 + (r as f64 + 0.5) / side as f64 * (hi.s2 - lo.s2),
                )
            })
            .collect();
        Self::uniform(pts)
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BlockOptions {
    pub m: usize,
    /// Above this many observations the observed-observed term is estimated
    /// from a random subsample; `None` never subsamples.
    pub subsample_cap: Option<usize>,
    pub seed: u64,
}

impl Default for BlockOptions {
    fn default() -> Self {
        BlockOptions {
            m: DEFAULT_NEIGHBORS,
            subsample_cap: Some(DEFAULT_SUBSAMPLE_CAP),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockPrediction {
    pub value: f64,
    pub variance: f64,
    /// `a*' X_o - a' X_u`; zero when the weights are exactly unbiased.
    pub unbiasedness_gap: DVector<f64>,
    pub subsampled: bool,
    pub point_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Observations nearest to `site`, their points, covariance factor and
/// site-to-neighbour covariance.
struct Neighborhood {
    ids: Vec<usize>,
    factor: CholFactor,
    c: DVector<f64>,
    /// `S_j^{-1} c`.
    w: DVector<f64>,
}

fn neighborhood(
    theta: &Theta,
    data: &SpatialDataset,
    index: &NeighborIndex,
    site: &Point2D,
    m: usize,
) -> Result<Neighborhood> {
    if index.len() != data.n() {
        return Err(SpinError::DimensionMismatch(format!(
            "index over {} points, dataset has {}",
            index.len(),
            data.n()
        )));
    }
    if m == 0 {
        return Err(SpinError::InvalidParameter(
            "neighbour count must be positive".into(),
        ));
    }
    let ids: Vec<usize> = index
        .k_nearest(site, m)?
        .into_iter()
        .map(|(i, _)| i)
        .collect();
    let pts: Vec<Point2D> = ids.iter().map(|&i| data.points[i]).collect();
    let factor = CholFactor::new(build_cov_matrix(&pts, theta))?;
    let c = build_cov_vector(site, &pts, theta);
    let w = factor.solve_vec(&c)?;
    Ok(Neighborhood { ids, factor, c, w })
}

fn check_x_site(x_site: &DVector<f64>, r: usize) -> Result<()> {
    if x_site.len() != r {
        return Err(SpinError::DimensionMismatch(format!(
            "site covariates have length {}, model has {r} coefficients",
            x_site.len()
        )));
    }
    Ok(())
}

fn finish(value: f64, raw_variance: f64, neighbors: Vec<usize>) -> PointPrediction {
    PointPrediction {
        value,
        variance: raw_variance.max(0.0),
        neighbors,
        clamped: raw_variance < 0.0,
    }
}

/// Kriging on the `m` nearest observations with `beta` fixed at the pooled
/// estimate; the variance adds `u' C u` for the uncertainty of `beta`.
pub fn predict_point_global(
    fit: &FittedModel,
    data: &SpatialDataset,
    index: &NeighborIndex,
    site: &Point2D,
    x_site: &DVector<f64>,
    m: usize,
) -> Result<PointPrediction> {
    check_x_site(x_site, fit.beta_hat.len())?;
    let nb = neighborhood(&fit.theta_hat, data, index, site, m)?;
    Ok(global_from_neighborhood(fit, data, nb, x_site).0)
}

/// Global-mode prediction on a prepared neighbourhood; also returns
/// `u = x - X_j' S_j^{-1} c` and `S_j^{-1} c`.
fn global_from_neighborhood(
    fit: &FittedModel,
    data: &SpatialDataset,
    nb: Neighborhood,
    x_site: &DVector<f64>,
) -> (PointPrediction, DVector<f64>, DVector<f64>) {
    let xj = data.x.select_rows(&nb.ids);
    let yj = DVector::from_iterator(nb.ids.len(), nb.ids.iter().map(|&i| data.y[i]));
    let value = x_site.dot(&fit.beta_hat) + nb.w.dot(&(yj - &xj * &fit.beta_hat));
    let u = x_site - xj.transpose() * &nb.w;
    let var = fit.theta_hat.sill() - nb.c.dot(&nb.w) + (u.transpose() * &fit.cov_beta * &u)[(0, 0)];
    (finish(value, var, nb.ids), u, nb.w)
}

/// Universal kriging restricted to the `m` nearest observations. Design
/// columns that vanish on the neighbourhood are dropped together with the
/// matching site covariate.
pub fn predict_point_local(
    theta: &Theta,
    data: &SpatialDataset,
    index: &NeighborIndex,
    site: &Point2D,
    x_site: &DVector<f64>,
    m: usize,
) -> Result<PointPrediction> {
    check_x_site(x_site, data.n_coef())?;
    let nb = neighborhood(theta, data, index, site, m)?;
    let full = data.x.select_rows(&nb.ids);
    let keep: Vec<usize> = (0..full.ncols())
        .filter(|&c| full.column(c).iter().any(|&v| v != 0.0))
        .collect();
    if keep.is_empty() {
        return Err(SpinError::RankDeficient(
            "all design columns vanish on the neighbourhood".into(),
        ));
    }
    let xj = full.select_columns(&keep);
    let x0 = DVector::from_iterator(keep.len(), keep.iter().map(|&c| x_site[c]));
    let yj = DVector::from_iterator(nb.ids.len(), nb.ids.iter().map(|&i| data.y[i]));

    let sinv_x = nb.factor.solve(&xj)?;
    let info = xj.transpose() * &sinv_x;
    let info = (&info + info.transpose()) * 0.5;
    let info_inv = crate::estimate::information_inverse(&info).ok_or_else(|| {
        SpinError::RankDeficient(format!(
            "local design on {} neighbours is singular after dropping zero columns",
            nb.ids.len()
        ))
    })?;
    let beta = &info_inv * (sinv_x.transpose() * &yj);
    let value = x0.dot(&beta) + nb.w.dot(&(yj - &xj * &beta));
    let u = &x0 - xj.transpose() * &nb.w;
    let var = theta.sill() - nb.c.dot(&nb.w) + (u.transpose() * info_inv * &u)[(0, 0)];
    Ok(finish(value, var, nb.ids))
}

/// Weights `lambda` over all observations with `lambda' y` equal to the
/// global-mode prediction: `Q' u` plus `S_j^{-1} c` scattered onto the
/// neighbours.
pub fn predict_weights(
    fit: &FittedModel,
    data: &SpatialDataset,
    index: &NeighborIndex,
    site: &Point2D,
    x_site: &DVector<f64>,
    m: usize,
) -> Result<DVector<f64>> {
    check_x_site(x_site, fit.beta_hat.len())?;
    let nb = neighborhood(&fit.theta_hat, data, index, site, m)?;
    let xj = data.x.select_rows(&nb.ids);
    let u = x_site - xj.transpose() * &nb.w;
    let mut lambda = fit.block_cache.q_transpose_times(&u);
    for (k, &i) in nb.ids.iter().enumerate() {
        lambda[i] += nb.w[k];
    }
    Ok(lambda)
}

/// Point predictions at every site of `task`, computed in parallel into
/// fixed slots.
pub fn predict(
    fit: &FittedModel,
    data: &SpatialDataset,
    index: &NeighborIndex,
    task: &PredictionTask,
    mode: BetaMode,
) -> Result<PredictionResult> {
    if task.x_pred.nrows() != task.sites.len() {
        return Err(SpinError::DimensionMismatch(format!(
            "{} sites but {} design rows",
            task.sites.len(),
            task.x_pred.nrows()
        )));
    }
    let preds: Vec<PointPrediction> = (0..task.sites.len())
        .into_par_iter()
        .map(|j| {
            let x0 = task.x_pred.row(j).transpose();
            match mode {
                BetaMode::Global => {
                    predict_point_global(fit, data, index, &task.sites[j], &x0, task.m)
                }
                BetaMode::Local => {
                    predict_point_local(&fit.theta_hat, data, index, &task.sites[j], &x0, task.m)
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut out = PredictionResult::default();
    let clamped = preds.iter().filter(|p| p.clamped).count();
    if clamped > 0 {
        let msg = format!("{clamped} negative prediction variance(s) clamped to 0");
        log::warn!("{msg}");
        out.warnings.push(msg);
    }
    for p in preds {
        out.values.push(p.value);
        out.variances.push(p.variance);
        out.neighbors.push(p.neighbors);
    }
    Ok(out)
}

/// `sum_ij a_i a_j V_ij` over `points`, with `V` the covariance matrix
/// (nugget on the diagonal), generated `ROW_CHUNK` rows at a time.
fn quadratic_form(points: &[Point2D], a: &[f64], theta: &Theta) -> f64 {
    let chunks: Vec<f64> = (0..points.len().div_ceil(ROW_CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(points.len());
            let mut acc = 0.0;
            for i in rows {
                if a[i] == 0.0 {
                    continue;
                }
                let mut row = 0.0;
                for (j, p) in points.iter().enumerate() {
                    let v = if i == j {
                        theta.sill()
                    } else {
                        theta.spatial_cov(euclidean_distance(&points[i], p))
                    };
                    row += a[j] * v;
                }
                acc += a[i] * row;
            }
            acc
        })
        .collect();
    chunks.iter().sum()
}

/// `sum_{i != j in S} a_i a_j V_ij` over a subset `S`.
fn off_diagonal_form(points: &[Point2D], a: &[f64], subset: &[usize], theta: &Theta) -> f64 {
    let chunks: Vec<f64> = subset
        .par_chunks(ROW_CHUNK)
        .map(|rows| {
            let mut acc = 0.0;
            for &i in rows {
                let mut row = 0.0;
                for &j in subset {
                    if j != i {
                        row += a[j] * theta.spatial_cov(euclidean_distance(&points[i], &points[j]));
                    }
                }
                acc += a[i] * row;
            }
            acc
        })
        .collect();
    chunks.iter().sum()
}

/// `sum_i sum_k a*_i a_k C(o_i, u_k)`.
fn cross_form(obs: &[Point2D], a_star: &[f64], grid: &[Point2D], a: &[f64], theta: &Theta) -> f64 {
    let chunks: Vec<f64> = (0..obs.len().div_ceil(ROW_CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(obs.len());
            let mut acc = 0.0;
            for i in rows {
                if a_star[i] == 0.0 {
                    continue;
                }
                let row: f64 = grid
                    .iter()
                    .zip(a)
                    .map(|(g, ak)| ak * theta.spatial_cov(euclidean_distance(&obs[i], g)))
                    .sum();
                acc += a_star[i] * row;
            }
            acc
        })
        .collect();
    chunks.iter().sum()
}

/// Weighted average of the global-mode point predictions over the grid,
/// and its prediction variance
/// `a*' V_oo a* - 2 a*' V_ou a + a' V_uu a` with `a* = sum_k a_k lambda_k`.
pub fn block_predict(
    fit: &FittedModel,
    data: &SpatialDataset,
    index: &NeighborIndex,
    grid: &BlockRegionGrid,
    x_grid: &DMatrix<f64>,
    opts: &BlockOptions,
) -> Result<BlockPrediction> {
    if grid.is_empty() {
        return Err(SpinError::EmptyInput("block grid has no points"));
    }
    let r = fit.beta_hat.len();
    if x_grid.nrows() != grid.len() || x_grid.ncols() != r {
        return Err(SpinError::DimensionMismatch(format!(
            "grid of {} points with a {}x{} design, expected {r} columns",
            grid.len(),
            x_grid.nrows(),
            x_grid.ncols()
        )));
    }
    let theta = fit.theta_hat;
    let a = grid.weights();
    // per grid point: prediction, u_k and neighbour weights
    let parts: Vec<(PointPrediction, DVector<f64>, DVector<f64>)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x0 = x_grid.row(k).transpose();
            let site = &grid.points()[k];
            let nb = neighborhood(&theta, data, index, site, opts.m)?;
            Ok(global_from_neighborhood(fit, data, nb, &x0))
        })
        .collect::<Result<_>>()?;

    let mut value = 0.0;
    let mut u_bar = DVector::zeros(r);
    let mut local = vec![0.0; data.n()];
    for (k, (p, u, w)) in parts.iter().enumerate() {
        value += a[k] * p.value;
        u_bar += u * a[k];
        for (q, &i) in p.neighbors.iter().enumerate() {
            local[i] += a[k] * w[q];
        }
    }
    let global = fit.block_cache.q_transpose_times(&u_bar);
    let a_star: Vec<f64> = local
        .iter()
        .zip(global.iter())
        .map(|(l, g)| l + g)
        .collect();

    let mut warnings = Vec::new();
    let n = data.n();
    let (voo, subsampled) = match opts.subsample_cap {
        Some(cap) if n > cap && cap >= 2 => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut subset = sample(&mut rng, n, cap).into_vec();
            subset.sort_unstable();
            let diag: f64 = a_star.iter().map(|v| v * v).sum::<f64>() * theta.sill();
            let scale = (n as f64 * (n - 1) as f64) / (cap as f64 * (cap - 1) as f64);
            let off = off_diagonal_form(&data.points, &a_star, &subset, &theta);
            warnings.push(format!(
                "observed-observed variance term estimated from {cap} of {n} observations"
            ));
            (diag + scale * off, true)
        }
        _ => (quadratic_form(&data.points, &a_star, &theta), false),
    };
    let vou = cross_form(&data.points, &a_star, grid.points(), a, &theta);
    let vuu = quadratic_form(grid.points(), a, &theta);
    let raw = voo - 2.0 * vou + vuu;
    if raw < 0.0 {
        warnings.push(format!("negative block variance {raw:e} clamped to 0"));
    }

    let a_star_v = DVector::from_column_slice(&a_star);
    let gap = data.x.transpose() * a_star_v - x_grid.transpose() * DVector::from_column_slice(a);
    Ok(BlockPrediction {
        value,
        variance: raw.max(0.0),
        unbiasedness_gap: gap,
        subsampled,
        point_values: parts.into_iter().map(|(p, _, _)| p.value).collect(),
        warnings,
    })
}
