use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use super::SpatialDataset;
use crate::covariance::{build_cov_matrix, spd_inverse, CholFactor, Theta};
use crate::error::{Result, SpinError};
use crate::geometry::Point2D;
use crate::partition::PartitionAssignment;

/// Per-group quantities of the block-diagonal working covariance.
#[derive(Debug, Clone)]
pub struct Block {
    /// Observation ids in this group, ascending.
    pub ids: Vec<usize>,
    pub factor: CholFactor,
    /// `Sigma_ii^{-1} X_i`.
    pub sinv_x: DMatrix<f64>,
    /// `X_i' Sigma_ii^{-1} X_i`.
    pub xtsx: DMatrix<f64>,
    /// `X_i' Sigma_ii^{-1} y_i`.
    pub xtsy: DVector<f64>,
    /// Block-local GLS estimate; `None` when `xtsx` is singular.
    pub beta: Option<DVector<f64>>,
    /// `(X_i' Sigma_ii^{-1} X_i)^{-1}` when it exists.
    pub xtsx_inv: Option<DMatrix<f64>>,
}

/// All block factors plus the pooled normal equations `T_xx beta = t_xy`.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub theta: Theta,
    pub blocks: Vec<Block>,
    pub txx: DMatrix<f64>,
    pub txx_inv: DMatrix<f64>,
    pub txy: DVector<f64>,
    pub(crate) n: usize,
}

impl BlockCache {
    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn n_coef(&self) -> usize {
        self.txx.nrows()
    }

    /// `Q' v` for `v` of length R, where `beta_bd = Q y`.
    pub fn q_transpose_times(&self, v: &DVector<f64>) -> DVector<f64> {
        let tv = &self.txx_inv * v;
        let mut out = DVector::zeros(self.n);
        for b in &self.blocks {
            let part = &b.sinv_x * &tv;
            for (k, &id) in b.ids.iter().enumerate() {
                out[id] = part[k];
            }
        }
        out
    }

    /// `Q y`.
    pub fn q_times(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(self.n_coef());
        for b in &self.blocks {
            for (k, &id) in b.ids.iter().enumerate() {
                acc += b.sinv_x.row(k).transpose() * y[id];
            }
        }
        &self.txx_inv * acc
    }

    /// The R x n matrix `Q` written out explicitly.
    pub fn assemble_q(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n_coef(), self.n);
        for b in &self.blocks {
            let cols = &self.txx_inv * b.sinv_x.transpose();
            for (k, &id) in b.ids.iter().enumerate() {
                q.set_column(id, &cols.column(k));
            }
        }
        q
    }
}

pub(crate) fn gather_points(points: &[Point2D], ids: &[usize]) -> Vec<Point2D> {
    ids.iter().map(|&i| points[i]).collect()
}

/// Inverse of an R x R GLS information matrix when it is numerically
/// nonsingular.
pub(crate) fn information_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let max_diag = m.diagonal().iter().copied().fold(0.0f64, f64::max);
    if max_diag <= 0.0 {
        return None;
    }
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|k| l[(k, k)] * l[(k, k)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot / max_diag < 1e-12 {
        return None;
    }
    spd_inverse(m)
}

fn build_block(data: &SpatialDataset, ids: Vec<usize>, theta: &Theta) -> Result<Block> {
    let pts = gather_points(&data.points, &ids);
    let factor = CholFactor::new(build_cov_matrix(&pts, theta))?;
    let xi = data.x.select_rows(&ids);
    let yi = DVector::from_iterator(ids.len(), ids.iter().map(|&i| data.y[i]));
    let sinv_x = factor.solve(&xi)?;
    let sinv_y = factor.solve_vec(&yi)?;
    let xtsx = xi.transpose() * &sinv_x;
    let xtsx = (&xtsx + xtsx.transpose()) * 0.5;
    let xtsy = xi.transpose() * sinv_y;
    let xtsx_inv = information_inverse(&xtsx);
    let beta = xtsx_inv.as_ref().map(|inv| inv * &xtsy);
    Ok(Block {
        ids,
        factor,
        sinv_x,
        xtsx,
        xtsy,
        beta,
        xtsx_inv,
    })
}

/// Pooled GLS estimate `T_xx^{-1} t_xy` over the groups of `part`, plus the
/// per-block cache used by the variance estimators and prediction.
pub fn fit_fixed_effects(
    data: &SpatialDataset,
    part: &PartitionAssignment,
    theta: &Theta,
) -> Result<(DVector<f64>, BlockCache)> {
    if part.len() != data.n() {
        return Err(SpinError::DimensionMismatch(format!(
            "partition covers {} observations, dataset has {}",
            part.len(),
            data.n()
        )));
    }
    let blocks: Vec<Block> = part
        .members()
        .into_par_iter()
        .map(|ids| build_block(data, ids, theta))
        .collect::<Result<_>>()?;
    let r = data.n_coef();
    let mut txx = DMatrix::zeros(r, r);
    let mut txy = DVector::zeros(r);
    for b in &blocks {
        txx += &b.xtsx;
        txy += &b.xtsy;
    }
    let txx_inv = information_inverse(&txx).ok_or_else(|| {
        SpinError::RankDeficient("pooled information matrix T_xx is singular".into())
    })?;
    let beta = &txx_inv * &txy;
    Ok((
        beta,
        BlockCache {
            theta: *theta,
            blocks,
            txx,
            txx_inv,
            txy,
            n: data.n(),
        },
    ))
}
