//! Estimators of `var(beta_bd)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::blocks::{gather_points, BlockCache};
use super::SpatialDataset;
use crate::covariance::{build_cross_cov, CovModel};
use crate::error::{Result, SpinError};
use crate::geometry::{bounding_box, Point2D};

#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub matrix: DMatrix<f64>,
    /// Blocks left out because their own GLS information was singular.
    pub dropped_blocks: Vec<usize>,
    pub warnings: Vec<String>,
}

impl VarianceEstimate {
    pub(crate) fn clean(matrix: DMatrix<f64>) -> Self {
        VarianceEstimate {
            matrix,
            dropped_blocks: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Squared lower bound on the distance between two bounding boxes.
fn box_gap2(a: &(Point2D, Point2D), b: &(Point2D, Point2D)) -> f64 {
    let gap = |lo1: f64, hi1: f64, lo2: f64, hi2: f64| (lo2 - hi1).max(lo1 - hi2).max(0.0);
    let g1 = gap(a.0.s1, a.1.s1, b.0.s1, b.1.s1);
    let g2 = gap(a.0.s2, a.1.s2, b.0.s2, b.1.s2);
    g1 * g1 + g2 * g2
}

/// `T^{-1} + T^{-1} W T^{-1}` with
/// `W = sum_{i<j} [A_i' S_ij A_j + (A_i' S_ij A_j)']`, `A_i = S_ii^{-1} X_i`.
///
/// Cross blocks are built one pair at a time. The sum runs over `i`
/// ascending, each row `i` accumulating `j > i` ascending, so the result does
/// not depend on the thread count.
pub fn var_beta_exact(data: &SpatialDataset, cache: &BlockCache) -> Result<DMatrix<f64>> {
    if cache.n_obs() != data.n() {
        return Err(SpinError::DimensionMismatch(
            "block cache built for another dataset".into(),
        ));
    }
    let theta = cache.theta;
    let r = cache.n_coef();
    let block_points: Vec<Vec<Point2D>> = cache
        .blocks
        .iter()
        .map(|b| gather_points(&data.points, &b.ids))
        .collect();
    let boxes: Vec<(Point2D, Point2D)> = block_points
        .iter()
        .map(|p| bounding_box(p).expect("blocks are nonempty"))
        .collect();
    let compact_support = matches!(theta.model, CovModel::Spherical);
    let range2 = theta.range * theta.range;
    let p = cache.blocks.len();

    let rows: Vec<DMatrix<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut acc = DMatrix::zeros(r, r);
            for j in (i + 1)..p {
                if compact_support && box_gap2(&boxes[i], &boxes[j]) >= range2 {
                    continue;
                }
                let sij = build_cross_cov(&block_points[i], &block_points[j], &theta);
                let t = sij * &cache.blocks[j].sinv_x;
                acc += cache.blocks[i].sinv_x.transpose() * t;
            }
            acc
        })
        .collect();
    let mut w = DMatrix::zeros(r, r);
    for acc in &rows {
        w += acc;
    }
    let w = &w + w.transpose();
    let tinv = &cache.txx_inv;
    Ok(symmetrize(tinv + tinv * w * tinv))
}

fn usable_blocks(cache: &BlockCache) -> (Vec<usize>, Vec<usize>) {
    (0..cache.blocks.len()).partition(|&i| cache.blocks[i].beta.is_some())
}

fn dropped_warning(dropped: &[usize]) -> Vec<String> {
    if dropped.is_empty() {
        Vec::new()
    } else {
        vec![format!(
            "{} block(s) with singular X_i' S_ii^-1 X_i left out of the variance: {:?}",
            dropped.len(),
            dropped
        )]
    }
}

/// Spread of the block estimates: `1/(P(P-1)) sum (b_i - b)(b_i - b)'`.
pub fn var_beta_alt1(cache: &BlockCache, beta_hat: &DVector<f64>) -> Result<VarianceEstimate> {
    let (used, dropped) = usable_blocks(cache);
    let p = used.len();
    if p < 2 {
        return Err(SpinError::InsufficientData {
            requested: 2,
            available: p,
        });
    }
    let r = cache.n_coef();
    let mut acc = DMatrix::zeros(r, r);
    for &i in &used {
        let d = cache.blocks[i].beta.as_ref().expect("usable block") - beta_hat;
        acc += &d * d.transpose();
    }
    let matrix = symmetrize(acc / (p * (p - 1)) as f64);
    Ok(VarianceEstimate {
        matrix,
        warnings: dropped_warning(&dropped),
        dropped_blocks: dropped,
    })
}

/// Pooled block variances: `1/P^2 sum (X_i' S_ii^{-1} X_i)^{-1}`.
pub fn var_beta_alt2(cache: &BlockCache) -> Result<VarianceEstimate> {
    let (used, dropped) = usable_blocks(cache);
    let p = used.len();
    if p == 0 {
        return Err(SpinError::InsufficientData {
            requested: 1,
            available: 0,
        });
    }
    let r = cache.n_coef();
    let mut acc = DMatrix::zeros(r, r);
    for &i in &used {
        acc += cache.blocks[i].xtsx_inv.as_ref().expect("usable block");
    }
    let matrix = symmetrize(acc / (p * p) as f64);
    Ok(VarianceEstimate {
        matrix,
        warnings: dropped_warning(&dropped),
        dropped_blocks: dropped,
    })
}
