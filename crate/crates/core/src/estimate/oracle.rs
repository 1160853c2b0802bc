//! Dense full-covariance reference fit for small `n`.

use nalgebra::{DMatrix, DVector};

use super::reml::{initial_theta, theta_from_log};
use super::SpatialDataset;
use crate::covariance::{build_cov_matrix, build_cross_cov, CholFactor, CovModel, Theta};
use crate::error::{Result, SpinError};
use crate::geometry::Point2D;
use crate::optim::{nelder_mead, NelderMeadOptions};

pub const DEFAULT_ORACLE_CAP: usize = 3000;

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub model: CovModel,
    pub cap: usize,
    /// Optimizer start when `theta` is estimated; defaults to the same
    /// starting rule as the partitioned fit.
    pub initial: Option<Theta>,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            model: CovModel::Exponential,
            cap: DEFAULT_ORACLE_CAP,
            initial: None,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

/// GLS fit under the full covariance matrix.
#[derive(Debug, Clone)]
pub struct DenseFit {
    pub theta: Theta,
    pub beta: DVector<f64>,
    /// `(X' S^{-1} X)^{-1}`.
    pub cov_beta: DMatrix<f64>,
    /// Objective value at `theta`.
    pub reml_value: f64,
    pub factor: CholFactor,
    points: Vec<Point2D>,
    sinv_x: DMatrix<f64>,
    sinv_resid: DVector<f64>,
}

struct DenseParts {
    factor: CholFactor,
    sinv_x: DMatrix<f64>,
    xtsx_inv: DMatrix<f64>,
    beta: DVector<f64>,
    sinv_resid: DVector<f64>,
    value: f64,
}

fn dense_parts(data: &SpatialDataset, theta: &Theta) -> Result<DenseParts> {
    let factor = CholFactor::new(build_cov_matrix(&data.points, theta))?;
    let sinv_x = factor.solve(&data.x)?;
    let xtsx = data.x.transpose() * &sinv_x;
    let xtsx = (&xtsx + xtsx.transpose()) * 0.5;
    let chol = xtsx
        .clone()
        .cholesky()
        .ok_or_else(|| SpinError::RankDeficient("X' S^-1 X is not positive definite".into()))?;
    let beta = chol.solve(&(sinv_x.transpose() * &data.y));
    let resid = &data.y - &data.x * &beta;
    let sinv_resid = factor.solve_vec(&resid)?;
    let log_det_x = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    let value = factor.log_det() + resid.dot(&sinv_resid) + log_det_x;
    let xtsx_inv = chol.inverse();
    let xtsx_inv = (&xtsx_inv + xtsx_inv.transpose()) * 0.5;
    Ok(DenseParts {
        factor,
        sinv_x,
        xtsx_inv,
        beta,
        sinv_resid,
        value,
    })
}

/// REML objective under the full covariance, constant dropped.
pub fn dense_reml_objective(data: &SpatialDataset, theta: &Theta) -> Result<f64> {
    theta.validate()?;
    Ok(dense_parts(data, theta)?.value)
}

/// Dense REML (when `theta` is `None`) followed by dense GLS.
pub fn fit_full_oracle(
    data: &SpatialDataset,
    theta: Option<Theta>,
    opts: &OracleOptions,
) -> Result<DenseFit> {
    if data.n() > opts.cap {
        return Err(SpinError::OracleCapExceeded {
            n: data.n(),
            cap: opts.cap,
        });
    }
    let theta = match theta {
        Some(t) => {
            t.validate()?;
            t
        }
        None => {
            let model = opts.model;
            let start = match opts.initial {
                Some(t) => Theta { model, ..t },
                None => initial_theta(data, model)?,
            };
            let x0 = [
                start.partial_sill.max(1e-12).ln(),
                start.nugget.max(1e-12).ln(),
                start.range.ln(),
            ];
            let result = nelder_mead(
                |x| {
                    dense_parts(data, &theta_from_log(x, model))
                        .map(|p| p.value)
                        .unwrap_or(f64::INFINITY)
                },
                &x0,
                &opts.nelder_mead,
            );
            if !result.f.is_finite() {
                return Err(SpinError::NotPositiveDefinite { size: data.n() });
            }
            theta_from_log(&result.x, model)
        }
    };
    let p = dense_parts(data, &theta)?;
    Ok(DenseFit {
        theta,
        beta: p.beta,
        cov_beta: p.xtsx_inv,
        reml_value: p.value,
        factor: p.factor,
        points: data.points.clone(),
        sinv_x: p.sinv_x,
        sinv_resid: p.sinv_resid,
    })
}

impl DenseFit {
    /// Universal-kriging EBLUP and its variance at each site, using every
    /// observation.
    pub fn predict(
        &self,
        sites: &[Point2D],
        x_sites: &DMatrix<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if x_sites.nrows() != sites.len() || x_sites.ncols() != self.beta.len() {
            return Err(SpinError::DimensionMismatch(format!(
                "{} sites with a {}x{} design, expected {} columns",
                sites.len(),
                x_sites.nrows(),
                x_sites.ncols(),
                self.beta.len()
            )));
        }
        // n x J cross covariances, solved in one pass
        let c = build_cross_cov(&self.points, sites, &self.theta);
        let sinv_c = self.factor.solve(&c)?;
        let sill = self.theta.sill();
        let mut values = Vec::with_capacity(sites.len());
        let mut variances = Vec::with_capacity(sites.len());
        for j in 0..sites.len() {
            let cj = c.column(j);
            let x0 = x_sites.row(j).transpose();
            values.push(x0.dot(&self.beta) + cj.dot(&self.sinv_resid));
            let u = &x0 - self.sinv_x.transpose() * cj;
            let v =
                sill - cj.dot(&sinv_c.column(j)) + (u.transpose() * &self.cov_beta * &u)[(0, 0)];
            variances.push(v.max(0.0));
        }
        Ok((values, variances))
    }
}
