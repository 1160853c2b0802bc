//! Isotropic covariance models and the dense Cholesky kernels built on them.
//!
//! Observation covariance matrices put the nugget on the diagonal only: two
//! distinct observations that happen to share coordinates are correlated
//! through the partial sill but carry independent measurement error.
//! Cross-covariances between different random variables (observed vs.
//! prediction site, or two different partition blocks) never carry the
//! nugget.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinError};
use crate::geometry::{euclidean_distance, Point2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovModel {
    Exponential,
    Spherical,
}

impl fmt::Display for CovModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovModel::Exponential => write!(f, "exponential"),
            CovModel::Spherical => write!(f, "spherical"),
        }
    }
}

impl FromStr for CovModel {
    type Err = SpinError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(CovModel::Exponential),
            "spherical" | "sph" => Ok(CovModel::Spherical),
            other => Err(SpinError::InvalidParameter(format!(
                "unknown covariance model `{other}`"
            ))),
        }
    }
}

/// Covariance parameters: partial sill, nugget and range, plus the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub partial_sill: f64,
    pub nugget: f64,
    pub range: f64,
    pub model: CovModel,
}

impl Theta {
    pub fn new(partial_sill: f64, nugget: f64, range: f64, model: CovModel) -> Result<Self> {
        let theta = Theta {
            partial_sill,
            nugget,
            range,
            model,
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.partial_sill.is_finite()
            && self.nugget.is_finite()
            && self.range.is_finite()
            && self.partial_sill >= 0.0
            && self.nugget >= 0.0
            && self.range > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SpinError::InvalidParameter(format!(
                "invalid covariance parameters {self:?}"
            )))
        }
    }

    /// Total variance at distance zero.
    pub fn sill(&self) -> f64 {
        self.partial_sill + self.nugget
    }

    /// Covariance at distance `d`, nugget included when `d == 0`.
    pub fn cov(&self, d: f64) -> f64 {
        match self.model {
            CovModel::Exponential => cov_exponential(d, self),
            CovModel::Spherical => cov_spherical(d, self),
        }
    }

    /// Spatially structured part only (no nugget).
    #[inline]
    pub fn spatial_cov(&self, d: f64) -> f64 {
        match self.model {
            CovModel::Exponential => self.partial_sill * (-d / self.range).exp(),
            CovModel::Spherical => {
                if d < self.range {
                    let h = d / self.range;
                    self.partial_sill * (1.0 - 1.5 * h + 0.5 * h * h * h)
                } else {
                    0.0
                }
            }
        }
    }

    /// Same parameters with both variance components multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Theta {
        Theta {
            partial_sill: self.partial_sill * k,
            nugget: self.nugget * k,
            ..*self
        }
    }
}

pub fn cov_exponential(d: f64, theta: &Theta) -> f64 {
    let nug = if d == 0.0 { theta.nugget } else { 0.0 };
    theta.partial_sill * (-d / theta.range).exp() + nug
}

pub fn cov_spherical(d: f64, theta: &Theta) -> f64 {
    let nug = if d == 0.0 { theta.nugget } else { 0.0 };
    let spatial = if d < theta.range {
        let h = d / theta.range;
        theta.partial_sill * (1.0 - 1.5 * h + 0.5 * h * h * h)
    } else {
        0.0
    };
    spatial + nug
}

/// Covariance matrix of observations at `points`. Built from the lower
/// triangle and mirrored, so the result is exactly symmetric.
pub fn build_cov_matrix(points: &[Point2D], theta: &Theta) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    let sill = theta.sill();
    for j in 0..n {
        m[(j, j)] = sill;
        for i in (j + 1)..n {
            let c = theta.spatial_cov(euclidean_distance(&points[i], &points[j]));
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    m
}

/// Covariance between two different sets of random variables.
pub fn build_cross_cov(rows: &[Point2D], cols: &[Point2D], theta: &Theta) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        theta.spatial_cov(euclidean_distance(&rows[i], &cols[j]))
    })
}

/// Covariance vector between one site and a set of observations.
pub fn build_cov_vector(site: &Point2D, points: &[Point2D], theta: &Theta) -> DVector<f64> {
    DVector::from_iterator(
        points.len(),
        points
            .iter()
            .map(|p| theta.spatial_cov(euclidean_distance(site, p))),
    )
}

/// Cholesky factor `m = L L'` with its log-determinant.
#[derive(Debug, Clone)]
pub struct CholFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    jitter: f64,
}

impl CholFactor {
    /// Factorizes `m`. On failure one retry is made with
    /// `1e-10 * trace / n` added to the diagonal.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(SpinError::DimensionMismatch(format!(
                "cholesky of non-square {}x{} matrix",
                n,
                m.ncols()
            )));
        }
        if n == 0 {
            return Err(SpinError::EmptyInput("cholesky of empty matrix"));
        }
        let retry = m.clone();
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Self::finish(chol, 0.0));
        }
        let mut retry = retry;
        let jitter = 1e-10 * retry.trace() / n as f64;
        for k in 0..n {
            retry[(k, k)] += jitter;
        }
        match Cholesky::new(retry) {
            Some(chol) => {
                log::debug!("cholesky of {n}x{n} needed jitter {jitter:e}");
                Ok(Self::finish(chol, jitter))
            }
            None => Err(SpinError::NotPositiveDefinite { size: n }),
        }
    }

    fn finish(chol: Cholesky<f64, Dyn>, jitter: f64) -> Self {
        let l = chol.l_dirty();
        let log_det = 2.0 * (0..l.nrows()).map(|k| l[(k, k)].ln()).sum::<f64>();
        CholFactor {
            chol,
            log_det,
            jitter,
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Diagonal jitter that was needed, zero if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.dim() {
            return Err(SpinError::DimensionMismatch(format!(
                "factor is {0}x{0}, right-hand side has {1} rows",
                self.dim(),
                rows
            )));
        }
        Ok(())
    }

    /// `m^{-1} rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(rhs.nrows())?;
        Ok(self.chol.solve(rhs))
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_rows(rhs.nrows())?;
        Ok(self.chol.solve(rhs))
    }

    /// `L^{-1} rhs`.
    pub fn whiten(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(rhs.nrows())?;
        let mut out = rhs.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        Ok(out)
    }

    pub fn whiten_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_rows(rhs.nrows())?;
        let mut out = rhs.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        Ok(out)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Inverse of a small symmetric positive definite matrix, symmetrized.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = Cholesky::new(m.clone())?;
    let inv = chol.inverse();
    Some((&inv + inv.transpose()) * 0.5)
}
