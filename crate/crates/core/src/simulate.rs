//! Synthetic spatial data: exact Gaussian fields (GEOSTAT), sums of random
//! sine surfaces (SUMSINE), and the three-coefficient response built on them.
//!
//! Randomness is split into independent ChaCha streams of one seed:
//! stream 0 for locations, 1 for the error field, 2 for the `x2` field and
//! 3 for `x1`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::{build_cov_matrix, CholFactor, CovModel, Theta};
use crate::error::{Result, SpinError};
use crate::estimate::SpatialDataset;
use crate::geometry::Point2D;

pub const DEFAULT_GEOSTAT_CAP: usize = 3000;
pub const DEFAULT_GRID_SIDE: usize = 40;
pub const SUMSINE_TERMS: usize = 100;
pub const SUMSINE_VARIANCE: f64 = 10.0;
pub const SUMSINE_NOISE: f64 = 0.1;

pub const STREAM_LOCATIONS: u64 = 0;
pub const STREAM_EPSILON: u64 = 1;
pub const STREAM_X2: u64 = 2;
pub const STREAM_X1: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMethod {
    Geostat,
    Sumsine,
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMethod::Geostat => "geostat",
            SimMethod::Sumsine => "sumsine",
        })
    }
}

impl FromStr for SimMethod {
    type Err = SpinError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geostat" => Ok(SimMethod::Geostat),
            "sumsine" => Ok(SimMethod::Sumsine),
            other => Err(SpinError::InvalidParameter(format!(
                "unknown simulation method `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub method: SimMethod,
    /// Observed locations, uniform on the unit square.
    pub n: usize,
    /// Prediction grid of `grid_side^2` cell centres; 0 for none.
    pub grid_side: usize,
    /// Generating covariance for GEOSTAT; ignored by SUMSINE.
    pub theta: Option<Theta>,
    pub seed: u64,
    /// Largest total point count GEOSTAT will factorize.
    pub geostat_cap: usize,
}

impl SimConfig {
    pub fn geostat(n: usize, theta: Theta, seed: u64) -> Self {
        SimConfig {
            method: SimMethod::Geostat,
            n,
            grid_side: DEFAULT_GRID_SIDE,
            theta: Some(theta),
            seed,
            geostat_cap: DEFAULT_GEOSTAT_CAP,
        }
    }

    pub fn sumsine(n: usize, seed: u64) -> Self {
        SimConfig {
            method: SimMethod::Sumsine,
            n,
            grid_side: DEFAULT_GRID_SIDE,
            theta: None,
            seed,
            geostat_cap: DEFAULT_GEOSTAT_CAP,
        }
    }
}

/// One simulated data set: observed points first, then the grid.
#[derive(Debug, Clone)]
pub struct SimRealization {
    pub points: Vec<Point2D>,
    pub n_obs: usize,
    pub epsilon: DVector<f64>,
    pub y: DVector<f64>,
    /// Columns: intercept, `x1`, `x2`.
    pub x: DMatrix<f64>,
    pub beta_true: DVector<f64>,
    pub theta: Option<Theta>,
    pub method: SimMethod,
    pub seed: u64,
}

pub const COEF_NAMES: [&str; 3] = ["(Intercept)", "x1", "x2"];

impl SimRealization {
    pub fn observed(&self) -> Result<SpatialDataset> {
        let ids: Vec<usize> = (0..self.n_obs).collect();
        SpatialDataset::new(
            self.points[..self.n_obs].to_vec(),
            self.y.rows(0, self.n_obs).into_owned(),
            self.x.select_rows(&ids),
            COEF_NAMES.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn grid_points(&self) -> &[Point2D] {
        &self.points[self.n_obs..]
    }

    pub fn grid_x(&self) -> DMatrix<f64> {
        let ids: Vec<usize> = (self.n_obs..self.points.len()).collect();
        self.x.select_rows(&ids)
    }

    pub fn grid_y(&self) -> DVector<f64> {
        self.y
            .rows(self.n_obs, self.points.len() - self.n_obs)
            .into_owned()
    }
}

/// Cell centres `((c + 0.5)/side, (r + 0.5)/side)` in row-major order.
pub fn unit_grid(side: usize) -> Vec<Point2D> {
    (0..side * side)
        .map(|k| {
            let (r, c) = (k / side, k % side);
            Point2D::new(
                (c as f64 + 0.5) / side as f64,
                (r as f64 + 0.5) / side as f64,
            )
        })
        .collect()
}

pub fn uniform_points(n: usize, rng: &mut impl Rng) -> Vec<Point2D> {
    (0..n)
        .map(|_| Point2D::new(rng.random(), rng.random()))
        .collect()
}

/// Draws `L z` from a covariance factor computed once.
#[derive(Debug, Clone)]
pub struct GeostatSimulator {
    factor: CholFactor,
}

impl GeostatSimulator {
    pub fn new(points: &[Point2D], theta: &Theta, cap: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(SpinError::EmptyInput("no points to simulate at"));
        }
        if points.len() > cap {
            return Err(SpinError::InsufficientData {
                requested: points.len(),
                available: cap,
            });
        }
        theta.validate()?;
        Ok(GeostatSimulator {
            factor: CholFactor::new(build_cov_matrix(points, theta))?,
        })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> DVector<f64> {
        let n = self.factor.dim();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        self.factor.l() * z
    }
}

/// Gaussian field `L z` with `L L' = Sigma(theta)` over `points`.
pub fn simulate_geostat(points: &[Point2D], theta: &Theta, seed: u64) -> Result<DVector<f64>> {
    let sim = GeostatSimulator::new(points, theta, DEFAULT_GEOSTAT_CAP)?;
    Ok(sim.draw(&mut ChaCha8Rng::seed_from_u64(seed)))
}

fn sumsine_draw(points: &[Point2D], rng: &mut impl Rng) -> DVector<f64> {
    let n = points.len();
    let mut field: DVector<f64> = DVector::zeros(n);
    for i in 1..=SUMSINE_TERMS {
        let u: [f64; 6] = std::array::from_fn(|_| rng.random());
        let (sin_r, cos_r) = (u[0] * PI).sin_cos();
        let amplitude = u[1] * (1.0 - (i - 1) as f64 / SUMSINE_TERMS as f64);
        let f1 = i as f64 * u[2] * 2.0 * PI;
        let f2 = i as f64 * u[4] * 2.0 * PI;
        let (shift1, shift2) = (u[3] * PI, u[5] * PI);
        for (k, p) in points.iter().enumerate() {
            // row vector [s1 s2] times the rotation matrix
            let r1 = p.s1 * cos_r + p.s2 * sin_r;
            let r2 = -p.s1 * sin_r + p.s2 * cos_r;
            field[k] += amplitude * ((f1 * (r1 + shift1)).sin() + (f2 * (r2 + shift2)).sin());
        }
    }
    if n > 1 {
        let mean: f64 = field.mean();
        field.add_scalar_mut(-mean);
        let var = field.norm_squared() / (n - 1) as f64;
        if var > 0.0 {
            field *= (SUMSINE_VARIANCE / var).sqrt();
        }
    }
    let noise = Normal::new(0.0, SUMSINE_NOISE.sqrt()).expect("valid noise sd");
    for v in field.iter_mut() {
        *v += noise.sample(rng);
    }
    field
}

/// Sum of 100 randomly rotated, scaled and shifted sine surfaces,
/// standardized to sample mean 0 and sample variance 10, plus N(0, 0.1) noise.
pub fn simulate_sumsine(points: &[Point2D], seed: u64) -> DVector<f64> {
    sumsine_draw(points, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `y = 1 + x1 + x2 + epsilon` with design columns `(1, x1, x2)`.
pub fn make_response(
    epsilon: &DVector<f64>,
    x1: &DVector<f64>,
    x2: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = epsilon.len();
    if x1.len() != n || x2.len() != n {
        return Err(SpinError::DimensionMismatch(format!(
            "epsilon {n}, x1 {}, x2 {}",
            x1.len(),
            x2.len()
        )));
    }
    let mut x = DMatrix::from_element(n, 3, 1.0);
    x.set_column(1, x1);
    x.set_column(2, x2);
    let y = DVector::from_fn(n, |i, _| 1.0 + x1[i] + x2[i] + epsilon[i]);
    Ok((y, x))
}

pub fn simulate(config: &SimConfig) -> Result<SimRealization> {
    if config.n == 0 {
        return Err(SpinError::InvalidParameter("n must be positive".into()));
    }
    let mut points = uniform_points(config.n, &mut stream_rng(config.seed, STREAM_LOCATIONS));
    points.extend(unit_grid(config.grid_side));
    let (epsilon, x2) = match config.method {
        SimMethod::Geostat => {
            let theta = config.theta.ok_or_else(|| {
                SpinError::InvalidParameter("GEOSTAT needs covariance parameters".into())
            })?;
            let sim = GeostatSimulator::new(&points, &theta, config.geostat_cap)?;
            (
                sim.draw(&mut stream_rng(config.seed, STREAM_EPSILON)),
                sim.draw(&mut stream_rng(config.seed, STREAM_X2)),
            )
        }
        SimMethod::Sumsine => (
            sumsine_draw(&points, &mut stream_rng(config.seed, STREAM_EPSILON)),
            sumsine_draw(&points, &mut stream_rng(config.seed, STREAM_X2)),
        ),
    };
    let mut x1_rng = stream_rng(config.seed, STREAM_X1);
    let x1 = DVector::from_fn(points.len(), |_, _| x1_rng.sample::<f64, _>(StandardNormal));
    let (y, x) = make_response(&epsilon, &x1, &x2)?;
    Ok(SimRealization {
        points,
        n_obs: config.n,
        epsilon,
        y,
        x,
        beta_true: DVector::from_element(3, 1.0),
        theta: if config.method == SimMethod::Geostat {
            config.theta
        } else {
            None
        },
        method: config.method,
        seed: config.seed,
    })
}

/// The generating covariance used throughout the benchmarks, with the range
/// drawn from U(0, 2).
pub fn random_range_theta(rng: &mut impl Rng) -> Theta {
    let range: f64 = rng.random_range(0.0..2.0);
    Theta {
        partial_sill: 10.0,
        nugget: 0.1,
        range: range.max(1e-9),
        model: CovModel::Spherical,
    }
}
