use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use spin_core::simulate::{
    simulate, SimConfig, SimMethod, SimRealization, COEF_NAMES, DEFAULT_GEOSTAT_CAP,
};
use spin_core::{CovModel, Theta};

use crate::error::{CliError, CliResult};
use crate::table::{output, write_csv};

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Generator: geostat (Gaussian field) or sumsine (sum of sines).
    #[arg(long, default_value = "geostat")]
    pub method: SimMethod,
    /// Number of observed locations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Partial sill of the generating covariance (geostat only).
    #[arg(long, default_value_t = 10.0)]
    pub tau2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub nugget: f64,
    #[arg(long, default_value_t = 0.5)]
    pub range: f64,
    /// Generating covariance model (geostat only).
    #[arg(long, default_value = "spherical")]
    pub model: CovModel,
    /// Prediction grid of side^2 cell centres; 0 writes an empty grid file.
    #[arg(long, default_value_t = 40)]
    pub grid_side: usize,
    /// Largest number of points (observations plus grid) geostat will factorize.
    #[arg(long, default_value_t = DEFAULT_GEOSTAT_CAP)]
    pub geostat_cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Truth<'a> {
    method: SimMethod,
    seed: u64,
    n: usize,
    grid_side: usize,
    theta: Option<Theta>,
    coef_names: &'a [&'a str],
    beta: Vec<f64>,
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let theta = match args.method {
        SimMethod::Geostat => Some(Theta::new(args.tau2, args.nugget, args.range, args.model)?),
        SimMethod::Sumsine => None,
    };
    let config = SimConfig {
        method: args.method,
        n: args.n as usize,
        grid_side: args.grid_side,
        theta,
        seed: args.seed,
        geostat_cap: args.geostat_cap,
    };
    let sim = simulate(&config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;

    let headers = ["x", "y", "response", "x1", "x2"];
    let obs_path = args.out.join(OBSERVATIONS_FILE);
    write_csv(
        output(Some(&obs_path))?,
        &headers,
        &rows(&sim, 0..sim.n_obs),
    )?;
    let grid_path = args.out.join(GRID_FILE);
    write_csv(
        output(Some(&grid_path))?,
        &headers,
        &rows(&sim, sim.n_obs..sim.points.len()),
    )?;

    let truth = Truth {
        method: sim.method,
        seed: sim.seed,
        n: sim.n_obs,
        grid_side: args.grid_side,
        theta: sim.theta,
        coef_names: &COEF_NAMES,
        beta: sim.beta_true.iter().copied().collect(),
    };
    let truth_path = args.out.join(TRUTH_FILE);
    let mut text = serde_json::to_string_pretty(&truth).expect("truth serializes");
    text.push('\n');
    std::fs::write(&truth_path, text).map_err(|e| CliError::io(&truth_path, e))?;
    log::info!(
        "wrote {} observations and {} grid points to {}",
        sim.n_obs,
        sim.points.len() - sim.n_obs,
        args.out.display()
    );
    Ok(())
}

fn rows(sim: &SimRealization, range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    range
        .map(|i| {
            let p = sim.points[i];
            vec![p.s1, p.s2, sim.y[i], sim.x[(i, 1)], sim.x[(i, 2)]]
        })
        .collect()
}
