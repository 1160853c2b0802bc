use std::path::PathBuf;

use clap::Args;
use spin_core::predict::{
    block_predict, predict, BetaMode, BlockOptions, BlockRegionGrid, PredictionTask,
    DEFAULT_NEIGHBORS, DEFAULT_SUBSAMPLE_CAP,
};
use spin_core::{NeighborIndex, SpatialDataset};

use crate::error::{CliError, CliResult};
use crate::model_file::ModelFile;
use crate::table::{output, write_csv, Table};

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// The observation CSV the model was fitted to.
    #[arg(long)]
    pub data: PathBuf,
}

impl ModelArgs {
    fn load(&self) -> CliResult<(ModelFile, SpatialDataset)> {
        let model = ModelFile::read(&self.model)?;
        let data = model.dataset(&Table::read(&self.data)?)?;
        Ok((model, data))
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sites CSV with x, y and the model's covariate columns.
    #[arg(long)]
    pub sites: PathBuf,
    /// Nearest observations used per site.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
    /// global: pooled coefficients; local: re-estimated on each neighbourhood.
    #[arg(long, default_value = "global")]
    pub beta_mode: BetaMode,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn check_neighbors(m: usize, n: usize) -> CliResult<()> {
    if m == 0 || m > n {
        return Err(CliError::Usage(format!(
            "--neighbors must be between 1 and {n}, got {m}"
        )));
    }
    Ok(())
}

pub fn run_predict(args: &PredictArgs) -> CliResult<()> {
    let (model, data) = args.model.load()?;
    check_neighbors(args.neighbors, data.n())?;
    let (sites, x_pred) = Table::read(&args.sites)?.sites(&model.covariates)?;
    let fit = model.restore(&data)?;
    let index = NeighborIndex::build(&data.points)?;
    let task = PredictionTask {
        sites,
        x_pred,
        m: args.neighbors,
    };
    let result = predict(&fit, &data, &index, &task, args.beta_mode)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    let rows: Vec<Vec<f64>> = task
        .sites
        .iter()
        .zip(result.values.iter().zip(&result.variances))
        .map(|(p, (&v, &var))| vec![p.s1, p.s2, v, var])
        .collect();
    write_csv(
        output(args.out.as_deref())?,
        &["x", "y", "prediction", "variance"],
        &rows,
    )
}

#[derive(Debug, Args)]
pub struct BlockPredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Equally weighted points discretizing the region, with x, y and the
    /// model's covariate columns.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
    /// Observation count above which the variance uses a random subsample
    /// of observation pairs.
    #[arg(long, default_value_t = DEFAULT_SUBSAMPLE_CAP)]
    pub subsample_cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_block(args: &BlockPredictArgs) -> CliResult<()> {
    let (model, data) = args.model.load()?;
    check_neighbors(args.neighbors, data.n())?;
    let table = Table::read(&args.grid)?;
    if table.nrows() == 0 {
        return Err(CliError::Data(format!(
            "{}: block grid has no points",
            args.grid.display()
        )));
    }
    let (points, x_grid) = table.sites(&model.covariates)?;
    let grid = BlockRegionGrid::uniform(points)?;
    let fit = model.restore(&data)?;
    let index = NeighborIndex::build(&data.points)?;
    let opts = BlockOptions {
        m: args.neighbors,
        subsample_cap: Some(args.subsample_cap),
        seed: args.seed,
    };
    let block = block_predict(&fit, &data, &index, &grid, &x_grid, &opts)?;
    for w in &block.warnings {
        log::warn!("{w}");
    }
    let row = vec![
        block.value,
        block.variance,
        grid.len() as f64,
        f64::from(u8::from(block.subsampled)),
        block.unbiasedness_gap.amax(),
    ];
    write_csv(
        output(args.out.as_deref())?,
        &[
            "estimate",
            "variance",
            "grid_points",
            "subsampled",
            "max_abs_gap",
        ],
        &[row],
    )
}
