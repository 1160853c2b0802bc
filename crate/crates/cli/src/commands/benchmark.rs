use std::path::PathBuf;

use clap::Args;
use spin_core::evaluate::{run_experiment, ExperimentSpec};

use crate::error::{CliError, CliResult};
use crate::table::output;

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Experiment description (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Results CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn load_spec(path: &std::path::Path) -> CliResult<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: invalid experiment spec: {e}", path.display())))?;
    spec.validate()
        .map_err(|e| CliError::Data(format!("{}: invalid experiment spec: {e}", path.display())))?;
    Ok(spec)
}

pub fn run(args: &BenchmarkArgs) -> CliResult<()> {
    let spec = load_spec(&args.spec)?;
    let result = run_experiment(&spec)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    for row in &result.rows {
        if row.failed > 0 {
            log::warn!(
                "{}: {} of {} replicates failed",
                row.method,
                row.failed,
                spec.replicates
            );
        }
        w.serialize(row)
            .map_err(|e| CliError::Data(format!("writing results: {e}")))?;
    }
    w.flush()
        .map_err(|e| CliError::Data(format!("writing results: {e}")))
}
