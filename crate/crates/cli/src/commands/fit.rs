use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use spin_core::estimate::{fit_spin, PartitionSpec, SpinOptions};
use spin_core::partition::PartitionScheme;
use spin_core::{CovModel, FittedModel, SpatialDataset, VarianceMethod};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CliError, CliResult};
use crate::model_file::{FitSettings, ModelFile};
use crate::table::Table;

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Observation CSV with columns x, y, the response and covariates.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "response")]
    pub response: String,
    /// Comma-separated covariate columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
}

impl DataArgs {
    pub fn load(&self) -> CliResult<(SpatialDataset, Vec<String>)> {
        let table = Table::read(&self.data)?;
        let covariates = match &self.covariates {
            Some(c) => c.clone(),
            None => table.other_columns(&self.response),
        };
        Ok((table.dataset(&self.response, &covariates)?, covariates))
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "exponential")]
    pub model: CovModel,
    /// Partitioning scheme for covariance estimation.
    #[arg(long, default_value = "compact")]
    pub partition: PartitionScheme,
    /// Target group size for covariance estimation.
    #[arg(long, default_value_t = 50)]
    pub part_size: usize,
    /// Partitioning scheme for fixed effects; defaults to --partition.
    #[arg(long)]
    pub fe_partition: Option<PartitionScheme>,
    /// Target group size for fixed-effect estimation.
    #[arg(long, default_value_t = 50)]
    pub fe_part_size: usize,
    #[arg(long, default_value = "exact")]
    pub var_method: VarianceMethod,
    /// Partition on standardized coordinates (for data not on a unit scale).
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    if args.part_size == 0 || args.fe_part_size == 0 {
        return Err(CliError::Usage("partition sizes must be positive".into()));
    }
    let (data, covariates) = args.data.load()?;
    let n = data.n();
    let cope = PartitionSpec {
        scheme: args.partition,
        size: args.part_size.min(n),
    };
    let fefe = PartitionSpec {
        scheme: args.fe_partition.unwrap_or(args.partition),
        size: args.fe_part_size.min(n),
    };
    let opts = SpinOptions {
        model: args.model,
        cope,
        fefe,
        variance_method: args.var_method,
        seed: args.seed,
        standardize_coords: args.standardize,
        ..Default::default()
    };
    let fit = fit_spin(&data, &opts)?;
    for w in &fit.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "covariance {:.3}s, fixed effects {:.3}s",
        fit.timings.covariance.as_secs_f64(),
        fit.timings.fixed_effects.as_secs_f64()
    );
    let settings = FitSettings {
        response: &args.data.response,
        covariates: &covariates,
        cope,
        fefe,
        standardize_coords: args.standardize,
        seed: args.seed,
    };
    ModelFile::from_fit(&fit, &data, &settings).write(&args.out)?;
    let mut stdout = std::io::stdout().lock();
    write_summary(&mut stdout, &fit, &data)
        .map_err(|e| CliError::Data(format!("writing summary: {e}")))
}

/// Two-sided normal p-value of `z`.
pub fn p_value(z: f64) -> f64 {
    let normal = Normal::standard();
    2.0 * normal.sf(z.abs())
}

fn write_summary(
    out: &mut impl Write,
    fit: &FittedModel,
    data: &SpatialDataset,
) -> std::io::Result<()> {
    let t = &fit.theta_hat;
    writeln!(
        out,
        "Covariance ({}): partial sill {:.6}, nugget {:.6}, range {:.6}",
        t.model, t.partial_sill, t.nugget, t.range
    )?;
    writeln!(
        out,
        "Groups: {} for covariance, {} for fixed effects; variance {}",
        fit.cope_partition.num_groups(),
        fit.partition.num_groups(),
        fit.variance_method
    )?;
    writeln!(out)?;
    let width = data
        .coef_names
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max(11);
    writeln!(
        out,
        "{:<width$} {:>12} {:>12} {:>9} {:>10}",
        "Coefficient", "Estimate", "Std.Error", "z", "p"
    )?;
    let fmt_p = |p: f64| {
        if p >= 1e-4 {
            format!("{p:.4}")
        } else {
            format!("{p:.2e}")
        }
    };
    let se = fit.std_errors();
    for (k, name) in data.coef_names.iter().enumerate() {
        let z = fit.beta_hat[k] / se[k];
        writeln!(
            out,
            "{:<width$} {:>12.6} {:>12.6} {:>9.3} {:>10}",
            name,
            fit.beta_hat[k],
            se[k],
            z,
            fmt_p(p_value(z))
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_values_are_two_sided() {
        let p = p_value(1.959963984540054);
        assert!((p - 0.05).abs() < 1e-9, "{p}");
        assert_eq!(p_value(-1.5), p_value(1.5));
        assert!(p_value(30.0) > 0.0 && p_value(30.0) < 1e-190);
    }
}
