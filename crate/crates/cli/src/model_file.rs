//! JSON model files written by `fit` and read by the prediction commands.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use spin_core::estimate::{restore_fitted_model, PartitionSpec};
use spin_core::{FittedModel, PartitionAssignment, SpatialDataset, Theta, VarianceMethod};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to predict from a fit, given the original data file.
///
/// Floats are written in their shortest round-trip form, so reading a file
/// and writing it again reproduces it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub tool_version: String,
    pub theta: Theta,
    pub response: String,
    /// Covariate columns; the intercept is implicit.
    pub covariates: Vec<String>,
    pub coef_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Row-major.
    pub cov_beta: Vec<Vec<f64>>,
    pub variance_method: VarianceMethod,
    pub cope: PartitionSpec,
    pub fefe: PartitionSpec,
    pub standardize_coords: bool,
    pub seed: u64,
    pub n: usize,
    /// Fixed-effects group of every observation, in data-file order.
    pub fe_labels: Vec<usize>,
    pub reml_value: Option<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Fit settings recorded alongside the estimates.
pub struct FitSettings<'a> {
    pub response: &'a str,
    pub covariates: &'a [String],
    pub cope: PartitionSpec,
    pub fefe: PartitionSpec,
    pub standardize_coords: bool,
    pub seed: u64,
}

impl ModelFile {
    pub fn from_fit(fit: &FittedModel, data: &SpatialDataset, settings: &FitSettings<'_>) -> Self {
        let r = fit.cov_beta.nrows();
        ModelFile {
            tool_version: TOOL_VERSION.to_string(),
            theta: fit.theta_hat,
            response: settings.response.to_string(),
            covariates: settings.covariates.to_vec(),
            coef_names: data.coef_names.clone(),
            beta: fit.beta_hat.iter().copied().collect(),
            cov_beta: (0..r)
                .map(|i| fit.cov_beta.row(i).iter().copied().collect())
                .collect(),
            variance_method: fit.variance_method,
            cope: settings.cope,
            fefe: settings.fefe,
            standardize_coords: settings.standardize_coords,
            seed: settings.seed,
            n: data.n(),
            fe_labels: fit.partition.labels().to_vec(),
            reml_value: Some(fit.reml_value).filter(|v| v.is_finite()),
            converged: fit.converged,
            warnings: fit.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, source: &str) -> CliResult<Self> {
        let m: ModelFile = serde_json::from_str(text)
            .map_err(|e| CliError::Data(format!("{source}: invalid model file: {e}")))?;
        m.check()
            .map_err(|e| CliError::Data(format!("{source}: {e}")))?;
        Ok(m)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    fn check(&self) -> Result<(), String> {
        let r = self.coef_names.len();
        if self.covariates.len() + 1 != r {
            return Err(format!(
                "{} covariates for {r} coefficients",
                self.covariates.len()
            ));
        }
        if self.beta.len() != r
            || self.cov_beta.len() != r
            || self.cov_beta.iter().any(|row| row.len() != r)
        {
            return Err(format!("beta or cov_beta does not match {r} coefficients"));
        }
        if self.fe_labels.len() != self.n {
            return Err(format!(
                "{} partition labels for {} observations",
                self.fe_labels.len(),
                self.n
            ));
        }
        self.theta.validate().map_err(|e| e.to_string())
    }

    pub fn cov_beta_matrix(&self) -> DMatrix<f64> {
        let r = self.beta.len();
        DMatrix::from_fn(r, r, |i, j| self.cov_beta[i][j])
    }

    /// Reads the model's columns from an observation table.
    pub fn dataset(&self, table: &crate::table::Table) -> CliResult<SpatialDataset> {
        table.dataset(&self.response, &self.covariates)
    }

    /// Rebuilds the fitted model on `data`, which must be the data it was
    /// fitted to.
    pub fn restore(&self, data: &SpatialDataset) -> CliResult<FittedModel> {
        if data.n() != self.n {
            return Err(CliError::Data(format!(
                "model was fitted to {} observations, data has {}",
                self.n,
                data.n()
            )));
        }
        let part = PartitionAssignment::from_labels(self.fe_labels.clone())
            .map_err(|e| CliError::Data(format!("model partition: {e}")))?;
        let mut fit = restore_fitted_model(
            data,
            self.theta,
            part,
            self.cov_beta_matrix(),
            self.variance_method,
        )?;
        let stored = DVector::from_column_slice(&self.beta);
        let scale = 1.0 + stored.amax();
        let gap = (&fit.beta_hat - &stored).amax();
        if gap > 1e-8 * scale {
            return Err(CliError::Data(format!(
                "data does not match the model: recomputed coefficients differ by {gap:.3e}"
            )));
        }
        fit.beta_hat = stored;
        fit.reml_value = self.reml_value.unwrap_or(f64::NAN);
        fit.converged = self.converged;
        Ok(fit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use spin_core::estimate::{fit_spin, SpinOptions};
    use spin_core::simulate::{simulate, SimConfig};
    use spin_core::CovModel;

    fn fitted() -> (ModelFile, SpatialDataset) {
        let theta = Theta::new(2.0, 0.2, 0.3, CovModel::Exponential).unwrap();
        let sim = simulate(&SimConfig {
            grid_side: 0,
            ..SimConfig::geostat(90, theta, 17)
        })
        .unwrap();
        let data = sim.observed().unwrap();
        let opts = SpinOptions {
            cope: PartitionSpec::compact(30),
            fefe: PartitionSpec::compact(30),
            ..Default::default()
        };
        let fit = fit_spin(&data, &opts).unwrap();
        let covariates = vec!["x1".to_string(), "x2".to_string()];
        let settings = FitSettings {
            response: "response",
            covariates: &covariates,
            cope: opts.cope,
            fefe: opts.fefe,
            standardize_coords: false,
            seed: 0,
        };
        (ModelFile::from_fit(&fit, &data, &settings), data)
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let (model, _) = fitted();
        let text = model.to_json();
        let back = ModelFile::from_json(&text, "m").unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn restore_reproduces_the_fit() {
        let (model, data) = fitted();
        let fit = model.restore(&data).unwrap();
        assert_eq!(fit.beta_hat.as_slice(), model.beta.as_slice());
        assert_eq!(fit.cov_beta, model.cov_beta_matrix());
        assert_eq!(fit.partition.labels(), model.fe_labels.as_slice());
    }

    #[test]
    fn inconsistent_files_are_rejected() {
        let (mut model, data) = fitted();
        model.fe_labels.pop();
        assert!(ModelFile::from_json(&model.to_json(), "m").is_err());
        let (mut model, _) = fitted();
        model.beta[0] += 1.0;
        assert_eq!(model.restore(&data).unwrap_err().exit_code(), 3);
    }
}
