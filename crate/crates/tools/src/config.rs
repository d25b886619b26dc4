//! Estimator settings as read from a JSON config file. Every field is
//! optional; command-line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use srosync::likelihood::BilinearForm;
use srosync::pairwise::GridConfig;
use srosync::{EstimatorConfig, JointConfig, StftConfig, PPM};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormName {
    Conjugated,
    AsPrinted,
}

impl From<FormName> for BilinearForm {
    fn from(f: FormName) -> Self {
        match f {
            FormName::Conjugated => BilinearForm::Conjugated,
            FormName::AsPrinted => BilinearForm::AsPrinted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub window_length: usize,
    pub shift: usize,
    pub dft_size: usize,
    pub window: WindowKind,
    pub grid_range_ppm: f64,
    pub grid_points: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub tolerance_ppm: f64,
    pub loading: f64,
    pub gss_tol_ppm: f64,
    pub form: FormName,
}

impl Default for FileConfig {
    fn default() -> Self {
        let est = EstimatorConfig::default();
        Self {
            window_length: est.stft.window_length(),
            shift: est.stft.shift(),
            dft_size: est.stft.dft_size(),
            window: WindowKind::Hann,
            grid_range_ppm: est.grid.range_ppm,
            grid_points: est.grid.points,
            outer_iterations: est.joint.outer_iterations,
            inner_iterations: est.joint.inner_iterations,
            tolerance_ppm: est.joint.tolerance / PPM,
            loading: est.joint.loading,
            gss_tol_ppm: est.gss_tol_ppm,
            form: FormName::Conjugated,
        }
    }
}

impl FileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn stft(&self) -> Result<StftConfig, CliError> {
        Ok(match self.window {
            WindowKind::Hann => StftConfig::hann(self.window_length, self.shift, self.dft_size)?,
            WindowKind::Rectangular => {
                StftConfig::rectangular(self.window_length, self.shift, self.dft_size)?
            }
        })
    }

    pub fn estimator(&self) -> Result<EstimatorConfig, CliError> {
        if !(self.tolerance_ppm >= 0.0 && self.gss_tol_ppm > 0.0 && self.loading > 0.0) {
            return Err(CliError::Usage(
                "tolerances and loading must be positive".into(),
            ));
        }
        Ok(EstimatorConfig {
            stft: self.stft()?,
            grid: GridConfig {
                range_ppm: self.grid_range_ppm,
                points: self.grid_points,
            },
            gss_tol_ppm: self.gss_tol_ppm,
            joint: JointConfig {
                outer_iterations: self.outer_iterations,
                inner_iterations: self.inner_iterations,
                tolerance: self.tolerance_ppm * PPM,
                loading: self.loading,
            },
            form: self.form.into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library() {
        assert_eq!(
            FileConfig::default().estimator().unwrap(),
            EstimatorConfig::default()
        );
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c: FileConfig =
            serde_json::from_str(r#"{"grid_points": 51, "form": "as-printed"}"#).unwrap();
        assert_eq!(c.grid_points, 51);
        assert_eq!(c.form, FormName::AsPrinted);
        assert_eq!(c.window_length, FileConfig::default().window_length);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let e = serde_json::from_str::<FileConfig>(r#"{"grid_pts": 51}"#).unwrap_err();
        assert!(e.to_string().contains("grid_pts"));
    }
}
