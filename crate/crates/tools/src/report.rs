//! JSON documents written and read by the CLI.

use serde::{Deserialize, Serialize};

use crate::config::FileConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub channel: usize,
    pub grid_ppm: f64,
    pub ppm: f64,
    pub iterations: usize,
}

/// Output of `srosync estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub schema_version: u32,
    pub method: String,
    pub inputs: Vec<String>,
    pub sample_rate: f64,
    /// Samples per channel after truncating to the shortest input.
    pub num_samples: usize,
    /// Estimated offset per channel; entry 0 is the reference.
    pub sro_ppm: Vec<f64>,
    pub init_ppm: Vec<f64>,
    /// Profile log-likelihood, `iterations + 1` entries.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
    pub config: FileConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_ppm: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_ppm: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairReport>,
}

/// Ground truth written by `srosync simulate`. Scenario files are accepted
/// wherever a truth file is expected since they carry `true_sros`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    #[serde(alias = "true_sros")]
    pub true_sros_ppm: Vec<f64>,
    #[serde(default)]
    pub sample_rate: Option<f64>,
    #[serde(default)]
    pub num_samples: Option<usize>,
}
