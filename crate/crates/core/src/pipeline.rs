//! Method selection: grid initialization followed by one of the refinements.

use core::fmt;
use core::str::FromStr;

use crate::likelihood::{profile_log_likelihood, BilinearForm, SroVector};
use crate::optimizer::{estimate_joint, JointConfig};
use crate::pairwise::{
    estimate_pairwise, grid_init, GridConfig, PairEstimate, PairMethod, PairwiseConfig,
};
use crate::prelude::*;
use crate::signal::{SpectrogramSet, StftConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// All offsets jointly with the MM optimizer.
    Joint,
    /// Per pair, golden-section search on the two-channel objective.
    PairGss,
    /// Per pair, the MM optimizer on the two channels.
    PairMm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Joint, Method::PairGss, Method::PairMm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Joint => "joint",
            Method::PairGss => "pair-gss",
            Method::PairMm => "pair-mm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (expected joint, pair-gss or pair-mm)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub stft: StftConfig,
    pub grid: GridConfig,
    pub gss_tol_ppm: f64,
    pub joint: JointConfig,
    pub form: BilinearForm,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let pair = PairwiseConfig::default();
        Self {
            stft: StftConfig::default(),
            grid: pair.grid,
            gss_tol_ppm: pair.gss_tol_ppm,
            joint: pair.joint,
            form: pair.form,
        }
    }
}

impl EstimatorConfig {
    pub fn pairwise(&self) -> PairwiseConfig {
        PairwiseConfig {
            grid: self.grid,
            gss_tol_ppm: self.gss_tol_ppm,
            joint: self.joint,
            form: self.form,
        }
    }
}

/// Result of [`estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SroEstimate {
    pub method: Method,
    /// Pairwise grid optimum used as the starting point.
    pub init: SroVector,
    pub sro: SroVector,
    /// Profile log-likelihood of all channels. For the joint method one entry
    /// per outer iteration plus the initial value; pairwise methods report
    /// the initial and final values.
    pub trace: Vec<f64>,
    /// Outer iterations for the joint method, 1 for pairwise methods.
    pub iterations: usize,
    pub converged: bool,
    /// Per-pair details (pairwise methods only).
    pub pairs: Vec<PairEstimate>,
}

/// Runs the grid initialization and the selected refinement.
pub fn estimate(
    set: &SpectrogramSet,
    method: Method,
    config: &EstimatorConfig,
) -> Result<SroEstimate> {
    if set.num_channels() < 2 {
        return Err(Error::InvalidInput("need at least two channels".into()));
    }
    match method {
        Method::Joint => {
            let init = grid_init(set, &config.grid, config.form)?;
            let est = estimate_joint(set, &init, &config.joint)?;
            Ok(SroEstimate {
                method,
                init,
                sro: est.sro,
                trace: est.trace,
                iterations: est.iterations,
                converged: est.converged,
                pairs: Vec::new(),
            })
        }
        Method::PairGss | Method::PairMm => {
            let pm = if method == Method::PairGss {
                PairMethod::Gss
            } else {
                PairMethod::Mm
            };
            let est = estimate_pairwise(set, pm, &config.pairwise())?;
            let mut init = vec![0.0];
            init.extend(est.pairs.iter().map(|p| p.grid_epsilon));
            let init = SroVector::new(init)?;
            let loading = config.joint.loading;
            let trace = vec![
                profile_log_likelihood(set, &init, loading)?,
                profile_log_likelihood(set, &est.sro, loading)?,
            ];
            Ok(SroEstimate {
                method,
                init,
                sro: est.sro,
                trace,
                iterations: 1,
                converged: true,
                pairs: est.pairs,
            })
        }
    }
}
