//! Pairwise baselines: every non-reference channel is synchronized to
//! channel 0 on its own, by grid search on the two-channel objective
//! followed by golden-section refinement or by the MM optimizer restricted
//! to the pair.

use crate::likelihood::{BilinearForm, PairwiseObjective, SroVector};
use crate::optimizer::{estimate_joint, JointConfig};
use crate::prelude::*;
use crate::signal::{Spectrogram, SpectrogramSet};
use crate::{Error, Result, PPM};

/// Inclusive uniform grid of candidate offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    /// Grid spans `[-range_ppm, range_ppm]`.
    pub range_ppm: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            range_ppm: 100.0,
            points: 100,
        }
    }
}

impl GridConfig {
    pub fn candidates(&self) -> Vec<f64> {
        let lo = -self.range_ppm * PPM;
        let step = self.step();
        (0..self.points).map(|i| lo + step * i as f64).collect()
    }

    /// Grid spacing as a dimensionless offset.
    pub fn step(&self) -> f64 {
        if self.points < 2 {
            0.0
        } else {
            2.0 * self.range_ppm * PPM / (self.points - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    /// Best candidate; the lowest index wins ties.
    pub epsilon: f64,
    pub best_index: usize,
    pub candidates: Vec<f64>,
    pub values: Vec<f64>,
}

/// Evaluates the two-channel objective on every grid point.
pub fn grid_search_init(
    reference: &Spectrogram,
    other: &Spectrogram,
    grid: &GridConfig,
    form: BilinearForm,
) -> Result<GridSearch> {
    if grid.points < 2 {
        return Err(Error::Config(format!(
            "grid needs at least 2 points, got {}",
            grid.points
        )));
    }
    if !(grid.range_ppm > 0.0 && grid.range_ppm * PPM < crate::signal::MAX_ABS_SRO) {
        return Err(Error::Config(format!(
            "grid range {} ppm is out of bounds",
            grid.range_ppm
        )));
    }
    let objective = PairwiseObjective::new(reference, other, form)?;
    let candidates = grid.candidates();
    let values: Vec<f64> = candidates
        .iter()
        .map(|&e| objective.evaluate(e).value)
        .collect();
    let best_index = argmax_first(&values);
    Ok(GridSearch {
        epsilon: candidates[best_index],
        best_index,
        candidates,
        values,
    })
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenResult {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration cap stopped the search before `tol` was met.
    pub converged: bool,
}

pub const GOLDEN_MAX_ITERATIONS: usize = 200;

/// Golden-section search for the maximum of `objective` on `[lo, hi]`.
pub fn golden_section<F>(mut objective: F, lo: f64, hi: f64, tol: f64) -> Result<GoldenResult>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bad bracket [{lo}, {hi}] or tolerance {tol}"
        )));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    let mut best = if fd > fc { (d, fd) } else { (c, fc) };
    let mut iterations = 0;
    while (b - a) > tol {
        if iterations == GOLDEN_MAX_ITERATIONS {
            return Ok(GoldenResult {
                x: best.0,
                value: best.1,
                iterations,
                converged: false,
            });
        }
        iterations += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    let mid = 0.5 * (a + b);
    let fm = objective(mid);
    if fm >= best.1 {
        best = (mid, fm);
    }
    Ok(GoldenResult {
        x: best.0,
        value: best.1,
        iterations,
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMethod {
    /// Golden-section search on the two-channel objective.
    Gss,
    /// The joint MM optimizer applied to the pair.
    Mm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseConfig {
    pub grid: GridConfig,
    /// Golden-section tolerance in ppm.
    pub gss_tol_ppm: f64,
    pub joint: JointConfig,
    pub form: BilinearForm,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            gss_tol_ppm: 1e-3,
            joint: JointConfig::default(),
            form: BilinearForm::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub channel: usize,
    pub grid_epsilon: f64,
    pub epsilon: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseEstimate {
    pub sro: SroVector,
    pub pairs: Vec<PairEstimate>,
}

fn annotate(channel: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("channel {channel}: {msg}")),
        Error::Config(msg) => Error::Config(format!("channel {channel}: {msg}")),
        Error::NonFinite { iteration, state } => Error::NonFinite {
            iteration,
            state: format!("channel {channel}: {state}"),
        },
        other => other,
    }
}

/// Refines one pair `(0, channel)` starting from its grid optimum.
pub fn estimate_pair(
    set: &SpectrogramSet,
    channel: usize,
    method: PairMethod,
    config: &PairwiseConfig,
) -> Result<PairEstimate> {
    let reference = set.channel(0);
    let other = set.channel(channel);
    let grid = grid_search_init(&reference, &other, &config.grid, config.form)?;
    let step = config.grid.step();
    let (epsilon, iterations) = match method {
        PairMethod::Gss => {
            let objective = PairwiseObjective::new(&reference, &other, config.form)?;
            let found = golden_section(
                |e| objective.evaluate(e).value,
                grid.epsilon - step,
                grid.epsilon + step,
                config.gss_tol_ppm * PPM,
            )?;
            (found.x, found.iterations)
        }
        PairMethod::Mm => {
            let pair = set.select(&[0, channel])?;
            let init = SroVector::new(vec![0.0, grid.epsilon])?;
            let est = estimate_joint(&pair, &init, &config.joint)?;
            (est.sro.get(1), est.iterations)
        }
    };
    Ok(PairEstimate {
        channel,
        grid_epsilon: grid.epsilon,
        epsilon,
        iterations,
    })
}

/// Estimates every `ε_m` from channels `(0, m)` only.
pub fn estimate_pairwise(
    set: &SpectrogramSet,
    method: PairMethod,
    config: &PairwiseConfig,
) -> Result<PairwiseEstimate> {
    let m_ch = set.num_channels();
    if m_ch < 2 {
        return Err(Error::InvalidInput(
            "pairwise estimation needs at least two channels".into(),
        ));
    }
    let pairs = (1..m_ch)
        .map(|m| estimate_pair(set, m, method, config).map_err(annotate(m)))
        .collect::<Result<Vec<_>>>()?;
    let mut eps = vec![0.0];
    eps.extend(pairs.iter().map(|p| p.epsilon));
    Ok(PairwiseEstimate {
        sro: SroVector::new(eps)?,
        pairs,
    })
}

/// Grid optimum of every pair `(0, m)`, as an initial joint estimate.
pub fn grid_init(set: &SpectrogramSet, grid: &GridConfig, form: BilinearForm) -> Result<SroVector> {
    let reference = set.channel(0);
    let mut eps = vec![0.0];
    for m in 1..set.num_channels() {
        let g = grid_search_init(&reference, &set.channel(m), grid, form).map_err(annotate(m))?;
        eps.push(g.epsilon);
    }
    SroVector::new(eps)
}
