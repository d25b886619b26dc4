//! Gaussian model of the synchronized multichannel STFT.
//!
//! Every compensated vector `x̂[t,f]` is modelled as `N_C(0, V[f])`. The
//! covariance update, the joint log-likelihood, the `Υ[t,f]` matrices that
//! feed the MM surrogate, and the two-channel objective used by the pairwise
//! baselines all live here.
//!
//! Covariances are inverted after diagonal loading `V + c·I` with
//! `c = δ·trace(V)/M` (see [`crate::linalg::LoadedCovariance`]).

use core::f64::consts::PI;

use crate::linalg::{CMatrix, LoadedCovariance};
use crate::prelude::*;
use crate::signal::{Spectrogram, SpectrogramSet, MAX_ABS_SRO};
use crate::{Complex, Error, Result, PPM};

/// Per-channel sampling-rate offsets; channel 0 is the reference and has
/// `ε_0 = 0` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SroVector(Vec<f64>);

impl SroVector {
    pub fn new(epsilons: Vec<f64>) -> Result<Self> {
        match epsilons.first() {
            None => return Err(Error::InvalidInput("SRO vector is empty".into())),
            Some(&e0) if e0 != 0.0 => {
                return Err(Error::InvalidInput(format!(
                    "reference SRO must be exactly 0, got {e0:e}"
                )))
            }
            _ => {}
        }
        if let Some((m, e)) = epsilons
            .iter()
            .enumerate()
            .find(|(_, e)| !e.is_finite() || e.abs() >= MAX_ABS_SRO)
        {
            return Err(Error::InvalidInput(format!(
                "SRO of channel {m} is out of range: {e:e}"
            )));
        }
        Ok(Self(epsilons))
    }

    pub fn zeros(channels: usize) -> Self {
        Self(vec![0.0; channels.max(1)])
    }

    pub fn from_ppm(ppm: &[f64]) -> Result<Self> {
        Self::new(ppm.iter().map(|p| p * PPM).collect())
    }

    pub fn to_ppm(&self) -> Vec<f64> {
        self.0.iter().map(|e| e / PPM).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, m: usize) -> f64 {
        self.0[m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `max_m |ε_m - other_m|`.
    pub fn max_abs_diff(&self, other: &SroVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One `M×M` spatial covariance matrix per retained frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSet {
    matrices: Vec<CMatrix>,
}

impl ScmSet {
    pub fn new(matrices: Vec<CMatrix>) -> Result<Self> {
        if let Some(first) = matrices.first() {
            if matrices.iter().any(|m| m.dim() != first.dim()) {
                return Err(Error::InvalidInput(
                    "covariances have differing sizes".into(),
                ));
            }
        }
        Ok(Self { matrices })
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn get(&self, bin: usize) -> &CMatrix {
        &self.matrices[bin]
    }

    pub fn num_bins(&self) -> usize {
        self.matrices.len()
    }

    pub fn num_channels(&self) -> usize {
        self.matrices.first().map_or(0, CMatrix::dim)
    }

    /// Loaded inverses and log-determinants of every bin.
    pub fn loaded(&self, loading: f64) -> Result<Vec<LoadedCovariance>> {
        self.matrices
            .iter()
            .enumerate()
            .map(|(f, v)| LoadedCovariance::new(v, f, loading))
            .collect()
    }
}

/// `Υ[t,f] = diag(x)ᴴ V⁻¹ diag(x)` for every time-frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonSet {
    channels: usize,
    frames: usize,
    bins: usize,
    data: Vec<Complex>,
}

impl UpsilonSet {
    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn get(&self, frame: usize, bin: usize, m: usize, n: usize) -> Complex {
        let c = self.channels;
        self.data[((frame * self.bins + bin) * c + m) * c + n]
    }

    /// The `M×M` matrix of one bin, row-major.
    pub fn matrix(&self, frame: usize, bin: usize) -> &[Complex] {
        let c2 = self.channels * self.channels;
        let start = (frame * self.bins + bin) * c2;
        &self.data[start..start + c2]
    }
}

fn check_channels(set: &SpectrogramSet, sro: &SroVector) -> Result<()> {
    if sro.len() != set.num_channels() {
        return Err(Error::InvalidInput(format!(
            "SRO vector has {} entries for {} channels",
            sro.len(),
            set.num_channels()
        )));
    }
    Ok(())
}

/// Sample covariance of already-compensated coefficients,
/// `V[f] = (1/T) Σ_t x̂ x̂ᴴ`.
pub(crate) fn sample_covariance(xhat: &SpectrogramSet) -> ScmSet {
    let (m_ch, frames, bins) = (xhat.num_channels(), xhat.num_frames(), xhat.num_bins());
    let channels: Vec<&[Complex]> = (0..m_ch).map(|m| xhat.channel_coeffs(m)).collect();
    let mut acc = vec![Complex::default(); bins * m_ch * m_ch];
    for t in 0..frames {
        let row = t * bins;
        for (f, block) in acc.chunks_exact_mut(m_ch * m_ch).enumerate() {
            for m in 0..m_ch {
                let xm = channels[m][row + f];
                for n in m..m_ch {
                    block[m * m_ch + n] += xm * channels[n][row + f].conj();
                }
            }
        }
    }
    let scale = 1.0 / frames as f64;
    let matrices = acc
        .chunks(m_ch * m_ch)
        .map(|block| {
            let mut v = CMatrix::zeros(m_ch);
            for m in 0..m_ch {
                v[(m, m)] = Complex::new(block[m * m_ch + m].re * scale, 0.0);
                for n in m + 1..m_ch {
                    let z = block[m * m_ch + n] * scale;
                    v[(m, n)] = z;
                    v[(n, m)] = z.conj();
                }
            }
            v
        })
        .collect();
    ScmSet { matrices }
}

/// Maximum-likelihood SCMs for fixed offsets.
pub fn update_scm(set: &SpectrogramSet, sro: &SroVector) -> Result<ScmSet> {
    check_channels(set, sro)?;
    Ok(sample_covariance(&set.compensated(sro)?))
}

/// Joint log-likelihood `Σ_f Σ_t [-log det V[f] - x̂ᴴ V⁻¹[f] x̂]` (additive
/// constant dropped). `V[f]` is diagonally loaded before factorization.
pub fn log_likelihood(set: &SpectrogramSet, sro: &SroVector, scms: &ScmSet) -> Result<f64> {
    let loaded = check_scms(set, sro, scms)?;
    let xhat = set.compensated(sro)?;
    let frames = set.num_frames() as f64;
    let quad = quadratic_sum(&xhat, &loaded);
    let logdet: f64 = loaded.iter().map(|l| l.log_det).sum();
    Ok(-frames * logdet - quad)
}

/// The SRO-dependent part of the log-likelihood, `J(ε) = -Σ x̂ᴴ V⁻¹ x̂`.
pub fn joint_objective(set: &SpectrogramSet, sro: &SroVector, scms: &ScmSet) -> Result<f64> {
    let loaded = check_scms(set, sro, scms)?;
    Ok(-quadratic_sum(&set.compensated(sro)?, &loaded))
}

/// Log-likelihood with the covariances profiled out: evaluated at the
/// loaded ML covariance `V = S(ε) + c·I`, where the data term collapses to
/// `M` per frame. The loading `c` is offset independent (compensation does
/// not change `trace S`), so both the covariance update and the MM step
/// of the joint estimator increase it.
pub fn profile_log_likelihood(set: &SpectrogramSet, sro: &SroVector, loading: f64) -> Result<f64> {
    let scms = update_scm(set, sro)?;
    Ok(profile_from_loaded(
        set.num_frames(),
        set.num_channels(),
        &scms.loaded(loading)?,
    ))
}

pub(crate) fn profile_from_loaded(
    frames: usize,
    channels: usize,
    loaded: &[LoadedCovariance],
) -> f64 {
    -(frames as f64)
        * loaded
            .iter()
            .map(|l| l.log_det + channels as f64)
            .sum::<f64>()
}

fn check_scms(
    set: &SpectrogramSet,
    sro: &SroVector,
    scms: &ScmSet,
) -> Result<Vec<LoadedCovariance>> {
    check_channels(set, sro)?;
    if scms.num_bins() != set.num_bins() || scms.num_channels() != set.num_channels() {
        return Err(Error::InvalidInput(format!(
            "{} covariances of size {} do not match {} bins x {} channels",
            scms.num_bins(),
            scms.num_channels(),
            set.num_bins(),
            set.num_channels()
        )));
    }
    scms.loaded(crate::linalg::DEFAULT_LOADING)
}

fn quadratic_sum(xhat: &SpectrogramSet, loaded: &[LoadedCovariance]) -> f64 {
    let m_ch = xhat.num_channels();
    let mut col = vec![Complex::default(); m_ch];
    let mut total = 0.0;
    for f in 0..xhat.num_bins() {
        let w = &loaded[f].inverse;
        for t in 0..xhat.num_frames() {
            for (m, c) in col.iter_mut().enumerate() {
                *c = xhat.get(m, t, f);
            }
            total += w.quadratic_form(&col).re;
        }
    }
    total
}

/// `Υ[t,f]` from the raw (uncompensated) coefficients.
pub fn compute_upsilon(set: &SpectrogramSet, scms: &ScmSet) -> Result<UpsilonSet> {
    let m_ch = set.num_channels();
    let loaded = check_scms(set, &SroVector::zeros(m_ch), scms)?;
    let (frames, bins) = (set.num_frames(), set.num_bins());
    let mut data = Vec::with_capacity(frames * bins * m_ch * m_ch);
    for t in 0..frames {
        for (f, l) in loaded.iter().enumerate() {
            for m in 0..m_ch {
                let xm = set.get(m, t, f).conj();
                for n in 0..m_ch {
                    data.push(xm * l.inverse[(m, n)] * set.get(n, t, f));
                }
            }
        }
    }
    Ok(UpsilonSet {
        channels: m_ch,
        frames,
        bins,
        data,
    })
}

/// How the cross term of the two-channel objective pairs the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BilinearForm {
    /// `|Σ_t conj(x_0) x̂_1|²`, the coherence form that equals the
    /// determinant of the two-channel ML covariance.
    #[default]
    Conjugated,
    /// `|Σ_t x_0 x̂_1|²` with no conjugate.
    AsPrinted,
}

/// Floor applied to the log argument of the two-channel objective.
pub const LOG_FLOOR: f64 = 1e-300;

/// Value of the two-channel objective plus the number of bins whose log
/// argument had to be floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseValue {
    pub value: f64,
    pub floored_bins: usize,
}

/// The two-channel objective
/// `I(ε) = -Σ_f log(Σ_t|x_0|² Σ_t|x̂_1|² - |Σ_t x_0 x̂_1|²)` with the energy
/// terms and the per-frame cross products precomputed.
#[derive(Debug, Clone)]
pub struct PairwiseObjective {
    frames: usize,
    bins: usize,
    shift: usize,
    dft_size: usize,
    energy: Vec<f64>,
    cross: Vec<Complex>,
}

impl PairwiseObjective {
    pub fn new(reference: &Spectrogram, other: &Spectrogram, form: BilinearForm) -> Result<Self> {
        if reference.config() != other.config() || reference.num_frames() != other.num_frames() {
            return Err(Error::InvalidInput(
                "spectrograms do not share geometry".into(),
            ));
        }
        let (frames, bins) = (reference.num_frames(), reference.num_bins());
        let mut p0 = vec![0.0; bins];
        let mut p1 = vec![0.0; bins];
        let mut cross = Vec::with_capacity(frames * bins);
        for t in 0..frames {
            for (f, (a, b)) in reference.frame(t).iter().zip(other.frame(t)).enumerate() {
                p0[f] += a.norm_sqr();
                p1[f] += b.norm_sqr();
                cross.push(match form {
                    BilinearForm::Conjugated => a.conj() * b,
                    BilinearForm::AsPrinted => a * b,
                });
            }
        }
        let energy = p0.iter().zip(&p1).map(|(a, b)| a * b).collect();
        let config = reference.config();
        Ok(Self {
            frames,
            bins,
            shift: config.shift(),
            dft_size: config.dft_size(),
            energy,
            cross,
        })
    }

    pub fn evaluate(&self, epsilon: f64) -> PairwiseValue {
        let mut sums = vec![Complex::default(); self.bins];
        let scale = 2.0 * PI * epsilon / self.dft_size as f64;
        for t in 0..self.frames {
            let step = Complex::from_polar(1.0, scale * (self.shift * t) as f64);
            let mut phasor = Complex::new(1.0, 0.0);
            for (s, c) in sums
                .iter_mut()
                .zip(&self.cross[t * self.bins..(t + 1) * self.bins])
            {
                *s += c * phasor;
                phasor *= step;
            }
        }
        let mut value = 0.0;
        let mut floored_bins = 0;
        for (e, s) in self.energy.iter().zip(&sums) {
            let arg = e - s.norm_sqr();
            if arg > LOG_FLOOR {
                value -= arg.ln();
            } else {
                floored_bins += 1;
                value -= LOG_FLOOR.ln();
            }
        }
        PairwiseValue {
            value,
            floored_bins,
        }
    }
}

/// Evaluates the two-channel objective once; build a [`PairwiseObjective`]
/// when sweeping many offsets.
pub fn pairwise_objective(
    reference: &Spectrogram,
    other: &Spectrogram,
    epsilon: f64,
    form: BilinearForm,
) -> Result<PairwiseValue> {
    if !epsilon.is_finite() || epsilon.abs() >= MAX_ABS_SRO {
        return Err(Error::InvalidInput(format!("SRO {epsilon:e} out of range")));
    }
    Ok(PairwiseObjective::new(reference, other, form)?.evaluate(epsilon))
}
