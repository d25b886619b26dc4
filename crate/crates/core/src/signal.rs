//! STFT analysis/synthesis and linear-phase-drift compensation.
//!
//! Only the one-sided spectrum (bins `0..=F/2`) is stored. Synthesis rebuilds
//! the negative bins by conjugate symmetry.

use core::f64::consts::PI;

use crate::fft::FftPlan;
use crate::likelihood::SroVector;
use crate::prelude::*;
use crate::{Complex, Error, Result};

/// Largest offset magnitude accepted anywhere in the crate (10000 ppm).
pub const MAX_ABS_SRO: f64 = 0.01;

/// A single-channel waveform at a nominal sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<f64>,
    rate: f64,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {rate}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Keeps the first `len` samples.
    pub fn truncate(&mut self, len: usize) {
        self.samples.truncate(len);
    }
}

/// Frame geometry and analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    window_length: usize,
    shift: usize,
    dft_size: usize,
    window: Vec<f64>,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::hann(2048, 1024, 4096).expect("default STFT configuration is valid")
    }
}

impl StftConfig {
    pub fn new(
        window_length: usize,
        shift: usize,
        dft_size: usize,
        window: Vec<f64>,
    ) -> Result<Self> {
        if !(0 < shift && shift <= window_length && window_length <= dft_size) {
            return Err(Error::Config(format!(
                "need 0 < shift ({shift}) <= window length ({window_length}) <= DFT size ({dft_size})"
            )));
        }
        if !dft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "DFT size {dft_size} is not a power of two"
            )));
        }
        if window.len() != window_length {
            return Err(Error::Config(format!(
                "window has {} taps, expected {window_length}",
                window.len()
            )));
        }
        if window.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Config("window values must lie in [0, 1]".into()));
        }
        // Either g[l] = g[L-1-l] or the periodic form g[l] = g[(L-l) mod L].
        let l = window_length;
        let symmetric = (0..l).all(|i| (window[i] - window[l - 1 - i]).abs() < 1e-12);
        let periodic = (0..l).all(|i| (window[i] - window[(l - i) % l]).abs() < 1e-12);
        if !(symmetric || periodic) {
            return Err(Error::Config("window is not symmetric".into()));
        }
        Ok(Self {
            window_length,
            shift,
            dft_size,
            window,
        })
    }

    /// Periodic Hann window, which overlap-adds to a constant at 50% shift.
    pub fn hann(window_length: usize, shift: usize, dft_size: usize) -> Result<Self> {
        let l = window_length as f64;
        let window = (0..window_length)
            .map(|i| {
                let s = (PI * i as f64 / l).sin();
                s * s
            })
            .collect();
        Self::new(window_length, shift, dft_size, window)
    }

    pub fn rectangular(window_length: usize, shift: usize, dft_size: usize) -> Result<Self> {
        Self::new(window_length, shift, dft_size, vec![1.0; window_length])
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn dft_size(&self) -> usize {
        self.dft_size
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Number of retained one-sided bins, `F/2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.dft_size / 2 + 1
    }

    /// Number of complete frames in a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_length {
            0
        } else {
            (len - self.window_length) / self.shift + 1
        }
    }

    /// Phase slope `ω[t,f] = 2π a t f / F` (radians per unit offset).
    pub fn omega(&self, frame: usize, bin: usize) -> f64 {
        2.0 * PI * (self.shift * frame) as f64 * bin as f64 / self.dft_size as f64
    }

    /// Constant overlap-add gain `Σ_k g[n - k a]`, or `None` when the
    /// window/shift pair does not overlap-add to a constant.
    pub fn ola_gain(&self) -> Option<f64> {
        let sums: Vec<f64> = (0..self.shift)
            .map(|n| self.window.iter().skip(n).step_by(self.shift).sum())
            .collect();
        let gain = sums[0];
        let tol = 1e-9 * gain.abs().max(1e-300);
        if gain > 0.0 && sums.iter().all(|s| (s - gain).abs() <= tol) {
            Some(gain)
        } else {
            None
        }
    }
}

/// Complex STFT coefficients of one channel, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    config: StftConfig,
    frames: usize,
    data: Vec<Complex>,
}

impl Spectrogram {
    /// Wraps raw coefficients laid out as `data[t * num_bins + f]`.
    pub fn from_coeffs(config: StftConfig, frames: usize, data: Vec<Complex>) -> Result<Self> {
        if data.len() != frames * config.num_bins() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients do not fill {frames} frames of {} bins",
                data.len(),
                config.num_bins()
            )));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite STFT coefficient".into()));
        }
        Ok(Self {
            config,
            frames,
            data,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins()
    }

    pub fn coeffs(&self) -> &[Complex] {
        &self.data
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex {
        self.data[frame * self.num_bins() + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex] {
        let b = self.num_bins();
        &self.data[frame * b..(frame + 1) * b]
    }
}

/// Multichannel spectrogram with shared geometry, indexed `[m][t][f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramSet {
    config: StftConfig,
    channels: usize,
    frames: usize,
    data: Vec<Complex>,
}

impl SpectrogramSet {
    pub fn from_channels(channels: Vec<Spectrogram>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidInput("no channels".into()))?;
        let config = first.config.clone();
        let frames = first.frames;
        if frames == 0 {
            return Err(Error::InvalidInput("spectrogram has no frames".into()));
        }
        for (m, ch) in channels.iter().enumerate() {
            if ch.config != config || ch.frames != frames {
                return Err(Error::InvalidInput(format!(
                    "channel {m} has {} frames, expected {frames} with identical STFT settings",
                    ch.frames
                )));
            }
        }
        let count = channels.len();
        let mut data = Vec::with_capacity(count * frames * config.num_bins());
        for ch in channels {
            data.extend_from_slice(&ch.data);
        }
        Ok(Self {
            config,
            channels: count,
            frames,
            data,
        })
    }

    /// Analyzes every signal with the same configuration.
    pub fn analyze(signals: &[TimeSignal], config: &StftConfig) -> Result<Self> {
        let specs = signals
            .iter()
            .map(|s| stft(s, config))
            .collect::<Result<Vec<_>>>()?;
        Self::from_channels(specs)
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins()
    }

    /// Coefficients of channel `m`, laid out `[t * num_bins + f]`.
    pub fn channel_coeffs(&self, m: usize) -> &[Complex] {
        let n = self.frames * self.num_bins();
        &self.data[m * n..(m + 1) * n]
    }

    pub fn get(&self, channel: usize, frame: usize, bin: usize) -> Complex {
        self.data[(channel * self.frames + frame) * self.num_bins() + bin]
    }

    pub fn channel(&self, m: usize) -> Spectrogram {
        Spectrogram {
            config: self.config.clone(),
            frames: self.frames,
            data: self.channel_coeffs(m).to_vec(),
        }
    }

    /// New set made of the listed channels, in order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&bad) = channels.iter().find(|&&m| m >= self.channels) {
            return Err(Error::InvalidInput(format!("channel {bad} out of range")));
        }
        let mut data = Vec::with_capacity(channels.len() * self.frames * self.num_bins());
        for &m in channels {
            data.extend_from_slice(self.channel_coeffs(m));
        }
        Ok(Self {
            config: self.config.clone(),
            channels: channels.len(),
            frames: self.frames,
            data,
        })
    }

    /// Applies the per-channel LPD compensation of `sro`.
    pub fn compensated(&self, sro: &SroVector) -> Result<Self> {
        if sro.len() != self.channels {
            return Err(Error::InvalidInput(format!(
                "SRO vector has {} entries for {} channels",
                sro.len(),
                self.channels
            )));
        }
        let mut out = self.clone();
        let n = self.frames * self.num_bins();
        for (m, block) in out.data.chunks_mut(n).enumerate() {
            rotate_lpd(&self.config, self.frames, block, sro.get(m));
        }
        Ok(out)
    }
}

/// One-sided STFT of `signal`. Partial trailing frames are dropped.
pub fn stft(signal: &TimeSignal, config: &StftConfig) -> Result<Spectrogram> {
    let frames = config.num_frames(signal.len());
    if frames == 0 {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is shorter than one window ({})",
            signal.len(),
            config.window_length
        )));
    }
    let plan = FftPlan::new(config.dft_size)?;
    let bins = config.num_bins();
    let n = config.dft_size;
    let l = config.window_length;
    let x = signal.samples();
    let mut data = vec![Complex::default(); frames * bins];
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut scratch = vec![Complex::default(); n];
    let mut t = 0;
    while t < frames {
        let fill = |buf: &mut [f64], frame: usize| {
            let start = frame * config.shift;
            for (i, v) in buf[..l].iter_mut().enumerate() {
                *v = x[start + i] * config.window[i];
            }
        };
        fill(&mut a, t);
        if t + 1 < frames {
            fill(&mut b, t + 1);
        } else {
            b[..l].fill(0.0);
        }
        let (head, tail) = data[t * bins..].split_at_mut(bins);
        let mut spare;
        let out_b: &mut [Complex] = if t + 1 < frames {
            &mut tail[..bins]
        } else {
            spare = vec![Complex::default(); bins];
            &mut spare
        };
        plan.forward_real_pair(&a, &b, &mut scratch, head, out_b);
        t += 2;
    }
    Ok(Spectrogram {
        config: config.clone(),
        frames,
        data,
    })
}

/// Overlap-add synthesis. Requires a window/shift pair with constant
/// overlap-add gain; returns `(T-1)·a + L` samples.
pub fn istft(spec: &Spectrogram, rate: f64) -> Result<TimeSignal> {
    let config = &spec.config;
    let gain = config.ola_gain().ok_or_else(|| {
        Error::Config(format!(
            "window of length {} with shift {} does not satisfy constant overlap-add",
            config.window_length, config.shift
        ))
    })?;
    let plan = FftPlan::new(config.dft_size)?;
    let n = config.dft_size;
    let l = config.window_length;
    let bins = config.num_bins();
    let len = (spec.frames - 1) * config.shift + l;
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex::default(); n];
    for t in 0..spec.frames {
        let frame = spec.frame(t);
        buf[..bins].copy_from_slice(frame);
        for f in 1..n / 2 {
            buf[n - f] = frame[f].conj();
        }
        plan.inverse(&mut buf);
        let start = t * config.shift;
        for i in 0..l {
            out[start + i] += buf[i].re;
            norm[start + i] += config.window[i];
        }
    }
    let floor = 1e-3 * gain;
    for (v, w) in out.iter_mut().zip(&norm) {
        *v = if *w >= floor { *v / w } else { 0.0 };
    }
    TimeSignal::new(out, rate)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon.abs() >= MAX_ABS_SRO {
        return Err(Error::InvalidInput(format!(
            "SRO {epsilon:e} outside the accepted range (|ε| < {MAX_ABS_SRO})"
        )));
    }
    Ok(())
}

/// LPD compensation: `x̂[t,f] = x[t,f] · exp(2πj·a·t·f·ε / F)`.
pub fn compensate_lpd(spec: &Spectrogram, epsilon: f64) -> Result<Spectrogram> {
    check_epsilon(epsilon)?;
    let mut out = spec.clone();
    rotate_lpd(&spec.config, spec.frames, &mut out.data, epsilon);
    Ok(out)
}

const RESEED: usize = 64;

pub(crate) fn rotate_lpd(config: &StftConfig, frames: usize, data: &mut [Complex], epsilon: f64) {
    if epsilon == 0.0 {
        return;
    }
    let bins = config.num_bins();
    let scale = 2.0 * PI * epsilon / config.dft_size as f64;
    for t in 1..frames {
        let at = (config.shift * t) as f64;
        let step = Complex::from_polar(1.0, scale * at);
        // Phasor recurrence along f, re-seeded exactly every RESEED bins.
        for (block, chunk) in data[t * bins..(t + 1) * bins]
            .chunks_mut(RESEED)
            .enumerate()
        {
            let mut phasor = Complex::from_polar(1.0, scale * at * (block * RESEED) as f64);
            for z in chunk {
                *z *= phasor;
                phasor *= step;
            }
        }
    }
}
