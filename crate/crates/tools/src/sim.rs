//! Ground-truth scenarios: speech-shaped sources, per-channel delays and
//! gains, sensor noise, and sampling-rate drift injected by band-limited
//! fractional resampling.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use srosync::fft::FftPlan;
use srosync::{Complex, SroVector, TimeSignal, PPM};

/// Interpolation half-width in input samples.
pub const RESAMPLE_TAPS: usize = 64;
const TABLE_OVERSAMPLING: usize = 2048;
const KAISER_BETA: f64 = 9.0;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] srosync::Error),
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc sampled at `1/TABLE_OVERSAMPLING` steps on `[0, RESAMPLE_TAPS]`.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = RESAMPLE_TAPS * TABLE_OVERSAMPLING;
        let norm = bessel_i0(KAISER_BETA);
        (0..=n + 1)
            .map(|i| {
                let x = i as f64 / TABLE_OVERSAMPLING as f64;
                if x >= RESAMPLE_TAPS as f64 {
                    return 0.0;
                }
                let r = x / RESAMPLE_TAPS as f64;
                let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                let s = if x == 0.0 {
                    1.0
                } else {
                    (PI * x).sin() / (PI * x)
                };
                s * w
            })
            .collect()
    })
}

#[inline]
fn kernel(table: &[f64], x: f64) -> f64 {
    let pos = x.abs() * TABLE_OVERSAMPLING as f64;
    let i = pos as usize;
    if i >= RESAMPLE_TAPS * TABLE_OVERSAMPLING {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + (table[i + 1] - table[i]) * frac
}

/// Resamples so that `output[τ]` is the band-limited input evaluated at
/// input position `τ / ratio`, i.e. a device clocked `ratio` times faster.
/// For `ratio < 1` the kernel cutoff is lowered to the output Nyquist rate.
pub fn fractional_resample(signal: &TimeSignal, ratio: f64) -> Result<TimeSignal, SimError> {
    if !(ratio > 0.9 && ratio < 1.1) {
        return Err(SimError::Invalid(format!(
            "resampling ratio {ratio} outside (0.9, 1.1)"
        )));
    }
    let x = signal.samples();
    if x.is_empty() {
        return Ok(signal.clone());
    }
    let table = kernel_table();
    let cutoff = ratio.min(1.0);
    let out_len = ((x.len() - 1) as f64 * ratio).floor() as usize + 1;
    let reach = (RESAMPLE_TAPS as f64 / cutoff).ceil() as isize;
    let mut out = Vec::with_capacity(out_len);
    for tau in 0..out_len {
        let pos = tau as f64 / ratio;
        let base = pos.floor() as isize;
        let lo = (base - reach + 1).max(0);
        let hi = (base + reach).min(x.len() as isize - 1);
        let mut acc = 0.0;
        if cutoff == 1.0 {
            for k in lo..=hi {
                acc += x[k as usize] * kernel(table, pos - k as f64);
            }
        } else {
            for k in lo..=hi {
                acc += x[k as usize] * kernel(table, (pos - k as f64) * cutoff);
            }
            acc *= cutoff;
        }
        out.push(acc);
    }
    Ok(TimeSignal::new(out, signal.rate())?)
}

/// Signal-to-noise ratio in dB; `inf` disables sensor noise. Serialized as a
/// number, or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrDb(pub f64);

impl Default for SnrDb {
    fn default() -> Self {
        SnrDb(30.0)
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(SnrDb(v)),
            Raw::Text(t) if t.eq_ignore_ascii_case("inf") => Ok(SnrDb(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "snr_db: expected a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// Explicit per-(source, channel) propagation, indexed `[source][channel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    pub delays: Vec<Vec<usize>>,
    pub gains: Vec<Vec<f64>>,
}

/// Exponentially decaying random reflections appended to every direct path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionTail {
    pub length_ms: f64,
    /// Amplitude time constant.
    pub decay_ms: f64,
    /// Standard deviation of the first reflection relative to the direct path.
    #[serde(default = "default_tail_level")]
    pub level: f64,
}

fn default_tail_level() -> f64 {
    0.3
}

fn default_rate() -> u32 {
    16000
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub num_channels: usize,
    pub num_sources: usize,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    /// Per-channel offsets in ppm; entry 0 must be 0.
    pub true_sros: Vec<f64>,
    #[serde(default)]
    pub snr_db: SnrDb,
    pub seed: u64,
    /// Drawn from the seed when absent: delays 0–50 samples, gains 0.5–1.0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_model: Option<DelayModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflections: Option<ReflectionTail>,
    /// Optional mono WAV files used as sources instead of generated ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_files: Vec<String>,
}

impl Scenario {
    pub fn num_samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    pub fn truth(&self) -> Result<SroVector, SimError> {
        Ok(SroVector::from_ppm(&self.true_sros)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_channels == 0 {
            return Err(SimError::Invalid("num_channels must be at least 1".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::Invalid(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.sample_rate == 0 {
            return Err(SimError::Invalid("sample_rate must be positive".into()));
        }
        if self.true_sros.len() != self.num_channels {
            return Err(SimError::Invalid(format!(
                "true_sros has {} entries for {} channels",
                self.true_sros.len(),
                self.num_channels
            )));
        }
        self.truth()?;
        if self.snr_db.0.is_nan() {
            return Err(SimError::Invalid("snr_db is NaN".into()));
        }
        if let Some(dm) = &self.delay_model {
            let shape_ok = dm.delays.len() == self.num_sources
                && dm.gains.len() == self.num_sources
                && dm.delays.iter().all(|r| r.len() == self.num_channels)
                && dm.gains.iter().all(|r| r.len() == self.num_channels);
            if !shape_ok {
                return Err(SimError::Invalid(
                    "delay_model must be [num_sources][num_channels]".into(),
                ));
            }
        }
        if let Some(t) = &self.reflections {
            if !(t.length_ms >= 0.0 && t.decay_ms > 0.0 && t.level >= 0.0) {
                return Err(SimError::Invalid(
                    "reflections need length_ms >= 0, decay_ms > 0, level >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Unit-RMS Gaussian noise with a speech-like spectrum: flat below 500 Hz,
/// falling 12 dB/octave above.
pub fn speech_like_source(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let n = len.next_power_of_two();
    let plan = FftPlan::new(n).expect("power of two");
    let mut buf: Vec<Complex> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
        .collect();
    plan.forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k) as f64;
        let hz = bin * rate / n as f64;
        *v *= 1.0 / (1.0 + (hz / 500.0).powi(4)).sqrt();
    }
    plan.inverse(&mut buf);
    let mut out: Vec<f64> = buf[..len].iter().map(|z| z.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// Linear convolution truncated to `x.len()` samples.
fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if h.len() <= 64 {
        let mut out = vec![0.0; x.len()];
        for (i, o) in out.iter_mut().enumerate() {
            for (k, hk) in h.iter().enumerate().take(i + 1) {
                *o += hk * x[i - k];
            }
        }
        return out;
    }
    let n = (x.len() + h.len()).next_power_of_two();
    let plan = FftPlan::new(n).expect("power of two");
    let mut a: Vec<Complex> = (0..n)
        .map(|i| Complex::new(x.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    let mut b: Vec<Complex> = (0..n)
        .map(|i| Complex::new(h.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    plan.forward(&mut a);
    plan.forward(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    plan.inverse(&mut a);
    a[..x.len()].iter().map(|z| z.re).collect()
}

/// Per-(source, channel) impulse responses: a delayed, scaled direct path
/// plus an optional decaying random tail.
fn impulse_responses(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
    let (s_count, m_count) = (scenario.num_sources, scenario.num_channels);
    let model = scenario.delay_model.clone().unwrap_or_else(|| DelayModel {
        delays: (0..s_count)
            .map(|_| (0..m_count).map(|_| rng.random_range(0..=50)).collect())
            .collect(),
        gains: (0..s_count)
            .map(|_| (0..m_count).map(|_| rng.random_range(0.5..1.0)).collect())
            .collect(),
    });
    let rate = scenario.sample_rate as f64;
    (0..s_count)
        .map(|s| {
            (0..m_count)
                .map(|m| {
                    let delay = model.delays[s][m];
                    let gain = model.gains[s][m];
                    let tail_len = scenario
                        .reflections
                        .map_or(0, |t| (t.length_ms * 1e-3 * rate).round() as usize);
                    let mut h = vec![0.0; delay + 1 + tail_len];
                    h[delay] = gain;
                    if let Some(t) = scenario.reflections {
                        let decay = t.decay_ms * 1e-3 * rate;
                        for k in 1..=tail_len {
                            let g: f64 = StandardNormal.sample(rng);
                            h[delay + k] = gain * t.level * g * (-(k as f64) / decay).exp();
                        }
                    }
                    h
                })
                .collect()
        })
        .collect()
}

/// Renders all channels. Sources must hold at least `duration` seconds; they
/// are zero-extended to cover the drifted read-out.
pub fn render_scenario(
    scenario: &Scenario,
    sources: &[Vec<f64>],
) -> Result<Vec<TimeSignal>, SimError> {
    scenario.validate()?;
    let len = scenario.num_samples();
    if sources.len() < scenario.num_sources {
        return Err(SimError::Invalid(format!(
            "{} sources supplied, scenario needs {}",
            sources.len(),
            scenario.num_sources
        )));
    }
    if let Some((i, s)) = sources
        .iter()
        .take(scenario.num_sources)
        .enumerate()
        .find(|(_, s)| s.len() < len)
    {
        return Err(SimError::Invalid(format!(
            "source {i} has {} samples, need {len}",
            s.len()
        )));
    }
    let rate = scenario.sample_rate as f64;
    let max_sro = scenario
        .true_sros
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        * PPM;
    let padded = ((len as f64) * (1.0 + 2.0 * max_sro)).ceil() as usize + 2 * RESAMPLE_TAPS;

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let responses = impulse_responses(scenario, &mut rng);
    let mut channels = Vec::with_capacity(scenario.num_channels);
    for m in 0..scenario.num_channels {
        let mut mix = vec![0.0; padded];
        for (s, src) in sources.iter().take(scenario.num_sources).enumerate() {
            let mut x = src[..src.len().min(padded)].to_vec();
            x.resize(padded, 0.0);
            for (o, v) in mix.iter_mut().zip(convolve(&x, &responses[s][m])) {
                *o += v;
            }
        }
        let noise_std = if scenario.num_sources == 0 {
            1.0
        } else if scenario.snr_db.0.is_infinite() {
            0.0
        } else {
            let power = mix[..len].iter().map(|v| v * v).sum::<f64>() / len as f64;
            (power / 10f64.powf(scenario.snr_db.0 / 10.0)).sqrt()
        };
        if noise_std > 0.0 {
            for v in mix.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v += noise_std * g;
            }
        }
        let eps = scenario.true_sros[m] * PPM;
        let drifted = if eps == 0.0 {
            TimeSignal::new(mix, rate)?
        } else {
            fractional_resample(&TimeSignal::new(mix, rate)?, 1.0 + eps)?
        };
        let mut out = drifted;
        out.truncate(len);
        channels.push(out);
    }
    Ok(channels)
}

/// Generates the scenario's own sources from its seed.
pub fn generated_sources(scenario: &Scenario) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5EED_0F50_0CE5);
    let len = (scenario.num_samples() as f64 * 1.02) as usize + 4 * RESAMPLE_TAPS;
    (0..scenario.num_sources)
        .map(|_| speech_like_source(len, scenario.sample_rate as f64, &mut rng))
        .collect()
}

/// Root-mean-square error over the non-reference channels, in ppm.
pub fn rmse_ppm(estimated: &SroVector, truth: &SroVector) -> Result<f64, SimError> {
    if estimated.len() != truth.len() {
        return Err(SimError::Invalid(format!(
            "estimate has {} channels, truth has {}",
            estimated.len(),
            truth.len()
        )));
    }
    let m = estimated.len();
    if m < 2 {
        return Ok(0.0);
    }
    let sq: f64 = (1..m)
        .map(|i| ((estimated.get(i) - truth.get(i)) / PPM).powi(2))
        .sum();
    Ok((sq / (m - 1) as f64).sqrt())
}

/// Uniform offsets in `[-max_ppm, max_ppm]` for channels 1..M.
pub fn random_sros_ppm(channels: usize, max_ppm: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend((1..channels).map(|_| rng.random_range(-max_ppm..=max_ppm)));
    v
}
