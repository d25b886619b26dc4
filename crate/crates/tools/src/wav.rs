//! WAV input (16/24/32-bit PCM or 32-bit float, any channel count) and
//! 32-bit float mono output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use srosync::TimeSignal;

use crate::error::CliError;

/// Reads every channel of `path` as a separate signal, scaled to [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<Vec<TimeSignal>, CliError> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| CliError::io(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::io(path, e))?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::io(path, e))?
        }
    };
    let rate = spec.sample_rate as f64;
    (0..channels)
        .map(|c| {
            let samples = interleaved
                .iter()
                .skip(c)
                .step_by(channels)
                .copied()
                .collect();
            TimeSignal::new(samples, rate).map_err(|e| CliError::io(path, e))
        })
        .collect()
}

/// Writes `signal` as mono 32-bit float at its (rounded) sample rate.
pub fn write_wav(path: impl AsRef<Path>, signal: &TimeSignal) -> Result<(), CliError> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.rate().round() as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| CliError::io(path, e))?;
    for &s in signal.samples() {
        writer
            .write_sample(s as f32)
            .map_err(|e| CliError::io(path, e))?;
    }
    writer.finalize().map_err(|e| CliError::io(path, e))
}

/// Reads all files, splitting multichannel ones. Returns the signals and a
/// label per signal (`path` or `path#k`).
pub fn read_inputs<P: AsRef<Path>>(
    paths: &[P],
) -> Result<(Vec<TimeSignal>, Vec<String>), CliError> {
    let mut signals = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let chans = read_wav(p)?;
        let multi = chans.len() > 1;
        for (k, ch) in chans.into_iter().enumerate() {
            let base = p.as_ref().display().to_string();
            labels.push(if multi { format!("{base}#{k}") } else { base });
            signals.push(ch);
        }
    }
    Ok((signals, labels))
}

/// Checks that all rates match and cuts every signal to the shortest length.
pub fn align_signals(signals: &mut [TimeSignal]) -> Result<(), CliError> {
    let Some(first) = signals.first() else {
        return Err(CliError::Usage("no input signals".into()));
    };
    let rate = first.rate();
    if let Some(bad) = signals.iter().find(|s| s.rate() != rate) {
        return Err(CliError::Usage(format!(
            "sample rates differ: {} Hz vs {} Hz",
            rate,
            bad.rate()
        )));
    }
    let len = signals.iter().map(TimeSignal::len).min().unwrap_or(0);
    signals.iter_mut().for_each(|s| s.truncate(len));
    Ok(())
}
