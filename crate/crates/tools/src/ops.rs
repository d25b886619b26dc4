//! The work behind each subcommand, callable without going through argv.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use srosync::likelihood::PairwiseObjective;
use srosync::signal::{compensate_lpd, istft, stft};
use srosync::{estimate, Method, SpectrogramSet, SroVector, TimeSignal, PPM};

use crate::config::FileConfig;
use crate::error::CliError;
use crate::report::{PairReport, SyncReport, Truth, SCHEMA_VERSION};
use crate::sim::{self, ReflectionTail, Scenario, SnrDb};
use crate::wav::{read_wav, write_wav};

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// File name used for channel `m` by `simulate` and `compensate`.
pub fn channel_file(dir: &Path, m: usize) -> PathBuf {
    dir.join(format!("ch{m}.wav"))
}

/// Renders a scenario file into `out_dir/ch{m}.wav` plus `truth.json`.
pub fn simulate(scenario_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let scenario: Scenario = load_json(scenario_path)?;
    let base = scenario_path.parent().unwrap_or(Path::new("."));
    let sources = if scenario.source_files.is_empty() {
        sim::generated_sources(&scenario)
    } else {
        scenario
            .source_files
            .iter()
            .map(|f| {
                let p = base.join(f);
                let ch = read_wav(&p)?.swap_remove(0);
                if ch.rate() != scenario.sample_rate as f64 {
                    return Err(CliError::Usage(format!(
                        "{}: rate {} Hz differs from scenario rate {}",
                        p.display(),
                        ch.rate(),
                        scenario.sample_rate
                    )));
                }
                Ok(ch.into_samples())
            })
            .collect::<Result<_, _>>()?
    };
    let channels = sim::render_scenario(&scenario, &sources)?;
    write_channels(&channels, out_dir)?;
    let truth = Truth {
        true_sros_ppm: scenario.true_sros.clone(),
        sample_rate: Some(scenario.sample_rate as f64),
        num_samples: Some(scenario.num_samples()),
    };
    save_json(&out_dir.join("truth.json"), &truth)?;
    Ok((0..channels.len())
        .map(|m| channel_file(out_dir, m))
        .collect())
}

pub fn write_channels(channels: &[TimeSignal], out_dir: &Path) -> Result<(), CliError> {
    create_dir(out_dir)?;
    for (m, ch) in channels.iter().enumerate() {
        write_wav(channel_file(out_dir, m), ch)?;
    }
    Ok(())
}

/// Runs grid initialization and `method` on aligned signals.
pub fn estimate_signals(
    signals: &[TimeSignal],
    labels: &[String],
    method: Method,
    config: &FileConfig,
    truth_ppm: Option<&[f64]>,
) -> Result<SyncReport, CliError> {
    if signals.len() < 2 {
        return Err(CliError::Usage(format!(
            "need at least two channels, got {}",
            signals.len()
        )));
    }
    let est_config = config.estimator()?;
    let start = Instant::now();
    let set = SpectrogramSet::analyze(signals, &est_config.stft)?;
    let est = estimate(&set, method, &est_config)?;
    let seconds = start.elapsed().as_secs_f64();
    let sro_ppm = est.sro.to_ppm();
    if sro_ppm.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numerical(format!(
            "non-finite estimate {sro_ppm:?}"
        )));
    }
    let rmse_ppm = match truth_ppm {
        Some(t) => {
            if t.len() != signals.len() {
                return Err(CliError::Usage(format!(
                    "truth has {} channels, inputs have {}",
                    t.len(),
                    signals.len()
                )));
            }
            Some(sim::rmse_ppm(&est.sro, &SroVector::from_ppm(t)?)?)
        }
        None => None,
    };
    Ok(SyncReport {
        schema_version: SCHEMA_VERSION,
        method: method.name().to_string(),
        inputs: labels.to_vec(),
        sample_rate: signals[0].rate(),
        num_samples: signals[0].len(),
        sro_ppm,
        init_ppm: est.init.to_ppm(),
        log_likelihood_trace: est.trace,
        iterations: est.iterations,
        converged: est.converged,
        seconds,
        config: config.clone(),
        truth_ppm: truth_ppm.map(<[f64]>::to_vec),
        rmse_ppm,
        pairs: est
            .pairs
            .iter()
            .map(|p| PairReport {
                channel: p.channel,
                grid_ppm: p.grid_epsilon / PPM,
                ppm: p.epsilon / PPM,
                iterations: p.iterations,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompensationPath {
    /// Phase rotation in the STFT domain followed by overlap-add synthesis.
    Stft,
    /// Band-limited resampling by `1 / (1 + ε)`.
    Resample,
}

/// Removes the offsets `sro_ppm` from each signal.
pub fn compensate_signals(
    signals: &[TimeSignal],
    sro_ppm: &[f64],
    path: CompensationPath,
    config: &FileConfig,
) -> Result<Vec<TimeSignal>, CliError> {
    if signals.len() != sro_ppm.len() {
        return Err(CliError::Usage(format!(
            "report has {} channels, {} inputs given",
            sro_ppm.len(),
            signals.len()
        )));
    }
    let stft_config = config.stft()?;
    signals
        .iter()
        .zip(sro_ppm)
        .map(|(x, &ppm)| {
            let eps = ppm * PPM;
            match path {
                CompensationPath::Stft => {
                    let spec = compensate_lpd(&stft(x, &stft_config)?, eps)?;
                    Ok(istft(&spec, x.rate())?)
                }
                CompensationPath::Resample if eps == 0.0 => Ok(x.clone()),
                CompensationPath::Resample => Ok(sim::fractional_resample(x, 1.0 / (1.0 + eps))?),
            }
        })
        .collect()
}

/// Two-channel objective on `points` offsets spread evenly over
/// `center ± range` (just `center` when `points == 1`).
pub fn trace_sweep(
    reference: &TimeSignal,
    other: &TimeSignal,
    config: &FileConfig,
    center_ppm: f64,
    range_ppm: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>, CliError> {
    if points == 0 {
        return Err(CliError::Usage("points must be at least 1".into()));
    }
    if !(range_ppm >= 0.0) {
        return Err(CliError::Usage("range must be non-negative".into()));
    }
    let stft_config = config.stft()?;
    let objective = PairwiseObjective::new(
        &stft(reference, &stft_config)?,
        &stft(other, &stft_config)?,
        config.form.into(),
    )?;
    let grid: Vec<f64> = if points == 1 {
        vec![center_ppm]
    } else {
        let step = 2.0 * range_ppm / (points - 1) as f64;
        (0..points)
            .map(|i| center_ppm - range_ppm + step * i as f64)
            .collect()
    };
    Ok(grid
        .into_iter()
        .map(|ppm| (ppm, objective.evaluate(ppm * PPM).value))
        .collect())
}

pub fn trace_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("epsilon_ppm,objective\n");
    for (e, v) in rows {
        out.push_str(&format!("{e},{v}\n"));
    }
    out
}

/// Reverberation used by bench scenarios: RT60 about 0.3 s, direct and
/// reverberant energy roughly equal.
pub fn default_reflections(level: f64) -> Option<ReflectionTail> {
    (level > 0.0).then_some(ReflectionTail {
        length_ms: 300.0,
        decay_ms: 43.0,
        level,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub speakers: Vec<usize>,
    pub durations: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub channels: usize,
    pub snr_db: f64,
    pub max_sro_ppm: f64,
    pub reverb_level: f64,
    pub methods: Vec<Method>,
    pub jobs: usize,
    pub config: FileConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            speakers: vec![1, 2, 3],
            durations: vec![5.0, 10.0, 30.0],
            trials: 10,
            seed: 0,
            channels: 4,
            snr_db: 30.0,
            max_sro_ppm: 62.5,
            reverb_level: 0.05,
            methods: Method::ALL.to_vec(),
            jobs: 1,
            config: FileConfig::default(),
        }
    }
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// The scenario of one bench trial; depends only on its arguments.
pub fn bench_scenario(
    opts: &BenchOptions,
    speakers: usize,
    duration: f64,
    trial: usize,
) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        opts.seed,
        speakers as u64,
        duration.to_bits(),
        trial as u64,
    ]));
    Scenario {
        num_channels: opts.channels,
        num_sources: speakers,
        duration,
        sample_rate: 16000,
        true_sros: sim::random_sros_ppm(opts.channels, opts.max_sro_ppm, &mut rng),
        snr_db: SnrDb(opts.snr_db),
        seed: rng.random(),
        delay_model: None,
        reflections: default_reflections(opts.reverb_level),
        source_files: Vec::new(),
    }
}

/// Renders a scenario with its generated sources.
pub fn render(scenario: &Scenario) -> Result<Vec<TimeSignal>, CliError> {
    Ok(sim::render_scenario(
        scenario,
        &sim::generated_sources(scenario),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub speakers: usize,
    pub duration_s: f64,
    pub trial: usize,
    pub method: String,
    pub rmse_ppm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummaryEntry {
    pub speakers: usize,
    pub duration_s: f64,
    pub method: String,
    pub trials: usize,
    pub mean_rmse_ppm: f64,
    pub mean_seconds: f64,
}

pub const BENCH_HEADER: &str = "speakers,duration_s,trial,method,rmse_ppm,seconds";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            r.speakers, r.duration_s, r.trial, r.method, r.rmse_ppm, r.seconds
        ));
    }
    out
}

fn bench_trial(
    opts: &BenchOptions,
    speakers: usize,
    duration: f64,
    trial: usize,
) -> Result<Vec<BenchRow>, CliError> {
    let scenario = bench_scenario(opts, speakers, duration, trial);
    let signals = render(&scenario)?;
    let labels: Vec<String> = (0..signals.len()).map(|m| format!("ch{m}")).collect();
    opts.methods
        .iter()
        .map(|&method| {
            let rep = estimate_signals(
                &signals,
                &labels,
                method,
                &opts.config,
                Some(&scenario.true_sros),
            )?;
            Ok(BenchRow {
                speakers,
                duration_s: duration,
                trial,
                method: method.name().to_string(),
                rmse_ppm: rep.rmse_ppm.unwrap_or(f64::NAN),
                seconds: rep.seconds,
            })
        })
        .collect()
}

/// Runs every (speakers, duration, trial) cell, up to `jobs` at a time.
/// Rows come back in a fixed order regardless of scheduling.
pub fn bench(opts: &BenchOptions) -> Result<(Vec<BenchRow>, Vec<BenchSummaryEntry>), CliError> {
    if opts.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    if opts.methods.is_empty() || opts.speakers.is_empty() || opts.durations.is_empty() {
        return Err(CliError::Usage(
            "speakers, durations and methods must be non-empty".into(),
        ));
    }
    let cells: Vec<(usize, f64, usize)> = opts
        .speakers
        .iter()
        .flat_map(|&s| {
            opts.durations
                .iter()
                .flat_map(move |&d| (0..opts.trials).map(move |t| (s, d, t)))
        })
        .collect();
    type Slot = Option<Result<Vec<BenchRow>, CliError>>;
    let results: Mutex<Vec<Slot>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..opts.jobs.clamp(1, cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(s, d, t)) = cells.get(i) else {
                    break;
                };
                let r = bench_trial(opts, s, d, t);
                results.lock().expect("bench worker panicked")[i] = Some(r);
            });
        }
    });
    let mut rows = Vec::new();
    for r in results.into_inner().expect("bench worker panicked") {
        rows.extend(r.expect("every cell ran")?);
    }
    Ok((rows.clone(), summarize(&rows, opts)))
}

fn summarize(rows: &[BenchRow], opts: &BenchOptions) -> Vec<BenchSummaryEntry> {
    let mut out = Vec::new();
    for &s in &opts.speakers {
        for &d in &opts.durations {
            for m in &opts.methods {
                let sel: Vec<&BenchRow> = rows
                    .iter()
                    .filter(|r| r.speakers == s && r.duration_s == d && r.method == m.name())
                    .collect();
                let n = sel.len() as f64;
                out.push(BenchSummaryEntry {
                    speakers: s,
                    duration_s: d,
                    method: m.name().to_string(),
                    trials: sel.len(),
                    mean_rmse_ppm: sel.iter().map(|r| r.rmse_ppm).sum::<f64>() / n,
                    mean_seconds: sel.iter().map(|r| r.seconds).sum::<f64>() / n,
                });
            }
        }
    }
    out
}
