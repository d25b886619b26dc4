//! Argument definitions and dispatch for the `srosync` binary.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use srosync::Method;

use crate::config::{FileConfig, FormName};
use crate::error::CliError;
use crate::ops::{self, BenchOptions, CompensationPath};
use crate::report::{SyncReport, Truth};
use crate::wav::{align_signals, read_inputs};

#[derive(Debug, Parser)]
#[command(
    name = "srosync",
    version,
    about = "Blind sampling-rate offset estimation and compensation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scenario file to one WAV per channel plus truth.json.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate per-channel offsets relative to the first input channel.
    Estimate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Joint)]
        method: MethodArg,
        /// truth.json (or a scenario file) to compute the RMSE against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Report path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Undo the offsets of a report and write ch{m}.wav files.
    Compensate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PathArg::Stft)]
        path: PathArg,
    },
    /// Simulated accuracy benchmark: CSV of per-trial RMSE plus a JSON summary.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3])]
        speakers: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [5.0f64, 10.0, 30.0])]
        durations: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        channels: usize,
        #[arg(long, default_value_t = 30.0)]
        snr_db: f64,
        /// First-reflection level of the reverberant tail; 0 disables it.
        #[arg(long, default_value_t = 0.05)]
        reverb_level: f64,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Vec<MethodArg>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Sweep the two-channel objective and print (epsilon_ppm, objective) CSV.
    Trace {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 100.0)]
        range_ppm: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, default_value_t = 0.0)]
        center_ppm: f64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Joint,
    PairGss,
    PairMm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Joint => Method::Joint,
            MethodArg::PairGss => Method::PairGss,
            MethodArg::PairMm => Method::PairMm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathArg {
    Stft,
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Conjugated,
    AsPrinted,
}

/// Config file plus per-field overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub outer_iterations: Option<usize>,
    #[arg(long)]
    pub inner_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance_ppm: Option<f64>,
    #[arg(long)]
    pub grid_range_ppm: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub gss_tol_ppm: Option<f64>,
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
}

impl Settings {
    pub fn resolve(&self) -> Result<FileConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if let Some(v) = self.outer_iterations {
            c.outer_iterations = v;
        }
        if let Some(v) = self.inner_iterations {
            c.inner_iterations = v;
        }
        if let Some(v) = self.tolerance_ppm {
            c.tolerance_ppm = v;
        }
        if let Some(v) = self.grid_range_ppm {
            c.grid_range_ppm = v;
        }
        if let Some(v) = self.grid_points {
            c.grid_points = v;
        }
        if let Some(v) = self.gss_tol_ppm {
            c.gss_tol_ppm = v;
        }
        if let Some(f) = self.form {
            c.form = match f {
                FormArg::Conjugated => FormName::Conjugated,
                FormArg::AsPrinted => FormName::AsPrinted,
            };
        }
        c.estimator()?;
        Ok(c)
    }
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let files = ops::simulate(&scenario, &out)?;
            eprintln!(
                "wrote {} channels and truth.json to {}",
                files.len(),
                out.display()
            );
            Ok(())
        }
        Command::Estimate {
            inputs,
            method,
            truth,
            output,
            settings,
        } => {
            let config = settings.resolve()?;
            let (mut signals, labels) = read_inputs(&inputs)?;
            align_signals(&mut signals)?;
            let truth: Option<Truth> = truth.as_deref().map(ops::load_json).transpose()?;
            let report = ops::estimate_signals(
                &signals,
                &labels,
                method.into(),
                &config,
                truth.as_ref().map(|t| t.true_sros_ppm.as_slice()),
            )?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Usage(e.to_string()))?
                + "\n";
            write_or_print(output.as_ref(), &text)
        }
        Command::Compensate {
            inputs,
            report,
            out,
            path,
        } => {
            let report: SyncReport = ops::load_json(&report)?;
            let (mut signals, _) = read_inputs(&inputs)?;
            align_signals(&mut signals)?;
            let path = match path {
                PathArg::Stft => CompensationPath::Stft,
                PathArg::Resample => CompensationPath::Resample,
            };
            let fixed = ops::compensate_signals(&signals, &report.sro_ppm, path, &report.config)?;
            ops::write_channels(&fixed, &out)
        }
        Command::Bench {
            speakers,
            durations,
            trials,
            seed,
            channels,
            snr_db,
            reverb_level,
            methods,
            jobs,
            out,
            settings,
        } => {
            let opts = BenchOptions {
                speakers,
                durations,
                trials,
                seed,
                channels,
                snr_db,
                max_sro_ppm: BenchOptions::default().max_sro_ppm,
                reverb_level,
                methods: if methods.is_empty() {
                    Method::ALL.to_vec()
                } else {
                    methods.into_iter().map(Method::from).collect()
                },
                jobs,
                config: settings.resolve()?,
            };
            if opts.channels < 2 {
                return Err(CliError::Usage("bench needs at least two channels".into()));
            }
            let (rows, summary) = ops::bench(&opts)?;
            fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            let csv = out.join("bench.csv");
            fs::write(&csv, ops::bench_csv(&rows)).map_err(|e| CliError::io(&csv, e))?;
            ops::save_json(&out.join("summary.json"), &summary)?;
            for s in &summary {
                eprintln!(
                    "speakers={} duration={}s {:<8} mean rmse {:.4} ppm over {} trials",
                    s.speakers, s.duration_s, s.method, s.mean_rmse_ppm, s.trials
                );
            }
            Ok(())
        }
        Command::Trace {
            inputs,
            range_ppm,
            points,
            center_ppm,
            output,
            settings,
        } => {
            let config = settings.resolve()?;
            let (mut signals, _) = read_inputs(&inputs)?;
            if signals.len() != 2 {
                return Err(CliError::Usage(format!(
                    "trace needs exactly two channels, got {}",
                    signals.len()
                )));
            }
            align_signals(&mut signals)?;
            let rows = ops::trace_sweep(
                &signals[0],
                &signals[1],
                &config,
                center_ppm,
                range_ppm,
                points,
            )?;
            write_or_print(output.as_ref(), &ops::trace_csv(&rows))
        }
    }
}
