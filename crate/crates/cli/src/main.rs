//! `lvdc` - simulate LVDC fault discharge transients and locate faults
//! from one terminal's record.

mod config;
mod run;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{parse_quantity, ScenarioSetup, SweepSpec, Unit};
use rayon::prelude::*;
use run::{CliFailure, RunReport, StageTiming};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lvdc", version, about = "LVDC fault transient simulation and single-terminal fault location")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement rate, e.g. `10MHz` or `1MS/s`.
    #[arg(long)]
    sample_rate: Option<String>,
    /// Locator window in samples.
    #[arg(long)]
    window: Option<usize>,
    /// Per-channel SNR in dB, or `inf` to disable noise.
    #[arg(long)]
    snr_db: Option<String>,
}

impl Overrides {
    fn apply(&self, setup: &mut ScenarioSetup) -> Result<()> {
        if let Some(seed) = self.seed {
            setup.noise.seed = seed;
        }
        if let Some(rate) = &self.sample_rate {
            setup.sample_rate = parse_quantity(rate, Unit::Hertz).context("--sample-rate")?;
        }
        if let Some(window) = self.window {
            setup.locator.window_samples = window;
        }
        if let Some(snr) = &self.snr_db {
            setup.noise.snr_db = if snr.eq_ignore_ascii_case("inf") {
                f64::INFINITY
            } else {
                snr.parse().context("--snr-db")?
            };
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a fault scenario and write the measured waveform CSV.
    Simulate {
        /// Scenario configuration file (key = value with unit suffixes).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Locate the fault from a scenario (or a previously written CSV).
    Locate {
        #[arg(long)]
        config: PathBuf,
        /// Analyze this waveform CSV instead of simulating.
        #[arg(long)]
        waveform: Option<PathBuf>,
        /// JSON-lines report path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional per-window root trace CSV.
        #[arg(long)]
        trace_csv: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Remote-current estimation study: per-sample error and NRMSE.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the cross-product of a sweep specification.
    Sweep {
        /// Sweep specification (scenario keys plus sweep.* lists).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for runs.jsonl and errors.csv.
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliFailure> {
    match command {
        Command::Simulate {
            config,
            out,
            overrides,
        } => cmd_simulate(&config, &out, &overrides),
        Command::Locate {
            config,
            waveform,
            out,
            trace_csv,
            overrides,
        } => cmd_locate(&config, waveform.as_deref(), out.as_deref(), trace_csv.as_deref(), &overrides),
        Command::Estimate {
            config,
            out,
            overrides,
        } => cmd_estimate(&config, &out, &overrides),
        Command::Sweep { spec, out_dir, jobs } => cmd_sweep(&spec, &out_dir, jobs),
    }
}

fn load_setup(path: &Path, overrides: &Overrides) -> Result<ScenarioSetup, CliFailure> {
    let mut setup = ScenarioSetup::load(path).map_err(CliFailure::usage)?;
    overrides.apply(&mut setup).map_err(CliFailure::usage)?;
    Ok(setup)
}

fn cmd_simulate(config: &Path, out: &Path, overrides: &Overrides) -> Result<(), CliFailure> {
    let setup = load_setup(config, overrides)?;
    let (waveform, timing) = run::run_measurement(&setup)?;
    let file = File::create(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(CliFailure::usage)?;
    let mut writer = BufWriter::new(file);
    lvdc::write_csv(&waveform, &setup.fingerprint(), &mut writer)
        .map_err(|e| CliFailure::usage(e.into()))?;
    writer.flush().map_err(|e| CliFailure::usage(e.into()))?;
    eprintln!(
        "simulated {} samples at {} Hz (fingerprint {}, simulate {:.2}s, measure {:.2}s) -> {}",
        waveform.len(),
        setup.sample_rate,
        setup.fingerprint(),
        timing.simulate_s,
        timing.measure_s,
        out.display()
    );
    Ok(())
}

fn cmd_locate(
    config: &Path,
    waveform: Option<&Path>,
    out: Option<&Path>,
    trace_csv: Option<&Path>,
    overrides: &Overrides,
) -> Result<(), CliFailure> {
    let setup = load_setup(config, overrides)?;
    let (w, timing) = match waveform {
        Some(path) => {
            let file = File::open(path)
                .with_context(|| format!("opening {}", path.display()))
                .map_err(CliFailure::usage)?;
            let (w, fp) = lvdc::read_csv(std::io::BufReader::new(file))
                .map_err(|e| CliFailure::usage(e.into()))?;
            if !fp.is_empty() && fp != setup.fingerprint() {
                eprintln!(
                    "note: waveform fingerprint {fp} differs from the config's {} \
                     (analyzing the file as-is)",
                    setup.fingerprint()
                );
            }
            (w, StageTiming::default())
        }
        None => run::run_measurement(&setup)?,
    };

    let (result, locate_s) = run::run_locate(&setup, &w)?;
    let report = RunReport::new(&setup, &result);

    let json = serde_json::to_string(&report)
        .context("serializing the report")
        .map_err(CliFailure::usage)?;
    match out {
        Some(path) => {
            let mut file = File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(CliFailure::usage)?;
            writeln!(file, "{json}").map_err(|e| CliFailure::usage(e.into()))?;
        }
        None => println!("{json}"),
    }
    if let Some(path) = trace_csv {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(CliFailure::usage)?;
        run::write_root_trace(&result, w.sample_rate, BufWriter::new(file))
            .map_err(CliFailure::usage)?;
    }
    eprintln!(
        "estimate {:.4} km (true {:.4} km, {:.3}% of line), plateau {:.1} us, \
         trigger at {:.6} s [simulate {:.2}s, measure {:.2}s, locate {:.3}s]",
        result.distance_estimate_km,
        setup.fault.distance_km,
        report.percent_error_of_line,
        result.plateau_duration * 1e6,
        result.trigger_time,
        timing.simulate_s,
        timing.measure_s,
        locate_s,
    );
    Ok(())
}

fn cmd_estimate(config: &Path, out: &Path, overrides: &Overrides) -> Result<(), CliFailure> {
    let setup = load_setup(config, overrides)?;
    let (waveform, _) = run::run_measurement(&setup)?;
    let file = File::create(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(CliFailure::usage)?;
    run::write_estimate_csv(&setup, &waveform, BufWriter::new(file))
        .map_err(CliFailure::usage)?;
    eprintln!("estimation study written to {}", out.display());
    Ok(())
}

fn cmd_sweep(spec: &Path, out_dir: &Path, jobs: Option<usize>) -> Result<(), CliFailure> {
    let spec = SweepSpec::load(spec).map_err(CliFailure::usage)?;
    let runs = spec.runs();
    eprintln!("sweep: {} runs", runs.len());
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(CliFailure::usage)?;

    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliFailure::usage(anyhow!("building thread pool: {e}")))?;
    }

    // execute in parallel, report in deterministic cross-product order
    let outcomes: Vec<Result<RunReport, String>> = runs
        .par_iter()
        .map(|setup| {
            run::run_measurement(setup)
                .and_then(|(w, _)| run::run_locate(setup, &w))
                .map(|(result, _)| RunReport::new(setup, &result))
                .map_err(|failure| format!("{:#}", failure.error))
        })
        .collect();

    let jsonl_path = out_dir.join("runs.jsonl");
    let csv_path = out_dir.join("errors.csv");
    let mut jsonl = BufWriter::new(
        File::create(&jsonl_path)
            .with_context(|| format!("creating {}", jsonl_path.display()))
            .map_err(CliFailure::usage)?,
    );
    let mut csv = BufWriter::new(
        File::create(&csv_path)
            .with_context(|| format!("creating {}", csv_path.display()))
            .map_err(CliFailure::usage)?,
    );
    writeln!(
        csv,
        "fingerprint,configuration,kind,distance_km,resistance_ohm,window,sample_rate_hz,snr_db,seed,status,estimate_km,abs_error_km,percent_error,plateau_duration_s"
    )
    .map_err(|e| CliFailure::usage(e.into()))?;

    let mut failures = 0usize;
    for (setup, outcome) in runs.iter().zip(&outcomes) {
        let snr = if setup.noise.snr_db.is_finite() {
            format!("{}", setup.noise.snr_db)
        } else {
            "inf".into()
        };
        match outcome {
            Ok(report) => {
                serde_json::to_writer(&mut jsonl, report)
                    .map_err(|e| CliFailure::usage(e.into()))?;
                writeln!(jsonl).map_err(|e| CliFailure::usage(e.into()))?;
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},ok,{},{},{},{}",
                    report.fingerprint,
                    report.configuration,
                    report.fault_kind,
                    report.true_distance_km,
                    report.resistance_ohm,
                    report.window_samples,
                    report.sample_rate_hz,
                    snr,
                    report.seed,
                    report.estimate_km,
                    report.absolute_error_km,
                    report.percent_error_of_line,
                    report.plateau_duration_s
                )
                .map_err(|e| CliFailure::usage(e.into()))?;
            }
            Err(message) => {
                failures += 1;
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},\"{}\",,,,",
                    setup.fingerprint(),
                    setup.topology.configuration.as_str(),
                    setup.fault.kind.as_str(),
                    setup.fault.distance_km,
                    setup.fault.resistance,
                    setup.locator.window_samples,
                    setup.sample_rate,
                    snr,
                    setup.noise.seed,
                    message.replace('"', "'")
                )
                .map_err(|e| CliFailure::usage(e.into()))?;
            }
        }
    }
    jsonl.flush().map_err(|e| CliFailure::usage(e.into()))?;
    csv.flush().map_err(|e| CliFailure::usage(e.into()))?;
    eprintln!(
        "sweep complete: {} ok, {failures} failed -> {}, {}",
        runs.len() - failures,
        jsonl_path.display(),
        csv_path.display()
    );
    Ok(())
}
