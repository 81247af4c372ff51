//! Scenario execution shared by the subcommands.

use crate::config::ScenarioSetup;
use anyhow::{Context, Result};
use lvdc::{
    add_wgn, build_circuit, estimate_remote_current_multiterminal, estimate_remote_current_ptg,
    estimate_remote_current_ptp, estimation_diagnostics, locate, sample, simulate, ChannelMap,
    Configuration, FaultKind, LocatorError, LocatorResult, Waveform,
};
use serde::Serialize;
use std::io::Write;
use std::time::Instant;

/// Exit codes: 1 usage/config, 2 no plateau/trigger, 3 simulation failure.
#[derive(Debug)]
pub struct CliFailure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliFailure {
    pub fn usage(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
    pub fn no_plateau(error: anyhow::Error) -> Self {
        Self { code: 2, error }
    }
    pub fn simulation(error: anyhow::Error) -> Self {
        Self { code: 3, error }
    }
}

pub fn locate_failure(e: LocatorError) -> CliFailure {
    match e {
        LocatorError::NoTrigger { .. }
        | LocatorError::NoPlateau { .. }
        | LocatorError::NoClassifiedRoots => CliFailure::no_plateau(e.into()),
        other => CliFailure::usage(other.into()),
    }
}

/// Wall-clock stage timing; printed on the console, never written to the
/// (byte-deterministic) output files.
#[derive(Debug, Default, Clone, Copy)]
pub struct StageTiming {
    pub simulate_s: f64,
    pub measure_s: f64,
}

/// Simulate the scenario and produce the measured waveform.
pub fn run_measurement(setup: &ScenarioSetup) -> Result<(Waveform, StageTiming), CliFailure> {
    let mut timing = StageTiming::default();
    let t0 = setup.record_start();
    let mut fault = setup.fault;
    fault.inception_time = setup.fault.inception_time - t0;

    let circuit = build_circuit(&setup.topology, &fault)
        .map_err(|e| CliFailure::usage(e.into()))?;
    let started = Instant::now();
    let trace = simulate(&circuit, setup.duration(), setup.internal_step)
        .map_err(|e| CliFailure::simulation(e.into()))?;
    timing.simulate_s = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let mut w = sample(&trace, setup.sample_rate, &ChannelMap::identity(&trace))
        .map_err(|e| CliFailure::usage(e.into()))?;
    w.t0 = t0;
    let post_fault = w.index_at(setup.fault.inception_time);
    let w = add_wgn(&w, &setup.noise, post_fault).map_err(|e| CliFailure::usage(e.into()))?;
    timing.measure_s = started.elapsed().as_secs_f64();

    Ok((w, timing))
}

/// One locate run: everything the JSON-lines record carries.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub fingerprint: String,
    pub configuration: String,
    pub fault_kind: String,
    pub true_distance_km: f64,
    pub resistance_ohm: f64,
    pub window_samples: usize,
    pub sample_rate_hz: f64,
    /// None when noise is disabled.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub estimate_km: f64,
    pub absolute_error_km: f64,
    pub percent_error_of_line: f64,
    pub plateau_start_s: f64,
    pub plateau_end_s: f64,
    pub plateau_duration_s: f64,
    pub trigger_time_s: f64,
    pub samples_used: usize,
}

impl RunReport {
    pub fn new(setup: &ScenarioSetup, result: &LocatorResult) -> Self {
        Self {
            fingerprint: setup.fingerprint(),
            configuration: setup.topology.configuration.as_str().to_string(),
            fault_kind: setup.fault.kind.as_str().to_string(),
            true_distance_km: setup.fault.distance_km,
            resistance_ohm: setup.fault.resistance,
            window_samples: setup.locator.window_samples,
            sample_rate_hz: setup.sample_rate,
            snr_db: setup.noise.snr_db.is_finite().then_some(setup.noise.snr_db),
            seed: setup.noise.seed,
            estimate_km: result.distance_estimate_km,
            absolute_error_km: result.absolute_error_km(setup.fault.distance_km),
            percent_error_of_line: result.percent_error(setup.fault.distance_km),
            plateau_start_s: result.plateau_interval.0,
            plateau_end_s: result.plateau_interval.1,
            plateau_duration_s: result.plateau_duration,
            trigger_time_s: result.trigger_time,
            samples_used: result.samples_used,
        }
    }
}

/// Locate on an already-measured waveform.
pub fn run_locate(
    setup: &ScenarioSetup,
    w: &Waveform,
) -> Result<(LocatorResult, f64), CliFailure> {
    let started = Instant::now();
    let result = locate(w, &setup.topology, setup.fault.kind, &setup.locator)
        .map_err(locate_failure)?;
    Ok((result, started.elapsed().as_secs_f64()))
}

/// Export the per-window root trace as CSV.
pub fn write_root_trace<W: Write>(
    result: &LocatorResult,
    sample_rate: f64,
    mut out: W,
) -> Result<()> {
    let t = &result.root_trace;
    writeln!(out, "t,root_a,root_b,valid,alpha,beta")?;
    for k in 0..t.len() {
        let time = result.trigger_time + k as f64 / sample_rate;
        writeln!(
            out,
            "{:.9e},{:.9e},{:.9e},{},{:.9e},{:.9e}",
            time,
            t.root_a[k],
            t.root_b[k],
            u8::from(t.valid_mask[k]),
            t.alpha[k],
            t.beta[k]
        )?;
    }
    Ok(())
}

/// Per-sample estimation error export plus summary NRMSE values, for the
/// estimator validation studies.
pub fn write_estimate_csv<W: Write>(setup: &ScenarioSetup, w: &Waveform, mut out: W) -> Result<()> {
    let i1 = w.channel("i_dc1").context("waveform lacks i_dc1")?;
    let i2 = w.channel("i_dc2").context(
        "waveform lacks the validation channel i_dc2 (remote currents are only \
         available on simulated scenarios)",
    )?;
    let d = setup.fault.distance_km;
    let topo = &setup.topology;
    let d1 = topo.cable.length_km;

    // estimate series per remote bus
    let mut estimates: Vec<(String, Vec<f64>)> = Vec::new();
    match topo.configuration {
        Configuration::PointToPoint => {
            let est = match setup.fault.kind {
                FaultKind::PoleToPole => estimate_remote_current_ptp(i1, d, d1),
                _ => estimate_remote_current_ptg(
                    i1,
                    d,
                    d1,
                    topo.cable.r_per_km,
                    topo.terminal_1.grounding_resistance,
                    topo.terminal_2.grounding_resistance,
                ),
            }
            .context("estimating the remote current")?;
            estimates.push(("i2_hat".into(), est.values));
        }
        Configuration::MultiTerminal => {
            let b = topo.branch_lengths.context("missing branch lengths")?;
            let lengths = [d1, b.d2, b.d3, b.d4, b.d5, b.d6, b.d7];
            let est = estimate_remote_current_multiterminal(i1, d, &lengths)
                .context("estimating the star currents")?;
            for k in (3..=6).rev() {
                estimates.push((format!("i{k}_hat"), est.sibling_series(k)));
            }
            estimates.push(("i2_hat".into(), est.i2_hat.values));
            estimates.reverse(); // i2_hat first, then i3..i6
        }
    }

    // epsilon and NRMSE against the simulated remote current, over the
    // first 100 us after inception
    let start = w.index_at(setup.fault.inception_time);
    let end = w.index_at(setup.fault.inception_time + 100e-6);
    let i2_hat = &estimates[0].1;
    let diag = estimation_diagnostics(i2_hat, i2, start..end.max(start + 1))
        .context("estimation diagnostics")?;

    writeln!(out, "# fingerprint = {}", setup.fingerprint())?;
    writeln!(out, "# nrmse = {:.6e}", diag.nrmse)?;
    write!(out, "t,i_dc1,i_dc2,epsilon")?;
    for (name, _) in &estimates {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for k in 0..w.len() {
        write!(
            out,
            "{:.9e},{:.9e},{:.9e},{:.9e}",
            w.time(k),
            i1[k],
            i2[k],
            diag.epsilon[k]
        )?;
        for (_, series) in &estimates {
            write!(out, ",{:.9e}", series[k])?;
        }
        writeln!(out)?;
    }
    Ok(())
}
