//! Python bindings: build scenarios, simulate fault transients, and run
//! the single-terminal locator from Python.
//!
//! Build with `cargo build -p lvdc-py --release`, then import the
//! produced shared library as module `lvdc_py` (see python/smoke_test.py
//! for a loader that copies it next to itself under the right name).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::str::FromStr;

use lvdc::{
    add_wgn, build_circuit, estimate_remote_current_ptg, estimate_remote_current_ptp,
    gamma_at_inception as gamma_core, locate, multiterminal_gain, default_topology, sample,
    simulate, ChannelMap, Configuration, DerivativeSource, FaultKind, FaultSpec, LocatorConfig,
    NetworkTopology, NoiseSpec,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_kind(kind: &str) -> PyResult<FaultKind> {
    FaultKind::from_str(kind).map_err(value_err)
}

/// Network parameters of a scenario.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Topology {
    inner: NetworkTopology,
}

#[pymethods]
impl Topology {
    /// Documented defaults for `"point_to_point"` or `"multi_terminal"`.
    #[staticmethod]
    fn defaults(configuration: &str) -> PyResult<Self> {
        let config = Configuration::from_str(configuration).map_err(value_err)?;
        Ok(Self {
            inner: default_topology(config),
        })
    }

    #[getter]
    fn configuration(&self) -> &'static str {
        self.inner.configuration.as_str()
    }

    #[getter]
    fn line_length_km(&self) -> f64 {
        self.inner.cable.length_km
    }

    #[getter]
    fn cable_r_per_km(&self) -> f64 {
        self.inner.cable.r_per_km
    }

    #[getter]
    fn cable_l_per_km(&self) -> f64 {
        self.inner.cable.l_per_km
    }

    #[getter]
    fn clr_inductance(&self) -> f64 {
        self.inner.terminal_1.clr_inductance
    }

    #[getter]
    fn initial_voltage(&self) -> f64 {
        self.inner.terminal_1.initial_voltage
    }

    fn set_clr_inductance(&mut self, henries: f64) {
        self.inner.terminal_1.clr_inductance = henries;
        self.inner.terminal_2.clr_inductance = henries;
        for r in self.inner.remote_terminals.iter_mut() {
            r.clr_inductance = henries;
        }
    }

    fn set_grounding_resistance(&mut self, ohms: f64) {
        self.inner.terminal_1.grounding_resistance = ohms;
        self.inner.terminal_2.grounding_resistance = ohms;
        for r in self.inner.remote_terminals.iter_mut() {
            r.grounding_resistance = ohms;
        }
    }

    fn set_cable(&mut self, r_per_km: f64, l_per_km: f64, length_km: f64) {
        self.inner.cable.r_per_km = r_per_km;
        self.inner.cable.l_per_km = l_per_km;
        self.inner.cable.length_km = length_km;
    }

    fn __repr__(&self) -> String {
        format!(
            "Topology({}, D1={} km, CLR={} H)",
            self.inner.configuration.as_str(),
            self.inner.cable.length_km,
            self.inner.terminal_1.clr_inductance
        )
    }
}

/// A sampled multi-channel terminal record.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Waveform {
    inner: lvdc::Waveform,
}

#[pymethods]
impl Waveform {
    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.sample_rate
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn channel_names(&self) -> Vec<String> {
        self.inner.channel_names().map(String::from).collect()
    }

    fn channel(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .channel(name)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| value_err(format!("no channel {name}")))
    }

    /// Sample instants in absolute seconds.
    fn times(&self) -> Vec<f64> {
        (0..self.inner.len()).map(|k| self.inner.time(k)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Waveform({} channels x {} samples at {} Hz)",
            self.inner.channel_names().count(),
            self.inner.len(),
            self.inner.sample_rate
        )
    }
}

/// Locator output.
#[pyclass]
struct LocateOutcome {
    #[pyo3(get)]
    estimate_km: f64,
    #[pyo3(get)]
    line_length_km: f64,
    #[pyo3(get)]
    plateau_start_s: f64,
    #[pyo3(get)]
    plateau_end_s: f64,
    #[pyo3(get)]
    plateau_duration_s: f64,
    #[pyo3(get)]
    trigger_time_s: f64,
}

#[pymethods]
impl LocateOutcome {
    /// Location error as a percentage of the line length.
    fn percent_error(&self, true_distance_km: f64) -> f64 {
        100.0 * (self.estimate_km - true_distance_km).abs() / self.line_length_km
    }

    fn __repr__(&self) -> String {
        format!(
            "LocateOutcome(estimate={:.4} km, plateau {:.1} us)",
            self.estimate_km,
            self.plateau_duration_s * 1e6
        )
    }
}

/// Simulate a fault and return the sampled terminal record.
///
/// `kind` is one of "ptp", "p-ptg", "n-ptg". The record covers
/// `pre_fault` seconds before the inception and `post_fault` after it;
/// `snr_db=None` disables measurement noise.
#[pyfunction]
#[pyo3(signature = (topology, kind, distance_km, resistance_ohm, *,
       inception_time=1e-4, pre_fault=5e-5, post_fault=45e-5,
       internal_step=1e-8, sample_rate=1e7, snr_db=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate_fault(
    topology: &Topology,
    kind: &str,
    distance_km: f64,
    resistance_ohm: f64,
    inception_time: f64,
    pre_fault: f64,
    post_fault: f64,
    internal_step: f64,
    sample_rate: f64,
    snr_db: Option<f64>,
    seed: u64,
) -> PyResult<Waveform> {
    let kind = parse_kind(kind)?;
    let t0 = (inception_time - pre_fault).max(0.0);
    let fault = FaultSpec {
        kind,
        distance_km,
        resistance: resistance_ohm,
        inception_time: inception_time - t0,
    };
    let circuit = build_circuit(&topology.inner, &fault).map_err(value_err)?;
    let duration = fault.inception_time + post_fault;
    let trace = simulate(&circuit, duration, internal_step).map_err(runtime_err)?;
    let mut w = sample(&trace, sample_rate, &ChannelMap::identity(&trace)).map_err(value_err)?;
    w.t0 = t0;
    let spec = NoiseSpec {
        snr_db: snr_db.unwrap_or(f64::INFINITY),
        seed,
    };
    let post_fault_start = w.index_at(inception_time);
    let w = add_wgn(&w, &spec, post_fault_start).map_err(value_err)?;
    Ok(Waveform { inner: w })
}

/// Run the single-terminal locator on a record.
#[pyfunction]
#[pyo3(signature = (waveform, topology, kind, *, window=3,
       trigger_threshold=None, plateau_tolerance=0.01,
       plateau_min_duration=1e-6, analysis_span=2e-4, derivative="clr"))]
#[allow(clippy::too_many_arguments)]
fn locate_fault(
    waveform: &Waveform,
    topology: &Topology,
    kind: &str,
    window: usize,
    trigger_threshold: Option<f64>,
    plateau_tolerance: f64,
    plateau_min_duration: f64,
    analysis_span: f64,
    derivative: &str,
) -> PyResult<LocateOutcome> {
    let kind = parse_kind(kind)?;
    let config = LocatorConfig {
        window_samples: window,
        trigger_threshold: trigger_threshold
            .unwrap_or(0.01 * 0.5 * topology.inner.terminal_1.initial_voltage),
        plateau_relative_tolerance: plateau_tolerance,
        plateau_min_duration,
        analysis_span,
        derivative_source: match derivative {
            "clr" => DerivativeSource::ClrVoltage,
            "fd" => DerivativeSource::FiniteDifference,
            other => return Err(value_err(format!("derivative must be clr|fd, got {other}"))),
        },
    };
    let result = locate(&waveform.inner, &topology.inner, kind, &config).map_err(runtime_err)?;
    Ok(LocateOutcome {
        estimate_km: result.distance_estimate_km,
        line_length_km: result.line_length_km,
        plateau_start_s: result.plateau_interval.0,
        plateau_end_s: result.plateau_interval.1,
        plateau_duration_s: result.plateau_duration,
        trigger_time_s: result.trigger_time,
    })
}

/// Ratio of transient voltages at inception: l·d / (clr + l·d).
#[pyfunction]
fn gamma_at_inception(l_per_km: f64, d: f64, clr: f64) -> PyResult<f64> {
    gamma_core(l_per_km, d, clr).map_err(value_err)
}

/// Pole-to-pole remote-current gain d/(D1−d).
#[pyfunction]
fn remote_gain_ptp(d: f64, d1: f64) -> PyResult<f64> {
    Ok(estimate_remote_current_ptp(&[1.0], d, d1)
        .map_err(value_err)?
        .gain)
}

/// Pole-to-ground remote-current gain (r·d + rg1)/(r·(D1−d) + rg2).
#[pyfunction]
fn remote_gain_ptg(d: f64, d1: f64, r_per_km: f64, rg1: f64, rg2: f64) -> PyResult<f64> {
    Ok(
        estimate_remote_current_ptg(&[1.0], d, d1, r_per_km, rg1, rg2)
            .map_err(value_err)?
            .gain,
    )
}

/// Star-network remote-current gain for lengths [D1, D2, D3, D4, D5, D6, D7].
#[pyfunction]
fn remote_gain_multiterminal(d: f64, lengths: [f64; 7]) -> PyResult<f64> {
    multiterminal_gain(d, &lengths).map_err(value_err)
}

#[pymodule]
fn lvdc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Topology>()?;
    m.add_class::<Waveform>()?;
    m.add_class::<LocateOutcome>()?;
    m.add_function(wrap_pyfunction!(simulate_fault, m)?)?;
    m.add_function(wrap_pyfunction!(locate_fault, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_at_inception, m)?)?;
    m.add_function(wrap_pyfunction!(remote_gain_ptp, m)?)?;
    m.add_function(wrap_pyfunction!(remote_gain_ptg, m)?)?;
    m.add_function(wrap_pyfunction!(remote_gain_multiterminal, m)?)?;
    Ok(())
}
