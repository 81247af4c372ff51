//! Transient simulation and single-terminal fault location for low-voltage
//! DC (LVDC) networks.
//!
//! The crate is organized around the pipeline used by an online fault
//! locator at one cable terminal:
//!
//! 1. [`engine`] - fixed-step transient simulator for linear RLC networks
//!    with ideal switch events (nodal analysis with trapezoidal companion
//!    models).
//! 2. [`scenarios`] - builders for the simplified fault discharge networks
//!    of point-to-point and multi-terminal LVDC systems, plus documented
//!    default parameter sets.
//! 3. [`measurement`] - down-sampling of raw traces to terminal
//!    measurements, white Gaussian noise injection, and the two derivative
//!    paths (CLR voltage vs. finite differences).
//! 4. [`estimator`] - ratio-of-transient-voltages analysis and
//!    remote-terminal current estimation from local measurements only.
//! 5. [`locator`] - the consecutive-sample quadratic solver that recovers
//!    the fault distance from one terminal's record.

// `!(x > 0.0)`-style guards are deliberate: unlike `x <= 0.0` they also
// reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod estimator;
pub mod locator;
pub mod measurement;
pub mod scenarios;

pub use engine::{assemble, simulate, Branch, BranchKind, Circuit, EngineError, RawTrace};
pub use estimator::{
    estimate_remote_current_multiterminal, estimate_remote_current_ptg,
    estimate_remote_current_ptp, estimation_diagnostics, gamma_at_inception, multiterminal_gain,
    rotv, EstimationDiagnostics, EstimatorError, MultiTerminalEstimate, RotvSeries,
    ScaledEstimate,
};
pub use locator::{
    alpha_beta, classify_roots, detect_fault, extract_plateau, locate, solve_distance_quadratic,
    DerivativeSource, LocatorConfig, LocatorError, LocatorResult, Plateau, RootTrace,
};
pub use measurement::{
    add_wgn, clr_derivative, finite_difference_derivative, read_csv, sample, write_csv,
    ChannelMap, MeasurementError, NoiseSpec, Waveform,
};
pub use scenarios::{
    build_circuit, build_multiterminal_circuit, build_ptg_circuit, build_ptp_circuit,
    default_topology, BranchLengths, CableSection, Configuration, FaultKind, FaultSpec,
    NetworkTopology, ScenarioError, TerminalSpec,
};
