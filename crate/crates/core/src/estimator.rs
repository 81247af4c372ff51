//! Remote-terminal current estimation from local measurements.
//!
//! A single-terminal locator cannot measure the current the far terminal
//! feeds into the fault. The ratio-of-transient-voltages analysis gives a
//! time-invariant gain that expresses the remote current as a multiple of
//! the locally measured one, for point-to-point pole-to-pole and
//! pole-to-ground loops and for the six-bus star. These estimates (and
//! their error against simulated remote currents) are analysis and
//! validation tools: the locator itself folds the same gain into its
//! distance polynomial algebraically and never needs the true distance.

use thiserror::Error;

/// Gain magnitude past which an estimate is flagged near-singular (the
/// fault sits almost at the remote terminal and the gain blows up).
pub const NEAR_SINGULAR_GAIN: f64 = 1e3;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("fault distance {d} must lie in (0, {d1})")]
    DistanceOutOfRange { d: f64, d1: f64 },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("zero denominator: cable resistance and remote grounding are both zero")]
    ZeroDenominator,
    #[error("all samples below the voltage floor")]
    AllMasked,
    #[error("evaluation window is empty")]
    EmptyWindow,
    #[error("remote current peak is zero over the window; NRMSE undefined")]
    ZeroPeak,
}

/// Ratio of transient voltages γ = v_dc / v_bus with floor masking.
#[derive(Debug, Clone)]
pub struct RotvSeries {
    /// Sample-wise ratio; NaN where masked.
    pub gamma: Vec<f64>,
    /// True where the bus voltage was above the floor.
    pub valid: Vec<bool>,
}

/// A remote-current estimate: a time-invariant gain applied to the local
/// current.
#[derive(Debug, Clone)]
pub struct ScaledEstimate {
    pub values: Vec<f64>,
    pub gain: f64,
    /// Set when |gain| exceeds [`NEAR_SINGULAR_GAIN`].
    pub near_singular: bool,
}

/// Star-network estimate: bus-2 series plus the gains tying buses 3-6 to
/// the bus-2 estimate.
#[derive(Debug, Clone)]
pub struct MultiTerminalEstimate {
    pub i2_hat: ScaledEstimate,
    /// Gains of î₃..î₆ relative to î₂: D2/D3, D2/(D4+D7), D2/(D5+D7),
    /// D2/(D6+D7).
    pub sibling_gains: [f64; 4],
}

impl MultiTerminalEstimate {
    /// Estimated current series for bus `k` in 3..=6.
    pub fn sibling_series(&self, k: usize) -> Vec<f64> {
        let g = self.sibling_gains[k - 3];
        self.i2_hat.values.iter().map(|x| g * x).collect()
    }
}

/// Estimation error diagnostics against a simulated remote current.
#[derive(Debug, Clone)]
pub struct EstimationDiagnostics {
    /// ε(t) = î(t) − i(t) over the full series.
    pub epsilon: Vec<f64>,
    /// RMS of ε over the window, normalized by peak |i| over the window.
    pub nrmse: f64,
}

/// Sample-wise ratio of transient voltages γ = v_dc/v_bus.
///
/// Samples where |v_bus| < `voltage_floor` are masked (NaN): the ratio is
/// ill-conditioned once the bus voltage collapses. A floor of 1% of the
/// pre-fault voltage is the conventional choice.
pub fn rotv(
    v_dc: &[f64],
    v_bus: &[f64],
    voltage_floor: f64,
) -> Result<RotvSeries, EstimatorError> {
    if v_dc.len() != v_bus.len() {
        return Err(EstimatorError::LengthMismatch(v_dc.len(), v_bus.len()));
    }
    let mut gamma = Vec::with_capacity(v_dc.len());
    let mut valid = Vec::with_capacity(v_dc.len());
    for (num, den) in v_dc.iter().zip(v_bus) {
        if den.abs() >= voltage_floor {
            gamma.push(num / den);
            valid.push(true);
        } else {
            gamma.push(f64::NAN);
            valid.push(false);
        }
    }
    if valid.iter().all(|v| !v) {
        return Err(EstimatorError::AllMasked);
    }
    Ok(RotvSeries { gamma, valid })
}

/// Ratio of transient voltages at the fault inception instant:
/// γ(0⁺) = l·d / (clr + l·d).
///
/// Strictly increasing in `d`, strictly decreasing in `clr`, range (0, 1).
/// The remote-terminal mirror is obtained by calling this with
/// (D1 − d, clr₂).
pub fn gamma_at_inception(l_per_km: f64, d: f64, clr: f64) -> Result<f64, EstimatorError> {
    for (name, value) in [("l_per_km", l_per_km), ("d", d), ("clr", clr)] {
        if !(value > 0.0) {
            return Err(EstimatorError::NonPositive { name, value });
        }
    }
    let ld = l_per_km * d;
    Ok(ld / (clr + ld))
}

fn check_distance(d: f64, d1: f64) -> Result<(), EstimatorError> {
    if !(d > 0.0) || d >= d1 {
        return Err(EstimatorError::DistanceOutOfRange { d, d1 });
    }
    Ok(())
}

fn scaled(i1: &[f64], gain: f64) -> ScaledEstimate {
    ScaledEstimate {
        values: i1.iter().map(|x| gain * x).collect(),
        gain,
        near_singular: gain.abs() > NEAR_SINGULAR_GAIN,
    }
}

/// Pole-to-pole remote current estimate: î₂(t) = d/(D1−d) · i₁(t).
pub fn estimate_remote_current_ptp(
    i1: &[f64],
    d: f64,
    d1: f64,
) -> Result<ScaledEstimate, EstimatorError> {
    check_distance(d, d1)?;
    Ok(scaled(i1, d / (d1 - d)))
}

/// Pole-to-ground remote current estimate:
/// î₂(t) = (r·d + R_g1) / (r·(D1−d) + R_g2) · i₁(t).
pub fn estimate_remote_current_ptg(
    i1: &[f64],
    d: f64,
    d1: f64,
    r_per_km: f64,
    rg1: f64,
    rg2: f64,
) -> Result<ScaledEstimate, EstimatorError> {
    check_distance(d, d1)?;
    if r_per_km < 0.0 || rg1 < 0.0 || rg2 < 0.0 {
        return Err(EstimatorError::NonPositive {
            name: "resistance",
            value: r_per_km.min(rg1).min(rg2),
        });
    }
    let den = r_per_km * (d1 - d) + rg2;
    if den == 0.0 {
        return Err(EstimatorError::ZeroDenominator);
    }
    Ok(scaled(i1, (r_per_km * d + rg1) / den))
}

/// Star-network gain from bus-1 current to the bus-2 estimate:
/// d / (D2 + (D1−d)·[1 + D2/D3 + Σ_{k=4..6} D2/(Dk+D7)]).
///
/// Valid for d in (0, D1]; the boundary value d = D1 collapses the
/// bracket and is admitted for formula checks. D7 may be zero (the
/// sub-junction sits on the main junction), the other lengths must be
/// positive.
pub fn multiterminal_gain(d: f64, lengths: &[f64; 7]) -> Result<f64, EstimatorError> {
    let [d1, d2, d3, d4, d5, d6, d7] = *lengths;
    for (name, value) in [
        ("D1", d1),
        ("D2", d2),
        ("D3", d3),
        ("D4", d4),
        ("D5", d5),
        ("D6", d6),
    ] {
        if !(value > 0.0) {
            return Err(EstimatorError::NonPositive { name, value });
        }
    }
    if d7 < 0.0 {
        return Err(EstimatorError::NonPositive {
            name: "D7",
            value: d7,
        });
    }
    if !(d > 0.0) || d > d1 {
        return Err(EstimatorError::DistanceOutOfRange { d, d1 });
    }
    let bracket = 1.0 + d2 / d3 + d2 / (d4 + d7) + d2 / (d5 + d7) + d2 / (d6 + d7);
    Ok(d / (d2 + (d1 - d) * bracket))
}

/// Star-network remote current estimates: î₂ from the local current plus
/// the sibling identities î₃ = (D2/D3)·î₂, î_k = D2/(D_k+D7)·î₂ for
/// k = 4..6.
pub fn estimate_remote_current_multiterminal(
    i1: &[f64],
    d: f64,
    lengths: &[f64; 7],
) -> Result<MultiTerminalEstimate, EstimatorError> {
    check_distance(d, lengths[0])?;
    let gain = multiterminal_gain(d, lengths)?;
    let [_, d2, d3, d4, d5, d6, d7] = *lengths;
    Ok(MultiTerminalEstimate {
        i2_hat: scaled(i1, gain),
        sibling_gains: [d2 / d3, d2 / (d4 + d7), d2 / (d5 + d7), d2 / (d6 + d7)],
    })
}

/// Estimation error ε = î − i and its NRMSE over `window` (RMS of ε
/// normalized by the peak |i| over the window).
pub fn estimation_diagnostics(
    i_hat: &[f64],
    i_actual: &[f64],
    window: std::ops::Range<usize>,
) -> Result<EstimationDiagnostics, EstimatorError> {
    if i_hat.len() != i_actual.len() {
        return Err(EstimatorError::LengthMismatch(i_hat.len(), i_actual.len()));
    }
    if window.is_empty() || window.end > i_hat.len() {
        return Err(EstimatorError::EmptyWindow);
    }
    let epsilon: Vec<f64> = i_hat.iter().zip(i_actual).map(|(a, b)| a - b).collect();
    let peak = i_actual[window.clone()]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return Err(EstimatorError::ZeroPeak);
    }
    let ms: f64 = epsilon[window.clone()].iter().map(|e| e * e).sum::<f64>()
        / window.len() as f64;
    Ok(EstimationDiagnostics {
        epsilon,
        nrmse: ms.sqrt() / peak,
    })
}
