//! Single-terminal fault distance recovery by consecutive-sample
//! manipulation.
//!
//! The cable-side voltage at the measuring terminal obeys
//!
//! ```text
//! v_dc1(t) = d·(r_loop·i1(t) + (l_loop/L_m)·u1(t)) + K·i1(t)
//! ```
//!
//! where u1 is the CLR voltage (so u1/L_m is the current derivative), and
//! K lumps the fault resistance with the remote-current gain - unknown but
//! time-invariant early in the transient. Evaluating at two sample
//! instants t1 and t2 = t1 + w·ΔTs and eliminating K yields a quadratic in
//! the fault distance whose coefficients are the bilinear combinations
//!
//! ```text
//! α(t1,t2) = u1(t1)·i1(t2) − u1(t2)·i1(t1)
//! β(t1,t2) = v_dc1(t1)·i1(t2) − v_dc1(t2)·i1(t1)
//! ```
//!
//! Both the distance-dependent resistive term and K cancel in the
//! subtraction, so neither the fault resistance nor any remote data is
//! needed. One root of the quadratic is structurally pinned at the line
//! length D1 (the polynomial factors as (d − D1)·((l/L_m)·α·d − β)); the
//! other carries the distance information and lingers at the true
//! distance over a plateau that the extraction stage selects.

use crate::measurement::{finite_difference_derivative, Waveform};
use crate::scenarios::{FaultKind, NetworkTopology};
use thiserror::Error;

/// Which current-derivative path feeds the α combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeSource {
    /// The measured CLR voltage itself (no differencing).
    #[default]
    ClrVoltage,
    /// Centered finite differences of the measured current, scaled by the
    /// loop inductance: the noise-fragile baseline.
    FiniteDifference,
}

/// Locator tuning knobs.
#[derive(Debug, Clone, Copy)]
pub struct LocatorConfig {
    /// Window width w in samples: t2 = t1 + w·ΔTs. Recommended 3-10.
    pub window_samples: usize,
    /// Fault detection threshold on |u1|, volts.
    pub trigger_threshold: f64,
    /// Plateau flatness bound as a fraction of the line length.
    pub plateau_relative_tolerance: f64,
    /// Minimum plateau duration in seconds.
    pub plateau_min_duration: f64,
    /// Record span analyzed after the trigger, seconds.
    pub analysis_span: f64,
    pub derivative_source: DerivativeSource,
}

impl Default for LocatorConfig {
    fn default() -> Self {
        Self {
            window_samples: 3,
            trigger_threshold: 3.8, // 1% of a 380 V pole
            plateau_relative_tolerance: 0.01,
            plateau_min_duration: 1e-6,
            analysis_span: 200e-6,
            derivative_source: DerivativeSource::ClrVoltage,
        }
    }
}

impl LocatorConfig {
    /// Defaults with the trigger threshold at 1% of the pole voltage of
    /// `topology`.
    pub fn for_topology(topology: &NetworkTopology) -> Self {
        Self {
            trigger_threshold: 0.01 * 0.5 * topology.terminal_1.initial_voltage,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), LocatorError> {
        if !(2..=20).contains(&self.window_samples) {
            return Err(LocatorError::InvalidConfig(format!(
                "window_samples must be in 2..=20, got {}",
                self.window_samples
            )));
        }
        for (name, v) in [
            ("trigger_threshold", self.trigger_threshold),
            ("plateau_relative_tolerance", self.plateau_relative_tolerance),
            ("plateau_min_duration", self.plateau_min_duration),
            ("analysis_span", self.analysis_span),
        ] {
            if !(v > 0.0) {
                return Err(LocatorError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-window root pairs and their classification.
#[derive(Debug, Clone)]
pub struct RootTrace {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// The two quadratic roots, NaN where absent (negative discriminant,
    /// degenerate linear case, or empty window).
    pub root_a: Vec<f64>,
    pub root_b: Vec<f64>,
    /// True where a root inside [0, D1] was selected.
    pub valid_mask: Vec<bool>,
    /// The selected in-range root per window; NaN where unclassified.
    pub valid_root: Vec<f64>,
    /// The non-selected root per classified window; NaN elsewhere.
    pub invalid_root: Vec<f64>,
    /// Line length D1 the roots were solved against, km.
    pub line_length_km: f64,
}

impl RootTrace {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// A contiguous stretch of valid roots flat enough to be a plateau.
#[derive(Debug, Clone, Copy)]
pub struct Plateau {
    /// First and last window index (relative to the analyzed segment).
    pub start_index: usize,
    pub end_index: usize,
    /// Median of the valid roots across the stretch, km.
    pub estimate_km: f64,
    /// (end − start) / sample_rate, seconds.
    pub duration: f64,
}

/// Locator output: root traces, the chosen plateau and the estimate.
#[derive(Debug, Clone)]
pub struct LocatorResult {
    pub root_trace: RootTrace,
    /// Plateau bounds in absolute record time, seconds.
    pub plateau_interval: (f64, f64),
    pub plateau_duration: f64,
    pub distance_estimate_km: f64,
    pub line_length_km: f64,
    pub trigger_index: usize,
    pub trigger_time: f64,
    /// Samples of the record that entered the analysis.
    pub samples_used: usize,
    pub window_samples: usize,
}

impl LocatorResult {
    pub fn absolute_error_km(&self, true_distance_km: f64) -> f64 {
        (self.distance_estimate_km - true_distance_km).abs()
    }

    /// Error as a percentage of the line length.
    pub fn percent_error(&self, true_distance_km: f64) -> f64 {
        100.0 * self.absolute_error_km(true_distance_km) / self.line_length_km
    }
}

#[derive(Debug, Error)]
pub enum LocatorError {
    #[error("waveform is missing channel {0}")]
    MissingChannel(String),
    #[error("no trigger: |u1| never exceeded {threshold} V")]
    NoTrigger { threshold: f64 },
    #[error("series too short: need more than {need} samples, got {got}")]
    SeriesTooShort { need: usize, got: usize },
    #[error("no window produced a classifiable root")]
    NoClassifiedRoots,
    #[error("no plateau of at least {min_duration} s found{}", best_summary(.best))]
    NoPlateau {
        min_duration: f64,
        /// Longest sub-threshold stretch, for diagnostics.
        best: Option<Plateau>,
    },
    #[error("invalid locator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Measurement(#[from] crate::measurement::MeasurementError),
}

fn best_summary(best: &Option<Plateau>) -> String {
    match best {
        Some(p) => format!(
            " (best candidate: {:.4} km over {:.2} us)",
            p.estimate_km,
            p.duration * 1e6
        ),
        None => String::new(),
    }
}

/// First sample where |u1| exceeds the trigger threshold.
///
/// The CLR voltage is zero in the quiescent pre-fault network, so the
/// first threshold crossing marks the inception to within a sample or
/// two.
pub fn detect_fault(w: &Waveform, config: &LocatorConfig) -> Result<usize, LocatorError> {
    let u1 = w
        .channel("u1")
        .ok_or_else(|| LocatorError::MissingChannel("u1".into()))?;
    u1.iter()
        .position(|x| x.abs() > config.trigger_threshold)
        .ok_or(LocatorError::NoTrigger {
            threshold: config.trigger_threshold,
        })
}

/// Bilinear consecutive-sample combinations over a window of `w` samples:
/// α(n) = u1(n)·i1(n+w) − u1(n+w)·i1(n), β(n) likewise with v_dc1.
pub fn alpha_beta(
    u1: &[f64],
    i1: &[f64],
    v_dc1: &[f64],
    w: usize,
) -> Result<(Vec<f64>, Vec<f64>), LocatorError> {
    let n = u1.len().min(i1.len()).min(v_dc1.len());
    if n <= w {
        return Err(LocatorError::SeriesTooShort { need: w, got: n });
    }
    let mut alpha = Vec::with_capacity(n - w);
    let mut beta = Vec::with_capacity(n - w);
    for k in 0..n - w {
        alpha.push(u1[k] * i1[k + w] - u1[k + w] * i1[k]);
        beta.push(v_dc1[k] * i1[k + w] - v_dc1[k + w] * i1[k]);
    }
    Ok((alpha, beta))
}

/// Solve the per-window distance quadratic
/// a·d² + b·d + c = 0 with a = (l/L_m)·α, b = −[β + (l·D1/L_m)·α],
/// c = D1·β, where l and L_m are the loop cable inductance per km and the
/// loop CLR inductance (`pole_count` doubles both, so the ratio reduces
/// to l_per_km/clr).
///
/// Uses the cancellation-safe quadratic formula; windows with |a| under
/// the degeneracy floor fall back to the linear equation, windows with a
/// (numerically) negative discriminant are marked NaN rather than fatal.
pub fn solve_distance_quadratic(
    alpha: &[f64],
    beta: &[f64],
    l_per_km: f64,
    clr: f64,
    pole_count: usize,
    d1: f64,
) -> Result<RootTrace, LocatorError> {
    if alpha.len() != beta.len() {
        return Err(LocatorError::SeriesTooShort {
            need: alpha.len(),
            got: beta.len(),
        });
    }
    if !(clr > 0.0) || !(l_per_km > 0.0) || !(d1 > 0.0) || pole_count == 0 {
        return Err(LocatorError::InvalidConfig(
            "l_per_km, clr, d1 and pole_count must be positive".into(),
        ));
    }
    let poles = pole_count as f64;
    let kappa = (poles * l_per_km) / (poles * clr);

    let a_max = alpha.iter().fold(0.0f64, |m, x| m.max((kappa * x).abs()));
    let floor = if a_max > 0.0 {
        1e-12 * a_max
    } else {
        f64::MIN_POSITIVE
    };

    let n = alpha.len();
    let mut root_a = vec![f64::NAN; n];
    let mut root_b = vec![f64::NAN; n];
    for k in 0..n {
        let a = kappa * alpha[k];
        let b = -(beta[k] + kappa * d1 * alpha[k]);
        let c = d1 * beta[k];
        if a.abs() < floor {
            if b != 0.0 {
                root_a[k] = -c / b;
            }
            continue;
        }
        let mut disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            // analytically a perfect square; clamp rounding-level negatives
            if disc.abs() <= 1e-12 * (b * b + (4.0 * a * c).abs()) {
                disc = 0.0;
            } else {
                continue;
            }
        }
        let q = -(b + b.signum() * disc.sqrt()) / 2.0;
        let q = if q == 0.0 && b == 0.0 {
            -disc.sqrt() / 2.0
        } else {
            q
        };
        root_a[k] = q / a;
        root_b[k] = if q != 0.0 { c / q } else { 0.0 };
    }

    Ok(RootTrace {
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        root_a,
        root_b,
        valid_mask: vec![false; n],
        valid_root: vec![f64::NAN; n],
        invalid_root: vec![f64::NAN; n],
        line_length_km: d1,
    })
}

/// Assign the valid/invalid roles per window.
///
/// A root inside [0, D1] is valid, except in a hair's breadth of D1
/// itself: the quadratic pins one root exactly at the line end for any
/// α, β, so an in-range test that admitted it would latch the continuity
/// tie-break onto that constant root the first time the data root strays.
/// When both roots qualify the one closer to the previous valid value
/// wins; at the first classified window, where no history exists, the
/// more interior root (larger distance to the nearer end of [0, D1])
/// wins. Windows where neither root is in range are left unclassified.
pub fn classify_roots(mut trace: RootTrace, d1: f64) -> RootTrace {
    let slack = 1e-12 * d1;
    let pinned_margin = 1e-6 * d1;
    let in_range =
        |r: f64| r.is_finite() && r >= -slack && r <= d1 - pinned_margin;
    let mut prev: Option<f64> = None;

    for k in 0..trace.len() {
        let (ra, rb) = (trace.root_a[k], trace.root_b[k]);
        let chosen = match (in_range(ra), in_range(rb)) {
            (true, false) => Some((ra, rb)),
            (false, true) => Some((rb, ra)),
            (true, true) => {
                let pick_a = match prev {
                    Some(p) => (ra - p).abs() <= (rb - p).abs(),
                    None => {
                        let interior = |r: f64| r.min(d1 - r);
                        interior(ra) >= interior(rb)
                    }
                };
                if pick_a {
                    Some((ra, rb))
                } else {
                    Some((rb, ra))
                }
            }
            (false, false) => None,
        };
        if let Some((valid, other)) = chosen {
            let valid = valid.clamp(0.0, d1);
            trace.valid_mask[k] = true;
            trace.valid_root[k] = valid;
            trace.invalid_root[k] = other;
            prev = Some(valid);
        }
    }
    trace
}

/// Select the distance plateau from the classified trace.
///
/// Candidates are maximal stretches of contiguous valid roots whose
/// spread stays within `plateau_relative_tolerance · D1`. The first
/// `window_samples` indices after the trigger are excluded (solver
/// warm-up). Of the surviving candidates the longest of at least
/// `plateau_min_duration` wins and its median is the estimate.
pub fn extract_plateau(
    trace: &RootTrace,
    config: &LocatorConfig,
    sample_rate: f64,
) -> Result<Plateau, LocatorError> {
    let d1 = trace.line_length_km;
    let tol = config.plateau_relative_tolerance * d1;
    let v = &trace.valid_root;
    let n = v.len();
    let warmup = config.window_samples.min(n);

    if !trace.valid_mask[warmup..].iter().any(|&m| m) {
        return Err(LocatorError::NoClassifiedRoots);
    }

    // Locally-maximal bounded-spread windows via two pointers with
    // monotonic min/max deques.
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    let mut left = warmup;
    let mut maxq: std::collections::VecDeque<usize> = Default::default();
    let mut minq: std::collections::VecDeque<usize> = Default::default();
    let mut prev_window: Option<(usize, usize)> = None;
    for right in warmup..n {
        if v[right].is_nan() {
            if let Some(w) = prev_window.take() {
                candidates.push(w);
            }
            left = right + 1;
            maxq.clear();
            minq.clear();
            continue;
        }
        while maxq.back().is_some_and(|&i| v[i] <= v[right]) {
            maxq.pop_back();
        }
        maxq.push_back(right);
        while minq.back().is_some_and(|&i| v[i] >= v[right]) {
            minq.pop_back();
        }
        minq.push_back(right);
        while v[maxq[0]] - v[minq[0]] > tol {
            left += 1;
            if maxq[0] < left {
                maxq.pop_front();
            }
            if minq[0] < left {
                minq.pop_front();
            }
        }
        // window [left, right] is maximal-for-right; it supersedes the
        // previous one unless the left edge moved
        match prev_window {
            Some((pl, _)) if pl < left => {
                candidates.push(prev_window.take().unwrap());
                prev_window = Some((left, right));
            }
            _ => prev_window = Some((left, right)),
        }
    }
    if let Some(w) = prev_window {
        candidates.push(w);
    }

    let median = |a: usize, b: usize| -> f64 {
        let mut vals: Vec<f64> = v[a..=b].to_vec();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let m = vals.len();
        if m % 2 == 1 {
            vals[m / 2]
        } else {
            0.5 * (vals[m / 2 - 1] + vals[m / 2])
        }
    };

    let mut best: Option<Plateau> = None;
    let mut best_any: Option<Plateau> = None;
    for (a, b) in candidates {
        let est = median(a, b);
        let p = Plateau {
            start_index: a,
            end_index: b,
            estimate_km: est,
            duration: (b - a) as f64 / sample_rate,
        };
        if best_any.is_none_or(|q| p.duration > q.duration) {
            best_any = Some(p);
        }
        if p.duration >= config.plateau_min_duration
            && best.is_none_or(|q| p.duration > q.duration)
        {
            best = Some(p);
        }
    }

    best.ok_or(LocatorError::NoPlateau {
        min_duration: config.plateau_min_duration,
        best: best_any,
    })
}

/// Full pipeline: trigger, restrict to the analysis span, form α/β, solve
/// and classify the quadratic, extract the plateau.
///
/// Needs only terminal-1 channels (u1, i_dc1, v_dc1) plus the line
/// constants; no remote measurement and no knowledge of the true distance
/// or fault resistance enters.
pub fn locate(
    w: &Waveform,
    topology: &NetworkTopology,
    kind: FaultKind,
    config: &LocatorConfig,
) -> Result<LocatorResult, LocatorError> {
    config.validate()?;
    let i1 = w
        .channel("i_dc1")
        .ok_or_else(|| LocatorError::MissingChannel("i_dc1".into()))?;
    let v_dc1 = w
        .channel("v_dc1")
        .ok_or_else(|| LocatorError::MissingChannel("v_dc1".into()))?;
    let pole_count = kind.pole_count();
    let clr = topology.terminal_1.clr_inductance;

    let trigger_index = detect_fault(w, config)?;

    let u1_eff: Vec<f64> = match config.derivative_source {
        DerivativeSource::ClrVoltage => w
            .channel("u1")
            .ok_or_else(|| LocatorError::MissingChannel("u1".into()))?
            .to_vec(),
        DerivativeSource::FiniteDifference => {
            let lm = pole_count as f64 * clr;
            finite_difference_derivative(i1, w.sample_rate)?
                .into_iter()
                .map(|x| lm * x)
                .collect()
        }
    };

    let span_samples = (config.analysis_span * w.sample_rate).round() as usize;
    let end = (trigger_index + span_samples + 1).min(w.len());
    let samples_used = end - trigger_index;

    let (alpha, beta) = alpha_beta(
        &u1_eff[trigger_index..end],
        &i1[trigger_index..end],
        &v_dc1[trigger_index..end],
        config.window_samples,
    )?;
    let trace = solve_distance_quadratic(
        &alpha,
        &beta,
        topology.cable.l_per_km,
        clr,
        pole_count,
        topology.cable.length_km,
    )?;
    let trace = classify_roots(trace, topology.cable.length_km);
    let plateau = extract_plateau(&trace, config, w.sample_rate)?;

    Ok(LocatorResult {
        plateau_interval: (
            w.time(trigger_index + plateau.start_index),
            w.time(trigger_index + plateau.end_index),
        ),
        plateau_duration: plateau.duration,
        distance_estimate_km: plateau.estimate_km,
        line_length_km: trace.line_length_km,
        trigger_index,
        trigger_time: w.time(trigger_index),
        samples_used,
        window_samples: config.window_samples,
        root_trace: trace,
    })
}
