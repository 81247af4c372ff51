//! Terminal measurements: down-sampling, white Gaussian noise, and the two
//! current-derivative paths.
//!
//! The locator never differentiates the measured current: the voltage drop
//! across the CLR is itself L·di/dt, so dividing the measured CLR voltage
//! by the reactor inductance gives the derivative without amplifying
//! sample-to-sample noise. A centered finite-difference operator is kept
//! alongside as the baseline the CLR substitution is compared against
//! under noise.

use crate::engine::RawTrace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{BufRead, Write};
use thiserror::Error;

/// Channel names every terminal-1 record carries.
pub const REQUIRED_CHANNELS: [&str; 4] = ["v1", "v_dc1", "u1", "i_dc1"];

/// A uniformly sampled multi-channel record.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub sample_rate: f64,
    /// Absolute time of sample 0, seconds.
    pub t0: f64,
    channels: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("sample rate {rate} Hz is not commensurate with the {step} s internal step")]
    NonCommensurateRate { rate: f64, step: f64 },
    #[error("sample rate {rate} Hz exceeds the internal rate {internal} Hz")]
    RateTooHigh { rate: f64, internal: f64 },
    #[error("missing probe {0} in raw trace")]
    MissingProbe(String),
    #[error("missing channel {0}")]
    MissingChannel(String),
    #[error("channel {name} length {got} does not match {want}")]
    LengthMismatch {
        name: String,
        got: usize,
        want: usize,
    },
    #[error("post-fault window is empty")]
    EmptyWindow,
    #[error("series too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("malformed waveform file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Waveform {
    pub fn new(sample_rate: f64, t0: f64) -> Self {
        Self {
            sample_rate,
            t0,
            channels: Vec::new(),
        }
    }

    pub fn push_channel(&mut self, name: &str, data: Vec<f64>) {
        self.channels.push((name.to_string(), data));
    }

    /// Insert a channel right after `anchor` (or at the end when the
    /// anchor is absent). Keeps the conventional column order
    /// `v1, v_dc1, u1, i_dc1, ...` in exported files.
    fn insert_after(&mut self, anchor: &str, name: &str, data: Vec<f64>) {
        let at = self
            .channels
            .iter()
            .position(|(n, _)| n == anchor)
            .map_or(self.channels.len(), |i| i + 1);
        self.channels.insert(at, (name.to_string(), data));
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64], MeasurementError> {
        self.channel(name)
            .ok_or_else(|| MeasurementError::MissingChannel(name.to_string()))
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |(_, d)| d.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Absolute time of sample `idx`.
    pub fn time(&self, idx: usize) -> f64 {
        self.t0 + idx as f64 / self.sample_rate
    }

    /// Index of the first sample at or after absolute time `t` (clamped).
    pub fn index_at(&self, t: f64) -> usize {
        let idx = ((t - self.t0) * self.sample_rate).ceil();
        (idx.max(0.0) as usize).min(self.len().saturating_sub(1))
    }
}

/// Probe-to-channel assignment used by [`sample`].
#[derive(Debug, Clone)]
pub struct ChannelMap {
    entries: Vec<(String, String)>, // (channel name, probe name)
}

impl ChannelMap {
    pub fn new(pairs: &[(&str, &str)]) -> Self {
        Self {
            entries: pairs
                .iter()
                .map(|(c, p)| (c.to_string(), p.to_string()))
                .collect(),
        }
    }

    /// One channel per probe, keeping the probe names.
    pub fn identity(trace: &RawTrace) -> Self {
        Self {
            entries: trace
                .probe_names()
                .iter()
                .map(|n| (n.clone(), n.clone()))
                .collect(),
        }
    }
}

/// Point-sample the raw trace onto a uniform measurement grid.
///
/// The sampling period must be an integer multiple of the internal step
/// (within 1e-9 relative). No anti-alias filtering is applied. When both
/// `v1` and `v_dc1` are mapped, the CLR voltage channel `u1 = v1 - v_dc1`
/// is appended.
pub fn sample(
    trace: &RawTrace,
    sample_rate: f64,
    map: &ChannelMap,
) -> Result<Waveform, MeasurementError> {
    let internal_rate = 1.0 / trace.internal_step;
    if sample_rate > internal_rate * (1.0 + 1e-9) {
        return Err(MeasurementError::RateTooHigh {
            rate: sample_rate,
            internal: internal_rate,
        });
    }
    let ratio = internal_rate / sample_rate;
    let stride = ratio.round();
    if (ratio - stride).abs() > 1e-9 * ratio {
        return Err(MeasurementError::NonCommensurateRate {
            rate: sample_rate,
            step: trace.internal_step,
        });
    }
    let stride = stride as usize;

    let mut w = Waveform::new(sample_rate, 0.0);
    for (channel, probe) in &map.entries {
        let data = trace
            .channel(probe)
            .ok_or_else(|| MeasurementError::MissingProbe(probe.clone()))?;
        w.push_channel(channel, data.iter().copied().step_by(stride).collect());
    }
    if let (Some(v1), Some(vdc)) = (w.channel("v1"), w.channel("v_dc1")) {
        let u1: Vec<f64> = v1.iter().zip(vdc).map(|(a, b)| a - b).collect();
        w.insert_after("v_dc1", "u1", u1);
    }
    Ok(w)
}

/// White Gaussian measurement noise at a per-channel SNR.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    /// Target signal-to-noise ratio in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

/// Add white Gaussian noise to every measured channel.
///
/// Noise variance is set per channel so that the SNR over the post-fault
/// window (`post_fault_start..`) equals `spec.snr_db`; the pre-fault
/// portion of the record is zero-signal in the source-free networks, so a
/// full-record SNR would be ill-defined. The realization is deterministic
/// in `(seed, channel name)`. `u1` is a derived channel and is recomputed
/// as `v1 - v_dc1` after noising, mirroring how it is formed from the two
/// voltage measurements.
pub fn add_wgn(
    w: &Waveform,
    spec: &NoiseSpec,
    post_fault_start: usize,
) -> Result<Waveform, MeasurementError> {
    if spec.snr_db.is_infinite() {
        return Ok(w.clone());
    }
    if post_fault_start >= w.len() {
        return Err(MeasurementError::EmptyWindow);
    }
    let mut out = Waveform::new(w.sample_rate, w.t0);
    for (name, data) in &w.channels {
        if name == "u1" {
            continue;
        }
        let power =
            data[post_fault_start..].iter().map(|x| x * x).sum::<f64>()
                / (data.len() - post_fault_start) as f64;
        let sigma = (power * 10f64.powf(-spec.snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ fnv1a(name));
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let noisy: Vec<f64> = data
            .iter()
            .map(|x| x + sigma * normal.sample(&mut rng))
            .collect();
        out.push_channel(name, noisy);
    }
    if let (Some(v1), Some(vdc)) = (out.channel("v1"), out.channel("v_dc1")) {
        let u1: Vec<f64> = v1.iter().zip(vdc).map(|(a, b)| a - b).collect();
        out.insert_after("v_dc1", "u1", u1);
    }
    Ok(out)
}

/// FNV-1a hash; stable across runs and platforms, unlike `DefaultHasher`.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Current derivative from the CLR voltage drop: di/dt = u / (poles · L).
///
/// Sample-wise scaling only, hence no noise amplification.
pub fn clr_derivative(u: &[f64], clr_inductance: f64, pole_count: usize) -> Vec<f64> {
    let scale = 1.0 / (pole_count as f64 * clr_inductance);
    u.iter().map(|x| x * scale).collect()
}

/// Centered finite-difference derivative, one-sided at the ends: the
/// conventional di/dt estimate the CLR substitution replaces.
pub fn finite_difference_derivative(
    series: &[f64],
    sample_rate: f64,
) -> Result<Vec<f64>, MeasurementError> {
    let n = series.len();
    if n < 3 {
        return Err(MeasurementError::TooShort { need: 3, got: n });
    }
    let dt = 1.0 / sample_rate;
    let mut out = Vec::with_capacity(n);
    out.push((series[1] - series[0]) / dt);
    for k in 1..n - 1 {
        out.push((series[k + 1] - series[k - 1]) / (2.0 * dt));
    }
    out.push((series[n - 1] - series[n - 2]) / dt);
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV export / import
// ---------------------------------------------------------------------------

/// Write the waveform as CSV: metadata comment lines, a header row, then
/// one row per sample with time in seconds at 10 significant digits.
pub fn write_csv<W: Write>(
    w: &Waveform,
    fingerprint: &str,
    mut out: W,
) -> Result<(), MeasurementError> {
    writeln!(out, "# sample_rate_hz = {:.9e}", w.sample_rate)?;
    writeln!(out, "# t0_s = {:.9e}", w.t0)?;
    writeln!(out, "# fingerprint = {fingerprint}")?;
    write!(out, "t")?;
    for (name, _) in &w.channels {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for k in 0..w.len() {
        write!(out, "{:.9e}", w.time(k))?;
        for (_, data) in &w.channels {
            write!(out, ",{:.9e}", data[k])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Read a waveform written by [`write_csv`]. Returns the waveform and the
/// stored fingerprint.
pub fn read_csv<R: BufRead>(input: R) -> Result<(Waveform, String), MeasurementError> {
    let mut sample_rate = None;
    let mut t0 = 0.0;
    let mut fingerprint = String::new();
    let mut names: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();

    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((key, value)) = meta.split_once('=') {
                match key.trim() {
                    "sample_rate_hz" => {
                        sample_rate = Some(value.trim().parse::<f64>().map_err(|e| {
                            MeasurementError::Malformed(format!("sample_rate_hz: {e}"))
                        })?)
                    }
                    "t0_s" => {
                        t0 = value.trim().parse::<f64>().map_err(|e| {
                            MeasurementError::Malformed(format!("t0_s: {e}"))
                        })?
                    }
                    "fingerprint" => fingerprint = value.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        match &names {
            None => {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.first() != Some(&"t") {
                    return Err(MeasurementError::Malformed(
                        "header must start with column `t`".into(),
                    ));
                }
                names = Some(cols[1..].iter().map(|s| s.to_string()).collect());
                columns = vec![Vec::new(); cols.len() - 1];
            }
            Some(_) => {
                for (i, field) in line.split(',').enumerate() {
                    let value: f64 = field.trim().parse().map_err(|e| {
                        MeasurementError::Malformed(format!("line {}: {e}", lineno + 1))
                    })?;
                    if i > 0 {
                        columns
                            .get_mut(i - 1)
                            .ok_or_else(|| {
                                MeasurementError::Malformed(format!(
                                    "line {}: too many fields",
                                    lineno + 1
                                ))
                            })?
                            .push(value);
                    }
                }
            }
        }
    }

    let sample_rate = sample_rate
        .ok_or_else(|| MeasurementError::Malformed("missing sample_rate_hz metadata".into()))?;
    let names =
        names.ok_or_else(|| MeasurementError::Malformed("missing header row".into()))?;
    let mut w = Waveform::new(sample_rate, t0);
    for (name, data) in names.into_iter().zip(columns) {
        w.channels.push((name, data));
    }
    let want = w.len();
    for (name, data) in &w.channels {
        if data.len() != want {
            return Err(MeasurementError::LengthMismatch {
                name: name.clone(),
                got: data.len(),
                want,
            });
        }
    }
    Ok((w, fingerprint))
}
