//! Flat key-value scenario configuration with unit-suffixed quantities.
//!
//! One schema is shared by `simulate`, `locate`, `estimate` and `sweep`:
//! every key overrides a documented default, so an empty file is a valid
//! point-to-point scenario. Values carry explicit SI unit suffixes
//! (`cable.l = 0.35mH/km`, `fault.resistance = 1mohm`); dimensionless
//! keys take bare numbers.

use anyhow::{anyhow, bail, Context, Result};
use lvdc::{
    default_topology, Configuration, DerivativeSource, FaultKind, FaultSpec, LocatorConfig,
    NetworkTopology, NoiseSpec,
};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// Physical dimension a config key expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Ohm,
    OhmPerKm,
    Henry,
    HenryPerKm,
    Farad,
    Volt,
    Kilometre,
    Seconds,
    Hertz,
    Bare,
}

impl Unit {
    fn table(self) -> &'static [(&'static str, f64)] {
        match self {
            Unit::Ohm => &[("ohm", 1.0), ("mohm", 1e-3), ("uohm", 1e-6), ("kohm", 1e3)],
            Unit::OhmPerKm => &[
                ("ohm/km", 1.0),
                ("mohm/km", 1e-3),
                ("ohm/m", 1e3),
            ],
            Unit::Henry => &[("H", 1.0), ("mH", 1e-3), ("uH", 1e-6), ("nH", 1e-9)],
            Unit::HenryPerKm => &[("H/km", 1.0), ("mH/km", 1e-3), ("uH/km", 1e-6)],
            Unit::Farad => &[("F", 1.0), ("mF", 1e-3), ("uF", 1e-6), ("nF", 1e-9)],
            Unit::Volt => &[("V", 1.0), ("kV", 1e3), ("mV", 1e-3)],
            Unit::Kilometre => &[("km", 1.0), ("m", 1e-3)],
            Unit::Seconds => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9)],
            Unit::Hertz => &[
                ("Hz", 1.0),
                ("kHz", 1e3),
                ("MHz", 1e6),
                ("S/s", 1.0),
                ("kS/s", 1e3),
                ("MS/s", 1e6),
            ],
            Unit::Bare => &[("", 1.0)],
        }
    }
}

/// Parse `0.35mH/km`, `10 MHz`, `3` (bare) into SI units.
pub fn parse_quantity(raw: &str, unit: Unit) -> Result<f64> {
    let s = raw.trim().replace('µ', "u");
    let split = s
        .char_indices()
        .find(|(i, c)| {
            !(c.is_ascii_digit()
                || *c == '.'
                || *c == '+'
                || *c == '-'
                || *c == 'e'
                || *c == 'E'
                // a sign is part of the number only right after e/E or at the start
                )
                || (*c == '-' || *c == '+') && *i > 0 && {
                    let prev = s.as_bytes()[i - 1];
                    prev != b'e' && prev != b'E'
                }
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, suffix) = s.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| anyhow!("`{raw}` has no leading number"))?;
    let suffix = suffix.trim();
    for (token, mult) in unit.table() {
        if suffix == *token {
            return Ok(value * mult);
        }
    }
    let expected: Vec<&str> = unit.table().iter().map(|(t, _)| *t).collect();
    if suffix.is_empty() {
        bail!("`{raw}` is missing a unit suffix (expected one of {expected:?})");
    }
    bail!("`{raw}` has unknown unit `{suffix}` (expected one of {expected:?})");
}

/// Raw parsed file: keys in file order with line numbers for diagnostics.
#[derive(Debug, Default, Clone)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            entries.insert(
                key.trim().to_string(),
                (value.trim().to_string(), lineno + 1),
            );
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn take_quantity(&mut self, key: &str, unit: Unit, slot: &mut f64) -> Result<()> {
        if let Some((raw, line)) = self.take(key) {
            *slot = parse_quantity(&raw, unit)
                .with_context(|| format!("line {line}: key `{key}`"))?;
        }
        Ok(())
    }

    /// Error naming every key that was not consumed.
    fn finish(self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            bail!("line {line}: unknown key `{key}`");
        }
        Ok(())
    }
}

/// Everything a run needs: topology, fault, simulation window, sampling,
/// noise and locator settings.
#[derive(Debug, Clone)]
pub struct ScenarioSetup {
    pub topology: NetworkTopology,
    pub fault: FaultSpec,
    pub internal_step: f64,
    /// Quiescent record kept before the inception instant, s.
    pub pre_fault: f64,
    /// Record kept after the inception instant, s.
    pub post_fault: f64,
    pub sample_rate: f64,
    pub noise: NoiseSpec,
    pub locator: LocatorConfig,
}

impl Default for ScenarioSetup {
    fn default() -> Self {
        let topology = default_topology(Configuration::PointToPoint);
        let locator = LocatorConfig::for_topology(&topology);
        Self {
            topology,
            fault: FaultSpec {
                kind: FaultKind::PoleToPole,
                distance_km: 1.0,
                resistance: 1e-3,
                inception_time: 1.0,
            },
            internal_step: 10e-9,
            pre_fault: 50e-6,
            post_fault: 450e-6,
            sample_rate: 10e6,
            noise: NoiseSpec {
                snr_db: f64::INFINITY,
                seed: 0,
            },
            locator,
        }
    }
}

impl ScenarioSetup {
    /// Build a setup from a parsed key-value file, starting from the
    /// configuration's documented defaults.
    pub fn from_keys(mut kv: KeyValues) -> Result<Self> {
        let configuration = match kv.take("configuration") {
            Some((raw, line)) => Configuration::from_str(&raw)
                .map_err(|e| anyhow!("line {line}: {e}"))?,
            None => Configuration::PointToPoint,
        };
        let mut setup = ScenarioSetup {
            topology: default_topology(configuration),
            ..ScenarioSetup::default()
        };
        setup.locator = LocatorConfig::for_topology(&setup.topology);

        kv.take_quantity("cable.r", Unit::OhmPerKm, &mut setup.topology.cable.r_per_km)?;
        kv.take_quantity("cable.l", Unit::HenryPerKm, &mut setup.topology.cable.l_per_km)?;
        kv.take_quantity(
            "cable.length",
            Unit::Kilometre,
            &mut setup.topology.cable.length_km,
        )?;
        if let Some(lengths) = setup.topology.branch_lengths.as_mut() {
            kv.take_quantity("branch.d2", Unit::Kilometre, &mut lengths.d2)?;
            kv.take_quantity("branch.d3", Unit::Kilometre, &mut lengths.d3)?;
            kv.take_quantity("branch.d4", Unit::Kilometre, &mut lengths.d4)?;
            kv.take_quantity("branch.d5", Unit::Kilometre, &mut lengths.d5)?;
            kv.take_quantity("branch.d6", Unit::Kilometre, &mut lengths.d6)?;
            kv.take_quantity("branch.d7", Unit::Kilometre, &mut lengths.d7)?;
        }

        let terminal = |kv: &mut KeyValues,
                            prefix: &str,
                            spec: &mut lvdc::TerminalSpec|
         -> Result<()> {
            kv.take_quantity(
                &format!("{prefix}.capacitance"),
                Unit::Farad,
                &mut spec.bus_capacitance,
            )?;
            kv.take_quantity(
                &format!("{prefix}.clr"),
                Unit::Henry,
                &mut spec.clr_inductance,
            )?;
            kv.take_quantity(
                &format!("{prefix}.grounding"),
                Unit::Ohm,
                &mut spec.grounding_resistance,
            )?;
            kv.take_quantity(
                &format!("{prefix}.voltage"),
                Unit::Volt,
                &mut spec.initial_voltage,
            )?;
            Ok(())
        };
        terminal(&mut kv, "terminal1", &mut setup.topology.terminal_1)?;
        terminal(&mut kv, "terminal2", &mut setup.topology.terminal_2)?;
        // remote.* applies uniformly to buses 3-6
        let mut remote = setup
            .topology
            .remote_terminals
            .first()
            .copied()
            .unwrap_or(setup.topology.terminal_2);
        terminal(&mut kv, "remote", &mut remote)?;
        for r in setup.topology.remote_terminals.iter_mut() {
            *r = remote;
        }

        if let Some((raw, line)) = kv.take("fault.kind") {
            setup.fault.kind =
                FaultKind::from_str(&raw).map_err(|e| anyhow!("line {line}: {e}"))?;
        }
        kv.take_quantity("fault.distance", Unit::Kilometre, &mut setup.fault.distance_km)?;
        kv.take_quantity("fault.resistance", Unit::Ohm, &mut setup.fault.resistance)?;
        kv.take_quantity("fault.inception", Unit::Seconds, &mut setup.fault.inception_time)?;

        kv.take_quantity("sim.step", Unit::Seconds, &mut setup.internal_step)?;
        kv.take_quantity("sim.pre_fault", Unit::Seconds, &mut setup.pre_fault)?;
        kv.take_quantity("sim.post_fault", Unit::Seconds, &mut setup.post_fault)?;
        kv.take_quantity("sample.rate", Unit::Hertz, &mut setup.sample_rate)?;

        if let Some((raw, line)) = kv.take("noise.snr_db") {
            setup.noise.snr_db = parse_snr(&raw).map_err(|e| anyhow!("line {line}: {e}"))?;
        }
        if let Some((raw, line)) = kv.take("noise.seed") {
            setup.noise.seed = raw
                .parse()
                .map_err(|_| anyhow!("line {line}: noise.seed must be an integer"))?;
        }

        if let Some((raw, line)) = kv.take("locator.window") {
            setup.locator.window_samples = raw
                .parse()
                .map_err(|_| anyhow!("line {line}: locator.window must be an integer"))?;
        }
        kv.take_quantity(
            "locator.trigger",
            Unit::Volt,
            &mut setup.locator.trigger_threshold,
        )?;
        kv.take_quantity(
            "locator.plateau_tolerance",
            Unit::Bare,
            &mut setup.locator.plateau_relative_tolerance,
        )?;
        kv.take_quantity(
            "locator.plateau_min_duration",
            Unit::Seconds,
            &mut setup.locator.plateau_min_duration,
        )?;
        kv.take_quantity("locator.span", Unit::Seconds, &mut setup.locator.analysis_span)?;
        if let Some((raw, line)) = kv.take("locator.derivative") {
            setup.locator.derivative_source = match raw.as_str() {
                "clr" => DerivativeSource::ClrVoltage,
                "fd" | "finite-difference" => DerivativeSource::FiniteDifference,
                other => bail!("line {line}: locator.derivative must be clr|fd, got `{other}`"),
            };
        }

        kv.finish()?;
        Ok(setup)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_keys(KeyValues::load(path)?)
    }

    /// Absolute time of the first simulated sample.
    pub fn record_start(&self) -> f64 {
        (self.fault.inception_time - self.pre_fault).max(0.0)
    }

    /// Simulated duration covering pre-roll and post-fault windows.
    pub fn duration(&self) -> f64 {
        (self.fault.inception_time - self.record_start()) + self.post_fault
    }

    /// Deterministic digest of every resolved input.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let t = &self.topology;
        let mut lines: Vec<String> = vec![
            format!("configuration={}", t.configuration.as_str()),
            format!("cable={:?},{:?},{:?}", t.cable.r_per_km, t.cable.l_per_km, t.cable.length_km),
            format!("fault={},{:?},{:?},{:?}", self.fault.kind.as_str(), self.fault.distance_km, self.fault.resistance, self.fault.inception_time),
            format!("sim={:?},{:?},{:?}", self.internal_step, self.pre_fault, self.post_fault),
            format!("sample_rate={:?}", self.sample_rate),
            format!("noise={:?},{}", self.noise.snr_db, self.noise.seed),
            format!(
                "locator={},{:?},{:?},{:?},{:?},{:?}",
                self.locator.window_samples,
                self.locator.trigger_threshold,
                self.locator.plateau_relative_tolerance,
                self.locator.plateau_min_duration,
                self.locator.analysis_span,
                self.locator.derivative_source
            ),
        ];
        let term = |name: &str, s: &lvdc::TerminalSpec| {
            format!(
                "{name}={:?},{:?},{:?},{:?}",
                s.bus_capacitance, s.clr_inductance, s.grounding_resistance, s.initial_voltage
            )
        };
        lines.push(term("terminal1", &t.terminal_1));
        lines.push(term("terminal2", &t.terminal_2));
        for (i, r) in t.remote_terminals.iter().enumerate() {
            lines.push(term(&format!("remote{}", i + 3), r));
        }
        if let Some(b) = t.branch_lengths {
            lines.push(format!("branches={:?}", b.as_array()));
        }
        let mut hasher = Sha256::new();
        for line in lines {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_snr(raw: &str) -> Result<f64> {
    if raw.eq_ignore_ascii_case("inf") || raw.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    raw.parse()
        .map_err(|_| anyhow!("snr must be a number in dB or `inf`, got `{raw}`"))
}

/// Comma-separated list helper for sweep specs.
pub fn parse_list<T>(raw: &str, mut f: impl FnMut(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Result<Vec<T>> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(&mut f)
        .collect();
    let items = items?;
    if items.is_empty() {
        bail!("list must not be empty");
    }
    Ok(items)
}

/// Cross-product sweep specification.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ScenarioSetup,
    pub distances_km: Vec<f64>,
    pub resistances: Vec<f64>,
    pub kinds: Vec<FaultKind>,
    pub windows: Vec<usize>,
    pub sample_rates: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let mut kv = KeyValues::load(path)?;
        let take_list = |kv: &mut KeyValues, key: &str| kv.take(key);

        let distances = take_list(&mut kv, "sweep.distances");
        let resistances = take_list(&mut kv, "sweep.resistances");
        let kinds = take_list(&mut kv, "sweep.kinds");
        let windows = take_list(&mut kv, "sweep.windows");
        let sample_rates = take_list(&mut kv, "sweep.sample_rates");
        let snrs = take_list(&mut kv, "sweep.snr_db");
        let seeds = take_list(&mut kv, "sweep.seeds");

        let base = ScenarioSetup::from_keys(kv)?;

        let raw = |entry: Option<(String, usize)>| entry.map(|(raw, _)| raw);
        let distances_km = match raw(distances) {
            Some(raw) => parse_list(&raw, |s| parse_quantity(s, Unit::Kilometre))
                .context("sweep.distances")?,
            None => vec![base.fault.distance_km],
        };
        let resistances = match raw(resistances) {
            Some(raw) => {
                parse_list(&raw, |s| parse_quantity(s, Unit::Ohm)).context("sweep.resistances")?
            }
            None => vec![base.fault.resistance],
        };
        let kinds = match raw(kinds) {
            Some(raw) => parse_list(&raw, |s| {
                FaultKind::from_str(s).map_err(|e| anyhow!("{e}"))
            })
            .context("sweep.kinds")?,
            None => vec![base.fault.kind],
        };
        let windows = match raw(windows) {
            Some(raw) => parse_list(&raw, |s| {
                s.parse::<usize>().map_err(|_| anyhow!("bad window `{s}`"))
            })
            .context("sweep.windows")?,
            None => vec![base.locator.window_samples],
        };
        let sample_rates = match raw(sample_rates) {
            Some(raw) => parse_list(&raw, |s| parse_quantity(s, Unit::Hertz))
                .context("sweep.sample_rates")?,
            None => vec![base.sample_rate],
        };
        let snr_db = match raw(snrs) {
            Some(raw) => parse_list(&raw, parse_snr).context("sweep.snr_db")?,
            None => vec![base.noise.snr_db],
        };
        let seeds = match raw(seeds) {
            Some(raw) => parse_list(&raw, |s| {
                s.parse::<u64>().map_err(|_| anyhow!("bad seed `{s}`"))
            })
            .context("sweep.seeds")?,
            None => vec![base.noise.seed],
        };

        Ok(SweepSpec {
            base,
            distances_km,
            resistances,
            kinds,
            windows,
            sample_rates,
            snr_db,
            seeds,
        })
    }

    /// All runs in deterministic cross-product order.
    pub fn runs(&self) -> Vec<ScenarioSetup> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &d in &self.distances_km {
                for &rf in &self.resistances {
                    for &w in &self.windows {
                        for &fs in &self.sample_rates {
                            for &snr in &self.snr_db {
                                for &seed in &self.seeds {
                                    let mut run = self.base.clone();
                                    run.fault.kind = kind;
                                    run.fault.distance_km = d;
                                    run.fault.resistance = rf;
                                    run.locator.window_samples = w;
                                    run.sample_rate = fs;
                                    run.noise = NoiseSpec { snr_db: snr, seed };
                                    out.push(run);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
