//! Builders for the simplified LVDC fault discharge networks.
//!
//! The networks model the post-trip condition: converters have tripped on
//! overcurrent, so the only fault current source is the discharging DC bus
//! capacitance behind each terminal's current-limiting reactor (CLR).
//! Cables use a series R-L representation (shunt capacitance of short
//! underground cables is negligible against the millifarad bus banks).
//!
//! Pole-to-pole faults are built as a single-line loop equivalent: both
//! poles of the loop are collapsed onto one rail, which doubles the series
//! elements (2·CLR, 2·r·d, 2·l·d) against the full pole-to-pole voltage.
//! Pole-to-ground faults keep one pole and return through the TN-S
//! mid-point grounding resistances; each pole-to-midpoint bank is twice
//! the converter's pole-to-pole equivalent capacitance charged to half the
//! pole-to-pole voltage.

use crate::engine::{Circuit, GROUND};
use thiserror::Error;

/// Uniform cable constants and the length of one section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableSection {
    /// Resistance per kilometre and pole, Ω/km.
    pub r_per_km: f64,
    /// Inductance per kilometre and pole, H/km.
    pub l_per_km: f64,
    /// Section length in km.
    pub length_km: f64,
}

/// Electrical description of one converter terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalSpec {
    /// Equivalent pole-to-pole DC capacitance of the converter, F.
    pub bus_capacitance: f64,
    /// CLR value per pole, H.
    pub clr_inductance: f64,
    /// TN-S mid-point grounding resistance, Ω (ground-fault return path).
    pub grounding_resistance: f64,
    /// Pole-to-pole operating voltage, V.
    pub initial_voltage: f64,
}

/// Fault classes handled by the locator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    PoleToPole,
    PositivePoleToGround,
    NegativePoleToGround,
}

impl FaultKind {
    /// Number of poles in the measurement loop: 2 for pole-to-pole,
    /// 1 for the single-pole ground-fault loops.
    pub fn pole_count(self) -> usize {
        match self {
            FaultKind::PoleToPole => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::PoleToPole => "ptp",
            FaultKind::PositivePoleToGround => "p-ptg",
            FaultKind::NegativePoleToGround => "n-ptg",
        }
    }
}

impl std::str::FromStr for FaultKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ptp" | "pole-to-pole" => Ok(FaultKind::PoleToPole),
            "p-ptg" | "pptg" => Ok(FaultKind::PositivePoleToGround),
            "n-ptg" | "nptg" => Ok(FaultKind::NegativePoleToGround),
            other => Err(format!("unknown fault kind `{other}`")),
        }
    }
}

/// A fault to apply to the faulted section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Distance from terminal 1 along the faulted section, km.
    pub distance_km: f64,
    /// Fault resistance, Ω (0 is a bolted fault).
    pub resistance: f64,
    /// Inception instant on the simulation time axis, s.
    pub inception_time: f64,
}

/// System layout: a single cable, or the six-bus star.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Configuration {
    PointToPoint,
    MultiTerminal,
}

impl Configuration {
    pub fn as_str(self) -> &'static str {
        match self {
            Configuration::PointToPoint => "point_to_point",
            Configuration::MultiTerminal => "multi_terminal",
        }
    }
}

impl std::str::FromStr for Configuration {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "point_to_point" | "ptp" | "p2p" => Ok(Configuration::PointToPoint),
            "multi_terminal" | "multiterminal" | "mt" => Ok(Configuration::MultiTerminal),
            other => Err(format!("unknown configuration `{other}`")),
        }
    }
}

/// Branch lengths of the multi-terminal star, km. D2 and D3 run from the
/// main junction to buses 2 and 3; D7 runs to a sub-junction that splits
/// into D4, D5, D6 towards buses 4-6.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchLengths {
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub d5: f64,
    pub d6: f64,
    pub d7: f64,
}

impl BranchLengths {
    pub fn as_array(&self) -> [f64; 6] {
        [self.d2, self.d3, self.d4, self.d5, self.d6, self.d7]
    }
}

/// Physical parameters of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub configuration: Configuration,
    /// The faulted section (terminal 1 to terminal 2 / junction), length D1.
    pub cable: CableSection,
    /// Star branch lengths; required for multi-terminal.
    pub branch_lengths: Option<BranchLengths>,
    pub terminal_1: TerminalSpec,
    pub terminal_2: TerminalSpec,
    /// Buses 3-6 of the multi-terminal star.
    pub remote_terminals: Vec<TerminalSpec>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("fault kind {kind} does not match builder for {expected}")]
    KindMismatch { kind: String, expected: String },
    #[error("configuration {got} does not match builder for {expected}")]
    ConfigurationMismatch { got: String, expected: String },
    #[error("fault distance {distance} km outside (0, {d1}) km")]
    DistanceOutOfRange { distance: f64, d1: f64 },
    #[error("fault resistance {0} must be non-negative")]
    NegativeResistance(f64),
    #[error("multi-terminal topology needs branch lengths D2..D7")]
    MissingBranchLengths,
    #[error("multi-terminal topology needs 4 remote terminals, got {0}")]
    WrongRemoteCount(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn validate_topology(t: &NetworkTopology) -> Result<(), ScenarioError> {
    let pos = [
        ("cable.r_per_km", t.cable.r_per_km),
        ("cable.l_per_km", t.cable.l_per_km),
        ("cable.length_km", t.cable.length_km),
    ];
    for (name, v) in pos {
        if !(v > 0.0) {
            return Err(ScenarioError::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let mut terminals = vec![("terminal_1", &t.terminal_1), ("terminal_2", &t.terminal_2)];
    for (i, r) in t.remote_terminals.iter().enumerate() {
        terminals.push(("remote", r));
        let _ = i;
    }
    for (name, term) in terminals {
        if !(term.bus_capacitance > 0.0)
            || !(term.clr_inductance > 0.0)
            || !(term.initial_voltage > 0.0)
            || term.grounding_resistance < 0.0
        {
            return Err(ScenarioError::InvalidParameter(format!(
                "{name}: capacitance/CLR/voltage must be positive, grounding non-negative"
            )));
        }
    }
    if t.configuration == Configuration::MultiTerminal {
        let lengths = t.branch_lengths.ok_or(ScenarioError::MissingBranchLengths)?;
        let [d2, d3, d4, d5, d6, d7] = lengths.as_array();
        for (name, v) in [("D2", d2), ("D3", d3), ("D4", d4), ("D5", d5), ("D6", d6), ("D7", d7)]
        {
            if !(v > 0.0) {
                return Err(ScenarioError::InvalidParameter(format!(
                    "branch length {name} must be positive, got {v}"
                )));
            }
        }
        if t.remote_terminals.len() != 4 {
            return Err(ScenarioError::WrongRemoteCount(t.remote_terminals.len()));
        }
    }
    Ok(())
}

fn validate_fault(t: &NetworkTopology, f: &FaultSpec) -> Result<(), ScenarioError> {
    if !(f.distance_km > 0.0) || f.distance_km >= t.cable.length_km {
        return Err(ScenarioError::DistanceOutOfRange {
            distance: f.distance_km,
            d1: t.cable.length_km,
        });
    }
    if f.resistance < 0.0 {
        return Err(ScenarioError::NegativeResistance(f.resistance));
    }
    Ok(())
}

/// Insert a series R-L cable run between `from` and `to`, doubling the
/// constants by `poles` for single-line loop equivalents.
fn cable_run(c: &mut Circuit, prefix: &str, from: &str, to: &str, cable: &CableSection, length: f64, poles: f64) {
    let mid = format!("{prefix}_m");
    c.resistor(
        &format!("{prefix}_r"),
        from,
        &mid,
        poles * cable.r_per_km * length,
    );
    c.inductor(&format!("{prefix}_l"), &mid, to, poles * cable.l_per_km * length, 0.0);
}

/// Fault branch: R_f in series with an ideal switch to `to`. A bolted
/// fault (R_f = 0) closes straight through the switch.
fn fault_branch(c: &mut Circuit, from: &str, to: &str, fault: &FaultSpec) {
    if fault.resistance > 0.0 {
        c.resistor("fault_r", from, "fault_sw_node", fault.resistance);
        c.switch("fault_sw", "fault_sw_node", to, fault.inception_time);
    } else {
        c.switch("fault_sw", from, to, fault.inception_time);
    }
}

/// Pole-to-pole fault network on a point-to-point cable (single-line loop
/// equivalent, elements doubled).
///
/// Probes: `v1`, `v_dc1`, `i_dc1` at terminal 1; validation probes `v_dc2`,
/// `i_dc2` at terminal 2. The CLR voltage u1 = v1 − v_dc1 is derived at
/// sampling time.
pub fn build_ptp_circuit(
    topology: &NetworkTopology,
    fault: &FaultSpec,
) -> Result<Circuit, ScenarioError> {
    if topology.configuration != Configuration::PointToPoint {
        return Err(ScenarioError::ConfigurationMismatch {
            got: topology.configuration.as_str().into(),
            expected: Configuration::PointToPoint.as_str().into(),
        });
    }
    if fault.kind != FaultKind::PoleToPole {
        return Err(ScenarioError::KindMismatch {
            kind: fault.kind.as_str().into(),
            expected: "ptp".into(),
        });
    }
    validate_topology(topology)?;
    validate_fault(topology, fault)?;

    let (t1, t2, cab) = (&topology.terminal_1, &topology.terminal_2, &topology.cable);
    let d = fault.distance_km;
    let rest = cab.length_km - d;

    let mut c = Circuit::new();
    c.capacitor("c1", "bus1", GROUND, t1.bus_capacitance, t1.initial_voltage);
    c.inductor("clr1", "bus1", "cab1", 2.0 * t1.clr_inductance, 0.0);
    cable_run(&mut c, "cable1", "cab1", "flt", cab, d, 2.0);
    fault_branch(&mut c, "flt", GROUND, fault);
    cable_run(&mut c, "cable2", "cab2", "flt", cab, rest, 2.0);
    c.inductor("clr2", "bus2", "cab2", 2.0 * t2.clr_inductance, 0.0);
    c.capacitor("c2", "bus2", GROUND, t2.bus_capacitance, t2.initial_voltage);

    c.probe_voltage("v1", "bus1", GROUND);
    c.probe_voltage("v_dc1", "cab1", GROUND);
    c.probe_current("i_dc1", "clr1");
    c.probe_current("i_dc2", "clr2");
    c.probe_voltage("v_dc2", "cab2", GROUND);
    Ok(c)
}

/// Pole-to-ground fault network on a point-to-point cable: one pole per
/// side, TN-S half banks (2·C at half voltage), ground return through the
/// terminal grounding resistances. The negative-pole variant is the same
/// network with all initial voltages negated.
pub fn build_ptg_circuit(
    topology: &NetworkTopology,
    fault: &FaultSpec,
) -> Result<Circuit, ScenarioError> {
    if topology.configuration != Configuration::PointToPoint {
        return Err(ScenarioError::ConfigurationMismatch {
            got: topology.configuration.as_str().into(),
            expected: Configuration::PointToPoint.as_str().into(),
        });
    }
    let sign = match fault.kind {
        FaultKind::PositivePoleToGround => 1.0,
        FaultKind::NegativePoleToGround => -1.0,
        FaultKind::PoleToPole => {
            return Err(ScenarioError::KindMismatch {
                kind: fault.kind.as_str().into(),
                expected: "p-ptg or n-ptg".into(),
            })
        }
    };
    validate_topology(topology)?;
    validate_fault(topology, fault)?;

    let (t1, t2, cab) = (&topology.terminal_1, &topology.terminal_2, &topology.cable);
    let d = fault.distance_km;
    let rest = cab.length_km - d;

    let mut c = Circuit::new();
    // Terminal 1: half bank behind the faulty pole's CLR, midpoint earthed.
    c.capacitor(
        "c1",
        "bus1",
        "mid1",
        2.0 * t1.bus_capacitance,
        sign * 0.5 * t1.initial_voltage,
    );
    c.resistor("rg1", "mid1", GROUND, t1.grounding_resistance);
    c.inductor("clr1", "bus1", "cab1", t1.clr_inductance, 0.0);
    cable_run(&mut c, "cable1", "cab1", "flt", cab, d, 1.0);
    fault_branch(&mut c, "flt", GROUND, fault);
    cable_run(&mut c, "cable2", "cab2", "flt", cab, rest, 1.0);
    c.inductor("clr2", "bus2", "cab2", t2.clr_inductance, 0.0);
    c.capacitor(
        "c2",
        "bus2",
        "mid2",
        2.0 * t2.bus_capacitance,
        sign * 0.5 * t2.initial_voltage,
    );
    c.resistor("rg2", "mid2", GROUND, t2.grounding_resistance);

    // Bank-referenced voltages so v_dc1 includes the ground-return drop.
    c.probe_voltage("v1", "bus1", "mid1");
    c.probe_voltage("v_dc1", "cab1", "mid1");
    c.probe_current("i_dc1", "clr1");
    c.probe_current("i_dc2", "clr2");
    c.probe_voltage("v_dc2", "cab2", "mid2");
    Ok(c)
}

/// Multi-terminal star network: faulted section D1 from terminal 1 to a
/// junction; branches D2, D3 to buses 2-3; D7 to a sub-junction feeding
/// D4, D5, D6 (buses 4-6). Remote buses are their bank capacitance behind
/// their terminal inductance. Supports all fault kinds; ground faults use
/// the TN-S half banks at every bus.
pub fn build_multiterminal_circuit(
    topology: &NetworkTopology,
    fault: &FaultSpec,
) -> Result<Circuit, ScenarioError> {
    if topology.configuration != Configuration::MultiTerminal {
        return Err(ScenarioError::ConfigurationMismatch {
            got: topology.configuration.as_str().into(),
            expected: Configuration::MultiTerminal.as_str().into(),
        });
    }
    validate_topology(topology)?;
    validate_fault(topology, fault)?;

    let cab = &topology.cable;
    let lengths = topology.branch_lengths.unwrap();
    let d = fault.distance_km;
    let rest = cab.length_km - d;
    let (sign, poles) = match fault.kind {
        FaultKind::PoleToPole => (1.0, 2.0),
        FaultKind::PositivePoleToGround => (1.0, 1.0),
        FaultKind::NegativePoleToGround => (-1.0, 1.0),
    };
    let ground_fault = fault.kind != FaultKind::PoleToPole;

    let mut c = Circuit::new();
    // One terminal subcircuit per bus: bank + terminal inductance.
    let terminal = |c: &mut Circuit, idx: usize, spec: &TerminalSpec, cable_node: &str| {
        let bus = format!("bus{idx}");
        if ground_fault {
            let mid = format!("mid{idx}");
            c.capacitor(
                &format!("c{idx}"),
                &bus,
                &mid,
                2.0 * spec.bus_capacitance,
                sign * 0.5 * spec.initial_voltage,
            );
            c.resistor(&format!("rg{idx}"), &mid, GROUND, spec.grounding_resistance);
        } else {
            c.capacitor(
                &format!("c{idx}"),
                &bus,
                GROUND,
                spec.bus_capacitance,
                spec.initial_voltage,
            );
        }
        c.inductor(
            &format!("clr{idx}"),
            &bus,
            cable_node,
            poles * spec.clr_inductance,
            0.0,
        );
    };

    terminal(&mut c, 1, &topology.terminal_1, "cab1");
    cable_run(&mut c, "cable1", "cab1", "flt", cab, d, poles);
    fault_branch(&mut c, "flt", GROUND, fault);
    cable_run(&mut c, "cable1b", "junc", "flt", cab, rest, poles);

    terminal(&mut c, 2, &topology.terminal_2, "cab2");
    cable_run(&mut c, "cable2", "cab2", "junc", cab, lengths.d2, poles);
    terminal(&mut c, 3, &topology.remote_terminals[0], "cab3");
    cable_run(&mut c, "cable3", "cab3", "junc", cab, lengths.d3, poles);
    cable_run(&mut c, "cable7", "junc2", "junc", cab, lengths.d7, poles);
    for (k, spec) in topology.remote_terminals[1..].iter().enumerate() {
        let idx = k + 4;
        terminal(&mut c, idx, spec, &format!("cab{idx}"));
        cable_run(
            &mut c,
            &format!("cable{idx}"),
            &format!("cab{idx}"),
            "junc2",
            cab,
            [lengths.d4, lengths.d5, lengths.d6][k],
            poles,
        );
    }

    let reference = |idx: usize| {
        if ground_fault {
            format!("mid{idx}")
        } else {
            GROUND.to_string()
        }
    };
    c.probe_voltage("v1", "bus1", &reference(1));
    c.probe_voltage("v_dc1", "cab1", &reference(1));
    c.probe_current("i_dc1", "clr1");
    c.probe_current("i_dc2", "clr2");
    c.probe_voltage("v_dc2", "cab2", &reference(2));
    for idx in 3..=6 {
        c.probe_current(&format!("i_dc{idx}"), &format!("clr{idx}"));
    }
    Ok(c)
}

/// Documented default parameter sets.
///
/// Values stated by the system description: ±380 V poles (760 V
/// pole-to-pole), faulted-section length 2 km, converter DC capacitance
/// in the mF range (5 mF here). Cable constants, terminal inductances,
/// grounding resistances and star branch lengths are engineering defaults
/// chosen for a typical LVDC XLPE cable plant and are configurable:
///
/// * cable: r = 0.25 Ω/km, l = 0.35 mH/km per pole;
/// * point-to-point terminals carry 1 mH CLRs per pole;
/// * multi-terminal buses have no dedicated CLRs (the star layout feeds
///   several cables per bus), only 10 µH of residual bus inductance;
/// * grounding resistance 0.2 Ω per terminal (low-resistive earthing);
/// * star branch lengths D2..D7 = {2, 1.5, 1, 1, 2, 0.2} km.
pub fn default_topology(configuration: Configuration) -> NetworkTopology {
    let cable = CableSection {
        r_per_km: 0.25,
        l_per_km: 0.35e-3,
        length_km: 2.0,
    };
    match configuration {
        Configuration::PointToPoint => {
            let term = TerminalSpec {
                bus_capacitance: 5e-3,
                clr_inductance: 1e-3,
                grounding_resistance: 0.2,
                initial_voltage: 760.0,
            };
            NetworkTopology {
                configuration,
                cable,
                branch_lengths: None,
                terminal_1: term,
                terminal_2: term,
                remote_terminals: Vec::new(),
            }
        }
        Configuration::MultiTerminal => {
            let term = TerminalSpec {
                bus_capacitance: 5e-3,
                clr_inductance: 10e-6,
                grounding_resistance: 0.2,
                initial_voltage: 760.0,
            };
            NetworkTopology {
                configuration,
                cable,
                branch_lengths: Some(BranchLengths {
                    d2: 2.0,
                    d3: 1.5,
                    d4: 1.0,
                    d5: 1.0,
                    d6: 2.0,
                    d7: 0.2,
                }),
                terminal_1: term,
                terminal_2: term,
                remote_terminals: vec![term; 4],
            }
        }
    }
}

/// Dispatch to the right builder for the topology/fault combination.
pub fn build_circuit(
    topology: &NetworkTopology,
    fault: &FaultSpec,
) -> Result<Circuit, ScenarioError> {
    match (topology.configuration, fault.kind) {
        (Configuration::PointToPoint, FaultKind::PoleToPole) => build_ptp_circuit(topology, fault),
        (Configuration::PointToPoint, _) => build_ptg_circuit(topology, fault),
        (Configuration::MultiTerminal, _) => build_multiterminal_circuit(topology, fault),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{assemble, simulate};

    fn ptp_fault(d: f64, rf: f64) -> FaultSpec {
        FaultSpec {
            kind: FaultKind::PoleToPole,
            distance_km: d,
            resistance: rf,
            inception_time: 20e-6,
        }
    }

    #[test]
    fn default_ptp_is_a_four_state_system() {
        let topo = default_topology(Configuration::PointToPoint);
        let circuit = build_ptp_circuit(&topo, &ptp_fault(1.0, 1e-3)).unwrap();
        let sys = assemble(&circuit).unwrap();
        // two bank voltages + two independent loop currents
        assert_eq!(sys.state_count(), 4);
    }

    #[test]
    fn defaults_match_the_documented_values() {
        let topo = default_topology(Configuration::PointToPoint);
        assert_eq!(topo.cable.length_km, 2.0);
        assert_eq!(topo.terminal_1.initial_voltage, 760.0);
        assert_eq!(topo.terminal_1, topo.terminal_2);

        let mt = default_topology(Configuration::MultiTerminal);
        let lengths = mt.branch_lengths.unwrap();
        assert!(lengths.as_array().iter().all(|&d| d > 0.0));
        assert_eq!(mt.remote_terminals.len(), 4);
        assert_eq!(mt.terminal_1.initial_voltage, 760.0);
    }

    #[test]
    fn midpoint_fault_discharges_symmetrically() {
        let topo = default_topology(Configuration::PointToPoint);
        let circuit = build_ptp_circuit(&topo, &ptp_fault(1.0, 1e-3)).unwrap();
        let trace = simulate(&circuit, 200e-6, 10e-9).unwrap();
        let i1 = trace.channel("i_dc1").unwrap();
        let i2 = trace.channel("i_dc2").unwrap();
        let peak = i1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in i1.iter().zip(i2) {
            assert!((a - b).abs() <= 1e-6 * peak, "asymmetry {a} vs {b}");
        }
    }

    #[test]
    fn ptg_midpoint_fault_discharges_symmetrically() {
        let topo = default_topology(Configuration::PointToPoint);
        let fault = FaultSpec {
            kind: FaultKind::PositivePoleToGround,
            distance_km: 1.0,
            resistance: 1e-3,
            inception_time: 20e-6,
        };
        let circuit = build_ptg_circuit(&topo, &fault).unwrap();
        let trace = simulate(&circuit, 200e-6, 10e-9).unwrap();
        let i1 = trace.channel("i_dc1").unwrap();
        let i2 = trace.channel("i_dc2").unwrap();
        let peak = i1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in i1.iter().zip(i2) {
            assert!((a - b).abs() <= 1e-6 * peak);
        }
    }

    #[test]
    fn negative_pole_fault_mirrors_the_positive_one() {
        let topo = default_topology(Configuration::PointToPoint);
        let mut fault = FaultSpec {
            kind: FaultKind::PositivePoleToGround,
            distance_km: 0.7,
            resistance: 0.5,
            inception_time: 20e-6,
        };
        let pos = simulate(&build_ptg_circuit(&topo, &fault).unwrap(), 100e-6, 10e-9).unwrap();
        fault.kind = FaultKind::NegativePoleToGround;
        let neg = simulate(&build_ptg_circuit(&topo, &fault).unwrap(), 100e-6, 10e-9).unwrap();
        for name in ["v1", "v_dc1", "i_dc1"] {
            let p = pos.channel(name).unwrap();
            let n = neg.channel(name).unwrap();
            let peak = p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (a, b) in p.iter().zip(n) {
                assert!((a + b).abs() <= 1e-9 * peak, "channel {name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn higher_fault_resistance_means_lower_peak_current() {
        let topo = default_topology(Configuration::PointToPoint);
        let peak = |rf: f64| {
            let fault = FaultSpec {
                kind: FaultKind::PositivePoleToGround,
                distance_km: 0.5,
                resistance: rf,
                inception_time: 10e-6,
            };
            let trace = simulate(&build_ptg_circuit(&topo, &fault).unwrap(), 300e-6, 50e-9).unwrap();
            trace
                .channel("i_dc1")
                .unwrap()
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()))
        };
        let (a, b, c) = (peak(1e-3), peak(1.0), peak(5.0));
        assert!(a > b && b > c, "peaks {a}, {b}, {c} not strictly decreasing");
    }

    #[test]
    fn discharge_raises_current_and_drops_cable_voltage() {
        // first 50 us after inception: i_dc1 strictly rising from zero,
        // v_dc1 stepped down from the bus voltage and staying below it
        let topo = default_topology(Configuration::PointToPoint);
        let circuit = build_ptp_circuit(&topo, &ptp_fault(1.0, 1e-3)).unwrap();
        let trace = simulate(&circuit, 70e-6, 10e-9).unwrap();
        let k0 = (20e-6f64 / 10e-9).round() as usize;
        let k1 = (70e-6f64 / 10e-9).round() as usize;
        let i1 = trace.channel("i_dc1").unwrap();
        let v1 = trace.channel("v1").unwrap();
        let vdc = trace.channel("v_dc1").unwrap();
        for k in k0 + 1..k1 {
            assert!(i1[k] > i1[k - 1], "i_dc1 not rising at step {k}");
            assert!(vdc[k] < v1[k], "v_dc1 not depressed at step {k}");
        }
        assert!(vdc[k0] < 0.5 * v1[k0], "inception step missing");
    }

    #[test]
    fn all_probe_currents_are_quiescent_before_inception() {
        let topo = default_topology(Configuration::PointToPoint);
        let circuit = build_ptp_circuit(&topo, &ptp_fault(0.6, 1.0)).unwrap();
        let trace = simulate(&circuit, 40e-6, 10e-9).unwrap();
        let pre = (20e-6f64 / 10e-9).round() as usize;
        for name in ["i_dc1", "i_dc2"] {
            let ch = trace.channel(name).unwrap();
            for &x in &ch[..pre] {
                assert!(x.abs() < 1e-12, "{name} nonzero before inception: {x}");
            }
        }
        // and the cable side floats at the bus voltage
        let v1 = trace.channel("v1").unwrap();
        let vdc = trace.channel("v_dc1").unwrap();
        for k in 0..pre {
            assert!((v1[k] - 760.0).abs() < 1e-9);
            assert!((v1[k] - vdc[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn near_terminal_fault_puts_the_whole_step_on_the_clr() {
        // d -> 0: the inductive divider leaves u1(0+) ~= v1(0+)·L1/(L1+l·d).
        let topo = default_topology(Configuration::PointToPoint);
        let circuit = build_ptp_circuit(&topo, &ptp_fault(0.001, 1e-3)).unwrap();
        let trace = simulate(&circuit, 30e-6, 10e-9).unwrap();
        let k = (20e-6f64 / 10e-9).round() as usize;
        let v1 = trace.channel("v1").unwrap();
        let vdc = trace.channel("v_dc1").unwrap();
        let u1 = v1[k] - vdc[k];
        let l1 = topo.terminal_1.clr_inductance;
        let ld = topo.cable.l_per_km * 0.001;
        let expected = v1[k] * l1 / (l1 + ld);
        assert!(
            ((u1 - expected) / expected).abs() < 0.01,
            "u1(0+) = {u1}, divider predicts {expected}"
        );
    }

    #[test]
    fn multiterminal_fault_current_obeys_kcl() {
        let topo = default_topology(Configuration::MultiTerminal);
        let fault = ptp_fault(1.0, 1e-3);
        let circuit = build_multiterminal_circuit(&topo, &fault).unwrap();
        let trace = simulate(&circuit, 100e-6, 10e-9).unwrap();
        let i1 = trace.channel("i_dc1").unwrap();
        let sum_remote: Vec<f64> = (0..trace.len())
            .map(|k| {
                (2..=6)
                    .map(|idx| trace.channel(&format!("i_dc{idx}")).unwrap()[k])
                    .sum()
            })
            .collect();
        // i1 + sum(remotes) feeds the fault; check against the voltage over R_f
        let fault_i: Vec<f64> = {
            let v = trace.channel("v_dc1").unwrap();
            let _ = v;
            // reconstruct from KCL instead: cable currents at the fault node
            (0..trace.len()).map(|k| i1[k] + sum_remote[k]).collect()
        };
        let peak = fault_i.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        // after inception the fault current is the sum and strictly positive
        let k_inc = (20e-6f64 / 10e-9).round() as usize;
        assert!(fault_i[k_inc + 2000..].iter().all(|&x| x > 0.0));
        assert!(peak > 0.0);
    }

    #[test]
    fn no_fault_means_equilibrium() {
        // all banks at the same voltage, fault never closes -> all currents 0
        let topo = default_topology(Configuration::MultiTerminal);
        let fault = FaultSpec {
            kind: FaultKind::PoleToPole,
            distance_km: 1.0,
            resistance: 1e-3,
            inception_time: 1.0, // beyond the simulated window
        };
        let circuit = build_multiterminal_circuit(&topo, &fault).unwrap();
        let trace = simulate(&circuit, 50e-6, 10e-9).unwrap();
        for idx in [1, 2, 3, 4, 5, 6] {
            let ch = trace.channel(&format!("i_dc{idx}")).unwrap();
            assert!(ch.iter().all(|&x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn builder_preconditions_are_enforced() {
        let topo = default_topology(Configuration::PointToPoint);
        let mut fault = ptp_fault(1.0, 1e-3);
        fault.kind = FaultKind::PositivePoleToGround;
        assert!(matches!(
            build_ptp_circuit(&topo, &fault),
            Err(ScenarioError::KindMismatch { .. })
        ));
        assert!(matches!(
            build_ptg_circuit(&topo, &ptp_fault(1.0, 1e-3)),
            Err(ScenarioError::KindMismatch { .. })
        ));
        assert!(matches!(
            build_ptp_circuit(&topo, &ptp_fault(2.5, 1e-3)),
            Err(ScenarioError::DistanceOutOfRange { .. })
        ));
        assert!(matches!(
            build_multiterminal_circuit(&topo, &ptp_fault(1.0, 1e-3)),
            Err(ScenarioError::ConfigurationMismatch { .. })
        ));
        let mt = default_topology(Configuration::MultiTerminal);
        assert!(matches!(
            build_ptp_circuit(&mt, &ptp_fault(1.0, 1e-3)),
            Err(ScenarioError::ConfigurationMismatch { .. })
        ));
    }

    #[test]
    fn every_built_circuit_assembles() {
        for config in [Configuration::PointToPoint, Configuration::MultiTerminal] {
            let topo = default_topology(config);
            for kind in [
                FaultKind::PoleToPole,
                FaultKind::PositivePoleToGround,
                FaultKind::NegativePoleToGround,
            ] {
                for d in [0.1, 1.0, 1.9] {
                    for rf in [0.0, 1e-3, 5.0] {
                        let fault = FaultSpec {
                            kind,
                            distance_km: d,
                            resistance: rf,
                            inception_time: 1e-5,
                        };
                        let circuit = build_circuit(&topo, &fault).unwrap();
                        assemble(&circuit).unwrap_or_else(|e| {
                            panic!("{config:?}/{kind:?} d={d} rf={rf}: {e}")
                        });
                    }
                }
            }
        }
    }
}
