//! Fixed-step transient simulator for linear circuits with ideal switches.
//!
//! Circuits are described as a netlist of two-terminal branches (R, L, C,
//! ideal switch) over named nodes and assembled into a nodal system using
//! trapezoidal companion models for the reactive elements. The trapezoidal
//! rule is A-stable and second-order, which is what a stiff discharge
//! network with millihenry reactors against microsecond observation
//! windows needs.
//!
//! Switches are ideal: an open switch is simply absent from the system, a
//! closed one is a [`CLOSED_SWITCH_RESISTANCE`] resistor. Switch events are
//! snapped to the internal time grid; at an event the system matrix is
//! re-factorized and the algebraic (node-voltage) part of the solution is
//! recomputed from the continuous states, so inductor currents and
//! capacitor voltages carry across the event unchanged.

use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use thiserror::Error;

/// Resistance of a closed ideal switch, three orders of magnitude below
/// the smallest fault resistance of interest (1 mΩ).
pub const CLOSED_SWITCH_RESISTANCE: f64 = 1e-6;

/// Time constant of the regularizing leak across inductors in the
/// algebraic consistency solve: an inductor of value L gets a conductance
/// `SNAPSHOT_LEAK_EPS / L`, the h → 0 limit of its trapezoidal companion.
/// An inductor is otherwise a pure current source there, which leaves node
/// groups reached only through inductors (or open switches) with
/// undetermined voltage; the 1/L weighting makes instantaneous voltage
/// steps divide across series inductors in proportion to inductance, the
/// physical inductive divider. It is not used while stepping.
const SNAPSHOT_LEAK_EPS: f64 = 1e-12;

/// Element kind of a [`Branch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    /// Resistance in Ω. A value of exactly 0 models a bolted connection
    /// and is replaced by a node merge at assembly time.
    Resistor,
    /// Inductance in H; `initial_state` is the branch current in A.
    Inductor,
    /// Capacitance in F; `initial_state` is the branch voltage in V.
    Capacitor,
    /// Ideal switch, open until `switch_close_time` (closed from the start
    /// when that time is ≤ 0).
    Switch,
}

/// A two-terminal netlist element between two named nodes.
#[derive(Debug, Clone)]
pub struct Branch {
    pub name: String,
    pub kind: BranchKind,
    pub node_a: String,
    pub node_b: String,
    /// Element value in SI units (Ω, H, F); unused for switches.
    pub value: f64,
    /// Inductor current (A) or capacitor voltage (V) at t = 0.
    pub initial_state: f64,
    /// Closing instant in seconds (switches only).
    pub switch_close_time: f64,
}

#[derive(Debug, Clone)]
enum ProbeKind {
    /// Voltage between two named nodes.
    Voltage { a: String, b: String },
    /// Current through a named branch, positive from `node_a` to `node_b`.
    Current { branch: String },
}

/// A named quantity to record at every internal step.
#[derive(Debug, Clone)]
pub struct Probe {
    name: String,
    kind: ProbeKind,
}

/// Netlist plus probe plan; input to [`assemble`] / [`simulate`].
#[derive(Debug, Clone, Default)]
pub struct Circuit {
    branches: Vec<Branch>,
    probes: Vec<Probe>,
}

/// Name of the designated ground/reference node.
pub const GROUND: &str = "gnd";

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    fn add_branch(
        &mut self,
        name: &str,
        kind: BranchKind,
        a: &str,
        b: &str,
        value: f64,
        initial_state: f64,
        close_time: f64,
    ) {
        self.branches.push(Branch {
            name: name.to_string(),
            kind,
            node_a: a.to_string(),
            node_b: b.to_string(),
            value,
            initial_state,
            switch_close_time: close_time,
        });
    }

    pub fn resistor(&mut self, name: &str, a: &str, b: &str, ohms: f64) {
        self.add_branch(name, BranchKind::Resistor, a, b, ohms, 0.0, 0.0);
    }

    pub fn inductor(&mut self, name: &str, a: &str, b: &str, henries: f64, initial_current: f64) {
        self.add_branch(name, BranchKind::Inductor, a, b, henries, initial_current, 0.0);
    }

    pub fn capacitor(&mut self, name: &str, a: &str, b: &str, farads: f64, initial_voltage: f64) {
        self.add_branch(name, BranchKind::Capacitor, a, b, farads, initial_voltage, 0.0);
    }

    pub fn switch(&mut self, name: &str, a: &str, b: &str, close_time: f64) {
        self.add_branch(name, BranchKind::Switch, a, b, 0.0, 0.0, close_time);
    }

    /// Record the voltage `v(a) - v(b)` under `name`.
    pub fn probe_voltage(&mut self, name: &str, a: &str, b: &str) {
        self.probes.push(Probe {
            name: name.to_string(),
            kind: ProbeKind::Voltage {
                a: a.to_string(),
                b: b.to_string(),
            },
        });
    }

    /// Record the current through branch `branch` (positive a → b) under `name`.
    pub fn probe_current(&mut self, name: &str, branch: &str) {
        self.probes.push(Probe {
            name: name.to_string(),
            kind: ProbeKind::Current {
                branch: branch.to_string(),
            },
        });
    }

    /// Add a probe for every branch current and every capacitor voltage,
    /// named `i(<branch>)` and `v(<branch>)`. Used for energy accounting.
    pub fn probe_all_elements(&mut self) {
        for br in self.branches.clone() {
            self.probe_current(&format!("i({})", br.name), &br.name);
            if br.kind == BranchKind::Capacitor {
                self.probe_voltage(&format!("v({})", br.name), &br.node_a, &br.node_b);
            }
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }
}

/// Errors raised while assembling or stepping a circuit.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("circuit has no branches")]
    EmptyCircuit,
    #[error("branch {0} connects node {1} to itself")]
    SelfLoop(String, String),
    #[error("branch {name} has non-positive value {value}")]
    NonPositiveValue { name: String, value: f64 },
    #[error("node {0} has no path to ground")]
    Disconnected(String),
    #[error("duplicate probe name {0}")]
    DuplicateProbe(String),
    #[error("probe {probe} references unknown {what} {target}")]
    UnknownProbeTarget {
        probe: String,
        what: &'static str,
        target: String,
    },
    #[error("internal step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("duration {duration} is shorter than one internal step {step}")]
    DurationTooShort { duration: f64, step: f64 },
    #[error("singular system while {context}: check for floating nodes or inconsistent sources")]
    Singular { context: String },
}

// ---------------------------------------------------------------------------
// Assembled system
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct ResolvedBranch {
    kind: BranchKind,
    /// Node indices after ground elimination and bolted-resistor merges;
    /// `None` is ground.
    a: Option<usize>,
    b: Option<usize>,
    value: f64,
    initial_state: f64,
    close_time: f64,
}

#[derive(Debug, Clone)]
enum ResolvedProbe {
    Voltage(Option<usize>, Option<usize>),
    Current(usize),
}

/// A circuit validated and resolved for stepping: merged topology, probe
/// plan and switch schedule.
#[derive(Debug, Clone)]
pub struct TransientSystem {
    /// Number of non-ground nodes after merges.
    node_count: usize,
    branches: Vec<ResolvedBranch>,
    probe_names: Vec<String>,
    probes: Vec<ResolvedProbe>,
    state_count: usize,
}

/// Uniformly sampled record of every probe on the internal time grid.
#[derive(Debug, Clone)]
pub struct RawTrace {
    pub internal_step: f64,
    pub duration: f64,
    names: Vec<String>,
    data: Vec<Vec<f64>>,
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn probe_names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.data[i].as_slice())
    }

    /// Time of sample `idx` on the internal grid.
    pub fn time(&self, idx: usize) -> f64 {
        idx as f64 * self.internal_step
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, i: usize) -> usize {
        if self.0[i] != i {
            let r = self.find(self.0[i]);
            self.0[i] = r;
            r
        } else {
            i
        }
    }
    fn union(&mut self, i: usize, j: usize) {
        let (ri, rj) = (self.find(i), self.find(j));
        if ri != rj {
            self.0[ri] = rj;
        }
    }
}

/// Validate a circuit and resolve it into a steppable system.
///
/// Zero-ohm resistors are replaced by node merges. The returned system
/// reports its dynamic order through [`TransientSystem::state_count`].
pub fn assemble(circuit: &Circuit) -> Result<TransientSystem, EngineError> {
    if circuit.branches.is_empty() {
        return Err(EngineError::EmptyCircuit);
    }

    // Collect node names; ground is index 0 in the raw numbering.
    let mut ids: HashMap<&str, usize> = HashMap::new();
    ids.insert(GROUND, 0);
    let mut names: Vec<&str> = vec![GROUND];
    for br in &circuit.branches {
        for n in [br.node_a.as_str(), br.node_b.as_str()] {
            if !ids.contains_key(n) {
                ids.insert(n, names.len());
                names.push(n);
            }
        }
        if br.node_a == br.node_b {
            return Err(EngineError::SelfLoop(br.name.clone(), br.node_a.clone()));
        }
        let value_ok = match br.kind {
            BranchKind::Switch => true,
            BranchKind::Resistor => br.value >= 0.0,
            _ => br.value > 0.0,
        };
        if !value_ok || !br.value.is_finite() {
            return Err(EngineError::NonPositiveValue {
                name: br.name.clone(),
                value: br.value,
            });
        }
    }

    // Merge bolted connections (R = 0).
    let mut uf = UnionFind::new(names.len());
    for br in &circuit.branches {
        if br.kind == BranchKind::Resistor && br.value == 0.0 {
            uf.union(ids[br.node_a.as_str()], ids[br.node_b.as_str()]);
        }
    }

    // Compact the merged numbering; ground's class maps to None.
    let ground_root = uf.find(0);
    let mut compact: HashMap<usize, usize> = HashMap::new();
    let mut resolve = |uf: &mut UnionFind, raw: usize| -> Option<usize> {
        let root = uf.find(raw);
        if root == ground_root {
            None
        } else {
            let next = compact.len();
            Some(*compact.entry(root).or_insert(next))
        }
    };

    let mut branches = Vec::new();
    for br in &circuit.branches {
        if br.kind == BranchKind::Resistor && br.value == 0.0 {
            continue;
        }
        let a = resolve(&mut uf, ids[br.node_a.as_str()]);
        let b = resolve(&mut uf, ids[br.node_b.as_str()]);
        if a == b {
            // merged into the same electrical node
            return Err(EngineError::SelfLoop(br.name.clone(), br.node_a.clone()));
        }
        branches.push(ResolvedBranch {
            kind: br.kind,
            a,
            b,
            value: br.value,
            initial_state: br.initial_state,
            close_time: br.switch_close_time,
        });
    }
    let node_count = compact.len();

    // Connectivity: every node must reach ground through some element
    // (switches count; they conduct once closed).
    let mut conn = UnionFind::new(node_count + 1); // slot 0 = ground
    let slot = |n: Option<usize>| n.map_or(0, |i| i + 1);
    for br in &branches {
        conn.union(slot(br.a), slot(br.b));
    }
    let groot = conn.find(0);
    for i in 0..node_count {
        if conn.find(i + 1) != groot {
            let name = circuit
                .branches
                .iter()
                .flat_map(|b| [b.node_a.as_str(), b.node_b.as_str()])
                .find(|n| {
                    *n != GROUND && resolve_readonly(&mut uf, ids[*n], ground_root, &compact) == Some(i)
                })
                .unwrap_or("?");
            return Err(EngineError::Disconnected(name.to_string()));
        }
    }

    // Probes.
    let mut probe_names = Vec::new();
    let mut probes = Vec::new();
    for p in &circuit.probes {
        if probe_names.contains(&p.name) {
            return Err(EngineError::DuplicateProbe(p.name.clone()));
        }
        let rp = match &p.kind {
            ProbeKind::Voltage { a, b } => {
                let mut look = |n: &str| -> Result<Option<usize>, EngineError> {
                    match ids.get(n) {
                        Some(&raw) => Ok(resolve_readonly(&mut uf, raw, ground_root, &compact)),
                        None => Err(EngineError::UnknownProbeTarget {
                            probe: p.name.clone(),
                            what: "node",
                            target: n.to_string(),
                        }),
                    }
                };
                ResolvedProbe::Voltage(look(a)?, look(b)?)
            }
            ProbeKind::Current { branch } => {
                let idx = circuit
                    .branches
                    .iter()
                    .filter(|b| !(b.kind == BranchKind::Resistor && b.value == 0.0))
                    .position(|b| &b.name == branch)
                    .ok_or_else(|| EngineError::UnknownProbeTarget {
                        probe: p.name.clone(),
                        what: "branch",
                        target: branch.clone(),
                    })?;
                ResolvedProbe::Current(idx)
            }
        };
        probe_names.push(p.name.clone());
        probes.push(rp);
    }

    let state_count = dynamic_order(node_count, &branches);

    Ok(TransientSystem {
        node_count,
        branches,
        probe_names,
        probes,
        state_count,
    })
}

fn resolve_readonly(
    uf: &mut UnionFind,
    raw: usize,
    ground_root: usize,
    compact: &HashMap<usize, usize>,
) -> Option<usize> {
    let root = uf.find(raw);
    if root == ground_root {
        None
    } else {
        compact.get(&root).copied()
    }
}

/// Dynamic order of the network with every switch closed: one state per
/// capacitor and inductor, minus capacitor-only loops and inductor
/// cutsets (the standard order-of-complexity count).
fn dynamic_order(node_count: usize, branches: &[ResolvedBranch]) -> usize {
    let slot = |n: Option<usize>| n.map_or(0, |i| i + 1);
    let n_c = branches
        .iter()
        .filter(|b| b.kind == BranchKind::Capacitor)
        .count();
    let n_l = branches
        .iter()
        .filter(|b| b.kind == BranchKind::Inductor)
        .count();

    // Excess capacitors: cycle rank of the capacitor subgraph.
    let mut cuf = UnionFind::new(node_count + 1);
    let mut c_loops = 0;
    for b in branches.iter().filter(|b| b.kind == BranchKind::Capacitor) {
        let (x, y) = (slot(b.a), slot(b.b));
        if cuf.find(x) == cuf.find(y) {
            c_loops += 1;
        } else {
            cuf.union(x, y);
        }
    }

    // Excess inductors: extra components created by deleting all inductors.
    let mut luf = UnionFind::new(node_count + 1);
    for b in branches.iter().filter(|b| b.kind != BranchKind::Inductor) {
        luf.union(slot(b.a), slot(b.b));
    }
    let mut seen = Vec::new();
    for i in 0..=node_count {
        let r = luf.find(i);
        if !seen.contains(&r) {
            seen.push(r);
        }
    }
    let l_cutsets = seen.len() - 1; // full graph is connected

    n_c + n_l - c_loops - l_cutsets
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

impl TransientSystem {
    /// Non-ground electrical nodes after bolted merges.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Independent dynamic states (evaluated with all switches closed).
    pub fn state_count(&self) -> usize {
        self.state_count
    }

    /// Integrate the system over `[0, duration]` at fixed `internal_step`.
    pub fn run(&self, duration: f64, internal_step: f64) -> Result<RawTrace, EngineError> {
        if internal_step <= 0.0 || !internal_step.is_finite() {
            return Err(EngineError::NonPositiveStep(internal_step));
        }
        if duration < internal_step {
            return Err(EngineError::DurationTooShort {
                duration,
                step: internal_step,
            });
        }
        let h = internal_step;
        let n_steps = (duration / h).floor() as usize;

        // Switch schedule, snapped to the grid. Events beyond the run are
        // ignored; close times ≤ 0 mean closed from the start.
        let mut closed: Vec<bool> = self
            .branches
            .iter()
            .map(|b| b.kind == BranchKind::Switch && b.close_time <= 0.0)
            .collect();
        let mut events: Vec<(usize, usize)> = Vec::new(); // (step, branch)
        for (i, b) in self.branches.iter().enumerate() {
            if b.kind == BranchKind::Switch && b.close_time > 0.0 {
                let k = (b.close_time / h).round() as usize;
                if k <= n_steps {
                    events.push((k, i));
                }
            }
        }
        events.sort_unstable();

        // Per-branch state: (state, aux) = (i, v) for L, (v, i) for C.
        let mut state: Vec<(f64, f64)> = self
            .branches
            .iter()
            .map(|b| (b.initial_state, 0.0))
            .collect();

        let mut trace: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps + 1); self.probes.len()];

        let mut ev_cursor = 0;
        while ev_cursor < events.len() && events[ev_cursor].0 == 0 {
            closed[events[ev_cursor].1] = true;
            ev_cursor += 1;
        }

        // Consistent algebraic solution at t = 0.
        let (mut volts, mut at_equilibrium) =
            self.consistent_restart(&closed, &mut state, "solving initial conditions")?;
        self.record(&volts, &state, &closed, &mut trace);

        let mut lu = self.factorize(&closed, h)?;

        let mut k = 1;
        while k <= n_steps {
            // A source-free linear network at an equilibrium state stays
            // there until the topology changes: replicate samples up to
            // the next switch event (arriving at the event instant with
            // the state bitwise intact) instead of integrating rounding
            // noise through the quiescent phase.
            if at_equilibrium {
                let next = events
                    .get(ev_cursor)
                    .map_or(n_steps + 1, |&(step, _)| step);
                while k < next && k <= n_steps {
                    self.record(&volts, &state, &closed, &mut trace);
                    k += 1;
                }
                if k > n_steps {
                    break;
                }
                // k is the event step; the pre-event state needs no
                // integration, the event handling below takes over
            } else {
                // Trapezoidal step from t_{k-1} to t_k.
                let mut rhs = DVector::zeros(self.node_count);
                for (i, b) in self.branches.iter().enumerate() {
                    match b.kind {
                        BranchKind::Inductor => {
                            let g = h / (2.0 * b.value);
                            let ieq = state[i].0 + g * state[i].1;
                            stamp_rhs(&mut rhs, b.a, b.b, -ieq);
                        }
                        BranchKind::Capacitor => {
                            let g = 2.0 * b.value / h;
                            let ieq = g * state[i].0 + state[i].1;
                            stamp_rhs(&mut rhs, b.a, b.b, ieq);
                        }
                        _ => {}
                    }
                }
                let sol = lu.solve(&rhs).ok_or_else(|| EngineError::Singular {
                    context: format!("stepping at t = {:.3e}", k as f64 * h),
                })?;
                volts = sol;

                // Update companion histories.
                for (i, b) in self.branches.iter().enumerate() {
                    let vab = node_v(&volts, b.a) - node_v(&volts, b.b);
                    match b.kind {
                        BranchKind::Inductor => {
                            let g = h / (2.0 * b.value);
                            let ieq = state[i].0 + g * state[i].1;
                            state[i] = (g * vab + ieq, vab);
                        }
                        BranchKind::Capacitor => {
                            let g = 2.0 * b.value / h;
                            let ieq = g * state[i].0 + state[i].1;
                            state[i] = (vab, g * vab - ieq);
                        }
                        _ => {}
                    }
                }
            }

            // Apply any switch closures scheduled for this instant, then
            // re-solve the algebraic part so the recorded sample reflects
            // the post-event network. L currents and C voltages carry over.
            if ev_cursor < events.len() && events[ev_cursor].0 == k {
                while ev_cursor < events.len() && events[ev_cursor].0 == k {
                    closed[events[ev_cursor].1] = true;
                    ev_cursor += 1;
                }
                let (v, eq) = self.consistent_restart(
                    &closed,
                    &mut state,
                    &format!("switch event at t = {:.3e}", k as f64 * h),
                )?;
                volts = v;
                at_equilibrium = eq;
                lu = self.factorize(&closed, h)?;
            }

            self.record(&volts, &state, &closed, &mut trace);
            k += 1;
        }

        Ok(RawTrace {
            internal_step: h,
            duration,
            names: self.probe_names.clone(),
            data: trace,
        })
    }

    fn factorize(&self, closed: &[bool], h: f64) -> Result<ScaledLu, EngineError> {
        let n = self.node_count;
        let mut g = DMatrix::zeros(n, n);
        for (i, b) in self.branches.iter().enumerate() {
            let cond = match b.kind {
                BranchKind::Resistor => 1.0 / b.value,
                BranchKind::Switch if closed[i] => 1.0 / CLOSED_SWITCH_RESISTANCE,
                BranchKind::Switch => continue,
                BranchKind::Inductor => h / (2.0 * b.value),
                BranchKind::Capacitor => 2.0 * b.value / h,
            };
            stamp_matrix(&mut g, b.a, b.b, cond);
        }
        ScaledLu::new(g).ok_or_else(|| EngineError::Singular {
            context: "factorizing the nodal matrix".into(),
        })
    }

    /// Solve for node voltages consistent with the current L/C states:
    /// capacitors act as voltage sources, inductors as current sources.
    /// Updates the auxiliary state entries (L voltages, C currents).
    fn algebraic_snapshot(
        &self,
        closed: &[bool],
        state: &mut [(f64, f64)],
        context: &str,
    ) -> Result<DVector<f64>, EngineError> {
        let n = self.node_count;
        let caps: Vec<usize> = self
            .branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BranchKind::Capacitor)
            .map(|(i, _)| i)
            .collect();
        let m = caps.len();
        let dim = n + m;
        let mut a = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);

        for (i, b) in self.branches.iter().enumerate() {
            match b.kind {
                BranchKind::Resistor => stamp_matrix(&mut a, b.a, b.b, 1.0 / b.value),
                BranchKind::Switch if closed[i] => {
                    stamp_matrix(&mut a, b.a, b.b, 1.0 / CLOSED_SWITCH_RESISTANCE)
                }
                BranchKind::Inductor => {
                    stamp_matrix(&mut a, b.a, b.b, SNAPSHOT_LEAK_EPS / b.value);
                    stamp_rhs(&mut rhs, b.a, b.b, -state[i].0);
                }
                _ => {}
            }
        }
        for (j, &ci) in caps.iter().enumerate() {
            let b = &self.branches[ci];
            // branch current unknown enters KCL at both nodes
            if let Some(x) = b.a {
                a[(x, n + j)] += 1.0;
            }
            if let Some(x) = b.b {
                a[(x, n + j)] -= 1.0;
            }
            // voltage constraint v_a - v_b = v_state
            if let Some(x) = b.a {
                a[(n + j, x)] += 1.0;
            }
            if let Some(x) = b.b {
                a[(n + j, x)] -= 1.0;
            }
            rhs[n + j] = state[ci].0;
        }

        let lu = a.clone().lu();
        let singular = || EngineError::Singular {
            context: context.to_string(),
        };
        if lu.determinant().abs() == 0.0 {
            return Err(singular());
        }
        let mut sol = lu.solve(&rhs).ok_or_else(singular)?;
        // Iterate refinement to convergence: the MNA block matrix mixes
        // leak conductances with cable conductances, and node groups held
        // only by leaks need the weak directions solved accurately.
        let mut res_norm = f64::INFINITY;
        for _ in 0..6 {
            let r = &rhs - &a * &sol;
            let n = r.norm();
            if !(n < res_norm) || n == 0.0 {
                break;
            }
            res_norm = n;
            match lu.solve(&r) {
                Some(ds) => sol += ds,
                None => break,
            }
        }

        let volts = DVector::from_fn(n, |i, _| sol[i]);
        for (j, &ci) in caps.iter().enumerate() {
            state[ci].1 = sol[n + j];
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.kind == BranchKind::Inductor {
                state[i].1 = node_v(&volts, b.a) - node_v(&volts, b.b);
            }
        }
        Ok(volts)
    }

    /// Establish a consistent algebraic solution for the current state and
    /// topology: the exact zero-current equilibrium when the state admits
    /// one (flagging it, so the caller can fast-forward), the regularized
    /// snapshot solve otherwise.
    fn consistent_restart(
        &self,
        closed: &[bool],
        state: &mut [(f64, f64)],
        context: &str,
    ) -> Result<(DVector<f64>, bool), EngineError> {
        if let Some(v) = self.zero_current_equilibrium(closed, state) {
            for (i, b) in self.branches.iter().enumerate() {
                if matches!(b.kind, BranchKind::Inductor | BranchKind::Capacitor) {
                    state[i].1 = 0.0;
                }
            }
            return Ok((v, true));
        }
        Ok((self.algebraic_snapshot(closed, state, context)?, false))
    }

    /// Try the zero-current equilibrium solution: if every inductor
    /// carries exactly zero current, propagate node voltages from ground
    /// (capacitors jump by their stored voltage, every other element drops
    /// nothing) and verify consistency around loops. Success means the
    /// network is at rest, with node voltages exact to the bit; any
    /// conflict (some element must carry current) returns None.
    fn zero_current_equilibrium(
        &self,
        closed: &[bool],
        state: &[(f64, f64)],
    ) -> Option<DVector<f64>> {
        if self
            .branches
            .iter()
            .zip(state)
            .any(|(b, s)| b.kind == BranchKind::Inductor && s.0 != 0.0)
        {
            return None;
        }
        let v_scale = 1.0
            + self
                .branches
                .iter()
                .map(|b| b.initial_state.abs())
                .fold(0.0, f64::max);

        // adjacency: (neighbor slot, voltage jump from here to neighbor)
        let slot = |n: Option<usize>| n.map_or(0, |i| i + 1);
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.node_count + 1];
        for (i, b) in self.branches.iter().enumerate() {
            let jump = match b.kind {
                BranchKind::Capacitor => state[i].0,
                BranchKind::Switch if !closed[i] => continue,
                _ => 0.0,
            };
            adj[slot(b.a)].push((slot(b.b), -jump));
            adj[slot(b.b)].push((slot(b.a), jump));
        }

        let mut v = vec![f64::NAN; self.node_count + 1];
        v[0] = 0.0;
        let mut queue = vec![0usize];
        while let Some(x) = queue.pop() {
            for &(y, jump) in &adj[x] {
                let vy = v[x] + jump;
                if v[y].is_nan() {
                    v[y] = vy;
                    queue.push(y);
                } else if (v[y] - vy).abs() > 1e-9 * v_scale {
                    return None; // some loop demands current
                }
            }
        }
        if v.iter().any(|x| x.is_nan()) {
            return None; // nodes isolated behind open switches
        }
        Some(DVector::from_fn(self.node_count, |i, _| v[i + 1]))
    }

    fn record(
        &self,
        volts: &DVector<f64>,
        state: &[(f64, f64)],
        closed: &[bool],
        trace: &mut [Vec<f64>],
    ) {
        for (p, out) in self.probes.iter().zip(trace.iter_mut()) {
            let v = match p {
                ResolvedProbe::Voltage(a, b) => node_v(volts, *a) - node_v(volts, *b),
                ResolvedProbe::Current(i) => {
                    let b = &self.branches[*i];
                    let vab = node_v(volts, b.a) - node_v(volts, b.b);
                    match b.kind {
                        BranchKind::Resistor => vab / b.value,
                        BranchKind::Switch if closed[*i] => vab / CLOSED_SWITCH_RESISTANCE,
                        BranchKind::Switch => 0.0,
                        // state layout: (current, voltage) for L, (voltage, current) for C
                        BranchKind::Inductor => state[*i].0,
                        BranchKind::Capacitor => state[*i].1,
                    }
                }
            };
            out.push(v);
        }
    }
}

/// LU factorization with symmetric Jacobi equilibration and one step of
/// iterative refinement. Nodal conductances span many decades here
/// (capacitor companions at 2C/h against inductor companions at h/2L), and
/// an unequilibrated solve seeds the marginally stable Nyquist mode of the
/// trapezoidal rule with rounding noise.
struct ScaledLu {
    matrix: DMatrix<f64>,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    scale: DVector<f64>,
}

impl ScaledLu {
    fn new(matrix: DMatrix<f64>) -> Option<Self> {
        let n = matrix.nrows();
        let scale = DVector::from_fn(n, |i, _| {
            let d: f64 = matrix[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        });
        let mut scaled = matrix.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= scale[i] * scale[j];
            }
        }
        let lu = scaled.lu();
        if lu.determinant().abs() == 0.0 {
            return None;
        }
        Some(Self { matrix, lu, scale })
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let b = rhs.component_mul(&self.scale);
        let mut x = self.lu.solve(&b)?.component_mul(&self.scale);
        // one refinement pass against the unscaled system
        let r = rhs - &self.matrix * &x;
        let rb = r.component_mul(&self.scale);
        if let Some(dx) = self.lu.solve(&rb) {
            x += dx.component_mul(&self.scale);
        }
        Some(x)
    }
}

fn node_v(volts: &DVector<f64>, n: Option<usize>) -> f64 {
    n.map_or(0.0, |i| volts[i])
}

fn stamp_matrix(g: &mut DMatrix<f64>, a: Option<usize>, b: Option<usize>, cond: f64) {
    if let Some(x) = a {
        g[(x, x)] += cond;
    }
    if let Some(x) = b {
        g[(x, x)] += cond;
    }
    if let (Some(x), Some(y)) = (a, b) {
        g[(x, y)] -= cond;
        g[(y, x)] -= cond;
    }
}

/// Inject `i` amps flowing from node `a` to node `b` into the RHS.
fn stamp_rhs(rhs: &mut DVector<f64>, a: Option<usize>, b: Option<usize>, i: f64) {
    if let Some(x) = a {
        rhs[x] += i;
    }
    if let Some(x) = b {
        rhs[x] -= i;
    }
}

/// Assemble and integrate in one call.
pub fn simulate(
    circuit: &Circuit,
    duration: f64,
    internal_step: f64,
) -> Result<RawTrace, EngineError> {
    assemble(circuit)?.run(duration, internal_step)
}
