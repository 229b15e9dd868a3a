//! Future cones, influence sets, per-node mask classes and the
//! qubit-communication cost report for a pair of embedded computations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merge::{Embedding, MergerGraph, Role};
use crate::pattern::{MeasurementPattern, NodeId, Octant, PatternError};

#[derive(Debug, Error)]
pub enum MaskingError {
    #[error("node {0} is an output, it has no future cone")]
    OutputHasNoCone(NodeId),
    #[error("input node {0} missing from the input spec")]
    MissingInputSpec(NodeId),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// Future cone of a node: everything reachable through X or Z correction
/// dependencies. The interior holds the measured nodes that receive an
/// X-correction from the node itself or from another cone member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FutureCone {
    pub cone: BTreeSet<NodeId>,
    pub interior: BTreeSet<NodeId>,
}

/// Direct dependents of j: the nodes of g(j) receive an X-correction from
/// s_j, the nodes of Odd(g(j)) \ {j} a Z-correction.
fn direct_dependents(
    pattern: &MeasurementPattern,
    j: NodeId,
) -> Result<(BTreeSet<NodeId>, BTreeSet<NodeId>), PatternError> {
    let x: BTreeSet<NodeId> = pattern
        .gflow
        .g
        .get(&j)
        .map(|s| s.iter().copied().filter(|&w| w != j).collect())
        .unwrap_or_default();
    let z: BTreeSet<NodeId> = match pattern.gflow.g.get(&j) {
        Some(gj) => crate::pattern::odd_neighbourhood(&pattern.graph, gj)?
            .into_iter()
            .filter(|&w| w != j)
            .collect(),
        None => BTreeSet::new(),
    };
    Ok((x, z))
}

pub fn future_cone(pattern: &MeasurementPattern, v: NodeId) -> Result<FutureCone, MaskingError> {
    if !pattern.graph.nodes().contains(&v) {
        return Err(PatternError::UnknownNode(v).into());
    }
    if pattern.graph.is_output(v) {
        return Err(MaskingError::OutputHasNoCone(v));
    }
    let mut cone: BTreeSet<NodeId> = BTreeSet::new();
    let mut interior: BTreeSet<NodeId> = BTreeSet::new();
    let mut frontier = vec![v];
    let mut seen = BTreeSet::from([v]);
    while let Some(j) = frontier.pop() {
        let (x, z) = direct_dependents(pattern, j)?;
        for &w in &x {
            if !pattern.graph.is_output(w) {
                interior.insert(w);
            }
        }
        for w in x.into_iter().chain(z) {
            cone.insert(w);
            // outputs are cone members but never measured, so they
            // propagate nothing
            if seen.insert(w) && !pattern.graph.is_output(w) {
                frontier.push(w);
            }
        }
    }
    cone.remove(&v);
    interior.remove(&v);
    Ok(FutureCone { cone, interior })
}

/// Interior members whose default angle is an odd octant. These need a full
/// qubit mask because the hidden outcome flips the sign of a non-Clifford
/// angle.
pub fn qubit_masked_nodes(pattern: &MeasurementPattern, cone: &FutureCone) -> BTreeSet<NodeId> {
    cone.interior
        .iter()
        .copied()
        .filter(|w| pattern.angles.get(w).is_some_and(|a| a.is_odd()))
        .collect()
}

/// Per-run influence sources of one merger node: what may force an X gate,
/// a Z gate, or a Z(-pi/2) rotation onto it in each of the two computations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InfluenceSets {
    pub x: [BTreeSet<NodeId>; 2],
    pub z: [BTreeSet<NodeId>; 2],
    pub r: [BTreeSet<NodeId>; 2],
}

impl InfluenceSets {
    pub fn x_differs(&self) -> bool {
        self.x[0] != self.x[1]
    }
    pub fn z_differs(&self) -> bool {
        self.z[0] != self.z[1]
    }
    pub fn r_differs(&self) -> bool {
        self.r[0] != self.r[1]
    }
    pub fn any_difference(&self) -> bool {
        self.x_differs() || self.z_differs() || self.r_differs()
    }
}

fn inverse(e: &Embedding) -> BTreeMap<NodeId, NodeId> {
    e.iter().map(|(&a, &b)| (b, a)).collect()
}

fn embed_of(merger: &MergerGraph, b: usize) -> &Embedding {
    if b == 0 {
        &merger.embed0
    } else {
        &merger.embed1
    }
}

/// Influence sets of merger node v, in merger naming.
pub fn influence_sets(
    merger: &MergerGraph,
    u0: &MeasurementPattern,
    u1: &MeasurementPattern,
    v: NodeId,
) -> Result<InfluenceSets, MaskingError> {
    let inv = [inverse(&merger.embed0), inverse(&merger.embed1)];
    let patterns = [u0, u1];
    let mut out = InfluenceSets::default();
    for b in 0..2usize {
        let local = match inv[b].get(&v) {
            Some(&l) => l,
            None => continue, // absent from this run; folds are added below
        };
        let (xset, zset) = crate::pattern::correction_sets(patterns[b], local)?;
        out.x[b] = xset.iter().map(|j| embed_of(merger, b)[j]).collect();
        out.z[b] = zset.iter().map(|j| embed_of(merger, b)[j]).collect();
    }
    for u in merger.graph.neighbours(v) {
        match merger.roles.get(&u).copied() {
            Some(Role::BridgeBreakMiddle(owner)) => {
                // bridging corrects the sides with Z(-pi/2) Z^{b+c}, breaking
                // with Z^c: a conditional Z either way, a quarter rotation
                // only in the owner's run
                out.z[0].insert(u);
                out.z[1].insert(u);
                out.r[owner as usize].insert(u);
            }
            Some(Role::Only0) | Some(Role::Only1) | Some(Role::TeleportMiddle(_)) => {
                // deleting u sends |b> and folds Z^b onto every neighbour,
                // in the run where u does not exist
                let owner = merger.roles[&u].owner().unwrap();
                out.z[1 - owner as usize].insert(u);
            }
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskClass {
    NoMask,
    /// delta padded with r*pi only; server-prepared |+>
    ClassicalPi,
    /// client qubit |+_theta>, theta in {k*pi/2}
    QuantumHalfPi,
    /// client qubit |+_theta>, theta in {k*pi/4}
    QuantumQuarterPi,
    /// |b> to delete, |+_{k*pi/2}> to keep
    DeleteOrKeep,
    /// |0>/|1> to break, |+>/|-> to bridge; measured at pi/2
    BridgeBreakMiddle,
    /// |+>/|-> when teleporting, |b> otherwise; measured at the server's r*pi
    TeleportMiddle,
    /// quantum one-time pad Z(theta) X^a on the input state
    EncryptedInput,
    /// input transmitted in clear
    PublicInput,
}

impl MaskClass {
    /// Number of theta values the client pad is drawn from (1 = no pad).
    pub fn theta_set_size(self) -> u8 {
        match self {
            MaskClass::QuantumQuarterPi => 8,
            MaskClass::QuantumHalfPi | MaskClass::DeleteOrKeep | MaskClass::EncryptedInput => 4,
            _ => 1,
        }
    }

    /// Does this class require a client-prepared qubit?
    pub fn client_qubit(self) -> bool {
        !matches!(
            self,
            MaskClass::NoMask | MaskClass::ClassicalPi | MaskClass::PublicInput
        )
    }

    /// Role and input classes are pinned by the node's function in the
    /// merger; only the pad classes participate in upgrades.
    fn pad_rank(self) -> Option<u8> {
        match self {
            MaskClass::NoMask => Some(0),
            MaskClass::ClassicalPi => Some(1),
            MaskClass::QuantumHalfPi => Some(2),
            MaskClass::QuantumQuarterPi => Some(3),
            _ => None,
        }
    }
}

/// Which computation-phase measurement rule applies to a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleRule {
    /// delta = phi' + theta + r*pi
    QuantumPad,
    /// delta = phi' + r*pi
    ClassicalPad,
    /// delta = phi'
    Plain,
    /// bridge/break middle: fixed pi/2
    FixedHalfPi,
    /// teleport middle: server-sampled r*pi
    ServerPauli,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// same public state in both computations; transmitted in clear
    Public,
    Private,
}

/// Keyed by merger node id; every colliding input node must appear.
pub type InputSpec = BTreeMap<NodeId, InputKind>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskingPlan {
    pub classes: BTreeMap<NodeId, MaskClass>,
    pub rules: BTreeMap<NodeId, AngleRule>,
    pub cone_generators: BTreeSet<NodeId>,
    /// angle-difference targets with their (U0, U1) default angles
    pub targets: BTreeMap<NodeId, (Octant, Octant)>,
    /// class each target would have without the angle difference; used by
    /// the Clifford pi-difference downgrade
    pub target_floor: BTreeMap<NodeId, MaskClass>,
}

impl MaskingPlan {
    pub fn class(&self, v: NodeId) -> MaskClass {
        self.classes.get(&v).copied().unwrap_or(MaskClass::NoMask)
    }

    pub fn rule(&self, v: NodeId) -> AngleRule {
        self.rules.get(&v).copied().unwrap_or(AngleRule::Plain)
    }

    /// Nodes the client must prepare and send.
    pub fn client_qubits(&self) -> BTreeSet<NodeId> {
        self.classes
            .iter()
            .filter(|(_, c)| c.client_qubit())
            .map(|(&v, _)| v)
            .collect()
    }
}

fn upgrade(classes: &mut BTreeMap<NodeId, MaskClass>, v: NodeId, c: MaskClass) {
    let cur = classes.entry(v).or_insert(MaskClass::NoMask);
    if let (Some(old), Some(new)) = (cur.pad_rank(), c.pad_rank()) {
        if new > old {
            *cur = c;
        }
    }
}

fn rule_for(c: MaskClass) -> AngleRule {
    match c {
        MaskClass::BridgeBreakMiddle => AngleRule::FixedHalfPi,
        MaskClass::TeleportMiddle => AngleRule::ServerPauli,
        MaskClass::QuantumQuarterPi
        | MaskClass::QuantumHalfPi
        | MaskClass::DeleteOrKeep
        | MaskClass::EncryptedInput => AngleRule::QuantumPad,
        MaskClass::ClassicalPi => AngleRule::ClassicalPad,
        MaskClass::PublicInput | MaskClass::NoMask => AngleRule::Plain,
    }
}

/// Build the masking plan for running either U0 or U1 on the merger.
pub fn classify_nodes(
    u0: &MeasurementPattern,
    u1: &MeasurementPattern,
    merger: &MergerGraph,
    input_spec: &InputSpec,
) -> Result<MaskingPlan, MaskingError> {
    let inv = [inverse(&merger.embed0), inverse(&merger.embed1)];
    let patterns = [u0, u1];
    let mut classes: BTreeMap<NodeId, MaskClass> = BTreeMap::new();
    let mut generators: BTreeSet<NodeId> = BTreeSet::new();
    let mut targets: BTreeMap<NodeId, (Octant, Octant)> = BTreeMap::new();
    let mut target_floor: BTreeMap<NodeId, MaskClass> = BTreeMap::new();

    let angle_in = |b: usize, v: NodeId| -> Option<Octant> {
        inv[b].get(&v).and_then(|l| patterns[b].angles.get(l)).copied()
    };
    let is_input_in = |b: usize, v: NodeId| -> bool {
        inv[b].get(&v).is_some_and(|l| patterns[b].graph.is_input(*l))
    };

    // role-driven classes
    for &v in merger.graph.nodes() {
        let role = merger.roles.get(&v).copied().unwrap_or(Role::Shared);
        match role {
            Role::BridgeBreakMiddle(_) => {
                classes.insert(v, MaskClass::BridgeBreakMiddle);
            }
            Role::TeleportMiddle(_) => {
                classes.insert(v, MaskClass::TeleportMiddle);
                generators.insert(v);
            }
            Role::TeleportTerminal(_) => {
                classes.insert(v, MaskClass::NoMask);
            }
            Role::Only0 | Role::Only1 => {
                let owner = role.owner().unwrap() as usize;
                if is_input_in(owner, v) {
                    // an input colliding with nothing: encrypted when the
                    // owner runs, |b> otherwise
                    classes.insert(v, MaskClass::EncryptedInput);
                } else {
                    classes.insert(v, MaskClass::DeleteOrKeep);
                }
                generators.insert(v);
            }
            Role::Shared => {}
        }
    }

    // angle-difference targets among shared measured nodes; found before
    // input handling because a clear input cannot carry a theta pad
    for &v in merger.graph.nodes() {
        if merger.roles.get(&v).copied().unwrap_or(Role::Shared) != Role::Shared {
            continue;
        }
        if let (Some(a0), Some(a1)) = (angle_in(0, v), angle_in(1, v)) {
            if a0 != a1 {
                targets.insert(v, (a0, a1));
                generators.insert(v);
            }
        }
    }

    // input collisions on shared nodes
    for &v in merger.graph.nodes() {
        if merger.roles.get(&v).copied().unwrap_or(Role::Shared) != Role::Shared {
            continue;
        }
        let in0 = is_input_in(0, v);
        let in1 = is_input_in(1, v);
        if !in0 && !in1 {
            continue;
        }
        let kind = input_spec
            .get(&v)
            .copied()
            .ok_or(MaskingError::MissingInputSpec(v))?;
        if in0 && in1 && kind == InputKind::Public && !targets.contains_key(&v) {
            classes.insert(v, MaskClass::PublicInput);
        } else {
            // private input, an input overlapping a computation node of the
            // other run, or a public input measured at differing angles:
            // pad the state itself
            classes.insert(v, MaskClass::EncryptedInput);
            generators.insert(v);
        }
    }

    let pinned = |classes: &BTreeMap<NodeId, MaskClass>, v: NodeId| {
        classes
            .get(&v)
            .is_some_and(|c| c.pad_rank().is_none() || *c == MaskClass::PublicInput)
    };

    // influence-set differences: a differing X set flips the sign of the
    // default angle, a differing Z set adds a conditional pi, a differing
    // rotation set adds a conditional pi/2
    for &v in merger.graph.nodes() {
        if merger.graph.is_output(v) {
            continue; // outputs receive their corrections client-side
        }
        let sets = influence_sets(merger, u0, u1, v)?;
        if !sets.any_difference() {
            continue;
        }
        generators.insert(v);
        if pinned(&classes, v) {
            continue;
        }
        if sets.r_differs() {
            upgrade(&mut classes, v, MaskClass::QuantumHalfPi);
        } else if sets.x_differs() {
            let odd = angle_in(0, v)
                .or_else(|| angle_in(1, v))
                .is_some_and(|a| a.is_odd());
            let c = if odd { MaskClass::QuantumHalfPi } else { MaskClass::ClassicalPi };
            upgrade(&mut classes, v, c);
        } else {
            upgrade(&mut classes, v, MaskClass::ClassicalPi);
        }
    }

    // neighbours of padded inputs and of deletable nodes see a conditional
    // Z fold (X^a pushed through CZ, or the |b> deletion bit): pad them
    let fold_sources: Vec<NodeId> = classes
        .iter()
        .filter(|(_, c)| {
            matches!(
                c,
                MaskClass::EncryptedInput | MaskClass::DeleteOrKeep | MaskClass::TeleportMiddle
            )
        })
        .map(|(&v, _)| v)
        .collect();
    let mut needs_pad: BTreeSet<NodeId> = BTreeSet::new();
    for s in fold_sources {
        for u in merger.graph.neighbours(s) {
            if merger.graph.is_output(u) {
                continue;
            }
            generators.insert(u);
            needs_pad.insert(u);
            if !pinned(&classes, u) {
                upgrade(&mut classes, u, MaskClass::ClassicalPi);
            }
        }
    }

    // record what each target would be without its angle difference, then
    // apply the full pad
    for &v in targets.keys() {
        if pinned(&classes, v) {
            continue; // encrypted-input targets already hide their angle
        }
        target_floor.insert(v, classes.get(&v).copied().unwrap_or(MaskClass::NoMask));
        upgrade(&mut classes, v, MaskClass::QuantumQuarterPi);
    }

    // future-cone masking: every generator hides either an outcome or a pad
    // bit, so everything downstream of it must be padded too
    for &g in &generators {
        for b in 0..2usize {
            let local = match inv[b].get(&g) {
                Some(&l) => l,
                None => continue,
            };
            if patterns[b].graph.is_output(local) {
                continue;
            }
            let cone = future_cone(patterns[b], local)?;
            for &lw in &cone.cone {
                if patterns[b].graph.is_output(lw) {
                    continue;
                }
                let wm = embed_of(merger, b)[&lw];
                needs_pad.insert(wm);
                if pinned(&classes, wm) {
                    continue;
                }
                let odd = patterns[b].angles.get(&lw).is_some_and(|a| a.is_odd());
                let in_interior = cone.interior.contains(&lw);
                let class = if in_interior && odd {
                    MaskClass::QuantumHalfPi
                } else if in_interior && !patterns[b].angles[&lw].is_pauli() {
                    // +-pi/2 angle: a sign flip is a pi shift
                    MaskClass::ClassicalPi
                } else if in_interior {
                    // angle in {0, pi}: the sign flip is invisible; only a
                    // Z dependency inside the cone forces a pad
                    if z_reached(patterns[b], local, lw, &cone) {
                        MaskClass::ClassicalPi
                    } else {
                        MaskClass::NoMask
                    }
                } else {
                    // reached through Z dependencies only
                    MaskClass::ClassicalPi
                };
                upgrade(&mut classes, wm, class);
            }
        }
    }

    for &v in merger.graph.nodes() {
        classes.entry(v).or_insert(MaskClass::NoMask);
    }
    let mut rules: BTreeMap<NodeId, AngleRule> =
        classes.iter().map(|(&v, &c)| (v, rule_for(c))).collect();
    // a clear public input whose angle picks up a secret fold or sits in a
    // cone keeps its clear state but needs the r*pi pad on its angle
    for &v in &needs_pad {
        if classes.get(&v) == Some(&MaskClass::PublicInput) {
            rules.insert(v, AngleRule::ClassicalPad);
        }
    }
    Ok(MaskingPlan { classes, rules, cone_generators: generators, targets, target_floor })
}

/// Is `w` reachable from generator `v` through at least one Z dependency
/// inside the cone?
fn z_reached(pattern: &MeasurementPattern, v: NodeId, w: NodeId, cone: &FutureCone) -> bool {
    std::iter::once(v)
        .chain(cone.cone.iter().copied())
        .filter(|&j| !pattern.graph.is_output(j))
        .any(|j| {
            direct_dependents(pattern, j)
                .map(|(_, z)| z.contains(&w))
                .unwrap_or(false)
        })
}

/// Downgrade targets whose two angles are both even octants differing by pi:
/// the r*pi pad already hides which one was measured. Cone masking is
/// retained.
pub fn optimize_clifford_pi_difference(plan: &MaskingPlan) -> MaskingPlan {
    let mut out = plan.clone();
    for (&v, &(a0, a1)) in &plan.targets {
        if plan.classes.get(&v) != Some(&MaskClass::QuantumQuarterPi) {
            continue; // the angle is hidden by other means already
        }
        let both_even = !a0.is_odd() && !a1.is_odd();
        let pi_diff = (a0 - a1).k() == 4;
        if !(both_even && pi_diff) {
            continue;
        }
        let floor = plan.target_floor.get(&v).copied().unwrap_or(MaskClass::NoMask);
        let new = match floor {
            MaskClass::NoMask | MaskClass::ClassicalPi => MaskClass::ClassicalPi,
            other => other,
        };
        out.classes.insert(v, new);
        out.rules.insert(v, rule_for(new));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub qubits_sent: usize,
    pub by_class: BTreeMap<MaskClass, usize>,
    pub outputs_returned: usize,
    pub baseline_ubqc_cost: usize,
}

pub fn cost_report(plan: &MaskingPlan, merger: &MergerGraph) -> CostReport {
    let mut by_class: BTreeMap<MaskClass, usize> = BTreeMap::new();
    let mut qubits = 0usize;
    for &c in plan.classes.values() {
        *by_class.entry(c).or_default() += 1;
        if c.client_qubit() {
            qubits += 1;
        }
    }
    CostReport {
        qubits_sent: qubits,
        by_class,
        outputs_returned: merger.graph.outputs.len(),
        baseline_ubqc_cost: merger.graph.measured().count(),
    }
}
