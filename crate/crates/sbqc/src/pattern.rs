//! Open graphs, g-flow and measurement patterns with exact octant-angle arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

/// Measurement angle k*pi/4 for k in 0..8. All classical angle arithmetic is
/// integer arithmetic mod 8; radians appear only at the simulator boundary.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Octant(u8);

impl Octant {
    pub fn new(k: i64) -> Octant {
        Octant(k.rem_euclid(8) as u8)
    }

    pub fn k(self) -> u8 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0 as f64 * std::f64::consts::FRAC_PI_4
    }

    pub fn neg(self) -> Octant {
        Octant::new(-(self.0 as i64))
    }

    pub fn is_odd(self) -> bool {
        self.0 % 2 == 1
    }

    /// Multiples of pi, i.e. k in {0, 4}. The X-correction sign flip has no
    /// effect on these angles.
    pub fn is_pauli(self) -> bool {
        self.0 == 0 || self.0 == 4
    }
}

impl std::ops::Add for Octant {
    type Output = Octant;
    fn add(self, rhs: Octant) -> Octant {
        Octant::new(self.0 as i64 + rhs.0 as i64)
    }
}

impl std::ops::Sub for Octant {
    type Output = Octant;
    fn sub(self, rhs: Octant) -> Octant {
        Octant::new(self.0 as i64 - rhs.0 as i64)
    }
}

impl fmt::Debug for Octant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}pi/4", self.0)
    }
}

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate node {0} in {1}")]
    Duplicate(NodeId, &'static str),
    #[error("node {0} is not a graph node but appears in {1}")]
    NotANode(NodeId, &'static str),
    #[error("missing outcome for node {0}, required before measuring {1}")]
    MissingOutcome(NodeId, NodeId),
    #[error("g-flow maps input or unknown node: g({0}) contains {1}")]
    BadFlowTarget(NodeId, NodeId),
    #[error("non-output node {0} has no angle")]
    MissingAngle(NodeId),
    #[error("g-flow order contains a cycle through node {0}")]
    OrderCycle(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenGraph {
    nodes: BTreeSet<NodeId>,
    edges: BTreeSet<(NodeId, NodeId)>,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
}

impl OpenGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        inputs: Vec<NodeId>,
        outputs: Vec<NodeId>,
    ) -> Result<OpenGraph, PatternError> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let mut norm = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(PatternError::SelfLoop(u));
            }
            for x in [u, v] {
                if !nodes.contains(&x) {
                    return Err(PatternError::NotANode(x, "edges"));
                }
            }
            norm.insert((u.min(v), u.max(v)));
        }
        for (list, what) in [(&inputs, "inputs"), (&outputs, "outputs")] {
            let mut seen = BTreeSet::new();
            for &n in list.iter() {
                if !nodes.contains(&n) {
                    return Err(PatternError::NotANode(n, what));
                }
                if !seen.insert(n) {
                    return Err(PatternError::Duplicate(n, what));
                }
            }
        }
        Ok(OpenGraph { nodes, edges: norm, inputs, outputs })
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn neighbours(&self, v: NodeId) -> BTreeSet<NodeId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn is_output(&self, v: NodeId) -> bool {
        self.outputs.contains(&v)
    }

    pub fn is_input(&self, v: NodeId) -> bool {
        self.inputs.contains(&v)
    }

    /// Non-output nodes, the ones that get measured.
    pub fn measured(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied().filter(|&v| !self.is_output(v))
    }
}

/// Odd(K) = { u : |N(u) ∩ K| is odd }.
pub fn odd_neighbourhood(
    graph: &OpenGraph,
    k: &BTreeSet<NodeId>,
) -> Result<BTreeSet<NodeId>, PatternError> {
    for &n in k {
        if !graph.nodes().contains(&n) {
            return Err(PatternError::UnknownNode(n));
        }
    }
    let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &(a, b) in graph.edges() {
        if k.contains(&b) {
            *counts.entry(a).or_default() += 1;
        }
        if k.contains(&a) {
            *counts.entry(b).or_default() += 1;
        }
    }
    Ok(counts.into_iter().filter(|&(_, c)| c % 2 == 1).map(|(n, _)| n).collect())
}

/// g-flow: correction function g plus a strict partial order, stored as
/// explicit relation edges (closure computed on demand).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GFlow {
    pub g: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub order: BTreeSet<(NodeId, NodeId)>,
}

impl GFlow {
    /// Transitive closure of the stored order edges. Errors on a cycle.
    pub fn closure(&self, nodes: &BTreeSet<NodeId>) -> Result<BTreeSet<(NodeId, NodeId)>, PatternError> {
        transitive_closure(&self.order, nodes)
    }

    pub fn precedes(
        closure: &BTreeSet<(NodeId, NodeId)>,
        a: NodeId,
        b: NodeId,
    ) -> bool {
        closure.contains(&(a, b))
    }
}

/// Warshall-style closure over a node set; detects cycles (a pair (v, v)).
pub fn transitive_closure(
    rel: &BTreeSet<(NodeId, NodeId)>,
    nodes: &BTreeSet<NodeId>,
) -> Result<BTreeSet<(NodeId, NodeId)>, PatternError> {
    let idx: BTreeMap<NodeId, usize> = nodes.iter().copied().zip(0..).collect();
    let n = idx.len();
    let mut m = vec![false; n * n];
    for &(a, b) in rel {
        if let (Some(&i), Some(&j)) = (idx.get(&a), idx.get(&b)) {
            m[i * n + j] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if m[i * n + k] {
                for j in 0..n {
                    if m[k * n + j] {
                        m[i * n + j] = true;
                    }
                }
            }
        }
    }
    let back: Vec<NodeId> = nodes.iter().copied().collect();
    let mut out = BTreeSet::new();
    for i in 0..n {
        if m[i * n + i] {
            return Err(PatternError::OrderCycle(back[i]));
        }
        for j in 0..n {
            if m[i * n + j] {
                out.insert((back[i], back[j]));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementPattern {
    pub graph: OpenGraph,
    pub gflow: GFlow,
    pub angles: BTreeMap<NodeId, Octant>,
}

/// Measurement outcomes s_j, keyed by measured node.
pub type OutcomeMap = BTreeMap<NodeId, u8>;

/// One violated g-flow condition with a witness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GflowViolation {
    /// g(i) missing or empty for a measured node i.
    MissingFlow(NodeId),
    /// g(i) contains an input or unknown node.
    BadTarget(NodeId, NodeId),
    /// i not in Odd(g(i)).
    NotInOddNeighbourhood(NodeId),
    /// j in g(i) but i ≺ j missing.
    OrderMissingFlow(NodeId, NodeId),
    /// j in Odd(g(i)), j != i, but i ≺ j missing.
    OrderMissingOdd(NodeId, NodeId),
    /// order relation is not a strict partial order.
    OrderNotStrict(NodeId),
    /// measured node with no angle.
    MissingAngle(NodeId),
}

impl fmt::Display for GflowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GflowViolation::MissingFlow(i) => write!(f, "no correction set g({i})"),
            GflowViolation::BadTarget(i, j) => write!(f, "g({i}) contains invalid node {j}"),
            GflowViolation::NotInOddNeighbourhood(i) => write!(f, "{i} not in Odd(g({i}))"),
            GflowViolation::OrderMissingFlow(i, j) => {
                write!(f, "{j} in g({i}) but {i} does not precede {j}")
            }
            GflowViolation::OrderMissingOdd(i, j) => {
                write!(f, "{j} in Odd(g({i})) but {i} does not precede {j}")
            }
            GflowViolation::OrderNotStrict(i) => write!(f, "order has a cycle through {i}"),
            GflowViolation::MissingAngle(i) => write!(f, "measured node {i} has no angle"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GflowReport {
    pub violations: Vec<GflowViolation>,
}

impl GflowReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the three g-flow conditions plus strictness of the order.
/// Violations are data, not errors.
pub fn verify_gflow(pattern: &MeasurementPattern) -> GflowReport {
    let mut report = GflowReport::default();
    let graph = &pattern.graph;
    let closure = match pattern.gflow.closure(graph.nodes()) {
        Ok(c) => c,
        Err(PatternError::OrderCycle(v)) => {
            report.violations.push(GflowViolation::OrderNotStrict(v));
            return report;
        }
        Err(_) => unreachable!(),
    };
    for i in graph.measured() {
        if !pattern.angles.contains_key(&i) {
            report.violations.push(GflowViolation::MissingAngle(i));
        }
        let gi = match pattern.gflow.g.get(&i) {
            Some(s) if !s.is_empty() => s,
            _ => {
                report.violations.push(GflowViolation::MissingFlow(i));
                continue;
            }
        };
        let mut bad = false;
        for &j in gi {
            if !graph.nodes().contains(&j) || graph.is_input(j) {
                report.violations.push(GflowViolation::BadTarget(i, j));
                bad = true;
            }
        }
        if bad {
            continue;
        }
        let odd = odd_neighbourhood(graph, gi).expect("targets checked");
        if !odd.contains(&i) {
            report.violations.push(GflowViolation::NotInOddNeighbourhood(i));
        }
        for &j in gi {
            if j != i && !GFlow::precedes(&closure, i, j) {
                report.violations.push(GflowViolation::OrderMissingFlow(i, j));
            }
        }
        for &j in &odd {
            if j != i && !GFlow::precedes(&closure, i, j) {
                report.violations.push(GflowViolation::OrderMissingOdd(i, j));
            }
        }
    }
    report
}

/// X- and Z-correction source sets of node i:
/// Xset = {j : i in g(j), j != i}, Zset = {j : i in Odd(g(j)), j != i}.
pub fn correction_sets(
    pattern: &MeasurementPattern,
    i: NodeId,
) -> Result<(BTreeSet<NodeId>, BTreeSet<NodeId>), PatternError> {
    if !pattern.graph.nodes().contains(&i) {
        return Err(PatternError::UnknownNode(i));
    }
    let mut xset = BTreeSet::new();
    let mut zset = BTreeSet::new();
    for (&j, gj) in &pattern.gflow.g {
        // the correction sums skip j = i, so i never corrects itself
        if j == i {
            continue;
        }
        if gj.contains(&i) {
            xset.insert(j);
        }
        if odd_set_contains(pattern, gj, i) {
            zset.insert(j);
        }
    }
    Ok((xset, zset))
}

fn odd_set_contains(pattern: &MeasurementPattern, k: &BTreeSet<NodeId>, v: NodeId) -> bool {
    let count = pattern
        .graph
        .neighbours(v)
        .iter()
        .filter(|n| k.contains(n))
        .count();
    count % 2 == 1
}

/// Corrected measurement angle ((-1)^{s_X} k_w + 4 s_Z) mod 8 with
/// s_X = xor of outcomes over {j : w in g(j)} and
/// s_Z = xor over {j : w in Odd(g(j)), j != w}.
pub fn corrected_angle(
    pattern: &MeasurementPattern,
    w: NodeId,
    outcomes: &OutcomeMap,
) -> Result<Octant, PatternError> {
    let (xset, zset) = correction_sets(pattern, w)?;
    let mut sx = 0u8;
    for &j in &xset {
        sx ^= outcomes.get(&j).copied().ok_or(PatternError::MissingOutcome(j, w))? & 1;
    }
    let mut sz = 0u8;
    for &j in &zset {
        sz ^= outcomes.get(&j).copied().ok_or(PatternError::MissingOutcome(j, w))? & 1;
    }
    let base = *pattern.angles.get(&w).ok_or(PatternError::MissingAngle(w))?;
    Ok(apply_corrections(base, sx, sz))
}

pub fn apply_corrections(angle: Octant, sx: u8, sz: u8) -> Octant {
    let signed = if sx & 1 == 1 { angle.neg() } else { angle };
    signed + Octant::new(4 * (sz & 1) as i64)
}

/// Deterministic linear extension of the order restricted to measured nodes,
/// ties broken by ascending NodeId.
pub fn measurement_order(pattern: &MeasurementPattern) -> Result<Vec<NodeId>, PatternError> {
    let measured: BTreeSet<NodeId> = pattern.graph.measured().collect();
    let closure = pattern.gflow.closure(pattern.graph.nodes())?;
    crate::merge::linear_extension_of(&closure, &measured)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn chain(n: u32) -> MeasurementPattern {
        // 1-2-...-n, I={1}, O={n}, g(i)={i+1}, chain order, angles 0.
        let nodes: Vec<NodeId> = (1..=n).collect();
        let edges: Vec<_> = (1..n).map(|i| (i, i + 1)).collect();
        let graph = OpenGraph::new(nodes, edges, vec![1], vec![n]).unwrap();
        let g = (1..n).map(|i| (i, BTreeSet::from([i + 1]))).collect();
        let order = (1..n).map(|i| (i, i + 1)).collect();
        let angles = (1..n).map(|i| (i, Octant::new(0))).collect();
        MeasurementPattern { graph, gflow: GFlow { g, order }, angles }
    }

    #[test]
    fn odd_neighbourhood_examples() {
        let p = chain(3);
        // chain 1-2-3, K={2} -> {1,3}
        let odd = odd_neighbourhood(&p.graph, &BTreeSet::from([2])).unwrap();
        assert_eq!(odd, BTreeSet::from([1, 3]));
        // K = empty -> empty
        assert!(odd_neighbourhood(&p.graph, &BTreeSet::new()).unwrap().is_empty());
        // 2x2 grid a=1,b=2,c=3,d=4; edges ab,cd,ac,bd
        let grid =
            OpenGraph::new([1, 2, 3, 4], [(1, 2), (3, 4), (1, 3), (2, 4)], vec![], vec![]).unwrap();
        // K={a}: b and c each touch K once
        let odd = odd_neighbourhood(&grid, &BTreeSet::from([1])).unwrap();
        assert_eq!(odd, BTreeSet::from([2, 3]));
        // K={a,d}: b and c each touch K twice, parity cancels
        let odd = odd_neighbourhood(&grid, &BTreeSet::from([1, 4])).unwrap();
        assert!(odd.is_empty());
    }

    #[test]
    fn verify_gflow_examples() {
        let p = chain(3);
        assert!(verify_gflow(&p).ok());

        let mut bad = p.clone();
        bad.gflow.g.insert(1, BTreeSet::from([3]));
        let report = verify_gflow(&bad);
        assert!(report
            .violations
            .contains(&GflowViolation::NotInOddNeighbourhood(1)));

        // order missing 1 ≺ 3 while 3 in Odd(g(1)) = Odd({2}) = {1,3}
        let mut partial = p.clone();
        partial.gflow.order = BTreeSet::from([(1, 2), (2, 3)]);
        assert!(verify_gflow(&partial).ok(), "closure supplies 1 ≺ 3");
        partial.gflow.order = BTreeSet::from([(1, 2)]);
        let report = verify_gflow(&partial);
        assert!(report.violations.contains(&GflowViolation::OrderMissingOdd(1, 3)));
    }

    #[test]
    fn corrected_angle_examples() {
        let mut p = chain(3);
        p.angles.insert(2, Octant::new(1));
        // phi = pi/4, s_X = 1, s_Z = 0 -> 7pi/4
        let outcomes: OutcomeMap = [(1, 1)].into();
        assert_eq!(corrected_angle(&p, 2, &outcomes).unwrap(), Octant::new(7));
        // s_X = 0, s_Z = 0 -> identity
        let outcomes: OutcomeMap = [(1, 0)].into();
        assert_eq!(corrected_angle(&p, 2, &outcomes).unwrap(), Octant::new(1));
        // phi = pi/2, s_X = 1, s_Z = 1 -> (-2+4) mod 8 = 2
        assert_eq!(apply_corrections(Octant::new(2), 1, 1), Octant::new(2));
    }

    #[test]
    fn correction_sets_examples() {
        let p = chain(3);
        let (x, z) = correction_sets(&p, 2).unwrap();
        assert_eq!(x, BTreeSet::from([1]));
        assert!(z.is_empty());
        let (x, z) = correction_sets(&p, 3).unwrap();
        assert_eq!(x, BTreeSet::from([2]));
        assert_eq!(z, BTreeSet::from([1]));
        // node with no flow pointing at it
        let lone = OpenGraph::new([1, 2], [(1, 2)], vec![], vec![1, 2]).unwrap();
        let p2 = MeasurementPattern {
            graph: lone,
            gflow: GFlow { g: BTreeMap::new(), order: BTreeSet::new() },
            angles: BTreeMap::new(),
        };
        let (x, z) = correction_sets(&p2, 1).unwrap();
        assert!(x.is_empty() && z.is_empty());
    }

    #[test]
    fn outcome_flip_consistency() {
        let mut p = chain(4);
        p.angles.insert(3, Octant::new(3));
        let base: OutcomeMap = [(1, 0), (2, 0)].into();
        let a0 = corrected_angle(&p, 3, &base).unwrap();
        // flipping an Xset member negates the angle
        let fx: OutcomeMap = [(1, 0), (2, 1)].into();
        assert_eq!(corrected_angle(&p, 3, &fx).unwrap(), a0.neg());
        // flipping a Zset member adds 4
        let fz: OutcomeMap = [(1, 1), (2, 0)].into();
        assert_eq!(corrected_angle(&p, 3, &fz).unwrap(), a0 + Octant::new(4));
    }
}
