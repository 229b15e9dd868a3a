//! Merger graphs: two embedded computations on one resource graph, order
//! union/closure, middle-node and output-teleportation gadgets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::{
    transitive_closure, GFlow, MeasurementPattern, NodeId, Octant, OpenGraph, PatternError,
};

/// Injective node renaming G_b -> G_M, b in {0, 1}.
pub type Embedding = BTreeMap<NodeId, NodeId>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// present in both computations
    Shared,
    /// present only in G_0 / G_1 (deleted when running the other)
    Only0,
    Only1,
    /// middle node of a single-owner edge; the bit is the owning graph
    BridgeBreakMiddle(u8),
    /// the v1 node of an output-teleportation gadget (owned by the graph
    /// whose output is teleported)
    TeleportMiddle(u8),
    /// the v2 node: server-prepared |+>, output of G_M
    TeleportTerminal(u8),
}

impl Role {
    /// The graph this node belongs to, or None when shared.
    pub fn owner(self) -> Option<u8> {
        match self {
            Role::Shared => None,
            Role::Only0 => Some(0),
            Role::Only1 => Some(1),
            Role::BridgeBreakMiddle(b) | Role::TeleportMiddle(b) | Role::TeleportTerminal(b) => {
                Some(b)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergerGraph {
    pub graph: OpenGraph,
    pub embed0: Embedding,
    pub embed1: Embedding,
    pub roles: BTreeMap<NodeId, Role>,
    pub total_order: Vec<NodeId>,
    /// middle node -> (side u, side v, owner bit) for the single-owner edge
    /// the middle replaces
    pub middles: BTreeMap<NodeId, (NodeId, NodeId, u8)>,
}

/// Ordered-pair relation a ≺ b.
pub type OrderRelation = BTreeSet<(NodeId, NodeId)>;

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("order union has a cycle: {0:?}")]
    Cycle(Vec<NodeId>),
    #[error("embedding for graph {0} is not injective at {1}")]
    NotInjective(u8, NodeId),
    #[error("node {1} of graph {0} has no image in the merger")]
    Unmapped(u8, NodeId),
    #[error("node {0} is not an output/computational mix across the two graphs")]
    NotMixedOutput(NodeId),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MergerViolation {
    /// edge of graph b with no counterpart (direct or via an owned middle) in G_M
    EdgeDropped(u8, NodeId, NodeId),
    /// total order violates a ≺_b pair (given in merger names)
    OrderViolated(u8, NodeId, NodeId),
    /// total order misses a merger node
    OrderIncomplete(NodeId),
    /// role bookkeeping disagrees with the embeddings
    RoleMismatch(NodeId),
}

#[derive(Clone, Debug, Default)]
pub struct MergerReport {
    pub violations: Vec<MergerViolation>,
}

impl MergerReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Rename an order relation through an embedding.
fn rename(rel: &OrderRelation, e: &Embedding) -> OrderRelation {
    rel.iter()
        .filter_map(|&(a, b)| Some((*e.get(&a)?, *e.get(&b)?)))
        .collect()
}

/// Transitive closure of the renamed union of two partial orders; reports an
/// explicit cycle when the union is not a strict partial order.
pub fn union_order_closure(
    o0: &OrderRelation,
    o1: &OrderRelation,
    e0: &Embedding,
    e1: &Embedding,
    nodes: &BTreeSet<NodeId>,
) -> Result<OrderRelation, MergeError> {
    for (b, e) in [(0u8, e0), (1u8, e1)] {
        let mut images = BTreeSet::new();
        for (&src, &img) in e {
            if !images.insert(img) {
                return Err(MergeError::NotInjective(b, src));
            }
        }
    }
    let mut union: OrderRelation = rename(o0, e0);
    union.extend(rename(o1, e1));
    match transitive_closure(&union, nodes) {
        Ok(c) => Ok(c),
        Err(PatternError::OrderCycle(v)) => Err(MergeError::Cycle(find_cycle(&union, v))),
        Err(e) => Err(e.into()),
    }
}

fn find_cycle(rel: &OrderRelation, start: NodeId) -> Vec<NodeId> {
    // DFS from the node known to sit on a cycle
    let mut path = vec![start];
    let mut cur = start;
    loop {
        let next = rel
            .iter()
            .filter(|&&(a, _)| a == cur)
            .map(|&(_, b)| b)
            .find(|b| path.contains(b) || can_reach(rel, *b, start));
        match next {
            Some(b) if b == start => return path,
            Some(b) if path.contains(&b) => {
                let i = path.iter().position(|&x| x == b).unwrap();
                return path[i..].to_vec();
            }
            Some(b) => {
                path.push(b);
                cur = b;
            }
            None => return path,
        }
    }
}

fn can_reach(rel: &OrderRelation, from: NodeId, to: NodeId) -> bool {
    let mut seen = BTreeSet::from([from]);
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        for &(a, b) in rel.iter().filter(|&&(a, _)| a == v) {
            debug_assert_eq!(a, v);
            if seen.insert(b) {
                stack.push(b);
            }
        }
    }
    false
}

/// Deterministic topological sort: repeatedly take the smallest NodeId with
/// no unvisited predecessor.
pub fn linear_extension_of(
    closure: &OrderRelation,
    nodes: &BTreeSet<NodeId>,
) -> Result<Vec<NodeId>, PatternError> {
    let mut remaining: BTreeSet<NodeId> = nodes.clone();
    let mut out = Vec::with_capacity(nodes.len());
    while !remaining.is_empty() {
        let next = remaining
            .iter()
            .copied()
            .find(|&v| {
                !closure
                    .iter()
                    .any(|&(a, b)| b == v && a != v && remaining.contains(&a))
            })
            .ok_or_else(|| PatternError::OrderCycle(*remaining.iter().next().unwrap()))?;
        remaining.remove(&next);
        out.push(next);
    }
    Ok(out)
}

pub fn linear_extension(
    closure: &OrderRelation,
    nodes: &BTreeSet<NodeId>,
) -> Result<Vec<NodeId>, PatternError> {
    linear_extension_of(closure, nodes)
}

/// Does an edge of graph `b` survive into the merger, either directly or
/// split by a middle node owned by `b`?
fn edge_realized(m: &MergerGraph, b: u8, u: NodeId, v: NodeId) -> bool {
    if m.graph.has_edge(u, v) {
        return true;
    }
    m.middles
        .iter()
        .any(|(&w, &(a, c, owner))| {
            owner == b
                && ((a == u && c == v) || (a == v && c == u))
                && m.graph.has_edge(u, w)
                && m.graph.has_edge(w, v)
        })
}

/// Check edge preservation of both embeddings and that the total order
/// extends both partial orders.
pub fn verify_merger(
    m: &MergerGraph,
    u0: &MeasurementPattern,
    u1: &MeasurementPattern,
) -> MergerReport {
    let mut report = MergerReport::default();
    for &v in m.graph.nodes() {
        if !m.roles.contains_key(&v) {
            report.violations.push(MergerViolation::RoleMismatch(v));
        }
        if !m.total_order.contains(&v) {
            report.violations.push(MergerViolation::OrderIncomplete(v));
        }
    }
    let pos: BTreeMap<NodeId, usize> =
        m.total_order.iter().copied().zip(0..).collect();
    for (b, p, e) in [(0u8, u0, &m.embed0), (1u8, u1, &m.embed1)] {
        for &(x, y) in p.graph.edges() {
            match (e.get(&x), e.get(&y)) {
                (Some(&ix), Some(&iy)) => {
                    if !edge_realized(m, b, ix, iy) {
                        report.violations.push(MergerViolation::EdgeDropped(b, x, y));
                    }
                }
                _ => report.violations.push(MergerViolation::EdgeDropped(b, x, y)),
            }
        }
        let closure = match p.gflow.closure(p.graph.nodes()) {
            Ok(c) => c,
            Err(_) => continue,
        };
        for &(a, c) in &closure {
            if let (Some(&ia), Some(&ic)) = (e.get(&a), e.get(&c)) {
                match (pos.get(&ia), pos.get(&ic)) {
                    (Some(pa), Some(pc)) if pa < pc => {}
                    _ => report.violations.push(MergerViolation::OrderViolated(b, a, c)),
                }
            }
        }
    }
    report
}

/// The trivial merger: disjoint union of both graphs, all of G_0's measured
/// nodes ordered before G_1's. Node ids are offset to avoid collisions.
pub fn trivial_merger(
    u0: &MeasurementPattern,
    u1: &MeasurementPattern,
) -> Result<MergerGraph, MergeError> {
    let offset = u0.graph.nodes().iter().max().map_or(0, |m| m + 1);
    let embed0: Embedding = u0.graph.nodes().iter().map(|&v| (v, v)).collect();
    let embed1: Embedding = u1.graph.nodes().iter().map(|&v| (v, v + offset)).collect();
    let nodes: Vec<NodeId> = embed0.values().chain(embed1.values()).copied().collect();
    let edges: Vec<(NodeId, NodeId)> = u0
        .graph
        .edges()
        .iter()
        .map(|&(a, b)| (embed0[&a], embed0[&b]))
        .chain(u1.graph.edges().iter().map(|&(a, b)| (embed1[&a], embed1[&b])))
        .collect();
    let inputs: Vec<NodeId> = u0
        .graph
        .inputs
        .iter()
        .map(|v| embed0[v])
        .chain(u1.graph.inputs.iter().map(|v| embed1[v]))
        .collect();
    let outputs: Vec<NodeId> = u0
        .graph
        .outputs
        .iter()
        .map(|v| embed0[v])
        .chain(u1.graph.outputs.iter().map(|v| embed1[v]))
        .collect();
    let graph = OpenGraph::new(nodes, edges, inputs, outputs)?;
    let roles: BTreeMap<NodeId, Role> = embed0
        .values()
        .map(|&v| (v, Role::Only0))
        .chain(embed1.values().map(|&v| (v, Role::Only1)))
        .collect();
    let closure = union_order_closure(
        &u0.gflow.order,
        &u1.gflow.order,
        &embed0,
        &embed1,
        graph.nodes(),
    )?;
    // all of G_0 before all of G_1: add cross pairs then extend
    let mut ordered = closure.clone();
    for &a in embed0.values() {
        for &b in embed1.values() {
            ordered.insert((a, b));
        }
    }
    let closure = transitive_closure(&ordered, graph.nodes())?;
    let total_order = linear_extension_of(&closure, graph.nodes())?;
    Ok(MergerGraph {
        graph,
        embed0,
        embed1,
        roles,
        total_order,
        middles: BTreeMap::new(),
    })
}

/// Replace every single-owner edge between two shared vertices with a
/// two-edge path through a fresh middle node. Middles are ordered before all
/// measured nodes (they are measured first in the computation phase).
pub fn insert_middle_nodes(
    m: &MergerGraph,
    u0: &MeasurementPattern,
    u1: &MeasurementPattern,
) -> Result<MergerGraph, MergeError> {
    let image0: BTreeSet<NodeId> = m.embed0.values().copied().collect();
    let image1: BTreeSet<NodeId> = m.embed1.values().copied().collect();
    let inv0: BTreeMap<NodeId, NodeId> = m.embed0.iter().map(|(&a, &b)| (b, a)).collect();
    let inv1: BTreeMap<NodeId, NodeId> = m.embed1.iter().map(|(&a, &b)| (b, a)).collect();
    let has0 = |u: NodeId, v: NodeId| -> bool {
        match (inv0.get(&u), inv0.get(&v)) {
            (Some(&a), Some(&b)) => u0.graph.has_edge(a, b),
            _ => false,
        }
    };
    let has1 = |u: NodeId, v: NodeId| -> bool {
        match (inv1.get(&u), inv1.get(&v)) {
            (Some(&a), Some(&b)) => u1.graph.has_edge(a, b),
            _ => false,
        }
    };
    let mut next_id = m.graph.nodes().iter().max().map_or(0, |v| v + 1);
    let mut edges: BTreeSet<(NodeId, NodeId)> = m.graph.edges().clone();
    let mut nodes: BTreeSet<NodeId> = m.graph.nodes().clone();
    let mut roles = m.roles.clone();
    let mut middles = m.middles.clone();
    let mut new_middles = Vec::new();
    for &(u, v) in m.graph.edges() {
        let shared_endpoints = image0.contains(&u)
            && image1.contains(&u)
            && image0.contains(&v)
            && image1.contains(&v);
        if !shared_endpoints {
            continue;
        }
        let in0 = has0(u, v);
        let in1 = has1(u, v);
        let owner = match (in0, in1) {
            (true, false) => 0u8,
            (false, true) => 1u8,
            _ => continue,
        };
        let w = next_id;
        next_id += 1;
        edges.remove(&(u.min(v), u.max(v)));
        edges.insert((u.min(w), u.max(w)));
        edges.insert((v.min(w), v.max(w)));
        nodes.insert(w);
        roles.insert(w, Role::BridgeBreakMiddle(owner));
        middles.insert(w, (u, v, owner));
        new_middles.push(w);
    }
    let graph = OpenGraph::new(
        nodes,
        edges,
        m.graph.inputs.clone(),
        m.graph.outputs.clone(),
    )?;
    let mut total_order: Vec<NodeId> = new_middles;
    total_order.extend(m.total_order.iter().copied());
    Ok(MergerGraph {
        graph,
        embed0: m.embed0.clone(),
        embed1: m.embed1.clone(),
        roles,
        total_order,
        middles,
    })
}

/// Add an output-teleportation gadget at `v`, which must be an output of
/// exactly one embedded graph and computational in the other. Returns the
/// augmented merger plus both patterns with the owner pattern extended
/// (v and v1 get angle 0, g(v) = {v1}, g(v1) = {v2}, v2 becomes the output).
pub fn insert_output_teleport(
    m: &MergerGraph,
    u0: &MeasurementPattern,
    u1: &MeasurementPattern,
) -> Result<(MergerGraph, MeasurementPattern, MeasurementPattern), MergeError> {
    let inv0: BTreeMap<NodeId, NodeId> = m.embed0.iter().map(|(&a, &b)| (b, a)).collect();
    let inv1: BTreeMap<NodeId, NodeId> = m.embed1.iter().map(|(&a, &b)| (b, a)).collect();
    let mut merger = m.clone();
    let mut p0 = u0.clone();
    let mut p1 = u1.clone();
    let mut next_id = m.graph.nodes().iter().max().map_or(0, |v| v + 1);
    let mut changed = false;
    for &v in m.graph.nodes() {
        let out0 = inv0.get(&v).is_some_and(|a| u0.graph.is_output(*a));
        let out1 = inv1.get(&v).is_some_and(|a| u1.graph.is_output(*a));
        let comp0 = inv0.get(&v).is_some_and(|a| !u0.graph.is_output(*a));
        let comp1 = inv1.get(&v).is_some_and(|a| !u1.graph.is_output(*a));
        let owner = match (out0 && comp1, out1 && comp0) {
            (true, false) => 0u8,
            (false, true) => 1u8,
            _ => continue,
        };
        changed = true;
        let v1 = next_id;
        let v2 = next_id + 1;
        next_id += 2;
        // extend the merger
        let mut nodes = merger.graph.nodes().clone();
        nodes.extend([v1, v2]);
        let mut edges = merger.graph.edges().clone();
        edges.insert((v.min(v1), v.max(v1)));
        edges.insert((v1.min(v2), v1.max(v2)));
        let mut outputs = merger.graph.outputs.clone();
        outputs.retain(|&o| o != v);
        outputs.push(v2);
        merger.graph =
            OpenGraph::new(nodes, edges, merger.graph.inputs.clone(), outputs)?;
        merger.roles.insert(v1, Role::TeleportMiddle(owner));
        merger.roles.insert(v2, Role::TeleportTerminal(owner));
        merger.total_order.push(v1);
        merger.total_order.push(v2);
        // extend the owner pattern: v measured at 0, then v1 at 0, v2 output
        let owner_pat = if owner == 0 { &mut p0 } else { &mut p1 };
        let (inv, embed) = if owner == 0 {
            (&inv0, &mut merger.embed0)
        } else {
            (&inv1, &mut merger.embed1)
        };
        let local_v = *inv.get(&v).expect("owner image");
        // reuse the merger ids for the fresh local nodes; they are unused locally
        let (lv1, lv2) = (v1, v2);
        let mut nodes = owner_pat.graph.nodes().clone();
        nodes.extend([lv1, lv2]);
        let mut edges = owner_pat.graph.edges().clone();
        edges.insert((local_v.min(lv1), local_v.max(lv1)));
        edges.insert((lv1.min(lv2), lv1.max(lv2)));
        let mut outputs = owner_pat.graph.outputs.clone();
        outputs.retain(|&o| o != local_v);
        outputs.push(lv2);
        owner_pat.graph =
            OpenGraph::new(nodes, edges, owner_pat.graph.inputs.clone(), outputs)?;
        owner_pat.angles.insert(local_v, Octant::new(0));
        owner_pat.angles.insert(lv1, Octant::new(0));
        owner_pat.gflow.g.insert(local_v, BTreeSet::from([lv1]));
        owner_pat.gflow.g.insert(lv1, BTreeSet::from([lv2]));
        let mut order = owner_pat.gflow.order.clone();
        // v follows every previously measured node, then v1, then v2
        for w in owner_pat.graph.nodes().iter().copied() {
            if w != local_v && w != lv1 && w != lv2 && !owner_pat.graph.is_output(w) {
                order.insert((w, local_v));
            }
        }
        order.insert((local_v, lv1));
        order.insert((lv1, lv2));
        owner_pat.gflow = GFlow { g: owner_pat.gflow.g.clone(), order };
        embed.insert(lv1, v1);
        embed.insert(lv2, v2);
    }
    if !changed {
        return Err(MergeError::NotMixedOutput(0));
    }
    // the total order may now violate the extended owner orders; rebuild it
    let closure = union_order_closure(
        &p0.gflow.order,
        &p1.gflow.order,
        &merger.embed0,
        &merger.embed1,
        merger.graph.nodes(),
    )?;
    let middles: Vec<NodeId> = merger
        .roles
        .iter()
        .filter(|(_, r)| matches!(r, Role::BridgeBreakMiddle(_)))
        .map(|(&v, _)| v)
        .collect();
    let rest: BTreeSet<NodeId> = merger
        .graph
        .nodes()
        .iter()
        .copied()
        .filter(|v| !middles.contains(v))
        .collect();
    let mut total_order = middles;
    total_order.extend(linear_extension_of(&closure, &rest)?);
    merger.total_order = total_order;
    Ok((merger, p0, p1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_closure_examples() {
        let e: Embedding = [(1, 1), (2, 2), (3, 3)].into();
        let nodes: BTreeSet<NodeId> = [1, 2, 3].into();
        // disjoint-ish: renamed union
        let o0: OrderRelation = [(1, 2)].into();
        let o1: OrderRelation = [(2, 3)].into();
        let c = union_order_closure(&o0, &o1, &e, &e, &nodes).unwrap();
        assert!(c.contains(&(1, 3)), "transitivity completed");
        // 2-cycle
        let o1: OrderRelation = [(2, 1)].into();
        let err = union_order_closure(&o0, &o1, &e, &e, &nodes).unwrap_err();
        match err {
            MergeError::Cycle(cycle) => {
                assert!(cycle.contains(&1) && cycle.contains(&2));
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn linear_extension_examples() {
        let nodes: BTreeSet<NodeId> = [3, 1, 2].into();
        assert_eq!(linear_extension(&OrderRelation::new(), &nodes).unwrap(), vec![1, 2, 3]);
        let chain: OrderRelation = [(3, 1), (1, 2)].into();
        let closure = transitive_closure(&chain, &nodes).unwrap();
        assert_eq!(linear_extension(&closure, &nodes).unwrap(), vec![3, 1, 2]);
        // diamond 1<2, 1<3, 2<4, 3<4 -> [1,2,3,4]
        let nodes: BTreeSet<NodeId> = [1, 2, 3, 4].into();
        let d: OrderRelation = [(1, 2), (1, 3), (2, 4), (3, 4)].into();
        let closure = transitive_closure(&d, &nodes).unwrap();
        assert_eq!(linear_extension(&closure, &nodes).unwrap(), vec![1, 2, 3, 4]);
    }
}
