//! Ready-made protocol instances exercising every mask class, plus a random
//! wire-grid pattern generator with a valid causal flow by construction.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::masking::{InputKind, InputSpec};
use crate::merge::{
    insert_middle_nodes, insert_output_teleport, linear_extension_of, trivial_merger,
    union_order_closure, Embedding, MergerGraph, Role,
};
use crate::pattern::{GFlow, MeasurementPattern, NodeId, Octant, OpenGraph};
use crate::protocol::ProtocolInstance;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Compact pattern builder; angles listed per measured node.
pub fn build_pattern(
    nodes: &[NodeId],
    edges: &[(NodeId, NodeId)],
    inputs: &[NodeId],
    outputs: &[NodeId],
    g: &[(NodeId, &[NodeId])],
    order: &[(NodeId, NodeId)],
    angles: &[(NodeId, i64)],
) -> MeasurementPattern {
    let graph = OpenGraph::new(
        nodes.to_vec(),
        edges.to_vec(),
        inputs.to_vec(),
        outputs.to_vec(),
    )
    .expect("valid fixture graph");
    let g = g
        .iter()
        .map(|&(v, ws)| (v, ws.iter().copied().collect::<BTreeSet<_>>()))
        .collect();
    let order = order.iter().copied().collect();
    let angles = angles.iter().map(|&(v, k)| (v, Octant::new(k))).collect();
    MeasurementPattern { graph, gflow: GFlow { g, order }, angles }
}

/// Merge two patterns that already share node ids (identity embeddings on
/// the union), with roles derived from membership.
pub fn shared_merger(u0: &MeasurementPattern, u1: &MeasurementPattern) -> MergerGraph {
    let n0 = u0.graph.nodes();
    let n1 = u1.graph.nodes();
    let nodes: BTreeSet<NodeId> = n0.union(n1).copied().collect();
    let edges: BTreeSet<(NodeId, NodeId)> =
        u0.graph.edges().union(u1.graph.edges()).copied().collect();
    let inputs: BTreeSet<NodeId> = u0
        .graph
        .inputs
        .iter()
        .chain(&u1.graph.inputs)
        .copied()
        .collect();
    let outputs: BTreeSet<NodeId> = u0
        .graph
        .outputs
        .iter()
        .chain(&u1.graph.outputs)
        .copied()
        .collect();
    let graph = OpenGraph::new(
        nodes.iter().copied().collect::<Vec<_>>(),
        edges.iter().copied().collect::<Vec<_>>(),
        inputs.into_iter().collect::<Vec<_>>(),
        outputs.into_iter().collect::<Vec<_>>(),
    )
    .expect("valid merged graph");
    let embed0: Embedding = n0.iter().map(|&v| (v, v)).collect();
    let embed1: Embedding = n1.iter().map(|&v| (v, v)).collect();
    let roles: BTreeMap<NodeId, Role> = nodes
        .iter()
        .map(|&v| {
            let role = match (n0.contains(&v), n1.contains(&v)) {
                (true, true) => Role::Shared,
                (true, false) => Role::Only0,
                (false, true) => Role::Only1,
                (false, false) => unreachable!(),
            };
            (v, role)
        })
        .collect();
    let closure = union_order_closure(&u0.gflow.order, &u1.gflow.order, &embed0, &embed1, &nodes)
        .expect("acyclic fixture orders");
    let total_order = linear_extension_of(&closure, &nodes).expect("linear extension");
    MergerGraph { graph, embed0, embed1, roles, total_order, middles: BTreeMap::new() }
}

fn public_spec(m: &MergerGraph) -> InputSpec {
    m.graph.inputs.iter().map(|&v| (v, InputKind::Public)).collect()
}

fn default_inputs(m: &MergerGraph) -> BTreeMap<NodeId, [Complex64; 2]> {
    // a fixed non-Pauli, non-equatorial state
    m.graph
        .inputs
        .iter()
        .map(|&v| (v, [c(0.6, 0.0), c(0.48, 0.64)]))
        .collect()
}

/// One differing angle on an interior node. Exercises QuantumQuarterPi,
/// ClassicalPi and QuantumHalfPi cone masking, PublicInput and NoMask.
pub fn angle_diff_instance() -> ProtocolInstance {
    let chain = |a2: i64| {
        build_pattern(
            &[1, 2, 3, 4, 5],
            &[(1, 2), (2, 3), (3, 4), (4, 5)],
            &[1],
            &[5],
            &[(1, &[2]), (2, &[3]), (3, &[4]), (4, &[5])],
            &[(1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (3, 5), (4, 5)],
            &[(1, 0), (2, a2), (3, 2), (4, 1)],
        )
    };
    let u0 = chain(1);
    let u1 = chain(3);
    let merger = shared_merger(&u0, &u1);
    let input_spec = public_spec(&merger);
    let inputs = default_inputs(&merger);
    ProtocolInstance { u0, u1, merger, input_spec, inputs }
}

/// Two wires with a cross edge present only in U0: the edge becomes a
/// bridge/break middle. Exercises BridgeBreakMiddle and the half-pi side
/// masks.
pub fn bridge_break_instance() -> ProtocolInstance {
    let wires = |rung: bool| {
        let mut edges = vec![(1, 2), (2, 3), (4, 5), (5, 6)];
        if rung {
            edges.push((2, 5));
        }
        let order: &[(NodeId, NodeId)] = &[
            (1, 2),
            (1, 3),
            (1, 5),
            (4, 5),
            (4, 6),
            (4, 2),
            (2, 3),
            (5, 6),
        ];
        build_pattern(
            &[1, 2, 3, 4, 5, 6],
            &edges,
            &[1, 4],
            &[3, 6],
            &[(1, &[2]), (2, &[3]), (4, &[5]), (5, &[6])],
            order,
            &[(1, 1), (2, 1), (4, 1), (5, 1)],
        )
    };
    let u0 = wires(true);
    let u1 = wires(false);
    let merger = shared_merger(&u0, &u1);
    let merger = insert_middle_nodes(&merger, &u0, &u1).expect("middle insertion");
    let input_spec = public_spec(&merger);
    let inputs = default_inputs(&merger);
    ProtocolInstance { u0, u1, merger, input_spec, inputs }
}

/// U1 has an extra measured pendant node and an extra isolated output.
/// Exercises DeleteOrKeep for measured and output nodes.
pub fn delete_keep_instance() -> ProtocolInstance {
    let u0 = build_pattern(
        &[1, 2, 3, 4, 5],
        &[(1, 2), (2, 3), (3, 4), (4, 5)],
        &[1],
        &[5],
        &[(1, &[2]), (2, &[3]), (3, &[4]), (4, &[5])],
        &[(1, 2), (2, 3), (3, 4), (4, 5), (1, 3), (2, 4), (3, 5)],
        &[(1, 0), (2, 1), (3, 2), (4, 1)],
    );
    // extra measured tail 5-6-7 with g(6) = {7}: 6 is deleted when running
    // U0, and the extra output 7 is kept or deleted wholesale
    let u1 = build_pattern(
        &[1, 2, 3, 4, 5, 6, 7],
        &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7)],
        &[1],
        &[5, 7],
        &[(1, &[2]), (2, &[3]), (3, &[4]), (4, &[5]), (6, &[7])],
        &[
            (1, 2),
            (2, 3),
            (3, 4),
            (4, 5),
            (1, 3),
            (2, 4),
            (3, 5),
            (4, 6),
            (6, 7),
        ],
        &[(1, 0), (2, 1), (3, 2), (4, 1), (6, 1)],
    );
    let merger = shared_merger(&u0, &u1);
    let input_spec = public_spec(&merger);
    let inputs = default_inputs(&merger);
    ProtocolInstance { u0, u1, merger, input_spec, inputs }
}

/// U0 stops at node 3 while U1 continues through it: node 3 is teleported
/// out when running U0. Exercises TeleportMiddle and TeleportTerminal.
pub fn teleport_instance() -> ProtocolInstance {
    let u0 = build_pattern(
        &[1, 2, 3],
        &[(1, 2), (2, 3)],
        &[1],
        &[3],
        &[(1, &[2]), (2, &[3])],
        &[(1, 2), (2, 3), (1, 3)],
        &[(1, 0), (2, 1)],
    );
    let u1 = build_pattern(
        &[1, 2, 3, 4, 5],
        &[(1, 2), (2, 3), (3, 4), (4, 5)],
        &[1],
        &[5],
        &[(1, &[2]), (2, &[3]), (3, &[4]), (4, &[5])],
        &[(1, 2), (2, 3), (3, 4), (4, 5), (1, 3), (2, 4), (3, 5)],
        &[(1, 0), (2, 1), (3, 1), (4, 2)],
    );
    let merger = shared_merger(&u0, &u1);
    let (merger, u0, u1) = insert_output_teleport(&merger, &u0, &u1).expect("teleport gadget");
    let input_spec = public_spec(&merger);
    let inputs = default_inputs(&merger);
    ProtocolInstance { u0, u1, merger, input_spec, inputs }
}

/// Identical computations with one private and one public input. Exercises
/// EncryptedInput with a clear NoMask region elsewhere.
pub fn encrypted_input_instance() -> ProtocolInstance {
    let wires = || {
        build_pattern(
            &[1, 2, 3, 4, 5, 6],
            &[(1, 2), (2, 3), (4, 5), (5, 6), (2, 5)],
            &[1, 4],
            &[3, 6],
            &[(1, &[2]), (2, &[3]), (4, &[5]), (5, &[6])],
            &[
                (1, 2),
                (1, 3),
                (1, 5),
                (4, 5),
                (4, 6),
                (4, 2),
                (2, 3),
                (5, 6),
            ],
            &[(1, 1), (2, 1), (4, 0), (5, 0)],
        )
    };
    let u0 = wires();
    let u1 = wires();
    let merger = shared_merger(&u0, &u1);
    let mut input_spec = public_spec(&merger);
    input_spec.insert(1, InputKind::Private);
    let inputs = default_inputs(&merger);
    ProtocolInstance { u0, u1, merger, input_spec, inputs }
}

/// An input of U0 that is a computation node of U1, plus an input existing
/// only in U1. Exercises the remaining input-collision cases.
pub fn input_collision_instance() -> ProtocolInstance {
    let u0 = build_pattern(
        &[1, 2, 3],
        &[(1, 2), (2, 3)],
        &[1],
        &[3],
        &[(1, &[2]), (2, &[3])],
        &[(1, 2), (2, 3), (1, 3)],
        &[(1, 1), (2, 2)],
    );
    let u1 = build_pattern(
        &[9, 1, 2, 3],
        &[(9, 1), (1, 2), (2, 3)],
        &[9],
        &[3],
        &[(9, &[1]), (1, &[2]), (2, &[3])],
        &[(9, 1), (1, 2), (2, 3), (9, 2), (1, 3)],
        &[(9, 0), (1, 1), (2, 2)],
    );
    let merger = shared_merger(&u0, &u1);
    let mut input_spec = public_spec(&merger);
    input_spec.insert(1, InputKind::Public);
    input_spec.insert(9, InputKind::Public);
    let inputs = default_inputs(&merger);
    ProtocolInstance { u0, u1, merger, input_spec, inputs }
}

/// Disjoint union of two unrelated computations: everything is deleted or
/// kept wholesale.
pub fn disjoint_instance() -> ProtocolInstance {
    let chain = |k: i64| {
        build_pattern(
            &[1, 2, 3],
            &[(1, 2), (2, 3)],
            &[1],
            &[3],
            &[(1, &[2]), (2, &[3])],
            &[(1, 2), (2, 3), (1, 3)],
            &[(1, k), (2, k)],
        )
    };
    let u0 = chain(1);
    let u1 = chain(2);
    let merger = trivial_merger(&u0, &u1).expect("trivial merger");
    let input_spec = InputSpec::new();
    let inputs = default_inputs(&merger);
    ProtocolInstance { u0, u1, merger, input_spec, inputs }
}

/// Every fixture, with a short name for reporting.
pub fn all_instances() -> Vec<(&'static str, ProtocolInstance)> {
    vec![
        ("angle-diff", angle_diff_instance()),
        ("bridge-break", bridge_break_instance()),
        ("delete-keep", delete_keep_instance()),
        ("teleport", teleport_instance()),
        ("encrypted-input", encrypted_input_instance()),
        ("input-collision", input_collision_instance()),
        ("disjoint", disjoint_instance()),
    ]
}

/// Random pattern on a wire grid: `wires` horizontal chains of `cols` nodes,
/// optional rungs between vertically adjacent nodes of the same column, and
/// random octant angles. The causal flow "next node on the wire" with the
/// column-major order is always valid.
pub fn random_wire_grid(
    wires: usize,
    cols: usize,
    rung_prob: f64,
    rng: &mut ChaCha12Rng,
) -> MeasurementPattern {
    assert!(wires >= 1 && cols >= 2);
    let id = |w: usize, col: usize| -> NodeId { (w * cols + col + 1) as NodeId };
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut g: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut order = BTreeSet::new();
    let mut angles = BTreeMap::new();
    for w in 0..wires {
        for col in 0..cols {
            nodes.push(id(w, col));
            if col + 1 < cols {
                edges.push((id(w, col), id(w, col + 1)));
                g.insert(id(w, col), BTreeSet::from([id(w, col + 1)]));
                angles.insert(id(w, col), Octant::new(rng.gen_range(0..8)));
            }
        }
    }
    for col in 0..cols {
        for w in 0..wires.saturating_sub(1) {
            if rng.gen::<f64>() < rung_prob {
                edges.push((id(w, col), id(w + 1, col)));
            }
        }
    }
    // any node strictly left of another precedes it
    for &u in &nodes {
        for &v in &nodes {
            let (cu, cv) = (((u - 1) as usize) % cols, ((v - 1) as usize) % cols);
            if cu < cv {
                order.insert((u, v));
            }
        }
    }
    let inputs: Vec<NodeId> = (0..wires).map(|w| id(w, 0)).collect();
    let outputs: Vec<NodeId> = (0..wires).map(|w| id(w, cols - 1)).collect();
    let graph = OpenGraph::new(nodes, edges, inputs, outputs).expect("grid graph");
    MeasurementPattern { graph, gflow: GFlow { g, order }, angles }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::MaskClass;
    use crate::merge::verify_merger;
    use crate::pattern::verify_gflow;
    use rand::SeedableRng;

    #[test]
    fn fixtures_are_well_formed() {
        for (name, inst) in all_instances() {
            assert!(verify_gflow(&inst.u0).ok(), "{name}: u0 gflow");
            assert!(verify_gflow(&inst.u1).ok(), "{name}: u1 gflow");
            let report = verify_merger(&inst.merger, &inst.u0, &inst.u1);
            assert!(report.ok(), "{name}: merger: {:?}", report.violations);
            inst.plan().unwrap_or_else(|e| panic!("{name}: plan: {e}"));
        }
    }

    #[test]
    fn fixtures_cover_every_mask_class() {
        let mut seen = BTreeSet::new();
        for (_, inst) in all_instances() {
            let plan = inst.plan().unwrap();
            seen.extend(plan.classes.values().copied());
        }
        for class in [
            MaskClass::NoMask,
            MaskClass::ClassicalPi,
            MaskClass::QuantumHalfPi,
            MaskClass::QuantumQuarterPi,
            MaskClass::DeleteOrKeep,
            MaskClass::BridgeBreakMiddle,
            MaskClass::TeleportMiddle,
            MaskClass::EncryptedInput,
            MaskClass::PublicInput,
        ] {
            assert!(seen.contains(&class), "missing class {class:?}");
        }
    }

    #[test]
    fn fixtures_run_correctly_end_to_end() {
        use crate::protocol::{reference_run, sbqc_run};
        for (name, inst) in all_instances() {
            for choice in 0..2u8 {
                for seed in 0..3u64 {
                    let run = sbqc_run(&inst, choice, seed)
                        .unwrap_or_else(|e| panic!("{name}/{choice}/{seed}: {e}"));
                    let expect = reference_run(&inst, choice, &run.true_outcomes).unwrap();
                    let f = run.output.fidelity(&expect).unwrap();
                    assert!(
                        (f - 1.0).abs() < 1e-9,
                        "{name} choice {choice} seed {seed}: fidelity {f}"
                    );
                }
            }
        }
    }

    #[test]
    fn random_grids_have_valid_gflow() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let wires = rng.gen_range(1..4usize);
            let cols = rng.gen_range(2..5usize);
            let p = random_wire_grid(wires, cols, 0.5, &mut rng);
            assert!(verify_gflow(&p).ok());
        }
    }
}
