use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use sbqc::blindness::{tv_distance, TranscriptDistribution};
use sbqc::fixtures::random_wire_grid;
use sbqc::format::{parse_pattern, serialize_pattern};
use sbqc::merge::union_order_closure;
use sbqc::nogo::{guess_probability, min_m, product_deviation};
use sbqc::pattern::{
    apply_corrections, measurement_order, odd_neighbourhood, transitive_closure,
    verify_gflow, NodeId, Octant, OpenGraph,
};
use sbqc::sim::{run_pattern, OutcomeSource, Preparation, StateVector};

fn grid(seed: u64, wires: usize, cols: usize) -> sbqc::pattern::MeasurementPattern {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    random_wire_grid(wires, cols, 0.5, &mut rng)
}

fn plus_inputs(p: &sbqc::pattern::MeasurementPattern) -> StateVector {
    let mut state = StateVector::empty();
    for &i in &p.graph.inputs {
        state.prepare(i, Preparation::PlusTheta(Octant::new(0))).unwrap();
    }
    state
}

proptest! {
    #[test]
    fn octant_arithmetic_is_mod_8(a in 0i64..8, b in -32i64..32) {
        let x = Octant::new(a);
        let y = Octant::new(b);
        prop_assert_eq!((x + y).k() as i64, (a + b).rem_euclid(8));
        prop_assert_eq!((x - y).k() as i64, (a - b).rem_euclid(8));
        prop_assert_eq!((x + x.neg()).k(), 0);
        prop_assert!((x.radians() - a as f64 * std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn correction_formula(k in 0i64..8, sx in 0u8..2, sz in 0u8..2) {
        let expect = ((if sx == 1 { -k } else { k }) + 4 * sz as i64).rem_euclid(8);
        prop_assert_eq!(apply_corrections(Octant::new(k), sx, sz).k() as i64, expect);
    }

    #[test]
    fn odd_neighbourhood_respects_symmetric_difference(
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<u8>(), 2),
    ) {
        let p = grid(seed, 3, 3);
        let g = &p.graph;
        let all: Vec<NodeId> = g.nodes().iter().copied().collect();
        let subset = |mask: u8| -> BTreeSet<NodeId> {
            all.iter()
                .enumerate()
                .filter(|(i, _)| mask >> (i % 8) & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        };
        let k1 = subset(picks[0]);
        let k2 = subset(picks[1]);
        let sym: BTreeSet<NodeId> = k1.symmetric_difference(&k2).copied().collect();
        let lhs = odd_neighbourhood(g, &sym).unwrap();
        let o1 = odd_neighbourhood(g, &k1).unwrap();
        let o2 = odd_neighbourhood(g, &k2).unwrap();
        let rhs: BTreeSet<NodeId> = o1.symmetric_difference(&o2).copied().collect();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn closure_is_transitive_and_idempotent(
        pairs in prop::collection::vec((1u32..8, 1u32..8), 0..16),
    ) {
        let nodes: BTreeSet<NodeId> = (1..8).collect();
        // keep only forward pairs so the relation is acyclic
        let rel: BTreeSet<(NodeId, NodeId)> =
            pairs.into_iter().filter(|&(a, b)| a < b).collect();
        let closed = transitive_closure(&rel, &nodes).unwrap();
        prop_assert!(rel.iter().all(|p| closed.contains(p)));
        for &(a, b) in &closed {
            for &(c, d) in &closed {
                if b == c {
                    prop_assert!(closed.contains(&(a, d)));
                }
            }
        }
        prop_assert_eq!(transitive_closure(&closed, &nodes).unwrap(), closed);
    }

    #[test]
    fn union_closure_contains_both_orders(
        pairs0 in prop::collection::vec((1u32..7, 1u32..7), 0..10),
        pairs1 in prop::collection::vec((1u32..7, 1u32..7), 0..10),
    ) {
        let nodes: BTreeSet<NodeId> = (1..7).collect();
        let o0: BTreeSet<(NodeId, NodeId)> =
            pairs0.into_iter().filter(|&(a, b)| a < b).collect();
        let o1: BTreeSet<(NodeId, NodeId)> =
            pairs1.into_iter().filter(|&(a, b)| a < b).collect();
        let id: BTreeMap<NodeId, NodeId> = nodes.iter().map(|&v| (v, v)).collect();
        let closed = union_order_closure(&o0, &o1, &id, &id, &nodes).unwrap();
        prop_assert!(o0.union(&o1).all(|p| closed.contains(p)));
    }

    #[test]
    fn random_grids_verify_and_run_deterministically(
        seed in any::<u64>(),
        wires in 1usize..3,
        cols in 2usize..4,
    ) {
        let p = grid(seed, wires, cols);
        prop_assert!(verify_gflow(&p).ok());
        let order = measurement_order(&p).unwrap();
        let zeros = vec![0u8; order.len()];
        let mut ones = vec![0u8; order.len()];
        if !ones.is_empty() { ones[0] = 1; }
        let (s0, _) = run_pattern(&p, &plus_inputs(&p), &mut OutcomeSource::forced(zeros)).unwrap();
        let (s1, _) = run_pattern(&p, &plus_inputs(&p), &mut OutcomeSource::forced(ones)).unwrap();
        prop_assert!(s0.fidelity(&s1).unwrap() >= 1.0 - 1e-9);
    }

    #[test]
    fn graph_state_operations_preserve_norm(seed in any::<u64>(), k in 0i64..8) {
        let p = grid(seed, 2, 2);
        let mut state = plus_inputs(&p);
        for &v in p.graph.nodes() {
            if !p.graph.is_input(v) {
                state.prepare(v, Preparation::PlusTheta(Octant::new(k))).unwrap();
            }
        }
        state.entangle_graph(&p.graph).unwrap();
        prop_assert!((state.norm_sq() - 1.0).abs() < 1e-10);
        let first = *p.graph.nodes().iter().next().unwrap();
        state.apply_z_phase(first, Octant::new(k).radians()).unwrap();
        state.apply_x(first).unwrap();
        state.apply_z(first).unwrap();
        prop_assert!((state.norm_sq() - 1.0).abs() < 1e-10);
        let mut src = OutcomeSource::seeded(seed);
        state.measure_xy(first, Octant::new(k), &mut src).unwrap();
        prop_assert!((state.norm_sq() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn deviation_bounds_and_phase_invariance(
        re in prop::collection::vec(-1.0f64..1.0, 4),
        im in prop::collection::vec(-1.0f64..1.0, 4),
        phase in 0.0f64..std::f64::consts::TAU,
    ) {
        let v: Vec<Complex64> =
            re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        prop_assume!(norm > 1e-6);
        let state = [v[0], v[1], v[2], v[3]];
        let dev = product_deviation(&state);
        prop_assert!((0.0..=0.5 + 1e-12).contains(&dev));
        // local phase on the first qubit
        let ph = Complex64::from_polar(1.0, phase);
        let rotated = [v[0], v[1], ph * v[2], ph * v[3]];
        prop_assert!((product_deviation(&rotated) - dev).abs() < 1e-9);
    }

    #[test]
    fn tv_distance_is_a_bounded_metric(
        a in prop::collection::vec(1u64..20, 4),
        b in prop::collection::vec(1u64..20, 4),
    ) {
        let dist = |counts: &[u64]| TranscriptDistribution {
            counts: counts.iter().enumerate().map(|(i, &c)| (vec![i as u8], c)).collect(),
            n: counts.iter().sum(),
        };
        let da = dist(&a);
        let db = dist(&b);
        let tv = tv_distance(&da, &db);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        prop_assert!((tv - tv_distance(&db, &da)).abs() < 1e-12);
        prop_assert!(tv_distance(&da, &da).abs() < 1e-12);
    }

    #[test]
    fn pattern_files_round_trip(seed in any::<u64>(), wires in 1usize..4, cols in 2usize..5) {
        let p = grid(seed, wires, cols);
        let parsed = parse_pattern(&serialize_pattern(&p)).unwrap();
        prop_assert_eq!(parsed, p);
    }

    #[test]
    fn guessing_bound_is_exact(theta in 2u32..12, m in 0u32..12, k in 4u32..24) {
        let (num, den) = guess_probability(theta, m);
        prop_assert_eq!(num, 1);
        prop_assert_eq!(den, (theta as u128).pow(m));
        // minimality of min_m against n = 2^k, c = 2
        let m_star = min_m(theta, 1u64 << k, 2);
        let target = (1u128 << k).pow(2);
        prop_assert!((theta as u128).pow(m_star) >= target);
        if m_star > 0 {
            prop_assert!((theta as u128).pow(m_star - 1) < target);
        }
    }
}

#[test]
fn relabel_round_trip() {
    let p = grid(11, 2, 3);
    let (mut state, _) =
        run_pattern(&p, &plus_inputs(&p), &mut OutcomeSource::seeded(3)).unwrap();
    let labels: Vec<NodeId> = state.labels().to_vec();
    let fwd: BTreeMap<NodeId, NodeId> = labels.iter().map(|&l| (l, l + 100)).collect();
    let back: BTreeMap<NodeId, NodeId> = labels.iter().map(|&l| (l + 100, l)).collect();
    let original = state.clone();
    state.relabel(&fwd).unwrap();
    assert!(state.labels().iter().all(|l| *l >= 100));
    state.relabel(&back).unwrap();
    assert_eq!(state.labels(), original.labels());
    assert!(state.fidelity(&original).unwrap() >= 1.0 - 1e-12);
}

#[test]
fn open_graph_rejects_self_loops_and_unknown_nodes() {
    assert!(OpenGraph::new([1, 2], [(1, 1)], vec![1], vec![2]).is_err());
    assert!(OpenGraph::new([1, 2], [(1, 3)], vec![1], vec![2]).is_err());
    assert!(OpenGraph::new([1, 2], [(1, 2)], vec![1, 1], vec![2]).is_err());
}
