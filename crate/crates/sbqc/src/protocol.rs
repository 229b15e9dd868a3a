//! Interactive delegated-computation runs: plain blind execution of a single
//! pattern, and the selective two-pattern protocol where the server executes
//! a merger graph without learning which embedded computation it is running.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::masking::{classify_nodes, AngleRule, InputSpec, MaskClass, MaskingError, MaskingPlan};
use crate::merge::{Embedding, MergerGraph, Role};
use crate::pattern::{
    corrected_angle, correction_sets, measurement_order, MeasurementPattern, NodeId, Octant,
    OutcomeMap, PatternError,
};
use crate::sim::{
    apply_output_byproducts, product_state, run_pattern, OutcomeSource, Preparation, SimError,
    StateVector,
};

const BORN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const SERVER_SALT: u64 = 0xd1b5_4a32_d192_ed03;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("choice must be 0 or 1, got {0}")]
    BadChoice(u8),
    #[error("no input state supplied for node {0}")]
    MissingInputState(NodeId),
    #[error("node {0} is an output of one computation and measured in the merger; insert a teleport gadget first")]
    MixedOutput(NodeId),
    #[error("middle {0} must be measured before its side vertices")]
    MiddleNotMeasured(NodeId),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
}

/// One entry of the client-server conversation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Prepared { node: NodeId },
    MeasureAt { node: NodeId, delta: Octant },
    Outcome { node: NodeId, bit: u8 },
    OutputsReturned { nodes: Vec<NodeId> },
}

pub type Transcript = Vec<Message>;

/// The classical view the server gets: measurement angles and reported
/// outcomes, in conversation order. Preparation and output messages carry no
/// per-run information beyond the public plan.
pub fn classical_transcript(t: &Transcript) -> Vec<u8> {
    let mut out = Vec::new();
    for m in t {
        match m {
            Message::MeasureAt { delta, .. } => out.push(delta.k()),
            Message::Outcome { bit, .. } => out.push(0x10 | (bit & 1)),
            _ => {}
        }
    }
    out
}

/// Everything the client keeps secret during a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClientSecrets {
    pub theta: BTreeMap<NodeId, Octant>,
    pub r: BTreeMap<NodeId, u8>,
    pub a: BTreeMap<NodeId, u8>,
    /// break/bridge and delete/keep bits, and the teleport sign bit
    pub bit: BTreeMap<NodeId, u8>,
}

pub struct UbqcRun {
    pub output: StateVector,
    pub true_outcomes: OutcomeMap,
    pub transcript: Transcript,
    pub secrets: ClientSecrets,
}

/// Blind execution of a single pattern: every node is sent as |+_theta>
/// (inputs as Z(theta) X^a of the input state) and measured at
/// delta = (-1)^a phi' + a-folds + theta + r*pi.
pub fn ubqc_run(
    pattern: &MeasurementPattern,
    input: &StateVector,
    seed: u64,
) -> Result<UbqcRun, ProtocolError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut src = OutcomeSource::seeded(seed ^ BORN_SALT);
    let graph = &pattern.graph;
    let mut state = input.clone();
    let mut secrets = ClientSecrets::default();
    let mut transcript = Transcript::new();
    for &v in graph.nodes() {
        let theta = Octant::new(rng.gen_range(0..8));
        let r = rng.gen_range(0..2u8);
        let a = rng.gen_range(0..2u8);
        secrets.theta.insert(v, theta);
        secrets.r.insert(v, r);
        if graph.is_input(v) {
            secrets.a.insert(v, a);
            if a == 1 {
                state.apply_x(v)?;
            }
            state.apply_z_phase(v, theta.radians())?;
        } else {
            state.prepare(v, Preparation::PlusTheta(theta))?;
        }
        transcript.push(Message::Prepared { node: v });
    }
    state.entangle_graph(graph)?;
    let mut outcomes = OutcomeMap::new();
    for v in measurement_order(pattern)? {
        let phi = corrected_angle(pattern, v, &outcomes)?;
        let mut k = if secrets.a.get(&v) == Some(&1) {
            phi.neg().k() as i64
        } else {
            phi.k() as i64
        };
        for u in graph.neighbours(v) {
            k += 4 * secrets.a.get(&u).copied().unwrap_or(0) as i64;
        }
        k += secrets.theta[&v].k() as i64 + 4 * secrets.r[&v] as i64;
        let delta = Octant::new(k);
        transcript.push(Message::MeasureAt { node: v, delta });
        let raw = state.measure_xy(v, delta, &mut src)?;
        transcript.push(Message::Outcome { node: v, bit: raw });
        outcomes.insert(v, raw ^ secrets.r[&v]);
    }
    // the theta pad and the neighbour a-folds sit outside the byproducts
    // (they were applied at preparation time and commute with everything
    // diagonal), so they must be undone before the X corrections
    for &o in &graph.outputs {
        state.apply_z_phase(o, secrets.theta[&o].neg().radians())?;
        let fold = graph
            .neighbours(o)
            .iter()
            .fold(0u8, |acc, u| acc ^ secrets.a.get(u).copied().unwrap_or(0));
        if fold == 1 {
            state.apply_z(o)?;
        }
    }
    apply_output_byproducts(pattern, &outcomes, &mut state)?;
    transcript.push(Message::OutputsReturned { nodes: graph.outputs.clone() });
    Ok(UbqcRun { output: state, true_outcomes: outcomes, transcript, secrets })
}

/// A pair of public computations embedded in one public merger, plus the
/// (possibly private) input states keyed by merger node id. Inputs are
/// single-qubit product states.
#[derive(Clone, Debug)]
pub struct ProtocolInstance {
    pub u0: MeasurementPattern,
    pub u1: MeasurementPattern,
    pub merger: MergerGraph,
    pub input_spec: InputSpec,
    pub inputs: BTreeMap<NodeId, [Complex64; 2]>,
}

impl ProtocolInstance {
    pub fn plan(&self) -> Result<MaskingPlan, MaskingError> {
        classify_nodes(&self.u0, &self.u1, &self.merger, &self.input_spec)
    }

    pub fn pattern(&self, choice: u8) -> &MeasurementPattern {
        if choice == 0 {
            &self.u0
        } else {
            &self.u1
        }
    }

    fn embedding(&self, choice: u8) -> &Embedding {
        if choice == 0 {
            &self.merger.embed0
        } else {
            &self.merger.embed1
        }
    }
}

fn invert(e: &Embedding) -> BTreeMap<NodeId, NodeId> {
    e.iter().map(|(&a, &b)| (b, a)).collect()
}

pub struct PreparedRun {
    pub secrets: ClientSecrets,
    pub state: StateVector,
    pub transcript: Transcript,
}

/// Preparation phase: the client sends one qubit per merger node, chosen by
/// the node's mask class and the secret choice bit.
pub fn sbqc_prepare(
    inst: &ProtocolInstance,
    plan: &MaskingPlan,
    choice: u8,
    rng: &mut ChaCha12Rng,
) -> Result<PreparedRun, ProtocolError> {
    if choice > 1 {
        return Err(ProtocolError::BadChoice(choice));
    }
    let inv = invert(inst.embedding(choice));
    let pat = inst.pattern(choice);
    let gm = &inst.merger.graph;
    let mut secrets = ClientSecrets::default();
    let mut state = StateVector::empty();
    let mut transcript = Transcript::new();
    for &v in gm.nodes() {
        // fixed draw count per node keeps the client's random stream aligned
        // across both choices
        let th8 = rng.gen_range(0..8i64);
        let r = rng.gen_range(0..2u8);
        let a = rng.gen_range(0..2u8);
        let bit = rng.gen_range(0..2u8);
        secrets.r.insert(v, r);
        secrets.bit.insert(v, bit);
        let class = plan.class(v);
        let theta = match class.theta_set_size() {
            8 => Octant::new(th8),
            4 => Octant::new(2 * (th8 % 4)),
            _ => Octant::new(0),
        };
        // an encrypted input carrying an angle difference needs the full pad
        let theta = if class == MaskClass::EncryptedInput && plan.targets.contains_key(&v) {
            Octant::new(th8)
        } else {
            theta
        };
        secrets.theta.insert(v, theta);
        let in_run = inv.contains_key(&v);
        let local_input = inv.get(&v).is_some_and(|l| pat.graph.is_input(*l));
        let prep = match class {
            MaskClass::PublicInput => {
                let base = *inst.inputs.get(&v).ok_or(ProtocolError::MissingInputState(v))?;
                Preparation::EncryptedInput { base, a: 0, theta: Octant::new(0) }
            }
            MaskClass::EncryptedInput => {
                if local_input {
                    secrets.a.insert(v, a);
                    let base =
                        *inst.inputs.get(&v).ok_or(ProtocolError::MissingInputState(v))?;
                    Preparation::EncryptedInput { base, a, theta }
                } else if in_run {
                    Preparation::PlusTheta(theta)
                } else {
                    Preparation::Computational(bit)
                }
            }
            MaskClass::DeleteOrKeep => {
                if in_run {
                    Preparation::PlusTheta(theta)
                } else {
                    Preparation::Computational(bit)
                }
            }
            MaskClass::BridgeBreakMiddle | MaskClass::TeleportMiddle => {
                let owner = inst.merger.roles[&v].owner().expect("middle has an owner");
                if owner == choice {
                    Preparation::PlusTheta(Octant::new(4 * bit as i64))
                } else {
                    Preparation::Computational(bit)
                }
            }
            MaskClass::QuantumQuarterPi | MaskClass::QuantumHalfPi => Preparation::PlusTheta(theta),
            MaskClass::ClassicalPi | MaskClass::NoMask => {
                // server-prepared |+>
                Preparation::PlusTheta(Octant::new(0))
            }
        };
        state.prepare(v, prep)?;
        transcript.push(Message::Prepared { node: v });
    }
    state.entangle_graph(gm)?;
    Ok(PreparedRun { secrets, state, transcript })
}

pub struct SbqcRun {
    /// corrected output, labelled with the chosen pattern's output nodes
    pub output: StateVector,
    /// true outcomes in the chosen pattern's naming
    pub true_outcomes: OutcomeMap,
    /// raw reported outcomes in merger naming
    pub reported: OutcomeMap,
    pub transcript: Transcript,
    pub secrets: ClientSecrets,
}

/// Computation phase: measure every non-output merger node in the total
/// order, then correct and relabel the returned outputs.
pub fn sbqc_compute(
    inst: &ProtocolInstance,
    plan: &MaskingPlan,
    choice: u8,
    prep: PreparedRun,
    server_rng: &mut ChaCha12Rng,
    src: &mut OutcomeSource,
) -> Result<SbqcRun, ProtocolError> {
    if choice > 1 {
        return Err(ProtocolError::BadChoice(choice));
    }
    let PreparedRun { secrets, mut state, mut transcript } = prep;
    let run = choice as usize;
    let pat = inst.pattern(choice);
    let inv = [invert(&inst.merger.embed0), invert(&inst.merger.embed1)];
    let gm = &inst.merger.graph;
    let roles = &inst.merger.roles;
    let mut local_outcomes = OutcomeMap::new();
    let mut reported = OutcomeMap::new();
    let mut server_r: BTreeMap<NodeId, u8> = BTreeMap::new();

    // angle fold a merger node picks up from its neighbours: deletion bits,
    // input pad bits and bridge/break corrections
    let fold_octants = |v: NodeId, reported: &OutcomeMap| -> Result<i64, ProtocolError> {
        let mut k = 0i64;
        for u in gm.neighbours(v) {
            if let Some(Role::BridgeBreakMiddle(owner)) = roles.get(&u) {
                let c = secrets.bit[&u] as i64;
                let b = *reported.get(&u).ok_or(ProtocolError::MiddleNotMeasured(u))? as i64;
                k += if *owner == choice { 2 + 4 * (b + c) } else { 4 * c };
                continue;
            }
            if !inv[run].contains_key(&u) {
                // deleted neighbour: Z^bit fold
                k += 4 * secrets.bit[&u] as i64;
            } else if plan.class(u) == MaskClass::EncryptedInput
                && inv[run].get(&u).is_some_and(|l| pat.graph.is_input(*l))
            {
                k += 4 * secrets.a.get(&u).copied().unwrap_or(0) as i64;
            }
        }
        Ok(k)
    };

    for &v in &inst.merger.total_order {
        if gm.is_output(v) {
            continue;
        }
        let rule = plan.rule(v);
        let delta = match rule {
            AngleRule::FixedHalfPi => Octant::new(2),
            AngleRule::ServerPauli => {
                let rs = server_rng.gen_range(0..2u8);
                server_r.insert(v, rs);
                Octant::new(4 * rs as i64)
            }
            AngleRule::QuantumPad | AngleRule::ClassicalPad | AngleRule::Plain => {
                let mut k;
                match inv[run].get(&v) {
                    Some(&local) if !pat.graph.is_output(local) => {
                        let phi = corrected_angle(pat, local, &local_outcomes)?;
                        k = if secrets.a.get(&v) == Some(&1) {
                            phi.neg().k() as i64
                        } else {
                            phi.k() as i64
                        };
                        k += fold_octants(v, &reported)?;
                    }
                    Some(_) => return Err(ProtocolError::MixedOutput(v)),
                    None => {
                        // dummy measurement of a deleted node, drawn from the
                        // same angle distribution the owner's run would show
                        let owner = roles[&v].owner().expect("absent node has an owner") as usize;
                        let local = inv[owner][&v];
                        let p = if owner == 0 { &inst.u0 } else { &inst.u1 };
                        k = p.angles[&local].k() as i64;
                    }
                }
                match rule {
                    AngleRule::QuantumPad => {
                        k += secrets.theta[&v].k() as i64 + 4 * secrets.r[&v] as i64
                    }
                    AngleRule::ClassicalPad => k += 4 * secrets.r[&v] as i64,
                    _ => {}
                }
                Octant::new(k)
            }
        };
        transcript.push(Message::MeasureAt { node: v, delta });
        let raw = state.measure_xy(v, delta, src)?;
        transcript.push(Message::Outcome { node: v, bit: raw });
        reported.insert(v, raw);
        if let Some(&local) = inv[run].get(&v) {
            if !pat.graph.is_output(local) && rule != AngleRule::ServerPauli {
                let pad = match rule {
                    AngleRule::QuantumPad | AngleRule::ClassicalPad => secrets.r[&v],
                    _ => 0,
                };
                local_outcomes.insert(local, raw ^ pad);
            }
        }
    }

    // true outcome of a local node, resolving teleport middles lazily: they
    // were measured at the server's r*pi instead of s_Z*pi + c*pi
    let true_outcome = |j: NodeId| -> Result<u8, ProtocolError> {
        if let Some(&s) = local_outcomes.get(&j) {
            return Ok(s);
        }
        let (_, zset) = correction_sets(pat, j)?;
        let sz = zset.iter().try_fold(0u8, |acc, z| {
            local_outcomes
                .get(z)
                .map(|s| acc ^ s)
                .ok_or(PatternError::MissingOutcome(*z, j))
        })?;
        Ok(reported[&j] ^ server_r[&j] ^ secrets.bit[&j] ^ sz)
    };

    let mut outputs_msg = Vec::new();
    let mut relabel = BTreeMap::new();
    for &o in &gm.outputs {
        outputs_msg.push(o);
        match inv[run].get(&o) {
            Some(&local) if pat.graph.is_output(local) => {
                // diagonal corrections first: the preparation pad and the
                // neighbour folds commute with everything except the X
                // byproduct, so they are undone before it
                let fold = fold_octants(o, &reported)?;
                if fold.rem_euclid(8) != 0 {
                    state.apply_z_phase(o, Octant::new(-fold).radians())?;
                }
                if plan.class(o) == MaskClass::DeleteOrKeep {
                    // kept client-prepared output: undo its theta rotation
                    state.apply_z_phase(o, secrets.theta[&o].neg().radians())?;
                }
                let (xset, zset) = correction_sets(pat, local)?;
                let mut sx = 0u8;
                for j in &xset {
                    sx ^= true_outcome(*j)?;
                }
                let mut sz = 0u8;
                for j in &zset {
                    sz ^= true_outcome(*j)?;
                }
                if sx == 1 {
                    state.apply_x(o)?;
                }
                if sz == 1 {
                    state.apply_z(o)?;
                }
                relabel.insert(o, local);
            }
            _ => {
                // garbage qubit in product with the rest; measure it out
                state.measure_xy(o, Octant::new(0), src)?;
            }
        }
    }
    transcript.push(Message::OutputsReturned { nodes: outputs_msg });
    state.relabel(&relabel)?;
    let mut true_outcomes = local_outcomes;
    // surface the teleport middles' resolved outcomes too
    for (&v, _) in &server_r {
        if let Some(&local) = inv[run].get(&v) {
            let s = {
                let (_, zset) = correction_sets(pat, local)?;
                let mut sz = 0u8;
                for z in &zset {
                    sz ^= true_outcomes.get(z).copied().unwrap_or(0);
                }
                reported[&v] ^ server_r[&v] ^ secrets.bit[&v] ^ sz
            };
            true_outcomes.insert(local, s);
        }
    }
    Ok(SbqcRun { output: state, true_outcomes, reported, transcript, secrets })
}

/// Full run with all randomness derived from one seed.
pub fn sbqc_run(inst: &ProtocolInstance, choice: u8, seed: u64) -> Result<SbqcRun, ProtocolError> {
    let plan = inst.plan()?;
    sbqc_run_with_plan(inst, &plan, choice, seed)
}

/// Like `sbqc_run` but with a caller-supplied plan (used by the blindness
/// harness to test sabotaged plans).
pub fn sbqc_run_with_plan(
    inst: &ProtocolInstance,
    plan: &MaskingPlan,
    choice: u8,
    seed: u64,
) -> Result<SbqcRun, ProtocolError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut server_rng = ChaCha12Rng::seed_from_u64(seed ^ SERVER_SALT);
    let mut src = OutcomeSource::seeded(seed ^ BORN_SALT);
    let prep = sbqc_prepare(inst, plan, choice, &mut rng)?;
    sbqc_compute(inst, plan, choice, prep, &mut server_rng, &mut src)
}

/// Reference execution for correctness checks: run the chosen pattern
/// directly on its input, forcing the same measurement outcomes.
pub fn reference_run(
    inst: &ProtocolInstance,
    choice: u8,
    forced: &OutcomeMap,
) -> Result<StateVector, ProtocolError> {
    let pat = inst.pattern(choice);
    let embed = inst.embedding(choice);
    let qubits: Vec<(NodeId, [Complex64; 2])> = pat
        .graph
        .inputs
        .iter()
        .map(|&l| {
            inst.inputs
                .get(&embed[&l])
                .map(|&s| (l, s))
                .ok_or(ProtocolError::MissingInputState(embed[&l]))
        })
        .collect::<Result<_, _>>()?;
    let input = product_state(&qubits);
    let bits: Vec<u8> = measurement_order(pat)?
        .iter()
        .map(|v| forced.get(v).copied().unwrap_or(0))
        .collect();
    let (out, _) = run_pattern(pat, &input, &mut OutcomeSource::forced(bits))?;
    Ok(out)
}

/// Minimal bridge/break gadget on a three-node path u - m - w: entangle,
/// measure the middle at pi/2 and apply the side corrections. Returns the
/// corrected two-qubit state (labels 1 and 3) and the middle outcome.
pub fn bridge_break_unit(
    side_u: [Complex64; 2],
    side_w: [Complex64; 2],
    c: u8,
    bridge: bool,
    src: &mut OutcomeSource,
) -> Result<(StateVector, u8), ProtocolError> {
    let mut st = product_state(&[(1, side_u), (3, side_w)]);
    let prep = if bridge {
        Preparation::PlusTheta(Octant::new(4 * c as i64))
    } else {
        Preparation::Computational(c)
    };
    st.prepare(2, prep)?;
    st.apply_cz(1, 2)?;
    st.apply_cz(2, 3)?;
    let b = st.measure_xy(2, Octant::new(2), src)?;
    for q in [1, 3] {
        if bridge {
            let fold = 2 + 4 * (b + c) as i64;
            st.apply_z_phase(q, Octant::new(-fold).radians())?;
        } else if c == 1 {
            st.apply_z(q)?;
        }
    }
    Ok((st, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::single_qubit;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn bridge_realizes_cz() {
        // 50 random side states x 2 preparations x forced branches
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let u = [c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
                     c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)];
            let w = [c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
                     c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)];
            let mut expected = product_state(&[(1, u), (3, w)]);
            expected.apply_cz(1, 3).unwrap();
            for cbit in 0..2u8 {
                for branch in 0..2u8 {
                    let mut src = OutcomeSource::forced(vec![branch]);
                    let (st, b) = bridge_break_unit(u, w, cbit, true, &mut src).unwrap();
                    assert_eq!(b, branch);
                    let f = st.fidelity(&expected).unwrap();
                    assert!((f - 1.0).abs() < 1e-9, "bridge fidelity {f}");
                }
            }
        }
    }

    #[test]
    fn break_leaves_sides_untouched() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..50 {
            let u = [c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
                     c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)];
            let w = [c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
                     c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)];
            let expected = product_state(&[(1, u), (3, w)]);
            for cbit in 0..2u8 {
                for branch in 0..2u8 {
                    let mut src = OutcomeSource::forced(vec![branch]);
                    let (st, _) = bridge_break_unit(u, w, cbit, false, &mut src).unwrap();
                    let f = st.fidelity(&expected).unwrap();
                    assert!((f - 1.0).abs() < 1e-9, "break fidelity {f}");
                }
            }
        }
    }

    #[test]
    fn ubqc_identity_chain_teleports_input() {
        // chain of 3 with angles 0 computes the identity (up to the
        // byproducts that run_pattern/ubqc_run already correct)
        let pat = crate::pattern::tests::chain(3);
        let input = single_qubit(1, c(0.6, 0.0), c(0.0, 0.8));
        let expect = {
            let mut src = OutcomeSource::seeded(3);
            let (out, _) = run_pattern(&pat, &input, &mut src).unwrap();
            out
        };
        for seed in 0..10u64 {
            let run = ubqc_run(&pat, &input, seed).unwrap();
            let f = run.output.fidelity(&expect).unwrap();
            assert!((f - 1.0).abs() < 1e-9, "seed {seed}: fidelity {f}");
        }
    }

    #[test]
    fn ubqc_matches_forced_reference() {
        let pat = crate::pattern::tests::chain(4);
        let input = single_qubit(1, c(0.3, 0.4), c(0.5, -0.2));
        let run = ubqc_run(&pat, &input, 42).unwrap();
        let bits: Vec<u8> = measurement_order(&pat)
            .unwrap()
            .iter()
            .map(|v| run.true_outcomes[v])
            .collect();
        let (expect, _) =
            run_pattern(&pat, &input, &mut OutcomeSource::forced(bits)).unwrap();
        let f = run.output.fidelity(&expect).unwrap();
        assert!((f - 1.0).abs() < 1e-9, "fidelity {f}");
    }
}
