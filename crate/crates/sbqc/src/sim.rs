//! Dense state-vector simulator: preparation, CZ, single-qubit gates,
//! XY-plane measurement and pattern execution.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::pattern::{
    corrected_angle, measurement_order, MeasurementPattern, NodeId, Octant, OutcomeMap,
};

pub const MAX_QUBITS: usize = 14;
const NORM_TOL: f64 = 1e-9;
const BRANCH_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("qubit label {0} already present")]
    DuplicateLabel(NodeId),
    #[error("unknown qubit label {0}")]
    UnknownLabel(NodeId),
    #[error("register would exceed {MAX_QUBITS} qubits")]
    TooManyQubits,
    #[error("forced branch {0} for node {1} has probability {2:.3e} < 1e-12")]
    ImpossibleBranch(u8, NodeId, f64),
    #[error("forced-branch list exhausted at node {0}")]
    BranchListExhausted(NodeId),
    #[error("state norm drifted to {0}")]
    NormDrift(f64),
    #[error("qubit label sets differ")]
    LabelMismatch,
    #[error(transparent)]
    Pattern(#[from] crate::pattern::PatternError),
}

/// Where measurement outcomes come from: a seeded PRNG (honest sampling per
/// the Born rule) or a forced list of branches (for branch enumeration).
pub enum OutcomeSource {
    Seeded(ChaCha12Rng),
    Forced { bits: Vec<u8>, next: usize },
}

impl OutcomeSource {
    pub fn seeded(seed: u64) -> OutcomeSource {
        use rand::SeedableRng;
        OutcomeSource::Seeded(ChaCha12Rng::seed_from_u64(seed))
    }

    pub fn forced(bits: Vec<u8>) -> OutcomeSource {
        OutcomeSource::Forced { bits, next: 0 }
    }
}

/// Initial state of one client- or server-prepared qubit.
#[derive(Clone, Debug)]
pub enum Preparation {
    /// |+_theta> = (|0> + e^{i theta} |1>)/sqrt(2)
    PlusTheta(Octant),
    /// |0> or |1>
    Computational(u8),
    /// Z(theta) X^a applied to a single-qubit base state (quantum one-time pad).
    EncryptedInput { base: [Complex64; 2], a: u8, theta: Octant },
}

#[derive(Clone, Debug)]
pub struct StateVector {
    amps: Vec<Complex64>,
    labels: Vec<NodeId>,
}

impl StateVector {
    pub fn empty() -> StateVector {
        StateVector { amps: vec![Complex64::new(1.0, 0.0)], labels: vec![] }
    }

    pub fn labels(&self) -> &[NodeId] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn num_qubits(&self) -> usize {
        self.labels.len()
    }

    fn pos(&self, label: NodeId) -> Result<usize, SimError> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(SimError::UnknownLabel(label))
    }

    /// Basis index uses the label list in order, label[0] being the most
    /// significant bit.
    fn bit(&self, index: usize, pos: usize) -> usize {
        (index >> (self.labels.len() - 1 - pos)) & 1
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_norm(&self) -> Result<(), SimError> {
        let n = self.norm_sq();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(SimError::NormDrift(n));
        }
        Ok(())
    }

    /// Append one qubit in the requested state.
    pub fn prepare(&mut self, label: NodeId, kind: Preparation) -> Result<(), SimError> {
        if self.labels.contains(&label) {
            return Err(SimError::DuplicateLabel(label));
        }
        if self.labels.len() + 1 > MAX_QUBITS {
            return Err(SimError::TooManyQubits);
        }
        let one_over_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let single: [Complex64; 2] = match kind {
            Preparation::PlusTheta(theta) => [
                Complex64::new(one_over_sqrt2, 0.0),
                Complex64::from_polar(one_over_sqrt2, theta.radians()),
            ],
            Preparation::Computational(b) => {
                let mut s = [Complex64::new(0.0, 0.0); 2];
                s[(b & 1) as usize] = Complex64::new(1.0, 0.0);
                s
            }
            Preparation::EncryptedInput { base, a, theta } => {
                let mut s = base;
                if a & 1 == 1 {
                    s.swap(0, 1);
                }
                s[1] *= Complex64::from_polar(1.0, theta.radians());
                s
            }
        };
        let mut amps = Vec::with_capacity(self.amps.len() * 2);
        for &a in &self.amps {
            amps.push(a * single[0]);
            amps.push(a * single[1]);
        }
        self.amps = amps;
        self.labels.push(label);
        Ok(())
    }

    pub fn apply_cz(&mut self, i: NodeId, j: NodeId) -> Result<(), SimError> {
        let pi = self.pos(i)?;
        let pj = self.pos(j)?;
        if pi == pj {
            return Err(SimError::DuplicateLabel(i));
        }
        for idx in 0..self.amps.len() {
            if self.bit(idx, pi) == 1 && self.bit(idx, pj) == 1 {
                self.amps[idx] = -self.amps[idx];
            }
        }
        Ok(())
    }

    /// Z(theta) = diag(1, e^{i theta}) on one qubit.
    pub fn apply_z_phase(&mut self, label: NodeId, theta: f64) -> Result<(), SimError> {
        let p = self.pos(label)?;
        let phase = Complex64::from_polar(1.0, theta);
        for idx in 0..self.amps.len() {
            if self.bit(idx, p) == 1 {
                self.amps[idx] *= phase;
            }
        }
        Ok(())
    }

    pub fn apply_x(&mut self, label: NodeId) -> Result<(), SimError> {
        let p = self.pos(label)?;
        let shift = self.labels.len() - 1 - p;
        for idx in 0..self.amps.len() {
            if (idx >> shift) & 1 == 0 {
                self.amps.swap(idx, idx | (1 << shift));
            }
        }
        Ok(())
    }

    pub fn apply_z(&mut self, label: NodeId) -> Result<(), SimError> {
        self.apply_z_phase(label, std::f64::consts::PI)
    }

    /// One CZ per edge of the graph.
    pub fn entangle_graph(&mut self, graph: &crate::pattern::OpenGraph) -> Result<(), SimError> {
        for &(u, v) in graph.edges() {
            self.apply_cz(u, v)?;
        }
        Ok(())
    }

    /// Probability of outcome 0 (projection onto |+_delta>) for an XY
    /// measurement of `label` at angle delta (radians).
    fn prob_plus(&self, pos: usize, delta: f64) -> f64 {
        // |<+_d| psi>|^2 summed over the other qubits:
        // 1/2 |a0 + e^{-i d} a1|^2 per pair.
        let phase = Complex64::from_polar(1.0, -delta);
        let shift = self.labels.len() - 1 - pos;
        let mut p = 0.0;
        for idx in 0..self.amps.len() {
            if (idx >> shift) & 1 == 0 {
                let a0 = self.amps[idx];
                let a1 = self.amps[idx | (1 << shift)];
                p += 0.5 * (a0 + phase * a1).norm_sqr();
            }
        }
        p
    }

    /// XY-plane measurement in the basis {|+_delta>, |-_delta>}. Outcome 0
    /// corresponds to |+_delta>. The measured qubit is removed from the
    /// register and the state renormalized.
    pub fn measure_xy(
        &mut self,
        label: NodeId,
        delta: Octant,
        src: &mut OutcomeSource,
    ) -> Result<u8, SimError> {
        self.measure_xy_radians(label, delta.radians(), src)
    }

    pub fn measure_xy_radians(
        &mut self,
        label: NodeId,
        delta: f64,
        src: &mut OutcomeSource,
    ) -> Result<u8, SimError> {
        let pos = self.pos(label)?;
        let p_plus = self.prob_plus(pos, delta);
        let outcome = match src {
            OutcomeSource::Seeded(rng) => u8::from(rng.gen::<f64>() >= p_plus),
            OutcomeSource::Forced { bits, next } => {
                let b = *bits.get(*next).ok_or(SimError::BranchListExhausted(label))?;
                *next += 1;
                let p = if b & 1 == 0 { p_plus } else { 1.0 - p_plus };
                if p < BRANCH_TOL {
                    return Err(SimError::ImpossibleBranch(b, label, p));
                }
                b & 1
            }
        };
        // project: new amp = <s_delta | pair> / sqrt(p)
        let sign = if outcome == 0 { 1.0 } else { -1.0 };
        let phase = Complex64::from_polar(sign, -delta);
        let p = if outcome == 0 { p_plus } else { 1.0 - p_plus };
        let scale = 1.0 / (2.0 * p).sqrt();
        let shift = self.labels.len() - 1 - pos;
        let mut amps = Vec::with_capacity(self.amps.len() / 2);
        for idx in 0..self.amps.len() {
            if (idx >> shift) & 1 == 0 {
                let a0 = self.amps[idx];
                let a1 = self.amps[idx | (1 << shift)];
                amps.push((a0 + phase * a1) * scale);
            }
        }
        self.amps = amps;
        self.labels.remove(pos);
        self.check_norm()?;
        Ok(outcome)
    }

    /// Rename qubit labels; labels missing from the map are kept.
    pub fn relabel(&mut self, map: &BTreeMap<NodeId, NodeId>) -> Result<(), SimError> {
        let new: Vec<NodeId> = self
            .labels
            .iter()
            .map(|l| map.get(l).copied().unwrap_or(*l))
            .collect();
        for (i, l) in new.iter().enumerate() {
            if new[..i].contains(l) {
                return Err(SimError::DuplicateLabel(*l));
            }
        }
        self.labels = new;
        Ok(())
    }

    /// |<a|b>|^2, labels matched by name (reordered internally).
    pub fn fidelity(&self, other: &StateVector) -> Result<f64, SimError> {
        if self.labels.len() != other.labels.len() {
            return Err(SimError::LabelMismatch);
        }
        let perm: Vec<usize> = self
            .labels
            .iter()
            .map(|l| other.labels.iter().position(|m| m == l).ok_or(SimError::LabelMismatch))
            .collect::<Result<_, _>>()?;
        let n = self.labels.len();
        let mut inner = Complex64::new(0.0, 0.0);
        for idx in 0..self.amps.len() {
            // map basis index from self ordering to other ordering
            let mut jdx = 0usize;
            for pos in 0..n {
                let bit = (idx >> (n - 1 - pos)) & 1;
                jdx |= bit << (n - 1 - perm[pos]);
            }
            inner += self.amps[idx].conj() * other.amps[jdx];
        }
        Ok(inner.norm_sqr())
    }
}

/// Execute a measurement pattern: prepare non-input nodes as |+>, entangle
/// per graph, measure non-outputs in a linear extension of the order with
/// corrected angles, then apply the X/Z byproducts on the outputs.
pub fn run_pattern(
    pattern: &MeasurementPattern,
    input: &StateVector,
    src: &mut OutcomeSource,
) -> Result<(StateVector, OutcomeMap), SimError> {
    let graph = &pattern.graph;
    let mut state = input.clone();
    for l in state.labels() {
        if !graph.is_input(*l) {
            return Err(SimError::UnknownLabel(*l));
        }
    }
    for &i in &graph.inputs {
        if !state.labels().contains(&i) {
            return Err(SimError::UnknownLabel(i));
        }
    }
    for &v in graph.nodes() {
        if !graph.is_input(v) {
            state.prepare(v, Preparation::PlusTheta(Octant::new(0)))?;
        }
    }
    state.entangle_graph(graph)?;
    let mut outcomes: OutcomeMap = BTreeMap::new();
    for v in measurement_order(pattern)? {
        let delta = corrected_angle(pattern, v, &outcomes)?;
        let s = state.measure_xy(v, delta, src)?;
        outcomes.insert(v, s);
    }
    apply_output_byproducts(pattern, &outcomes, &mut state)?;
    Ok((state, outcomes))
}

/// X on outputs in g(j), Z on outputs in Odd(g(j)), for every measured j
/// with outcome 1.
pub fn apply_output_byproducts(
    pattern: &MeasurementPattern,
    outcomes: &OutcomeMap,
    state: &mut StateVector,
) -> Result<(), SimError> {
    for &o in &pattern.graph.outputs {
        let (xset, zset) = crate::pattern::correction_sets(pattern, o)?;
        let sx = xset.iter().fold(0u8, |acc, j| acc ^ (outcomes.get(j).copied().unwrap_or(0) & 1));
        let sz = zset.iter().fold(0u8, |acc, j| acc ^ (outcomes.get(j).copied().unwrap_or(0) & 1));
        if sx == 1 {
            state.apply_x(o)?;
        }
        if sz == 1 {
            state.apply_z(o)?;
        }
    }
    Ok(())
}

/// Single-qubit state vector helper for inputs and oracles.
pub fn single_qubit(label: NodeId, amp0: Complex64, amp1: Complex64) -> StateVector {
    let norm = (amp0.norm_sqr() + amp1.norm_sqr()).sqrt();
    StateVector { amps: vec![amp0 / norm, amp1 / norm], labels: vec![label] }
}

/// Product of single-qubit states, in the given label order.
pub fn product_state(qubits: &[(NodeId, [Complex64; 2])]) -> StateVector {
    let mut st = StateVector::empty();
    for &(label, amps) in qubits {
        st.prepare(
            label,
            Preparation::EncryptedInput { base: amps, a: 0, theta: Octant::new(0) },
        )
        .expect("fresh label");
    }
    // normalize in case callers pass unnormalized amplitude pairs
    let n = st.norm_sq().sqrt();
    for a in &mut st.amps {
        *a /= n;
    }
    st
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn prepare_examples() {
        let mut st = StateVector::empty();
        st.prepare(1, Preparation::PlusTheta(Octant::new(0))).unwrap();
        assert_abs_diff_eq!(st.amps[0].re, st.amps[1].re, epsilon = 1e-12);
        let mut st = StateVector::empty();
        st.prepare(1, Preparation::PlusTheta(Octant::new(4))).unwrap();
        assert_abs_diff_eq!(st.amps[1].re, -st.amps[0].re, epsilon = 1e-12);
        // Z(pi/2) X |0> = (0, i)
        let mut st = StateVector::empty();
        st.prepare(
            1,
            Preparation::EncryptedInput {
                base: [c(1.0, 0.0), c(0.0, 0.0)],
                a: 1,
                theta: Octant::new(2),
            },
        )
        .unwrap();
        assert_abs_diff_eq!(st.amps[0].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(st.amps[1].im, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cz_examples() {
        let mut st = StateVector::empty();
        st.prepare(1, Preparation::Computational(1)).unwrap();
        st.prepare(2, Preparation::Computational(1)).unwrap();
        st.apply_cz(1, 2).unwrap();
        assert_abs_diff_eq!(st.amps[3].re, -1.0, epsilon = 1e-12);

        let mut st = StateVector::empty();
        st.prepare(1, Preparation::Computational(0)).unwrap();
        st.prepare(2, Preparation::Computational(0)).unwrap();
        st.apply_cz(1, 2).unwrap();
        assert_abs_diff_eq!(st.amps[0].re, 1.0, epsilon = 1e-12);

        // |+>|+> -> edge graph state (1,1,1,-1)/2
        let mut st = StateVector::empty();
        st.prepare(1, Preparation::PlusTheta(Octant::new(0))).unwrap();
        st.prepare(2, Preparation::PlusTheta(Octant::new(0))).unwrap();
        st.apply_cz(1, 2).unwrap();
        let expect = [0.5, 0.5, 0.5, -0.5];
        for (a, e) in st.amps.iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn triangle_graph_state() {
        let g = crate::pattern::OpenGraph::new(
            [1, 2, 3],
            [(1, 2), (2, 3), (1, 3)],
            vec![],
            vec![1, 2, 3],
        )
        .unwrap();
        let mut st = StateVector::empty();
        for v in [1, 2, 3] {
            st.prepare(v, Preparation::PlusTheta(Octant::new(0))).unwrap();
        }
        st.entangle_graph(&g).unwrap();
        let signs = [1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0, -1.0];
        let scale = 1.0 / 8f64.sqrt();
        for (a, s) in st.amps.iter().zip(signs) {
            assert_abs_diff_eq!(a.re, s * scale, epsilon = 1e-12);
        }
    }

    #[test]
    fn measure_examples() {
        // measure |+_theta> at delta = theta -> outcome 0 w.p. 1
        let mut st = StateVector::empty();
        st.prepare(1, Preparation::PlusTheta(Octant::new(3))).unwrap();
        let mut src = OutcomeSource::forced(vec![0]);
        assert_eq!(st.measure_xy(1, Octant::new(3), &mut src).unwrap(), 0);

        // orthogonal: delta = theta + pi -> outcome 1 w.p. 1
        let mut st = StateVector::empty();
        st.prepare(1, Preparation::PlusTheta(Octant::new(3))).unwrap();
        let mut src = OutcomeSource::forced(vec![0]);
        assert!(matches!(
            st.measure_xy(1, Octant::new(7), &mut src),
            Err(SimError::ImpossibleBranch(..))
        ));

        // measure |+> at pi/2 -> p(0) = 1/2
        let mut st = StateVector::empty();
        st.prepare(1, Preparation::PlusTheta(Octant::new(0))).unwrap();
        assert_abs_diff_eq!(st.prob_plus(0, Octant::new(2).radians()), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let a = single_qubit(1, c(1.0, 0.0), c(0.0, 0.0));
        assert_abs_diff_eq!(a.fidelity(&a).unwrap(), 1.0, epsilon = 1e-12);
        let b = single_qubit(1, c(0.0, 0.0), c(1.0, 0.0));
        assert_abs_diff_eq!(a.fidelity(&b).unwrap(), 0.0, epsilon = 1e-12);
        let plus = single_qubit(1, c(1.0, 0.0), c(1.0, 0.0));
        assert_abs_diff_eq!(a.fidelity(&plus).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_label_reorder() {
        let mut a = StateVector::empty();
        a.prepare(1, Preparation::Computational(0)).unwrap();
        a.prepare(2, Preparation::Computational(1)).unwrap();
        let mut b = StateVector::empty();
        b.prepare(2, Preparation::Computational(1)).unwrap();
        b.prepare(1, Preparation::Computational(0)).unwrap();
        assert_abs_diff_eq!(a.fidelity(&b).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn z_composition_and_hzh() {
        // Z(t1) Z(t2) = Z(t1+t2) on a random-ish state
        let mut a = single_qubit(1, c(0.6, 0.1), c(0.3, -0.7));
        let mut b = a.clone();
        a.apply_z_phase(1, 0.4).unwrap();
        a.apply_z_phase(1, 1.1).unwrap();
        b.apply_z_phase(1, 1.5).unwrap();
        assert_abs_diff_eq!(a.fidelity(&b).unwrap(), 1.0, epsilon = 1e-12);
    }
}
