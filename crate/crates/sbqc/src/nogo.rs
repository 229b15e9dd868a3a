//! Numerical demonstrations of why a server cannot expand one keyed qubit
//! into several: a separability scan over the canonical candidate isometry,
//! a differential attack on correlated angle keys, and the counting bound
//! on guessing an m-qubit key.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::pattern::Octant;

/// Canonical 4x2 candidate isometry in the Hadamard basis,
/// D = [[1,0],[0,0],[0,cos d],[0,sin d]].
pub fn candidate_isometry(delta: f64) -> [[Complex64; 2]; 4] {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    [
        [one, z],
        [z, z],
        [z, Complex64::new(delta.cos(), 0.0)],
        [z, Complex64::new(delta.sin(), 0.0)],
    ]
}

pub fn apply_isometry(d: &[[Complex64; 2]; 4], input: [Complex64; 2]) -> [Complex64; 4] {
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (row, o) in d.iter().zip(out.iter_mut()) {
        *o = row[0] * input[0] + row[1] * input[1];
    }
    out
}

/// Columns orthonormal: max |D^dag D - I| entry.
pub fn isometry_defect(d: &[[Complex64; 2]; 4]) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            let mut dot = Complex64::new(0.0, 0.0);
            for row in d {
                dot += row[a].conj() * row[b];
            }
            let expect = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - expect).norm());
        }
    }
    worst
}

/// The two-qubit state the candidate isometry produces from |+_theta>:
/// (1/2)(1 + e^{i theta}, 0, cos d (1 - e^{i theta}), sin d (1 - e^{i theta})).
pub fn isometry_output(delta: f64, theta: f64) -> [Complex64; 4] {
    let e = Complex64::from_polar(1.0, theta);
    let one = Complex64::new(1.0, 0.0);
    [
        0.5 * (one + e),
        Complex64::new(0.0, 0.0),
        0.5 * delta.cos() * (one - e),
        0.5 * delta.sin() * (one - e),
    ]
}

/// 1 - lambda_max, where lambda_max is the largest squared Schmidt
/// coefficient of the two-qubit state. Zero iff the state is a product.
pub fn product_deviation(state: &[Complex64; 4]) -> f64 {
    let norm_sq: f64 = state.iter().map(|a| a.norm_sqr()).sum();
    if norm_sq < 1e-300 {
        return 0.0;
    }
    // singular values of the 2x2 amplitude matrix [[a,b],[c,d]]
    let det = (state[0] * state[3] - state[1] * state[2]).norm_sqr() / (norm_sq * norm_sq);
    let disc = (1.0 - 4.0 * det).max(0.0).sqrt();
    (1.0 - disc) / 2.0
}

/// Value of the analytic separability condition; the state is a product
/// exactly when this vanishes.
pub fn separability_residual(delta: f64, theta: f64) -> f64 {
    let e = Complex64::from_polar(1.0, theta);
    let one = Complex64::new(1.0, 0.0);
    ((one + e) * (one - e)).norm() * delta.sin().abs()
}

#[derive(Clone, Debug)]
pub struct ScanReport {
    pub resolution: usize,
    /// deviation[theta_index][delta_index]
    pub deviation: Vec<Vec<f64>>,
    pub max_on_zero_set: f64,
    pub min_off_zero_set: f64,
    /// zero set of the deviation matches the analytic zero set within 1e-10
    pub zero_set_matches: bool,
    /// numerical rank of the span of all grid output states (at most 3:
    /// the second amplitude is identically zero)
    pub rank: usize,
    pub max_isometry_defect: f64,
}

/// Evaluate the product deviation on a resolution x resolution grid of
/// (theta, delta) over [0, 2pi) and compare its zero set against the
/// analytic condition (1+e^{i theta})(1-e^{i theta}) sin(delta) = 0.
pub fn separability_scan(resolution: usize) -> ScanReport {
    assert!(resolution >= 8, "need at least 8 points per axis");
    let mut deviation = vec![vec![0.0; resolution]; resolution];
    let mut max_on = 0.0f64;
    let mut min_off = f64::INFINITY;
    let mut matches = true;
    let mut basis: Vec<[Complex64; 4]> = Vec::new();
    let mut max_defect = 0.0f64;

    for ti in 0..resolution {
        let theta = 2.0 * PI * ti as f64 / resolution as f64;
        for di in 0..resolution {
            let delta = 2.0 * PI * di as f64 / resolution as f64;
            if ti == 0 {
                max_defect = max_defect.max(isometry_defect(&candidate_isometry(delta)));
            }
            let state = isometry_output(delta, theta);
            let dev = product_deviation(&state);
            deviation[ti][di] = dev;
            let on_zero_set = separability_residual(delta, theta) <= 1e-10;
            if on_zero_set {
                max_on = max_on.max(dev);
                if dev > 1e-10 {
                    matches = false;
                }
            } else {
                min_off = min_off.min(dev);
                if dev <= 1e-10 {
                    matches = false;
                }
            }
            gram_schmidt_extend(&mut basis, state);
        }
    }

    ScanReport {
        resolution,
        deviation,
        max_on_zero_set: max_on,
        min_off_zero_set: min_off,
        zero_set_matches: matches,
        rank: basis.len(),
        max_isometry_defect: max_defect,
    }
}

fn gram_schmidt_extend(basis: &mut Vec<[Complex64; 4]>, mut v: [Complex64; 4]) {
    for b in basis.iter() {
        let dot: Complex64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
        for (vi, bi) in v.iter_mut().zip(b.iter()) {
            *vi -= dot * bi;
        }
    }
    let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm > 1e-8 {
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
    }
}

/// Haar-ish random 4x2 isometry via Gram-Schmidt on Gaussian columns.
pub fn random_isometry<R: Rng>(rng: &mut R) -> [[Complex64; 2]; 4] {
    loop {
        let mut cols = [[Complex64::new(0.0, 0.0); 4]; 2];
        for col in cols.iter_mut() {
            for a in col.iter_mut() {
                *a = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        // orthonormalize column 0, then 1 against it
        let n0: f64 = cols[0].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n0 < 1e-6 {
            continue;
        }
        for a in cols[0].iter_mut() {
            *a /= n0;
        }
        let dot: Complex64 =
            cols[0].iter().zip(cols[1].iter()).map(|(x, y)| x.conj() * y).sum();
        let c0 = cols[0];
        for (a, b) in cols[1].iter_mut().zip(c0.iter()) {
            *a -= dot * b;
        }
        let n1: f64 = cols[1].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n1 < 1e-6 {
            continue;
        }
        for a in cols[1].iter_mut() {
            *a /= n1;
        }
        let mut d = [[Complex64::new(0.0, 0.0); 2]; 4];
        for r in 0..4 {
            d[r][0] = cols[0][r];
            d[r][1] = cols[1][r];
        }
        return d;
    }
}

/// Worst-case product deviation over a theta grid for an arbitrary isometry.
/// Any valid one-to-two expander would make this zero; none does.
pub fn worst_deviation_over_theta(d: &[[Complex64; 2]; 4], steps: usize) -> f64 {
    let mut worst = 0.0f64;
    for ti in 0..steps {
        let theta = 2.0 * PI * ti as f64 / steps as f64;
        let plus = [
            Complex64::new(1.0 / 2f64.sqrt(), 0.0),
            Complex64::from_polar(1.0 / 2f64.sqrt(), theta),
        ];
        worst = worst.max(product_deviation(&apply_isometry(d, plus)));
    }
    worst
}

/// How the server's second key relates to the first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyRule {
    /// theta_j = theta_i
    Identity,
    /// theta_j fixed and public
    Constant(Octant),
    /// theta_j drawn fresh, independent of theta_i
    Independent,
}

impl KeyRule {
    pub fn describe(&self) -> String {
        match self {
            KeyRule::Identity => "theta_j = theta_i".into(),
            KeyRule::Constant(c) => format!("theta_j = {}pi/4 (public)", c.k()),
            KeyRule::Independent => "theta_j independent of theta_i".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttackReport {
    pub rule: KeyRule,
    /// Bayes-optimal accuracy of recovering (phi_j - phi_i) mod pi
    /// from the transcript (delta_i, delta_j)
    pub accuracy: f64,
    /// plug-in mutual information, in bits, between the transcript and
    /// (phi_j - phi_i) mod pi
    pub mi_bits: f64,
    /// observed (delta_j - delta_i) mod 2pi values, keyed by octant,
    /// mapped to the compatible secrets
    pub relation: BTreeMap<u8, BTreeSet<u8>>,
    pub enumerated: u64,
}

/// Exhaustively enumerate phi_i, phi_j, theta, r and measure what the pair
/// of instructed angles reveals about the angle difference.
pub fn correlated_key_attack(rule: KeyRule) -> AttackReport {
    let mut joint: BTreeMap<(u8, (u8, u8)), u64> = BTreeMap::new();
    let mut relation: BTreeMap<u8, BTreeSet<u8>> = BTreeMap::new();
    let mut total = 0u64;

    let theta_j_choices: Vec<Option<u8>> = match rule {
        KeyRule::Independent => (0..8).map(Some).collect(),
        _ => vec![None],
    };

    for phi_i in 0..8u8 {
        for phi_j in 0..8u8 {
            let secret = (phi_j.wrapping_sub(phi_i)) & 3;
            for theta_i in 0..8u8 {
                for tj in &theta_j_choices {
                    let theta_j = match rule {
                        KeyRule::Identity => theta_i,
                        KeyRule::Constant(c) => c.k(),
                        KeyRule::Independent => tj.unwrap(),
                    };
                    for r_i in 0..2u8 {
                        for r_j in 0..2u8 {
                            let delta_i = (phi_i + theta_i + 4 * r_i) & 7;
                            let delta_j = (phi_j + theta_j + 4 * r_j) & 7;
                            *joint.entry((secret, (delta_i, delta_j))).or_default() += 1;
                            relation
                                .entry(delta_j.wrapping_sub(delta_i) & 7)
                                .or_default()
                                .insert(secret);
                            total += 1;
                        }
                    }
                }
            }
        }
    }

    // marginals
    let mut p_secret: BTreeMap<u8, u64> = BTreeMap::new();
    let mut p_trans: BTreeMap<(u8, u8), u64> = BTreeMap::new();
    for (&(s, t), &c) in &joint {
        *p_secret.entry(s).or_default() += c;
        *p_trans.entry(t).or_default() += c;
    }

    // Bayes-optimal classifier: pick the most likely secret per transcript
    let mut accuracy = 0.0f64;
    for (&t, _) in &p_trans {
        let best = (0..4u8)
            .map(|s| *joint.get(&(s, t)).unwrap_or(&0))
            .max()
            .unwrap_or(0);
        accuracy += best as f64 / total as f64;
    }

    let mut mi_bits = 0.0f64;
    for (&(s, t), &c) in &joint {
        let p_st = c as f64 / total as f64;
        let ps = p_secret[&s] as f64 / total as f64;
        let pt = p_trans[&t] as f64 / total as f64;
        mi_bits += p_st * (p_st / (ps * pt)).log2();
    }

    AttackReport { rule, accuracy, mi_bits, relation, enumerated: total }
}

/// Monte-Carlo variant of [`correlated_key_attack`], for demonstration:
/// the exhaustive version is exact and preferred.
pub fn sampled_attack<R: Rng>(rule: KeyRule, samples: u64, rng: &mut R) -> AttackReport {
    let mut joint: BTreeMap<(u8, (u8, u8)), u64> = BTreeMap::new();
    let mut relation: BTreeMap<u8, BTreeSet<u8>> = BTreeMap::new();
    for _ in 0..samples {
        let phi_i = rng.gen_range(0..8u8);
        let phi_j = rng.gen_range(0..8u8);
        let theta_i = rng.gen_range(0..8u8);
        let theta_j = match rule {
            KeyRule::Identity => theta_i,
            KeyRule::Constant(c) => c.k(),
            KeyRule::Independent => rng.gen_range(0..8u8),
        };
        let secret = (phi_j.wrapping_sub(phi_i)) & 3;
        let delta_i = (phi_i + theta_i + 4 * rng.gen_range(0..2u8)) & 7;
        let delta_j = (phi_j + theta_j + 4 * rng.gen_range(0..2u8)) & 7;
        *joint.entry((secret, (delta_i, delta_j))).or_default() += 1;
        relation.entry(delta_j.wrapping_sub(delta_i) & 7).or_default().insert(secret);
    }

    let mut p_secret: BTreeMap<u8, u64> = BTreeMap::new();
    let mut p_trans: BTreeMap<(u8, u8), u64> = BTreeMap::new();
    for (&(s, t), &c) in &joint {
        *p_secret.entry(s).or_default() += c;
        *p_trans.entry(t).or_default() += c;
    }
    let mut accuracy = 0.0f64;
    for (&t, _) in &p_trans {
        let best =
            (0..4u8).map(|s| *joint.get(&(s, t)).unwrap_or(&0)).max().unwrap_or(0);
        accuracy += best as f64 / samples as f64;
    }
    let mut mi_bits = 0.0f64;
    for (&(s, t), &c) in &joint {
        let p_st = c as f64 / samples as f64;
        let ps = p_secret[&s] as f64 / samples as f64;
        let pt = p_trans[&t] as f64 / samples as f64;
        mi_bits += p_st * (p_st / (ps * pt)).log2();
    }
    AttackReport { rule, accuracy, mi_bits, relation, enumerated: samples }
}

/// All values (delta_j - delta_i) mod 2pi can take under an identity key
/// rule, for fixed angles: always {d, d + pi} with d = phi_j - phi_i.
pub fn identity_difference_support(phi_i: Octant, phi_j: Octant) -> BTreeSet<u8> {
    let mut out = BTreeSet::new();
    for theta in 0..8i64 {
        for r_i in 0..2i64 {
            for r_j in 0..2i64 {
                let di = (phi_i.k() as i64 + theta + 4 * r_i) & 7;
                let dj = (phi_j.k() as i64 + theta + 4 * r_j) & 7;
                out.insert(((dj - di) & 7) as u8);
            }
        }
    }
    out
}

/// Exact probability 1/|Theta|^m of guessing an m-qubit key, as a
/// (numerator, denominator) pair.
pub fn guess_probability(theta_set_size: u32, m: u32) -> (u128, u128) {
    assert!(theta_set_size >= 2 || m == 0);
    (1, (theta_set_size as u128).pow(m))
}

/// Smallest m with |Theta|^-m <= n^-c, i.e. enough key qubits to push the
/// guessing probability below n^-c.
pub fn min_m(theta_set_size: u32, n: u64, c: u32) -> u32 {
    let target = (n as u128).pow(c);
    let mut m = 0u32;
    let mut acc: u128 = 1;
    while acc < target {
        acc = acc.saturating_mul(theta_set_size as u128);
        m += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn isometry_columns_orthonormal() {
        for i in 0..32 {
            let d = candidate_isometry(2.0 * PI * i as f64 / 32.0);
            assert!(isometry_defect(&d) < 1e-12);
        }
    }

    #[test]
    fn known_product_and_entangled_points() {
        // theta = 0: |+>|+>
        for &delta in &[0.3, 1.1, 2.9] {
            assert!(product_deviation(&isometry_output(delta, 0.0)) < 1e-12);
            assert!(product_deviation(&isometry_output(delta, PI)) < 1e-12);
        }
        // theta = pi/2, delta = pi/2: entangled
        assert!(product_deviation(&isometry_output(PI / 2.0, PI / 2.0)) > 0.1);
        let product = [
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        assert!(product_deviation(&product) < 1e-12);
        let bell = [
            Complex64::new(1.0 / 2f64.sqrt(), 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0 / 2f64.sqrt(), 0.0),
        ];
        assert!((product_deviation(&bell) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deviation_matches_brute_force_svd() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut v = [Complex64::new(0.0, 0.0); 4];
            for a in v.iter_mut() {
                *a = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
            let fast = product_deviation(&v);
            // oracle: eigenvalues of the reduced density matrix
            let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum();
            let r00 = (v[0].norm_sqr() + v[1].norm_sqr()) / norm;
            let r11 = (v[2].norm_sqr() + v[3].norm_sqr()) / norm;
            let r01 = (v[0] * v[2].conj() + v[1] * v[3].conj()) / norm;
            let tr = r00 + r11;
            let disc = ((r00 - r11).powi(2) + 4.0 * r01.norm_sqr()).sqrt();
            let lam_max = (tr + disc) / 2.0;
            assert!((fast - (1.0 - lam_max)).abs() < 1e-9, "fast {fast} vs {}", 1.0 - lam_max);
        }
    }

    #[test]
    fn scan_zero_set_and_rank() {
        let report = separability_scan(64);
        assert!(report.zero_set_matches);
        assert!(report.max_on_zero_set <= 1e-10);
        assert!(report.min_off_zero_set > 1e-10);
        assert!(report.rank <= 3);
        assert!(report.max_isometry_defect < 1e-12);
    }

    #[test]
    fn no_random_isometry_stays_product() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..50 {
            let d = random_isometry(&mut rng);
            assert!(isometry_defect(&d) < 1e-9);
            assert!(worst_deviation_over_theta(&d, 32) > 1e-4);
        }
    }

    #[test]
    fn identity_keys_leak_the_angle_difference() {
        let report = correlated_key_attack(KeyRule::Identity);
        assert_eq!(report.accuracy, 1.0);
        assert!((report.mi_bits - 2.0).abs() < 1e-9);
        // each observed difference pins down a single secret
        for secrets in report.relation.values() {
            assert_eq!(secrets.len(), 1);
        }
        let support = identity_difference_support(Octant::new(0), Octant::new(1));
        assert_eq!(support, BTreeSet::from([1, 5]));
    }

    #[test]
    fn independent_keys_leak_nothing() {
        let report = correlated_key_attack(KeyRule::Independent);
        assert_eq!(report.mi_bits, 0.0);
        assert!((report.accuracy - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_key_reveals_phi_j() {
        // with theta_j public, delta_j - theta_j = phi_j + r pi: phi_j mod pi leaks
        let c = Octant::new(3);
        for phi_j in 0..8i64 {
            let mut seen = BTreeSet::new();
            for r in 0..2i64 {
                seen.insert((phi_j + c.k() as i64 + 4 * r) & 7);
            }
            let recovered: BTreeSet<i64> =
                seen.iter().map(|d| (d - c.k() as i64) & 3).collect();
            assert_eq!(recovered, BTreeSet::from([phi_j & 3]));
        }
    }

    #[test]
    fn counting_bound() {
        assert_eq!(guess_probability(8, 1), (1, 8));
        assert_eq!(guess_probability(8, 0), (1, 1));
        assert_eq!(guess_probability(8, 5), (1, 32768));
        assert_eq!(min_m(8, 1 << 10, 2), 7);
        // min_m(8, n, 2) = ceil(2 log2 n / 3): Theta(log n)
        for k in 8..=20u32 {
            let m = min_m(8, 1u64 << k, 2);
            assert_eq!(m, (2 * k + 2) / 3);
        }
    }
}
