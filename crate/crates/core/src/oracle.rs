//! Dense state-vector simulator used as the correctness oracle.
//!
//! Gate actions are written out per kind against the amplitude array. The
//! only thing shared with the SQL path is the bit ordering: qubit `i` is bit
//! `i` of the index, and for multi-qubit matrices the first listed qubit is
//! the most significant local bit.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use num_complex::Complex64;

use crate::circuit::{Circuit, GateInstance, GateKind};
use crate::error::{Error, Result};
use crate::parallel::ExecPolicy;
use crate::state::StateRow;

/// Largest register the oracle accepts (2^26 amplitudes, 1 GiB).
pub const MAX_DENSE_QUBITS: usize = 26;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

impl DenseState {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if num_qubits > MAX_DENSE_QUBITS {
            return Err(Error::OracleRefused {
                qubits: num_qubits,
                limit: MAX_DENSE_QUBITS,
            });
        }
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(DenseState {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps an explicit amplitude vector of length `2^num_qubits`.
    pub fn from_amplitudes(num_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if num_qubits > MAX_DENSE_QUBITS {
            return Err(Error::OracleRefused {
                qubits: num_qubits,
                limit: MAX_DENSE_QUBITS,
            });
        }
        if amplitudes.len() != 1 << num_qubits {
            return Err(Error::Numeric(format!(
                "expected {} amplitudes, got {}",
                1u64 << num_qubits,
                amplitudes.len()
            )));
        }
        Ok(DenseState {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum()
    }

    /// Nonzero amplitudes (`|a| > epsilon`) as sorted state rows.
    pub fn to_rows(&self, epsilon: f64) -> Vec<StateRow> {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > epsilon)
            .map(|(s, a)| StateRow::new(s as u64, a.re, a.im))
            .collect()
    }

    /// Replaces every amplitude with `f(old, index)`.
    fn gather<F>(&mut self, policy: ExecPolicy, f: F)
    where
        F: Fn(&[Complex64], usize) -> Complex64 + Sync + Send,
    {
        let old = std::mem::take(&mut self.amplitudes);
        let mut new = vec![ZERO; old.len()];
        policy.fill(&mut new, |j| f(&old, j));
        self.amplitudes = new;
    }

    pub fn apply(&mut self, gate: &GateInstance) -> Result<()> {
        self.apply_with(gate, ExecPolicy::default())
    }

    pub fn apply_with(&mut self, gate: &GateInstance, policy: ExecPolicy) -> Result<()> {
        gate.validate(0, self.num_qubits)?;
        let q = &gate.qubits;
        let bit = |k: usize| 1usize << q[k];
        match gate.kind {
            GateKind::X => {
                let m = bit(0);
                self.gather(policy, |a, j| a[j ^ m]);
            }
            GateKind::Y => {
                let m = bit(0);
                self.gather(policy, |a, j| {
                    if j & m == 0 {
                        -I * a[j | m]
                    } else {
                        I * a[j & !m]
                    }
                });
            }
            GateKind::H => {
                let m = bit(0);
                self.gather(policy, |a, j| {
                    let (a0, a1) = (a[j & !m], a[j | m]);
                    if j & m == 0 {
                        (a0 + a1) * FRAC_1_SQRT_2
                    } else {
                        (a0 - a1) * FRAC_1_SQRT_2
                    }
                });
            }
            GateKind::Z | GateKind::S | GateKind::Sdg | GateKind::T | GateKind::Tdg => {
                let phase = match gate.kind {
                    GateKind::Z => Complex64::new(-1.0, 0.0),
                    GateKind::S => I,
                    GateKind::Sdg => -I,
                    GateKind::T => Complex64::from_polar(1.0, FRAC_PI_4),
                    _ => Complex64::from_polar(1.0, -FRAC_PI_4),
                };
                let m = bit(0);
                self.gather(policy, |a, j| if j & m != 0 { a[j] * phase } else { a[j] });
            }
            GateKind::Rx | GateKind::Ry => {
                let m = bit(0);
                let theta = gate.params[0];
                let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
                let rx = gate.kind == GateKind::Rx;
                self.gather(policy, |a, j| {
                    let (a0, a1) = (a[j & !m], a[j | m]);
                    match (rx, j & m == 0) {
                        (true, true) => a0 * c - I * a1 * s,
                        (true, false) => a1 * c - I * a0 * s,
                        (false, true) => a0 * c - a1 * s,
                        (false, false) => a0 * s + a1 * c,
                    }
                });
            }
            GateKind::Rz => {
                let m = bit(0);
                let theta = gate.params[0];
                let lo = Complex64::from_polar(1.0, -theta / 2.0);
                let hi = Complex64::from_polar(1.0, theta / 2.0);
                self.gather(policy, |a, j| a[j] * if j & m == 0 { lo } else { hi });
            }
            GateKind::Cx => {
                let (c, t) = (bit(0), bit(1));
                self.gather(policy, |a, j| if j & c != 0 { a[j ^ t] } else { a[j] });
            }
            GateKind::Cz => {
                let both = bit(0) | bit(1);
                self.gather(policy, |a, j| if j & both == both { -a[j] } else { a[j] });
            }
            GateKind::Swap => {
                let (x, y) = (bit(0), bit(1));
                self.gather(policy, |a, j| {
                    if (j & x == 0) != (j & y == 0) {
                        a[j ^ x ^ y]
                    } else {
                        a[j]
                    }
                });
            }
            GateKind::Ccx => {
                let controls = bit(0) | bit(1);
                let t = bit(2);
                self.gather(policy, |a, j| {
                    if j & controls == controls {
                        a[j ^ t]
                    } else {
                        a[j]
                    }
                });
            }
            GateKind::U1 => {
                let u = gate.matrix.as_deref().expect("validated");
                let m = bit(0);
                self.gather(policy, |a, j| {
                    let row = usize::from(j & m != 0);
                    u[row * 2] * a[j & !m] + u[row * 2 + 1] * a[j | m]
                });
            }
            GateKind::U2 => {
                let u = gate.matrix.as_deref().expect("validated");
                let (hi, lo) = (bit(0), bit(1));
                self.gather(policy, |a, j| {
                    let row = (usize::from(j & hi != 0) << 1) | usize::from(j & lo != 0);
                    let base = j & !(hi | lo);
                    (0..4)
                        .map(|col| {
                            let src = base
                                | if col & 2 != 0 { hi } else { 0 }
                                | if col & 1 != 0 { lo } else { 0 };
                            u[row * 4 + col] * a[src]
                        })
                        .sum()
                });
            }
        }
        Ok(())
    }
}

/// Runs a circuit on the dense oracle from `|0…0⟩`.
pub fn simulate_dense(c: &Circuit) -> Result<DenseState> {
    simulate_dense_with(c, ExecPolicy::default())
}

pub fn simulate_dense_with(c: &Circuit, policy: ExecPolicy) -> Result<DenseState> {
    let mut state = DenseState::zero(c.num_qubits)?;
    for gate in &c.gates {
        state.apply_with(gate, policy)?;
    }
    Ok(state)
}

/// Max over all `2^n` indices of `|row amplitude − dense amplitude|`, with
/// missing rows read as zero.
pub fn compare_states(rows: &[StateRow], num_qubits: usize, dense: &DenseState) -> Result<f64> {
    if num_qubits != dense.num_qubits {
        return Err(Error::Numeric(format!(
            "qubit count mismatch: rows have {num_qubits}, dense state has {}",
            dense.num_qubits
        )));
    }
    let mut diff = dense.amplitudes.clone();
    for row in rows {
        let slot = diff.get_mut(row.s as usize).ok_or_else(|| {
            Error::Numeric(format!("row index {} out of range for {num_qubits} qubits", row.s))
        })?;
        *slot -= Complex64::new(row.r, row.i);
    }
    Ok(diff.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{generate_family, CircuitFamily};
    use proptest::prelude::*;

    fn amp(state: &DenseState, s: usize) -> Complex64 {
        state.amplitudes()[s]
    }

    #[test]
    fn ghz3() {
        let state = simulate_dense(&generate_family(&CircuitFamily::Ghz { n: 3 }).unwrap()).unwrap();
        for s in 0..8 {
            let expected = if s == 0 || s == 7 { FRAC_1_SQRT_2 } else { 0.0 };
            assert!((amp(&state, s) - Complex64::new(expected, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn hadamard_on_first_qubit() {
        let mut state = DenseState::zero(3).unwrap();
        state.apply(&GateInstance::h(0)).unwrap();
        assert_eq!(
            state.to_rows(1e-12),
            vec![StateRow::new(0, FRAC_1_SQRT_2, 0.0), StateRow::new(1, FRAC_1_SQRT_2, 0.0)]
        );
    }

    #[test]
    fn equal_superposition_two() {
        let state = simulate_dense(&generate_family(&CircuitFamily::EqualSuperposition { n: 2 }).unwrap()).unwrap();
        assert!(state.amplitudes().iter().all(|a| (a - Complex64::new(0.5, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn x_on_qubit_one() {
        let mut state = DenseState::zero(2).unwrap();
        state.apply(&GateInstance::x(1)).unwrap();
        assert_eq!(amp(&state, 2), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn guard_refuses_wide_registers() {
        let c = generate_family(&CircuitFamily::SparseChain { n: 40, depth: 5, seed: 1 }).unwrap();
        assert!(matches!(
            simulate_dense(&c),
            Err(Error::OracleRefused { qubits: 40, limit: 26 })
        ));
    }

    #[test]
    fn compare_pads_missing_rows() {
        let mut amps = vec![ZERO; 4];
        amps[0] = Complex64::new((1.0f64 - 0.01).sqrt(), 0.0);
        amps[3] = Complex64::new(0.1, 0.0);
        let dense = DenseState::from_amplitudes(2, amps).unwrap();
        let exact = dense.to_rows(0.0);
        assert_eq!(compare_states(&exact, 2, &dense).unwrap(), 0.0);
        let missing = &exact[..1];
        assert!((compare_states(missing, 2, &dense).unwrap() - 0.1).abs() < 1e-15);
        assert!(compare_states(&exact, 3, &dense).is_err());
        assert!(compare_states(&[StateRow::new(9, 1.0, 0.0)], 2, &dense).is_err());
    }

    fn inverse(g: &GateInstance) -> Vec<GateInstance> {
        use GateKind::*;
        let q = &g.qubits;
        match g.kind {
            S => vec![GateInstance::new(Sdg, q, &[])],
            Sdg => vec![GateInstance::new(S, q, &[])],
            T => vec![GateInstance::new(Tdg, q, &[])],
            Tdg => vec![GateInstance::new(T, q, &[])],
            Rx | Ry | Rz => vec![GateInstance::new(g.kind, q, &[-g.params[0]])],
            _ => vec![g.clone()],
        }
    }

    fn random_state(n: usize, seed: u64) -> DenseState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<Complex64> = (0..1 << n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        DenseState::from_amplitudes(n, amps).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn gate_then_inverse_is_identity(
            kind in 0usize..15,
            theta in -10.0f64..10.0,
            qubits in proptest::sample::subsequence(vec![0usize, 1, 2, 3], 3),
            perm in 0usize..6,
            seed in any::<u64>(),
        ) {
            let kind = GateKind::NAMED[kind];
            let mut qubits = qubits;
            // Vary which qubit lands in which role.
            qubits.rotate_left(perm % 3);
            if perm >= 3 { qubits.swap(0, 1); }
            let gate = GateInstance::new(kind, &qubits[..kind.arity()], &vec![theta; kind.num_params()]);
            let start = random_state(4, seed);
            let mut state = start.clone();
            state.apply(&gate).unwrap();
            prop_assert!((state.norm_sqr() - 1.0).abs() <= 1e-12);
            for g in inverse(&gate) {
                state.apply(&g).unwrap();
            }
            let worst = state.amplitudes().iter().zip(start.amplitudes())
                .map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(worst <= 1e-12, "{kind}: {worst}");
        }
    }

    #[test]
    fn policies_agree_on_large_state() {
        let c = generate_family(&CircuitFamily::RandomDense { n: 14, depth: 40, seed: 4 }).unwrap();
        let seq = simulate_dense_with(&c, ExecPolicy::Sequential).unwrap();
        let par = simulate_dense_with(&c, ExecPolicy::Parallel).unwrap();
        assert_eq!(seq, par);
    }
}
