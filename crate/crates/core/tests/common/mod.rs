#![allow(dead_code)]

use std::f64::consts::TAU;

use num_complex::Complex64;
use qsql_core::circuit::{Circuit, GateInstance, GateKind};
use qsql_core::state::StateRow;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random unitary by Gram-Schmidt on the columns of a random complex matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        for u in &cols {
            let dot: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|z| z / norm).collect());
        }
    }
    let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (c, col) in cols.iter().enumerate() {
        for (r, z) in col.iter().enumerate() {
            m[r * dim + c] = *z;
        }
    }
    m
}

/// Random circuit over every gate kind, explicit unitaries included.
pub fn random_circuit(seed: u64, n: usize, depth: usize) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds: Vec<GateKind> = GateKind::ALL.iter().copied().filter(|k| k.arity() <= n).collect();
    let mut gates = Vec::with_capacity(depth);
    for _ in 0..depth {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let qubits = &all[..kind.arity()];
        let gate = if kind.has_matrix() {
            let m = random_unitary(1 << kind.arity(), &mut rng);
            GateInstance::unitary(qubits, m)
        } else {
            let params: Vec<f64> = (0..kind.num_params()).map(|_| rng.random_range(0.0..TAU)).collect();
            GateInstance::new(kind, qubits, &params)
        };
        gates.push(gate);
    }
    Circuit::new(n, gates).unwrap()
}

pub fn max_row_diff(a: &[StateRow], b: &[StateRow]) -> Option<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.s != y.s) {
        return None;
    }
    Some(
        a.iter()
            .zip(b)
            .map(|(x, y)| (x.r - y.r).abs().max((x.i - y.i).abs()))
            .fold(0.0, f64::max),
    )
}

/// Difference between two sparse states, treating missing rows as zero.
pub fn padded_diff(a: &[StateRow], b: &[StateRow]) -> f64 {
    use std::collections::BTreeMap;
    let mut m: BTreeMap<u64, (Complex64, Complex64)> = BTreeMap::new();
    let zero = Complex64::new(0.0, 0.0);
    for r in a {
        m.entry(r.s).or_insert((zero, zero)).0 = Complex64::new(r.r, r.i);
    }
    for r in b {
        m.entry(r.s).or_insert((zero, zero)).1 = Complex64::new(r.r, r.i);
    }
    m.values().map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
