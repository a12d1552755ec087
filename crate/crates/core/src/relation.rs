//! Sparse relational encoding of gate unitaries and algebraic gate fusion.
//!
//! A relation over `k` qubits holds rows `(in_s, out_s, r, i)`, one per
//! nonzero entry `M[out_s][in_s] = r + i·i` of the `2^k × 2^k` unitary.
//! Within a gate, the qubit at position `p` of the gate's qubit list maps to
//! local bit `k - 1 - p`, so the first listed qubit is the most significant
//! local bit. `CX` listed as `[control, target]` is then the textbook
//! controlled-NOT matrix.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write;

use num_complex::Complex64;

use crate::circuit::{unitarity_deviation, GateInstance, GateKind, UNITARY_TOLERANCE};
use crate::error::{Error, Result};

/// Entries whose magnitude is below this are not stored.
pub const DROP_THRESHOLD: f64 = 1e-15;

/// Largest support a relation (fused or not) may have.
pub const MAX_RELATION_QUBITS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelationRow {
    pub in_s: u32,
    pub out_s: u32,
    pub r: f64,
    pub i: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateRelation {
    arity: usize,
    rows: Vec<RelationRow>,
    label: String,
}

impl GateRelation {
    /// Builds a relation from a row-major `2^arity`-dimensional matrix,
    /// dropping entries below [`DROP_THRESHOLD`]. Rows are ordered by
    /// `(in_s, out_s)`.
    pub fn from_matrix(arity: usize, matrix: &[Complex64], label: String) -> Self {
        let dim = 1usize << arity;
        debug_assert_eq!(matrix.len(), dim * dim);
        let mut rows = Vec::new();
        for in_s in 0..dim {
            for out_s in 0..dim {
                let z = matrix[out_s * dim + in_s];
                if z.norm() >= DROP_THRESHOLD {
                    rows.push(RelationRow {
                        in_s: in_s as u32,
                        out_s: out_s as u32,
                        r: z.re,
                        i: z.im,
                    });
                }
            }
        }
        GateRelation { arity, rows, label }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn rows(&self) -> &[RelationRow] {
        &self.rows
    }

    /// Human-readable identity of the relation: kind plus parameters at
    /// full precision, or the full row content for fused relations.
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Stable table name derived from a hash of the label.
    pub fn table_name(&self) -> String {
        format!("gate_{:016x}", fnv1a(self.label.as_bytes()))
    }

    /// Densifies into a row-major matrix with `M[out][in]`.
    pub fn to_matrix(&self) -> Vec<Complex64> {
        let dim = 1usize << self.arity;
        let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
        for row in &self.rows {
            m[row.out_s as usize * dim + row.in_s as usize] = Complex64::new(row.r, row.i);
        }
        m
    }

    /// True when every row maps an index to itself.
    pub fn is_diagonal(&self) -> bool {
        self.rows.iter().all(|r| r.in_s == r.out_s)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Standard row-major unitary for a named kind.
pub fn standard_matrix(kind: GateKind, params: &[f64]) -> Result<Vec<Complex64>> {
    if kind.has_matrix() {
        return Err(Error::Relation(format!("{kind} has no standard matrix")));
    }
    if params.len() != kind.num_params() {
        return Err(Error::Relation(format!(
            "{kind} expects {} parameter(s), got {}",
            kind.num_params(),
            params.len()
        )));
    }
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    let h = FRAC_1_SQRT_2;
    let half = params.first().map_or(0.0, |t| t / 2.0);
    let (cos, sin) = (half.cos(), half.sin());
    let m = match kind {
        GateKind::H => vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)],
        GateKind::X => vec![o, l, l, o],
        GateKind::Y => vec![o, c(0.0, -1.0), c(0.0, 1.0), o],
        GateKind::Z => vec![l, o, o, c(-1.0, 0.0)],
        GateKind::S => vec![l, o, o, c(0.0, 1.0)],
        GateKind::Sdg => vec![l, o, o, c(0.0, -1.0)],
        GateKind::T => vec![l, o, o, c(h, h)],
        GateKind::Tdg => vec![l, o, o, c(h, -h)],
        GateKind::Rx => vec![c(cos, 0.0), c(0.0, -sin), c(0.0, -sin), c(cos, 0.0)],
        GateKind::Ry => vec![c(cos, 0.0), c(-sin, 0.0), c(sin, 0.0), c(cos, 0.0)],
        GateKind::Rz => vec![c(cos, -sin), o, o, c(cos, sin)],
        GateKind::Cx => permutation(2, |s| if s & 0b10 != 0 { s ^ 0b01 } else { s }),
        GateKind::Cz => {
            let mut m = permutation(2, |s| s);
            m[15] = c(-1.0, 0.0);
            m
        }
        GateKind::Swap => permutation(2, |s| ((s & 1) << 1) | (s >> 1)),
        GateKind::Ccx => permutation(3, |s| if s & 0b110 == 0b110 { s ^ 0b001 } else { s }),
        GateKind::U1 | GateKind::U2 => unreachable!(),
    };
    Ok(m)
}

/// Matrix of the permutation `|s⟩ → |f(s)⟩`.
fn permutation(arity: usize, f: impl Fn(usize) -> usize) -> Vec<Complex64> {
    let dim = 1usize << arity;
    let mut m = vec![c(0.0, 0.0); dim * dim];
    for s in 0..dim {
        m[f(s) * dim + s] = c(1.0, 0.0);
    }
    m
}

fn render_f64(out: &mut String, v: f64) {
    // `{:e}` is the shortest representation that round-trips.
    let _ = write!(out, "{v:e}");
}

/// Builds the relation of a named or explicit gate.
pub fn relation_for(kind: GateKind, params: &[f64], matrix: Option<&[Complex64]>) -> Result<GateRelation> {
    let mut label = kind.name().to_string();
    let m = if kind.has_matrix() {
        let m = matrix.ok_or_else(|| Error::Relation(format!("{kind} requires a matrix")))?;
        let dim = 1usize << kind.arity();
        if m.len() != dim * dim {
            return Err(Error::Relation(format!(
                "{kind} matrix needs {} entries, got {}",
                dim * dim,
                m.len()
            )));
        }
        let dev = unitarity_deviation(m, dim);
        if dev.is_nan() || dev > UNITARY_TOLERANCE {
            return Err(Error::Relation(format!(
                "{kind} matrix is not unitary (max |M†M - I| = {dev:e})"
            )));
        }
        label.push('[');
        for (k, z) in m.iter().enumerate() {
            if k > 0 {
                label.push(',');
            }
            render_f64(&mut label, z.re);
            label.push(':');
            render_f64(&mut label, z.im);
        }
        label.push(']');
        m.to_vec()
    } else {
        if !params.is_empty() {
            label.push('(');
            for (k, p) in params.iter().enumerate() {
                if k > 0 {
                    label.push(',');
                }
                render_f64(&mut label, *p);
            }
            label.push(')');
        }
        standard_matrix(kind, params)?
    };
    Ok(GateRelation::from_matrix(kind.arity(), &m, label))
}

/// Relation for one gate of a circuit.
pub fn relation_for_gate(gate: &GateInstance) -> Result<GateRelation> {
    relation_for(gate.kind, &gate.params, gate.matrix.as_deref())
}

/// Embeds a relation acting on `qubits` into the larger ordered `support`,
/// tensoring with identity on the remaining qubits.
fn embed(rel: &GateRelation, qubits: &[usize], support: &[usize]) -> Vec<Complex64> {
    let k = support.len();
    let dim = 1usize << k;
    let arity = qubits.len();
    // Local bit of each gate qubit inside the support.
    let support_bit = |q: usize| {
        let p = support.iter().position(|&s| s == q).expect("qubit in support");
        k - 1 - p
    };
    let gate_bits: Vec<usize> = qubits.iter().map(|&q| support_bit(q)).collect();
    let gate_mask: usize = gate_bits.iter().map(|b| 1usize << b).sum();
    let to_gate_local = |s: usize| {
        gate_bits
            .iter()
            .enumerate()
            .fold(0usize, |acc, (p, &b)| acc | (((s >> b) & 1) << (arity - 1 - p)))
    };
    let from_gate_local = |local: usize| {
        gate_bits
            .iter()
            .enumerate()
            .fold(0usize, |acc, (p, &b)| acc | (((local >> (arity - 1 - p)) & 1) << b))
    };
    let mut m = vec![c(0.0, 0.0); dim * dim];
    for in_s in 0..dim {
        let rest = in_s & !gate_mask;
        let local_in = to_gate_local(in_s) as u32;
        for row in rel.rows.iter().filter(|r| r.in_s == local_in) {
            let out_s = rest | from_gate_local(row.out_s as usize);
            m[out_s * dim + in_s] = c(row.r, row.i);
        }
    }
    m
}

fn matmul(a: &[Complex64], b: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut out = vec![c(0.0, 0.0); dim * dim];
    for r in 0..dim {
        for k in 0..dim {
            let x = a[r * dim + k];
            if x == c(0.0, 0.0) {
                continue;
            }
            for col in 0..dim {
                out[r * dim + col] += x * b[k * dim + col];
            }
        }
    }
    out
}

/// Ordered union of two qubit lists: `first` followed by the new qubits of
/// `second` in their order.
pub fn union_support(first: &[usize], second: &[usize]) -> Vec<usize> {
    let mut support = first.to_vec();
    support.extend(second.iter().filter(|q| !first.contains(q)));
    support
}

/// Fuses `first` followed by `second` into one relation computing
/// `second · first` on the union of their supports.
pub fn fuse(
    first: (&GateRelation, &[usize]),
    second: (&GateRelation, &[usize]),
) -> Result<(GateRelation, Vec<usize>)> {
    let support = union_support(first.1, second.1);
    if support.len() > MAX_RELATION_QUBITS {
        return Err(Error::FusionRefused {
            support: support.len(),
            limit: MAX_RELATION_QUBITS,
        });
    }
    let dim = 1usize << support.len();
    let a = embed(first.0, first.1, &support);
    let b = embed(second.0, second.1, &support);
    let product = matmul(&b, &a, dim);

    let mut label = String::from("fused");
    let _ = write!(label, "{}{{", support.len());
    let rel = GateRelation::from_matrix(support.len(), &product, String::new());
    for row in &rel.rows {
        let _ = write!(label, "{}>{}:", row.in_s, row.out_s);
        render_f64(&mut label, row.r);
        label.push(':');
        render_f64(&mut label, row.i);
        label.push(';');
    }
    label.push('}');
    Ok((GateRelation { label, ..rel }, support))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(rel: &GateRelation) -> Vec<(u32, u32, f64, f64)> {
        rel.rows().iter().map(|r| (r.in_s, r.out_s, r.r, r.i)).collect()
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn hadamard_rows() {
        let rel = relation_for(GateKind::H, &[], None).unwrap();
        assert_eq!(
            rows(&rel),
            vec![
                (0, 0, FRAC_1_SQRT_2, 0.0),
                (0, 1, FRAC_1_SQRT_2, 0.0),
                (1, 0, FRAC_1_SQRT_2, 0.0),
                (1, 1, -FRAC_1_SQRT_2, 0.0),
            ]
        );
    }

    #[test]
    fn cnot_rows() {
        let rel = relation_for(GateKind::Cx, &[], None).unwrap();
        assert_eq!(
            rows(&rel),
            vec![(0, 0, 1.0, 0.0), (1, 1, 1.0, 0.0), (2, 3, 1.0, 0.0), (3, 2, 1.0, 0.0)]
        );
    }

    #[test]
    fn rz_zero_is_identity() {
        let rel = relation_for(GateKind::Rz, &[0.0], None).unwrap();
        assert_eq!(rows(&rel), vec![(0, 0, 1.0, 0.0), (1, 1, 1.0, 0.0)]);
    }

    #[test]
    fn row_counts() {
        assert_eq!(relation_for(GateKind::H, &[], None).unwrap().rows().len(), 4);
        assert_eq!(relation_for(GateKind::Cx, &[], None).unwrap().rows().len(), 4);
        for (kind, params) in [
            (GateKind::Z, vec![]),
            (GateKind::S, vec![]),
            (GateKind::T, vec![]),
            (GateKind::Rz, vec![0.3]),
            (GateKind::Cz, vec![]),
        ] {
            let rel = relation_for(kind, &params, None).unwrap();
            assert_eq!(rel.rows().len(), 1 << kind.arity(), "{kind}");
            assert!(rel.is_diagonal());
        }
    }

    #[test]
    fn wrong_params_and_bad_matrix() {
        assert!(relation_for(GateKind::Rx, &[], None).is_err());
        assert!(relation_for(GateKind::H, &[1.0], None).is_err());
        assert!(relation_for(GateKind::U1, &[], None).is_err());
        let bad = vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        assert!(relation_for(GateKind::U1, &[], Some(&bad)).is_err());
        let nan = vec![c(f64::NAN, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        assert!(relation_for(GateKind::U1, &[], Some(&nan)).is_err());
    }

    #[test]
    fn labels_are_deterministic_and_distinct() {
        let a = relation_for(GateKind::Rz, &[0.5], None).unwrap();
        let b = relation_for(GateKind::Rz, &[0.5], None).unwrap();
        let d = relation_for(GateKind::Rz, &[0.5 + 1e-16], None).unwrap();
        assert_eq!(a.table_name(), b.table_name());
        assert_eq!(a.label(), "rz(5e-1)");
        assert_ne!(a.table_name(), d.table_name());
    }

    #[test]
    fn fuse_hh_is_identity() {
        let h = relation_for(GateKind::H, &[], None).unwrap();
        let (rel, support) = fuse((&h, &[0]), (&h, &[0])).unwrap();
        assert_eq!(support, vec![0]);
        let m = rel.to_matrix();
        let id = permutation(1, |s| s);
        assert!(max_diff(&m, &id) < 1e-15);
        // Off-diagonal dust is dropped.
        assert_eq!(rel.rows().len(), 2);
    }

    #[test]
    fn fuse_h_then_cx() {
        let h = relation_for(GateKind::H, &[], None).unwrap();
        let cx = relation_for(GateKind::Cx, &[], None).unwrap();
        let (rel, support) = fuse((&h, &[0]), (&cx, &[0, 1])).unwrap();
        assert_eq!(support, vec![0, 1]);
        // CX · (H ⊗ I), written out by hand.
        let h = FRAC_1_SQRT_2;
        let expected: Vec<Complex64> = [
            [h, 0.0, h, 0.0],
            [0.0, h, 0.0, h],
            [0.0, h, 0.0, -h],
            [h, 0.0, -h, 0.0],
        ]
        .iter()
        .flatten()
        .map(|&re| c(re, 0.0))
        .collect();
        assert!(max_diff(&rel.to_matrix(), &expected) < 1e-15);
    }

    #[test]
    fn fuse_commuting_flips() {
        let x = relation_for(GateKind::X, &[], None).unwrap();
        let (rel, support) = fuse((&x, &[0]), (&x, &[1])).unwrap();
        assert_eq!(support, vec![0, 1]);
        assert_eq!(
            rows(&rel),
            vec![(0, 3, 1.0, 0.0), (1, 2, 1.0, 0.0), (2, 1, 1.0, 0.0), (3, 0, 1.0, 0.0)]
        );
    }

    #[test]
    fn fuse_refuses_wide_support() {
        let cx = relation_for(GateKind::Cx, &[], None).unwrap();
        let err = fuse((&cx, &[0, 1]), (&cx, &[2, 3])).unwrap_err();
        assert!(matches!(err, Error::FusionRefused { support: 4, limit: 3 }));
    }

    #[test]
    fn embed_respects_position_order() {
        // CX listed as [1, 0] inside support [0, 1]: control is the low local bit.
        let cx = relation_for(GateKind::Cx, &[], None).unwrap();
        let m = embed(&cx, &[1, 0], &[0, 1]);
        let expected = permutation(2, |s| if s & 1 != 0 { s ^ 0b10 } else { s });
        assert!(max_diff(&m, &expected) < 1e-15);
    }

    proptest! {
        #[test]
        fn fused_relations_stay_unitary(
            k1 in 0usize..15, k2 in 0usize..15,
            a in 0.0f64..6.3, b in 0.0f64..6.3,
            q1 in proptest::sample::subsequence(vec![0usize, 1, 2], 1..=3),
            q2 in proptest::sample::subsequence(vec![0usize, 1, 2], 1..=3),
        ) {
            let k1 = GateKind::NAMED[k1];
            let k2 = GateKind::NAMED[k2];
            prop_assume!(q1.len() >= k1.arity() && q2.len() >= k2.arity());
            let g1 = relation_for(k1, &vec![a; k1.num_params()], None).unwrap();
            let g2 = relation_for(k2, &vec![b; k2.num_params()], None).unwrap();
            let (rel, support) = fuse((&g1, &q1[..k1.arity()]), (&g2, &q2[..k2.arity()])).unwrap();
            prop_assert_eq!(rel.arity(), support.len());
            prop_assert!(unitarity_deviation(&rel.to_matrix(), 1 << support.len()) <= 1e-12);
        }
    }
}
