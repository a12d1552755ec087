use serde::{Deserialize, Serialize};

/// One stored basis state: packed index and complex amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub s: u64,
    pub r: f64,
    pub i: f64,
}

impl StateRow {
    pub fn new(s: u64, r: f64, i: f64) -> Self {
        StateRow { s, r, i }
    }

    pub fn probability(&self) -> f64 {
        self.r * self.r + self.i * self.i
    }
}

/// Measurement probability of one basis state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probability {
    pub s: u64,
    pub p: f64,
}

/// Born-rule probabilities, sorted by basis index.
pub fn probabilities(rows: &[StateRow]) -> Vec<Probability> {
    let mut out: Vec<Probability> = rows
        .iter()
        .map(|row| Probability {
            s: row.s,
            p: row.probability(),
        })
        .collect();
    out.sort_by_key(|p| p.s);
    out
}

pub fn total_probability(rows: &[StateRow]) -> f64 {
    rows.iter().map(StateRow::probability).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn born_rule() {
        let ghz = [StateRow::new(7, FRAC_1_SQRT_2, 0.0), StateRow::new(0, FRAC_1_SQRT_2, 0.0)];
        let p = probabilities(&ghz);
        assert_eq!(p.iter().map(|x| x.s).collect::<Vec<_>>(), vec![0, 7]);
        assert!(p.iter().all(|x| (x.p - 0.5).abs() < 1e-15));

        assert_eq!(probabilities(&[StateRow::new(0, 1.0, 0.0)]), vec![Probability { s: 0, p: 1.0 }]);

        let p = probabilities(&[StateRow::new(0, 0.0, 0.6), StateRow::new(1, 0.8, 0.0)]);
        assert!((p[0].p - 0.36).abs() < 1e-15);
        assert!((p[1].p - 0.64).abs() < 1e-15);
    }
}
