use serde::{Deserialize, Serialize};

use crate::error::{GrwError, Result};

/// One macroscopically distinct branch: a weight and a point anchor per
/// particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: String,
    pub anchors: Vec<f64>,
    log_weight: f64,
}

impl Branch {
    /// Natural log of the normalized weight; `-inf` only for branches that
    /// started with weight zero.
    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }
}

/// Weights and anchors of finitely many branches with disjoint supports.
///
/// Weights are held as normalized log-weights so that a branch suppressed by
/// many collapses keeps a strictly positive (if unrepresentable as a plain
/// `f64`) weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchState {
    branches: Vec<Branch>,
    num_particles: usize,
}

impl BranchState {
    /// Builds a state from `(label, weight, anchors)` triples. Weights are
    /// renormalized to sum to one.
    pub fn new<S: Into<String>>(branches: Vec<(S, f64, Vec<f64>)>) -> Result<Self> {
        if branches.is_empty() {
            return Err(GrwError::InvalidBranchState("no branches".into()));
        }
        let num_particles = branches[0].2.len();
        if num_particles == 0 {
            return Err(GrwError::InvalidBranchState("branches need at least one anchor".into()));
        }
        let mut out = Vec::with_capacity(branches.len());
        for (label, w, anchors) in branches {
            let label = label.into();
            if !(w.is_finite() && w >= 0.0) {
                return Err(GrwError::InvalidBranchState(format!(
                    "branch {label:?} has invalid weight {w}"
                )));
            }
            if anchors.len() != num_particles {
                return Err(GrwError::InvalidBranchState(format!(
                    "branch {label:?} has {} anchors, expected {num_particles}",
                    anchors.len()
                )));
            }
            if anchors.iter().any(|a| !a.is_finite()) {
                return Err(GrwError::InvalidBranchState(format!(
                    "branch {label:?} has a non-finite anchor"
                )));
            }
            out.push(Branch {
                label,
                anchors,
                log_weight: w.ln(),
            });
        }
        let mut state = Self {
            branches: out,
            num_particles,
        };
        state.renormalize()?;
        Ok(state)
    }

    /// The superposition `c_1 psi_1 + c_2 psi_2` with every particle of
    /// branch 1 at `inside` and of branch 2 at `outside`.
    pub fn two_branch(c1_sq: f64, inside: f64, outside: f64, num_particles: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&c1_sq) {
            return Err(GrwError::InvalidBranchState(format!(
                "|c1|^2 must lie in [0, 1], got {c1_sq}"
            )));
        }
        Self::new(vec![
            ("inside", c1_sq, vec![inside; num_particles]),
            ("outside", 1.0 - c1_sq, vec![outside; num_particles]),
        ])
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn num_particles(&self) -> usize {
        self.num_particles
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.log_weight).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.log_weight.exp()).collect()
    }

    pub fn weight(&self, branch: usize) -> f64 {
        self.branches[branch].log_weight.exp()
    }

    /// Index of the heaviest branch (first one on ties).
    pub fn leading_branch(&self) -> usize {
        let mut best = 0;
        for (i, b) in self.branches.iter().enumerate() {
            if b.log_weight > self.branches[best].log_weight {
                best = i;
            }
        }
        best
    }

    /// Smallest anchor distance over particles and branch pairs; infinite
    /// for a single branch.
    pub fn separation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for (i, a) in self.branches.iter().enumerate() {
            for b in &self.branches[i + 1..] {
                for (x, y) in a.anchors.iter().zip(&b.anchors) {
                    min = min.min((x - y).abs());
                }
            }
        }
        min
    }

    /// Adds `delta[i]` to each log-weight and renormalizes.
    pub(crate) fn reweight_log(&mut self, delta: &[f64]) -> Result<()> {
        for (b, d) in self.branches.iter_mut().zip(delta) {
            b.log_weight += d;
        }
        self.renormalize()
    }

    fn renormalize(&mut self) -> Result<()> {
        let max = self
            .branches
            .iter()
            .map(|b| b.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(GrwError::InvalidBranchState(
                "weights sum to zero or are not finite".into(),
            ));
        }
        let lse = max
            + self
                .branches
                .iter()
                .map(|b| (b.log_weight - max).exp())
                .sum::<f64>()
                .ln();
        for b in &mut self.branches {
            b.log_weight -= lse;
        }
        Ok(())
    }
}

/// `(label, weight)` pairs, the weight-only view of a branch state.
pub fn branch_weights(state: &BranchState) -> Vec<(String, f64)> {
    state
        .branches
        .iter()
        .map(|b| (b.label.clone(), b.log_weight.exp()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fresh_superposition_echoes_weights() {
        let s = BranchState::two_branch(0.9, 0.0, 10.0, 1).unwrap();
        let w = branch_weights(&s);
        assert_eq!(w[0].0, "inside");
        assert_eq!(w[1].0, "outside");
        assert!((w[0].1 - 0.9).abs() < 1e-15);
        assert!((w[1].1 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_branch_has_unit_weight() {
        let s = BranchState::new(vec![("alive", 0.3, vec![1.0])]).unwrap();
        assert_eq!(branch_weights(&s), vec![("alive".to_string(), 1.0)]);
        assert_eq!(s.separation(), f64::INFINITY);
    }

    #[test]
    fn zero_weight_branch_is_kept_at_minus_infinity() {
        let s = BranchState::two_branch(1.0, 0.0, 10.0, 1).unwrap();
        assert_eq!(s.weights(), vec![1.0, 0.0]);
        assert_eq!(s.branches()[1].log_weight(), f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_states_are_rejected() {
        assert!(BranchState::new::<&str>(vec![]).is_err());
        assert!(BranchState::new(vec![("a", -0.1, vec![0.0])]).is_err());
        assert!(BranchState::new(vec![("a", 0.0, vec![0.0])]).is_err());
        assert!(BranchState::new(vec![("a", 0.5, vec![0.0]), ("b", 0.5, vec![0.0, 1.0])]).is_err());
        assert!(BranchState::two_branch(1.5, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn separation_is_min_over_particles_and_pairs() {
        let s = BranchState::new(vec![
            ("a", 1.0, vec![0.0, 0.0]),
            ("b", 1.0, vec![10.0, 3.0]),
            ("c", 1.0, vec![20.0, 30.0]),
        ])
        .unwrap();
        assert_eq!(s.separation(), 3.0);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(raw in prop::collection::vec(1e-6f64..10.0, 1..8),
                              shifts in prop::collection::vec(-500.0f64..500.0, 8)) {
            let mut s = BranchState::new(
                raw.iter().enumerate().map(|(i, w)| (format!("b{i}"), *w, vec![i as f64 * 10.0])).collect(),
            ).unwrap();
            let sum: f64 = s.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            s.reweight_log(&shifts[..raw.len()]).unwrap();
            let sum: f64 = s.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(s.log_weights().iter().all(|l| l.is_finite()));
        }
    }
}
