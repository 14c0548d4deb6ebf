use serde::{Deserialize, Serialize};

use super::BranchState;
use crate::error::{GrwError, Result};

/// Tensor product of independent branch states, e.g. `psi^{(x)n}` for n
/// non-interacting marbles. Global particle indices run over the factors
/// in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    factors: Vec<BranchState>,
}

impl ProductState {
    pub fn new(factors: Vec<BranchState>) -> Result<Self> {
        if factors.is_empty() {
            return Err(GrwError::InvalidBranchState("product of zero factors".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[BranchState] {
        &self.factors
    }

    pub fn num_particles(&self) -> usize {
        self.factors.iter().map(BranchState::num_particles).sum()
    }

    /// Maps a global particle index to `(factor, local particle)`.
    pub fn locate(&self, particle: usize) -> Result<(usize, usize)> {
        let mut offset = 0;
        for (i, f) in self.factors.iter().enumerate() {
            if particle < offset + f.num_particles() {
                return Ok((i, particle - offset));
            }
            offset += f.num_particles();
        }
        Err(GrwError::ParticleOutOfRange {
            index: particle,
            count: offset,
        })
    }

    pub(crate) fn factor_mut(&mut self, i: usize) -> &mut BranchState {
        &mut self.factors[i]
    }
}
