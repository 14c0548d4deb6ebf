//! Quantum states in two interoperable forms.
//!
//! [`GridWaveFunction`] is the exact substrate: complex amplitudes of up to
//! three particles on a discretized 1-D configuration grid. [`BranchState`]
//! is the coarse model: a finite set of macroscopically distinct branches,
//! each with a weight `|c_i|^2` and a point anchor per particle. The branch
//! model is only faithful when the branches are well separated relative to
//! the collapse width.

mod branch;
mod grid;
mod product;

pub use branch::{branch_weights, Branch, BranchState};
pub use grid::{make_grid_wavefunction, GridSpec, GridWaveFunction, Packet};
pub use product::ProductState;

use serde::{Deserialize, Serialize};

use crate::error::{GrwError, Result};

/// A closed 1-D interval, "the box".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lower: f64,
    upper: f64,
}

impl Region {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(GrwError::InvalidRegion { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}
