//! The GRW jump process.
//!
//! Collapses arrive at total rate `N * lambda_eff`. Each one picks a
//! particle uniformly, draws a center `X` with density `|L_{k,X} psi|^2`
//! and replaces `psi` by `L_{k,X} psi / |L_{k,X} psi|`, where `L_{k,X}`
//! multiplies by `g(x_k - X)`, `g(u) = (pi sigma^2)^(-1/4) exp(-u^2 / (2 sigma^2))`.
//! With this normalization `int |L_{k,X} psi|^2 dX = |psi|^2` exactly, and
//! the center density is the particle's marginal convolved with a Gaussian
//! of variance `sigma^2 / 2`.

mod collapse;
mod rng;
mod state;
mod trajectory;
mod unitary;

pub use collapse::{
    apply_collapse_grid, branch_collapse_update, collapse_center_density, collapse_grid_in_place,
    sample_collapse_center_branch, sample_collapse_center_grid, sample_waiting_time,
    TabulatedDensity, UNDERFLOW_FLOOR,
};
pub use rng::{RngStream, SimRng};
pub use state::CollapseState;
pub use trajectory::{run_trajectory, run_trajectory_with, CollapseEvent, Snapshot, TrajectoryRecord};
pub use unitary::{evolve_unitary, evolve_unitary_in_place, MAX_PROPAGATION_POINTS};

use serde::{Deserialize, Serialize};

use crate::error::{GrwError, Result};

/// Dynamics between collapses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Hamiltonian {
    /// `H = 0`: the state changes only at collapses.
    #[default]
    Zero,
    /// Free motion `p^2 / 2m` for every particle (grid model only), `hbar = 1`.
    FreeParticle { mass: f64 },
}

/// Parameters of the collapse process, all dimensionless: `sigma` is the
/// unit of length and `1 / lambda_eff` the unit of time by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrwParams {
    pub lambda_eff: f64,
    pub sigma: f64,
    pub total_time: f64,
    pub hamiltonian: Hamiltonian,
}

impl Default for GrwParams {
    fn default() -> Self {
        Self {
            lambda_eff: 1.0,
            sigma: 1.0,
            total_time: 50.0,
            hamiltonian: Hamiltonian::Zero,
        }
    }
}

impl GrwParams {
    pub fn new(lambda_eff: f64, sigma: f64, total_time: f64, hamiltonian: Hamiltonian) -> Result<Self> {
        let p = Self {
            lambda_eff,
            sigma,
            total_time,
            hamiltonian,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GrwError::InvalidParams(format!("{name} must be positive, got {v}")))
            }
        };
        positive("lambda_eff", self.lambda_eff)?;
        positive("sigma", self.sigma)?;
        positive("total_time", self.total_time)?;
        if let Hamiltonian::FreeParticle { mass } = self.hamiltonian {
            positive("mass", mass)?;
        }
        Ok(())
    }

    /// Total collapse rate `N * lambda_eff`.
    pub fn total_rate(&self, num_particles: usize) -> f64 {
        num_particles as f64 * self.lambda_eff
    }
}
