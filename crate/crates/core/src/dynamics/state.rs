use rand::Rng;

use super::collapse::{
    branch_collapse_in_place, collapse_grid_in_place, sample_collapse_center_branch,
    sample_collapse_center_grid,
};
use super::{evolve_unitary_in_place, Hamiltonian};
use crate::error::{GrwError, Result};
use crate::wavefunction::{BranchState, GridWaveFunction, ProductState};

/// A state the jump process can drive.
pub trait CollapseState: Clone + Send + Sync {
    fn num_particles(&self) -> usize;

    fn supports(&self, hamiltonian: &Hamiltonian) -> bool;

    fn sample_center<R: Rng + ?Sized>(&self, k: usize, sigma: f64, rng: &mut R) -> Result<f64>;

    fn collapse(&mut self, k: usize, center: f64, sigma: f64) -> Result<()>;

    fn evolve(&mut self, dt: f64, hamiltonian: &Hamiltonian) -> Result<()>;

    /// Per-event snapshot logged before and after a collapse on particle
    /// `k`: branch weights for branch models, `[mean, variance]` of the
    /// particle's marginal for the grid model.
    fn summary(&self, k: usize) -> Vec<f64>;
}

fn unsupported(h: &Hamiltonian) -> GrwError {
    GrwError::InvalidParams(format!("{h:?} requires the grid model"))
}

impl CollapseState for GridWaveFunction {
    fn num_particles(&self) -> usize {
        self.spec().num_particles
    }

    fn supports(&self, _: &Hamiltonian) -> bool {
        true
    }

    fn sample_center<R: Rng + ?Sized>(&self, k: usize, sigma: f64, rng: &mut R) -> Result<f64> {
        sample_collapse_center_grid(self, k, sigma, rng)
    }

    fn collapse(&mut self, k: usize, center: f64, sigma: f64) -> Result<()> {
        collapse_grid_in_place(self, k, center, sigma)
    }

    fn evolve(&mut self, dt: f64, hamiltonian: &Hamiltonian) -> Result<()> {
        evolve_unitary_in_place(self, dt, hamiltonian)
    }

    fn summary(&self, k: usize) -> Vec<f64> {
        match self.marginal_moments(k) {
            Ok((m, v)) => vec![m, v],
            Err(_) => Vec::new(),
        }
    }
}

impl CollapseState for BranchState {
    fn num_particles(&self) -> usize {
        BranchState::num_particles(self)
    }

    fn supports(&self, h: &Hamiltonian) -> bool {
        matches!(h, Hamiltonian::Zero)
    }

    fn sample_center<R: Rng + ?Sized>(&self, k: usize, sigma: f64, rng: &mut R) -> Result<f64> {
        sample_collapse_center_branch(self, k, sigma, rng)
    }

    fn collapse(&mut self, k: usize, center: f64, sigma: f64) -> Result<()> {
        branch_collapse_in_place(self, k, center, sigma)
    }

    fn evolve(&mut self, dt: f64, h: &Hamiltonian) -> Result<()> {
        if dt > 0.0 && !self.supports(h) {
            return Err(unsupported(h));
        }
        Ok(())
    }

    fn summary(&self, _: usize) -> Vec<f64> {
        self.weights()
    }
}

impl CollapseState for ProductState {
    fn num_particles(&self) -> usize {
        ProductState::num_particles(self)
    }

    fn supports(&self, h: &Hamiltonian) -> bool {
        matches!(h, Hamiltonian::Zero)
    }

    fn sample_center<R: Rng + ?Sized>(&self, k: usize, sigma: f64, rng: &mut R) -> Result<f64> {
        let (f, local) = self.locate(k)?;
        sample_collapse_center_branch(&self.factors()[f], local, sigma, rng)
    }

    fn collapse(&mut self, k: usize, center: f64, sigma: f64) -> Result<()> {
        let (f, local) = self.locate(k)?;
        branch_collapse_in_place(self.factor_mut(f), local, center, sigma)
    }

    fn evolve(&mut self, dt: f64, h: &Hamiltonian) -> Result<()> {
        if dt > 0.0 && !self.supports(h) {
            return Err(unsupported(h));
        }
        Ok(())
    }

    fn summary(&self, k: usize) -> Vec<f64> {
        match self.locate(k) {
            Ok((f, _)) => self.factors()[f].weights(),
            Err(_) => Vec::new(),
        }
    }
}
