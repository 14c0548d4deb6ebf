//! Monte Carlo simulation of GRW spontaneous-collapse dynamics with explicit
//! primitive ontologies.
//!
//! The crate is organized bottom-up:
//!
//! * [`wavefunction`]: grid-discretized wave functions and the coarse
//!   branch model.
//! * [`dynamics`]: the jump process (waiting times, collapse centers,
//!   collapse operators, free evolution, trajectories).
//! * [`ontology`]: flashes, matter density and the weight-only view.
//! * [`scenario`]: cat, tail and marble experiments with classifiers.
//! * [`ensemble`]: seeded parallel ensembles and their statistical checks.
//! * [`oracle`]: slow independent reference computations.
//! * [`acceptance`]: the acceptance criteria, shared by tests and the CLI.

pub mod acceptance;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod ontology;
pub mod oracle;
pub mod scenario;
pub mod wavefunction;

pub use dynamics::{
    run_trajectory, CollapseEvent, CollapseState, GrwParams, Hamiltonian, RngStream, TrajectoryRecord,
};

pub use ensemble::{run_ensemble, EnsembleSummary, StatRecord};
pub use error::{GrwError, Result};
pub use ontology::{Flash, MatterDensityField, SpatialGrid};
pub use scenario::{Classification, ScenarioConfig, Verdict};
pub use wavefunction::{BranchState, GridSpec, GridWaveFunction, Packet, ProductState, Region};
