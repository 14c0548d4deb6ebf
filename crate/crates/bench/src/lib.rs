//! Fixtures shared by the benchmarks.

use grwsim_core::scenario::{Ontology, ScenarioConfig, ScenarioKind};
use grwsim_core::{GridSpec, GridWaveFunction, Packet};

/// Two packets ten sigma apart on a single-particle grid.
pub fn packet_pair(points: usize) -> GridWaveFunction {
    let spec = GridSpec::new(-20.0, 20.0, points, 1).expect("valid grid");
    grwsim_core::wavefunction::make_grid_wavefunction(
        spec,
        &[Packet::real(vec![-5.0], 0.5, 0.7f64.sqrt()), Packet::real(vec![5.0], 0.5, 0.3f64.sqrt())],
    )
    .expect("valid packets")
}

pub fn marbles(ontology: Ontology) -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::Marbles,
        n_marbles: 5,
        c1_sq: 0.9,
        ontology,
        ..Default::default()
    }
}
