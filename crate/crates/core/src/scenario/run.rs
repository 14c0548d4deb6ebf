use rand::Rng;
use serde::{Deserialize, Serialize};

use super::build::{build_scenario, Scenario, SystemState};
use super::classify::{classify_grwf, verdict_transitions, Classification, Classifier, SystemRef, Transition, Verdict};
use super::config::{Ontology, ScenarioConfig};
use crate::dynamics::{run_trajectory_with, CollapseEvent, CollapseState, RngStream};
use crate::error::Result;
use crate::ontology::{flashes_of, Flash, MatterDensityField, TimeWindow};
use crate::wavefunction::{BranchState, GridWaveFunction, ProductState};

/// Splits a state into the systems that are classified one by one.
pub trait Systems {
    fn system(&self, index: usize) -> SystemRef<'_>;
}

impl Systems for BranchState {
    fn system(&self, _: usize) -> SystemRef<'_> {
        SystemRef::Branch(self)
    }
}

impl Systems for GridWaveFunction {
    fn system(&self, _: usize) -> SystemRef<'_> {
        SystemRef::Grid(self)
    }
}

impl Systems for ProductState {
    fn system(&self, index: usize) -> SystemRef<'_> {
        SystemRef::Branch(&self.factors()[index])
    }
}

/// What one cat or marble did over a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutcome {
    /// Weight of the in-box branch at each sampling time.
    pub inside_weights: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    pub transitions: Vec<Transition>,
    pub initial: Classification,
    pub last: Classification,
    /// GRWf verdict from the flashes in `[0, window)`, when the run is that long.
    pub forward_window: Option<Classification>,
    /// Index of the heaviest branch at the horizon (0 is the in-box branch).
    pub leading: usize,
    pub max_weight: f64,
}

impl SystemOutcome {
    pub fn resurrected(&self) -> bool {
        !self.transitions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub trajectory: u64,
    pub horizon: f64,
    /// Collapses in `[0, horizon]`, all systems together.
    pub flash_count: usize,
    pub systems: Vec<SystemOutcome>,
}

/// Raw material behind an outcome, kept only on request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDetail {
    pub events: Vec<CollapseEvent>,
    /// Past flashes followed by the run's own.
    pub flashes: Vec<Flash>,
    /// Matter density of the first system at each sampling time.
    pub densities: Vec<MatterDensityField>,
    pub sample_times: Vec<f64>,
}

/// Builds and runs one trajectory of `config` on its own stream.
pub fn run_scenario(config: &ScenarioConfig, stream: RngStream) -> Result<ScenarioOutcome> {
    run_scenario_detailed(config, stream, false).map(|(o, _)| o)
}

pub fn run_scenario_detailed(
    config: &ScenarioConfig,
    stream: RngStream,
    detail: bool,
) -> Result<(ScenarioOutcome, Option<ScenarioDetail>)> {
    let mut rng = stream.rng();
    let scenario = build_scenario(config, &mut rng)?;
    run_built(&scenario, &mut rng, stream.stream, detail)
}

/// Runs an already built scenario. `trajectory` only labels errors and output.
pub fn run_built<R: Rng + ?Sized>(
    scenario: &Scenario,
    rng: &mut R,
    trajectory: u64,
    detail: bool,
) -> Result<(ScenarioOutcome, Option<ScenarioDetail>)> {
    match &scenario.initial {
        SystemState::Branch(s) => evaluate(scenario, s.clone(), rng, trajectory, detail),
        SystemState::Grid(s) => evaluate(scenario, s.clone(), rng, trajectory, detail),
        SystemState::Marbles(s) => evaluate(scenario, s.clone(), rng, trajectory, detail),
    }
}

fn evaluate<S: CollapseState + Systems, R: Rng + ?Sized>(
    scenario: &Scenario,
    initial: S,
    rng: &mut R,
    trajectory: u64,
    detail: bool,
) -> Result<(ScenarioOutcome, Option<ScenarioDetail>)> {
    let config = &scenario.config;
    let plan = &scenario.plan;
    let record = run_trajectory_with(initial, &plan.params, rng, &plan.sample_times, trajectory)?;
    let classifier = Classifier::from_config(config)?;
    let box_region = config.box_region;
    let horizon = plan.params.total_time;

    let mut flashes = scenario.past_flashes.clone();
    flashes.extend(flashes_of(&record));
    let per_system: Vec<Vec<Flash>> = (0..config.num_systems())
        .map(|s| {
            flashes
                .iter()
                .filter(|f| f.particle / config.particles == s)
                .copied()
                .collect()
        })
        .collect();

    let mut systems = Vec::with_capacity(per_system.len());
    for (s, own) in per_system.iter().enumerate() {
        let mut inside_weights = Vec::with_capacity(record.snapshots.len());
        let mut classes: Vec<Classification> = Vec::with_capacity(record.snapshots.len());
        let mut prev: Option<SystemRef<'_>> = None;
        for snap in &record.snapshots {
            let view = snap.state.system(s);
            let unchanged = classifier.ontology != Ontology::Grwf
                && prev.is_some_and(|p| p.same_state(&view));
            let c = match classes.last() {
                Some(&c) if unchanged => c,
                _ => classifier.classify(view, own, snap.time)?,
            };
            inside_weights.push(view.inside_weight(&box_region));
            classes.push(c);
            prev = Some(view);
        }
        let timeline: Vec<(f64, Verdict)> = record
            .snapshots
            .iter()
            .zip(&classes)
            .map(|(snap, c)| (snap.time, c.verdict))
            .collect();
        let (leading, max_weight) = record.final_state.system(s).leading_weight(&box_region);
        let forward_window = if horizon >= plan.window {
            let w = TimeWindow::new(0.0, plan.window)?;
            Some(classify_grwf(own, &box_region, w, config.theta_f))
        } else {
            None
        };
        let (Some(&initial), Some(&last)) = (classes.first(), classes.last()) else {
            unreachable!("sampling times always include 0 and the horizon");
        };
        systems.push(SystemOutcome {
            inside_weights,
            verdicts: classes.iter().map(|c| c.verdict).collect(),
            transitions: verdict_transitions(&timeline),
            initial,
            last,
            forward_window,
            leading,
            max_weight,
        });
    }

    let outcome = ScenarioOutcome {
        trajectory,
        horizon,
        flash_count: record.events.len(),
        systems,
    };
    let detail = if detail {
        let densities = record
            .snapshots
            .iter()
            .map(|snap| {
                snap.state
                    .system(0)
                    .matter_density(&classifier.masses, classifier.density_grid, snap.time)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(ScenarioDetail {
            events: record.events,
            flashes,
            densities,
            sample_times: plan.sample_times.clone(),
        })
    } else {
        None
    };
    Ok((outcome, detail))
}
