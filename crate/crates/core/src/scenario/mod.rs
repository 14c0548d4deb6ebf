//! Cat, tail and marble scenarios: configuration, initial states, and the
//! per-ontology verdict on where each system is.

mod build;
mod classify;
mod config;
mod run;

pub use build::{build_scenario, sample_times, RunPlan, Scenario, SystemState};
pub use classify::{
    classify_grw0, classify_grwf, classify_grwm, detect_resurrection, marble_census, threshold_verdict,
    verdict_transitions, Census, Classification, Classifier, SystemRef, Transition, Verdict,
};
pub use config::{ontology_name, parse_ontology, Backend, History, Ontology, ScenarioConfig, ScenarioKind};
pub use run::{
    run_built, run_scenario, run_scenario_detailed, ScenarioDetail, ScenarioOutcome, SystemOutcome, Systems,
};
