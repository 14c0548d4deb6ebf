use grwsim_core::dynamics::RngStream;
use grwsim_core::ensemble::{simulate_ensemble, Thresholds};
use grwsim_core::scenario::{
    run_scenario, Backend, History, Ontology, ScenarioConfig, ScenarioKind, Verdict,
};
use grwsim_core::Hamiltonian;

fn marbles(n: usize, ontology: Ontology) -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::Marbles,
        n_marbles: n,
        c1_sq: 0.9,
        ontology,
        ..Default::default()
    }
}

#[test]
fn grwm_marbles_start_inside_deterministically() {
    for seed in 0..20 {
        let o = run_scenario(&marbles(5, Ontology::Grwm), RngStream::new(seed, 0)).unwrap();
        assert!(o.systems.iter().all(|s| s.initial.verdict == Verdict::Inside));
        assert!(o.systems.iter().all(|s| s.initial.evidence == Some(0.9)));
    }
}

#[test]
fn grw0_never_reaches_a_definite_verdict() {
    let o = run_scenario(&marbles(5, Ontology::Grw0), RngStream::new(1, 0)).unwrap();
    assert!(o.systems.iter().all(|s| s.verdicts.iter().all(|v| *v == Verdict::Partial)));
}

#[test]
fn grwf_fresh_preparation_is_undefined_then_only_probably_inside() {
    let c = ScenarioConfig {
        kind: ScenarioKind::Tail,
        c1_sq: 0.9,
        ontology: Ontology::Grwf,
        history: History::FreshPreparation,
        total_time: Some(100.0),
        ..Default::default()
    };
    let ens = simulate_ensemble(&c, 2000, 3).unwrap();
    let systems: Vec<_> = ens.outcomes.iter().flat_map(|o| &o.systems).collect();
    assert!(systems.iter().all(|s| s.initial.verdict == Verdict::Undefined));
    let inside = systems
        .iter()
        .filter(|s| s.forward_window.unwrap().verdict == Verdict::Inside)
        .count();
    let freq = inside as f64 / systems.len() as f64;
    assert!(freq < 1.0);
    assert!((freq - 0.9).abs() < 4.0 * (0.09f64 / 2000.0).sqrt(), "{freq}");
}

#[test]
fn collapsed_past_gives_grwf_an_initial_inside_verdict() {
    let c = ScenarioConfig {
        kind: ScenarioKind::Tail,
        c1_sq: 0.99,
        ontology: Ontology::Grwf,
        history: History::CollapsedPast,
        ..Default::default()
    };
    for seed in 0..20 {
        let o = run_scenario(&c, RngStream::new(seed, 0)).unwrap();
        assert_eq!(o.systems[0].initial.verdict, Verdict::Inside);
    }
}

#[test]
fn hundred_marble_census_is_binomial() {
    let c = marbles(100, Ontology::Grwm);
    let runs = 200;
    let ens = simulate_ensemble(&c, runs, 9).unwrap();
    let counts: Vec<f64> = ens
        .outcomes
        .iter()
        .map(|o| o.systems.iter().filter(|s| s.last.verdict == Verdict::Inside).count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / runs as f64;
    // Binomial(100, 0.9): sd 3 per run.
    assert!((mean - 90.0).abs() < 4.0 * 3.0 / (runs as f64).sqrt(), "{mean}");
}

#[test]
fn grid_backend_selects_branches_with_born_weights() {
    let c = ScenarioConfig {
        c1_sq: 0.7,
        backend: Backend::Grid {
            points: 601,
            x_min: -10.0,
            x_max: 20.0,
            packet_width: 0.2,
        },
        total_time: Some(10.0),
        ..Default::default()
    };
    let runs = 400;
    let ens = simulate_ensemble(&c, runs, 12).unwrap();
    let wins = ens.outcomes.iter().filter(|o| o.systems[0].leading == 0).count();
    let se = (0.21f64 / runs as f64).sqrt();
    assert!((wins as f64 / runs as f64 - 0.7).abs() < 4.0 * se);
    let r = grwsim_core::ensemble::martingale_test(&ens, 10.0, &Thresholds::default()).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn free_evolution_runs_on_the_grid() {
    let c = ScenarioConfig {
        c1_sq: 0.5,
        hamiltonian: Hamiltonian::FreeParticle { mass: 1.0 },
        backend: Backend::Grid {
            points: 1024,
            x_min: -30.0,
            x_max: 40.0,
            packet_width: 0.5,
        },
        total_time: Some(5.0),
        ..Default::default()
    };
    let o = run_scenario(&c, RngStream::new(5, 0)).unwrap();
    assert_eq!(o.systems[0].inside_weights.len(), 6);
    assert!(o.systems[0].inside_weights.iter().all(|w| (0.0..=1.0 + 1e-12).contains(w)));
}

#[test]
fn config_text_drives_a_run() {
    let text = "kind = tail\nc1_sq = 0.95\nontology = grwm\ntotal_time = 20\n";
    let c = ScenarioConfig::parse(text).unwrap();
    let a = run_scenario(&c, RngStream::new(8, 3)).unwrap();
    let b = run_scenario(&ScenarioConfig::parse(&c.to_config_text()).unwrap(), RngStream::new(8, 3)).unwrap();
    assert_eq!(a, b);
}
