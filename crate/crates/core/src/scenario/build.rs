use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::config::{Backend, History, ScenarioConfig, ScenarioKind};
use crate::dynamics::GrwParams;
use crate::error::{GrwError, Result};
use crate::ontology::Flash;
use crate::wavefunction::{make_grid_wavefunction, BranchState, GridSpec, GridWaveFunction, Packet, ProductState};

/// Initial state of a scenario in whichever model the backend selects.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemState {
    Branch(BranchState),
    Grid(GridWaveFunction),
    Marbles(ProductState),
}

/// When and for how long a scenario is run and looked at.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub params: GrwParams,
    /// Classifier sampling times, from 0 up to and including the horizon.
    pub sample_times: Vec<f64>,
    /// GRWf window length.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub initial: SystemState,
    /// Flashes before `t = 0`, present only with a collapsed past.
    pub past_flashes: Vec<Flash>,
    pub plan: RunPlan,
}

fn branch_labels(kind: ScenarioKind) -> (&'static str, &'static str) {
    match kind {
        ScenarioKind::Cat => ("dead", "alive"),
        _ => ("inside", "outside"),
    }
}

fn two_branch(c: &ScenarioConfig) -> Result<BranchState> {
    let (a, b) = branch_labels(c.kind);
    BranchState::new(vec![
        (a, c.c1_sq, vec![c.inside_anchor; c.particles]),
        (b, 1.0 - c.c1_sq, vec![c.outside_anchor; c.particles]),
    ])
}

/// Sampling times `0, dt, 2 dt, ...` with the horizon always last.
pub fn sample_times(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = (horizon / dt).floor() as usize;
    let mut out: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).filter(|t| *t <= horizon).collect();
    if out.last().is_none_or(|&t| horizon - t > 1e-12 * horizon.max(1.0)) {
        out.push(horizon);
    } else if let Some(last) = out.last_mut() {
        *last = horizon;
    }
    out
}

/// Flashes the in-box branch would have left over `[-window, 0)`, one
/// Poisson stream per particle, positions drawn around the in-box anchor
/// and kept inside the box.
fn past_flashes<R: Rng + ?Sized>(c: &ScenarioConfig, window: f64, rng: &mut R) -> Result<Vec<Flash>> {
    let gap = Exp::new(c.lambda_eff).map_err(|e| GrwError::InvalidParams(e.to_string()))?;
    let spread = Normal::new(c.inside_anchor, c.sigma / std::f64::consts::SQRT_2)
        .map_err(|e| GrwError::InvalidParams(e.to_string()))?;
    if !c.box_region.contains(c.inside_anchor) {
        return Err(GrwError::InvalidScenario("collapsed past needs the inside anchor in the box".into()));
    }
    let mut out = Vec::new();
    for particle in 0..c.total_particles() {
        let mut t = -window;
        loop {
            t += gap.sample(rng);
            if t >= 0.0 {
                break;
            }
            let position = loop {
                let x = spread.sample(rng);
                if c.box_region.contains(x) {
                    break x;
                }
            };
            out.push(Flash { time: t, position, particle });
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.particle.cmp(&b.particle)));
    Ok(out)
}

/// Builds the initial state, any past flashes, and the run plan. `rng` is
/// consumed only for a collapsed past.
pub fn build_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Scenario> {
    config.validate()?;
    let c = config;
    let initial = match (c.kind, c.backend) {
        (ScenarioKind::Marbles, Backend::Branch) if c.n_marbles > 1 => {
            let factors = (0..c.n_marbles).map(|_| two_branch(c)).collect::<Result<Vec<_>>>()?;
            SystemState::Marbles(ProductState::new(factors)?)
        }
        (_, Backend::Branch) => SystemState::Branch(two_branch(c)?),
        (
            _,
            Backend::Grid {
                points,
                x_min,
                x_max,
                packet_width,
            },
        ) => {
            let spec = GridSpec::new(x_min, x_max, points, c.particles)?;
            let packets = [
                Packet::real(vec![c.inside_anchor; c.particles], packet_width, c.c1_sq.sqrt()),
                Packet::real(vec![c.outside_anchor; c.particles], packet_width, (1.0 - c.c1_sq).sqrt()),
            ];
            SystemState::Grid(make_grid_wavefunction(spec, &packets)?)
        }
    };
    let window = c.window_length();
    let past_flashes = match c.history {
        History::CollapsedPast => past_flashes(c, window, rng)?,
        History::FreshPreparation => Vec::new(),
    };
    let params = c.grw_params()?;
    let plan = RunPlan {
        sample_times: sample_times(params.total_time, c.sampling_interval()),
        params,
        window,
    };
    Ok(Scenario {
        config: c.clone(),
        initial,
        past_flashes,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::RngStream;
    use crate::wavefunction::Region;

    #[test]
    fn sample_times_end_at_horizon() {
        let t = sample_times(50.0, 1.0);
        assert_eq!(t.len(), 51);
        assert_eq!(t[0], 0.0);
        assert_eq!(*t.last().unwrap(), 50.0);
        let t = sample_times(2.5, 1.0);
        assert_eq!(t, vec![0.0, 1.0, 2.0, 2.5]);
        let t = sample_times(0.3, 0.1);
        assert_eq!(t.len(), 4);
        assert_eq!(*t.last().unwrap(), 0.3);
    }

    #[test]
    fn cat_uses_dead_alive_labels() {
        let s = build_scenario(&ScenarioConfig::default(), &mut RngStream::new(1, 0).rng()).unwrap();
        let SystemState::Branch(b) = &s.initial else { panic!("expected branch state") };
        assert_eq!(b.branches()[0].label, "dead");
        assert!((b.weight(0) - 0.5).abs() < 1e-15);
        assert!(s.past_flashes.is_empty());
        assert_eq!(s.plan.sample_times.len(), 51);
    }

    #[test]
    fn marbles_build_a_product_state() {
        let c = ScenarioConfig {
            kind: ScenarioKind::Marbles,
            n_marbles: 5,
            c1_sq: 0.9,
            ..Default::default()
        };
        let s = build_scenario(&c, &mut RngStream::new(1, 0).rng()).unwrap();
        let SystemState::Marbles(p) = &s.initial else { panic!("expected product state") };
        assert_eq!(p.factors().len(), 5);
        assert!(p.factors().iter().all(|f| (f.weight(0) - 0.9).abs() < 1e-15));
    }

    #[test]
    fn grid_backend_normalizes_the_packets() {
        let c = ScenarioConfig {
            backend: Backend::Grid {
                points: 2001,
                x_min: -10.0,
                x_max: 20.0,
                packet_width: 0.1,
            },
            c1_sq: 0.9,
            ..Default::default()
        };
        let s = build_scenario(&c, &mut RngStream::new(1, 0).rng()).unwrap();
        let SystemState::Grid(psi) = &s.initial else { panic!("expected grid state") };
        assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
        let inside = psi.mass_in_region(0, &Region::new(-5.0, 5.0).unwrap()).unwrap();
        assert!((inside - 0.9).abs() < 1e-9);
    }

    #[test]
    fn collapsed_past_has_poisson_flashes_in_the_box() {
        let c = ScenarioConfig {
            kind: ScenarioKind::Tail,
            c1_sq: 0.99,
            history: History::CollapsedPast,
            ..Default::default()
        };
        let mut rng = RngStream::new(7, 0).rng();
        let runs = 2000;
        let mut total = 0usize;
        for _ in 0..runs {
            let s = build_scenario(&c, &mut rng).unwrap();
            assert!(s.past_flashes.iter().all(|f| (-100.0..0.0).contains(&f.time)));
            assert!(s.past_flashes.iter().all(|f| c.box_region.contains(f.position)));
            assert!(s.past_flashes.windows(2).all(|w| w[0].time <= w[1].time));
            total += s.past_flashes.len();
        }
        let mean = total as f64 / runs as f64;
        // Poisson(100): standard error of the mean is sqrt(100 / runs).
        assert!((mean - 100.0).abs() < 4.0 * (100.0f64 / runs as f64).sqrt(), "mean {mean}");
    }
}
