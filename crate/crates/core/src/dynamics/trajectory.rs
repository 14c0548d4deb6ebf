use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_waiting_time, CollapseState, GrwParams, RngStream};
use crate::error::{GrwError, Result};

/// One collapse: time, particle, center and the state summary around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    #[serde(rename = "t")]
    pub time: f64,
    pub particle: usize,
    pub center: f64,
    pub pre_weights: Vec<f64>,
    pub post_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<S> {
    pub time: f64,
    pub state: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<S> {
    pub total_time: f64,
    pub num_particles: usize,
    pub events: Vec<CollapseEvent>,
    pub snapshots: Vec<Snapshot<S>>,
    pub final_state: S,
}

impl<S> TrajectoryRecord<S> {
    /// State at a recorded snapshot time.
    pub fn snapshot_at(&self, time: f64) -> Result<&S> {
        self.snapshots
            .iter()
            .find(|s| s.time == time)
            .map(|s| &s.state)
            .ok_or(GrwError::MissingSnapshot(time))
    }
}

/// Runs one trajectory on its own random stream.
pub fn run_trajectory<S: CollapseState>(
    initial: S,
    params: &GrwParams,
    stream: RngStream,
    snapshot_times: &[f64],
) -> Result<TrajectoryRecord<S>> {
    let mut rng = stream.rng();
    run_trajectory_with(initial, params, &mut rng, snapshot_times, stream.stream)
}

/// Runs one trajectory drawing from `rng`. Per event the draws are, in
/// order: waiting time, particle, center. `trajectory` only labels errors.
pub fn run_trajectory_with<S: CollapseState, R: Rng + ?Sized>(
    initial: S,
    params: &GrwParams,
    rng: &mut R,
    snapshot_times: &[f64],
    trajectory: u64,
) -> Result<TrajectoryRecord<S>> {
    params.validate()?;
    let horizon = params.total_time;
    if snapshot_times.windows(2).any(|w| w[0] > w[1])
        || snapshot_times.iter().any(|t| !(0.0..=horizon).contains(t))
    {
        return Err(GrwError::InvalidParams(format!(
            "snapshot times must be sorted within [0, {horizon}]"
        )));
    }
    if !initial.supports(&params.hamiltonian) {
        return Err(GrwError::InvalidParams(format!(
            "{:?} is not available for this state model",
            params.hamiltonian
        )));
    }
    let n = initial.num_particles();
    let mut state = initial;
    let mut events: Vec<CollapseEvent> = Vec::new();
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    let mut next_snap = 0;
    let mut t = 0.0;

    let abort = |events: &Vec<CollapseEvent>, time: f64, e: GrwError| GrwError::TrajectoryAborted {
        trajectory,
        events: events.len(),
        time,
        source: Box::new(e),
    };

    loop {
        let t_next = t + sample_waiting_time(n, params.lambda_eff, rng);
        let past_horizon = t_next > horizon;
        let limit = if past_horizon { horizon } else { t_next };
        while next_snap < snapshot_times.len()
            && (snapshot_times[next_snap] < limit
                || (past_horizon && snapshot_times[next_snap] <= horizon))
        {
            let ts = snapshot_times[next_snap];
            state
                .evolve(ts - t, &params.hamiltonian)
                .map_err(|e| abort(&events, ts, e))?;
            t = ts;
            snapshots.push(Snapshot {
                time: ts,
                state: state.clone(),
            });
            next_snap += 1;
        }
        state
            .evolve(limit - t, &params.hamiltonian)
            .map_err(|e| abort(&events, limit, e))?;
        t = limit;
        if past_horizon {
            break;
        }

        let k = rng.random_range(0..n);
        let pre_weights = state.summary(k);
        let center = state
            .sample_center(k, params.sigma, rng)
            .map_err(|e| abort(&events, t, e))?;
        state
            .collapse(k, center, params.sigma)
            .map_err(|e| abort(&events, t, e))?;
        events.push(CollapseEvent {
            time: t,
            particle: k,
            center,
            pre_weights,
            post_weights: state.summary(k),
        });
    }

    Ok(TrajectoryRecord {
        total_time: horizon,
        num_particles: n,
        events,
        snapshots,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Hamiltonian;
    use crate::wavefunction::{make_grid_wavefunction, BranchState, GridSpec, Packet};

    fn params(total_time: f64) -> GrwParams {
        GrwParams::new(1.0, 1.0, total_time, Hamiltonian::Zero).unwrap()
    }

    #[test]
    fn event_count_has_poisson_mean() {
        let s = BranchState::new(vec![("only", 1.0, vec![0.0])]).unwrap();
        let n = 4000;
        let total: usize = (0..n)
            .map(|i| run_trajectory(s.clone(), &params(10.0), RngStream::new(5, i), &[]).unwrap().events.len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 10.0).abs() < 4.0 * (10.0 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn same_stream_same_log() {
        let s = BranchState::two_branch(0.7, 0.0, 10.0, 2).unwrap();
        let a = run_trajectory(s.clone(), &params(20.0), RngStream::new(1, 2), &[0.0, 5.0, 20.0]).unwrap();
        let b = run_trajectory(s, &params(20.0), RngStream::new(1, 2), &[0.0, 5.0, 20.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn events_are_ordered_and_in_range() {
        let s = BranchState::two_branch(0.5, 0.0, 10.0, 3).unwrap();
        let r = run_trajectory(s, &params(30.0), RngStream::new(9, 0), &[0.0, 15.0, 30.0]).unwrap();
        assert!(r.events.windows(2).all(|w| w[0].time < w[1].time));
        assert!(r.events.iter().all(|e| e.particle < 3 && e.time <= 30.0));
        assert_eq!(r.snapshots.len(), 3);
        assert!(r.snapshot_at(15.0).is_ok());
        assert!(matches!(r.snapshot_at(1.0), Err(GrwError::MissingSnapshot(_))));
    }

    #[test]
    fn snapshots_track_events() {
        let s = BranchState::two_branch(0.6, 0.0, 10.0, 1).unwrap();
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
        let r = run_trajectory(s, &params(20.0), RngStream::new(2, 0), &times).unwrap();
        for snap in &r.snapshots {
            let last = r.events.iter().rev().find(|e| e.time < snap.time);
            let expected = match last {
                Some(e) => e.post_weights.clone(),
                None => vec![0.6, 0.4],
            };
            let got = snap.state.weights();
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn branch_model_rejects_free_hamiltonian() {
        let s = BranchState::two_branch(0.6, 0.0, 10.0, 1).unwrap();
        let p = GrwParams::new(1.0, 1.0, 1.0, Hamiltonian::FreeParticle { mass: 1.0 }).unwrap();
        assert!(run_trajectory(s, &p, RngStream::new(0, 0), &[]).is_err());
    }

    #[test]
    fn unsorted_snapshots_are_rejected() {
        let s = BranchState::two_branch(0.6, 0.0, 10.0, 1).unwrap();
        assert!(run_trajectory(s.clone(), &params(1.0), RngStream::new(0, 0), &[0.5, 0.2]).is_err());
        assert!(run_trajectory(s, &params(1.0), RngStream::new(0, 0), &[2.0]).is_err());
    }

    #[test]
    fn grid_trajectory_with_free_motion_stays_normalized() {
        let spec = GridSpec::new(-15.0, 25.0, 512, 1).unwrap();
        let psi = make_grid_wavefunction(
            spec,
            &[Packet::real(vec![0.0], 0.3, 0.8f64.sqrt()), Packet::real(vec![10.0], 0.3, 0.2f64.sqrt())],
        )
        .unwrap();
        let p = GrwParams::new(1.0, 1.0, 5.0, Hamiltonian::FreeParticle { mass: 20.0 }).unwrap();
        let r = run_trajectory(psi, &p, RngStream::new(3, 1), &[0.0, 2.5, 5.0]).unwrap();
        for s in &r.snapshots {
            assert!((s.state.norm_squared() - 1.0).abs() < 1e-10);
        }
        assert!((r.final_state.norm_squared() - 1.0).abs() < 1e-10);
        assert!(r.events.iter().all(|e| e.pre_weights.len() == 2));
    }
}
