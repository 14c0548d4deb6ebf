//! Primitive ontology extracted from trajectories: flashes (one per
//! collapse), the mass-weighted matter density, and the weight-only view
//! which deliberately reports nothing spatial.

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRecord;
use crate::error::{GrwError, Result};
use crate::wavefunction::{branch_weights, BranchState, GridWaveFunction, Region};

/// A space-time point marking one collapse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flash {
    pub time: f64,
    pub position: f64,
    pub particle: usize,
}

/// One flash per collapse event, in event order.
pub fn flashes_of<S>(record: &TrajectoryRecord<S>) -> Vec<Flash> {
    record
        .events
        .iter()
        .map(|e| Flash {
            time: e.time,
            position: e.center,
            particle: e.particle,
        })
        .collect()
}

/// Uniform 1-D grid including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max && points >= 2) {
            return Err(GrwError::InvalidGrid(format!(
                "spatial grid [{x_min}, {x_max}] with {points} points"
            )));
        }
        Ok(Self { x_min, x_max, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points - 1) as f64
    }

    pub fn position(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.spacing()
    }

    /// Nearest grid index, or `None` beyond half a cell outside the grid.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        let s = ((x - self.x_min) / self.spacing()).round();
        if s >= 0.0 && s <= (self.points - 1) as f64 {
            Some(s as usize)
        } else {
            None
        }
    }
}

/// Mass per unit length `m(x)` at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatterDensityField {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
    pub time: f64,
    pub masses: Vec<f64>,
}

impl MatterDensityField {
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.spacing()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid.points).map(|j| self.grid.position(j))
    }

    fn check(self) -> Result<Self> {
        let expected: f64 = self.masses.iter().sum();
        let total = self.total_mass();
        if self.values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(GrwError::InvalidParams("matter density went negative".into()));
        }
        if total < (1.0 - 1e-6) * expected {
            return Err(GrwError::InsufficientCoverage {
                covered: total / expected,
            });
        }
        if (total - expected).abs() > 1e-9 * expected.max(1.0) {
            return Err(GrwError::InvalidParams(format!(
                "matter density integrates to {total}, expected {expected}"
            )));
        }
        Ok(self)
    }
}

/// Equal masses summing to one.
pub fn uniform_masses(num_particles: usize) -> Vec<f64> {
    vec![1.0 / num_particles as f64; num_particles]
}

fn check_masses(masses: &[f64], n: usize) -> Result<()> {
    if masses.len() != n {
        return Err(GrwError::InvalidParams(format!(
            "{} masses for {n} particles",
            masses.len()
        )));
    }
    if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(GrwError::InvalidParams("masses must be positive".into()));
    }
    Ok(())
}

/// `m(x) = sum_k m_k rho_k(x)` from the true one-particle marginals, on the
/// wave function's own axis grid.
pub fn matter_density_grid(psi: &GridWaveFunction, masses: &[f64], time: f64) -> Result<MatterDensityField> {
    let spec = psi.spec();
    check_masses(masses, spec.num_particles)?;
    let grid = SpatialGrid::new(spec.x_min, spec.x_max, spec.points_per_axis)?;
    let mut values = vec![0.0; grid.points];
    for (k, m) in masses.iter().enumerate() {
        for (v, r) in values.iter_mut().zip(psi.marginal_density(k)?) {
            *v += m * r;
        }
    }
    MatterDensityField {
        grid,
        values,
        time,
        masses: masses.to_vec(),
    }
    .check()
}

/// Matter density of a point-anchor branch state: each anchor becomes a
/// single-cell spike carrying `w_i m_k`.
pub fn matter_density_branch(
    state: &BranchState,
    masses: &[f64],
    grid: SpatialGrid,
    time: f64,
) -> Result<MatterDensityField> {
    check_masses(masses, state.num_particles())?;
    let dx = grid.spacing();
    let mut values = vec![0.0; grid.points];
    for (b, w) in state.branches().iter().zip(state.weights()) {
        for (a, m) in b.anchors.iter().zip(masses) {
            if let Some(j) = grid.nearest(*a) {
                values[j] += w * m / dx;
            }
        }
    }
    MatterDensityField {
        grid,
        values,
        time,
        masses: masses.to_vec(),
    }
    .check()
}

/// Share of the total matter lying in `region`.
pub fn mass_fraction_in_region(m: &MatterDensityField, region: &Region) -> Result<f64> {
    let total: f64 = m.values.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(GrwError::ZeroMass);
    }
    let inside: f64 = m
        .values
        .iter()
        .zip(m.positions())
        .filter(|(_, x)| region.contains(*x))
        .map(|(v, _)| v)
        .sum();
    Ok((inside / total).clamp(0.0, 1.0))
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if start.is_nan() || end.is_nan() || start >= end {
            return Err(GrwError::InvalidParams(format!("empty time window [{start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlashFraction {
    /// `None` when no flash falls in the window.
    pub fraction: Option<f64>,
    pub count: usize,
    pub inside: usize,
}

/// Fraction of the flashes in `window` (optionally of one particle only)
/// located in `region`.
pub fn flash_fraction_in_region(
    flashes: &[Flash],
    region: &Region,
    window: TimeWindow,
    particle: Option<usize>,
) -> FlashFraction {
    let mut count = 0;
    let mut inside = 0;
    for f in flashes
        .iter()
        .filter(|f| window.contains(f.time) && particle.is_none_or(|p| p == f.particle))
    {
        count += 1;
        if region.contains(f.position) {
            inside += 1;
        }
    }
    FlashFraction {
        fraction: (count > 0).then(|| inside as f64 / count as f64),
        count,
        inside,
    }
}

/// The wave-function-only view: labels and weights, never positions.
pub fn grw0_view(state: &BranchState) -> Vec<(String, f64)> {
    branch_weights(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_trajectory, GrwParams, Hamiltonian, RngStream};
    use crate::wavefunction::{make_grid_wavefunction, GridSpec, Packet};
    use proptest::prelude::*;

    fn marble(c1_sq: f64) -> BranchState {
        BranchState::two_branch(c1_sq, 0.0, 10.0, 1).unwrap()
    }

    #[test]
    fn no_events_no_flashes() {
        let s = marble(0.5);
        // A tiny horizon makes an empty log overwhelmingly likely; pick a
        // stream that has one.
        let p = GrwParams::new(1.0, 1.0, 1e-9, Hamiltonian::Zero).unwrap();
        let r = run_trajectory(s, &p, RngStream::new(0, 0), &[]).unwrap();
        assert!(r.events.is_empty());
        assert!(flashes_of(&r).is_empty());
    }

    #[test]
    fn flashes_mirror_events() {
        let p = GrwParams::new(1.0, 1.0, 50.0, Hamiltonian::Zero).unwrap();
        let r = run_trajectory(marble(0.7), &p, RngStream::new(4, 4), &[]).unwrap();
        let f = flashes_of(&r);
        assert_eq!(f.len(), r.events.len());
        for (fl, e) in f.iter().zip(&r.events) {
            assert_eq!((fl.time, fl.position, fl.particle), (e.time, e.center, e.particle));
        }
    }

    #[test]
    fn flash_count_concentrates() {
        // Oracle: P(|Poisson(100) - 100| <= 40) is 1 - 1e-4 or so; demand 95%.
        let p = GrwParams::new(1.0, 1.0, 100.0, Hamiltonian::Zero).unwrap();
        let seeds = 200;
        let ok = (0..seeds)
            .filter(|&i| {
                let r = run_trajectory(marble(0.9), &p, RngStream::new(21, i), &[]).unwrap();
                (flashes_of(&r).len() as f64 - 100.0).abs() <= 40.0
            })
            .count();
        assert!(ok as f64 >= 0.95 * seeds as f64);
    }

    #[test]
    fn single_particle_density_is_modulus_squared() {
        let spec = GridSpec::new(-6.0, 6.0, 241, 1).unwrap();
        let psi = make_grid_wavefunction(spec, &[Packet::real(vec![0.5], 0.7, 1.0)]).unwrap();
        let m = matter_density_grid(&psi, &[1.0], 0.0).unwrap();
        for (v, a) in m.values.iter().zip(psi.amplitudes()) {
            assert!((v - a.norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn product_state_masses_add() {
        let spec = GridSpec::new(-8.0, 8.0, 161, 2).unwrap();
        let psi = make_grid_wavefunction(spec, &[Packet::real(vec![-2.0, 3.0], 0.6, 1.0)]).unwrap();
        let m = matter_density_grid(&psi, &[1.0, 2.0], 0.0).unwrap();
        assert!((m.total_mass() - 3.0).abs() < 1e-9);
        assert!(matter_density_grid(&psi, &[1.0], 0.0).is_err());
        assert!(matter_density_grid(&psi, &[1.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn branch_density_rasterizes_weights() {
        let grid = SpatialGrid::new(-5.0, 15.0, 201, ).unwrap();
        let m = matter_density_branch(&marble(0.9), &[1.0], grid, 0.0).unwrap();
        let dx = grid.spacing();
        // Oracle: sum the cells within one sigma of each anchor.
        let near = |a: f64| -> f64 {
            m.values.iter().zip(m.positions()).filter(|(_, x)| (x - a).abs() <= 1.0).map(|(v, _)| v * dx).sum()
        };
        assert!((near(0.0) - 0.9).abs() < 1e-9);
        assert!((near(10.0) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn uncovered_branch_is_rejected() {
        let grid = SpatialGrid::new(-5.0, 5.0, 101).unwrap();
        assert!(matches!(
            matter_density_branch(&marble(0.9), &[1.0], grid, 0.0),
            Err(GrwError::InsufficientCoverage { .. })
        ));
    }

    #[test]
    fn mass_fractions() {
        let grid = SpatialGrid::new(-5.0, 15.0, 201).unwrap();
        let m = matter_density_branch(&marble(0.9), &[1.0], grid, 0.0).unwrap();
        let all = Region::new(-5.0, 15.0).unwrap();
        assert_eq!(mass_fraction_in_region(&m, &all).unwrap(), 1.0);
        let boxed = Region::new(-5.0, 5.0).unwrap();
        assert!((mass_fraction_in_region(&m, &boxed).unwrap() - 0.9).abs() < 1e-9);
        let nothing = Region::new(20.0, 21.0).unwrap();
        assert_eq!(mass_fraction_in_region(&m, &nothing).unwrap(), 0.0);
        let zero = MatterDensityField { values: vec![0.0; 201], ..m };
        assert!(matches!(mass_fraction_in_region(&zero, &all), Err(GrwError::ZeroMass)));
    }

    #[test]
    fn grid_tail_fraction_matches_weight() {
        let spec = GridSpec::new(-5.0, 15.0, 2001, 1).unwrap();
        let psi = make_grid_wavefunction(
            spec,
            &[Packet::real(vec![0.0], 0.3, 0.9f64.sqrt()), Packet::real(vec![10.0], 0.3, 0.1f64.sqrt())],
        )
        .unwrap();
        let m = matter_density_grid(&psi, &[1.0], 0.0).unwrap();
        let boxed = Region::new(-5.0, 5.0).unwrap();
        let outside = 1.0 - mass_fraction_in_region(&m, &boxed).unwrap();
        assert!((outside - 0.1).abs() < 1e-6);
    }

    fn flash(time: f64, position: f64) -> Flash {
        Flash { time, position, particle: 0 }
    }

    #[test]
    fn flash_fraction_counts() {
        let boxed = Region::new(-5.0, 5.0).unwrap();
        let w = TimeWindow::new(0.0, 10.0).unwrap();
        let all_in = [flash(1.0, 0.0), flash(2.0, 1.0)];
        assert_eq!(flash_fraction_in_region(&all_in, &boxed, w, None).fraction, Some(1.0));
        let mixed = [flash(1.0, 0.0), flash(2.0, 1.0), flash(3.0, -1.0), flash(4.0, 10.0)];
        let f = flash_fraction_in_region(&mixed, &boxed, w, None);
        assert_eq!((f.fraction, f.count), (Some(0.75), 4));
        let empty = flash_fraction_in_region(&mixed, &boxed, TimeWindow::new(20.0, 30.0).unwrap(), None);
        assert_eq!((empty.fraction, empty.count), (None, 0));
        let other = flash_fraction_in_region(&mixed, &boxed, w, Some(1));
        assert_eq!(other.count, 0);
        assert!(TimeWindow::new(1.0, 1.0).is_err());
    }

    #[test]
    fn grw0_view_reports_weights_only() {
        let v = grw0_view(&marble(0.9));
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].0, "inside");
        assert!((v[0].1 - 0.9).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn enlarging_window_never_loses_flashes(times in prop::collection::vec(0.0f64..100.0, 0..60),
                                                a in 0.0f64..50.0, len in 0.1f64..50.0, grow in 0.0f64..50.0) {
            let fl: Vec<Flash> = times.iter().map(|t| flash(*t, 0.0)).collect();
            let boxed = Region::new(-1.0, 1.0).unwrap();
            let small = flash_fraction_in_region(&fl, &boxed, TimeWindow::new(a, a + len).unwrap(), None);
            let big = flash_fraction_in_region(&fl, &boxed, TimeWindow::new(a - grow, a + len + grow).unwrap(), None);
            prop_assert!(big.count >= small.count);
        }
    }
}
