use num_complex::Complex64;
use rustfft::FftPlanner;

use super::Hamiltonian;
use crate::error::{GrwError, Result};
use crate::wavefunction::GridWaveFunction;

/// Resource guard for spectral propagation.
pub const MAX_PROPAGATION_POINTS: usize = 1 << 22;

/// Propagates `psi` by `exp(-i H dt)`. `H = 0` is the identity; free motion
/// is applied exactly in momentum space along every axis (the grid is
/// treated as periodic).
pub fn evolve_unitary(psi: &GridWaveFunction, dt: f64, hamiltonian: &Hamiltonian) -> Result<GridWaveFunction> {
    let mut out = psi.clone();
    evolve_unitary_in_place(&mut out, dt, hamiltonian)?;
    Ok(out)
}

pub fn evolve_unitary_in_place(psi: &mut GridWaveFunction, dt: f64, hamiltonian: &Hamiltonian) -> Result<()> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(GrwError::InvalidParams(format!("time step must be >= 0, got {dt}")));
    }
    let mass = match *hamiltonian {
        Hamiltonian::Zero => return Ok(()),
        Hamiltonian::FreeParticle { mass } => mass,
    };
    if dt == 0.0 {
        return Ok(());
    }
    let spec = psi.spec().clone();
    let total = spec.total_points();
    if total > MAX_PROPAGATION_POINTS {
        return Err(GrwError::GridTooLarge {
            points: spec.points_per_axis,
            particles: spec.num_particles,
            cap: MAX_PROPAGATION_POINTS,
        });
    }
    let p = spec.points_per_axis;
    let dx = spec.spacing();
    let two_pi_over_l = 2.0 * std::f64::consts::PI / (p as f64 * dx);
    let phases: Vec<Complex64> = (0..p)
        .map(|m| {
            let freq = if m < p.div_ceil(2) { m as f64 } else { m as f64 - p as f64 };
            let kx = freq * two_pi_over_l;
            Complex64::from_polar(1.0, -kx * kx * dt / (2.0 * mass))
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(p);
    let inverse = planner.plan_fft_inverse(p);
    let scale = 1.0 / p as f64;
    let mut line = vec![Complex64::new(0.0, 0.0); p];
    let amps = psi.amplitudes_mut();

    for k in 0..spec.num_particles {
        let stride = spec.stride(k);
        // Every flat index whose k-th coordinate is zero starts one line.
        for start in (0..total).filter(|&i| spec.axis_index(i, k) == 0) {
            for (j, v) in line.iter_mut().enumerate() {
                *v = amps[start + j * stride];
            }
            forward.process(&mut line);
            for (v, ph) in line.iter_mut().zip(&phases) {
                *v *= ph * scale;
            }
            inverse.process(&mut line);
            for (j, v) in line.iter().enumerate() {
                amps[start + j * stride] = *v;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunction::{make_grid_wavefunction, GridSpec, Packet};

    #[test]
    fn zero_hamiltonian_is_identity() {
        let spec = GridSpec::new(-5.0, 5.0, 101, 1).unwrap();
        let psi = make_grid_wavefunction(spec, &[Packet::real(vec![0.3], 0.5, 1.0)]).unwrap();
        assert_eq!(evolve_unitary(&psi, 5.0, &Hamiltonian::Zero).unwrap(), psi);
        assert_eq!(evolve_unitary(&psi, 0.0, &Hamiltonian::FreeParticle { mass: 1.0 }).unwrap(), psi);
        assert!(evolve_unitary(&psi, -1.0, &Hamiltonian::Zero).is_err());
    }

    #[test]
    fn free_gaussian_spreads_by_analytic_law() {
        let spec = GridSpec::new(-40.0, 40.0, 2048, 1).unwrap();
        let s0 = 0.8;
        let mass = 1.5;
        let t = 3.0;
        let psi = make_grid_wavefunction(spec, &[Packet::real(vec![0.0], s0, 1.0)]).unwrap();
        let out = evolve_unitary(&psi, t, &Hamiltonian::FreeParticle { mass }).unwrap();
        assert!((out.norm_squared() - 1.0).abs() < 1e-10);
        let (mean, var) = out.marginal_moments(0).unwrap();
        // Oracle: s(t)^2 = s0^2 + (t / (2 m s0))^2 with hbar = 1.
        let expected = s0 * s0 + (t / (2.0 * mass * s0)).powi(2);
        assert!(mean.abs() < 1e-8);
        assert!((var / expected - 1.0).abs() < 0.01, "{var} vs {expected}");
    }

    #[test]
    fn two_particle_propagation_preserves_norm() {
        let spec = GridSpec::new(-20.0, 20.0, 128, 2).unwrap();
        let psi = make_grid_wavefunction(
            spec,
            &[Packet::real(vec![-3.0, 2.0], 1.0, 1.0), Packet::real(vec![4.0, -1.0], 1.0, 0.5)],
        )
        .unwrap();
        let out = evolve_unitary(&psi, 2.0, &Hamiltonian::FreeParticle { mass: 1.0 }).unwrap();
        assert!((out.norm_squared() - 1.0).abs() < 1e-10);
        let (_, v0) = psi.marginal_moments(1).unwrap();
        let (_, v1) = out.marginal_moments(1).unwrap();
        assert!(v1 > v0);
    }
}
