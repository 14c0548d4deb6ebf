use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{GrwError, Result};
use crate::wavefunction::{BranchState, GridWaveFunction};

/// Collapses with `|L_{k,X} psi|` at or below this are rejected as
/// zero-probability rather than renormalized from rounding noise.
pub const UNDERFLOW_FLOOR: f64 = 1e-150;

/// Kernel offsets beyond this many `sigma` contribute exactly zero in f64.
const KERNEL_CUTOFF_SIGMAS: f64 = 40.0;

/// Waiting time to the next collapse of an N-particle system.
pub fn sample_waiting_time<R: Rng + ?Sized>(num_particles: usize, lambda_eff: f64, rng: &mut R) -> f64 {
    assert!(num_particles >= 1, "need at least one particle");
    Exp::new(num_particles as f64 * lambda_eff)
        .expect("rate must be positive")
        .sample(rng)
}

/// Density of the collapse center for particle `k`, tabulated on the axis
/// grid: the marginal of `|psi|^2` convolved with `N(0, sigma^2 / 2)`.
pub fn collapse_center_density(psi: &GridWaveFunction, k: usize, sigma: f64) -> Result<Vec<f64>> {
    let rho = psi.marginal_density(k)?;
    let dx = psi.spec().spacing();
    let reach = ((KERNEL_CUTOFF_SIGMAS * sigma / dx).ceil() as usize).min(rho.len() - 1);
    let norm = (std::f64::consts::PI * sigma * sigma).sqrt().recip();
    let kernel: Vec<f64> = (0..=reach)
        .map(|d| {
            let u = d as f64 * dx;
            norm * (-(u * u) / (sigma * sigma)).exp() * dx
        })
        .collect();

    let n = rho.len();
    let mut p = vec![0.0; n];
    for (i, &r) in rho.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(n - 1);
        for (j, pj) in p.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *pj += r * kernel[i.abs_diff(j)];
        }
    }
    Ok(p)
}

/// `|L_{k,X} psi|^2`, computed from the marginal without touching `psi`.
fn collapse_weight(psi: &GridWaveFunction, k: usize, center: f64, sigma: f64) -> Result<f64> {
    let rho = psi.marginal_density(k)?;
    let spec = psi.spec();
    let dx = spec.spacing();
    let norm = (std::f64::consts::PI * sigma * sigma).sqrt().recip();
    Ok(rho
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let u = spec.position(j) - center;
            r * norm * (-(u * u) / (sigma * sigma)).exp()
        })
        .sum::<f64>()
        * dx)
}

/// `psi <- L_{k,X} psi / |L_{k,X} psi|` in place. On error `psi` is left
/// untouched.
pub fn collapse_grid_in_place(psi: &mut GridWaveFunction, k: usize, center: f64, sigma: f64) -> Result<()> {
    let weight = collapse_weight(psi, k, center, sigma)?;
    let norm = weight.sqrt();
    if !(norm.is_finite() && norm > UNDERFLOW_FLOOR) {
        return Err(GrwError::ZeroProbabilityCollapse { norm, center });
    }
    let spec = psi.spec().clone();
    let prefactor = (std::f64::consts::PI * sigma * sigma).powf(-0.25) / norm;
    let factors: Vec<f64> = spec
        .axis()
        .iter()
        .map(|x| prefactor * (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    for (flat, a) in psi.amplitudes_mut().iter_mut().enumerate() {
        *a *= Complex64::new(factors[spec.axis_index(flat, k)], 0.0);
    }
    Ok(())
}

pub fn apply_collapse_grid(psi: &GridWaveFunction, k: usize, center: f64, sigma: f64) -> Result<GridWaveFunction> {
    let mut out = psi.clone();
    collapse_grid_in_place(&mut out, k, center, sigma)?;
    Ok(out)
}

pub(crate) fn branch_collapse_in_place(state: &mut BranchState, k: usize, center: f64, sigma: f64) -> Result<()> {
    if k >= state.num_particles() {
        return Err(GrwError::ParticleOutOfRange {
            index: k,
            count: state.num_particles(),
        });
    }
    if !center.is_finite() {
        return Err(GrwError::PosteriorUnderflow { center });
    }
    // w_i' ∝ w_i exp(-(a_ik - X)^2 / sigma^2), in log space.
    let delta: Vec<f64> = state
        .branches()
        .iter()
        .map(|b| -(b.anchors[k] - center).powi(2) / (sigma * sigma))
        .collect();
    state
        .reweight_log(&delta)
        .map_err(|_| GrwError::PosteriorUnderflow { center })
}

/// Closed-form collapse of a point-anchor branch state.
pub fn branch_collapse_update(state: &BranchState, k: usize, center: f64, sigma: f64) -> Result<BranchState> {
    if state.separation() < 10.0 * sigma {
        log::warn!(
            "branch separation {} is below 10 sigma; point-anchor update is approximate",
            state.separation()
        );
    }
    let mut out = state.clone();
    branch_collapse_in_place(&mut out, k, center, sigma)?;
    Ok(out)
}

/// Draws a center from `sum_i w_i N(a_ik, sigma^2 / 2)`.
pub fn sample_collapse_center_branch<R: Rng + ?Sized>(
    state: &BranchState,
    k: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    if k >= state.num_particles() {
        return Err(GrwError::ParticleOutOfRange {
            index: k,
            count: state.num_particles(),
        });
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = state.leading_branch();
    for (i, w) in state.weights().into_iter().enumerate() {
        acc += w;
        if u < acc {
            chosen = i;
            break;
        }
    }
    let anchor = state.branches()[chosen].anchors[k];
    let normal = Normal::new(anchor, sigma / std::f64::consts::SQRT_2).expect("sigma must be positive");
    Ok(normal.sample(rng))
}

/// Draws a center by inverse CDF over the tabulated center density.
pub fn sample_collapse_center_grid<R: Rng + ?Sized>(
    psi: &GridWaveFunction,
    k: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    let p = collapse_center_density(psi, k, sigma)?;
    let spec = psi.spec();
    let table = TabulatedDensity::new(spec.x_min, spec.spacing(), p)?;
    Ok(table.sample(rng))
}

/// Piecewise-constant density on cells of width `dx` centered at
/// `x0 + j dx`, with an exact inverse CDF.
#[derive(Debug, Clone)]
pub struct TabulatedDensity {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GrwError::InvalidParams("tabulated density must be finite and nonnegative".into()));
        }
        let mut cumulative = Vec::with_capacity(values.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for v in &values {
            acc += v * dx;
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(GrwError::ZeroMass);
        }
        Ok(Self {
            x0,
            dx,
            values,
            cumulative,
        })
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Unnormalized mass to the left of `x`.
    pub fn cumulative_mass(&self, x: f64) -> f64 {
        let s = (x - (self.x0 - 0.5 * self.dx)) / self.dx;
        if s <= 0.0 {
            return 0.0;
        }
        let n = self.values.len();
        if s >= n as f64 {
            return self.total();
        }
        let j = s.floor() as usize;
        self.cumulative[j] + (s - j as f64) * self.values[j] * self.dx
    }

    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.cumulative_mass(b) - self.cumulative_mass(a)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = self.values.len();
        let u = rng.random::<f64>() * self.total();
        let j = self.cumulative[1..].partition_point(|&c| c <= u).min(n - 1);
        let width = self.values[j] * self.dx;
        let frac = if width > 0.0 {
            ((u - self.cumulative[j]) / width).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.x0 + (j as f64 - 0.5 + frac) * self.dx
    }
}
