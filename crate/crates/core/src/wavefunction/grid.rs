use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Region;
use crate::error::{GrwError, Result};

/// Discretization of the N-particle configuration space `[x_min, x_max]^N`.
///
/// Grid points include both endpoints, so the spacing is
/// `(x_max - x_min) / (points_per_axis - 1)`. Amplitudes are stored
/// row-major with particle 0 on the slowest axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub points_per_axis: usize,
    pub num_particles: usize,
}

impl GridSpec {
    /// Configuration grids are exponential in N; larger systems go through
    /// [`super::BranchState`].
    pub const MAX_PARTICLES: usize = 3;
    /// Cap on `points_per_axis^num_particles`.
    pub const MAX_TOTAL_POINTS: usize = 1 << 24;

    pub fn new(x_min: f64, x_max: f64, points_per_axis: usize, num_particles: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(GrwError::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if points_per_axis < 2 {
            return Err(GrwError::InvalidGrid(format!(
                "need at least 2 points per axis, got {points_per_axis}"
            )));
        }
        if num_particles == 0 || num_particles > Self::MAX_PARTICLES {
            return Err(GrwError::InvalidGrid(format!(
                "grid model supports 1..={} particles, got {num_particles}",
                Self::MAX_PARTICLES
            )));
        }
        let too_large = GrwError::GridTooLarge {
            points: points_per_axis,
            particles: num_particles,
            cap: Self::MAX_TOTAL_POINTS,
        };
        match points_per_axis.checked_pow(num_particles as u32) {
            Some(total) if total <= Self::MAX_TOTAL_POINTS => {}
            _ => return Err(too_large),
        }
        Ok(Self {
            x_min,
            x_max,
            points_per_axis,
            num_particles,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points_per_axis - 1) as f64
    }

    pub fn position(&self, index: usize) -> f64 {
        self.x_min + index as f64 * self.spacing()
    }

    /// Grid coordinates of one axis.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.points_per_axis).map(|j| self.position(j)).collect()
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.num_particles as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.num_particles as i32)
    }

    /// Flat-index stride of particle `k`'s axis.
    pub fn stride(&self, k: usize) -> usize {
        self.points_per_axis
            .pow((self.num_particles - 1 - k) as u32)
    }

    pub fn check_particle(&self, k: usize) -> Result<()> {
        if k >= self.num_particles {
            return Err(GrwError::ParticleOutOfRange {
                index: k,
                count: self.num_particles,
            });
        }
        Ok(())
    }

    /// Index of particle `k`'s coordinate within flat index `flat`.
    #[inline]
    pub fn axis_index(&self, flat: usize, k: usize) -> usize {
        (flat / self.stride(k)) % self.points_per_axis
    }
}

/// A product-Gaussian wave packet: one center per particle, a common
/// position spread and a complex coefficient.
///
/// `width` is the standard deviation of `|phi|^2` along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub centers: Vec<f64>,
    pub width: f64,
    pub coefficient: Complex64,
}

impl Packet {
    pub fn new(centers: Vec<f64>, width: f64, coefficient: Complex64) -> Self {
        Self {
            centers,
            width,
            coefficient,
        }
    }

    /// Real-coefficient packet, convenient for superpositions like
    /// `sqrt(0.9) psi_1 + sqrt(0.1) psi_2`.
    pub fn real(centers: Vec<f64>, width: f64, coefficient: f64) -> Self {
        Self::new(centers, width, Complex64::new(coefficient, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWaveFunction {
    spec: GridSpec,
    amplitudes: Vec<Complex64>,
    cell_volume: f64,
}

impl GridWaveFunction {
    /// Wraps raw amplitudes without normalizing.
    pub fn from_amplitudes(spec: GridSpec, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != spec.total_points() {
            return Err(GrwError::InvalidGrid(format!(
                "expected {} amplitudes, got {}",
                spec.total_points(),
                amplitudes.len()
            )));
        }
        let cell_volume = spec.cell_volume();
        Ok(Self {
            spec,
            amplitudes,
            cell_volume,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn num_particles(&self) -> usize {
        self.spec.num_particles
    }

    /// Riemann sum of `|psi|^2` over the configuration grid.
    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.cell_volume
    }

    pub fn scale(&mut self, factor: Complex64) {
        for a in &mut self.amplitudes {
            *a *= factor;
        }
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n2 = self.norm_squared();
        if !(n2.is_finite() && n2 > 0.0) {
            return Err(GrwError::InvalidPacket(format!(
                "cannot normalize state with squared norm {n2}"
            )));
        }
        self.scale(Complex64::new(n2.sqrt().recip(), 0.0));
        Ok(())
    }

    /// One-particle marginal of `|psi|^2` for particle `k`, sampled on the
    /// axis grid. Integrates (by Riemann sum) to `norm_squared`.
    pub fn marginal_density(&self, k: usize) -> Result<Vec<f64>> {
        self.spec.check_particle(k)?;
        let p = self.spec.points_per_axis;
        let mut rho = vec![0.0; p];
        for (flat, a) in self.amplitudes.iter().enumerate() {
            rho[self.spec.axis_index(flat, k)] += a.norm_sqr();
        }
        // Integrate out the other N-1 coordinates.
        let others = self.spec.spacing().powi(self.spec.num_particles as i32 - 1);
        for r in &mut rho {
            *r *= others;
        }
        Ok(rho)
    }

    /// Probability that particle `k` lies in `region`.
    pub fn mass_in_region(&self, k: usize, region: &Region) -> Result<f64> {
        let rho = self.marginal_density(k)?;
        let dx = self.spec.spacing();
        Ok(rho
            .iter()
            .enumerate()
            .filter(|(j, _)| region.contains(self.spec.position(*j)))
            .map(|(_, r)| r * dx)
            .sum())
    }

    /// Mean and variance of particle `k`'s marginal.
    pub fn marginal_moments(&self, k: usize) -> Result<(f64, f64)> {
        let rho = self.marginal_density(k)?;
        let dx = self.spec.spacing();
        let total: f64 = rho.iter().sum::<f64>() * dx;
        let mean = rho
            .iter()
            .enumerate()
            .map(|(j, r)| r * self.spec.position(j))
            .sum::<f64>()
            * dx
            / total;
        let var = rho
            .iter()
            .enumerate()
            .map(|(j, r)| r * (self.spec.position(j) - mean).powi(2))
            .sum::<f64>()
            * dx
            / total;
        Ok((mean, var))
    }
}

/// Builds the normalized superposition `sum_i c_i phi_i` of product-Gaussian
/// packets on the grid.
pub fn make_grid_wavefunction(spec: GridSpec, packets: &[Packet]) -> Result<GridWaveFunction> {
    if packets.is_empty() {
        return Err(GrwError::InvalidPacket("empty packet list".into()));
    }
    let dx = spec.spacing();
    let n = spec.num_particles;
    for (i, pk) in packets.iter().enumerate() {
        if pk.centers.len() != n {
            return Err(GrwError::InvalidPacket(format!(
                "packet {i} has {} centers for {n} particles",
                pk.centers.len()
            )));
        }
        if !(pk.width.is_finite() && pk.width > 0.0) {
            return Err(GrwError::InvalidPacket(format!(
                "packet {i} width must be positive, got {}",
                pk.width
            )));
        }
        if pk.width < 2.0 * dx {
            return Err(GrwError::InvalidPacket(format!(
                "packet {i} width {} is below two grid cells ({})",
                pk.width,
                2.0 * dx
            )));
        }
        if let Some(c) = pk
            .centers
            .iter()
            .find(|c| !(spec.x_min..=spec.x_max).contains(*c))
        {
            return Err(GrwError::InvalidPacket(format!(
                "packet {i} center {c} outside [{}, {}]",
                spec.x_min, spec.x_max
            )));
        }
        if !(pk.coefficient.re.is_finite() && pk.coefficient.im.is_finite()) {
            return Err(GrwError::InvalidPacket(format!("packet {i} has a non-finite coefficient")));
        }
    }
    if packets.iter().all(|pk| pk.coefficient.norm_sqr() == 0.0) {
        return Err(GrwError::InvalidPacket("all coefficients are zero".into()));
    }

    let axis = spec.axis();
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); spec.total_points()];
    for pk in packets {
        let prefactor = (2.0 * std::f64::consts::PI * pk.width * pk.width).powf(-0.25);
        // phi(x) = (2 pi w^2)^(-1/4) exp(-(x - c)^2 / (4 w^2)) per axis
        let factors: Vec<Vec<f64>> = pk
            .centers
            .iter()
            .map(|c| {
                axis.iter()
                    .map(|x| prefactor * (-(x - c).powi(2) / (4.0 * pk.width * pk.width)).exp())
                    .collect()
            })
            .collect();
        for (flat, amp) in amplitudes.iter_mut().enumerate() {
            let mut v = 1.0;
            for (k, f) in factors.iter().enumerate() {
                v *= f[spec.axis_index(flat, k)];
            }
            *amp += pk.coefficient * v;
        }
    }
    let mut psi = GridWaveFunction::from_amplitudes(spec, amplitudes)?;
    psi.normalize()?;
    Ok(psi)
}
