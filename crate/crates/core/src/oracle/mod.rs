//! Slow, independent reference computations. Nothing here calls the
//! engine's samplers or integrators; the cross-check runs the engine only
//! to compare its two state models against each other.

mod quadrature;
mod sampler;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use quadrature::{integrate, integrate_piecewise};
pub use sampler::SplitMix64;

use crate::dynamics::{apply_collapse_grid, branch_collapse_update};
use crate::error::{GrwError, Result};
use crate::wavefunction::{make_grid_wavefunction, BranchState, GridSpec, Packet, Region};

pub const MAX_ORACLE_BRANCHES: usize = 8;
pub const MAX_ORACLE_FLASHES: usize = 1000;
const QUADRATURE_TOL: f64 = 1e-12;

/// Expected one-step outcome of a collapse on a point-anchor state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorExpectation {
    /// `∫ p(X) w_i'(X) dX` per branch.
    pub expected_posterior: Vec<f64>,
    /// `∫ p(X) dX`.
    pub center_mass: f64,
    pub center_mean: f64,
    pub center_variance: f64,
}

fn check_branches(weights: &[f64], anchors: &[f64], sigma: f64) -> Result<()> {
    if weights.is_empty() || weights.len() > MAX_ORACLE_BRANCHES || weights.len() != anchors.len() {
        return Err(GrwError::InvalidParams(format!(
            "oracle takes 1 to {MAX_ORACLE_BRANCHES} branches with one anchor each"
        )));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(GrwError::InvalidParams("oracle weights must be nonnegative and sum to 1".into()));
    }
    if !(sigma.is_finite() && sigma > 0.0) || anchors.iter().any(|a| !a.is_finite()) {
        return Err(GrwError::InvalidParams("sigma and anchors must be finite, sigma positive".into()));
    }
    Ok(())
}

/// Center density of a point-anchor state: `sum_i w_i N(a_i, sigma^2 / 2)`.
fn center_density(weights: &[f64], anchors: &[f64], sigma: f64, x: f64) -> f64 {
    let norm = 1.0 / (PI * sigma * sigma).sqrt();
    weights
        .iter()
        .zip(anchors)
        .map(|(w, a)| w * norm * (-(a - x) * (a - x) / (sigma * sigma)).exp())
        .sum()
}

/// Posterior weights after a collapse at `x`, computed directly.
pub fn oracle_posterior(weights: &[f64], anchors: &[f64], sigma: f64, x: f64) -> Vec<f64> {
    let logs: Vec<f64> = weights
        .iter()
        .zip(anchors)
        .map(|(w, a)| w.ln() - (a - x) * (a - x) / (sigma * sigma))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

fn breakpoints(anchors: &[f64], sigma: f64) -> Vec<f64> {
    let lo = anchors.iter().copied().fold(f64::INFINITY, f64::min) - 40.0 * sigma;
    let hi = anchors.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 40.0 * sigma;
    let mut bp = vec![lo, hi];
    for a in anchors {
        for s in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            bp.push(a - s * sigma);
            bp.push(a + s * sigma);
        }
    }
    for pair in anchors.windows(2) {
        bp.push(0.5 * (pair[0] + pair[1]));
    }
    bp.retain(|x| (lo..=hi).contains(x));
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    bp
}

/// Integrates the posterior produced by `posterior` against the center law
/// by adaptive quadrature. `posterior(x)` must return one weight per branch.
pub fn one_step_posterior_with<F>(
    weights: &[f64],
    anchors: &[f64],
    sigma: f64,
    posterior: F,
) -> Result<PosteriorExpectation>
where
    F: Fn(f64) -> Vec<f64>,
{
    check_branches(weights, anchors, sigma)?;
    let bp = breakpoints(anchors, sigma);
    let p = |x: f64| center_density(weights, anchors, sigma, x);
    let center_mass = integrate_piecewise(p, &bp, QUADRATURE_TOL)?;
    let center_mean = integrate_piecewise(|x| x * p(x), &bp, QUADRATURE_TOL)?;
    let second = integrate_piecewise(|x| x * x * p(x), &bp, QUADRATURE_TOL)?;
    let expected_posterior = (0..weights.len())
        .map(|i| integrate_piecewise(|x| p(x) * posterior(x)[i], &bp, QUADRATURE_TOL))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorExpectation {
        expected_posterior,
        center_mass,
        center_mean,
        center_variance: second - center_mean * center_mean,
    })
}

/// Expected posterior weights and center moments of a one-step collapse.
pub fn one_step_posterior_oracle(weights: &[f64], anchors: &[f64], sigma: f64) -> Result<PosteriorExpectation> {
    one_step_posterior_with(weights, anchors, sigma, |x| oracle_posterior(weights, anchors, sigma, x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckSettings {
    pub cases: usize,
    pub sigma: f64,
    pub separation: f64,
    pub packet_width: f64,
    pub seed: u64,
}

impl Default for CrosscheckSettings {
    fn default() -> Self {
        Self {
            cases: 100,
            sigma: 1.0,
            separation: 10.0,
            packet_width: 0.01,
            seed: 0x5EED,
        }
    }
}

impl CrosscheckSettings {
    /// Separation of at least 10 sigma and packets no wider than sigma / 100.
    pub fn compliant(&self) -> bool {
        self.separation >= 10.0 * self.sigma && self.packet_width <= self.sigma / 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckCase {
    pub prior: f64,
    pub center: f64,
    pub branch_posterior: f64,
    pub grid_posterior: f64,
}

impl CrosscheckCase {
    pub fn discrepancy(&self) -> f64 {
        (self.branch_posterior - self.grid_posterior).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub settings: CrosscheckSettings,
    pub compliant: bool,
    pub cases: Vec<CrosscheckCase>,
    pub max_discrepancy: f64,
}

/// Posterior weight of the left branch after one collapse, computed once
/// with the branch model and once on a grid holding two narrow packets.
/// Centers are drawn from the grid state's own center law with the oracle
/// sampler; non-compliant settings are reported, not rejected.
pub fn grid_branch_crosscheck(settings: &CrosscheckSettings) -> Result<CrosscheckReport> {
    let s = settings;
    if s.cases == 0 || !(s.packet_width > 0.0 && s.separation > 0.0 && s.sigma > 0.0) {
        return Err(GrwError::InvalidParams("cross-check needs cases and positive lengths".into()));
    }
    let (a1, a2) = (0.0, s.separation);
    let margin = 10.0 * s.sigma;
    let dx = s.packet_width / 3.0;
    let points = ((s.separation + 2.0 * margin) / dx).ceil() as usize + 1;
    let spec = GridSpec::new(a1 - margin, a2 + margin, points, 1)?;
    let left = Region::new(spec.x_min, 0.5 * (a1 + a2))?;
    // |phi|^2 has variance w^2, the collapse kernel adds sigma^2 / 2.
    let spread = (0.5 * s.sigma * s.sigma + s.packet_width * s.packet_width).sqrt();
    let mut rng = SplitMix64::new(s.seed);
    let mut cases = Vec::with_capacity(s.cases);
    for _ in 0..s.cases {
        let prior = 0.05 + 0.9 * rng.uniform();
        let anchor = if rng.uniform() < prior { a1 } else { a2 };
        let center = anchor + spread * rng.normal();
        let branch = BranchState::two_branch(prior, a1, a2, 1)?;
        let branch_posterior = branch_collapse_update(&branch, 0, center, s.sigma)?.weight(0);
        let psi = make_grid_wavefunction(
            spec.clone(),
            &[
                Packet::real(vec![a1], s.packet_width, prior.sqrt()),
                Packet::real(vec![a2], s.packet_width, (1.0 - prior).sqrt()),
            ],
        )?;
        let post = apply_collapse_grid(&psi, 0, center, s.sigma)?;
        let grid_posterior = post.mass_in_region(0, &left)? / post.norm_squared();
        cases.push(CrosscheckCase {
            prior,
            center,
            branch_posterior,
            grid_posterior,
        });
    }
    let max_discrepancy = cases.iter().map(CrosscheckCase::discrepancy).fold(0.0, f64::max);
    Ok(CrosscheckReport {
        settings: s.clone(),
        compliant: s.compliant(),
        cases,
        max_discrepancy,
    })
}

/// A GRWf verdict question: `flashes` consecutive flashes of one
/// single-particle system, read with the flash-fraction rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlashSequenceQuery {
    pub weights: Vec<f64>,
    pub anchors: Vec<f64>,
    pub sigma: f64,
    pub flashes: usize,
    pub box_region: Region,
    pub theta_f: f64,
    pub sequences: usize,
    pub seed: u64,
}

impl Default for FlashSequenceQuery {
    fn default() -> Self {
        Self {
            weights: vec![0.99, 0.01],
            anchors: vec![0.0, 10.0],
            sigma: 1.0,
            flashes: 100,
            box_region: Region::new(-5.0, 5.0).expect("static region"),
            theta_f: 0.99,
            sequences: 1_000_000,
            seed: 0xF1A5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictProbabilities {
    pub inside: f64,
    pub outside: f64,
    pub partial: f64,
    pub undefined: f64,
    /// Largest binomial standard error of the four estimates.
    pub se: f64,
    pub sequences: usize,
}

/// Verdict probabilities by naive simulation of whole flash sequences.
pub fn flash_sequence_probability(q: &FlashSequenceQuery) -> Result<VerdictProbabilities> {
    check_branches(&q.weights, &q.anchors, q.sigma)?;
    if q.flashes > MAX_ORACLE_FLASHES {
        return Err(GrwError::InvalidParams(format!("at most {MAX_ORACLE_FLASHES} flashes")));
    }
    if q.sequences == 0 || !(q.theta_f > 0.5 && q.theta_f <= 1.0) {
        return Err(GrwError::InvalidParams("need sequences and theta_f in (0.5, 1]".into()));
    }
    let mut rng = SplitMix64::new(q.seed);
    let (mut inside, mut outside, mut partial, mut undefined) = (0usize, 0usize, 0usize, 0usize);
    let kernel_sd = q.sigma / 2f64.sqrt();
    let mut w = vec![0.0; q.weights.len()];
    for _ in 0..q.sequences {
        w.copy_from_slice(&q.weights);
        let mut hits = 0usize;
        for _ in 0..q.flashes {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut pick = w.len() - 1;
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            let x = q.anchors[pick] + kernel_sd * rng.normal();
            if q.box_region.contains(x) {
                hits += 1;
            }
            w = oracle_posterior(&w, &q.anchors, q.sigma, x);
        }
        if q.flashes == 0 {
            undefined += 1;
            continue;
        }
        let f = hits as f64 / q.flashes as f64;
        let is_in = f >= q.theta_f;
        let is_out = f <= 1.0 - q.theta_f;
        match (is_in, is_out) {
            (true, false) => inside += 1,
            (false, true) => outside += 1,
            _ => partial += 1,
        }
    }
    let n = q.sequences as f64;
    let p = [inside, outside, partial, undefined].map(|c| c as f64 / n);
    let se = p.iter().map(|p| (p * (1.0 - p) / n).sqrt()).fold(0.0, f64::max);
    Ok(VerdictProbabilities {
        inside: p[0],
        outside: p[1],
        partial: p[2],
        undefined: p[3],
        se,
        sequences: q.sequences,
    })
}

/// Reference numbers consumed by the acceptance checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub flash_query: FlashSequenceQuery,
    pub flash_verdicts: VerdictProbabilities,
    /// Expected posterior weight of the first branch for prior (0.7, 0.3)
    /// with anchors 10 sigma apart.
    pub one_step_posterior_w1: f64,
    /// All marbles inside, `|c1|^(2n)` for n = 5, `|c1|^2` = 0.9.
    pub marble_all_inside: f64,
    pub marble_mean_inside: f64,
    /// Chance that the limiting branch differs from the initial majority,
    /// for weights (0.99, 0.01).
    pub resurrection_probability: f64,
}

impl ReferenceValues {
    pub fn generate(query: &FlashSequenceQuery) -> Result<Self> {
        let one_step = one_step_posterior_oracle(&[0.7, 0.3], &[0.0, 10.0], 1.0)?;
        let (c1, n) = (0.9f64, 5);
        Ok(Self {
            flash_query: query.clone(),
            flash_verdicts: flash_sequence_probability(query)?,
            one_step_posterior_w1: one_step.expected_posterior[0],
            marble_all_inside: c1.powi(n),
            marble_mean_inside: n as f64 * c1,
            resurrection_probability: 0.01f64.min(0.99),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reference values serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GrwError::InvalidParams(format!("reference values: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_law_is_complete() {
        let r = one_step_posterior_oracle(&[0.2, 0.5, 0.3], &[-3.0, 0.0, 12.0], 0.7).unwrap();
        assert!((r.center_mass - 1.0).abs() < 1e-10);
        assert!((r.expected_posterior.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn expected_posterior_is_the_prior() {
        let r = one_step_posterior_oracle(&[0.7, 0.3], &[0.0, 10.0], 1.0).unwrap();
        assert!((r.expected_posterior[0] - 0.7).abs() < 1e-8);
        // Mixture moments: mean 3, variance 0.5 + 0.21 * 100.
        assert!((r.center_mean - 3.0).abs() < 1e-8);
        assert!((r.center_variance - 21.5).abs() < 1e-7);
    }

    #[test]
    fn close_branches_keep_the_martingale() {
        let r = one_step_posterior_oracle(&[0.4, 0.6], &[0.0, 0.5], 1.0).unwrap();
        assert!((r.expected_posterior[0] - 0.4).abs() < 1e-8);
    }

    #[test]
    fn single_branch_posterior_is_prior() {
        let r = one_step_posterior_oracle(&[1.0], &[2.0], 1.0).unwrap();
        assert_eq!(oracle_posterior(&[1.0], &[2.0], 1.0, 7.3), vec![1.0]);
        assert!((r.expected_posterior[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(one_step_posterior_oracle(&[0.5; 9].map(|w| w / 4.5), &[0.0; 9], 1.0).is_err());
        assert!(one_step_posterior_oracle(&[0.5, 0.6], &[0.0, 1.0], 1.0).is_err());
        assert!(one_step_posterior_oracle(&[1.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn engine_branch_update_keeps_the_martingale() {
        let prior = [0.7, 0.3];
        let state = BranchState::two_branch(0.7, 0.0, 10.0, 1).unwrap();
        let r = one_step_posterior_with(&prior, &[0.0, 10.0], 1.0, |x| {
            branch_collapse_update(&state, 0, x, 1.0).unwrap().weights()
        })
        .unwrap();
        assert!((r.expected_posterior[0] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn symmetric_midpoint_crosscheck() {
        let branch = BranchState::two_branch(0.5, 0.0, 10.0, 1).unwrap();
        let w = branch_collapse_update(&branch, 0, 5.0, 1.0).unwrap().weight(0);
        assert!((w - 0.5).abs() < 1e-15);
        let spec = GridSpec::new(-10.0, 20.0, 3001, 1).unwrap();
        let psi = make_grid_wavefunction(
            spec.clone(),
            &[Packet::real(vec![0.0], 0.05, 0.5f64.sqrt()), Packet::real(vec![10.0], 0.05, 0.5f64.sqrt())],
        )
        .unwrap();
        let post = apply_collapse_grid(&psi, 0, 5.0, 1.0).unwrap();
        let left = post.mass_in_region(0, &Region::new(-10.0, 5.0).unwrap()).unwrap();
        // The grid point at the midpoint is shared; its mass is negligible.
        assert!((left / post.norm_squared() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn non_compliant_crosscheck_is_reported() {
        let s = CrosscheckSettings {
            cases: 20,
            separation: 1.0,
            packet_width: 0.1,
            ..Default::default()
        };
        let r = grid_branch_crosscheck(&s).unwrap();
        assert!(!r.compliant);
        assert_eq!(r.cases.len(), 20);
        assert!(r.max_discrepancy.is_finite());
    }

    #[test]
    fn flash_oracle_trivial_cases() {
        let q = FlashSequenceQuery {
            weights: vec![1.0, 0.0],
            sequences: 2000,
            ..Default::default()
        };
        assert_eq!(flash_sequence_probability(&q).unwrap().inside, 1.0);
        let q = FlashSequenceQuery {
            flashes: 0,
            sequences: 100,
            ..Default::default()
        };
        assert_eq!(flash_sequence_probability(&q).unwrap().undefined, 1.0);
        let q = FlashSequenceQuery {
            flashes: 1001,
            ..Default::default()
        };
        assert!(flash_sequence_probability(&q).is_err());
    }

    #[test]
    fn flash_oracle_small_run() {
        let q = FlashSequenceQuery {
            sequences: 20_000,
            ..Default::default()
        };
        let p = flash_sequence_probability(&q).unwrap();
        assert!((p.inside + p.outside + p.partial + p.undefined - 1.0).abs() < 1e-12);
        assert!((p.inside - 0.99).abs() < 4.0 * (0.99f64 * 0.01 / 20_000.0).sqrt() + 1e-3);
    }

    #[test]
    fn reference_values_round_trip() {
        let q = FlashSequenceQuery {
            sequences: 1000,
            ..Default::default()
        };
        let r = ReferenceValues::generate(&q).unwrap();
        assert_eq!(ReferenceValues::from_json(&r.to_json()).unwrap(), r);
        assert_eq!(r.marble_all_inside, 0.9f64.powi(5));
    }
}
