use serde::{Deserialize, Serialize};

use super::config::{Ontology, ScenarioConfig};
use crate::error::{GrwError, Result};
use crate::ontology::{
    flash_fraction_in_region, mass_fraction_in_region, matter_density_branch, matter_density_grid,
    uniform_masses, Flash, MatterDensityField, SpatialGrid, TimeWindow,
};
use crate::wavefunction::{BranchState, GridWaveFunction, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Inside,
    Outside,
    Partial,
    Undefined,
}

impl Verdict {
    pub fn is_definite(self) -> bool {
        matches!(self, Verdict::Inside | Verdict::Outside)
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Inside => "inside",
            Verdict::Outside => "outside",
            Verdict::Partial => "partial",
            Verdict::Undefined => "undefined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// The fraction the verdict was read from; `None` with no evidence.
    pub evidence: Option<f64>,
    pub ontology: Ontology,
}

/// Inside iff `fraction >= theta`, outside iff `fraction <= 1 - theta`,
/// partial when neither or both hold.
pub fn threshold_verdict(fraction: f64, theta: f64) -> Verdict {
    match (fraction >= theta, fraction <= 1.0 - theta) {
        (true, false) => Verdict::Inside,
        (false, true) => Verdict::Outside,
        _ => Verdict::Partial,
    }
}

/// Reads the verdict off the matter density.
pub fn classify_grwm(m: &MatterDensityField, box_region: &Region, theta_m: f64) -> Classification {
    match mass_fraction_in_region(m, box_region) {
        Ok(f) => Classification {
            verdict: threshold_verdict(f, theta_m),
            evidence: Some(f),
            ontology: Ontology::Grwm,
        },
        Err(_) => Classification {
            verdict: Verdict::Undefined,
            evidence: None,
            ontology: Ontology::Grwm,
        },
    }
}

/// Reads the verdict off the flashes in `window`; no flashes, no verdict.
pub fn classify_grwf(flashes: &[Flash], box_region: &Region, window: TimeWindow, theta_f: f64) -> Classification {
    let f = flash_fraction_in_region(flashes, box_region, window, None);
    Classification {
        verdict: f.fraction.map_or(Verdict::Undefined, |x| threshold_verdict(x, theta_f)),
        evidence: f.fraction,
        ontology: Ontology::Grwf,
    }
}

/// The wave function alone fixes a location only once the other branch
/// is exactly gone, which never happens after finitely many collapses.
pub fn classify_grw0(inside_weight: f64, inside_exact: bool, outside_exact: bool) -> Classification {
    let verdict = if inside_exact {
        Verdict::Inside
    } else if outside_exact {
        Verdict::Outside
    } else {
        Verdict::Partial
    };
    Classification {
        verdict,
        evidence: Some(inside_weight),
        ontology: Ontology::Grw0,
    }
}

/// A state that can be classified as one system.
#[derive(Debug, Clone, Copy)]
pub enum SystemRef<'a> {
    Branch(&'a BranchState),
    Grid(&'a GridWaveFunction),
}

impl SystemRef<'_> {
    pub fn num_particles(&self) -> usize {
        match self {
            SystemRef::Branch(s) => s.num_particles(),
            SystemRef::Grid(p) => p.num_particles(),
        }
    }

    /// Weight of the part of the state whose first particle sits in the box.
    pub fn inside_weight(&self, box_region: &Region) -> f64 {
        match self {
            SystemRef::Branch(s) => s
                .branches()
                .iter()
                .filter(|b| box_region.contains(b.anchors[0]))
                .map(|b| b.log_weight().exp())
                .sum(),
            SystemRef::Grid(p) => p.mass_in_region(0, box_region).unwrap_or(0.0),
        }
    }

    /// `(no weight outside, no weight inside)` exactly.
    fn exact_support(&self, box_region: &Region) -> (bool, bool) {
        match self {
            SystemRef::Branch(s) => {
                let gone = |inside: bool| {
                    s.branches()
                        .iter()
                        .filter(|b| box_region.contains(b.anchors[0]) == inside)
                        .all(|b| b.log_weight() == f64::NEG_INFINITY)
                };
                (gone(false), gone(true))
            }
            // Gaussian tails never vanish exactly.
            SystemRef::Grid(_) => (false, false),
        }
    }

    pub fn leading_weight(&self, box_region: &Region) -> (usize, f64) {
        match self {
            SystemRef::Branch(s) => {
                let lead = s.leading_branch();
                (lead, s.weight(lead))
            }
            SystemRef::Grid(_) => {
                let w = self.inside_weight(box_region);
                if w >= 0.5 {
                    (0, w)
                } else {
                    (1, 1.0 - w)
                }
            }
        }
    }

    pub fn matter_density(&self, masses: &[f64], grid: SpatialGrid, time: f64) -> Result<MatterDensityField> {
        match self {
            SystemRef::Branch(s) => matter_density_branch(s, masses, grid, time),
            SystemRef::Grid(p) => matter_density_grid(p, masses, time),
        }
    }

    pub fn same_state(&self, other: &SystemRef<'_>) -> bool {
        match (self, other) {
            (SystemRef::Branch(a), SystemRef::Branch(b)) => a == b,
            (SystemRef::Grid(a), SystemRef::Grid(b)) => a == b,
            _ => false,
        }
    }
}

/// Verdict rule for one ontology, configured from a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub ontology: Ontology,
    pub box_region: Region,
    pub theta_m: f64,
    pub theta_f: f64,
    pub window: f64,
    pub density_grid: SpatialGrid,
    pub masses: Vec<f64>,
}

impl Classifier {
    pub fn from_config(c: &ScenarioConfig) -> Result<Self> {
        let pad = 5.0 * c.sigma;
        let lo = c.inside_anchor.min(c.outside_anchor).min(c.box_region.lower()) - pad;
        let hi = c.inside_anchor.max(c.outside_anchor).max(c.box_region.upper()) + pad;
        Ok(Self {
            ontology: c.ontology,
            box_region: c.box_region,
            theta_m: c.theta_m,
            theta_f: c.theta_f,
            window: c.window_length(),
            density_grid: SpatialGrid::new(lo, hi, c.density_points)?,
            masses: uniform_masses(c.particles),
        })
    }

    pub fn with_ontology(&self, ontology: Ontology) -> Self {
        Self {
            ontology,
            ..self.clone()
        }
    }

    /// Verdict at `time`; GRWf looks at the flashes in `[time - window, time)`.
    pub fn classify(&self, state: SystemRef<'_>, flashes: &[Flash], time: f64) -> Result<Classification> {
        match self.ontology {
            Ontology::Grwm => {
                let m = state.matter_density(&self.masses, self.density_grid, time)?;
                Ok(classify_grwm(&m, &self.box_region, self.theta_m))
            }
            Ontology::Grwf => {
                let window = TimeWindow::new(time - self.window, time)?;
                Ok(classify_grwf(flashes, &self.box_region, window, self.theta_f))
            }
            Ontology::Grw0 => {
                let (inside_exact, outside_exact) = state.exact_support(&self.box_region);
                Ok(classify_grw0(
                    state.inside_weight(&self.box_region),
                    inside_exact,
                    outside_exact,
                ))
            }
        }
    }
}

/// A change of definite verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time: f64,
    pub from: Verdict,
    pub to: Verdict,
}

/// Inside/outside flips along a verdict timeline. Partial and undefined
/// samples are skipped: each definite verdict is compared with the last
/// definite one.
pub fn verdict_transitions(timeline: &[(f64, Verdict)]) -> Vec<Transition> {
    let mut out = Vec::new();
    let mut last: Option<Verdict> = None;
    for &(t, v) in timeline {
        if !v.is_definite() {
            continue;
        }
        if let Some(prev) = last {
            if prev != v {
                out.push(Transition {
                    time: t,
                    from: prev,
                    to: v,
                });
            }
        }
        last = Some(v);
    }
    out
}

/// Classifies a run at each sampling time and returns its verdict flips.
pub fn detect_resurrection<F>(sampling_times: &[f64], mut classify: F) -> Result<Vec<Transition>>
where
    F: FnMut(f64) -> Result<Classification>,
{
    if sampling_times.len() < 2 {
        return Err(GrwError::InvalidParams("need at least two sampling times".into()));
    }
    let timeline = sampling_times
        .iter()
        .map(|&t| classify(t).map(|c| (t, c.verdict)))
        .collect::<Result<Vec<_>>>()?;
    Ok(verdict_transitions(&timeline))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub inside: usize,
    pub outside: usize,
    pub partial: usize,
    pub undefined: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.inside + self.outside + self.partial + self.undefined
    }
}

/// Counts verdicts over marbles classified under one ontology.
pub fn marble_census(classifications: &[Classification]) -> Result<Census> {
    let mut c = Census::default();
    let Some(first) = classifications.first() else {
        return Ok(c);
    };
    if classifications.iter().any(|x| x.ontology != first.ontology) {
        return Err(GrwError::InvalidScenario("census mixes classifications from different ontologies".into()));
    }
    for x in classifications {
        match x.verdict {
            Verdict::Inside => c.inside += 1,
            Verdict::Outside => c.outside += 1,
            Verdict::Partial => c.partial += 1,
            Verdict::Undefined => c.undefined += 1,
        }
    }
    Ok(c)
}
