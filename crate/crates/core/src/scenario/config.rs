use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{GrwParams, Hamiltonian};
use crate::error::{GrwError, Result};
use crate::wavefunction::{GridSpec, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// A single superposition of two macroscopically distinct states.
    Cat,
    /// Same state with a small tail weight, watched for resurrections.
    Tail,
    /// `n` non-interacting marbles, each in the same superposition.
    Marbles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ontology {
    Grw0,
    Grwf,
    Grwm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum History {
    /// The small tail is the result of earlier collapses centered in the box.
    CollapsedPast,
    /// The superposition was prepared directly; no flashes before t = 0.
    FreshPreparation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Backend {
    Branch,
    Grid {
        points: usize,
        x_min: f64,
        x_max: f64,
        packet_width: f64,
    },
}

/// Everything needed to build and run one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// `|c_1|^2`, weight of the "inside" branch.
    pub c1_sq: f64,
    pub n_marbles: usize,
    /// Particles per cat or marble.
    pub particles: usize,
    pub inside_anchor: f64,
    pub outside_anchor: f64,
    pub box_region: Region,
    pub ontology: Ontology,
    pub history: History,
    pub lambda_eff: f64,
    pub sigma: f64,
    /// Defaults to 50 expected collapses per system.
    pub total_time: Option<f64>,
    pub hamiltonian: Hamiltonian,
    pub theta_m: f64,
    pub theta_f: f64,
    /// GRWf window length; defaults to 100 expected flashes per system.
    pub window: Option<f64>,
    /// Classifier sampling interval; defaults to one expected collapse per
    /// system.
    pub sample_interval: Option<f64>,
    pub backend: Backend,
    /// Points of the spatial grid used for branch-model matter density.
    pub density_points: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Cat,
            c1_sq: 0.5,
            n_marbles: 1,
            particles: 1,
            inside_anchor: 0.0,
            outside_anchor: 10.0,
            box_region: Region::new(-5.0, 5.0).expect("static region"),
            ontology: Ontology::Grwm,
            history: History::FreshPreparation,
            lambda_eff: 1.0,
            sigma: 1.0,
            total_time: None,
            hamiltonian: Hamiltonian::Zero,
            theta_m: 0.5,
            theta_f: 0.99,
            window: None,
            sample_interval: None,
            backend: Backend::Branch,
            density_points: 201,
        }
    }
}

impl ScenarioConfig {
    /// Number of independently classified systems (marbles, or one cat).
    pub fn num_systems(&self) -> usize {
        match self.kind {
            ScenarioKind::Marbles => self.n_marbles,
            _ => 1,
        }
    }

    pub fn total_particles(&self) -> usize {
        self.num_systems() * self.particles
    }

    /// Collapse rate of one system.
    pub fn system_rate(&self) -> f64 {
        self.particles as f64 * self.lambda_eff
    }

    pub fn horizon(&self) -> f64 {
        self.total_time.unwrap_or(50.0 / self.system_rate())
    }

    pub fn window_length(&self) -> f64 {
        self.window.unwrap_or(100.0 / self.system_rate())
    }

    pub fn sampling_interval(&self) -> f64 {
        self.sample_interval.unwrap_or(1.0 / self.system_rate())
    }

    pub fn grw_params(&self) -> Result<GrwParams> {
        GrwParams::new(self.lambda_eff, self.sigma, self.horizon(), self.hamiltonian)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GrwError::InvalidScenario(m));
        if !(self.c1_sq > 0.0 && self.c1_sq < 1.0) {
            return bad(format!("c1_sq must lie in (0, 1), got {}", self.c1_sq));
        }
        if self.n_marbles == 0 || self.particles == 0 {
            return bad("n_marbles and particles must be positive".into());
        }
        if self.kind != ScenarioKind::Marbles && self.n_marbles != 1 {
            return bad("n_marbles applies to the marbles scenario only".into());
        }
        if !(self.theta_f > 0.5 && self.theta_f <= 1.0) {
            return bad(format!("theta_f must lie in (0.5, 1], got {}", self.theta_f));
        }
        if !(self.theta_m > 0.0 && self.theta_m < 1.0) {
            return bad(format!("theta_m must lie in (0, 1), got {}", self.theta_m));
        }
        if !(self.inside_anchor.is_finite() && self.outside_anchor.is_finite()) {
            return bad("anchors must be finite".into());
        }
        for (name, v) in [
            ("window", self.window),
            ("sample_interval", self.sample_interval),
            ("total_time", self.total_time),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if self.density_points < 2 {
            return bad("density_points must be at least 2".into());
        }
        self.grw_params()?;
        match self.backend {
            Backend::Branch => {
                if self.hamiltonian != Hamiltonian::Zero {
                    return bad("free evolution requires the grid backend".into());
                }
            }
            Backend::Grid {
                points,
                x_min,
                x_max,
                packet_width,
            } => {
                if self.kind == ScenarioKind::Marbles && self.n_marbles > 1 {
                    return bad("marbles with n > 1 need the branch backend".into());
                }
                let spec = GridSpec::new(x_min, x_max, points, self.particles)?;
                if packet_width < 2.0 * spec.spacing() {
                    return bad(format!(
                        "packet_width {packet_width} is below two grid cells ({})",
                        2.0 * spec.spacing()
                    ));
                }
                for a in [self.inside_anchor, self.outside_anchor] {
                    if !(x_min..=x_max).contains(&a) {
                        return bad(format!("anchor {a} outside the grid"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. Blank lines and lines starting
    /// with `#` or `;` are ignored; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: HashMap<String, (usize, String)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(GrwError::Config {
                    line,
                    message: format!("expected `key = value`, got {trimmed:?}"),
                });
            };
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(GrwError::Config {
                    line,
                    message: format!("unknown key {key:?}"),
                });
            }
            if let Some((first, _)) = entries.get(&key) {
                return Err(GrwError::Config {
                    line,
                    message: format!("duplicate key {key:?} (first set on line {first})"),
                });
            }
            entries.insert(key, (line, value.trim().to_string()));
        }
        let last_line = text.lines().count().max(1);
        Self::from_entries(&entries, last_line)
    }

    fn from_entries(entries: &HashMap<String, (usize, String)>, last_line: usize) -> Result<Self> {
        let mut c = Self::default();
        let get = |k: &str| entries.get(k).map(|(l, v)| (*l, v.as_str()));

        if let Some((l, v)) = get("kind") {
            c.kind = match v {
                "cat" => ScenarioKind::Cat,
                "tail" => ScenarioKind::Tail,
                "marbles" => ScenarioKind::Marbles,
                _ => return Err(choice_err(l, "kind", v, "cat | tail | marbles")),
            };
        }
        if let Some((l, v)) = get("ontology") {
            c.ontology = parse_ontology(v).ok_or_else(|| choice_err(l, "ontology", v, "grw0 | grwf | grwm"))?;
        }
        if let Some((l, v)) = get("history") {
            c.history = match v {
                "collapsed_past" => History::CollapsedPast,
                "fresh_preparation" => History::FreshPreparation,
                _ => return Err(choice_err(l, "history", v, "collapsed_past | fresh_preparation")),
            };
        }
        macro_rules! num {
            ($key:literal, $field:expr) => {
                if let Some((l, v)) = get($key) {
                    $field = parse_num(l, $key, v)?;
                }
            };
        }
        macro_rules! opt_num {
            ($key:literal, $field:expr) => {
                if let Some((l, v)) = get($key) {
                    $field = Some(parse_num(l, $key, v)?);
                }
            };
        }
        num!("c1_sq", c.c1_sq);
        num!("n_marbles", c.n_marbles);
        num!("particles", c.particles);
        num!("inside_anchor", c.inside_anchor);
        num!("outside_anchor", c.outside_anchor);
        num!("lambda_eff", c.lambda_eff);
        num!("sigma", c.sigma);
        opt_num!("total_time", c.total_time);
        num!("theta_m", c.theta_m);
        num!("theta_f", c.theta_f);
        opt_num!("window", c.window);
        opt_num!("sample_interval", c.sample_interval);
        num!("density_points", c.density_points);

        let lower = match get("box_lower") {
            Some((l, v)) => parse_num(l, "box_lower", v)?,
            None => c.box_region.lower(),
        };
        let upper = match get("box_upper") {
            Some((l, v)) => parse_num(l, "box_upper", v)?,
            None => c.box_region.upper(),
        };
        let box_line = get("box_upper").or(get("box_lower")).map_or(last_line, |(l, _)| l);
        c.box_region = Region::new(lower, upper).map_err(|e| GrwError::Config {
            line: box_line,
            message: e.to_string(),
        })?;

        let mass = match get("mass") {
            Some((l, v)) => Some((l, parse_num::<f64>(l, "mass", v)?)),
            None => None,
        };
        if let Some((l, v)) = get("hamiltonian") {
            c.hamiltonian = match v {
                "zero" => Hamiltonian::Zero,
                "free" => Hamiltonian::FreeParticle {
                    mass: mass.map_or(1.0, |(_, m)| m),
                },
                _ => return Err(choice_err(l, "hamiltonian", v, "zero | free")),
            };
        }
        if let (Some((l, _)), Hamiltonian::Zero) = (mass, c.hamiltonian) {
            return Err(GrwError::Config {
                line: l,
                message: "mass is only meaningful with hamiltonian = free".into(),
            });
        }

        let grid_keys = ["grid_points", "grid_min", "grid_max", "packet_width"];
        let backend_line = get("backend").map(|(l, _)| l);
        match get("backend").map(|(_, v)| v) {
            None | Some("branch") => {
                if let Some(k) = grid_keys.iter().find(|k| entries.contains_key(**k)) {
                    return Err(GrwError::Config {
                        line: entries[*k].0,
                        message: format!("{k} requires backend = grid"),
                    });
                }
            }
            Some("grid") => {
                let mut points = 801usize;
                let mut x_min = c.inside_anchor.min(c.outside_anchor) - 10.0 * c.sigma;
                let mut x_max = c.inside_anchor.max(c.outside_anchor) + 10.0 * c.sigma;
                let mut packet_width = 0.1 * c.sigma;
                num!("grid_points", points);
                num!("grid_min", x_min);
                num!("grid_max", x_max);
                num!("packet_width", packet_width);
                c.backend = Backend::Grid {
                    points,
                    x_min,
                    x_max,
                    packet_width,
                };
            }
            Some(v) => return Err(choice_err(backend_line.unwrap_or(0), "backend", v, "branch | grid")),
        }

        c.validate().map_err(|e| GrwError::Config {
            line: culprit_line(&e, entries).unwrap_or(last_line),
            message: e.to_string(),
        })?;
        Ok(c)
    }

    /// The config in the same format `parse` reads.
    pub fn to_config_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ScenarioKind::Cat => "cat",
            ScenarioKind::Tail => "tail",
            ScenarioKind::Marbles => "marbles",
        };
        writeln!(f, "kind = {kind}")?;
        writeln!(f, "c1_sq = {}", self.c1_sq)?;
        writeln!(f, "n_marbles = {}", self.n_marbles)?;
        writeln!(f, "particles = {}", self.particles)?;
        writeln!(f, "inside_anchor = {}", self.inside_anchor)?;
        writeln!(f, "outside_anchor = {}", self.outside_anchor)?;
        writeln!(f, "box_lower = {}", self.box_region.lower())?;
        writeln!(f, "box_upper = {}", self.box_region.upper())?;
        writeln!(f, "ontology = {}", ontology_name(self.ontology))?;
        let history = match self.history {
            History::CollapsedPast => "collapsed_past",
            History::FreshPreparation => "fresh_preparation",
        };
        writeln!(f, "history = {history}")?;
        writeln!(f, "lambda_eff = {}", self.lambda_eff)?;
        writeln!(f, "sigma = {}", self.sigma)?;
        writeln!(f, "total_time = {}", self.horizon())?;
        match self.hamiltonian {
            Hamiltonian::Zero => writeln!(f, "hamiltonian = zero")?,
            Hamiltonian::FreeParticle { mass } => {
                writeln!(f, "hamiltonian = free")?;
                writeln!(f, "mass = {mass}")?;
            }
        }
        writeln!(f, "theta_m = {}", self.theta_m)?;
        writeln!(f, "theta_f = {}", self.theta_f)?;
        writeln!(f, "window = {}", self.window_length())?;
        writeln!(f, "sample_interval = {}", self.sampling_interval())?;
        writeln!(f, "density_points = {}", self.density_points)?;
        match self.backend {
            Backend::Branch => writeln!(f, "backend = branch"),
            Backend::Grid {
                points,
                x_min,
                x_max,
                packet_width,
            } => {
                writeln!(f, "backend = grid")?;
                writeln!(f, "grid_points = {points}")?;
                writeln!(f, "grid_min = {x_min}")?;
                writeln!(f, "grid_max = {x_max}")?;
                writeln!(f, "packet_width = {packet_width}")
            }
        }
    }
}

const KEYS: &[&str] = &[
    "kind",
    "c1_sq",
    "n_marbles",
    "particles",
    "inside_anchor",
    "outside_anchor",
    "box_lower",
    "box_upper",
    "ontology",
    "history",
    "lambda_eff",
    "sigma",
    "total_time",
    "hamiltonian",
    "mass",
    "theta_m",
    "theta_f",
    "window",
    "sample_interval",
    "backend",
    "grid_points",
    "grid_min",
    "grid_max",
    "packet_width",
    "density_points",
];

pub fn parse_ontology(v: &str) -> Option<Ontology> {
    match v {
        "grw0" => Some(Ontology::Grw0),
        "grwf" => Some(Ontology::Grwf),
        "grwm" => Some(Ontology::Grwm),
        _ => None,
    }
}

pub fn ontology_name(o: Ontology) -> &'static str {
    match o {
        Ontology::Grw0 => "grw0",
        Ontology::Grwf => "grwf",
        Ontology::Grwm => "grwm",
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| GrwError::Config {
        line,
        message: format!("{key}: cannot parse {v:?} as a number"),
    })
}

fn choice_err(line: usize, key: &str, v: &str, choices: &str) -> GrwError {
    GrwError::Config {
        line,
        message: format!("{key}: {v:?} is not one of {choices}"),
    }
}

/// Best-effort line of the key a validation message names.
fn culprit_line(e: &GrwError, entries: &HashMap<String, (usize, String)>) -> Option<usize> {
    let msg = e.to_string();
    KEYS.iter()
        .filter(|k| msg.contains(*k))
        .filter_map(|k| entries.get(*k).map(|(l, _)| *l))
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        let c = ScenarioConfig::default();
        assert_eq!(c.horizon(), 50.0);
        assert_eq!(c.window_length(), 100.0);
        assert_eq!(c.sampling_interval(), 1.0);
    }

    #[test]
    fn parses_full_config() {
        let text = "\
# marble census
kind = marbles
c1_sq = 0.9
n_marbles = 5
ontology = grwf
history = collapsed_past
lambda_eff = 2.0
total_time = 30
; thresholds
theta_f = 0.95
box_lower = -4
box_upper = 4
";
        let c = ScenarioConfig::parse(text).unwrap();
        assert_eq!(c.kind, ScenarioKind::Marbles);
        assert_eq!(c.n_marbles, 5);
        assert_eq!(c.ontology, Ontology::Grwf);
        assert_eq!(c.history, History::CollapsedPast);
        assert_eq!(c.horizon(), 30.0);
        assert_eq!(c.theta_f, 0.95);
        assert_eq!(c.box_region, Region::new(-4.0, 4.0).unwrap());
        assert_eq!(c.window_length(), 50.0);
    }

    #[test]
    fn round_trips_through_text() {
        let c = ScenarioConfig::parse("kind = tail\nc1_sq = 0.99\nbackend = grid\ngrid_points = 801\n").unwrap();
        let again = ScenarioConfig::parse(&c.to_config_text()).unwrap();
        assert_eq!(again.backend, c.backend);
        assert_eq!(again.c1_sq, c.c1_sq);
        assert_eq!(again.horizon(), c.horizon());
    }

    fn line_of(text: &str) -> usize {
        match ScenarioConfig::parse(text) {
            Err(GrwError::Config { line, .. }) => line,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of("kind = cat\nc1sq = 0.5\n"), 2);
        assert_eq!(line_of("kind = cat\n\nc1_sq = half\n"), 3);
        assert_eq!(line_of("kind = dog\n"), 1);
        assert_eq!(line_of("kind = cat\nkind = tail\n"), 2);
        assert_eq!(line_of("just words\n"), 1);
        assert_eq!(line_of("kind = cat\nc1_sq = 1.5\n"), 2);
        assert_eq!(line_of("theta_f = 0.4\n"), 1);
        assert_eq!(line_of("grid_points = 100\n"), 1);
        assert_eq!(line_of("kind = cat\nmass = 2\n"), 2);
    }

    #[test]
    fn grid_marbles_rejected() {
        let e = ScenarioConfig::parse("kind = marbles\nn_marbles = 3\nbackend = grid\n");
        assert!(matches!(e, Err(GrwError::Config { .. })));
        ScenarioConfig::parse("kind = marbles\nn_marbles = 1\nbackend = grid\n").unwrap();
    }

    #[test]
    fn free_hamiltonian_needs_grid() {
        assert!(ScenarioConfig::parse("hamiltonian = free\n").is_err());
        let c = ScenarioConfig::parse("hamiltonian = free\nmass = 3\nbackend = grid\n").unwrap();
        assert_eq!(c.hamiltonian, Hamiltonian::FreeParticle { mass: 3.0 });
    }
}
