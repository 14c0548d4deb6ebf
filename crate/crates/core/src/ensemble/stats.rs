use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{GrwError, Result};

/// Pass thresholds for z-tests and goodness-of-fit tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub z_max: f64,
    pub p_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { z_max: 4.0, p_min: 0.001 }
    }
}

/// One statistic compared against its analytic target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRecord {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub z: f64,
    /// Set for goodness-of-fit tests, which pass on `p >= p_min`.
    pub p_value: Option<f64>,
    pub pass: bool,
    /// Where the target comes from.
    pub target_source: String,
}

fn z_score(estimate: f64, target: f64, se: f64) -> f64 {
    if se > 0.0 {
        (estimate - target) / se
    } else if estimate == target {
        0.0
    } else {
        f64::INFINITY
    }
}

impl StatRecord {
    pub fn z_test(name: &str, estimate: f64, se: f64, target: f64, source: &str, th: &Thresholds) -> Self {
        let z = z_score(estimate, target, se);
        Self {
            name: name.to_string(),
            estimate,
            se,
            target,
            z,
            p_value: None,
            pass: z.abs() <= th.z_max,
            target_source: source.to_string(),
        }
    }

    /// Chi-square record: estimate is the statistic, target its mean (the
    /// degrees of freedom), `se = sqrt(2 df)`.
    pub fn chi_square(name: &str, fit: &ChiSquareFit, source: &str, th: &Thresholds) -> Self {
        let df = fit.df as f64;
        let se = (2.0 * df).sqrt();
        Self {
            name: name.to_string(),
            estimate: fit.statistic,
            se,
            target: df,
            z: z_score(fit.statistic, df, se),
            p_value: Some(fit.p_value),
            pass: fit.p_value >= th.p_min,
            target_source: source.to_string(),
        }
    }

    /// A proportion tested against `target` with the binomial standard
    /// error under the target.
    pub fn proportion(name: &str, hits: usize, trials: usize, target: f64, source: &str, th: &Thresholds) -> Self {
        let n = trials as f64;
        let se = (target * (1.0 - target) / n).sqrt();
        Self::z_test(name, hits as f64 / n, se, target, source, th)
    }

    /// Deterministic check against a fixed tolerance, reported with
    /// `se = tolerance / z_max` so that the z-score and the tolerance agree.
    pub fn within(name: &str, estimate: f64, target: f64, tolerance: f64, source: &str, th: &Thresholds) -> Self {
        let mut r = Self::z_test(name, estimate, tolerance / th.z_max, target, source, th);
        r.pass = (estimate - target).abs() <= tolerance;
        r
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.name, self.estimate, self.se, self.target, self.z, self.pass
        )
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareFit {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// `(observed, expected)` per merged bin.
    pub bins: Vec<(u64, f64)>,
}

pub const MIN_EXPECTED: f64 = 5.0;

/// Pearson goodness of fit of `observed[j]` against `total * probs[j]`.
/// Neighbouring bins are merged left to right until each expects at
/// least five counts; a short last group joins its neighbour. No
/// parameters are fitted, so `df = bins - 1`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareFit> {
    if observed.len() != probs.len() {
        return Err(GrwError::InvalidParams("observed and expected bins differ in length".into()));
    }
    let total: u64 = observed.iter().sum();
    let mut bins: Vec<(u64, f64)> = Vec::new();
    let (mut o, mut e) = (0u64, 0.0);
    for (obs, p) in observed.iter().zip(probs) {
        o += obs;
        e += p * total as f64;
        if e >= MIN_EXPECTED {
            bins.push((o, e));
            o = 0;
            e = 0.0;
        }
    }
    if o > 0 || e > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => bins.push((o, e)),
        }
    }
    if bins.len() < 3 {
        return Err(GrwError::Inconclusive(format!(
            "only {} bins expect at least {MIN_EXPECTED} counts",
            bins.len()
        )));
    }
    let statistic = bins.iter().map(|(o, e)| (*o as f64 - e).powi(2) / e).sum::<f64>();
    let df = bins.len() - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| GrwError::InvalidParams(e.to_string()))?;
    Ok(ChiSquareFit {
        statistic,
        df,
        p_value: dist.sf(statistic),
        bins,
    })
}

/// Equal-width histogram with explicit bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub name: String,
    pub lower: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(name: &str, lower: f64, width: f64, bins: usize) -> Self {
        Self {
            name: name.to_string(),
            lower,
            width,
            counts: vec![0; bins],
        }
    }

    /// Counts `x`; values past the last bin land in it, values below the
    /// first are ignored.
    pub fn add(&mut self, x: f64) {
        let j = ((x - self.lower) / self.width).floor();
        if j >= 0.0 {
            let last = self.counts.len() - 1;
            self.counts[(j as usize).min(last)] += 1;
        }
    }

    /// Integer-valued histogram with one bin per value `0..=max`.
    pub fn of_counts(name: &str, values: impl IntoIterator<Item = usize>) -> Self {
        let values: Vec<usize> = values.into_iter().collect();
        let max = values.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0u64; max + 1];
        for v in values {
            counts[v] += 1;
        }
        Self {
            name: name.to_string(),
            lower: 0.0,
            width: 1.0,
            counts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Regularized lower incomplete gamma by its power series, for
    /// checking the chi-square tail independently.
    fn lower_gamma_regularized(s: f64, x: f64) -> f64 {
        let mut term = 1.0 / s;
        let mut sum = term;
        for n in 1..10_000 {
            term *= x / (s + n as f64);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        let ln_gamma_s = {
            // Lanczos approximation, g = 7.
            let c = [
                0.999_999_999_999_809_9,
                676.520_368_121_885_1,
                -1_259.139_216_722_402_8,
                771.323_428_777_653_1,
                -176.615_029_162_140_6,
                12.507_343_278_686_905,
                -0.138_571_095_265_720_12,
                9.984_369_578_019_572e-6,
                1.505_632_735_149_311_6e-7,
            ];
            let z = s - 1.0;
            let mut a = c[0];
            let t = z + 7.5;
            for (i, ci) in c.iter().enumerate().skip(1) {
                a += ci / (z + i as f64);
            }
            0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
        };
        (s * x.ln() - x - ln_gamma_s).exp() * sum
    }

    #[test]
    fn chi_square_tail_matches_series_oracle() {
        for (df, x) in [(1usize, 0.5), (3, 2.0), (7, 14.0), (12, 30.0), (20, 9.0)] {
            let oracle = 1.0 - lower_gamma_regularized(df as f64 / 2.0, x / 2.0);
            let dist = ChiSquared::new(df as f64).unwrap();
            assert!((dist.sf(x) - oracle).abs() < 1e-10, "df {df} x {x}");
        }
    }

    #[test]
    fn perfect_fit_has_p_one() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let obs = [100, 200, 300, 400];
        let fit = chi_square_gof(&obs, &probs).unwrap();
        assert_eq!(fit.statistic, 0.0);
        assert_eq!(fit.df, 3);
        assert!((fit.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_bins_are_merged() {
        let probs = [0.001, 0.002, 0.3, 0.4, 0.296, 0.001];
        let obs = [1, 2, 300, 400, 296, 1];
        let fit = chi_square_gof(&obs, &probs).unwrap();
        assert_eq!(fit.bins.len(), 3);
        assert_eq!(fit.bins.iter().map(|b| b.0).sum::<u64>(), 1000);
        assert!(fit.bins.iter().all(|b| b.1 >= MIN_EXPECTED));
    }

    #[test]
    fn too_few_bins_is_inconclusive() {
        assert!(matches!(chi_square_gof(&[3, 3], &[0.5, 0.5]), Err(GrwError::Inconclusive(_))));
    }

    #[test]
    fn zero_se_passes_only_on_exact_target() {
        let th = Thresholds::default();
        assert!(StatRecord::z_test("a", 1.0, 0.0, 1.0, "", &th).pass);
        assert!(!StatRecord::z_test("a", 0.9, 0.0, 1.0, "", &th).pass);
    }

    #[test]
    fn histogram_bins() {
        let mut h = Histogram::new("h", 0.0, 0.5, 2);
        for x in [-1.0, 0.1, 0.6, 7.0] {
            h.add(x);
        }
        assert_eq!(h.counts, vec![1, 2]);
        assert_eq!(Histogram::of_counts("c", [0, 2, 2]).counts, vec![1, 0, 2]);
    }
}
