//! Latency distributions.
//!
//! All parameters are in seconds. `scale` multiplies every draw; the
//! core-scaling experiments use it to shrink VSCC time.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `params = [value]`
    Constant,
    /// `params = [mean]`
    Exponential,
    /// `params = [mu, sigma]` of the parent normal, truncated at zero.
    Normal,
    /// `params` are the samples themselves; `path` may name a file with one
    /// value per line, which the loader reads into `params`.
    Empirical,
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub family: Family,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl DistributionSpec {
    pub fn constant(value: f64) -> Self {
        Self::new(Family::Constant, vec![value])
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn exponential(mean: f64) -> Self {
        Self::new(Family::Exponential, vec![mean])
    }

    pub fn normal(mu: f64, sigma: f64) -> Self {
        Self::new(Family::Normal, vec![mu, sigma])
    }

    pub fn empirical(samples: Vec<f64>) -> Self {
        Self::new(Family::Empirical, samples)
    }

    fn new(family: Family, params: Vec<f64>) -> Self {
        Self {
            family,
            params,
            scale: 1.0,
            path: None,
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale *= factor;
        self
    }

    /// Returns a copy whose mean is `mean`. Only meaningful for families
    /// with a single location parameter (constant, exponential).
    pub fn with_mean(&self, mean: f64) -> Self {
        let current = self.mean();
        let mut out = self.clone();
        if current > 0.0 {
            out.scale *= mean / current;
        } else {
            out = Self::exponential(mean);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0 || (self.family == Family::Constant && self.params == [0.0])
    }

    pub fn validate(&self, path: &str, errors: &mut Vec<FieldError>) {
        let mut bad = |msg: &str| errors.push(FieldError::new(path, msg));
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            bad("scale must be a finite non-negative number");
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            bad("params must be finite");
            return;
        }
        match self.family {
            Family::Constant => match self.params.as_slice() {
                [v] if *v >= 0.0 => {}
                [_] => bad("constant value must be >= 0"),
                _ => bad("constant takes exactly one parameter"),
            },
            Family::Exponential => match self.params.as_slice() {
                [m] if *m > 0.0 => {}
                [_] => bad("exponential mean must be > 0"),
                _ => bad("exponential takes exactly one parameter (mean)"),
            },
            Family::Normal => match self.params.as_slice() {
                [_, s] if *s < 0.0 => bad("normal sigma must be >= 0"),
                [mu, s] if *s == 0.0 && *mu < 0.0 => bad("normal with sigma 0 needs mu >= 0"),
                // Resampling a negative draw only terminates in reasonable
                // time if the mass above zero is not vanishing.
                [mu, s] if *s > 0.0 && *mu < -6.0 * *s => {
                    bad("normal has almost no mass above zero")
                }
                [_, _] => {}
                _ => bad("normal takes exactly two parameters (mu, sigma)"),
            },
            Family::Empirical => {
                if self.params.is_empty() {
                    bad("empirical sample list is empty");
                } else if self.params.iter().any(|v| *v < 0.0) {
                    bad("empirical samples must be >= 0");
                }
            }
        }
    }

    /// Expected value of a draw, scale included.
    pub fn mean(&self) -> f64 {
        let base = match self.family {
            Family::Constant | Family::Exponential => self.params.first().copied().unwrap_or(0.0),
            Family::Normal => truncated_normal_mean(self.params[0], self.params[1]),
            Family::Empirical => {
                if self.params.is_empty() {
                    0.0
                } else {
                    self.params.iter().sum::<f64>() / self.params.len() as f64
                }
            }
        };
        base * self.scale
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let base = match self.family {
            Family::Constant => self.params[0],
            Family::Exponential => {
                // 1 - u lies in (0, 1], so the log is finite.
                -self.params[0] * libm::log(1.0 - rng.next_f64())
            }
            Family::Normal => {
                let (mu, sigma) = (self.params[0], self.params[1]);
                if sigma == 0.0 {
                    mu
                } else {
                    loop {
                        let x = mu + sigma * standard_normal(rng);
                        if x >= 0.0 {
                            break x;
                        }
                    }
                }
            }
            Family::Empirical => self.params[rng.below(self.params.len())],
        };
        base * self.scale
    }
}

/// Box-Muller, one output per call so the stream position depends only on
/// the number of draws.
fn standard_normal(rng: &mut RngStream) -> f64 {
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

fn truncated_normal_mean(mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mu.max(0.0);
    }
    let alpha = -mu / sigma;
    let pdf = libm::exp(-0.5 * alpha * alpha) / libm::sqrt(core::f64::consts::TAU);
    let tail = 0.5 * libm::erfc(alpha / core::f64::consts::SQRT_2);
    mu + sigma * pdf / tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_of(spec: &DistributionSpec, n: usize, label: &str) -> f64 {
        let mut rng = RngStream::new(42, label);
        (0..n).map(|_| spec.sample(&mut rng)).sum::<f64>() / n as f64
    }

    #[test]
    fn constant_is_exact() {
        let mut rng = RngStream::new(0, "c");
        assert_eq!(DistributionSpec::constant(1.59).sample(&mut rng), 1.59);
    }

    #[test]
    fn exponential_mean_converges() {
        let m = mean_of(&DistributionSpec::exponential(1.3), 1_000_000, "exp");
        assert!((m - 1.3).abs() < 0.01, "{m}");
    }

    #[test]
    fn empirical_support_is_scaled() {
        let spec = DistributionSpec::empirical(vec![2.0, 2.4, 2.8]).scaled(0.375);
        let support = [0.75, 0.9, 1.05];
        let mut rng = RngStream::new(3, "emp");
        let mut seen = [false; 3];
        for _ in 0..1000 {
            let x = spec.sample(&mut rng);
            let i = support
                .iter()
                .position(|s| (s - x).abs() < 1e-12)
                .unwrap_or_else(|| panic!("{x} outside scaled support"));
            seen[i] = true;
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn truncated_normal_resamples_rather_than_clamps() {
        // Clamping would put about half the mass at exactly zero.
        let spec = DistributionSpec::normal(0.0, 1.0);
        let mut rng = RngStream::new(5, "tn");
        let zeros = (0..10_000).filter(|_| spec.sample(&mut rng) == 0.0).count();
        assert!(zeros < 5);
        // Half-normal mean is sigma * sqrt(2 / pi).
        let m = mean_of(&spec, 400_000, "tn2");
        let expect = libm::sqrt(2.0 / core::f64::consts::PI);
        assert!((m - expect).abs() < 0.005, "{m} vs {expect}");
        assert!((spec.mean() - expect).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_far_from_zero_matches_parent() {
        let spec = DistributionSpec::normal(2.376, 0.395);
        assert!((spec.mean() - 2.376).abs() < 1e-6);
        let m = mean_of(&spec, 200_000, "tn3");
        assert!((m - 2.376).abs() < 0.005, "{m}");
    }

    #[test]
    fn scale_multiplies_mean() {
        let spec = DistributionSpec::exponential(2.0).scaled(0.5);
        assert_eq!(spec.mean(), 1.0);
        assert_eq!(spec.with_mean(1.8).mean(), 1.8);
    }

    #[test]
    fn validation_catches_bad_params() {
        let cases = [
            DistributionSpec::exponential(-1.0),
            DistributionSpec::exponential(0.0),
            DistributionSpec::constant(-0.1),
            DistributionSpec::normal(1.0, -0.2),
            DistributionSpec::empirical(vec![]),
            DistributionSpec::empirical(vec![1.0, -1.0]),
            DistributionSpec::constant(1.0).scaled(-1.0),
            DistributionSpec::constant(f64::NAN),
        ];
        for spec in cases {
            let mut errs = Vec::new();
            spec.validate("d", &mut errs);
            assert!(!errs.is_empty(), "{spec:?} accepted");
        }
        let mut errs = Vec::new();
        DistributionSpec::normal(0.142, 0.05).validate("d", &mut errs);
        assert!(errs.is_empty());
    }

    #[test]
    fn draws_are_non_negative() {
        let specs = [
            DistributionSpec::exponential(0.085),
            DistributionSpec::normal(0.828, 2.077),
            DistributionSpec::normal(0.0, 0.3),
        ];
        let mut rng = RngStream::new(9, "nn");
        for spec in &specs {
            for _ in 0..10_000 {
                assert!(spec.sample(&mut rng) >= 0.0);
            }
        }
    }
}
