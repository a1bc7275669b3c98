use std::fmt;
use std::str::FromStr;

use crate::error::{GxeError, Result};

/// Within-block correlation of the covariates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Independent,
    /// `corr(i, j) = rho^|i - j|`
    Ar(f64),
    /// `corr(i, j) = rho` for `0 < |i - j| <= 2`, zero beyond.
    Band(f64),
}

impl Correlation {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        let lag = i.abs_diff(j);
        if lag == 0 {
            return 1.0;
        }
        match *self {
            Correlation::Independent => 0.0,
            Correlation::Ar(rho) => rho.powi(lag as i32),
            Correlation::Band(rho) => {
                if lag <= 2 {
                    rho
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Correlation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Correlation::Independent => write!(f, "independent"),
            Correlation::Ar(rho) => write!(f, "ar:{rho}"),
            Correlation::Band(rho) => write!(f, "band:{rho}"),
        }
    }
}

fn parse_fraction(text: &str, what: &str) -> Result<f64> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| GxeError::Parameter(format!("invalid {what} `{text}`")))
}

impl FromStr for Correlation {
    type Err = GxeError;

    /// `independent`, `ar:RHO` or `band:RHO`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mut parts = lower.splitn(2, ':');
        let kind = parts.next().unwrap_or_default();
        let rho = parts.next();
        let corr = match (kind, rho) {
            ("independent" | "iid", None) => Correlation::Independent,
            ("ar", Some(r)) => Correlation::Ar(parse_fraction(r, "correlation")?),
            ("band", Some(r)) => Correlation::Band(parse_fraction(r, "correlation")?),
            _ => {
                return Err(GxeError::Parameter(format!(
                    "unknown correlation `{s}` (expected independent, ar:RHO or band:RHO)"
                )))
            }
        };
        match corr {
            Correlation::Ar(r) | Correlation::Band(r) if !(r.abs() < 1.0) => {
                Err(GxeError::Parameter(format!("correlation must lie in (-1, 1), got {r}")))
            }
            c => Ok(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contaminant {
    Cauchy,
    StudentT3,
}

/// Error law: standard normal, optionally contaminated with probability `pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorLaw {
    Normal,
    Mixture { contaminant: Contaminant, pi: f64 },
}

impl ErrorLaw {
    pub fn contamination(&self) -> f64 {
        match self {
            ErrorLaw::Normal => 0.0,
            ErrorLaw::Mixture { pi, .. } => *pi,
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorLaw::Normal => write!(f, "normal"),
            ErrorLaw::Mixture {
                contaminant: Contaminant::Cauchy,
                pi,
            } => write!(f, "mix:cauchy:{pi}"),
            ErrorLaw::Mixture {
                contaminant: Contaminant::StudentT3,
                pi,
            } => write!(f, "mix:t3:{pi}"),
        }
    }
}

impl FromStr for ErrorLaw {
    type Err = GxeError;

    /// `normal`, `mix:cauchy:PI` or `mix:t3:PI`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let parts: Vec<&str> = lower.split(':').collect();
        let law = match parts.as_slice() {
            ["normal" | "gaussian"] => ErrorLaw::Normal,
            ["mix", kind, pi] => {
                let contaminant = match *kind {
                    "cauchy" => Contaminant::Cauchy,
                    "t3" | "t" => Contaminant::StudentT3,
                    _ => return Err(GxeError::Parameter(format!("unknown contaminant `{kind}` (cauchy or t3)"))),
                };
                ErrorLaw::Mixture {
                    contaminant,
                    pi: parse_fraction(pi, "mixture weight")?,
                }
            }
            _ => {
                return Err(GxeError::Parameter(format!(
                    "unknown error law `{s}` (expected normal, mix:cauchy:PI or mix:t3:PI)"
                )))
            }
        };
        let pi = law.contamination();
        if !(0.0..1.0).contains(&pi) {
            return Err(GxeError::Parameter(format!("mixture weight must lie in [0, 1), got {pi}")));
        }
        Ok(law)
    }
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub correlation: Correlation,
    pub error: ErrorLaw,
    pub target_censoring: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 300,
            p: 100,
            q: 3,
            correlation: Correlation::Independent,
            error: ErrorLaw::Normal,
            target_censoring: 0.25,
            seed: 0,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.p == 0 {
            return Err(GxeError::Parameter("need p >= 1 and q >= 1".into()));
        }
        if self.n < 2 * self.q + 2 {
            return Err(GxeError::Parameter(format!(
                "n = {} is below 2q + 2 = {}",
                self.n,
                2 * self.q + 2
            )));
        }
        let pi = self.error.contamination();
        if !(0.0..1.0).contains(&pi) {
            return Err(GxeError::Parameter(format!("mixture weight must lie in [0, 1), got {pi}")));
        }
        if !(self.target_censoring > 0.0 && self.target_censoring < 1.0) {
            return Err(GxeError::Parameter(format!(
                "target censoring must lie in (0, 1), got {}",
                self.target_censoring
            )));
        }
        Ok(())
    }

    /// The config for replicate `index`, seeded from an independent derived stream.
    pub fn replicate(&self, index: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed: splitmix64(self.seed ^ splitmix64(index.wrapping_add(1))),
            ..self.clone()
        }
    }

    /// Short label such as `n300_p100_q3_ar:0.2_mix:cauchy:0.3`.
    pub fn label(&self) -> String {
        format!("n{}_p{}_q{}_{}_{}", self.n, self.p, self.q, self.correlation, self.error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints_round_trip() {
        for text in ["independent", "ar:0.2", "band:0.3"] {
            let c: Correlation = text.parse().unwrap();
            assert_eq!(c.to_string(), text);
        }
        for text in ["normal", "mix:cauchy:0.3", "mix:t3:0.15"] {
            let e: ErrorLaw = text.parse().unwrap();
            assert_eq!(e.to_string(), text);
        }
        assert!("ar".parse::<Correlation>().is_err());
        assert!("ar:1.0".parse::<Correlation>().is_err());
        assert!("mix:cauchy:1.0".parse::<ErrorLaw>().is_err());
        assert!("mix:laplace:0.1".parse::<ErrorLaw>().is_err());
    }

    #[test]
    fn correlation_entries() {
        assert_eq!(Correlation::Ar(0.5).at(2, 5), 0.125);
        assert_eq!(Correlation::Band(0.3).at(4, 2), 0.3);
        assert_eq!(Correlation::Band(0.3).at(4, 1), 0.0);
        assert_eq!(Correlation::Independent.at(3, 3), 1.0);
    }

    #[test]
    fn replicate_seeds_differ_and_repeat() {
        let base = ScenarioConfig::default();
        assert_eq!(base.replicate(3), base.replicate(3));
        assert_ne!(base.replicate(3).seed, base.replicate(4).seed);
        assert_ne!(base.replicate(0).seed, base.seed);
    }

    #[test]
    fn validation_rejects_small_n() {
        let config = ScenarioConfig {
            n: 7,
            ..ScenarioConfig::default()
        };
        assert!(config.validate().is_err());
    }
}
