use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyed_permutation::{BlockGrid, SecretKey};

/// Default per-iteration step, 2/255.
pub const DEFAULT_STEP_SIZE: f64 = 2.0 / 255.0;

/// Budgets swept in the accuracy-vs-epsilon protocol, in 1/255 units.
pub const STANDARD_EPSILONS: [u32; 5] = [2, 4, 8, 16, 32];

/// Backward used for the guessed-key attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BpdaBackward {
    /// Attack the classifier directly on the guessed-key-shuffled image,
    /// treating the unknown defense stage as the identity.
    #[default]
    Identity,
    /// Attack the original image through the exact guessed-key permutation.
    ExactGuessed,
}

impl std::str::FromStr for BpdaBackward {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "exact-guessed" => Ok(Self::ExactGuessed),
            other => Err(Error::Config(format!(
                "bpda backward must be identity or exact-guessed, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for BpdaBackward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BpdaBackward::Identity => "identity",
            BpdaBackward::ExactGuessed => "exact-guessed",
        })
    }
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Budget in unit pixel scale.
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub random_init: bool,
    pub guessed_key: Option<SecretKey>,
    pub grid: BlockGrid,
    pub bpda_backward: BpdaBackward,
    /// Seed for the random start; sample `i` of a batch draws from stream `i`.
    pub seed: u64,
}

impl AttackConfig {
    /// PGD with the default step size on 32x32 RGB images.
    pub fn pgd(epsilon: f64, iterations: usize, random_init: bool) -> Self {
        Self {
            epsilon,
            step_size: DEFAULT_STEP_SIZE,
            iterations,
            random_init,
            guessed_key: None,
            grid: BlockGrid::cifar(4).expect("4 divides 32"),
            bpda_backward: BpdaBackward::Identity,
            seed: 0,
        }
    }

    /// Single full-budget step.
    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            step_size: epsilon,
            ..Self::pgd(epsilon, 1, false)
        }
    }

    pub fn with_guess(mut self, key: SecretKey, grid: BlockGrid) -> Self {
        self.guessed_key = Some(key);
        self.grid = grid;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "step size {} must be non-negative",
                self.step_size
            )));
        }
        let reachable = self.step_size <= self.epsilon || self.iterations as f64 * self.step_size >= self.epsilon;
        if !reachable {
            log::warn!(
                "{} steps of {} cannot reach the budget {}",
                self.iterations,
                self.step_size,
                self.epsilon
            );
        }
        Ok(())
    }
}

/// Parses a budget written either as `k/255` (exact in 1/255 units) or as a
/// plain decimal.
pub fn parse_epsilon(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad epsilon {s:?}")))?;
            let den: f64 = den
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad epsilon {s:?}")))?;
            if den <= 0.0 {
                return Err(Error::Config(format!("bad epsilon {s:?}")));
            }
            num / den
        }
        None => s.parse().map_err(|_| Error::Config(format!("bad epsilon {s:?}")))?,
    };
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Config(format!("epsilon {s:?} outside [0, 1]")));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_epsilon("8/255").unwrap(), 8.0 / 255.0);
        assert_eq!(parse_epsilon("0.5").unwrap(), 0.5);
        assert_eq!(parse_epsilon("0/255").unwrap(), 0.0);
        assert!(parse_epsilon("-1/255").is_err());
        assert!(parse_epsilon("1/0").is_err());
        assert!(parse_epsilon("eight").is_err());
    }

    #[test]
    fn negative_epsilon_is_invalid() {
        let mut cfg = AttackConfig::pgd(0.1, 1, false);
        cfg.epsilon = -0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn backward_mode_names() {
        for m in [BpdaBackward::Identity, BpdaBackward::ExactGuessed] {
            assert_eq!(m.to_string().parse::<BpdaBackward>().unwrap(), m);
        }
    }
}
