use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Count distribution used for per-cell synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Poisson,
    /// Negative binomial, gamma-mixed Poisson.
    Nbi,
    /// Poisson-inverse Gaussian.
    Pig,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Poisson, Family::Nbi, Family::Pig];

    pub fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Nbi => "nbi",
            Family::Pig => "pig",
        }
    }

    /// The family actually evaluated at dispersion `sigma`: a zero
    /// dispersion collapses NBI and PIG onto the Poisson.
    pub fn effective(self, sigma: f64) -> Family {
        if sigma == 0.0 {
            Family::Poisson
        } else {
            self
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" | "pois" => Ok(Family::Poisson),
            "nbi" | "negbin" | "negative-binomial" => Ok(Family::Nbi),
            "pig" | "poisson-inverse-gaussian" => Ok(Family::Pig),
            other => Err(Error::invalid(format!(
                "unknown family {other:?} (expected poisson, nbi or pig)"
            ))),
        }
    }
}

/// Synthesis model: family, dispersion `σ` and pseudocount `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountModelSpec {
    pub family: Family,
    pub sigma: f64,
    pub alpha: f64,
}

impl CountModelSpec {
    pub fn new(family: Family, sigma: f64, alpha: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be finite and ≥ 0, got {alpha}"
            )));
        }
        Ok(Self {
            family,
            sigma,
            alpha,
        })
    }

    pub fn poisson(alpha: f64) -> Result<Self> {
        Self::new(Family::Poisson, 0.0, alpha)
    }

    /// Family after the `σ = 0` collapse.
    pub fn effective_family(&self) -> Family {
        self.family.effective(self.sigma)
    }

    /// Short label such as `nbi(sigma=1,alpha=0.02)`.
    pub fn label(&self) -> String {
        match self.effective_family() {
            Family::Poisson => format!("poisson(alpha={})", self.alpha),
            f => format!("{f}(sigma={},alpha={})", self.sigma, self.alpha),
        }
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "sigma must be finite and ≥ 0, got {sigma}"
        )))
    }
}

pub(crate) fn check_mean(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "mean must be finite and ≥ 0, got {mu}"
        )))
    }
}

/// Auxiliary constant of the PIG pmf: `c² = 1/σ² + 2μ/σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PigAuxiliary {
    pub c: f64,
}

impl PigAuxiliary {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        check_mean(mu)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("PIG needs sigma > 0, got {sigma}")));
        }
        Ok(Self {
            c: (1.0 + 2.0 * mu * sigma).sqrt() / sigma,
        })
    }

    /// `1/σ − c`, computed without cancellation.
    pub fn log_zero_mass(mu: f64, sigma: f64) -> f64 {
        -2.0 * mu / (1.0 + (1.0 + 2.0 * mu * sigma).sqrt())
    }

    /// Invert `c` back to the mean: `μ = (σc² − 1/σ)/2`.
    pub fn mean_from_c(c: f64, sigma: f64) -> f64 {
        0.5 * (sigma * c * c - 1.0 / sigma)
    }
}
