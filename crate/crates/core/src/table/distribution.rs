use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which zero cells the `k = 0` bucket counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroBasis {
    /// Random zeros only; structural zeros are left out of every bucket and
    /// of the denominator.
    #[default]
    RandomOnly,
    /// Every zero cell, over all `K` cells.
    AllZeros,
}

/// Proportion of cells of each size `k` in a table (`τ2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSizeDistribution {
    proportions: BTreeMap<u64, f64>,
    /// Number of cells the proportions are taken over, when known.
    cells: Option<u64>,
    zero_basis: ZeroBasis,
}

impl CellSizeDistribution {
    pub(crate) fn from_frequencies(
        freq: BTreeMap<u64, u64>,
        cells: u64,
        zero_basis: ZeroBasis,
    ) -> Self {
        let proportions = if cells == 0 {
            BTreeMap::new()
        } else {
            freq.into_iter()
                .filter(|&(_, f)| f > 0)
                .map(|(k, f)| (k, f as f64 / cells as f64))
                .collect()
        };
        Self {
            proportions,
            cells: Some(cells),
            zero_basis,
        }
    }

    /// Distribution given directly as proportions; they must sum to one.
    pub fn from_proportions(props: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut proportions = BTreeMap::new();
        for (k, p) in props {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "proportion {p} for k={k} is outside [0, 1]"
                )));
            }
            if p > 0.0 && proportions.insert(k, p).is_some() {
                return Err(Error::invalid(format!("cell size {k} listed twice")));
            }
        }
        let sum: f64 = proportions.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("proportions sum to {sum}, not 1")));
        }
        Ok(Self {
            proportions,
            cells: None,
            zero_basis: ZeroBasis::RandomOnly,
        })
    }

    /// `τ2(k)`.
    pub fn proportion(&self, k: u64) -> f64 {
        self.proportions.get(&k).copied().unwrap_or(0.0)
    }

    /// Nonzero buckets `(k, τ2(k))` in increasing `k`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.proportions.iter().map(|(&k, &p)| (k, p))
    }

    /// Nonzero buckets with `k ≥ 1`.
    pub fn occupied(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.proportions.range(1..).map(|(&k, &p)| (k, p))
    }

    pub fn k_max(&self) -> u64 {
        self.proportions.keys().next_back().copied().unwrap_or(0)
    }

    pub fn cells(&self) -> Option<u64> {
        self.cells
    }

    pub fn zero_basis(&self) -> ZeroBasis {
        self.zero_basis
    }

    /// Number of cells of size `k`, when the cell total is known.
    pub fn frequency(&self, k: u64) -> Option<u64> {
        self.cells
            .map(|n| (self.proportion(k) * n as f64).round() as u64)
    }

    /// `Σ_k k · τ2(k)`, the mean cell count.
    pub fn mean_count(&self) -> f64 {
        self.iter().map(|(k, p)| k as f64 * p).sum()
    }
}
