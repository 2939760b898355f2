//! Sparse tables with a prescribed cell-size histogram.
//!
//! Bucket weights are turned into exact cell counts by largest-remainder
//! rounding over the table's `K` cells, then placed at uniformly random
//! positions. Cells in the optional tail get sizes `k_min + G` with `G`
//! geometric, matching the requested tail mean.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{CategoricalSchema, CellIndex, SparseContingencyTable, Variable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub categories: usize,
}

/// Cells of size at least `k_min`, with mean size `mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub k_min: u64,
    pub weight: f64,
    pub mean: f64,
}

/// Histogram target for a generated table.
///
/// Weights may be frequencies or proportions; they are normalized over the
/// buckets plus the tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub variables: Vec<VariableSpec>,
    pub buckets: BTreeMap<u64, f64>,
    #[serde(default)]
    pub tail: Option<TailSpec>,
}

impl GeneratorSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn schema(&self) -> Result<CategoricalSchema> {
        CategoricalSchema::new(
            self.variables
                .iter()
                .map(|v| Variable::numbered(v.name.clone(), v.categories))
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        let bad = |w: f64| !(w >= 0.0 && w.is_finite());
        if let Some((k, w)) = self.buckets.iter().find(|(_, &w)| bad(w)) {
            return Err(Error::invalid(format!("bucket {k} has invalid weight {w}")));
        }
        if let Some(t) = &self.tail {
            if bad(t.weight) {
                return Err(Error::invalid(format!(
                    "tail has invalid weight {}",
                    t.weight
                )));
            }
            if t.k_min == 0 || !(t.mean >= t.k_min as f64) {
                return Err(Error::invalid(format!(
                    "tail needs k_min ≥ 1 and mean ≥ k_min (k_min = {}, mean = {})",
                    t.k_min, t.mean
                )));
            }
            if self.buckets.range(t.k_min..).any(|(_, &w)| w > 0.0) {
                return Err(Error::invalid("explicit buckets overlap the tail"));
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` items by `weights`.
fn apportion(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take((total - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Generate a table matching `spec` from `seed`.
pub fn generate_table(spec: &GeneratorSpec, seed: u64) -> Result<SparseContingencyTable> {
    spec.validate()?;
    let schema = spec.schema()?;
    let k = schema.cell_count();
    let mut sizes: Vec<u64> = spec.buckets.keys().copied().collect();
    let mut weights: Vec<f64> = spec.buckets.values().copied().collect();
    if let Some(t) = &spec.tail {
        sizes.push(u64::MAX);
        weights.push(t.weight);
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid("bucket weights sum to zero"));
    }
    let counts = apportion(&weights, k);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<u64> = Vec::new();
    for (&size, &n) in sizes.iter().zip(&counts) {
        match size {
            0 => {}
            u64::MAX => {
                let t = spec.tail.as_ref().expect("tail bucket");
                // Shifted geometric: k_min + G, E[G] = (1 − q)/q.
                let q = 1.0 / (t.mean - t.k_min as f64 + 1.0);
                for _ in 0..n {
                    let g = if q >= 1.0 {
                        0
                    } else {
                        let u: f64 = 1.0 - rng.random::<f64>();
                        (u.ln() / (-q).ln_1p()).floor() as u64
                    };
                    values.push(t.k_min + g);
                }
            }
            s => values.extend(std::iter::repeat_n(s, n as usize)),
        }
    }
    values.shuffle(&mut rng);
    let k_usize =
        usize::try_from(k).map_err(|_| Error::invalid("table too large for this platform"))?;
    let mut positions: Vec<u64> = sample(&mut rng, k_usize, values.len())
        .into_iter()
        .map(|i| i as u64)
        .collect();
    positions.sort_unstable();
    let entries = positions.into_iter().map(CellIndex).zip(values);
    SparseContingencyTable::new(schema, entries, [])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ZeroBasis;

    fn spec(vars: &[usize], buckets: &[(u64, f64)]) -> GeneratorSpec {
        GeneratorSpec {
            variables: vars
                .iter()
                .enumerate()
                .map(|(i, &c)| VariableSpec {
                    name: format!("V{i}"),
                    categories: c,
                })
                .collect(),
            buckets: buckets.iter().copied().collect(),
            tail: None,
        }
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[0.5, 0.5], 7).iter().sum::<u64>(), 7);
    }

    #[test]
    fn all_zero_spec_gives_empty_table() {
        let t = generate_table(&spec(&[10, 10], &[(0, 1.0)]), 1).unwrap();
        assert_eq!(t.nonzero_cells(), 0);
    }

    #[test]
    fn exact_histogram() {
        let t = generate_table(&spec(&[10, 10], &[(0, 50.0), (1, 30.0), (2, 20.0)]), 3).unwrap();
        let d = t.cell_size_distribution(ZeroBasis::RandomOnly);
        assert_eq!(d.frequency(1), Some(30));
        assert_eq!(d.frequency(2), Some(20));
        assert_eq!(t.total(), 70);
    }

    #[test]
    fn tail_mean_and_floor() {
        let mut s = spec(&[100, 100], &[(0, 0.5)]);
        s.tail = Some(TailSpec {
            k_min: 11,
            weight: 0.5,
            mean: 40.0,
        });
        let t = generate_table(&s, 9).unwrap();
        assert_eq!(t.nonzero_cells(), 5000);
        assert!(t.entries().iter().all(|&(_, c)| c >= 11));
        let mean = t.total() as f64 / 5000.0;
        assert!((mean - 40.0).abs() < 2.0, "tail mean {mean}");
    }

    #[test]
    fn deterministic_in_seed() {
        let s = spec(&[20, 20], &[(0, 0.7), (1, 0.2), (3, 0.1)]);
        assert_eq!(
            generate_table(&s, 5).unwrap(),
            generate_table(&s, 5).unwrap()
        );
        assert_ne!(
            generate_table(&s, 5).unwrap(),
            generate_table(&s, 6).unwrap()
        );
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_table(&spec(&[4], &[(0, -1.0)]), 0).is_err());
        assert!(generate_table(&spec(&[4], &[(0, 0.0)]), 0).is_err());
        let mut s = spec(&[4], &[(0, 1.0), (12, 1.0)]);
        s.tail = Some(TailSpec {
            k_min: 11,
            weight: 1.0,
            mean: 20.0,
        });
        assert!(generate_table(&s, 0).is_err());
    }
}
