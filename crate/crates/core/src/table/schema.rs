use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One categorical variable: a name and its ordered category labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub categories: Vec<String>,
}

impl Variable {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    /// A variable whose labels are `1..=count` rendered as text.
    pub fn numbered(name: impl Into<String>, count: usize) -> Self {
        Self::new(name, (1..=count).map(|i| i.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSchema {
    variables: Vec<Variable>,
}

/// Ordered list of categorical variables spanning a `K`-cell lattice.
///
/// Cells are indexed row-major in declaration order: the last variable
/// varies fastest. Parallel synthesis keys its random streams by this
/// flat ordinal, so the order is part of the reproducibility contract.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct CategoricalSchema {
    variables: Vec<Variable>,
    strides: Vec<u64>,
    cell_count: u64,
    lookup: Vec<HashMap<String, u32>>,
}

impl TryFrom<RawSchema> for CategoricalSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        CategoricalSchema::new(raw.variables)
    }
}

impl From<CategoricalSchema> for RawSchema {
    fn from(s: CategoricalSchema) -> Self {
        RawSchema {
            variables: s.variables,
        }
    }
}

impl PartialEq for CategoricalSchema {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
    }
}

impl Eq for CategoricalSchema {}

impl fmt::Debug for CategoricalSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CategoricalSchema")
            .field("variables", &self.variables)
            .field("cell_count", &self.cell_count)
            .finish()
    }
}

impl CategoricalSchema {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::Schema("schema has no variables".into()));
        }
        let mut seen_names = HashMap::new();
        let mut lookup = Vec::with_capacity(variables.len());
        for (v, var) in variables.iter().enumerate() {
            if seen_names.insert(var.name.as_str(), v).is_some() {
                return Err(Error::Schema(format!(
                    "duplicate variable name {:?}",
                    var.name
                )));
            }
            if var.categories.is_empty() {
                return Err(Error::Schema(format!(
                    "variable {:?} has no categories",
                    var.name
                )));
            }
            if var.categories.len() > u32::MAX as usize {
                return Err(Error::Schema(format!(
                    "variable {:?} has too many categories",
                    var.name
                )));
            }
            let mut map = HashMap::with_capacity(var.categories.len());
            for (c, label) in var.categories.iter().enumerate() {
                if map.insert(label.clone(), c as u32).is_some() {
                    return Err(Error::Schema(format!(
                        "variable {:?} repeats category {:?}",
                        var.name, label
                    )));
                }
            }
            lookup.push(map);
        }

        let mut strides = vec![0u64; variables.len()];
        let mut acc: u64 = 1;
        for (v, var) in variables.iter().enumerate().rev() {
            strides[v] = acc;
            acc = acc
                .checked_mul(var.categories.len() as u64)
                .ok_or_else(|| Error::Schema("cell count overflows 64 bits".into()))?;
        }

        Ok(Self {
            variables,
            strides,
            cell_count: acc,
            lookup,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn arity(&self) -> usize {
        self.variables.len()
    }

    /// Total number of cells `K`.
    pub fn cell_count(&self) -> u64 {
        self.cell_count
    }

    pub fn levels(&self, var: usize) -> usize {
        self.variables[var].categories.len()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn category_index(&self, var: usize, label: &str) -> Option<u32> {
        self.lookup[var].get(label).copied()
    }

    pub fn cell_index(&self, coords: &[u32]) -> Result<CellIndex> {
        if coords.len() != self.arity() {
            return Err(Error::invalid(format!(
                "cell has {} coordinates, schema has {} variables",
                coords.len(),
                self.arity()
            )));
        }
        let mut flat = 0u64;
        for (v, &c) in coords.iter().enumerate() {
            if c as usize >= self.levels(v) {
                return Err(Error::invalid(format!(
                    "category ordinal {c} out of range for variable {:?}",
                    self.variables[v].name
                )));
            }
            flat += c as u64 * self.strides[v];
        }
        Ok(CellIndex(flat))
    }

    pub fn coordinates(&self, cell: CellIndex) -> Vec<u32> {
        let mut rest = cell.0;
        self.strides
            .iter()
            .map(|&s| {
                let c = rest / s;
                rest %= s;
                c as u32
            })
            .collect()
    }

    /// Category ordinal of `var` in `cell`, without materialising all coordinates.
    pub fn coordinate(&self, cell: CellIndex, var: usize) -> u32 {
        ((cell.0 / self.strides[var]) % self.levels(var) as u64) as u32
    }

    pub fn labels(&self, cell: CellIndex) -> Vec<&str> {
        self.coordinates(cell)
            .into_iter()
            .zip(&self.variables)
            .map(|(c, var)| var.categories[c as usize].as_str())
            .collect()
    }

    pub fn describe(&self, cell: CellIndex) -> String {
        self.labels(cell)
            .iter()
            .zip(&self.variables)
            .map(|(l, var)| format!("{}={}", var.name, l))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Resolve one label per variable into a cell index.
    pub fn cell_from_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<CellIndex> {
        let coords = labels
            .iter()
            .enumerate()
            .map(|(v, l)| {
                self.category_index(v, l.as_ref()).ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown label {:?} for variable {:?}",
                        l.as_ref(),
                        self.variables[v].name
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.cell_index(&coords)
    }

    /// Schema restricted to the given variables, in the given order.
    pub fn project(&self, vars: &[usize]) -> Result<CategoricalSchema> {
        CategoricalSchema::new(vars.iter().map(|&v| self.variables[v].clone()).collect())
    }
}

/// Row-major flat ordinal of a cell, in `[0, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex(pub u64);

impl CellIndex {
    pub fn flat(self) -> u64 {
        self.0
    }
}
