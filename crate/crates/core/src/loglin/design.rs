use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::table::CategoricalSchema;

/// Highest-order margins of a hierarchical log-linear model, as sets of
/// variable indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginSpec {
    terms: Vec<Vec<usize>>,
}

impl MarginSpec {
    /// Terms are sorted internally; duplicates are dropped.
    pub fn new(
        schema: &CategoricalSchema,
        terms: impl IntoIterator<Item = Vec<usize>>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for mut t in terms {
            if t.is_empty() {
                return Err(Error::invalid("margin term has no variables"));
            }
            t.sort_unstable();
            if t.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!(
                    "margin term {t:?} repeats a variable"
                )));
            }
            if let Some(&v) = t.iter().find(|&&v| v >= schema.arity()) {
                return Err(Error::invalid(format!("variable index {v} out of range")));
            }
            if seen.insert(t.clone()) {
                out.push(t);
            }
        }
        if out.is_empty() {
            return Err(Error::invalid("margin spec has no terms"));
        }
        Ok(Self { terms: out })
    }

    /// Terms given by variable names.
    pub fn from_names<S: AsRef<str>>(schema: &CategoricalSchema, terms: &[Vec<S>]) -> Result<Self> {
        let resolved = terms
            .iter()
            .map(|t| {
                t.iter()
                    .map(|n| {
                        schema.variable_index(n.as_ref()).ok_or_else(|| {
                            Error::invalid(format!("unknown variable {:?}", n.as_ref()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(schema, resolved)
    }

    /// Parse `"A*B,B*C"` style specs (terms separated by commas, variables by `*`).
    pub fn parse(schema: &CategoricalSchema, text: &str) -> Result<Self> {
        let terms: Vec<Vec<&str>> = text
            .split(',')
            .map(|t| t.split('*').map(str::trim).collect())
            .collect();
        Self::from_names(schema, &terms)
    }

    /// Every interaction of exactly `order` variables (capped at the arity).
    pub fn all_interactions(schema: &CategoricalSchema, order: usize) -> Self {
        let n = schema.arity();
        let order = order.clamp(1, n);
        let mut terms = Vec::new();
        let mut pick = Vec::new();
        combinations(n, order, 0, &mut pick, &mut terms);
        Self { terms }
    }

    /// The single term containing every variable.
    pub fn saturated(schema: &CategoricalSchema) -> Self {
        Self {
            terms: vec![(0..schema.arity()).collect()],
        }
    }

    pub fn terms(&self) -> &[Vec<usize>] {
        &self.terms
    }
}

fn combinations(
    n: usize,
    k: usize,
    start: usize,
    pick: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if pick.len() == k {
        out.push(pick.clone());
        return;
    }
    for v in start..n {
        pick.push(v);
        combinations(n, k, v + 1, pick, out);
        pick.pop();
    }
}

/// Treatment-coded design of the hierarchical closure of a margin spec.
///
/// The first category of every variable is the reference. Each term `T`
/// contributes one column per combination of non-reference categories of
/// its variables.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    /// Closure, ordered by size then lexicographically; starts with `[]`.
    terms: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    levels: Vec<usize>,
    columns: usize,
}

impl Design {
    pub(crate) fn new(schema: &CategoricalSchema, spec: &MarginSpec) -> Self {
        let mut closure: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
        for t in spec.terms() {
            for mask in 0u64..(1u64 << t.len()) {
                let sub: Vec<usize> = t
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &v)| v)
                    .collect();
                closure.insert((sub.len(), sub));
            }
        }
        let terms: Vec<Vec<usize>> = closure.into_iter().map(|(_, t)| t).collect();
        let levels: Vec<usize> = (0..schema.arity()).map(|v| schema.levels(v)).collect();
        let mut offsets = Vec::with_capacity(terms.len());
        let mut columns = 0;
        for t in &terms {
            offsets.push(columns);
            columns += t.iter().map(|&v| levels[v] - 1).product::<usize>();
        }
        Self {
            terms,
            offsets,
            levels,
            columns,
        }
    }

    pub(crate) fn columns(&self) -> usize {
        self.columns
    }

    /// Active columns (all with value one) for a cell's coordinates.
    pub(crate) fn row(&self, coords: &[u32], out: &mut Vec<usize>) {
        out.clear();
        'terms: for (t, term) in self.terms.iter().enumerate() {
            let mut idx = 0;
            for &v in term {
                let c = coords[v] as usize;
                if c == 0 {
                    continue 'terms;
                }
                idx = idx * (self.levels[v] - 1) + (c - 1);
            }
            out.push(self.offsets[t] + idx);
        }
    }

    /// `(term label, parameter label)` for every column.
    pub(crate) fn labels(&self, schema: &CategoricalSchema) -> Vec<(String, String)> {
        let vars = schema.variables();
        let mut out = Vec::with_capacity(self.columns);
        for term in &self.terms {
            let term_label = if term.is_empty() {
                "(Intercept)".to_string()
            } else {
                term.iter()
                    .map(|&v| vars[v].name.as_str())
                    .collect::<Vec<_>>()
                    .join(":")
            };
            let width: usize = term.iter().map(|&v| self.levels[v] - 1).product();
            for mut idx in 0..width {
                if term.is_empty() {
                    out.push((term_label.clone(), term_label.clone()));
                    continue;
                }
                let mut cats = vec![0usize; term.len()];
                for (i, &v) in term.iter().enumerate().rev() {
                    let base = self.levels[v] - 1;
                    cats[i] = idx % base + 1;
                    idx /= base;
                }
                let name = term
                    .iter()
                    .zip(&cats)
                    .map(|(&v, &c)| format!("{}[{}]", vars[v].name, vars[v].categories[c]))
                    .collect::<Vec<_>>()
                    .join(":");
                out.push((term_label.clone(), name));
            }
        }
        out
    }
}

/// Free parameters of the treatment-coded model generated by `spec`.
pub fn parameter_count(schema: &CategoricalSchema, spec: &MarginSpec) -> usize {
    Design::new(schema, spec).columns()
}
