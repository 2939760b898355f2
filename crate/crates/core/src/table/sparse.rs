use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::distribution::{CellSizeDistribution, ZeroBasis};
use super::schema::{CategoricalSchema, CellIndex};
use crate::error::{Error, Result};

/// A multi-way contingency table stored sparsely.
///
/// Only nonzero counts are kept; zero cells are implicit. Structural zeros
/// are listed explicitly and can never hold a count. Both lists are sorted
/// by flat index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseContingencyTable {
    schema: CategoricalSchema,
    entries: Vec<(CellIndex, u64)>,
    structural: Vec<CellIndex>,
    total: u64,
}

/// Pattern over category labels. A cell matches when, for every listed
/// variable, its category is one of the listed labels. Unlisted variables
/// match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellPattern(pub BTreeMap<String, Vec<String>>);

impl CellPattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, variable: impl Into<String>, labels: &[&str]) -> Self {
        self.0.insert(
            variable.into(),
            labels.iter().map(|s| s.to_string()).collect(),
        );
        self
    }

    /// Resolve into per-variable allowed ordinals (`None` = wildcard).
    fn resolve(&self, schema: &CategoricalSchema) -> Result<Vec<Option<Vec<u32>>>> {
        let mut allowed = vec![None; schema.arity()];
        for (name, labels) in &self.0 {
            let v = schema.variable_index(name).ok_or_else(|| {
                Error::invalid(format!("rule references unknown variable {name:?}"))
            })?;
            let mut ords = labels
                .iter()
                .map(|l| {
                    schema.category_index(v, l).ok_or_else(|| {
                        Error::invalid(format!(
                            "rule references unknown category {l:?} of {name:?}"
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ords.sort_unstable();
            ords.dedup();
            allowed[v] = Some(ords);
        }
        Ok(allowed)
    }
}

/// Classification of a single cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Count(u64),
    RandomZero,
    StructuralZero,
}

impl SparseContingencyTable {
    /// Build a table, validating cells and rejecting duplicates.
    pub fn new(
        schema: CategoricalSchema,
        counts: impl IntoIterator<Item = (CellIndex, u64)>,
        structural: impl IntoIterator<Item = CellIndex>,
    ) -> Result<Self> {
        let k = schema.cell_count();
        let mut entries: Vec<(CellIndex, u64)> =
            counts.into_iter().filter(|&(_, c)| c > 0).collect();
        let mut structural: Vec<CellIndex> = structural.into_iter().collect();
        entries.sort_unstable_by_key(|&(c, _)| c);
        structural.sort_unstable();

        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!(
                    "duplicate cell {}",
                    schema.describe(w[0].0)
                )));
            }
        }
        structural.dedup();
        if let Some(&(c, _)) = entries.last() {
            if c.0 >= k {
                return Err(Error::invalid(format!("cell index {} out of range", c.0)));
            }
        }
        if let Some(&c) = structural.last() {
            if c.0 >= k {
                return Err(Error::invalid(format!("cell index {} out of range", c.0)));
            }
        }
        let clash = conflicts(&entries, &structural);
        if !clash.is_empty() {
            return Err(Error::StructuralZeroConflict {
                cells: clash.iter().map(|&c| schema.describe(c)).collect(),
            });
        }
        let total = entries
            .iter()
            .try_fold(0u64, |acc, &(_, c)| acc.checked_add(c))
            .ok_or_else(|| Error::invalid("grand total overflows 64 bits"))?;
        Ok(Self {
            schema,
            entries,
            structural,
            total,
        })
    }

    /// Table with no counts and no structural zeros.
    pub fn empty(schema: CategoricalSchema) -> Self {
        Self {
            schema,
            entries: Vec::new(),
            structural: Vec::new(),
            total: 0,
        }
    }

    /// Internal constructor for callers that already hold sorted, valid parts.
    pub(crate) fn from_sorted_parts(
        schema: CategoricalSchema,
        entries: Vec<(CellIndex, u64)>,
        structural: Vec<CellIndex>,
    ) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|&(_, c)| c > 0));
        let total = entries.iter().map(|&(_, c)| c).sum();
        Self {
            schema,
            entries,
            structural,
            total,
        }
    }

    pub fn schema(&self) -> &CategoricalSchema {
        &self.schema
    }

    /// Nonzero cells, sorted by flat index.
    pub fn entries(&self) -> &[(CellIndex, u64)] {
        &self.entries
    }

    pub fn structural_zeros(&self) -> &[CellIndex] {
        &self.structural
    }

    /// Grand total `n`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn nonzero_cells(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn random_zero_count(&self) -> u64 {
        self.schema.cell_count() - self.nonzero_cells() - self.structural.len() as u64
    }

    /// Cells that are not structural zeros.
    pub fn eligible_cells(&self) -> u64 {
        self.schema.cell_count() - self.structural.len() as u64
    }

    pub fn count(&self, cell: CellIndex) -> u64 {
        match self.entries.binary_search_by_key(&cell, |&(c, _)| c) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn is_structural(&self, cell: CellIndex) -> bool {
        self.structural.binary_search(&cell).is_ok()
    }

    pub fn state(&self, cell: CellIndex) -> CellState {
        match self.count(cell) {
            0 if self.is_structural(cell) => CellState::StructuralZero,
            0 => CellState::RandomZero,
            c => CellState::Count(c),
        }
    }

    /// Every cell in `range` (flat indices) with its state, in flat order.
    pub fn cells_in(&self, range: Range<u64>) -> CellsIn<'_> {
        let start = CellIndex(range.start);
        let e = self.entries.partition_point(|&(c, _)| c < start);
        let s = self.structural.partition_point(|&c| c < start);
        CellsIn {
            table: self,
            next: range.start,
            end: range.end.min(self.schema.cell_count()),
            entry_pos: e,
            structural_pos: s,
        }
    }

    /// Every cell of the table with its state, in flat order.
    pub fn cells(&self) -> CellsIn<'_> {
        self.cells_in(0..self.schema.cell_count())
    }

    pub fn cell_size_distribution(&self, basis: ZeroBasis) -> CellSizeDistribution {
        let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
        for &(_, c) in &self.entries {
            *freq.entry(c).or_default() += 1;
        }
        let (zeros, cells) = match basis {
            ZeroBasis::RandomOnly => (self.random_zero_count(), self.eligible_cells()),
            ZeroBasis::AllZeros => (
                self.schema.cell_count() - self.nonzero_cells(),
                self.schema.cell_count(),
            ),
        };
        if zeros > 0 {
            freq.insert(0, zeros);
        }
        CellSizeDistribution::from_frequencies(freq, cells, basis)
    }

    /// Move every zero cell matched by `rules` into the structural-zero set.
    pub fn mark_structural_zeros(&self, rules: &[CellPattern]) -> Result<Self> {
        let mut structural = self.structural.clone();
        let mut offending = Vec::new();
        for rule in rules {
            let allowed = rule.resolve(&self.schema)?;
            for_each_match(&self.schema, &allowed, |cell| {
                if self.count(cell) > 0 {
                    offending.push(cell);
                } else {
                    structural.push(cell);
                }
            });
        }
        if !offending.is_empty() {
            offending.sort_unstable();
            offending.dedup();
            return Err(Error::StructuralZeroConflict {
                cells: offending.iter().map(|&c| self.schema.describe(c)).collect(),
            });
        }
        structural.sort_unstable();
        structural.dedup();
        Ok(Self {
            schema: self.schema.clone(),
            entries: self.entries.clone(),
            structural,
            total: self.total,
        })
    }

    /// Collapse onto a subset of variables by summing counts.
    ///
    /// A marginal cell is structural only when every cell folded into it is.
    pub fn marginalize(&self, vars: &[usize]) -> Result<Self> {
        if vars.is_empty() {
            return Err(Error::invalid("marginal needs at least one variable"));
        }
        for &v in vars {
            if v >= self.schema.arity() {
                return Err(Error::invalid(format!("variable index {v} out of range")));
            }
        }
        let mut sorted = vars.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != vars.len() {
            return Err(Error::invalid("marginal repeats a variable"));
        }
        let target = self.schema.project(vars)?;
        let project = |cell: CellIndex| -> CellIndex {
            let coords: Vec<u32> = vars
                .iter()
                .map(|&v| self.schema.coordinate(cell, v))
                .collect();
            target
                .cell_index(&coords)
                .expect("projected coordinates are in range")
        };

        let mut counts: BTreeMap<CellIndex, u64> = BTreeMap::new();
        for &(cell, c) in &self.entries {
            *counts.entry(project(cell)).or_default() += c;
        }
        let mut structural = Vec::new();
        if !self.structural.is_empty() {
            let fold = self.schema.cell_count() / target.cell_count();
            let mut hits: BTreeMap<CellIndex, u64> = BTreeMap::new();
            for &cell in &self.structural {
                *hits.entry(project(cell)).or_default() += 1;
            }
            structural = hits
                .into_iter()
                .filter(|&(_, h)| h == fold)
                .map(|(c, _)| c)
                .collect();
        }
        Ok(Self::from_sorted_parts(
            target,
            counts.into_iter().collect(),
            structural,
        ))
    }

    /// Dense counts over all `K` cells (desk-scale tables only).
    pub fn dense_counts(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.schema.cell_count() as usize];
        for &(c, n) in &self.entries {
            out[c.0 as usize] = n as f64;
        }
        out
    }
}

impl AsRef<SparseContingencyTable> for SparseContingencyTable {
    fn as_ref(&self) -> &SparseContingencyTable {
        self
    }
}

fn conflicts(entries: &[(CellIndex, u64)], structural: &[CellIndex]) -> Vec<CellIndex> {
    structural
        .iter()
        .copied()
        .filter(|c| entries.binary_search_by_key(c, |&(e, _)| e).is_ok())
        .collect()
}

fn for_each_match(
    schema: &CategoricalSchema,
    allowed: &[Option<Vec<u32>>],
    mut f: impl FnMut(CellIndex),
) {
    let choices: Vec<Vec<u32>> = allowed
        .iter()
        .enumerate()
        .map(|(v, a)| match a {
            Some(ords) => ords.clone(),
            None => (0..schema.levels(v) as u32).collect(),
        })
        .collect();
    if choices.iter().any(Vec::is_empty) {
        return;
    }
    let mut pos = vec![0usize; choices.len()];
    loop {
        let coords: Vec<u32> = pos.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        f(schema
            .cell_index(&coords)
            .expect("pattern coordinates are in range"));
        let mut v = choices.len();
        loop {
            if v == 0 {
                return;
            }
            v -= 1;
            pos[v] += 1;
            if pos[v] < choices[v].len() {
                break;
            }
            pos[v] = 0;
        }
    }
}

/// Iterator over cells in flat order, produced by [`SparseContingencyTable::cells_in`].
pub struct CellsIn<'a> {
    table: &'a SparseContingencyTable,
    next: u64,
    end: u64,
    entry_pos: usize,
    structural_pos: usize,
}

impl Iterator for CellsIn<'_> {
    type Item = (CellIndex, CellState);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let cell = CellIndex(self.next);
        self.next += 1;
        if let Some(&(c, n)) = self.table.entries.get(self.entry_pos) {
            if c == cell {
                self.entry_pos += 1;
                return Some((cell, CellState::Count(n)));
            }
        }
        if let Some(&c) = self.table.structural.get(self.structural_pos) {
            if c == cell {
                self.structural_pos += 1;
                return Some((cell, CellState::StructuralZero));
            }
        }
        Some((cell, CellState::RandomZero))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next) as usize;
        (left, Some(left))
    }
}

/// Cross-tabulate label records into a table.
///
/// Records are numbered from 1 in error messages.
pub fn aggregate_microdata<I, R, S>(
    records: I,
    schema: &CategoricalSchema,
) -> Result<SparseContingencyTable>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[S]>,
    S: AsRef<str>,
{
    let arity = schema.arity();
    let mut counts: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
    let mut coords = vec![0u32; arity];
    for (i, rec) in records.into_iter().enumerate() {
        let rec = rec.as_ref();
        if rec.len() != arity {
            return Err(Error::RaggedRecord {
                record: i + 1,
                expected: arity,
                found: rec.len(),
            });
        }
        for (v, label) in rec.iter().enumerate() {
            let label = label.as_ref();
            coords[v] = schema
                .category_index(v, label)
                .ok_or_else(|| Error::UnknownLabel {
                    record: i + 1,
                    variable: schema.variables()[v].name.clone(),
                    label: label.to_string(),
                })?;
        }
        let cell = schema.cell_index(&coords)?;
        *counts.entry(cell.0).or_default() += 1;
    }
    let mut entries: Vec<(CellIndex, u64)> =
        counts.into_iter().map(|(c, n)| (CellIndex(c), n)).collect();
    entries.sort_unstable_by_key(|&(c, _)| c);
    Ok(SparseContingencyTable::from_sorted_parts(
        schema.clone(),
        entries,
        Vec::new(),
    ))
}
