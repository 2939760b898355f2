//! Saturated per-cell synthesis of a whole table.
//!
//! Every cell draws from its own ChaCha stream: the key depends on the
//! master seed and replicate number, the stream id is the flat cell index.
//! Output is therefore identical under any schedule or thread count.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{sample_count, CountModelSpec, Family};
use crate::table::{CellIndex, CellState, SparseContingencyTable};

/// Cells handled per work unit.
const CHUNK_CELLS: u64 = 1 << 15;

/// How the per-cell work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Chunks of cells spread over the current rayon pool.
    #[cfg(feature = "parallel")]
    Parallel,
}

#[allow(clippy::derivable_impls)]
impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisJob {
    pub model: CountModelSpec,
    /// Number of replicates, at least one.
    pub m: u32,
    pub master_seed: u64,
}

impl SynthesisJob {
    pub fn new(model: CountModelSpec, m: u32, master_seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("replicate count m must be at least 1"));
        }
        // Re-validate in case the spec was built field by field.
        CountModelSpec::new(model.family, model.sigma, model.alpha)?;
        Ok(Self {
            model,
            m,
            master_seed,
        })
    }
}

/// Parameters a synthetic table was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub family: Family,
    pub sigma: f64,
    pub alpha: f64,
    pub m: u32,
    pub seed: u64,
    /// 1-based replicate number.
    pub replicate: u32,
    pub n: u64,
    pub n_syn: u64,
    pub tool_version: String,
}

/// One synthetic replicate with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTable {
    table: SparseContingencyTable,
    provenance: Provenance,
}

impl SyntheticTable {
    pub fn new(table: SparseContingencyTable, provenance: Provenance) -> Self {
        Self { table, provenance }
    }

    pub fn table(&self) -> &SparseContingencyTable {
        &self.table
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Grand total of the synthetic counts.
    pub fn n_syn(&self) -> u64 {
        self.table.total()
    }

    pub fn into_table(self) -> SparseContingencyTable {
        self.table
    }
}

impl AsRef<SparseContingencyTable> for SyntheticTable {
    fn as_ref(&self) -> &SparseContingencyTable {
        &self.table
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator keyed on `(master_seed, replicate)`; cells select streams.
fn replicate_rng(master_seed: u64, replicate: u32) -> ChaCha8Rng {
    let mut state = splitmix64(splitmix64(master_seed) ^ u64::from(replicate));
    let mut key = [0u8; 32];
    for word in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        word.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Generator for one cell of one replicate.
pub fn cell_rng(master_seed: u64, replicate: u32, cell: CellIndex) -> ChaCha8Rng {
    let mut rng = replicate_rng(master_seed, replicate);
    rng.set_stream(cell.flat());
    rng
}

fn synthesize_range(
    table: &SparseContingencyTable,
    model: &CountModelSpec,
    base: &ChaCha8Rng,
    range: std::ops::Range<u64>,
) -> Vec<(CellIndex, u64)> {
    let family = model.effective_family();
    let mut out = Vec::new();
    let mut draw = |cell: CellIndex, mu: f64| {
        let mut rng = base.clone();
        rng.set_stream(cell.flat());
        let x = sample_count(family, mu, model.sigma, &mut rng);
        if x > 0 {
            out.push((cell, x));
        }
    };
    if model.alpha > 0.0 {
        for (cell, state) in table.cells_in(range) {
            match state {
                CellState::Count(f) => draw(cell, f as f64),
                CellState::RandomZero => draw(cell, model.alpha),
                CellState::StructuralZero => {}
            }
        }
    } else {
        // Zero-mean cells are degenerate at zero: only nonzero cells draw.
        let entries = table.entries();
        let lo = entries.partition_point(|&(c, _)| c.flat() < range.start);
        let hi = entries.partition_point(|&(c, _)| c.flat() < range.end);
        for &(cell, f) in &entries[lo..hi] {
            draw(cell, f as f64);
        }
    }
    out
}

/// Draw a single replicate (1-based `replicate`).
pub fn synthesize_replicate(
    table: &SparseContingencyTable,
    job: &SynthesisJob,
    replicate: u32,
    execution: Execution,
) -> SyntheticTable {
    let base = replicate_rng(job.master_seed, replicate);
    let k = table.schema().cell_count();
    let chunks = k.div_ceil(CHUNK_CELLS);
    let range = |i: u64| i * CHUNK_CELLS..((i + 1) * CHUNK_CELLS).min(k);

    let parts: Vec<Vec<(CellIndex, u64)>> = match execution {
        Execution::Sequential => (0..chunks)
            .map(|i| synthesize_range(table, &job.model, &base, range(i)))
            .collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..chunks)
                .into_par_iter()
                .map(|i| synthesize_range(table, &job.model, &base, range(i)))
                .collect()
        }
    };
    let entries: Vec<_> = parts.into_iter().flatten().collect();
    let synthetic = SparseContingencyTable::from_sorted_parts(
        table.schema().clone(),
        entries,
        table.structural_zeros().to_vec(),
    );
    let provenance = Provenance {
        family: job.model.effective_family(),
        sigma: job.model.sigma,
        alpha: job.model.alpha,
        m: job.m,
        seed: job.master_seed,
        replicate,
        n: table.total(),
        n_syn: synthetic.total(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    SyntheticTable::new(synthetic, provenance)
}

/// Draw all `m` replicates with the default execution mode.
pub fn synthesize(table: &SparseContingencyTable, job: &SynthesisJob) -> Vec<SyntheticTable> {
    synthesize_with(table, job, Execution::default())
}

pub fn synthesize_with(
    table: &SparseContingencyTable,
    job: &SynthesisJob,
    execution: Execution,
) -> Vec<SyntheticTable> {
    (1..=job.m)
        .map(|r| synthesize_replicate(table, job, r, execution))
        .collect()
}

/// `E[n_syn] = n + α·(random zeros)`.
pub fn expected_grand_total(table: &SparseContingencyTable, job: &SynthesisJob) -> f64 {
    table.total() as f64 + job.model.alpha * table.random_zero_count() as f64
}

/// Sidecar path for a table file: `x.csv` becomes `x.provenance.json`.
pub fn provenance_path(table_path: impl AsRef<Path>) -> PathBuf {
    table_path.as_ref().with_extension("provenance.json")
}

pub fn write_provenance(provenance: &Provenance, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(provenance)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_provenance(path: impl AsRef<Path>) -> Result<Provenance> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Provenance as `# key=value` report lines.
pub fn provenance_comments(provenance: &Provenance) -> Vec<String> {
    vec![
        format!(
            "family={} sigma={} alpha={} m={} seed={} replicate={}",
            provenance.family,
            provenance.sigma,
            provenance.alpha,
            provenance.m,
            provenance.seed,
            provenance.replicate
        ),
        format!(
            "n={} n_syn={} version={}",
            provenance.n, provenance.n_syn, provenance.tool_version
        ),
    ]
}
