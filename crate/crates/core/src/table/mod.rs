//! Sparse multi-way contingency tables.

mod distribution;
mod io;
mod schema;
mod sparse;

pub use distribution::{CellSizeDistribution, ZeroBasis};
pub use io::{
    labelled_entries, read_microdata, read_table, read_table_with_schema, write_table,
    write_table_to, write_table_with_comments,
};
pub use schema::{CategoricalSchema, CellIndex, Variable};
pub use sparse::{aggregate_microdata, CellPattern, CellState, CellsIn, SparseContingencyTable};
