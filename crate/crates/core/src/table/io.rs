//! Aggregated-table CSV format.
//!
//! ```text
//! #schema {"variables":[{"name":"A","categories":["a","b"]},...]}
//! A,B,count,structural
//! a,x,2,0
//! b,y,0,1
//! ```
//!
//! The `#schema` line carries the full category lists so that cells with no
//! row still count towards `K`. Other lines starting with `#` are comments.
//! Zero-count rows are optional, except structural zeros, which must appear
//! with `count = 0` and `structural = 1`. [`write_table`] emits the canonical
//! form: schema line, header, then nonzero and structural cells in flat order.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::schema::{CategoricalSchema, Variable};
use super::sparse::SparseContingencyTable;
use crate::error::{Error, Result};

const SCHEMA_PREFIX: &str = "#schema ";

pub fn write_table(table: &SparseContingencyTable, path: impl AsRef<Path>) -> Result<()> {
    write_table_with_comments(table, path, &[])
}

/// Write `table`, preceded by `# `-prefixed comment lines.
pub fn write_table_with_comments(
    table: &SparseContingencyTable,
    path: impl AsRef<Path>,
    comments: &[String],
) -> Result<()> {
    let file = fs::File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);
    write_table_to(table, &mut out, comments)?;
    out.flush()?;
    Ok(())
}

pub fn write_table_to<W: Write>(
    table: &SparseContingencyTable,
    out: &mut W,
    comments: &[String],
) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(
        out,
        "{SCHEMA_PREFIX}{}",
        serde_json::to_string(table.schema())?
    )?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let schema = table.schema();
    let mut header: Vec<&str> = schema.variables().iter().map(|v| v.name.as_str()).collect();
    header.extend(["count", "structural"]);
    w.write_record(&header).map_err(csv_io)?;

    let mut nz = table.entries().iter().peekable();
    let mut sz = table.structural_zeros().iter().peekable();
    loop {
        let take_nz = match (nz.peek(), sz.peek()) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(&&(a, _)), Some(&&b)) => a < b,
        };
        let (cell, count, flag) = if take_nz {
            let &(c, n) = nz.next().unwrap();
            (c, n, "0")
        } else {
            (*sz.next().unwrap(), 0, "1")
        };
        let mut row: Vec<String> = schema
            .labels(cell)
            .into_iter()
            .map(str::to_string)
            .collect();
        row.push(count.to_string());
        row.push(flag.to_string());
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Read a table. Uses the embedded `#schema` line when present; otherwise the
/// categories of each variable are inferred in order of first appearance.
pub fn read_table(path: impl AsRef<Path>) -> Result<SparseContingencyTable> {
    read_table_impl(path.as_ref(), None)
}

/// Read a table against a known schema; an embedded schema must agree with it.
pub fn read_table_with_schema(
    path: impl AsRef<Path>,
    schema: &CategoricalSchema,
) -> Result<SparseContingencyTable> {
    read_table_impl(path.as_ref(), Some(schema))
}

struct Row {
    line: usize,
    labels: Vec<String>,
    count: u64,
    structural: bool,
}

fn read_table_impl(
    path: &Path,
    external: Option<&CategoricalSchema>,
) -> Result<SparseContingencyTable> {
    let text = fs::read_to_string(path)?;
    let mut embedded = None;
    let mut skipped = 0usize;
    for line in text.lines() {
        if let Some(json) = line.strip_prefix(SCHEMA_PREFIX) {
            let s: CategoricalSchema = serde_json::from_str(json)
                .map_err(|e| Error::parse(path, skipped + 1, format!("bad schema: {e}")))?;
            embedded = Some(s);
        } else if !line.starts_with('#') {
            break;
        }
        skipped += 1;
    }
    let body_offset = text
        .lines()
        .take(skipped)
        .map(|l| l.len() + 1)
        .sum::<usize>()
        .min(text.len());
    let body = &text[body_offset..];

    let schema_hint = match (external, embedded.as_ref()) {
        (Some(ext), Some(emb)) if ext != emb => {
            return Err(Error::SchemaMismatch(format!(
                "{} embeds a schema that differs from the one supplied",
                path.display()
            )))
        }
        (Some(ext), _) => Some(ext.clone()),
        (None, emb) => emb.cloned(),
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(body.as_bytes());
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::parse(path, skipped + 1, e.to_string()))?,
        None => return Err(Error::parse(path, skipped + 1, "missing header row")),
    };
    let header_line = header.position().map(|p| p.line() as usize).unwrap_or(1) + skipped;
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() < 3
        || fields[fields.len() - 2] != "count"
        || fields[fields.len() - 1] != "structural"
    {
        return Err(Error::parse(
            path,
            header_line,
            "header must be var1,...,varp,count,structural",
        ));
    }
    let names: Vec<String> = fields[..fields.len() - 2]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let Some(s) = &schema_hint {
        let expected: Vec<&str> = s.variables().iter().map(|v| v.name.as_str()).collect();
        if expected != names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::parse(
                path,
                header_line,
                format!("header variables {names:?} do not match schema {expected:?}"),
            ));
        }
    }
    let arity = names.len();

    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0) + skipped;
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0) + skipped;
        if rec.len() != arity + 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", arity + 2, rec.len()),
            ));
        }
        let count_text = rec[arity].trim();
        let count: u64 = count_text.parse().map_err(|_| {
            let why = if count_text.starts_with('-') {
                "negative count"
            } else if !count_text.is_empty() && count_text.bytes().all(|b| b.is_ascii_digit()) {
                "count overflows 64 bits"
            } else {
                "count is not a nonnegative integer"
            };
            Error::parse(path, line, format!("{why}: {count_text:?}"))
        })?;
        let structural = match rec[arity + 1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("structural flag must be 0 or 1, got {other:?}"),
                ))
            }
        };
        if structural && count != 0 {
            return Err(Error::parse(
                path,
                line,
                "structural zero with nonzero count",
            ));
        }
        rows.push(Row {
            line,
            labels: rec.iter().take(arity).map(str::to_string).collect(),
            count,
            structural,
        });
    }

    let schema = match schema_hint {
        Some(s) => s,
        None => infer_schema(path, &names, &rows)?,
    };

    let mut seen: HashMap<u64, usize> = HashMap::with_capacity(rows.len());
    let mut entries = Vec::new();
    let mut structural = Vec::new();
    let mut total: u64 = 0;
    for row in &rows {
        let cell = schema
            .cell_from_labels(&row.labels)
            .map_err(|e| Error::parse(path, row.line, e.to_string()))?;
        if let Some(first) = seen.insert(cell.0, row.line) {
            return Err(Error::parse(
                path,
                row.line,
                format!(
                    "duplicate cell {} (first seen on line {first})",
                    schema.describe(cell)
                ),
            ));
        }
        if row.structural {
            structural.push(cell);
        } else if row.count > 0 {
            total = total
                .checked_add(row.count)
                .ok_or_else(|| Error::parse(path, row.line, "grand total overflows 64 bits"))?;
            entries.push((cell, row.count));
        }
    }
    entries.sort_unstable_by_key(|&(c, _)| c);
    structural.sort_unstable();
    Ok(SparseContingencyTable::from_sorted_parts(
        schema, entries, structural,
    ))
}

fn infer_schema(path: &Path, names: &[String], rows: &[Row]) -> Result<CategoricalSchema> {
    let mut cats: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    let mut seen: Vec<HashMap<&str, ()>> = vec![HashMap::new(); names.len()];
    for row in rows {
        for (v, l) in row.labels.iter().enumerate() {
            if seen[v].insert(l.as_str(), ()).is_none() {
                cats[v].push(l.clone());
            }
        }
    }
    let vars = names
        .iter()
        .zip(cats)
        .map(|(n, c)| Variable::new(n.clone(), c))
        .collect();
    CategoricalSchema::new(vars).map_err(|e| Error::parse(path, 1, e.to_string()))
}

/// Read microdata records (header row of variable names, one record per row).
///
/// Columns are matched to the schema by name, so their order may differ.
pub fn read_microdata(
    path: impl AsRef<Path>,
    schema: &CategoricalSchema,
) -> Result<SparseContingencyTable> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let mut order = Vec::with_capacity(schema.arity());
    for var in schema.variables() {
        let pos = header.iter().position(|h| h == var.name).ok_or_else(|| {
            Error::parse(path, 1, format!("microdata lacks column {:?}", var.name))
        })?;
        order.push(pos);
    }
    if header.len() != schema.arity() {
        return Err(Error::parse(
            path,
            1,
            format!(
                "microdata has {} columns, schema has {} variables",
                header.len(),
                schema.arity()
            ),
        ));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRecord {
                record: i + 1,
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(order.iter().map(|&p| rec[p].to_string()).collect());
    }
    super::sparse::aggregate_microdata(rows, schema)
}

/// Convenience for tests and tools: all cells as `(labels, count)` in flat order.
pub fn labelled_entries(table: &SparseContingencyTable) -> Vec<(Vec<String>, u64)> {
    table
        .entries()
        .iter()
        .map(|&(c, n)| {
            (
                table
                    .schema()
                    .labels(c)
                    .into_iter()
                    .map(str::to_string)
                    .collect(),
                n,
            )
        })
        .collect()
}
