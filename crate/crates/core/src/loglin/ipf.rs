use super::design::MarginSpec;
use super::DESK_CELL_LIMIT;
use crate::error::{Error, Result};
use crate::table::{CellIndex, SparseContingencyTable};

/// Fitted counts under `spec` by iterative proportional fitting.
///
/// Returns dense counts in flat cell order; structural zeros stay at zero.
/// Stops once every margin of every term is within `tol` of the observed
/// margin.
pub fn ipf_fit(
    table: &SparseContingencyTable,
    spec: &MarginSpec,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let schema = table.schema();
    let k = schema.cell_count();
    if k > DESK_CELL_LIMIT {
        return Err(Error::invalid(format!(
            "{k} cells exceeds the dense fitting limit of {DESK_CELL_LIMIT}"
        )));
    }
    if table.total() == 0 {
        return Err(Error::invalid("cannot fit an empty table"));
    }
    let k = k as usize;
    let observed = table.dense_counts();
    let mut fitted: Vec<f64> = (0..k)
        .map(|c| {
            if table.is_structural(CellIndex(c as u64)) {
                0.0
            } else {
                1.0
            }
        })
        .collect();

    // Margin index of every cell for each term.
    let maps: Vec<(usize, Vec<u32>)> = spec
        .terms()
        .iter()
        .map(|term| {
            let size: usize = term.iter().map(|&v| schema.levels(v)).product();
            let idx = (0..k as u64)
                .map(|c| {
                    term.iter().fold(0u32, |acc, &v| {
                        acc * schema.levels(v) as u32 + schema.coordinate(CellIndex(c), v)
                    })
                })
                .collect();
            (size, idx)
        })
        .collect();
    let margins = |values: &[f64], size: usize, idx: &[u32]| {
        let mut m = vec![0.0; size];
        for (x, &i) in values.iter().zip(idx) {
            m[i as usize] += x;
        }
        m
    };
    let observed_margins: Vec<Vec<f64>> = maps
        .iter()
        .map(|(s, idx)| margins(&observed, *s, idx))
        .collect();

    let mut worst = f64::INFINITY;
    for _ in 0..max_iter {
        for ((size, idx), obs) in maps.iter().zip(&observed_margins) {
            let fit = margins(&fitted, *size, idx);
            let scale: Vec<f64> = obs
                .iter()
                .zip(&fit)
                .map(|(&o, &f)| if f > 0.0 { o / f } else { 0.0 })
                .collect();
            for (x, &i) in fitted.iter_mut().zip(idx) {
                *x *= scale[i as usize];
            }
        }
        worst = maps
            .iter()
            .zip(&observed_margins)
            .map(|((size, idx), obs)| {
                margins(&fitted, *size, idx)
                    .iter()
                    .zip(obs)
                    .map(|(f, o)| (f - o).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if worst < tol {
            return Ok(fitted);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        detail: format!("worst margin discrepancy {worst:e}"),
    })
}
