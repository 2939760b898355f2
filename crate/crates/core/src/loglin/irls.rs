use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{Design, MarginSpec};
use super::DESK_CELL_LIMIT;
use crate::error::{Error, Result};
use crate::table::{CellIndex, SparseContingencyTable};

/// Default magnitude at which diverging coefficients are frozen.
pub const DEFAULT_CAP: f64 = 20.0;

const MAX_ITER: usize = 100;
const DEVIANCE_TOL: f64 = 1e-10;
const POLISH_STEPS: usize = 3;
const ALIAS_TOL: f64 = 1e-9;

/// One coefficient of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    /// Model term, e.g. `A:B`.
    pub term: String,
    /// Column label, e.g. `A[a2]:B[b3]`.
    pub name: String,
    pub estimate: f64,
    /// Infinite for capped coefficients.
    pub se: f64,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoglinFit {
    pub parameters: Vec<Parameter>,
    /// Expected counts in flat cell order.
    pub fitted: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub log_likelihood: f64,
    /// Largest absolute score component over the free coefficients.
    pub score_max: f64,
}

impl LoglinFit {
    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Coefficients frozen at the cap.
    pub fn cap_hit(&self) -> Vec<&str> {
        self.parameters
            .iter()
            .filter(|p| p.capped)
            .map(|p| p.name.as_str())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "term,parameter,estimate,se,capped")?;
        for p in &self.parameters {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.term, p.name, p.estimate, p.se, p.capped
            )?;
        }
        Ok(())
    }
}

/// Poisson log-linear model `log μ = Xβ` over the non-structural cells of
/// a table, with treatment coding.
#[derive(Debug, Clone)]
pub struct LoglinModel {
    labels: Vec<(String, String)>,
    /// Active design columns per included cell.
    rows: Vec<Vec<usize>>,
    /// Flat index of each included cell.
    cells: Vec<usize>,
    y: Vec<f64>,
    columns: usize,
    cell_count: usize,
}

impl LoglinModel {
    pub fn new(table: &SparseContingencyTable, spec: &MarginSpec) -> Result<Self> {
        let schema = table.schema();
        let k = schema.cell_count();
        if k > DESK_CELL_LIMIT {
            return Err(Error::invalid(format!(
                "{k} cells exceeds the dense fitting limit of {DESK_CELL_LIMIT}"
            )));
        }
        let design = Design::new(schema, spec);
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        let mut y = Vec::new();
        let mut buf = Vec::new();
        for c in 0..k {
            let cell = CellIndex(c);
            if table.is_structural(cell) {
                continue;
            }
            design.row(&schema.coordinates(cell), &mut buf);
            rows.push(buf.clone());
            cells.push(c as usize);
            y.push(table.count(cell) as f64);
        }
        Ok(Self {
            labels: design.labels(schema),
            rows,
            cells,
            y,
            columns: design.columns(),
            cell_count: k as usize,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.columns
    }

    pub fn parameter_names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|(_, n)| n.as_str())
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&c| beta[c]).sum())
            .collect()
    }

    /// `Σ y log μ − μ − log y!`.
    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        self.eta(beta)
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| y * e - e.exp() - libm::lgamma(y + 1.0))
            .sum()
    }

    /// Gradient of the log-likelihood, `Xᵀ(y − μ)`.
    pub fn score(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.columns];
        for ((r, e), &y) in self.rows.iter().zip(self.eta(beta)).zip(&self.y) {
            let resid = y - e.exp();
            for &c in r {
                g[c] += resid;
            }
        }
        g
    }

    fn deviance(&self, eta: &[f64]) -> f64 {
        2.0 * eta
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| {
                let mu = e.exp();
                let term = if y > 0.0 { y * (y.ln() - e) } else { 0.0 };
                term - (y - mu)
            })
            .sum::<f64>()
    }

    /// Weighted cross-product `Σ w_i x_i x_iᵀ` restricted to `free` columns.
    fn cross_product(
        &self,
        weights: &[f64],
        position: &[Option<usize>],
        n_free: usize,
    ) -> DMatrix<f64> {
        let mut a = DMatrix::<f64>::zeros(n_free, n_free);
        let mut cols = Vec::new();
        for (r, &w) in self.rows.iter().zip(weights) {
            cols.clear();
            cols.extend(r.iter().filter_map(|&c| position[c]));
            for &i in &cols {
                for &j in &cols {
                    a[(i, j)] += w;
                }
            }
        }
        a
    }

    /// Columns that are linear combinations of earlier ones.
    fn aliased_columns(&self) -> Vec<usize> {
        let position: Vec<Option<usize>> = (0..self.columns).map(Some).collect();
        let gram = self.cross_product(&vec![1.0; self.rows.len()], &position, self.columns);
        let p = self.columns;
        let mut l = DMatrix::<f64>::zeros(p, p);
        let mut aliased = Vec::new();
        for j in 0..p {
            let mut d = gram[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= ALIAS_TOL * gram[(j, j)].max(1.0) {
                aliased.push(j);
                continue;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..p {
                let mut s = gram[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        aliased
    }

    /// Maximum-likelihood fit by IRLS. Coefficients falling below `-cap`
    /// are frozen there, flagged, and given an infinite standard error.
    pub fn fit(&self, cap: f64) -> Result<LoglinFit> {
        if !(cap > 0.0) {
            return Err(Error::invalid(format!("cap must be positive, got {cap}")));
        }
        let aliased = self.aliased_columns();
        if !aliased.is_empty() {
            return Err(Error::RankDeficient {
                terms: aliased.iter().map(|&c| self.labels[c].1.clone()).collect(),
            });
        }
        let p = self.columns;
        let mut beta = vec![0.0; p];
        let mut frozen = vec![false; p];
        // Standard GLM start: μ = y + 0.1.
        let mut eta: Vec<f64> = self.y.iter().map(|&y| (y + 0.1).ln()).collect();
        let mut dev_old = f64::INFINITY;
        let mut polish = 0;
        let mut iterations = 0;

        loop {
            iterations += 1;
            if iterations > MAX_ITER {
                let g = self.score(&beta);
                let norm = free_max(&g, &frozen);
                return Err(Error::NotConverged {
                    iterations: MAX_ITER,
                    detail: format!("last score max norm {norm:e}"),
                });
            }
            let position = free_positions(&frozen);
            let n_free = position.iter().flatten().count();
            let weights: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
            let a = self.cross_product(&weights, &position, n_free);
            let mut b = DVector::<f64>::zeros(n_free);
            for (((r, &e), &w), &y) in self.rows.iter().zip(&eta).zip(&weights).zip(&self.y) {
                let offset: f64 = r.iter().filter(|&&c| frozen[c]).map(|&c| beta[c]).sum();
                let z = e - offset + (y - w) / w;
                for &c in r {
                    if let Some(i) = position[c] {
                        b[i] += w * z;
                    }
                }
            }
            let chol = a.cholesky().ok_or_else(|| {
                Error::Solver("weighted normal equations are not positive definite".into())
            })?;
            let step = chol.solve(&b);
            let mut proposal = beta.clone();
            for c in 0..p {
                if let Some(i) = position[c] {
                    proposal[c] = step[i];
                }
            }
            let mut new_eta = self.eta(&proposal);
            let mut dev = self.deviance(&new_eta);
            // Halve the step while the deviance is not finite or grows.
            let mut halvings = 0;
            while (!dev.is_finite() || dev > dev_old * (1.0 + 1e-12) + 1e-12)
                && dev_old.is_finite()
                && halvings < 30
            {
                for c in 0..p {
                    proposal[c] = 0.5 * (proposal[c] + beta[c]);
                }
                new_eta = self.eta(&proposal);
                dev = self.deviance(&new_eta);
                halvings += 1;
            }
            beta = proposal;
            let mut newly_frozen = false;
            for c in 0..p {
                if !frozen[c] && beta[c] < -cap {
                    beta[c] = -cap;
                    frozen[c] = true;
                    newly_frozen = true;
                }
            }
            if newly_frozen {
                new_eta = self.eta(&beta);
                dev = self.deviance(&new_eta);
                polish = 0;
            }
            eta = new_eta;
            let change = (dev - dev_old).abs() / (dev.abs() + 0.1);
            dev_old = dev;
            if !newly_frozen && change < DEVIANCE_TOL {
                polish += 1;
                if polish > POLISH_STEPS {
                    break;
                }
            }
        }

        let position = free_positions(&frozen);
        let n_free = position.iter().flatten().count();
        let weights: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let info = self.cross_product(&weights, &position, n_free);
        let cov = info
            .cholesky()
            .ok_or_else(|| Error::Solver("information matrix is not positive definite".into()))?
            .inverse();
        let parameters = (0..p)
            .map(|c| Parameter {
                term: self.labels[c].0.clone(),
                name: self.labels[c].1.clone(),
                estimate: beta[c],
                se: position[c].map_or(f64::INFINITY, |i| cov[(i, i)].sqrt()),
                capped: frozen[c],
            })
            .collect();
        let mut fitted = vec![0.0; self.cell_count];
        for (&cell, &mu) in self.cells.iter().zip(&weights) {
            fitted[cell] = mu;
        }
        let score = self.score(&beta);
        Ok(LoglinFit {
            parameters,
            fitted,
            converged: true,
            iterations,
            deviance: dev_old,
            log_likelihood: self.log_likelihood(&beta),
            score_max: free_max(&score, &frozen),
        })
    }
}

fn free_positions(frozen: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    frozen
        .iter()
        .map(|&f| {
            (!f).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn free_max(g: &[f64], frozen: &[bool]) -> f64 {
    g.iter()
        .zip(frozen)
        .filter(|(_, &f)| !f)
        .map(|(x, _)| x.abs())
        .fold(0.0, f64::max)
}

/// Fit the hierarchical model generated by `spec`.
pub fn fit_loglinear(
    table: &SparseContingencyTable,
    spec: &MarginSpec,
    cap: f64,
) -> Result<LoglinFit> {
    LoglinModel::new(table, spec)?.fit(cap)
}
