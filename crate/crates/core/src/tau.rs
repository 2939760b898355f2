//! The τ risk metrics.
//!
//! * `τ1(k)`: proportion of synthetic cells of size `k`
//! * `τ2(k)`: proportion of original cells of size `k`
//! * `τ3(k)`: proportion of original size-`k` cells synthesized to `k`
//! * `τ4(k)`: proportion of synthetic size-`k` cells that were size `k`
//!
//! Analytic values follow from the model and `τ2`; empirical values are
//! counted from original/synthetic pairs. Structural zeros never enter
//! either.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    bessel_k_half_scaled, ln_bessel_k_half, ln_pmf, pmf, pmf_table, CountModelSpec, Family,
};
use crate::table::{CellSizeDistribution, SparseContingencyTable};

/// Default `k` range of a report, `0..=3`.
pub const DEFAULT_K_REPORT: u64 = 3;

fn check_model(model: &CountModelSpec) -> Result<()> {
    CountModelSpec::new(model.family, model.sigma, model.alpha).map(|_| ())
}

/// Synthetic mean of an original cell of size `j`.
fn cell_mean(model: &CountModelSpec, j: u64) -> f64 {
    if j == 0 {
        model.alpha
    } else {
        j as f64
    }
}

/// `τ1(k) = pmf(k|α)·τ2(0) + Σ_j pmf(k|j)·τ2(j)` over the support of `τ2`.
pub fn tau1_expected(dist: &CellSizeDistribution, model: &CountModelSpec, k: u64) -> Result<f64> {
    check_model(model)?;
    let mut sum = 0.0;
    for (j, p) in dist.iter() {
        sum += pmf(model.family, k, cell_mean(model, j), model.sigma)? * p;
    }
    Ok(sum)
}

/// `τ1(0..=k_max)` in one pass over the support.
pub fn tau1_expected_all(
    dist: &CellSizeDistribution,
    model: &CountModelSpec,
    k_max: u64,
) -> Result<Vec<f64>> {
    check_model(model)?;
    let mut out = vec![0.0; k_max as usize + 1];
    for (j, p) in dist.iter() {
        let table = pmf_table(model.family, cell_mean(model, j), model.sigma, k_max)?;
        for (o, q) in out.iter_mut().zip(table) {
            *o += q * p;
        }
    }
    Ok(out)
}

/// `τ3(0) = pmf(0|α)`, `τ3(k) = pmf(k|k)` for `k ≥ 1`.
pub fn tau3_expected(model: &CountModelSpec, k: u64) -> Result<f64> {
    check_model(model)?;
    pmf(model.family, k, cell_mean(model, k), model.sigma)
}

/// `τ4(k) = τ3(k)·τ2(k)/τ1(k)`.
pub fn tau4_expected(dist: &CellSizeDistribution, model: &CountModelSpec, k: u64) -> Result<f64> {
    let t1 = tau1_expected(dist, model, k)?;
    if t1 <= 0.0 {
        return Err(Error::Undefined(format!(
            "τ1({k}) = 0, so τ4({k}) is undefined"
        )));
    }
    Ok(tau3_expected(model, k)? * dist.proportion(k) / t1)
}

/// `τ4(k)` from the family-specific forms with the constants cancelled.
///
/// Each term is a weight `w(μ)` proportional to `pmf(k|μ)`; the quotient is
/// `w(k)·τ2(k) / Σ_j w(μ_j)·τ2(j)`. Weights are combined in log space.
/// Independent of [`tau4_expected`] and used to cross-check it.
pub fn tau4_cancelled(dist: &CellSizeDistribution, model: &CountModelSpec, k: u64) -> Result<f64> {
    check_model(model)?;
    let family = model.effective_family();
    let sigma = model.sigma;
    let kf = k as f64;
    let ln_w = |mu: f64| -> Result<f64> {
        if mu == 0.0 && k > 0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(match family {
            // μ^k e^{-μ}
            Family::Poisson if mu == 0.0 => 0.0,
            Family::Poisson => kf * mu.ln() - mu,
            // μ^k / (1 + μσ)^{k + 1/σ}
            Family::Nbi if mu == 0.0 => 0.0,
            Family::Nbi => kf * mu.ln() - (kf + 1.0 / sigma) * (mu * sigma).ln_1p(),
            Family::Pig => {
                let c = (1.0 / (sigma * sigma) + 2.0 * mu / sigma).sqrt();
                if k == 0 {
                    // e^{-c}
                    -c
                } else {
                    // c^{1/2-k} μ^k K_{k-1/2}(c)
                    let scaled = bessel_k_half_scaled(k as i64, c)?;
                    let ln_k = if scaled.is_finite() {
                        scaled.ln() - c
                    } else {
                        ln_bessel_k_half(k as i64, c)?
                    };
                    (0.5 - kf) * c.ln() + kf * mu.ln() + ln_k
                }
            }
        })
    };
    let numerator_p = dist.proportion(k);
    if numerator_p == 0.0 {
        return Ok(0.0);
    }
    let terms: Vec<f64> = dist
        .iter()
        .map(|(j, p)| Ok(ln_w(cell_mean(model, j))? + p.ln()))
        .collect::<Result<_>>()?;
    let top = ln_w(cell_mean(model, k))? + numerator_p.ln();
    let shift = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::Undefined(format!(
            "τ1({k}) = 0, so τ4({k}) is undefined"
        )));
    }
    let denom: f64 = terms.iter().map(|t| (t - shift).exp()).sum();
    Ok((top - shift).exp() / denom)
}

/// Analytic or empirical origin of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    Analytic,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub k: u64,
    pub tau1: f64,
    pub tau2: f64,
    /// Absent when there are no original cells of size `k`.
    pub tau3: Option<f64>,
    /// Absent when there are no synthetic cells of size `k`.
    pub tau4: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub family: Family,
    pub sigma: f64,
    pub alpha: f64,
    pub mode: TauMode,
    /// Number of replicates averaged; zero for analytic reports.
    pub replicates: u32,
    pub rows: Vec<TauRow>,
}

impl TauReport {
    pub fn row(&self, k: u64) -> Option<&TauRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(out, "k,tau1,tau2,tau3,tau4")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.k,
                r.tau1,
                r.tau2,
                opt(r.tau3),
                opt(r.tau4)
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Analytic τ report for `k = 0..=k_report`.
pub fn tau_analytic(
    dist: &CellSizeDistribution,
    model: &CountModelSpec,
    k_report: u64,
) -> Result<TauReport> {
    let tau1 = tau1_expected_all(dist, model, k_report)?;
    let rows = (0..=k_report)
        .map(|k| {
            let t1 = tau1[k as usize];
            let t2 = dist.proportion(k);
            let t3 = tau3_expected(model, k)?;
            Ok(TauRow {
                k,
                tau1: t1,
                tau2: t2,
                tau3: Some(t3),
                tau4: (t1 > 0.0).then(|| t3 * t2 / t1),
            })
        })
        .collect::<Result<_>>()?;
    Ok(TauReport {
        family: model.effective_family(),
        sigma: model.sigma,
        alpha: model.alpha,
        mode: TauMode::Analytic,
        replicates: 0,
        rows,
    })
}

/// Joint cell counts of one original/synthetic pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TauCounts {
    /// Cells that are not structural zeros.
    pub eligible: u64,
    pub original: Vec<u64>,
    pub synthetic: Vec<u64>,
    /// Original size `k` and synthetic size `k`.
    pub both: Vec<u64>,
}

/// Count `k = 0..=k_max` buckets for an original/synthetic pair.
pub fn tau_counts(
    original: &SparseContingencyTable,
    synthetic: &SparseContingencyTable,
    k_max: u64,
) -> Result<TauCounts> {
    if original.schema() != synthetic.schema() {
        return Err(Error::SchemaMismatch(
            "original and synthetic tables have different schemas".into(),
        ));
    }
    let n = k_max as usize + 1;
    let mut c = TauCounts {
        eligible: original.eligible_cells(),
        original: vec![0; n],
        synthetic: vec![0; n],
        both: vec![0; n],
    };
    let mut bump = |o: u64, s: u64| {
        if o <= k_max {
            c.original[o as usize] += 1;
        }
        if s <= k_max {
            c.synthetic[s as usize] += 1;
            if o == s {
                c.both[s as usize] += 1;
            }
        }
    };
    let a = original.entries();
    let b = synthetic.entries();
    let (mut i, mut j) = (0, 0);
    let mut touched = 0u64;
    while i < a.len() || j < b.len() {
        let (cell, o, s) = match (a.get(i), b.get(j)) {
            (Some(&(ca, fa)), Some(&(cb, fb))) if ca == cb => {
                i += 1;
                j += 1;
                (ca, fa, fb)
            }
            (Some(&(ca, fa)), Some(&(cb, _))) if ca < cb => {
                i += 1;
                (ca, fa, 0)
            }
            (Some(&(ca, fa)), None) => {
                i += 1;
                (ca, fa, 0)
            }
            (_, Some(&(cb, fb))) => {
                j += 1;
                (cb, 0, fb)
            }
            (None, None) => unreachable!(),
        };
        if o == 0 && original.is_structural(cell) {
            continue;
        }
        touched += 1;
        bump(o, s);
    }
    // Cells zero in both tables.
    let zero_zero = c.eligible - touched;
    c.original[0] += zero_zero;
    c.synthetic[0] += zero_zero;
    c.both[0] += zero_zero;
    Ok(c)
}

/// Empirical τ report, averaged over the synthetic replicates.
///
/// `τ3` and `τ4` average over the replicates where they are defined.
pub fn tau_empirical<T: AsRef<SparseContingencyTable>>(
    original: &SparseContingencyTable,
    synthetic: &[T],
    model: &CountModelSpec,
    k_report: u64,
) -> Result<TauReport> {
    if synthetic.is_empty() {
        return Err(Error::invalid("at least one synthetic table is required"));
    }
    let n = k_report as usize + 1;
    let mut sum1 = vec![0.0; n];
    let mut sum3 = vec![(0.0, 0u32); n];
    let mut sum4 = vec![(0.0, 0u32); n];
    let mut counts0 = None;
    for s in synthetic {
        let c = tau_counts(original, s.as_ref(), k_report)?;
        let e = c.eligible as f64;
        for k in 0..n {
            sum1[k] += c.synthetic[k] as f64 / e;
            if c.original[k] > 0 {
                sum3[k].0 += c.both[k] as f64 / c.original[k] as f64;
                sum3[k].1 += 1;
            }
            if c.synthetic[k] > 0 {
                sum4[k].0 += c.both[k] as f64 / c.synthetic[k] as f64;
                sum4[k].1 += 1;
            }
        }
        counts0.get_or_insert(c);
    }
    let c0 = counts0.expect("nonempty");
    let r = synthetic.len() as f64;
    let mean = |(s, n): (f64, u32)| (n > 0).then(|| s / n as f64);
    let rows = (0..n)
        .map(|k| TauRow {
            k: k as u64,
            tau1: sum1[k] / r,
            tau2: c0.original[k] as f64 / c0.eligible as f64,
            tau3: mean(sum3[k]),
            tau4: mean(sum4[k]),
        })
        .collect();
    Ok(TauReport {
        family: model.effective_family(),
        sigma: model.sigma,
        alpha: model.alpha,
        mode: TauMode::Empirical,
        replicates: synthetic.len() as u32,
        rows,
    })
}

/// Monte-Carlo standard errors of the empirical τ values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauStandardErrors {
    pub tau1: f64,
    pub tau3: f64,
    pub tau4: f64,
}

/// Standard errors of empirical `τ1(k)`, `τ3(k)`, `τ4(k)` for a table of
/// `dist` over `cells` eligible cells, averaged over `replicates`.
///
/// Cells synthesize independently, so the bucket counts are sums of
/// independent Bernoulli variables; `τ4` uses the delta method on the
/// ratio `A/B` with `A` the size-`k`-to-`k` count and `B` the synthetic
/// size-`k` count.
pub fn tau_standard_errors(
    dist: &CellSizeDistribution,
    model: &CountModelSpec,
    k: u64,
    cells: u64,
    replicates: u32,
) -> Result<TauStandardErrors> {
    check_model(model)?;
    let n = cells as f64;
    let mut var_b = 0.0;
    let mut mean_b = 0.0;
    let mut var_a = 0.0;
    let mut mean_a = 0.0;
    for (j, p) in dist.iter() {
        let q = ln_pmf(model.family, k, cell_mean(model, j), model.sigma)?.exp();
        let nj = p * n;
        mean_b += nj * q;
        var_b += nj * q * (1.0 - q);
        if j == k {
            mean_a = nj * q;
            var_a = nj * q * (1.0 - q);
        }
    }
    let reps = f64::from(replicates.max(1));
    let tau1 = (var_b / reps).sqrt() / n;
    let nk = dist.proportion(k) * n;
    let tau3 = if nk > 0.0 {
        (var_a / reps).sqrt() / nk
    } else {
        0.0
    };
    let tau4 = if mean_b > 0.0 {
        let r = mean_a / mean_b;
        ((var_a * (1.0 - 2.0 * r) + r * r * var_b).max(0.0) / reps).sqrt() / mean_b
    } else {
        0.0
    };
    Ok(TauStandardErrors { tau1, tau3, tau4 })
}
