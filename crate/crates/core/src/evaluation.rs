//! Risk and utility summaries of synthetic tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loglin::LoglinFit;
use crate::models::CountModelSpec;
use crate::table::SparseContingencyTable;
use crate::tau::tau_empirical;

/// Treatment of cells that are zero in the original but not in the
/// synthetic table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroPairRule {
    /// Outside every bucket, whatever `p`.
    #[default]
    OutsideAll,
    /// More than 50% away: outside buckets with `p ≤ 50`, inside larger ones.
    BeyondFifty,
}

/// Proportion of cells whose synthetic count is within `p%` of the original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinReport {
    pub p_list: Vec<f64>,
    pub proportions: Vec<f64>,
    /// Cells compared.
    pub cells: u64,
    pub nonzero_only: bool,
}

impl WithinReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "p,proportion")?;
        for (p, q) in self.p_list.iter().zip(&self.proportions) {
            writeln!(out, "{p},{q}")?;
        }
        Ok(())
    }
}

/// Within-`p%` proportions over non-structural cells, or only over cells
/// that are nonzero in the original when `nonzero_only` is set.
pub fn within_p_percent(
    original: &SparseContingencyTable,
    synthetic: &SparseContingencyTable,
    p_list: &[f64],
    nonzero_only: bool,
    rule: ZeroPairRule,
) -> Result<WithinReport> {
    if original.schema() != synthetic.schema() {
        return Err(Error::SchemaMismatch(
            "original and synthetic tables have different schemas".into(),
        ));
    }
    if let Some(p) = p_list.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::invalid(format!(
            "percentages must be positive, got {p}"
        )));
    }
    let mut hits = vec![0u64; p_list.len()];
    let mut cells = 0u64;
    let mut visited = 0u64;
    let mut record = |o: u64, s: u64| {
        cells += 1;
        for (h, &p) in hits.iter_mut().zip(p_list) {
            let inside = if o == 0 {
                s == 0 || (rule == ZeroPairRule::BeyondFifty && p > 50.0)
            } else {
                // |s − o| ≤ p/100 · o, kept in integers-times-100 form.
                100.0 * s.abs_diff(o) as f64 <= p * o as f64
            };
            if inside {
                *h += 1;
            }
        }
    };
    let a = original.entries();
    let b = synthetic.entries();
    let (mut i, mut j) = (0, 0);
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
        visited += 1;
        if nonzero_only && o == 0 {
            continue;
        }
        record(o, s);
    }
    if !nonzero_only {
        // Zero in both tables: within every bucket.
        let both_zero = original.eligible_cells() - visited;
        cells += both_zero;
        for h in &mut hits {
            *h += both_zero;
        }
    }
    let proportions = hits
        .iter()
        .map(|&h| {
            if cells == 0 {
                f64::NAN
            } else {
                h as f64 / cells as f64
            }
        })
        .collect();
    Ok(WithinReport {
        p_list: p_list.to_vec(),
        proportions,
        cells,
        nonzero_only,
    })
}

/// Closed interval with possibly infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    /// Requires `lower < upper`.
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || !(lower < upper) {
            return Err(Error::invalid(format!(
                "interval ({lower}, {upper}) has no positive length"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `estimate ± z·se`; an infinite `se` gives the whole line.
    pub fn symmetric(estimate: f64, se: f64, z: f64) -> Result<Self> {
        Self::new(estimate - z * se, estimate + z * se)
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `(u_i − l_i)/(u − l)`, with infinite lengths resolved as limits.
fn share(inter_lower: f64, inter_upper: f64, of: &Interval) -> f64 {
    let inter = inter_upper - inter_lower;
    if of.length().is_infinite() {
        if inter.is_infinite() {
            1.0
        } else {
            0.0
        }
    } else {
        inter / of.length()
    }
}

/// Confidence-interval overlap
/// `½[(u_i − l_i)/(u_o − l_o) + (u_i − l_i)/(u_s − l_s)]`.
///
/// Disjoint intervals give a negative value; see [`clip_overlap`].
pub fn ci_overlap(original: &Interval, synthetic: &Interval) -> f64 {
    let l = original.lower.max(synthetic.lower);
    let u = original.upper.min(synthetic.upper);
    0.5 * (share(l, u, original) + share(l, u, synthetic))
}

pub fn clip_overlap(raw: f64) -> f64 {
    raw.max(0.0)
}

/// Variance of an estimate from `m` fully synthetic replicates:
/// `v̄_m · (n_syn/n + 1/m)`.
pub fn raab_variance(mean_within_variance: f64, n: f64, n_syn: f64, m: u32) -> Result<f64> {
    if !(mean_within_variance > 0.0 && n > 0.0 && n_syn > 0.0 && m > 0) {
        return Err(Error::invalid(format!(
            "variance inputs must be positive (v = {mean_within_variance}, n = {n}, n_syn = {n_syn}, m = {m})"
        )));
    }
    Ok(mean_within_variance * (n_syn / n + 1.0 / f64::from(m)))
}

/// Trimmed mean of percentage differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmedMean {
    pub mean: f64,
    /// Pairs averaged after trimming.
    pub used: usize,
    /// Pairs dropped because the original value is zero.
    pub zero_originals: usize,
}

/// Mean of `100·(q_syn − q)/q` after dropping `⌊trim·N⌋` values at each end.
pub fn trimmed_mean_pct_diff(
    original: &[f64],
    synthetic: &[f64],
    trim_fraction: f64,
) -> Result<TrimmedMean> {
    if original.len() != synthetic.len() {
        return Err(Error::invalid(format!(
            "{} original values but {} synthetic values",
            original.len(),
            synthetic.len()
        )));
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(Error::invalid(format!(
            "trim fraction {trim_fraction} is outside [0, 0.5)"
        )));
    }
    let mut diffs: Vec<f64> = Vec::with_capacity(original.len());
    let mut zero_originals = 0;
    for (&q, &s) in original.iter().zip(synthetic) {
        if q == 0.0 {
            zero_originals += 1;
        } else {
            diffs.push(100.0 * (s - q) / q);
        }
    }
    diffs.sort_by(f64::total_cmp);
    let cut = (trim_fraction * diffs.len() as f64).floor() as usize;
    let kept = &diffs[cut..diffs.len() - cut];
    if kept.is_empty() {
        return Err(Error::Undefined(
            "no percentage differences left to average".into(),
        ));
    }
    Ok(TrimmedMean {
        mean: kept.iter().sum::<f64>() / kept.len() as f64,
        used: kept.len(),
        zero_originals,
    })
}

/// How synthetic-data standard errors are turned into interval widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceRule {
    /// Treat the (averaged) synthetic estimates as if from real data: `v̄/m`.
    Naive,
    /// Fully synthetic combining rule `v̄(n_syn/n + 1/m)`.
    Raab,
}

/// Interval overlap for one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermOverlap {
    pub parameter: String,
    pub original: Interval,
    pub synthetic: Interval,
    pub overlap: f64,
    pub clipped: f64,
    /// Estimate was capped in the original or a synthetic fit.
    pub capped: bool,
}

/// Per-coefficient interval overlaps between an original fit and the fits
/// of `m` synthetic replicates.
///
/// Synthetic estimates are averaged over replicates; the variance follows
/// `rule`, with `n_syn` the mean synthetic grand total. Capped coefficients
/// are skipped unless `include_capped`, in which case their infinite
/// intervals enter the overlap as such.
pub fn coefficient_overlaps(
    original: &LoglinFit,
    synthetic: &[LoglinFit],
    n: f64,
    n_syn: f64,
    rule: VarianceRule,
    z: f64,
    include_capped: bool,
) -> Result<Vec<TermOverlap>> {
    if synthetic.is_empty() {
        return Err(Error::invalid("at least one synthetic fit is required"));
    }
    let m = synthetic.len() as u32;
    let mut out = Vec::new();
    for (i, p) in original.parameters.iter().enumerate() {
        let syn: Vec<_> = synthetic
            .iter()
            .map(|f| {
                f.parameters
                    .get(i)
                    .filter(|q| q.name == p.name)
                    .ok_or_else(|| {
                        Error::SchemaMismatch(format!("synthetic fit lacks parameter {}", p.name))
                    })
            })
            .collect::<Result<_>>()?;
        let capped = p.capped || syn.iter().any(|q| q.capped);
        if capped && !include_capped {
            continue;
        }
        let estimate = syn.iter().map(|q| q.estimate).sum::<f64>() / f64::from(m);
        let v_bar = syn.iter().map(|q| q.se * q.se).sum::<f64>() / f64::from(m);
        let variance = if v_bar.is_infinite() {
            f64::INFINITY
        } else {
            match rule {
                VarianceRule::Naive => v_bar / f64::from(m),
                VarianceRule::Raab => raab_variance(v_bar, n, n_syn, m)?,
            }
        };
        let original_iv = Interval::symmetric(p.estimate, p.se, z)?;
        let synthetic_iv = Interval::symmetric(estimate, variance.sqrt(), z)?;
        let overlap = ci_overlap(&original_iv, &synthetic_iv);
        out.push(TermOverlap {
            parameter: p.name.clone(),
            original: original_iv,
            synthetic: synthetic_iv,
            overlap,
            clipped: clip_overlap(overlap),
            capped,
        });
    }
    Ok(out)
}

pub fn write_overlaps_csv<W: Write>(overlaps: &[TermOverlap], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "parameter,orig_lower,orig_upper,syn_lower,syn_upper,overlap,overlap_clipped,capped"
    )?;
    for o in overlaps {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            o.parameter,
            o.original.lower,
            o.original.upper,
            o.synthetic.lower,
            o.synthetic.upper,
            o.overlap,
            o.clipped,
            o.capped
        )?;
    }
    Ok(())
}

/// A point on the risk-utility frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub label: String,
    /// Mean clipped overlap.
    pub utility: f64,
    /// Mean raw overlap.
    pub utility_raw: f64,
    /// `1 − τ4(1)`.
    pub privacy: f64,
}

/// Frontier point from the empirical `τ4(1)` and a list of overlaps.
pub fn frontier_point<T: AsRef<SparseContingencyTable>>(
    original: &SparseContingencyTable,
    synthetic: &[T],
    overlaps: &[f64],
    label: impl Into<String>,
) -> Result<FrontierPoint> {
    if overlaps.is_empty() {
        return Err(Error::Undefined("no overlaps to average".into()));
    }
    // τ4 counting does not depend on the model; any spec labels the report.
    let report = tau_empirical(original, synthetic, &CountModelSpec::poisson(0.0)?, 1)?;
    let tau4 = report.row(1).and_then(|r| r.tau4).ok_or_else(|| {
        Error::Undefined("no synthetic cells of size 1, so τ4(1) is undefined".into())
    })?;
    let n = overlaps.len() as f64;
    Ok(FrontierPoint {
        label: label.into(),
        utility: overlaps.iter().map(|&o| clip_overlap(o)).sum::<f64>() / n,
        utility_raw: overlaps.iter().sum::<f64>() / n,
        privacy: 1.0 - tau4,
    })
}

pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: &mut W) -> Result<()> {
    writeln!(out, "label,utility,privacy,utility_raw")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            p.label, p.utility, p.privacy, p.utility_raw
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{CategoricalSchema, CellIndex, Variable};

    fn iv(l: f64, u: f64) -> Interval {
        Interval::new(l, u).unwrap()
    }

    fn one_cell(count: u64) -> SparseContingencyTable {
        let s = CategoricalSchema::new(vec![Variable::numbered("A", 1)]).unwrap();
        SparseContingencyTable::new(s, [(CellIndex(0), count)], []).unwrap()
    }

    #[test]
    fn within_hand_example() {
        let r = within_p_percent(
            &one_cell(100),
            &one_cell(104),
            &[1.0, 5.0],
            false,
            ZeroPairRule::OutsideAll,
        )
        .unwrap();
        assert_eq!(r.proportions, vec![0.0, 1.0]);
    }

    #[test]
    fn within_identity_and_zero_pairs() {
        let s = CategoricalSchema::new(vec![Variable::numbered("A", 4)]).unwrap();
        let orig =
            SparseContingencyTable::new(s.clone(), [(CellIndex(0), 3)], [CellIndex(3)]).unwrap();
        let syn =
            SparseContingencyTable::new(s, [(CellIndex(0), 3), (CellIndex(1), 1)], [CellIndex(3)])
                .unwrap();
        let id = within_p_percent(
            &orig,
            &orig,
            &[0.5, 50.0, 100.0],
            false,
            ZeroPairRule::OutsideAll,
        )
        .unwrap();
        assert_eq!(id.proportions, vec![1.0; 3]);
        assert_eq!(id.cells, 3);
        let r = within_p_percent(
            &orig,
            &syn,
            &[0.5, 50.0, 100.0],
            false,
            ZeroPairRule::OutsideAll,
        )
        .unwrap();
        assert_eq!(r.proportions, vec![2.0 / 3.0; 3]);
        let r = within_p_percent(
            &orig,
            &syn,
            &[0.5, 50.0, 100.0],
            false,
            ZeroPairRule::BeyondFifty,
        )
        .unwrap();
        assert_eq!(r.proportions, vec![2.0 / 3.0, 2.0 / 3.0, 1.0]);
        let nz = within_p_percent(&orig, &syn, &[0.5], true, ZeroPairRule::OutsideAll).unwrap();
        assert_eq!((nz.cells, nz.proportions[0]), (1, 1.0));
        assert!(within_p_percent(&orig, &syn, &[0.0], false, ZeroPairRule::OutsideAll).is_err());
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(ci_overlap(&iv(0.0, 2.0), &iv(0.0, 2.0)), 1.0);
        assert_eq!(ci_overlap(&iv(0.0, 2.0), &iv(1.0, 3.0)), 0.5);
        assert_eq!(
            ci_overlap(&iv(0.0, 2.0), &iv(f64::NEG_INFINITY, f64::INFINITY)),
            0.5
        );
        assert_eq!(
            ci_overlap(
                &iv(f64::NEG_INFINITY, f64::INFINITY),
                &iv(f64::NEG_INFINITY, f64::INFINITY)
            ),
            1.0
        );
        let disjoint = ci_overlap(&iv(0.0, 1.0), &iv(2.0, 3.0));
        assert_eq!(disjoint, -1.0);
        assert_eq!(clip_overlap(disjoint), 0.0);
        assert!(Interval::new(1.0, 1.0).is_err());
    }

    #[test]
    fn raab_examples() {
        assert_eq!(raab_variance(2.5, 100.0, 100.0, 1).unwrap(), 5.0);
        assert!((raab_variance(1.0, 50.0, 50.0, 100).unwrap() - 1.01).abs() < 1e-15);
        assert_eq!(raab_variance(3.0, 10.0, 20.0, 1).unwrap(), 9.0);
        assert!(raab_variance(0.0, 1.0, 1.0, 1).is_err());
        assert!(raab_variance(1.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn trimmed_examples() {
        let t = trimmed_mean_pct_diff(&[1.0, 2.0, 4.0], &[1.1, 2.2, 4.4], 0.0).unwrap();
        assert!((t.mean - 10.0).abs() < 1e-12);
        let t = trimmed_mean_pct_diff(&[1.0; 5], &[0.0, 0.99, 1.0, 1.01, 2.0], 0.2).unwrap();
        assert!(t.mean.abs() < 1e-12);
        assert_eq!(t.used, 3);
        let t = trimmed_mean_pct_diff(&[0.0, 2.0], &[1.0, 2.0], 0.0).unwrap();
        assert_eq!((t.mean, t.zero_originals), (0.0, 1));
        assert!(trimmed_mean_pct_diff(&[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn frontier_identity() {
        let s = CategoricalSchema::new(vec![Variable::numbered("A", 3)]).unwrap();
        let t = SparseContingencyTable::new(s, [(CellIndex(0), 1), (CellIndex(2), 4)], []).unwrap();
        let p = frontier_point(&t, std::slice::from_ref(&t), &[1.0, 1.0], "orig").unwrap();
        assert_eq!((p.utility, p.privacy), (1.0, 0.0));
    }
}
