//! Choosing the pseudocount `α` a priori.
//!
//! Two targets are supported at a fixed dispersion `σ*`: matching the
//! proportion of zeros (`τ1(0) = τ2(0)`, closed form) and fixing the
//! uniqueness risk (`τ4(1) = p`, bisection).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CountModelSpec, Family};
use crate::table::CellSizeDistribution;
use crate::tau::{tau1_expected, tau4_expected};

const MAX_BISECTIONS: usize = 200;
const VALUE_TOL: f64 = 1e-10;
const WIDTH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TuningTarget {
    /// `τ1(0) = τ2(0)`.
    MatchZeros,
    /// `τ4(1) = p`.
    Tau4Equals { p: f64 },
}

/// Result of a tuning run, as emitted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub family: Family,
    pub sigma: f64,
    pub target: TuningTarget,
    pub alpha_star: f64,
    /// Achieved minus targeted metric value.
    pub residual: f64,
    /// Bisection steps; zero for closed forms.
    pub iterations: usize,
}

fn check_sigma_star(sigma: f64) -> Result<()> {
    CountModelSpec::new(Family::Poisson, sigma, 0.0).map(|_| ())
}

/// Probability that a cell of size `j ≥ 1` synthesizes to zero, written
/// in the closed form each family's inversion uses.
fn zero_mass(family: Family, sigma: f64, j: f64) -> f64 {
    match family.effective(sigma) {
        Family::Poisson => (-j).exp(),
        Family::Nbi => (-(sigma * j).ln_1p() / sigma).exp(),
        // exp(1/σ − c_j)
        Family::Pig => (-2.0 * j / (1.0 + (1.0 + 2.0 * j * sigma).sqrt())).exp(),
    }
}

/// `α*` with `τ1(0) = τ2(0)` at dispersion `sigma_star`.
pub fn alpha_star_match_zeros(
    dist: &CellSizeDistribution,
    family: Family,
    sigma_star: f64,
) -> Result<f64> {
    check_sigma_star(sigma_star)?;
    let t0 = dist.proportion(0);
    if t0 <= 0.0 {
        return Err(Error::Infeasible(
            "no random zeros to match (τ2(0) = 0)".into(),
        ));
    }
    let shrink: f64 = dist
        .occupied()
        .map(|(j, p)| zero_mass(family, sigma_star, j as f64) * p)
        .sum();
    let ratio = shrink / t0;
    if ratio >= 1.0 {
        return Err(Error::Infeasible(format!(
            "nonzero cells already synthesize to zero at rate {shrink:.6} ≥ τ2(0) = {t0:.6}; \
             the log argument 1 − {ratio:.6} is not positive"
        )));
    }
    // ln of the bracketed argument 1 − shrink/τ2(0)
    let ln_arg = (-ratio).ln_1p();
    let sigma = sigma_star;
    Ok(match family.effective(sigma) {
        Family::Poisson => -ln_arg,
        Family::Nbi => (-sigma * ln_arg).exp_m1() / sigma,
        Family::Pig => {
            // c_α = 1/σ − ln_arg, so α = ½(σc_α² − 1/σ) = L + σL²/2 with L = −ln_arg.
            let l = -ln_arg;
            l + 0.5 * sigma * l * l
        }
    })
}

/// Location of the maximum of the zero-cell weight in `τ1(1)`, where
/// `τ4(1)` as a function of `α` bottoms out.
pub fn alpha_at_min_tau4(family: Family, sigma: f64) -> Result<f64> {
    check_sigma_star(sigma)?;
    Ok(match family.effective(sigma) {
        // α e^{-α} and α/(1+ασ)^{1+1/σ} both peak at α = 1.
        Family::Poisson | Family::Nbi => 1.0,
        Family::Pig => {
            // d/dα ln(α e^{-c}/c) = 1/α − (1 + 1/c)/(σc)
            let slope = |a: f64| {
                let c = (1.0 / (sigma * sigma) + 2.0 * a / sigma).sqrt();
                1.0 / a - (1.0 + 1.0 / c) / (sigma * c)
            };
            let mut hi = 1.0;
            while slope(hi) > 0.0 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..MAX_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
    })
}

fn tau4_one(dist: &CellSizeDistribution, family: Family, sigma: f64, alpha: f64) -> Result<f64> {
    tau4_expected(dist, &CountModelSpec::new(family, sigma, alpha)?, 1)
}

/// `α*` with `τ4(1) = p` at dispersion `sigma_star`, plus the number of
/// bisection steps.
///
/// `τ4(1)` falls in `α` until the zero-cell weight peaks and rises again
/// afterwards, so the search is confined to `[0, α_peak]`, where it is
/// monotone, and returns the smallest solution.
pub fn solve_alpha_for_tau4_target(
    dist: &CellSizeDistribution,
    family: Family,
    sigma_star: f64,
    p: f64,
) -> Result<(f64, usize)> {
    check_sigma_star(sigma_star)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!(
            "p out of range: {p} is not in (0, 1]"
        )));
    }
    let g = |a: f64| tau4_one(dist, family, sigma_star, a);
    let g0 = g(0.0)?;
    if dist.proportion(0) == 0.0 {
        // α only acts through random zeros.
        return if (g0 - p).abs() < VALUE_TOL {
            Ok((0.0, 0))
        } else {
            Err(Error::Infeasible(format!(
                "no random zeros, so τ4(1) = {g0} for every α; target p = {p} is unreachable"
            )))
        };
    }
    if p > g0 + VALUE_TOL {
        return Err(Error::Infeasible(format!(
            "target p = {p} exceeds the achievable maximum τ4(1) = {g0} (at α = 0)"
        )));
    }
    if (g0 - p).abs() < VALUE_TOL {
        return Ok((0.0, 0));
    }
    let peak = alpha_at_min_tau4(family, sigma_star)?;
    let g_peak = g(peak)?;
    if p < g_peak - VALUE_TOL {
        return Err(Error::Infeasible(format!(
            "target p = {p} is below the achievable minimum τ4(1) = {g_peak} (at α = {peak}); \
             achievable range is [{g_peak}, {g0}]"
        )));
    }
    let (mut lo, mut hi) = (0.0, peak);
    let (mut g_lo, mut g_hi) = (g0, g_peak);
    for it in 1..=MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm > g_lo || gm < g_hi {
            return Err(Error::Solver(format!(
                "τ4(1) is not monotone on [{lo}, {hi}]: values {g_lo}, {gm}, {g_hi}"
            )));
        }
        if (gm - p).abs() < VALUE_TOL || hi - lo < WIDTH_TOL {
            return Ok((mid, it));
        }
        if gm > p {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
            g_hi = gm;
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_BISECTIONS,
        detail: format!("bracket [{lo}, {hi}] for p = {p}"),
    })
}

/// Run either target and report the residual.
pub fn tune(
    dist: &CellSizeDistribution,
    family: Family,
    sigma_star: f64,
    target: TuningTarget,
) -> Result<TuningOutcome> {
    let (alpha_star, iterations, residual) = match target {
        TuningTarget::MatchZeros => {
            let a = alpha_star_match_zeros(dist, family, sigma_star)?;
            let t1 = tau1_expected(dist, &CountModelSpec::new(family, sigma_star, a)?, 0)?;
            (a, 0, t1 - dist.proportion(0))
        }
        TuningTarget::Tau4Equals { p } => {
            let (a, it) = solve_alpha_for_tau4_target(dist, family, sigma_star, p)?;
            (a, it, tau4_one(dist, family, sigma_star, a)? - p)
        }
    };
    Ok(TuningOutcome {
        family: family.effective(sigma_star),
        sigma: sigma_star,
        target,
        alpha_star,
        residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(props: &[(u64, f64)]) -> CellSizeDistribution {
        CellSizeDistribution::from_proportions(props.iter().copied()).unwrap()
    }

    #[test]
    fn poisson_half_and_half() {
        let d = dist(&[(0, 0.5), (1, 0.5)]);
        let a = alpha_star_match_zeros(&d, Family::Poisson, 0.0).unwrap();
        assert!((a - 0.458675).abs() < 1e-6);
        assert!((a + (1.0 - (-1f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn nbi_half_and_half() {
        let d = dist(&[(0, 0.5), (1, 0.5)]);
        let a = alpha_star_match_zeros(&d, Family::Nbi, 1.0).unwrap();
        assert!((a - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_table_needs_no_pseudocount() {
        let d = dist(&[(0, 1.0)]);
        for f in Family::ALL {
            assert_eq!(alpha_star_match_zeros(&d, f, 0.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn infeasible_zero_matching() {
        assert!(matches!(
            alpha_star_match_zeros(&dist(&[(1, 1.0)]), Family::Poisson, 0.0),
            Err(Error::Infeasible(_))
        ));
        // Too few zeros: e^{-1}·0.99 > 0.01
        assert!(matches!(
            alpha_star_match_zeros(&dist(&[(0, 0.01), (1, 0.99)]), Family::Poisson, 0.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn pig_peak_solves_cubic() {
        // 2σα³ + (1 − σ²)α² − 2σα − 1 = 0 at the peak
        for sigma in [0.1, 1.0, 10.0] {
            let a = alpha_at_min_tau4(Family::Pig, sigma).unwrap();
            let f = 2.0 * sigma * a.powi(3) + (1.0 - sigma * sigma) * a * a - 2.0 * sigma * a - 1.0;
            assert!(f.abs() < 1e-9, "σ={sigma}: α={a}, f={f}");
        }
    }

    #[test]
    fn no_zeros_target_one() {
        let d = dist(&[(1, 1.0)]);
        assert_eq!(
            solve_alpha_for_tau4_target(&d, Family::Poisson, 0.0, 1.0)
                .unwrap()
                .0,
            0.0
        );
        assert!(solve_alpha_for_tau4_target(&d, Family::Poisson, 0.0, 0.5).is_err());
    }

    #[test]
    fn p_out_of_range() {
        let d = dist(&[(0, 0.9), (1, 0.1)]);
        assert!(matches!(
            solve_alpha_for_tau4_target(&d, Family::Poisson, 0.0, 1.5),
            Err(Error::InvalidParameter(m)) if m.contains("p out of range")
        ));
        assert!(solve_alpha_for_tau4_target(&d, Family::Poisson, 0.0, 0.0).is_err());
    }

    #[test]
    fn poisson_tau4_hand_equation() {
        // e^{-1}·0.1 = 0.5·(α e^{-α}·0.9 + e^{-1}·0.1)
        let d = dist(&[(0, 0.9), (1, 0.1)]);
        let (a, _) = solve_alpha_for_tau4_target(&d, Family::Poisson, 0.0, 0.5).unwrap();
        let e1 = (-1f64).exp();
        let lhs = e1 * 0.1;
        let rhs = 0.5 * (a * (-a).exp() * 0.9 + e1 * 0.1);
        assert!((lhs - rhs).abs() < 1e-10);
        assert!(a < 1.0);
    }

    #[test]
    fn outcome_json_shape() {
        let d = dist(&[(0, 0.5), (1, 0.5)]);
        let out = tune(&d, Family::Poisson, 0.0, TuningTarget::MatchZeros).unwrap();
        assert!(out.residual.abs() < 1e-12);
        let json = serde_json::to_value(&out).unwrap();
        assert_eq!(json["family"], "poisson");
        assert_eq!(json["target"]["kind"], "match-zeros");
        assert_eq!(json["iterations"], 0);
    }
}
