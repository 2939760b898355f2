//! Probability mass functions and moments.
//!
//! Everything is evaluated in log space and exponentiated last: the PIG
//! pmf multiplies factorially large and exponentially small factors.

use super::bessel::KRatios;
use super::family::{check_mean, check_sigma, Family, PigAuxiliary};
use crate::error::Result;

/// Below this many factors the NBI rising product is summed term by term.
const NBI_DIRECT_TERMS: u64 = 10_000;

pub(crate) fn ln_factorial(k: u64) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

/// `P(f_syn = k | f = mu)` under `family` with dispersion `sigma`.
pub fn pmf(family: Family, k: u64, mu: f64, sigma: f64) -> Result<f64> {
    Ok(ln_pmf(family, k, mu, sigma)?.exp())
}

/// Natural log of [`pmf`]; `-∞` where the mass is zero.
pub fn ln_pmf(family: Family, k: u64, mu: f64, sigma: f64) -> Result<f64> {
    check_mean(mu)?;
    check_sigma(sigma)?;
    Ok(ln_pmf_unchecked(family.effective(sigma), k, mu, sigma))
}

fn ln_pmf_unchecked(family: Family, k: u64, mu: f64, sigma: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let kf = k as f64;
    match family {
        Family::Poisson => -mu + kf * mu.ln() - ln_factorial(k),
        Family::Nbi => {
            // Γ(k+1/σ)/Γ(1/σ) · σ^k = Π_{i<k} (1 + iσ)
            let rising = if k <= NBI_DIRECT_TERMS {
                (0..k).map(|i| (i as f64 * sigma).ln_1p()).sum::<f64>()
            } else {
                let a = 1.0 / sigma;
                kf * sigma.ln() + libm::lgamma(kf + a) - libm::lgamma(a)
            };
            rising - ln_factorial(k) + kf * mu.ln() - (kf + 1.0 / sigma) * (sigma * mu).ln_1p()
        }
        Family::Pig => {
            let s = (1.0 + 2.0 * mu * sigma).sqrt();
            let c = s / sigma;
            let bessel: f64 = if k >= 2 {
                KRatios::new(c).take((k - 1) as usize).map(f64::ln).sum()
            } else {
                0.0
            };
            PigAuxiliary::log_zero_mass(mu, sigma) + bessel + kf * (mu / s).ln() - ln_factorial(k)
        }
    }
}

/// `pmf(0..=k_max)` in one pass, using the ratio recurrences of each family.
pub fn pmf_table(family: Family, mu: f64, sigma: f64, k_max: u64) -> Result<Vec<f64>> {
    check_mean(mu)?;
    check_sigma(sigma)?;
    let family = family.effective(sigma);
    let n = k_max as usize + 1;
    if mu == 0.0 {
        let mut out = vec![0.0; n];
        out[0] = 1.0;
        return Ok(out);
    }
    let mut out = Vec::with_capacity(n);
    let mut lp = ln_pmf_unchecked(family, 0, mu, sigma);
    out.push(lp.exp());
    match family {
        Family::Poisson => {
            let lmu = mu.ln();
            for k in 1..n {
                lp += lmu - (k as f64).ln();
                out.push(lp.exp());
            }
        }
        Family::Nbi => {
            let step = mu.ln() - (sigma * mu).ln_1p();
            for k in 1..n {
                lp += ((k - 1) as f64 * sigma).ln_1p() - (k as f64).ln() + step;
                out.push(lp.exp());
            }
        }
        Family::Pig => {
            let s = (1.0 + 2.0 * mu * sigma).sqrt();
            let step = (mu / s).ln();
            let mut ratios = KRatios::new(s / sigma);
            for k in 1..n {
                // K_{k-1/2}/K_{k-3/2}: 1 for k = 1, then the upward ratios.
                let r = if k == 1 { 1.0 } else { ratios.next().unwrap() };
                lp += r.ln() + step - (k as f64).ln();
                out.push(lp.exp());
            }
        }
    }
    Ok(out)
}

/// `(mean, variance)`: `(μ, μ)` for the Poisson, `(μ, μ + σμ²)` otherwise.
pub fn moments(family: Family, mu: f64, sigma: f64) -> Result<(f64, f64)> {
    check_mean(mu)?;
    check_sigma(sigma)?;
    Ok(match family.effective(sigma) {
        Family::Poisson => (mu, mu),
        Family::Nbi | Family::Pig => (mu, mu + sigma * mu * mu),
    })
}
