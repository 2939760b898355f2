#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satsynth::generator::{generate_table, GeneratorSpec};
use satsynth::models::{pmf_table, sample_count, Family};
use satsynth::table::{
    CategoricalSchema, CellIndex, CellSizeDistribution, SparseContingencyTable, Variable, ZeroBasis,
};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, NegativeBinomial, Poisson};
use statrs::function::gamma::ln_gamma;

pub const ESC_SEED: u64 = 2024;

pub fn esc_spec() -> GeneratorSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/esc_like.json");
    GeneratorSpec::from_json_file(path).unwrap()
}

/// Full-size table with the reference histogram.
pub fn esc_table() -> SparseContingencyTable {
    generate_table(&esc_spec(), ESC_SEED).unwrap()
}

/// Same histogram, with the first variable cut to `levels` categories.
pub fn esc_table_scaled(levels: usize, seed: u64) -> SparseContingencyTable {
    let mut spec = esc_spec();
    spec.variables[0].categories = levels;
    generate_table(&spec, seed).unwrap()
}

pub fn esc_dist() -> CellSizeDistribution {
    esc_table().cell_size_distribution(ZeroBasis::RandomOnly)
}

/// One-variable table with the given counts.
pub fn line_table(counts: &[u64]) -> SparseContingencyTable {
    let schema = CategoricalSchema::new(vec![Variable::numbered("A", counts.len())]).unwrap();
    let entries = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (CellIndex(i as u64), c));
    SparseContingencyTable::new(schema, entries, []).unwrap()
}

pub fn dist(props: &[(u64, f64)]) -> CellSizeDistribution {
    CellSizeDistribution::from_proportions(props.iter().copied()).unwrap()
}

/// Inverse-Gaussian density with mean `m` and shape `s`.
fn ig_density(x: f64, m: f64, s: f64) -> f64 {
    (s / (2.0 * std::f64::consts::PI * x.powi(3))).sqrt()
        * (-s * (x - m).powi(2) / (2.0 * m * m * x)).exp()
}

/// PIG probability by integrating the Poisson kernel against the mixing
/// density on a log grid.
fn pig_by_mixture(k: u64, mu: f64, sigma: f64) -> f64 {
    let shape = mu / sigma;
    let kf = k as f64;
    let ln_kfact = ln_gamma(kf + 1.0);
    let integrand = |x: f64| {
        let lam = x.exp();
        let ln_pois = kf * x - lam - ln_kfact;
        ln_pois.exp() * ig_density(lam, mu, shape) * lam
    };
    let (lo, hi) = (
        mu.ln() - 40.0,
        mu.ln() + 12.0 + (1.0 + sigma).ln() * 3.0 + (kf + 1.0).ln() * 2.0,
    );
    let mut h = 0.05;
    let mut prev = f64::NAN;
    loop {
        let n = ((hi - lo) / h).ceil() as usize;
        let step = (hi - lo) / n as f64;
        let s: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * integrand(lo + i as f64 * step)
            })
            .sum::<f64>()
            * step;
        if (s - prev).abs() <= 1e-13 * s.abs() || h < 1e-4 {
            return s;
        }
        prev = s;
        h /= 2.0;
    }
}

/// Reference pmf built from independent parts: statrs for Poisson and the
/// negative binomial, numerical mixing for PIG.
pub fn oracle_pmf(family: Family, k: u64, mu: f64, sigma: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    match family.effective(sigma) {
        Family::Poisson => Poisson::new(mu).unwrap().pmf(k),
        Family::Nbi => NegativeBinomial::new(1.0 / sigma, 1.0 / (1.0 + sigma * mu))
            .unwrap()
            .pmf(k),
        Family::Pig => pig_by_mixture(k, mu, sigma),
    }
}

/// `τ1(k)` as the finite mixture over the cell-size distribution.
pub fn oracle_tau1(
    d: &CellSizeDistribution,
    family: Family,
    sigma: f64,
    alpha: f64,
    k: u64,
) -> f64 {
    d.iter()
        .map(|(j, p)| {
            let mu = if j == 0 { alpha } else { j as f64 };
            p * oracle_pmf(family, k, mu, sigma)
        })
        .sum()
}

pub fn oracle_tau3(family: Family, sigma: f64, alpha: f64, k: u64) -> f64 {
    let mu = if k == 0 { alpha } else { k as f64 };
    oracle_pmf(family, k, mu, sigma)
}

pub fn oracle_tau4(
    d: &CellSizeDistribution,
    family: Family,
    sigma: f64,
    alpha: f64,
    k: u64,
) -> f64 {
    oracle_tau3(family, sigma, alpha, k) * d.proportion(k) / oracle_tau1(d, family, sigma, alpha, k)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Mostly zeros, a short body and one large cell size.
pub fn random_dist(rng: &mut impl Rng) -> CellSizeDistribution {
    let zero = rng.random_range(0.6..0.95);
    let support = rng.random_range(2..12);
    let raw: Vec<f64> = (0..support).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut props = vec![(0u64, zero)];
    for (i, r) in raw.iter().enumerate() {
        let size = if i + 1 == support {
            rng.random_range(20..200)
        } else {
            i as u64 + 1
        };
        props.push((size, (1.0 - zero) * r / total));
    }
    dist(&props)
}

/// Trapezoid rule on the whole line, halving the step until two successive
/// sums agree. The integrand is entire and decays double-exponentially, so
/// the rule converges geometrically. Returns the log of the integral.
pub fn ln_k_by_quadrature(nu: f64, t: f64) -> f64 {
    let g = |u: f64| nu * u - t * u.cosh();
    // Peak where ν = t sinh u.
    let u0 = (nu / t).asinh();
    let top = g(u0);
    // Walk out until the integrand is e^-60 of its peak on both sides.
    let mut hi = u0 + 1.0;
    while g(hi) > top - 60.0 {
        hi += 1.0;
    }
    let mut lo = u0 - 1.0;
    while g(lo) > top - 60.0 {
        lo -= 1.0;
    }
    let mut h = 0.1;
    let mut prev = f64::NAN;
    loop {
        let n = ((hi - lo) / h).ceil() as usize;
        let step = (hi - lo) / n as f64;
        let s: f64 = (0..=n)
            .map(|i| (g(lo + i as f64 * step) - top).exp())
            .sum::<f64>()
            * step;
        if (s - prev).abs() <= 1e-14 * s {
            return top + (0.5 * s).ln();
        }
        prev = s;
        h /= 2.0;
        assert!(h > 1e-6, "quadrature failed to settle for ν={nu}, t={t}");
    }
}

/// Log-spaced over [0.01, 100].
pub fn t_grid() -> Vec<f64> {
    (0..=16)
        .map(|i| 10f64.powf(-2.0 + i as f64 * 0.25))
        .collect()
}

/// Pearson statistic over the cells with expected count ≥ 5; both tails
/// are pooled into the outermost bins.
pub fn chi_square_p_value(family: Family, mu: f64, sigma: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<u64> = Vec::new();
    for _ in 0..draws {
        let x = sample_count(family, mu, sigma, &mut rng) as usize;
        if x >= counts.len() {
            counts.resize(x + 1, 0);
        }
        counts[x] += 1;
    }
    let n = draws as f64;
    let k_top = counts.len().max(mu as usize * 4 + 50);
    let probs = pmf_table(family, mu, sigma, k_top as u64).unwrap();
    let big: Vec<usize> = (0..probs.len()).filter(|&k| n * probs[k] >= 5.0).collect();
    let (lo, hi) = (big[0], *big.last().unwrap());
    let obs = |r: std::ops::Range<usize>| {
        r.map(|k| counts.get(k).copied().unwrap_or(0) as f64)
            .sum::<f64>()
    };
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let below: f64 = probs[..=lo].iter().sum();
    bins.push((obs(0..lo + 1), n * below));
    for (k, &p) in probs.iter().enumerate().take(hi).skip(lo + 1) {
        bins.push((obs(k..k + 1), n * p));
    }
    let above = 1.0 - probs[..hi].iter().sum::<f64>();
    bins.push((obs(hi..counts.len().max(hi + 1)), n * above));
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (bins.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

/// Sample mean and variance with their standard errors.
pub fn sample_moments(
    family: Family,
    mu: f64,
    sigma: f64,
    draws: usize,
    seed: u64,
) -> (f64, f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..draws)
        .map(|_| sample_count(family, mu, sigma, &mut rng) as f64)
        .collect();
    let n = draws as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    (mean, (m2 / n).sqrt(), var, ((m4 - m2 * m2) / n).sqrt())
}
