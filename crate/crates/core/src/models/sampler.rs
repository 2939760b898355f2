//! Random draws from the count families.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use super::family::Family;

/// Poisson draw; a nonpositive rate gives zero.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng) as u64,
        // Rates past the sampler's range: the normal limit is exact to
        // far below one count in relative terms.
        Err(_) => {
            let z: f64 = rng.sample(StandardNormal);
            (lambda + z * lambda.sqrt()).round().max(0.0) as u64
        }
    }
}

/// Inverse Gaussian draw with the given mean and shape.
///
/// Transformation with one normal and one uniform. The smaller root is
/// written as `μ / (1 + w + √(w² + 2w))` with `w = μν²/(2·shape)`, which
/// keeps full relative precision when `w` is large.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    if !(mean > 0.0) {
        return 0.0;
    }
    let nu: f64 = rng.sample(StandardNormal);
    let w = mean * nu * nu / (2.0 * shape);
    let x = mean / (1.0 + w + (w * w + 2.0 * w).sqrt());
    let u: f64 = rng.random();
    if u * (mean + x) <= mean {
        x
    } else {
        mean * mean / x
    }
}

/// One draw of `f_syn` given mean `mu` and dispersion `sigma`.
pub fn sample_count<R: Rng + ?Sized>(family: Family, mu: f64, sigma: f64, rng: &mut R) -> u64 {
    if !(mu > 0.0) {
        return 0;
    }
    let lambda = match family.effective(sigma) {
        Family::Poisson => mu,
        Family::Nbi => match Gamma::new(1.0 / sigma, sigma * mu) {
            Ok(g) => g.sample(rng),
            Err(_) => mu,
        },
        Family::Pig => sample_inverse_gaussian(mu, mu / sigma, rng),
    };
    sample_poisson(lambda, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn inverse_gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(mean, shape) in &[(1.0, 1.0), (5.0, 0.5), (0.02, 0.002), (3.0, 300.0)] {
            let xs: Vec<f64> = (0..200_000)
                .map(|_| sample_inverse_gaussian(mean, shape, &mut rng))
                .collect();
            assert!(xs.iter().all(|&x| x >= 0.0 && x.is_finite()));
            let (m, v) = mean_var(&xs);
            let var = mean * mean * mean / shape;
            assert!(
                (m - mean).abs() < 5.0 * (var / 2e5).sqrt(),
                "mean {m} vs {mean}"
            );
            // heavy tails: compare the variance loosely
            assert!((v / var - 1.0).abs() < 0.25, "var {v} vs {var}");
        }
    }

    #[test]
    fn count_moments_match_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for family in Family::ALL {
            let (mu, sigma) = (4.0, 0.5);
            let xs: Vec<f64> = (0..200_000)
                .map(|_| sample_count(family, mu, sigma, &mut rng) as f64)
                .collect();
            let (m, v) = mean_var(&xs);
            let want_v = if family == Family::Poisson {
                mu
            } else {
                mu + sigma * mu * mu
            };
            assert!(
                (m - mu).abs() < 5.0 * (want_v / 2e5).sqrt(),
                "{family}: mean {m}"
            );
            assert!(
                (v / want_v - 1.0).abs() < 0.05,
                "{family}: var {v} vs {want_v}"
            );
        }
    }

    #[test]
    fn zero_mean_draws_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for family in Family::ALL {
            assert_eq!(sample_count(family, 0.0, 1.0, &mut rng), 0);
        }
        assert_eq!(sample_poisson(-1.0, &mut rng), 0);
    }

    #[test]
    fn huge_rate_stays_close_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = sample_poisson(1e18, &mut rng) as f64;
        assert!((x / 1e18 - 1.0).abs() < 1e-7);
    }
}
