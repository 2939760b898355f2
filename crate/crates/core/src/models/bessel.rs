//! Modified Bessel functions of the third kind at half-integer order.
//!
//! `K_{1/2}(t) = √(π/2t)·e^{−t}` seeds an upward recurrence
//! `K_{ν+1}(t) = K_{ν−1}(t) + (2ν/t)·K_ν(t)`, which is stable for `K`
//! because the magnitudes grow with the order. The log variant carries the
//! ratio `K_{ν+1}/K_ν` instead of the values, so it never overflows.

use crate::error::{Error, Result};

/// `|λ − ½|` expressed as the index `i` with order `i + ½`.
fn half_order_index(order_numerator: i64) -> u64 {
    // order = λ − ½; K is even in its order, so K_{λ−½} = K_{|λ−½|}.
    if order_numerator >= 1 {
        (order_numerator - 1) as u64
    } else {
        order_numerator.unsigned_abs()
    }
}

fn check_argument(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "Bessel K argument must be positive and finite, got {t}"
        )))
    }
}

/// `K_{λ−½}(t)` for integer `λ`.
pub fn bessel_k_half(order_numerator: i64, t: f64) -> Result<f64> {
    Ok(bessel_k_half_scaled(order_numerator, t)? * (-t).exp())
}

/// `e^t · K_{λ−½}(t)`, which stays representable for large `t`.
pub fn bessel_k_half_scaled(order_numerator: i64, t: f64) -> Result<f64> {
    check_argument(t)?;
    let idx = half_order_index(order_numerator);
    let mut prev = (std::f64::consts::PI / (2.0 * t)).sqrt();
    if idx == 0 {
        return Ok(prev);
    }
    let mut cur = prev * (1.0 + 1.0 / t);
    for i in 1..idx {
        let nu = i as f64 + 0.5;
        let next = prev + (2.0 * nu / t) * cur;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `ln K_{λ−½}(t)` for integer `λ`.
pub fn ln_bessel_k_half(order_numerator: i64, t: f64) -> Result<f64> {
    check_argument(t)?;
    let idx = half_order_index(order_numerator);
    Ok(ln_k_half_base(t) + KRatios::new(t).take(idx as usize).map(f64::ln).sum::<f64>())
}

/// `ln K_{1/2}(t)`.
pub(crate) fn ln_k_half_base(t: f64) -> f64 {
    0.5 * (std::f64::consts::PI / (2.0 * t)).ln() - t
}

/// Successive ratios `K_{i+3/2}(t) / K_{i+1/2}(t)` for `i = 0, 1, 2, …`.
///
/// Each ratio exceeds one, so their logs accumulate without cancellation.
#[derive(Debug, Clone)]
pub(crate) struct KRatios {
    t: f64,
    prev: f64,
    i: u64,
}

impl KRatios {
    pub(crate) fn new(t: f64) -> Self {
        // K_{1/2}/K_{-1/2} = 1 starts the recurrence.
        Self { t, prev: 1.0, i: 0 }
    }
}

impl Iterator for KRatios {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let nu = self.i as f64 + 0.5;
        let r = 1.0 / self.prev + 2.0 * nu / self.t;
        self.prev = r;
        self.i += 1;
        Some(r)
    }
}
