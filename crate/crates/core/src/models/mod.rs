//! Count families for synthesis: Poisson, NBI and PIG.

mod bessel;
mod family;
mod pmf;
mod sampler;

pub use bessel::{bessel_k_half, bessel_k_half_scaled, ln_bessel_k_half};
pub use family::{CountModelSpec, Family, PigAuxiliary};
pub use pmf::{ln_pmf, moments, pmf, pmf_table};
pub use sampler::{sample_count, sample_inverse_gaussian, sample_poisson};
