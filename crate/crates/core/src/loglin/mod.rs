//! Desk-scale log-linear models: IPF and Poisson IRLS with dense algebra.

mod design;
mod ipf;
mod irls;

pub use design::{parameter_count, MarginSpec};
pub use ipf::ipf_fit;
pub use irls::{fit_loglinear, LoglinFit, LoglinModel, Parameter, DEFAULT_CAP};

/// Largest table the dense fitters accept.
pub const DESK_CELL_LIMIT: u64 = 1 << 22;
