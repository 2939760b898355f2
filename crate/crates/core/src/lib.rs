//! Saturated count-model synthesis of sparse categorical contingency tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod generator;
pub mod loglin;
pub mod models;
pub mod synthesis;
pub mod table;
pub mod tau;
pub mod tuning;

pub use error::{Error, Result};
