//! Regression random forests with prediction intervals.
//!
//! The crate fits bagged regression trees (least-squares, L1 or
//! shortest-interval splitting), builds bags of observations for prediction
//! (BOPs) from shared terminal nodes, and turns them into prediction
//! intervals: a boosted two-forest procedure with bias-corrected residuals,
//! and five single-forest interval methods (LM, Quant, SPI, HDR, CHDR) with
//! out-of-bag or cross-validation coverage calibration. A simulation module
//! generates the standard benchmark regression problems and scores interval
//! coverage and length.

pub mod data;
pub mod error;
pub mod forest;
pub mod interval;
pub mod pipeline;
pub mod simbench;

pub use error::{Error, Result};
