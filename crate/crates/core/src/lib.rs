//! Stream learning with averaged n-dependence estimators under concept drift.
//!
//! The crate is organised bottom-up:
//!
//! - [`counts`]: weighted frequency tables with lazy exponential decay.
//! - [`forgetting`]: sliding-window and decay policies.
//! - [`ande`]: NB / A1DE / A2DE estimation on top of a chain of count stores.
//! - [`driftgen`]: superparent k-DB networks with controlled CPT drift.
//! - [`eval`]: prequential evaluation, aggregation and experiment grids.
//! - [`ingest`]: streaming ARFF/CSV readers and an incremental discretizer.

pub mod ande;
pub mod counts;
pub mod driftgen;
mod error;
pub mod eval;
pub mod forgetting;
pub mod ingest;
mod schema;

pub use error::{Error, Result};
pub use schema::{Instance, Schema, Step};
