//! Early-career talent identification from publication records.
//!
//! The pipeline runs in stages, each backed by one module:
//!
//! 1. [`corpus`] ingests records, filters them and maps ASJC codes to broad fields.
//! 2. [`percentiles`] computes Hazen citation percentiles per (field, year).
//! 3. [`quartiles`] flags Q1 journal-years from median percentiles.
//! 4. [`indicators`] accumulates the fractional O / Q1 / C indicators per author and field.
//! 5. [`cohorts`] derives top-X% thresholds and talent / control groups.
//! 6. [`validation`] measures post-window performance and builds the report tables.
//!
//! [`synthgen`] produces seeded synthetic corpora and [`pipeline`] wires the
//! stages together with deterministic artifact output.

pub mod cohorts;
pub mod corpus;
pub mod error;
pub mod indicators;
pub mod percentiles;
pub mod pipeline;
pub mod quartiles;
pub mod stats;
pub mod synthgen;
pub mod validation;

pub use error::{Error, Result};
