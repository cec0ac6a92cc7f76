//! Per-layer convolution algorithm mapping for systolic-array CNN accelerators.
//!
//! The crate models a reusable GEMM overlay that can run each convolution
//! layer as im2col, kn2row or Winograd, picks the array shape and per-layer
//! dataflow, and selects the algorithm of every layer jointly by solving a
//! PBQP instance on the series-parallel layer graph.
//!
//! Module map:
//!
//! * [`model`]: CNN graph description, validation, AvgPool rewriting.
//! * [`kernels`]: numerical reference implementations of every convolution
//!   algorithm the cost model prices.
//! * [`layout`]: address-stream generators for the layout transformation
//!   unit and the conflict-free bank mapping.
//! * [`cost`]: closed-form cycle model and cost-graph construction.
//! * [`pbqp`]: series-parallel PBQP reduction solver and brute-force oracle.
//! * [`dse`]: array-shape search, the end-to-end mapping flow, baselines and
//!   reports.

pub mod cost;
pub mod dse;
pub mod error;
pub mod kernels;
pub mod layout;
pub mod model;
pub mod pbqp;

pub use error::{Error, Result};
