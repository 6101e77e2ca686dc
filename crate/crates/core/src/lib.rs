// SPDX-License-Identifier: MIT OR Apache-2.0

//! Segmentation of multivariate time series through a correspondence
//! analysis embedding, sequence-constrained hierarchical clustering and a
//! Haar wavelet transform defined on the resulting dendrogram.
//!
//! The hierarchy can then be "folded" onto external univariate signals:
//! the signal is transformed on the tree, small detail coefficients are
//! zeroed and the inverse transform yields a piecewise-constant fit whose
//! breakpoints are reported as changepoints.
//!
//! Stages:
//!
//! - [`ingest`]: event and signal CSV parsing, calendar aggregation.
//! - [`correspondence`]: frequency model, χ² metric and factor space.
//! - [`cluster`]: constrained complete link and median agglomeration,
//!   cophenetic ultrametric and partition cuts.
//! - [`haar`]: forward/inverse dendrogram Haar transform and thresholding.
//! - [`regression`]: wavelet regression, baseline fits, sweeps, breakpoints.
//! - [`pipeline`]: file-based orchestration used by the command line tool.

#![forbid(unsafe_code)]

pub mod cluster;
pub mod correspondence;
mod error;
mod exec;
pub mod haar;
pub mod ingest;
pub mod pipeline;
pub mod regression;

pub use cluster::{Dendrogram, Partition, Segment};
pub use correspondence::{FactorDecomposition, FrequencyModel};
pub use error::{Error, Result};
pub use exec::Execution;
pub use haar::{HaarDecomposition, ThresholdPolicy};
pub use ingest::{ContingencyTable, EventRecord, ExternalSignal, Granularity};
pub use regression::PiecewiseFit;
