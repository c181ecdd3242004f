//! Epsilon-complexity coefficients of multichannel time series.
//!
//! A record is normalized per channel, subsampled at several retention
//! fractions `S`, and the discarded samples are rebuilt with local
//! polynomials of degree 0 to 4. The family-minimal reconstruction error
//! `ε(S)` follows `ln ε ≈ A + B ln S` for Hölder-class signals; the fitted
//! `(A, B)` of a record and of its finite differences are the features fed to
//! a random-forest classifier.
//!
//! Module map:
//!
//! - [`ingest`]: record files, manifests, labels
//! - [`signal`]: the [`Record`] type, normalization, differences, generators
//! - [`recon`]: subsampling plans and polynomial reconstruction
//! - [`complexity`]: spectrum over the retention grid and the log-log fit
//! - [`features`]: per-subject feature vectors and feature tables
//! - [`classify`]: random forest and nearest-neighbour baseline
//! - [`eval`]: cross-validation, bootstrap intervals, reports

pub mod classify;
pub mod complexity;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod recon;
pub mod signal;

pub use error::{Error, Result};
pub use features::FeatureVector;
pub use ingest::Label;
pub use signal::Record;
