//! Empirical distribution functions of correlated Gaussian p-values.
//!
//! The crate covers the covariance machinery (Hermite coordinates and the
//! Mehler series), a zoo of structured correlation models, finite-m regime
//! diagnostics, samplers for the vectors and for the limit processes, a
//! deterministic Monte Carlo engine, and the Benjamini-Hochberg false
//! discovery proportion under dependence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corr;
pub mod diagnostics;
pub mod edf;
pub mod error;
pub mod fdr;
pub mod hermite;
pub mod limit;
pub mod mc;
pub mod normal;
pub mod sampler;

pub use corr::{CorrelationStructure, Family, ModelSpec, Representation, RhoSchedule};
pub use diagnostics::{DiagnoseConfig, DiagnosticsReport, Regime, TrendReport};
pub use edf::{PathKind, ProcessGrid, ProcessPath};
pub use error::{Error, Result};
pub use hermite::{HermiteSeriesConfig, Theta};
pub use limit::{LimitDrawConfig, LimitSampler};
pub use fdr::{FdpExperiment, FdpExperimentConfig, Figure2Config, TwoGroupConfig};
pub use mc::{ExperimentConfig, Figure1Config, LimitExperimentConfig, McSummary};
pub use normal::{phi, quantile, upper_tail, upper_tail_inverse, Probability};
pub use sampler::{RngStream, SamplerPlan};
