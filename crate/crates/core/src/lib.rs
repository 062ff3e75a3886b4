//! Stylized interbank contagion model.
//!
//! Banks hold non-interbank assets plus loans to other banks and fail the
//! balance-sheet test when total assets drop below total liabilities. A
//! distressed borrower voids its lenders' interbank assets, so distress can
//! propagate through the exposure network.
//!
//! The crate is organised around four layers:
//!
//! * [`distributions`]: the location-scale family (normal, Student-t) used
//!   both for the analytic map and for sampling balance sheets.
//! * [`meanfield`]: the homogeneous reduction `p = 1 - CDF(a - b p)`, its
//!   fixed points and the quantities derived from them.
//! * [`netgen`] and [`cascade`]: exposure-network generators and the
//!   synchronous Monte Carlo default cascade.
//! * [`calibration`]: balance-sheet ingestion and stability scans over the
//!   interbank fraction and the shock severity.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cascade;
pub mod distributions;
pub mod error;
pub mod meanfield;
pub mod netgen;
pub mod rng;

pub use calibration::{BalanceSheetRecord, CalibrationSummary, ScanCell, ScanMatrix};
pub use cascade::{
    BalanceSheetSpec, BankPopulation, CascadeConfig, CascadeResult, EnsembleStats, Recovery, TrialOutcome,
};
pub use distributions::LocationScaleDistribution;
pub use error::{Error, Result};
pub use meanfield::{FixedPointSolution, MeanFieldParams, Regime, Root, Stability};
pub use netgen::{ExposureNetwork, NetworkSpec};
