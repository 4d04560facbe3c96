//! Adaptive extended Kalman filtering for joint estimation of aircraft
//! stability and control derivatives together with the filter statistics
//! P0, Q and R.
//!
//! The crate is organised bottom-up:
//!
//! * [`statespace`]: channels, RK4 propagation and numeric Jacobians;
//! * [`models`]: the three flight-test model definitions;
//! * [`filter`]: augmented-state EKF, RTS smoother and residue series;
//! * [`tuning`]: the recursive re-estimation loop, the MT/MS alternatives
//!   and the J1–J8 cost suite;
//! * [`diagnostics`]: %CRB, correlation matrices, noise autocorrelation;
//! * [`simulator`]: synthetic datasets with injected Q and R;
//! * [`io`]: CSV ingestion, run configuration and report files.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod models;
pub mod simulator;
pub mod statespace;
pub mod tuning;

pub use data::Dataset;
pub use error::{Error, Result};
