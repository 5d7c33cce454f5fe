//! Power-flow linearization toolkit.
//!
//! Solves full AC power flow with Newton-Raphson, builds DC and linearized
//! AC (LAC) network models, fits data-driven coefficients for both by
//! ordinary least squares on solved snapshots (DDC and DLAC), and scores the
//! linear models against the AC reference across multi-hour scenario sets.

pub mod ac_solver;
pub mod case_io;
pub mod cli;
pub mod linear_models;
pub mod metrics;
pub mod network;
pub mod records;
pub mod regression;
pub mod scenarios;
pub mod sparse;
pub mod stats;
