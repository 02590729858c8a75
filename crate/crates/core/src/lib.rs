//! Causal survival estimation for platform trials that share a control arm
//! across treatment entries: discrete-time hazards, restricted-mean contrasts
//! identified in the concurrent population, outcome-regression and doubly
//! robust estimators, a Monte Carlo harness and pooling diagnostics.

pub mod cli;
pub mod csv_io;
pub mod data;
pub mod error;
pub mod diagnostics;
pub mod estimands;
pub mod estimators;
pub mod harness;
pub mod hazard;
pub mod logistic;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use data::{PersonPeriodTable, SubjectRecord, TrialData};
pub use error::{Error, ErrorCategory, Result};
