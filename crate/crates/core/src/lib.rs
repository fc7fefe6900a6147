//! Dynamic origin-destination demand estimation, forecasting and incident
//! analysis on a point-queue dynamic traffic assignment model.
//!
//! The pipeline mirrors an offline-calibrate / online-predict workflow:
//!
//! 1. [`estimation::bilevel_estimate`] adjusts a prior OD trip table until
//!    simulated link flows match observed counts, re-running the
//!    [`simulator`] between least-squares updates.
//! 2. [`forecast`] fits ARIMA models per OD pair and predicts the next
//!    intervals.
//! 3. [`incident`] replays the predicted demand with time-bounded capacity
//!    cuts and compares delay and throughput against a baseline.

pub mod csvio;
pub mod estimation;
pub mod forecast;
pub mod incident;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod simulator;
pub mod synth;
