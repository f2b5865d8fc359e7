//! Sequential decentralized estimation of a scalar parameter over a sensor
//! network.
//!
//! Every sensor observes `y = x·h + w` through its own channel and keeps two
//! running statistics: the observed correlation `V` and the observed Fisher
//! information `U`. The centralized estimator is `V / U`, stopped as soon as
//! `U` reaches a target. The decentralized estimators reproduce that rule at a
//! fusion center (FC) from a few bits per sensor, reporting either at fixed
//! times (uniform sampling) or whenever a running sum leaves a band
//! (level-triggered sampling).
//!
//! Module map:
//!
//! * [`signal`]: observation model, local increments, centralized MLE and
//!   stopping rules.
//! * [`quant`]: mid-riser quantizer and bit-exact index packing.
//! * [`estimators`]: sensor and FC state machines for every scheme, plus the
//!   message codec.
//! * [`calibration`]: quantizer ranges and sampling thresholds.
//! * [`experiments`]: trial runner, Monte Carlo sweeps, CSV output and config
//!   files.
//! * [`stats`]: normal cdf/quantile, empirical quantiles, KS test.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod par;
pub mod quant;
pub mod rng;
pub mod signal;
pub mod stats;

pub use error::{Error, Result};
