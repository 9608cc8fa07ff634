//! Mobility-aware adaptive handover control for a disaggregated RAN.
//!
//! The crate is organised bottom-up:
//!
//! - [`radio`]: cell topology, path loss, shadowing, RSRP and throughput.
//! - [`mobility`]: multi-modal UE traces and kinematic descriptors.
//! - [`predictors`]: k-NN mode classifier and random-forest regressors.
//! - [`ppo`]: actor-critic cell ranker trained with clipped PPO.
//! - [`controllers`]: A3, load-balance, ML-assisted and AHC decision rules.
//! - [`ric`]: A1/E2 message schemas and the rApp/xApp steps.
//! - [`sim`]: the tick loop, KPIs and multi-seed aggregation.
//! - [`config`]: the run configuration shared by every command.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controllers;
pub mod error;
pub mod geom;
pub mod mobility;
pub mod ppo;
pub mod predictors;
pub mod radio;
pub mod rng;
pub mod ric;
pub mod sim;

pub use error::{Error, Result};
