//! Koopman-predicted obstacle avoidance for multi-UAV switched MPC.
//!
//! The crate is organised bottom-up:
//!
//! - [`kinematics`]: switched quadrotor kinematics and the 13-mode velocity alphabet.
//! - [`koopman`]: lifting dictionary, EDMD operator fitting and multi-step forecasts.
//! - [`avoidance`]: safety spheres, tangent polytopes and the linearised constraints.
//! - [`smpc`]: the per-agent switched OCP, its tree-search solver and the sequential
//!   distributed round.
//! - [`scenarios`]: obstacle generators, formations, sensing noise, metrics and the
//!   closed-loop driver.
//! - [`config`] and [`output`]: scenario files, presets and the CSV/JSON artifacts.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avoidance;
pub mod config;
pub mod error;
pub mod kinematics;
pub mod koopman;
pub mod output;
pub mod scenarios;
pub mod smpc;

pub use error::{Error, Result};

/// 3-vector used for every position in the crate.
pub type Vec3 = nalgebra::Vector3<f64>;
