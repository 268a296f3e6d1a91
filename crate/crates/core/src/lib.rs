//! Sensor fault detection, isolation and identification for a single-spool turbojet using a
//! bank of hybrid Kalman filters anchored on a nonlinear on-board engine model.

pub mod engine;
pub mod error;
pub mod linalg;

pub use error::{Error, Result};
pub mod linearize;
pub mod fusion;
pub mod glr;
pub mod hkf;
pub mod mm_fdi;
pub mod baselines;
pub mod config;
pub mod harness;
