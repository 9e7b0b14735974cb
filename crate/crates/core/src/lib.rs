//! Simulation and estimation toolkit for transverse-mode-resolved four-wave
//! mixing photon pairs in few-mode polarization-maintaining fiber.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod estimation;
pub mod fields;
pub mod fiber;
pub mod fwm;
pub mod modes;
pub mod pipeline;
pub mod special;
pub mod spectrum;
pub mod tomography;

pub use error::{FwmError, Result};
