//! Planning, calibration, machine compilation and evaluation of
//! roll-bend-advance programs for shaping guidewire tips.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod error;
pub mod eval;
pub mod formats;
pub mod geom;
pub mod machine;
pub mod planner;
pub mod wire_model;

pub use error::{Error, Result};
