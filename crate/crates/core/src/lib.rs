//! Moment-method boundary control of viscoelastic wave equations with memory.
//!
//! The pipeline runs spectrum → normalized kernel → modal Volterra responses
//! → Gram/Riesz diagnostics → moment synthesis → forward verification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conv;
pub mod error;
pub mod fit;
pub mod grid;
pub mod kernel;
pub mod moment;
pub mod par;
pub mod riesz;
pub mod sim;
pub mod spectral;
pub mod spline;
pub mod volterra;

pub use error::{Error, Result};
pub use grid::{Extrapolation, TimeGrid};
