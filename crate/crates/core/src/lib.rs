//! Evolution and diagnostics for timelike minimal graphs `f: R^{1+n} → R^q`
//! in Minkowski space.
//!
//! The numerical core is generic over the scalar type (`f32`, `f64`, or
//! dual numbers for exact directional derivatives); diagnostics and I/O run
//! in `f64`.

pub mod cli_io;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod grid;
pub mod initial_data;
pub mod scalar;

pub use error::{Error, Result};

pub type FieldState64 = grid::FieldState<f64>;
pub type FieldState32 = grid::FieldState<f32>;
pub type FirstJet64 = geometry::FirstJet<f64>;
pub type FirstJet32 = geometry::FirstJet<f32>;
pub type HTensor64 = geometry::HTensor<f64>;
pub type Rhs64 = evolution::Rhs<f64>;
pub type Stepper64 = evolution::Stepper<f64>;
pub type Stepper32 = evolution::Stepper<f32>;
pub type Jet64 = diagnostics::TimeJet<f64>;
