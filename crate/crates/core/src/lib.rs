//! Multi-RIS uplink 3D localization.
//!
//! A single multi-antenna BS observes a narrowband pilot from the UE through
//! several passive reconfigurable intelligent surfaces. The crate simulates
//! that sounding, separates the per-RIS reflections with zero forcing,
//! recovers each RIS angle of arrival with gridless atomic-norm minimization
//! and root-MUSIC, maps the angles to a 3D position, and evaluates the
//! Fisher-information position error bound of the same scene.
//!
//! Numerical modules are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the harness and CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anm;
pub mod aoa;
pub mod config;
pub mod crlb;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod locator;
pub mod scalar;
pub mod sounding;
pub mod zf;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Position = geometry::Position3<f64>;
pub type Angles = geometry::AnglePair<f64>;
pub type Radio = geometry::RadioParams<f64>;
pub type Scene = sounding::SceneConfig<f64>;
pub type Ris = sounding::RisConfig<f64>;
pub type Schedule = sounding::ProfileSchedule<f64>;
pub type Record = sounding::SoundingRecord<f64>;
pub type Separated = zf::SeparatedObservation<f64>;
pub type Solution = anm::AnmSolution<f64>;
pub type Solver = anm::SolverOptions<f64>;
pub type Aoa = aoa::AoaEstimate<f64>;
pub type Peb = crlb::PebReport<f64>;
