//! Particle-continuum multiscale simulation of sea-ice floes.
//!
//! Two engines share one set of physics:
//!
//! * a discrete element model ([`dem`]) that integrates every floe as a rigid
//!   disc with Hookean contact forces, Coulomb-capped tangential friction and
//!   quadratic ocean drag, and
//! * a coarse finite-volume solver ([`continuum`]) for cell-averaged
//!   concentration, momentum density and angular-momentum density, advected
//!   with frozen cell velocities by a Lax-Friedrichs scheme.
//!
//! The [`coupling`] module runs one small doubly-periodic DEM inside each
//! coarse cell, feeds the measured statistics to the continuum solver, and
//! relaxes every cell back onto the continuum solution with gradual updates.
//! [`harness`] defines the four standard scenarios, the full-domain DEM used
//! as the reference solution, and the L2 convergence-study machinery.

pub mod config;
pub mod continuum;
pub mod coupling;
pub mod dem;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod ocean;
pub mod types;

pub use error::SimError;
