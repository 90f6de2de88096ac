//! Particle systems with factorized duality on the discrete torus: models,
//! equilibrium measures, dynamics, dual processes, orthogonal-polynomial
//! fields and their scaling limits.

#![allow(clippy::needless_range_loop)]

pub mod dual;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod fields;
pub mod lattice;
pub mod measures;
pub mod registry;
pub mod rng;
pub mod testfn;
pub mod theory;

pub use error::{Error, Result};
pub use lattice::{Configuration, Interaction, LabeledTuple, ModelParams, Site, Torus};
