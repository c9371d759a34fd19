//! Driven-dissipative chains of three-level Rydberg atoms: single-atom rate
//! analytics, many-body master equation and quantum-trajectory engines, the
//! coherent cluster model and a facilitated classical spin model.

pub mod cluster;
pub mod config;
pub mod error;
pub mod experiments;
pub mod kcm;
pub mod quantum;
pub mod regime;
pub mod rng;
pub mod single_atom;

pub use config::{Boundary, Potential, SystemConfig};
pub use error::{Error, Result};
pub use regime::{AtomLevel, Species};
