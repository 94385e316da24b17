//! Random-matrix τ-functions and the integrable lattices they drive.
//!
//! Partition functions of the unitary and orthogonal ensembles with
//! polynomial potentials give the Toda and Pfaff Lax matrices, either from
//! moments or from closed-form Gaussian data. The crate evolves the lattice
//! flows from that data and checks the differential identities relating
//! them, down to the Haantjes tensor of the limiting hydrodynamic chain.

pub mod continuum;
pub mod error;
pub mod export;
pub mod fd;
pub mod flows;
pub mod gauss;
pub mod identities;
pub mod lax;
pub mod linalg;
pub mod moments;
pub mod ode;
pub mod pfaffian;
pub mod tau;
pub mod weight;

pub use error::{Error, Result};
pub use weight::CouplingVector;
