//! Imaginary-time finite-difference solver for the three-dimensional
//! Schrödinger equation.
//!
//! A random (or supplied) wavefunction on a padded cubic lattice is evolved in
//! imaginary time until its energy stops changing; the result is the ground
//! state of the chosen potential. Excited states come from snapshots of the
//! evolution with lower states projected out, or from evolution restricted to
//! a reflection-symmetry sector. The lattice can be split into x-slabs handled
//! by workers that exchange boundary planes every step, either as threads or
//! as processes talking over TCP, and results do not depend on the split.
//!
//! Kernels are generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the double-precision types used by the driver and the files.

pub mod bench;
pub mod config;
pub mod driver;
pub mod error;
pub mod evolve;
pub mod export;
pub mod lattice;
pub mod multires;
pub mod observables;
pub mod parallel;
pub mod potential;
pub mod scalar;
pub mod states;
mod stencil;

pub use config::{PotentialChoice, RunConfig, TransportChoice};
pub use error::{Error, Result};
pub use evolve::{EnergyRecord, EvolveParams};
pub use lattice::{Field3D, LatticeSpec, Slab};
pub use observables::Observables;
pub use potential::{Potential, PotentialGrid};
pub use scalar::Real;
pub use states::{Axis, Parity, SymmetryConstraint};

pub type Spec = LatticeSpec<f64>;
pub type Field = Field3D<f64>;
pub type Grid = PotentialGrid<f64>;
pub type Params = EvolveParams<f64>;
pub type EvolutionState = evolve::EvolutionState<f64>;
pub type SolveReport = driver::SolveReport<f64>;
