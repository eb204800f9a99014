//! Quantum graph circuits with quasi-delta vertex conditions.
//!
//! The crate covers the discrete model (graph, couplings, controls), its finite element
//! assembly, spectral scales, Crank–Nicolson propagation, the gauge map between boundary
//! and induction pictures, the sawtooth stability experiment and control synthesis.

pub mod boundary;
pub mod control;
pub mod error;
pub mod fem;
pub mod gauge;
pub mod graph;
pub mod potential;
pub mod propagator;
pub mod spectral;
pub mod stability;
pub mod synthesis;

pub use faer::c64;

pub use control::{ControlFunction, ControlKind};
pub use error::{Error, Result};
pub use fem::{FormFamily, Mesh};
pub use graph::{GraphSpec, IncidencePhases, QuantumGraph, QuasiDelta};
pub use potential::{theta_from_chi, EdgePotential};
pub use propagator::{Drive, Driven};
pub use spectral::ScaleSpace;
