//! Rough-slab scattering at millimetre-wave frequencies: random interface
//! synthesis, 2-D TE FDTD with a plane-wave source, near-to-far-field
//! transformation, Monte Carlo ensembles, compact scattering models and a
//! ray-tube tracer that consumes them.

mod error;

pub mod cli;
pub mod ensemble;
pub mod fdtd;
pub mod media;
pub mod ntff;
pub mod sbr;
pub mod scatmodel;
pub mod surface;

pub use error::{Error, Result};
