//! Two-time correlation functions of a single bosonic mode.

pub mod analysis;
pub mod correlators;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod phasespace;
pub mod propagator;

pub use error::{Error, Result};
