//! Quantum correlations of indistinguishable fermions.
//!
//! Optimal entanglement witnesses and the fermionic generalized robustness,
//! the Schliemann concurrence for two fermions in four modes, a geometric
//! discord over antisymmetrized classical states, and an extended Hubbard
//! chain whose ground-state robustness maps out its phase diagram.

pub mod discord;
pub mod error;
pub mod files;
pub mod fock;
pub mod hubbard;
pub mod linalg;
pub mod schliemann;
pub mod sdp;
pub mod states;
pub mod witness;

pub use error::{Error, Result};
