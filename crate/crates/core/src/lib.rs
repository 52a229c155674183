//! Trap waveform synthesis and verification for cooling a trapped-ion qubit
//! by swapping its motional state with a cold coolant ion.

pub mod ansatz;
pub mod config;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod interp;
pub mod io;
pub mod jet;
pub mod protocol;
pub mod pulse;
pub mod state;
pub mod units;

pub use error::{Error, Result};
