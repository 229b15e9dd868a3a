//! Measurement-based quantum computing patterns, a dense statevector
//! simulator, graph mergers and selective masking plans that let a client
//! hide which of two public computations a server is running, plus the
//! supporting blindness statistics and no-go demonstrations.

pub mod blindness;
pub mod fixtures;
pub mod format;
pub mod masking;
pub mod merge;
pub mod nogo;
pub mod pattern;
pub mod protocol;
pub mod sim;
