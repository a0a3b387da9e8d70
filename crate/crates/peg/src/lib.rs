//! File formats, experiment drivers and the `peg` command-line tool built on
//! `peg-core`.

pub mod experiments;
pub mod io;

pub use peg_core as core;
