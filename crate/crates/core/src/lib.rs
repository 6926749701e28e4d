//! Fast QTMT partitioning with reference-frame partition maps: a toy
//! closed-loop encoder, exhaustive and map-guided partition search, and the
//! Bjontegaard and content-complexity tooling used to compare them.

pub mod bd;
pub mod codec;
pub mod complexity;
pub mod error;
pub mod frame_io;
pub mod gop;
pub mod qtmt;
pub mod report;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
