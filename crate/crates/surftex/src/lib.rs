//! Synthesis of height-field textures of machined metal surfaces.
//!
//! Two families of surfaces are covered:
//!
//! * **Sandblasted** surfaces are stationary random fields. They are
//!   reproduced from an exemplar measurement with spectral generators
//!   (random phase noise and asymptotic discrete spot noise), combined
//!   with quilting when the requested image is larger than the exemplar.
//! * **Milled** surfaces are non-stationary patterns of overlapping
//!   ring-shaped cuts. They are generated by a fully parametric
//!   procedural model driven by the machine settings (head diameter,
//!   overlap, feed spacing, tool-path).
//!
//! All images are [`HeightField`]s: rectangular grids of heights in µm
//! with a square physical pixel spacing.

pub mod cli;
pub mod field;
pub mod mill;
pub mod quilt;
pub mod rng;
pub mod sandblast;
pub mod spectral;
pub mod stationary;

pub use field::{HeightField, SummaryStats};
pub use rng::RandomStream;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not an HFLD file")]
    BadMagic,
    #[error("malformed HFLD header: {0}")]
    BadHeader(String),
    #[error("truncated payload: expected {expected} values, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("non-finite height value at index {0}")]
    NonFinite(usize),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("window out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
