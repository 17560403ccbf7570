//! Error type shared by all core operations.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two volumes were combined but their voxel lattices differ.
    GeometryMismatch {
        expected: [usize; 3],
        got: [usize; 3],
    },
    /// A volume failed a construction invariant (empty axis, non-positive
    /// spacing, wrong buffer length, non-finite data).
    InvalidVolume(String),
    /// A caller-supplied parameter is outside its valid range.
    InvalidParameter(String),
    /// An operation requiring a nonempty mask received an empty one.
    EmptyMask,
    /// An operation requiring at least one case received none.
    EmptyInput,
    /// A metric restricted to true-positive cases was called on another
    /// outcome.
    NotTruePositive,
    /// A predictor violated its contract (wrong patch length or values
    /// outside [0, 1]).
    Predictor(String),
    /// A brute-force oracle was asked to run above its size cap.
    OracleSizeCap { voxels: usize, cap: usize },
    /// A cohort record failed validation.
    InvalidRecord(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::GeometryMismatch { expected, got } => write!(
                f,
                "geometry mismatch: expected {}x{}x{}, got {}x{}x{}",
                expected[0], expected[1], expected[2], got[0], got[1], got[2]
            ),
            Error::InvalidVolume(msg) => write!(f, "invalid volume: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::EmptyMask => write!(f, "operation requires a nonempty mask"),
            Error::EmptyInput => write!(f, "operation requires at least one case"),
            Error::NotTruePositive => {
                write!(f, "object-wise scores are defined for true-positive cases only")
            }
            Error::Predictor(msg) => write!(f, "predictor contract violation: {msg}"),
            Error::OracleSizeCap { voxels, cap } => {
                write!(f, "oracle size cap exceeded: {voxels} voxels > {cap}")
            }
            Error::InvalidRecord(msg) => write!(f, "invalid case record: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
