//! Core algorithms for FLAIR-hyperintensity segmentation studies: volume
//! geometry, preprocessing, training-time augmentation, sliding-window
//! stitching, prediction postprocessing, object-wise evaluation metrics,
//! cohort/fold planning, and synthetic phantoms with brute-force oracles.
//!
//! The crate is `no_std`-compatible (requires `alloc`); every operation is a
//! pure function over in-memory volumes. File formats, parallel orchestration,
//! and the command-line interface live in the companion `flairkit` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod cohort;
pub mod config;
pub mod error;
pub mod metrics;
pub mod phantom;
pub mod postprocess;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod stats;
pub mod tiles;
pub mod volume;

pub use error::Error;
pub use volume::{BinaryMask, Geometry, ProbabilityMap, ScalarVolume};

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
