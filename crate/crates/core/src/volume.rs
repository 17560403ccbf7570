//! Volume grid types shared by every stage of the pipeline.
//!
//! Voxel data is stored in x-fastest order (the first axis varies quickest),
//! matching the on-disk layout of NIfTI files so buffers can round-trip
//! without reordering. The voxel at `(x, y, z)` sits at physical position
//! `origin + (x, y, z) * spacing` (millimetres, voxel centers).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// Lattice geometry: dimensions in voxels, spacing and origin in mm.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    pub origin: [f32; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f32; 3], origin: [f32; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        Ok(Geometry {
            dims,
            spacing,
            origin,
        })
    }

    /// Isotropic unit-spacing geometry at the origin; handy in tests.
    pub fn isotropic(dims: [usize; 3]) -> Self {
        Geometry {
            dims,
            spacing: [1.0; 3],
            origin: [0.0; 3],
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index of `(x, y, z)`, x-fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Two geometries describe the same lattice (dims exact, spacing and
    /// origin within 1e-4 mm, loose enough for 32-bit header round-trips).
    pub fn compatible(&self, other: &Geometry) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(&other.spacing)
                .all(|(a, b)| (a - b).abs() < 1e-4)
            && self
                .origin
                .iter()
                .zip(&other.origin)
                .all(|(a, b)| (a - b).abs() < 1e-4)
    }

    fn check_same_lattice(&self, other: &Geometry) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::GeometryMismatch {
                expected: self.dims,
                got: other.dims,
            });
        }
        Ok(())
    }
}

/// 3D intensity grid; the carrier of FLAIR data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    pub geometry: Geometry,
    pub data: Vec<f32>,
}

impl ScalarVolume {
    pub fn new(geometry: Geometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geometry.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(String::from(
                "non-finite voxel value",
            )));
        }
        Ok(ScalarVolume { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: f32) -> Self {
        let n = geometry.voxel_count();
        ScalarVolume {
            geometry,
            data: vec![value; n],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.geometry.index(x, y, z)]
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }
}

/// Segmentation label grid; one bit of information per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub geometry: Geometry,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(geometry: Geometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "mask length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(BinaryMask { geometry, data })
    }

    pub fn empty(geometry: Geometry) -> Self {
        let n = geometry.voxel_count();
        BinaryMask {
            geometry,
            data: vec![false; n],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.geometry.index(x, y, z)]
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Voxelwise union; lattices must match.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geometry.check_same_lattice(&other.geometry)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(BinaryMask {
            geometry: self.geometry,
            data,
        })
    }

    /// Voxelwise set difference `self \ other`; lattices must match.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.geometry.check_same_lattice(&other.geometry)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a && !b)
            .collect();
        Ok(BinaryMask {
            geometry: self.geometry,
            data,
        })
    }

    /// Number of voxels set in both masks; lattices must match.
    pub fn overlap_count(&self, other: &BinaryMask) -> Result<usize> {
        self.geometry.check_same_lattice(&other.geometry)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count())
    }
}

/// Per-voxel probability grid produced by inference; values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub geometry: Geometry,
    pub data: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(geometry: Geometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geometry.voxel_count() {
            return Err(Error::InvalidVolume(format!(
                "probability map length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidVolume(String::from(
                "probability outside [0, 1]",
            )));
        }
        Ok(ProbabilityMap { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: f32) -> Result<Self> {
        let n = geometry.voxel_count();
        ProbabilityMap::new(geometry, vec![value; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    /// A hard mask reinterpreted as probabilities (1.0 inside, 0.0 outside).
    pub fn from_mask(mask: &BinaryMask) -> Self {
        ProbabilityMap {
            geometry: mask.geometry,
            data: mask.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Physical volume of one voxel in millilitres: `product(spacing) / 1000`.
pub fn voxel_volume_ml(spacing: [f32; 3]) -> f64 {
    spacing[0] as f64 * spacing[1] as f64 * spacing[2] as f64 / 1000.0
}

/// Physical volume of a mask in millilitres.
pub fn mask_volume_ml(mask: &BinaryMask) -> f64 {
    mask.count_set() as f64 * voxel_volume_ml(mask.geometry.spacing)
}
