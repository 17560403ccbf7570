//! Sliding-window inference plumbing: patch tiling with overlap, zero
//! padding for undersized volumes, and mean-blended stitching around a
//! pluggable per-patch predictor.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::volume::{Geometry, ProbabilityMap, ScalarVolume};
use crate::Result;

/// Tiling of a (possibly padded) volume into overlapping windows.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TileGrid {
    pub patch_size: [usize; 3],
    pub stride: [usize; 3],
    /// Start corners in the padded lattice.
    pub windows: Vec<[usize; 3]>,
    /// Volume dims after padding (equal to the input dims when no axis is
    /// smaller than the patch).
    pub padded_dims: [usize; 3],
    /// Low-side padding per axis.
    pub pad_lo: [usize; 3],
}

impl TileGrid {
    pub fn window_count(&self) -> usize {
        self.windows.len()
    }
}

/// Plan the window starts. The stride is `ceil(patch * (1 - overlap))`;
/// windows start at stride multiples with the last one clamped to end at the
/// padded volume edge, giving `max(1, ceil((dim - patch) / stride) + 1)`
/// windows per axis. Volumes smaller than the patch are padded symmetrically
/// (extra voxel on the high side).
pub fn plan_tiles(
    dims: [usize; 3],
    patch_size: [usize; 3],
    overlap_fraction: f64,
) -> Result<TileGrid> {
    if patch_size.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "patch size must be positive, got {patch_size:?}"
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidParameter(format!(
            "overlap fraction must be in [0, 1), got {overlap_fraction}"
        )));
    }
    let padded_dims: [usize; 3] = core::array::from_fn(|a| dims[a].max(patch_size[a]));
    let pad_lo: [usize; 3] = core::array::from_fn(|a| (padded_dims[a] - dims[a]) / 2);
    let stride: [usize; 3] = core::array::from_fn(|a| {
        ((patch_size[a] as f64 * (1.0 - overlap_fraction)).ceil() as usize).max(1)
    });

    let mut axis_starts: [Vec<usize>; 3] = Default::default();
    for a in 0..3 {
        let span = padded_dims[a] - patch_size[a];
        let count = if span == 0 {
            1
        } else {
            span.div_ceil(stride[a]) + 1
        };
        axis_starts[a] = (0..count)
            .map(|i| (i * stride[a]).min(span))
            .collect();
    }

    let mut windows = Vec::with_capacity(
        axis_starts[0].len() * axis_starts[1].len() * axis_starts[2].len(),
    );
    for &z in &axis_starts[2] {
        for &y in &axis_starts[1] {
            for &x in &axis_starts[0] {
                windows.push([x, y, z]);
            }
        }
    }
    Ok(TileGrid {
        patch_size,
        stride,
        windows,
        padded_dims,
        pad_lo,
    })
}

/// Per-patch prediction contract. `start` is the patch's corner in the
/// coordinates of the original (unpadded) volume and may be negative where
/// the patch covers padding; implementations must return one probability in
/// `[0, 1]` per patch voxel, x-fastest.
pub trait Predictor {
    fn predict(&self, patch: &ScalarVolume, start: [i64; 3]) -> Result<Vec<f32>>;
}

/// Constant-probability predictor.
pub struct ConstantPredictor(pub f32);

impl Predictor for ConstantPredictor {
    fn predict(&self, patch: &ScalarVolume, _start: [i64; 3]) -> Result<Vec<f32>> {
        Ok(vec![self.0; patch.data.len()])
    }
}

/// Indicator of a sphere given in voxel coordinates of the original volume.
pub struct SpherePredictor {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Predictor for SpherePredictor {
    fn predict(&self, patch: &ScalarVolume, start: [i64; 3]) -> Result<Vec<f32>> {
        let dims = patch.dims();
        let mut out = Vec::with_capacity(patch.data.len());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = [
                        (start[0] + x as i64) as f64,
                        (start[1] + y as i64) as f64,
                        (start[2] + z as i64) as f64,
                    ];
                    let d2: f64 = (0..3)
                        .map(|a| (p[a] - self.center[a]) * (p[a] - self.center[a]))
                        .sum();
                    out.push(if d2 <= self.radius * self.radius { 1.0 } else { 0.0 });
                }
            }
        }
        Ok(out)
    }
}

/// Analytic field `g(x, y, z) = x_axis / dim_axis` in original-volume voxel
/// coordinates, clamped to `[0, 1]`; position-consistent, so stitching must
/// reproduce it exactly.
pub struct AxisRampPredictor {
    pub axis: usize,
    pub dims: [usize; 3],
}

impl Predictor for AxisRampPredictor {
    fn predict(&self, patch: &ScalarVolume, start: [i64; 3]) -> Result<Vec<f32>> {
        let pdims = patch.dims();
        let denom = self.dims[self.axis] as f64;
        let mut out = Vec::with_capacity(patch.data.len());
        for z in 0..pdims[2] {
            for y in 0..pdims[1] {
                for x in 0..pdims[0] {
                    let local = [x as i64, y as i64, z as i64];
                    let global = start[self.axis] + local[self.axis];
                    out.push((global as f64 / denom).clamp(0.0, 1.0) as f32);
                }
            }
        }
        Ok(out)
    }
}

/// Run the predictor over every window and blend overlapping outputs by
/// unweighted per-voxel mean. Padding is removed; the output lattice equals
/// the input lattice.
pub fn stitch(
    vol: &ScalarVolume,
    predictor: &dyn Predictor,
    grid: &TileGrid,
) -> Result<ProbabilityMap> {
    let dims = vol.dims();
    let expected_padded: [usize; 3] = core::array::from_fn(|a| dims[a].max(grid.patch_size[a]));
    if expected_padded != grid.padded_dims {
        return Err(Error::InvalidParameter(format!(
            "tile grid was planned for dims {:?}, volume has {:?}",
            grid.padded_dims, dims
        )));
    }

    // Pad with zeros, symmetric per axis (extra voxel high).
    let padded = if grid.padded_dims == dims {
        vol.clone()
    } else {
        let geom = Geometry {
            dims: grid.padded_dims,
            spacing: vol.geometry.spacing,
            origin: core::array::from_fn(|a| {
                vol.geometry.origin[a] - grid.pad_lo[a] as f32 * vol.geometry.spacing[a]
            }),
        };
        let mut data = vec![0.0f32; geom.voxel_count()];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data[geom.index(
                        x + grid.pad_lo[0],
                        y + grid.pad_lo[1],
                        z + grid.pad_lo[2],
                    )] = vol.at(x, y, z);
                }
            }
        }
        ScalarVolume { geometry: geom, data }
    };

    let pgeom = padded.geometry;
    let [px, py, pz] = grid.patch_size;
    let patch_len = px * py * pz;
    let mut sums = vec![0.0f64; pgeom.voxel_count()];
    let mut counts = vec![0u32; pgeom.voxel_count()];

    for &win in &grid.windows {
        // Extract the patch; its origin tracks the window position so
        // predictors can recover global coordinates either way.
        let patch_geom = Geometry {
            dims: grid.patch_size,
            spacing: pgeom.spacing,
            origin: core::array::from_fn(|a| {
                pgeom.origin[a] + win[a] as f32 * pgeom.spacing[a]
            }),
        };
        let mut patch_data = Vec::with_capacity(patch_len);
        for z in 0..pz {
            for y in 0..py {
                for x in 0..px {
                    patch_data.push(padded.at(x + win[0], y + win[1], z + win[2]));
                }
            }
        }
        let patch = ScalarVolume {
            geometry: patch_geom,
            data: patch_data,
        };
        let start: [i64; 3] =
            core::array::from_fn(|a| win[a] as i64 - grid.pad_lo[a] as i64);
        let pred = predictor.predict(&patch, start)?;
        if pred.len() != patch_len {
            return Err(Error::Predictor(format!(
                "expected {patch_len} values, got {}",
                pred.len()
            )));
        }
        let mut i = 0;
        for z in 0..pz {
            for y in 0..py {
                for x in 0..px {
                    let v = pred[i];
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Predictor(format!(
                            "probability {v} outside [0, 1]"
                        )));
                    }
                    let gi = pgeom.index(x + win[0], y + win[1], z + win[2]);
                    sums[gi] += v as f64;
                    counts[gi] += 1;
                    i += 1;
                }
            }
        }
    }

    debug_assert!(counts.iter().all(|&c| c >= 1), "tiling left a voxel uncovered");

    // Mean-blend and strip the padding.
    let mut out = vec![0.0f32; vol.data.len()];
    let mut idx = 0;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let gi = pgeom.index(
                    x + grid.pad_lo[0],
                    y + grid.pad_lo[1],
                    z + grid.pad_lo[2],
                );
                out[idx] = (sums[gi] / counts[gi] as f64) as f32;
                idx += 1;
            }
        }
    }
    ProbabilityMap::new(vol.geometry, out)
}
