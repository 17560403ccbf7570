//! The four-step preprocessing chain producing network-ready volumes:
//! isotropic resampling, tight head cropping, percentile intensity clipping,
//! and zero-mean normalization of nonzero values. Masks travel through the
//! same geometric chain with nearest-neighbor interpolation.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::stats;
use crate::volume::{BinaryMask, Geometry, ScalarVolume};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Trilinear; first-order spline.
    Linear,
    /// Nearest neighbor; the only valid choice for label masks.
    Nearest,
}

/// How nonzero voxels are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// Subtract the mean and divide by the population std.
    ZScore,
    /// Subtract the mean only.
    MeanOnly,
}

/// Axis-aligned crop region, `lo` inclusive and `hi` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CropBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CropBox {
    pub fn full(dims: [usize; 3]) -> Self {
        CropBox {
            lo: [0; 3],
            hi: dims,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }
}

/// Resample a volume onto a new spacing. Output dims are
/// `round(dims * spacing / target)` with a minimum of 1 per axis; the output
/// shares the input origin (voxel-center convention) and samples are clamped
/// to the input border.
pub fn resample_isotropic(
    vol: &ScalarVolume,
    target_spacing: [f32; 3],
    interpolation: Interpolation,
) -> Result<ScalarVolume> {
    if target_spacing.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target spacing must be positive, got {target_spacing:?}"
        )));
    }
    let src = &vol.geometry;
    let out_dims = core::array::from_fn(|a| {
        let extent = src.dims[a] as f64 * src.spacing[a] as f64;
        ((extent / target_spacing[a] as f64).round() as usize).max(1)
    });
    let out_geom = Geometry {
        dims: out_dims,
        spacing: target_spacing,
        origin: src.origin,
    };
    // Input coordinate of output voxel j along axis a, in input voxel units.
    let scale: [f64; 3] =
        core::array::from_fn(|a| target_spacing[a] as f64 / src.spacing[a] as f64);

    let mut data = vec![0.0f32; out_geom.voxel_count()];
    let [nx, ny, nz] = out_dims;
    let [sx, sy, sz] = src.dims;
    let mut idx = 0;
    for z in 0..nz {
        let cz = z as f64 * scale[2];
        for y in 0..ny {
            let cy = y as f64 * scale[1];
            for x in 0..nx {
                let cx = x as f64 * scale[0];
                data[idx] = match interpolation {
                    Interpolation::Nearest => {
                        let ix = (cx.round() as usize).min(sx - 1);
                        let iy = (cy.round() as usize).min(sy - 1);
                        let iz = (cz.round() as usize).min(sz - 1);
                        vol.at(ix, iy, iz)
                    }
                    Interpolation::Linear => trilinear(vol, cx, cy, cz),
                };
                idx += 1;
            }
        }
    }
    ScalarVolume::new(out_geom, data)
}

/// Resample a mask with nearest-neighbor interpolation (values stay binary).
pub fn resample_mask(mask: &BinaryMask, target_spacing: [f32; 3]) -> Result<BinaryMask> {
    let as_scalar = ScalarVolume::new(
        mask.geometry,
        mask.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )?;
    let res = resample_isotropic(&as_scalar, target_spacing, Interpolation::Nearest)?;
    BinaryMask::new(res.geometry, res.data.iter().map(|&v| v != 0.0).collect())
}

#[inline]
fn trilinear(vol: &ScalarVolume, cx: f64, cy: f64, cz: f64) -> f32 {
    let [sx, sy, sz] = vol.geometry.dims;
    let clamp = |c: f64, n: usize| c.clamp(0.0, (n - 1) as f64);
    let (cx, cy, cz) = (clamp(cx, sx), clamp(cy, sy), clamp(cz, sz));
    let (x0, y0, z0) = (cx.floor() as usize, cy.floor() as usize, cz.floor() as usize);
    let (x1, y1, z1) = ((x0 + 1).min(sx - 1), (y0 + 1).min(sy - 1), (z0 + 1).min(sz - 1));
    let (fx, fy, fz) = (cx - x0 as f64, cy - y0 as f64, cz - z0 as f64);

    let v000 = vol.at(x0, y0, z0) as f64;
    let v100 = vol.at(x1, y0, z0) as f64;
    let v010 = vol.at(x0, y1, z0) as f64;
    let v110 = vol.at(x1, y1, z0) as f64;
    let v001 = vol.at(x0, y0, z1) as f64;
    let v101 = vol.at(x1, y0, z1) as f64;
    let v011 = vol.at(x0, y1, z1) as f64;
    let v111 = vol.at(x1, y1, z1) as f64;

    let c00 = v000 * (1.0 - fx) + v100 * fx;
    let c10 = v010 * (1.0 - fx) + v110 * fx;
    let c01 = v001 * (1.0 - fx) + v101 * fx;
    let c11 = v011 * (1.0 - fx) + v111 * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    (c0 * (1.0 - fz) + c1 * fz) as f32
}

/// Tight crop around the head: the minimal box containing all voxels brighter
/// than `threshold_fraction * max`, expanded by `margin` voxels and clamped to
/// the volume. All-background input returns the full volume unchanged.
pub fn crop_to_head(
    vol: &ScalarVolume,
    threshold_fraction: f32,
    margin: usize,
) -> (ScalarVolume, CropBox) {
    let dims = vol.dims();
    let max = vol.max_value();
    let threshold = threshold_fraction * max;

    let mut lo = dims;
    let mut hi = [0usize; 3];
    let mut any = false;
    let mut idx = 0;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if vol.data[idx] > threshold {
                    any = true;
                    let p = [x, y, z];
                    for a in 0..3 {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a] + 1);
                    }
                }
                idx += 1;
            }
        }
    }
    if !any {
        return (vol.clone(), CropBox::full(dims));
    }
    for a in 0..3 {
        lo[a] = lo[a].saturating_sub(margin);
        hi[a] = (hi[a] + margin).min(dims[a]);
    }
    let cb = CropBox { lo, hi };
    (crop_volume(vol, &cb), cb)
}

/// Extract a crop box from a volume (origin shifts with the box).
pub fn crop_volume(vol: &ScalarVolume, cb: &CropBox) -> ScalarVolume {
    let dims = cb.dims();
    let geom = Geometry {
        dims,
        spacing: vol.geometry.spacing,
        origin: core::array::from_fn(|a| {
            vol.geometry.origin[a] + cb.lo[a] as f32 * vol.geometry.spacing[a]
        }),
    };
    let mut data = Vec::with_capacity(geom.voxel_count());
    for z in cb.lo[2]..cb.hi[2] {
        for y in cb.lo[1]..cb.hi[1] {
            for x in cb.lo[0]..cb.hi[0] {
                data.push(vol.at(x, y, z));
            }
        }
    }
    ScalarVolume { geometry: geom, data }
}

/// Extract a crop box from a mask.
pub fn crop_mask(mask: &BinaryMask, cb: &CropBox) -> BinaryMask {
    let dims = cb.dims();
    let geom = Geometry {
        dims,
        spacing: mask.geometry.spacing,
        origin: core::array::from_fn(|a| {
            mask.geometry.origin[a] + cb.lo[a] as f32 * mask.geometry.spacing[a]
        }),
    };
    let mut data = Vec::with_capacity(geom.voxel_count());
    for z in cb.lo[2]..cb.hi[2] {
        for y in cb.lo[1]..cb.hi[1] {
            for x in cb.lo[0]..cb.hi[0] {
                data.push(mask.at(x, y, z));
            }
        }
    }
    BinaryMask { geometry: geom, data }
}

/// Clamp intensities to the `[low_pct, high_pct]` percentiles of the volume's
/// value distribution (shared linear-interpolation percentile convention).
pub fn clip_intensities(vol: &ScalarVolume, low_pct: f64, high_pct: f64) -> Result<ScalarVolume> {
    if !(0.0..=100.0).contains(&low_pct) || !(0.0..=100.0).contains(&high_pct) || low_pct >= high_pct
    {
        return Err(Error::InvalidParameter(format!(
            "percentile range [{low_pct}, {high_pct}] is invalid"
        )));
    }
    let mut sorted: Vec<f64> = vol.data.iter().map(|&v| v as f64).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let lo = stats::percentile_sorted(&sorted, low_pct) as f32;
    let hi = stats::percentile_sorted(&sorted, high_pct) as f32;
    let data = vol.data.iter().map(|&v| v.clamp(lo, hi)).collect();
    ScalarVolume::new(vol.geometry, data)
}

/// Zero-mean (and optionally unit-std) normalization over the set of nonzero
/// voxels. Voxels that are exactly 0 stay exactly 0. Falls back to mean-only
/// when fewer than two nonzero voxels exist or their std is zero.
pub fn normalize_nonzero(vol: &ScalarVolume, mode: NormalizeMode) -> ScalarVolume {
    let nonzero: Vec<f64> = vol
        .data
        .iter()
        .filter(|&&v| v != 0.0)
        .map(|&v| v as f64)
        .collect();
    if nonzero.is_empty() {
        return vol.clone();
    }
    let (mean, std) = stats::mean_population_std(&nonzero);
    let divide = matches!(mode, NormalizeMode::ZScore) && nonzero.len() > 1 && std > 0.0;
    let data = vol
        .data
        .iter()
        .map(|&v| {
            if v == 0.0 {
                0.0
            } else {
                let centered = v as f64 - mean;
                (if divide { centered / std } else { centered }) as f32
            }
        })
        .collect();
    ScalarVolume {
        geometry: vol.geometry,
        data,
    }
}

/// Knobs for [`preprocess_pipeline`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_spacing: [f32; 3],
    pub head_threshold_fraction: f32,
    pub crop_margin: usize,
    pub clip_low_pct: f64,
    pub clip_high_pct: f64,
    pub normalize: NormalizeMode,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_spacing: [1.0; 3],
            head_threshold_fraction: 0.02,
            crop_margin: 2,
            clip_low_pct: 0.0,
            clip_high_pct: 99.5,
            normalize: NormalizeMode::ZScore,
        }
    }
}

/// Everything needed to push a mask through the same geometric chain, or to
/// map a mask back into the original lattice.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PreprocMeta {
    pub original: Geometry,
    pub resampled_dims: [usize; 3],
    pub crop: CropBox,
    pub clip_bounds: [f32; 2],
    pub config: PreprocessConfig,
}

/// Full chain: resample to isotropic spacing (linear), crop to head, clip
/// intensities, normalize nonzero values. Returns the processed volume plus
/// the bookkeeping needed to map masks through identically.
pub fn preprocess_pipeline(
    vol: &ScalarVolume,
    cfg: &PreprocessConfig,
) -> Result<(ScalarVolume, PreprocMeta)> {
    let resampled = resample_isotropic(vol, cfg.target_spacing, Interpolation::Linear)?;
    let resampled_dims = resampled.dims();
    let (cropped, crop) = crop_to_head(&resampled, cfg.head_threshold_fraction, cfg.crop_margin);
    let clipped = clip_intensities(&cropped, cfg.clip_low_pct, cfg.clip_high_pct)?;
    let lo = clipped.min_value();
    let hi = clipped.max_value();
    let normalized = normalize_nonzero(&clipped, cfg.normalize);
    let meta = PreprocMeta {
        original: vol.geometry,
        resampled_dims,
        crop,
        clip_bounds: [lo, hi],
        config: cfg.clone(),
    };
    Ok((normalized, meta))
}

/// Push a mask through the geometric part of the chain (nearest-neighbor
/// resample, then the recorded crop).
pub fn map_mask_through(mask: &BinaryMask, meta: &PreprocMeta) -> Result<BinaryMask> {
    let resampled = resample_mask(mask, meta.config.target_spacing)?;
    if resampled.dims() != meta.resampled_dims {
        return Err(Error::GeometryMismatch {
            expected: meta.resampled_dims,
            got: resampled.dims(),
        });
    }
    Ok(crop_mask(&resampled, &meta.crop))
}

/// Map a mask living in the preprocessed lattice back to the original one:
/// undo the crop (zero padding), then nearest-neighbor resample to the
/// original spacing and dims.
pub fn unmap_mask(mask: &BinaryMask, meta: &PreprocMeta) -> Result<BinaryMask> {
    if mask.dims() != meta.crop.dims() {
        return Err(Error::GeometryMismatch {
            expected: meta.crop.dims(),
            got: mask.dims(),
        });
    }
    // Re-embed into the resampled lattice.
    let geom = Geometry {
        dims: meta.resampled_dims,
        spacing: meta.config.target_spacing,
        origin: meta.original.origin,
    };
    let mut embedded = BinaryMask::empty(geom);
    let cb = &meta.crop;
    for z in 0..mask.dims()[2] {
        for y in 0..mask.dims()[1] {
            for x in 0..mask.dims()[0] {
                if mask.at(x, y, z) {
                    let i = geom.index(x + cb.lo[0], y + cb.lo[1], z + cb.lo[2]);
                    embedded.data[i] = true;
                }
            }
        }
    }
    // Back to the original lattice: sample the embedded mask at the original
    // voxel positions.
    let orig = meta.original;
    let scale: [f64; 3] = core::array::from_fn(|a| {
        orig.spacing[a] as f64 / meta.config.target_spacing[a] as f64
    });
    let mut data = vec![false; orig.voxel_count()];
    let mut idx = 0;
    for z in 0..orig.dims[2] {
        let cz = ((z as f64 * scale[2]).round() as usize).min(geom.dims[2] - 1);
        for y in 0..orig.dims[1] {
            let cy = ((y as f64 * scale[1]).round() as usize).min(geom.dims[1] - 1);
            for x in 0..orig.dims[0] {
                let cx = ((x as f64 * scale[0]).round() as usize).min(geom.dims[0] - 1);
                data[idx] = embedded.at(cx, cy, cz);
                idx += 1;
            }
        }
    }
    BinaryMask::new(orig, data)
}
