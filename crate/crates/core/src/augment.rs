//! Seeded training-time 3D augmentation: random crop, geometric transforms
//! (rotation, flips, zoom, translation) and intensity transforms (scale,
//! shift, gaussian noise, gamma, patch inversion/dropout).
//!
//! Every transform draws from one [`CounterRng`] in a fixed order, so the
//! whole chain is a pure function of `(input, config, seed)`. Per transform
//! the gate comes first (one Bernoulli draw); parameters are drawn only when
//! the gate fires. The geometric order is rotation, flips (one gate per
//! axis), zoom, translation; the intensity order is scale, shift, noise,
//! gamma, patch inversion-or-dropout. Volumes interpolate linearly, masks
//! with nearest neighbor, always with identical parameters.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;

use crate::rng::CounterRng;
use crate::volume::{BinaryMask, Geometry, ScalarVolume};

/// Transform parameters with the defaults used for training.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub crop_size: [usize; 3],
    /// Rotation range in degrees, symmetric about 0.
    pub rotation_deg: f64,
    /// Which axes may flip.
    pub flip_axes: [bool; 3],
    /// Zoom factor drawn from `[1 - zoom_max, 1 + zoom_max]`.
    pub zoom_max: f64,
    /// Translation per axis up to this fraction of the axis dimension.
    pub translate_max: f64,
    /// Symmetric bound for intensity scaling and shifting.
    pub intensity_scale_shift_max: f64,
    /// Standard deviation of additive gaussian noise.
    pub noise_std: f64,
    pub gamma_range: [f64; 2],
    pub patch_size: [usize; 3],
    pub patch_max_count: usize,
    pub per_transform_probability: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_size: [128, 128, 144],
            rotation_deg: 20.0,
            flip_axes: [true; 3],
            zoom_max: 0.15,
            translate_max: 0.20,
            intensity_scale_shift_max: 0.10,
            noise_std: 0.1,
            gamma_range: [0.5, 2.0],
            patch_size: [10, 10, 10],
            patch_max_count: 75,
            per_transform_probability: 0.5,
            seed: 0,
        }
    }
}

/// Zero-pad a volume so every axis reaches at least `size` (splitting evenly,
/// extra voxel on the high side).
fn pad_to(vol: &ScalarVolume, size: [usize; 3]) -> (ScalarVolume, [usize; 3]) {
    let dims = vol.dims();
    if (0..3).all(|a| dims[a] >= size[a]) {
        return (vol.clone(), [0; 3]);
    }
    let out_dims: [usize; 3] = core::array::from_fn(|a| dims[a].max(size[a]));
    let pad_lo: [usize; 3] = core::array::from_fn(|a| (out_dims[a] - dims[a]) / 2);
    let geom = Geometry {
        dims: out_dims,
        spacing: vol.geometry.spacing,
        origin: core::array::from_fn(|a| {
            vol.geometry.origin[a] - pad_lo[a] as f32 * vol.geometry.spacing[a]
        }),
    };
    let mut data = vec![0.0f32; geom.voxel_count()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                data[geom.index(x + pad_lo[0], y + pad_lo[1], z + pad_lo[2])] = vol.at(x, y, z);
            }
        }
    }
    (ScalarVolume { geometry: geom, data }, pad_lo)
}

fn mask_as_scalar(mask: &BinaryMask) -> ScalarVolume {
    ScalarVolume {
        geometry: mask.geometry,
        data: mask.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    }
}

fn scalar_as_mask(vol: &ScalarVolume) -> BinaryMask {
    BinaryMask {
        geometry: vol.geometry,
        data: vol.data.iter().map(|&v| v != 0.0).collect(),
    }
}

/// Identical uniformly-sampled crop window applied to volume and mask.
/// Inputs smaller than the window are zero-padded first. Draw order: pad,
/// then one `below` draw per axis.
pub fn random_crop(
    vol: &ScalarVolume,
    mask: &BinaryMask,
    size: [usize; 3],
    rng: &mut CounterRng,
) -> (ScalarVolume, BinaryMask) {
    let (vol, _) = pad_to(vol, size);
    let (mask_s, _) = pad_to(&mask_as_scalar(mask), size);
    let dims = vol.dims();
    let start: [usize; 3] = core::array::from_fn(|a| {
        let slack = dims[a] - size[a] + 1;
        rng.below(slack)
    });
    let geom = Geometry {
        dims: size,
        spacing: vol.geometry.spacing,
        origin: core::array::from_fn(|a| {
            vol.geometry.origin[a] + start[a] as f32 * vol.geometry.spacing[a]
        }),
    };
    let mut v_out = vec![0.0f32; geom.voxel_count()];
    let mut m_out = vec![false; geom.voxel_count()];
    let mut idx = 0;
    for z in 0..size[2] {
        for y in 0..size[1] {
            for x in 0..size[0] {
                let src = vol
                    .geometry
                    .index(x + start[0], y + start[1], z + start[2]);
                v_out[idx] = vol.data[src];
                m_out[idx] = mask_s.data[src] != 0.0;
                idx += 1;
            }
        }
    }
    (
        ScalarVolume {
            geometry: geom,
            data: v_out,
        },
        BinaryMask {
            geometry: geom,
            data: m_out,
        },
    )
}

/// Inverse-mapped spatial resampling shared by rotation/zoom. `map` takes
/// output voxel coordinates to input voxel coordinates.
fn warp<F>(vol: &ScalarVolume, nearest: bool, map: F) -> ScalarVolume
where
    F: Fn([f64; 3]) -> [f64; 3],
{
    let dims = vol.dims();
    let mut data = vec![0.0f32; vol.data.len()];
    let mut idx = 0;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let src = map([x as f64, y as f64, z as f64]);
                data[idx] = sample(vol, src, nearest);
                idx += 1;
            }
        }
    }
    ScalarVolume {
        geometry: vol.geometry,
        data,
    }
}

/// Sample at a fractional voxel coordinate; zero outside the volume.
fn sample(vol: &ScalarVolume, c: [f64; 3], nearest: bool) -> f32 {
    let dims = vol.dims();
    if nearest {
        let r = [c[0].round(), c[1].round(), c[2].round()];
        for a in 0..3 {
            if r[a] < 0.0 || r[a] > (dims[a] - 1) as f64 {
                return 0.0;
            }
        }
        return vol.at(r[0] as usize, r[1] as usize, r[2] as usize);
    }
    for a in 0..3 {
        if c[a] < -1.0 || c[a] > dims[a] as f64 {
            return 0.0;
        }
    }
    let f = [c[0].floor(), c[1].floor(), c[2].floor()];
    let t = [c[0] - f[0], c[1] - f[1], c[2] - f[2]];
    let mut acc = 0.0f64;
    for dz in 0..2usize {
        for dy in 0..2usize {
            for dx in 0..2usize {
                let p = [f[0] + dx as f64, f[1] + dy as f64, f[2] + dz as f64];
                let w = (if dx == 0 { 1.0 - t[0] } else { t[0] })
                    * (if dy == 0 { 1.0 - t[1] } else { t[1] })
                    * (if dz == 0 { 1.0 - t[2] } else { t[2] });
                if w == 0.0 {
                    continue;
                }
                let inside = (0..3).all(|a| p[a] >= 0.0 && p[a] <= (dims[a] - 1) as f64);
                if inside {
                    acc += w * vol.at(p[0] as usize, p[1] as usize, p[2] as usize) as f64;
                }
            }
        }
    }
    acc as f32
}

fn flip_axis(vol: &ScalarVolume, axis: usize) -> ScalarVolume {
    let dims = vol.dims();
    let g = &vol.geometry;
    let mut data = vec![0.0f32; vol.data.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let mut s = [x, y, z];
                s[axis] = dims[axis] - 1 - s[axis];
                data[g.index(x, y, z)] = vol.at(s[0], s[1], s[2]);
            }
        }
    }
    ScalarVolume {
        geometry: vol.geometry,
        data,
    }
}

fn translate(vol: &ScalarVolume, shift: [i64; 3]) -> ScalarVolume {
    let dims = vol.dims();
    let g = &vol.geometry;
    let mut data = vec![0.0f32; vol.data.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let sx = x as i64 - shift[0];
                let sy = y as i64 - shift[1];
                let sz = z as i64 - shift[2];
                if sx >= 0
                    && sy >= 0
                    && sz >= 0
                    && (sx as usize) < dims[0]
                    && (sy as usize) < dims[1]
                    && (sz as usize) < dims[2]
                {
                    data[g.index(x, y, z)] = vol.at(sx as usize, sy as usize, sz as usize);
                }
            }
        }
    }
    ScalarVolume {
        geometry: vol.geometry,
        data,
    }
}

/// Rotation about one lattice axis around the volume center, angle in
/// degrees. Positive angles rotate the first remaining axis toward the
/// second.
fn rotate(vol: &ScalarVolume, axis: usize, angle_deg: f64, nearest: bool) -> ScalarVolume {
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let dims = vol.dims();
    let center: [f64; 3] = core::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0);
    let theta = angle_deg.to_radians();
    let (sin, cos) = (theta.sin(), theta.cos());
    warp(vol, nearest, move |out| {
        let du = out[u] - center[u];
        let dv = out[v] - center[v];
        let mut src = out;
        // inverse rotation
        src[u] = center[u] + cos * du + sin * dv;
        src[v] = center[v] - sin * du + cos * dv;
        src
    })
}

fn zoom(vol: &ScalarVolume, factor: f64, nearest: bool) -> ScalarVolume {
    let dims = vol.dims();
    let center: [f64; 3] = core::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0);
    warp(vol, nearest, move |out| {
        core::array::from_fn(|a| center[a] + (out[a] - center[a]) / factor)
    })
}

/// Geometric transforms with shared parameters for volume and mask. Draw
/// order: rotation gate (axis, angle), three flip gates, zoom gate (factor),
/// translation gate (three offsets).
pub fn apply_geometric(
    vol: &ScalarVolume,
    mask: &BinaryMask,
    cfg: &AugmentConfig,
    rng: &mut CounterRng,
) -> (ScalarVolume, BinaryMask) {
    let p = cfg.per_transform_probability;
    let mut v = vol.clone();
    let mut m = mask_as_scalar(mask);

    if rng.bernoulli(p) {
        let axis = rng.below(3);
        let angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
        v = rotate(&v, axis, angle, false);
        m = rotate(&m, axis, angle, true);
    }
    for axis in 0..3 {
        if cfg.flip_axes[axis] && rng.bernoulli(p) {
            v = flip_axis(&v, axis);
            m = flip_axis(&m, axis);
        }
    }
    if rng.bernoulli(p) {
        let factor = rng.uniform(1.0 - cfg.zoom_max, 1.0 + cfg.zoom_max);
        v = zoom(&v, factor, false);
        m = zoom(&m, factor, true);
    }
    if rng.bernoulli(p) {
        let dims = vol.dims();
        let shift: [i64; 3] = core::array::from_fn(|a| {
            let max = (cfg.translate_max * dims[a] as f64).floor() as i64;
            if max == 0 {
                0
            } else {
                rng.uniform(-(max as f64), max as f64 + 1.0).floor() as i64
            }
        });
        v = translate(&v, shift);
        m = translate(&m, shift);
    }
    (v, scalar_as_mask(&m))
}

/// Intensity transforms on the volume only. Draw order: scale gate (factor),
/// shift gate (offset), noise gate (one normal per voxel), gamma gate
/// (exponent), patch gate (invert-or-drop choice, count, then per patch three
/// corner draws).
pub fn apply_intensity(
    vol: &ScalarVolume,
    cfg: &AugmentConfig,
    rng: &mut CounterRng,
) -> ScalarVolume {
    let p = cfg.per_transform_probability;
    let m = cfg.intensity_scale_shift_max;
    let mut v = vol.clone();

    if rng.bernoulli(p) {
        let factor = (1.0 + rng.uniform(-m, m)) as f32;
        for x in v.data.iter_mut() {
            *x *= factor;
        }
    }
    if rng.bernoulli(p) {
        let offset = rng.uniform(-m, m) as f32;
        for x in v.data.iter_mut() {
            *x += offset;
        }
    }
    if rng.bernoulli(p) {
        for x in v.data.iter_mut() {
            *x += (cfg.noise_std * rng.normal()) as f32;
        }
    }
    if rng.bernoulli(p) {
        let gamma = rng.uniform(cfg.gamma_range[0], cfg.gamma_range[1]);
        gamma_correct(&mut v, gamma);
    }
    if rng.bernoulli(p) {
        let drop = rng.bernoulli(0.5);
        let count = 1 + rng.below(cfg.patch_max_count);
        for _ in 0..count {
            let dims = v.dims();
            let corner: [usize; 3] = core::array::from_fn(|a| {
                let slack = dims[a].saturating_sub(cfg.patch_size[a]) + 1;
                rng.below(slack)
            });
            apply_patch(&mut v, corner, cfg.patch_size, drop);
        }
    }
    v
}

/// Gamma on a min-max normalized copy, mapped back to the original range;
/// gamma is undefined for the negative values a z-scored volume contains.
fn gamma_correct(v: &mut ScalarVolume, gamma: f64) {
    let min = v.min_value() as f64;
    let max = v.max_value() as f64;
    let range = max - min;
    if range <= 0.0 {
        return;
    }
    for x in v.data.iter_mut() {
        let u = ((*x as f64 - min) / range).clamp(0.0, 1.0);
        *x = (min + u.powf(gamma) * range) as f32;
    }
}

/// Zero (dropout) or reflect values about the patch mean (inversion) inside
/// one patch.
fn apply_patch(v: &mut ScalarVolume, corner: [usize; 3], size: [usize; 3], drop: bool) {
    let dims = v.dims();
    let hi: [usize; 3] = core::array::from_fn(|a| (corner[a] + size[a]).min(dims[a]));
    if drop {
        for z in corner[2]..hi[2] {
            for y in corner[1]..hi[1] {
                for x in corner[0]..hi[0] {
                    let i = v.geometry.index(x, y, z);
                    v.data[i] = 0.0;
                }
            }
        }
        return;
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for z in corner[2]..hi[2] {
        for y in corner[1]..hi[1] {
            for x in corner[0]..hi[0] {
                sum += v.at(x, y, z) as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return;
    }
    let mean = (sum / n as f64) as f32;
    for z in corner[2]..hi[2] {
        for y in corner[1]..hi[1] {
            for x in corner[0]..hi[0] {
                let i = v.geometry.index(x, y, z);
                v.data[i] = 2.0 * mean - v.data[i];
            }
        }
    }
}

/// Full chain: crop, geometric, intensity, seeded from the config.
pub fn augment(
    vol: &ScalarVolume,
    mask: &BinaryMask,
    cfg: &AugmentConfig,
) -> (ScalarVolume, BinaryMask) {
    let mut rng = CounterRng::new(cfg.seed);
    let (v, m) = random_crop(vol, mask, cfg.crop_size, &mut rng);
    let (v, m) = apply_geometric(&v, &m, cfg, &mut rng);
    let v = apply_intensity(&v, cfg, &mut rng);
    (v, m)
}
