//! Synthetic volume/ground-truth generation and independent brute-force
//! reference implementations of the metrics.
//!
//! The oracle functions at the bottom deliberately share no code with the
//! production metrics: boundaries are re-derived by direct neighbor checks,
//! distances come from an all-pairs O(n²) scan, the percentile rule is
//! restated inline, and component labeling is a plain flood fill. A size cap
//! keeps the quadratic scans affordable.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::postprocess::Connectivity;
use crate::rng::CounterRng;
use crate::volume::{BinaryMask, Geometry, ProbabilityMap, ScalarVolume};
use crate::Result;

/// One ellipsoid of a phantom. Center and radii in millimetres.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ellipsoid {
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
    pub intensity: f32,
}

/// Full phantom description; serializable so the CLI can read it from JSON.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default = "default_spacing")]
    pub spacing: [f32; 3],
    pub ellipsoids: Vec<Ellipsoid>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_spacing() -> [f32; 3] {
    [1.0; 3]
}

/// Rasterize a phantom: the intensity volume sums the ellipsoid intensities
/// and adds seeded gaussian noise everywhere; the mask is the union of the
/// ellipsoid indicators. A voxel belongs to an ellipsoid when its center
/// satisfies `sum(((p - c) / r)^2) <= 1`.
pub fn make_phantom(spec: &PhantomSpec) -> Result<(ScalarVolume, BinaryMask)> {
    let geom = Geometry::new(spec.dims, spec.spacing, [0.0; 3])?;
    let mut vol = ScalarVolume::filled(geom, 0.0);
    let mut mask = BinaryMask::empty(geom);
    let mut idx = 0;
    for z in 0..spec.dims[2] {
        for y in 0..spec.dims[1] {
            for x in 0..spec.dims[0] {
                let p = [
                    x as f64 * spec.spacing[0] as f64,
                    y as f64 * spec.spacing[1] as f64,
                    z as f64 * spec.spacing[2] as f64,
                ];
                for e in &spec.ellipsoids {
                    let q: f64 = (0..3)
                        .map(|a| {
                            let d = (p[a] - e.center_mm[a]) / e.radii_mm[a];
                            d * d
                        })
                        .sum();
                    if q <= 1.0 {
                        vol.data[idx] += e.intensity;
                        mask.data[idx] = true;
                    }
                }
                idx += 1;
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = CounterRng::with_stream(spec.seed, 0x7068616e746f6d); // "phantom"
        for v in vol.data.iter_mut() {
            *v += (spec.noise_sigma * rng.normal()) as f32;
        }
    }
    Ok((vol, mask))
}

/// Scripted perturbations with known metric outcomes. All modes are
/// deterministic functions of the ground truth.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Perturbation {
    /// The prediction equals the ground truth.
    Identity,
    /// `k` iterations of 6-neighborhood dilation.
    Dilate(usize),
    /// `k` iterations of 6-neighborhood erosion.
    Erode(usize),
    /// Integer voxel shift with zero fill.
    Shift([i64; 3]),
    /// Remove the component with this 1-based label (26-connectivity, scan
    /// order); out-of-range labels leave the mask unchanged.
    DropComponent(u32),
    /// Union an extra ellipsoid into the prediction.
    AddBlob(Ellipsoid),
    /// Empty prediction.
    Empty,
}

/// Build a prediction probability map (1 inside the perturbed mask, 0
/// outside) whose metrics against `gt` are known in advance.
pub fn perturb_prediction(gt: &BinaryMask, mode: &Perturbation) -> Result<ProbabilityMap> {
    let mask = match mode {
        Perturbation::Identity => gt.clone(),
        Perturbation::Dilate(k) => {
            let mut m = gt.clone();
            for _ in 0..*k {
                m = morph6(&m, true);
            }
            m
        }
        Perturbation::Erode(k) => {
            let mut m = gt.clone();
            for _ in 0..*k {
                m = morph6(&m, false);
            }
            m
        }
        Perturbation::Shift(shift) => shift_mask(gt, *shift),
        Perturbation::DropComponent(label) => {
            let cc = crate::postprocess::connected_components(gt, Connectivity::TwentySix);
            BinaryMask {
                geometry: gt.geometry,
                data: cc.labels.iter().map(|&l| l != 0 && l != *label).collect(),
            }
        }
        Perturbation::AddBlob(e) => {
            let spec = PhantomSpec {
                dims: gt.dims(),
                spacing: gt.geometry.spacing,
                ellipsoids: vec![e.clone()],
                noise_sigma: 0.0,
                seed: 0,
            };
            let (_, blob) = make_phantom(&spec)?;
            gt.union(&blob)?
        }
        Perturbation::Empty => BinaryMask::empty(gt.geometry),
    };
    Ok(ProbabilityMap::from_mask(&mask))
}

/// One step of 6-neighborhood dilation (`grow`) or erosion (`!grow`).
/// Erosion treats out-of-volume neighbors as unset.
fn morph6(mask: &BinaryMask, grow: bool) -> BinaryMask {
    let [nx, ny, nz] = mask.dims();
    let g = &mask.geometry;
    let mut data = vec![false; mask.data.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let idx = g.index(x, y, z);
                let mut hit = mask.data[idx];
                let mut all = mask.data[idx];
                let mut visit = |b: bool| {
                    hit |= b;
                    all &= b;
                };
                visit(x > 0 && mask.data[g.index(x - 1, y, z)]);
                visit(x + 1 < nx && mask.data[g.index(x + 1, y, z)]);
                visit(y > 0 && mask.data[g.index(x, y - 1, z)]);
                visit(y + 1 < ny && mask.data[g.index(x, y + 1, z)]);
                visit(z > 0 && mask.data[g.index(x, y, z - 1)]);
                visit(z + 1 < nz && mask.data[g.index(x, y, z + 1)]);
                data[idx] = if grow { hit } else { all };
            }
        }
    }
    BinaryMask {
        geometry: mask.geometry,
        data,
    }
}

fn shift_mask(mask: &BinaryMask, shift: [i64; 3]) -> BinaryMask {
    let [nx, ny, nz] = mask.dims();
    let g = &mask.geometry;
    let mut data = vec![false; mask.data.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let sx = x as i64 - shift[0];
                let sy = y as i64 - shift[1];
                let sz = z as i64 - shift[2];
                if sx >= 0
                    && sy >= 0
                    && sz >= 0
                    && (sx as usize) < nx
                    && (sy as usize) < ny
                    && (sz as usize) < nz
                    && mask.data[g.index(sx as usize, sy as usize, sz as usize)]
                {
                    data[g.index(x, y, z)] = true;
                }
            }
        }
    }
    BinaryMask {
        geometry: mask.geometry,
        data,
    }
}

/// Hard size cap for the quadratic oracles.
pub const ORACLE_VOXEL_CAP: usize = 32 * 32 * 32;

fn check_cap(mask: &BinaryMask) -> Result<()> {
    let n = mask.geometry.voxel_count();
    if n > ORACLE_VOXEL_CAP {
        return Err(Error::OracleSizeCap {
            voxels: n,
            cap: ORACLE_VOXEL_CAP,
        });
    }
    Ok(())
}

/// Reference Dice: direct set counting.
pub fn oracle_dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_cap(a)?;
    check_cap(b)?;
    if a.dims() != b.dims() {
        return Err(Error::GeometryMismatch {
            expected: a.dims(),
            got: b.dims(),
        });
    }
    let mut inter = 0usize;
    let mut total = 0usize;
    for i in 0..a.data.len() {
        if a.data[i] && b.data[i] {
            inter += 1;
        }
        if a.data[i] {
            total += 1;
        }
        if b.data[i] {
            total += 1;
        }
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Reference HD95: all-pairs boundary distances in mm, pooled from both
/// directions, 95th percentile by explicit closest-ranks interpolation.
pub fn oracle_hd95(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_cap(a)?;
    check_cap(b)?;
    if a.dims() != b.dims() {
        return Err(Error::GeometryMismatch {
            expected: a.dims(),
            got: b.dims(),
        });
    }
    if a.is_empty_mask() || b.is_empty_mask() {
        return Err(Error::EmptyMask);
    }
    let surf_a = oracle_boundary(a);
    let surf_b = oracle_boundary(b);
    let spacing = a.geometry.spacing;

    let dist = |p: &[usize; 3], q: &[usize; 3]| -> f64 {
        let mut s = 0.0;
        for axis in 0..3 {
            let d = (p[axis] as f64 - q[axis] as f64) * spacing[axis] as f64;
            s += d * d;
        }
        s.sqrt()
    };

    let mut pooled = Vec::with_capacity(surf_a.len() + surf_b.len());
    for p in &surf_a {
        let mut best = f64::INFINITY;
        for q in &surf_b {
            let d = dist(p, q);
            if d < best {
                best = d;
            }
        }
        pooled.push(best);
    }
    for q in &surf_b {
        let mut best = f64::INFINITY;
        for p in &surf_a {
            let d = dist(p, q);
            if d < best {
                best = d;
            }
        }
        pooled.push(best);
    }
    pooled.sort_unstable_by(f64::total_cmp);
    // closest-ranks linear interpolation, restated here on purpose
    let n = pooled.len();
    if n == 1 {
        return Ok(pooled[0]);
    }
    let rank = 0.95 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(pooled[lo] + frac * (pooled[hi] - pooled[lo]))
}

/// Boundary voxels by direct neighbor inspection (set, with an unset
/// 6-neighbor or on the edge), as coordinates.
fn oracle_boundary(mask: &BinaryMask) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = mask.dims();
    let g = &mask.geometry;
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.data[g.index(x, y, z)] {
                    continue;
                }
                let edge = x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1;
                let open = edge
                    || !mask.data[g.index(x - 1, y, z)]
                    || !mask.data[g.index(x + 1, y, z)]
                    || !mask.data[g.index(x, y - 1, z)]
                    || !mask.data[g.index(x, y + 1, z)]
                    || !mask.data[g.index(x, y, z - 1)]
                    || !mask.data[g.index(x, y, z + 1)];
                if open {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Reference component labeling: stack-based flood fill, labels in raster
/// scan order of each component's first voxel.
pub fn oracle_components(mask: &BinaryMask, connectivity: Connectivity) -> Result<Vec<u32>> {
    check_cap(mask)?;
    let [nx, ny, nz] = mask.dims();
    let g = &mask.geometry;
    let mut labels = vec![0u32; mask.data.len()];
    let mut next = 0u32;
    let mut stack: Vec<[usize; 3]> = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let idx = g.index(x, y, z);
                if !mask.data[idx] || labels[idx] != 0 {
                    continue;
                }
                next += 1;
                labels[idx] = next;
                stack.push([x, y, z]);
                while let Some(p) = stack.pop() {
                    for dz in -1i64..=1 {
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                if dx == 0 && dy == 0 && dz == 0 {
                                    continue;
                                }
                                if matches!(connectivity, Connectivity::Six)
                                    && dx.abs() + dy.abs() + dz.abs() != 1
                                {
                                    continue;
                                }
                                let q = [
                                    p[0] as i64 + dx,
                                    p[1] as i64 + dy,
                                    p[2] as i64 + dz,
                                ];
                                if q[0] < 0
                                    || q[1] < 0
                                    || q[2] < 0
                                    || q[0] >= nx as i64
                                    || q[1] >= ny as i64
                                    || q[2] >= nz as i64
                                {
                                    continue;
                                }
                                let qi = g.index(q[0] as usize, q[1] as usize, q[2] as usize);
                                if mask.data[qi] && labels[qi] == 0 {
                                    labels[qi] = next;
                                    stack.push([q[0] as usize, q[1] as usize, q[2] as usize]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(labels)
}

/// Canonical relabeling (ascending by first appearance in scan order) so two
/// labelings can be compared up to renaming.
pub fn canonical_labels(labels: &[u32]) -> Vec<u32> {
    let mut remap: alloc::collections::BTreeMap<u32, u32> = alloc::collections::BTreeMap::new();
    let mut next = 0u32;
    labels
        .iter()
        .map(|&l| {
            if l == 0 {
                0
            } else {
                *remap.entry(l).or_insert_with(|| {
                    next += 1;
                    next
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::postprocess::connected_components;

    fn sphere_spec(r_mm: f64, dims: [usize; 3]) -> PhantomSpec {
        PhantomSpec {
            dims,
            spacing: [1.0; 3],
            ellipsoids: vec![Ellipsoid {
                center_mm: [
                    dims[0] as f64 / 2.0,
                    dims[1] as f64 / 2.0,
                    dims[2] as f64 / 2.0,
                ],
                radii_mm: [r_mm; 3],
                intensity: 100.0,
            }],
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn sphere_volume_is_close_to_analytic() {
        let spec = sphere_spec(6.0, [24, 24, 24]);
        let (_, mask) = make_phantom(&spec).unwrap();
        let analytic = 4.0 / 3.0 * core::f64::consts::PI * 6.0f64.powi(3);
        let count = mask.count_set() as f64; // 1 mm^3 voxels
        let rel = (count - analytic).abs() / analytic;
        assert!(rel < 0.05, "rasterized {count} vs analytic {analytic}");
    }

    #[test]
    fn empty_spec_gives_zero_volume_and_empty_mask() {
        let spec = PhantomSpec {
            dims: [8, 8, 8],
            spacing: [1.0; 3],
            ellipsoids: vec![],
            noise_sigma: 0.0,
            seed: 0,
        };
        let (vol, mask) = make_phantom(&spec).unwrap();
        assert!(vol.data.iter().all(|&v| v == 0.0));
        assert!(mask.is_empty_mask());
    }

    #[test]
    fn phantom_is_bit_deterministic_per_seed() {
        let mut spec = sphere_spec(5.0, [16, 16, 16]);
        spec.noise_sigma = 2.0;
        spec.seed = 31;
        let (a, _) = make_phantom(&spec).unwrap();
        let (b, _) = make_phantom(&spec).unwrap();
        assert_eq!(a.data, b.data);
        spec.seed = 32;
        let (c, _) = make_phantom(&spec).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn identity_perturbation_scores_perfectly() {
        let (_, gt) = make_phantom(&sphere_spec(6.0, [24, 24, 24])).unwrap();
        let prob = perturb_prediction(&gt, &Perturbation::Identity).unwrap();
        let pred = crate::postprocess::binarize(&prob, 0.5f32);
        assert_eq!(metrics::voxelwise_dice(&gt, &pred).unwrap(), 1.0);
        assert_eq!(metrics::hd95(&gt, &pred).unwrap(), 0.0);
    }

    #[test]
    fn single_voxel_shift_by_five_has_hd95_of_five() {
        let g = Geometry::isotropic([16, 8, 8]);
        let mut gt = BinaryMask::empty(g);
        gt.data[g.index(3, 4, 4)] = true;
        let prob = perturb_prediction(&gt, &Perturbation::Shift([5, 0, 0])).unwrap();
        let pred = crate::postprocess::binarize(&prob, 0.5);
        assert_eq!(pred.count_set(), 1);
        assert_eq!(metrics::hd95(&gt, &pred).unwrap(), 5.0);
    }

    #[test]
    fn dropping_one_of_two_equal_components_gives_object_dice_half() {
        let spec = PhantomSpec {
            dims: [24, 12, 12],
            spacing: [1.0; 3],
            ellipsoids: vec![
                Ellipsoid {
                    center_mm: [5.0, 6.0, 6.0],
                    radii_mm: [3.0; 3],
                    intensity: 50.0,
                },
                Ellipsoid {
                    center_mm: [18.0, 6.0, 6.0],
                    radii_mm: [3.0; 3],
                    intensity: 50.0,
                },
            ],
            noise_sigma: 0.0,
            seed: 0,
        };
        let (_, gt) = make_phantom(&spec).unwrap();
        let prob = perturb_prediction(&gt, &Perturbation::DropComponent(2)).unwrap();
        let pred = crate::postprocess::binarize(&prob, 0.5);
        let gt_cc = connected_components(&gt, Connectivity::TwentySix);
        let pred_cc = connected_components(&pred, Connectivity::TwentySix);
        assert_eq!(gt_cc.len(), 2);
        assert_eq!(pred_cc.len(), 1);
        let pairing = metrics::pair_components(&gt_cc, &pred_cc).unwrap();
        assert_eq!(metrics::object_dice(&gt_cc, &pred_cc, &pairing), 0.5);
    }

    #[test]
    fn dilation_and_erosion_nest_around_the_original() {
        let (_, gt) = make_phantom(&sphere_spec(5.0, [20, 20, 20])).unwrap();
        let dil = crate::postprocess::binarize(
            &perturb_prediction(&gt, &Perturbation::Dilate(1)).unwrap(),
            0.5,
        );
        let ero = crate::postprocess::binarize(
            &perturb_prediction(&gt, &Perturbation::Erode(1)).unwrap(),
            0.5,
        );
        assert!(dil.count_set() > gt.count_set());
        assert!(ero.count_set() < gt.count_set());
        // nesting: ero ⊆ gt ⊆ dil
        for i in 0..gt.data.len() {
            assert!(!ero.data[i] | gt.data[i]);
            assert!(!gt.data[i] | dil.data[i]);
        }
    }

    #[test]
    fn oracle_size_cap_is_enforced() {
        let g = Geometry::isotropic([33, 33, 33]);
        let m = BinaryMask::empty(g);
        assert!(matches!(
            oracle_dice(&m, &m),
            Err(Error::OracleSizeCap { .. })
        ));
        assert!(matches!(
            oracle_components(&m, Connectivity::Six),
            Err(Error::OracleSizeCap { .. })
        ));
    }

    #[test]
    fn oracles_agree_with_production_on_seeded_random_masks() {
        // the full >= 500-pair suite lives in the acceptance tests; keep a
        // quick smoke version here
        for seed in 0..20u64 {
            let mut rng = CounterRng::new(seed);
            let dims = [10, 9, 8];
            let g = Geometry::isotropic(dims);
            let n = g.voxel_count();
            let a = BinaryMask::new(g, (0..n).map(|_| rng.bernoulli(0.3)).collect()).unwrap();
            let b = BinaryMask::new(g, (0..n).map(|_| rng.bernoulli(0.3)).collect()).unwrap();

            assert_eq!(
                metrics::voxelwise_dice(&a, &b).unwrap(),
                oracle_dice(&a, &b).unwrap()
            );
            if !a.is_empty_mask() && !b.is_empty_mask() {
                let prod = metrics::hd95(&a, &b).unwrap();
                let orac = oracle_hd95(&a, &b).unwrap();
                assert!(
                    (prod - orac).abs() < 1e-9,
                    "seed {seed}: {prod} vs {orac}"
                );
            }
            for conn in [Connectivity::Six, Connectivity::TwentySix] {
                let prod = connected_components(&a, conn);
                let orac = oracle_components(&a, conn).unwrap();
                assert_eq!(
                    canonical_labels(&prod.labels),
                    canonical_labels(&orac),
                    "seed {seed}"
                );
            }
        }
    }

    #[test]
    fn six_vs_twentysix_differ_on_the_diagonal_case() {
        let g = Geometry::isotropic([4, 4, 4]);
        let mut m = BinaryMask::empty(g);
        m.data[g.index(0, 0, 0)] = true;
        m.data[g.index(1, 1, 1)] = true;
        let l26 = oracle_components(&m, Connectivity::TwentySix).unwrap();
        let l6 = oracle_components(&m, Connectivity::Six).unwrap();
        assert_eq!(l26[g.index(0, 0, 0)], l26[g.index(1, 1, 1)]);
        assert_ne!(l6[g.index(0, 0, 0)], l6[g.index(1, 1, 1)]);
    }
}
