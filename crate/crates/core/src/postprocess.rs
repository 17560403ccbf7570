//! Probability-map postprocessing: brain masking, thresholding, connected
//! component labeling, small-component removal, and the per-fold threshold
//! sweep.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::metrics::{self, CaseOutcome};
use crate::volume::{voxel_volume_ml, BinaryMask, ProbabilityMap};
use crate::Result;

/// Voxel adjacency used for component labeling. Serializes as the neighbor
/// count (6 or 26).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Face, edge and corner neighbors.
    TwentySix,
}

impl Connectivity {
    pub fn neighbor_count(&self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl serde::Serialize for Connectivity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.neighbor_count())
    }
}

impl<'de> serde::Deserialize<'de> for Connectivity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        match u8::deserialize(d)? {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(serde::de::Error::custom(alloc::format!(
                "connectivity must be 6 or 26, got {other}"
            ))),
        }
    }
}

/// Zero all probabilities outside the brain mask.
pub fn apply_brain_mask(prob: &ProbabilityMap, brain: &BinaryMask) -> Result<ProbabilityMap> {
    if prob.dims() != brain.dims() {
        return Err(Error::GeometryMismatch {
            expected: prob.dims(),
            got: brain.dims(),
        });
    }
    let data = prob
        .data
        .iter()
        .zip(&brain.data)
        .map(|(&p, &inside)| if inside { p } else { 0.0 })
        .collect();
    Ok(ProbabilityMap {
        geometry: prob.geometry,
        data,
    })
}

/// Voxel set iff probability is strictly greater than the threshold.
pub fn binarize(prob: &ProbabilityMap, threshold: f32) -> BinaryMask {
    BinaryMask {
        geometry: prob.geometry,
        data: prob.data.iter().map(|&p| p > threshold).collect(),
    }
}

/// Labeling of the maximal connected sets of a mask. Labels are 1-based and
/// assigned in raster-scan order of each component's first voxel; `sizes[l-1]`
/// is the voxel count of label `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledComponents {
    pub dims: [usize; 3],
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl LabeledComponents {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Mask of a single labeled component.
    pub fn component_mask(&self, label: u32, template: &BinaryMask) -> BinaryMask {
        BinaryMask {
            geometry: template.geometry,
            data: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

struct LabelUnion {
    parent: Vec<u32>,
}

impl LabelUnion {
    fn new() -> Self {
        LabelUnion { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let gp = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = gp;
            i = gp;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // smaller root wins so final labels follow scan order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find connected component labeling.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabeledComponents {
    let [nx, ny, nz] = mask.dims();
    let geom = &mask.geometry;
    let mut provisional = vec![0u32; mask.data.len()]; // 0 = background, else id+1
    let mut uf = LabelUnion::new();

    // Backward neighbor offsets: all (dx,dy,dz) already visited in the scan.
    let offsets: &[(i64, i64, i64)] = match connectivity {
        Connectivity::Six => &[(-1, 0, 0), (0, -1, 0), (0, 0, -1)],
        Connectivity::TwentySix => &[
            (-1, -1, -1),
            (0, -1, -1),
            (1, -1, -1),
            (-1, 0, -1),
            (0, 0, -1),
            (1, 0, -1),
            (-1, 1, -1),
            (0, 1, -1),
            (1, 1, -1),
            (-1, -1, 0),
            (0, -1, 0),
            (1, -1, 0),
            (-1, 0, 0),
        ],
    };

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let idx = geom.index(x, y, z);
                if !mask.data[idx] {
                    continue;
                }
                let mut assigned: Option<u32> = None;
                for &(dx, dy, dz) in offsets {
                    let (px, py, pz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    if px < 0 || py < 0 || pz < 0 || px >= nx as i64 || py >= ny as i64 {
                        continue;
                    }
                    let nidx = geom.index(px as usize, py as usize, pz as usize);
                    let p = provisional[nidx];
                    if p != 0 {
                        match assigned {
                            None => assigned = Some(p),
                            Some(a) => uf.union(a - 1, p - 1),
                        }
                    }
                }
                provisional[idx] = match assigned {
                    Some(a) => a,
                    None => uf.make() + 1,
                };
            }
        }
    }

    // Resolve roots to dense labels in scan order of first appearance.
    let mut root_to_label = vec![0u32; uf.parent.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut labels = vec![0u32; mask.data.len()];
    let mut next = 0u32;
    for (idx, &p) in provisional.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let root = uf.find(p - 1) as usize;
        if root_to_label[root] == 0 {
            next += 1;
            root_to_label[root] = next;
            sizes.push(0);
        }
        let label = root_to_label[root];
        labels[idx] = label;
        sizes[(label - 1) as usize] += 1;
    }

    LabeledComponents {
        dims: mask.dims(),
        labels,
        sizes,
    }
}

/// Small-component filter: delete every connected component whose physical
/// volume is below `min_ml` or whose extent along `slice_axis` spans fewer
/// than `min_consecutive_slices` slices.
pub fn filter_small_components(
    mask: &BinaryMask,
    min_ml: f64,
    min_consecutive_slices: usize,
    slice_axis: usize,
    connectivity: Connectivity,
) -> BinaryMask {
    filter_small_components_labeled(mask, min_ml, min_consecutive_slices, slice_axis, connectivity)
        .0
}

/// Like [`filter_small_components`] but also returns the labeling of the
/// surviving components (identical to relabeling the filtered mask from
/// scratch, for one labeling pass instead of two).
pub fn filter_small_components_labeled(
    mask: &BinaryMask,
    min_ml: f64,
    min_consecutive_slices: usize,
    slice_axis: usize,
    connectivity: Connectivity,
) -> (BinaryMask, LabeledComponents) {
    let cc = connected_components(mask, connectivity);
    if cc.is_empty() {
        return (mask.clone(), cc);
    }
    let n = cc.len();
    let mut slice_min = vec![usize::MAX; n];
    let mut slice_max = vec![0usize; n];
    let [nx, ny, _nz] = mask.dims();
    for (idx, &l) in cc.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let coords = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
        let s = coords[slice_axis];
        let li = (l - 1) as usize;
        slice_min[li] = slice_min[li].min(s);
        slice_max[li] = slice_max[li].max(s);
    }
    let vox_ml = voxel_volume_ml(mask.geometry.spacing);
    // Relabel survivors compactly; deletion cannot merge or split components,
    // and survivors keep their scan order, so this matches a fresh labeling.
    let mut remap = vec![0u32; n];
    let mut sizes = Vec::new();
    let mut next = 0u32;
    for li in 0..n {
        let volume = cc.sizes[li] as f64 * vox_ml;
        let extent = slice_max[li] - slice_min[li] + 1;
        if volume >= min_ml && extent >= min_consecutive_slices {
            next += 1;
            remap[li] = next;
            sizes.push(cc.sizes[li]);
        }
    }
    let labels: Vec<u32> = cc
        .labels
        .iter()
        .map(|&l| if l == 0 { 0 } else { remap[(l - 1) as usize] })
        .collect();
    let filtered = BinaryMask {
        geometry: mask.geometry,
        data: labels.iter().map(|&l| l != 0).collect(),
    };
    (
        filtered,
        LabeledComponents {
            dims: cc.dims,
            labels,
            sizes,
        },
    )
}

/// Per-threshold score out of [`threshold_sweep`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ThresholdScore {
    pub threshold: f32,
    /// Mean object-wise Dice over positive ground-truth cases; positive cases
    /// that fail classification contribute 0.
    pub mean_object_dice: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best_threshold: f32,
    pub scores: Vec<ThresholdScore>,
}

/// Settings for the binarize → filter → classify chain run by the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub min_component_ml: f64,
    pub min_consecutive_slices: usize,
    pub slice_axis: usize,
    pub connectivity: Connectivity,
    pub positive_threshold_ml: f64,
    pub tp_dice_min: f64,
}

/// The default mid-decile threshold grid {0.05, 0.15, ..., 0.95}.
pub fn default_thresholds() -> Vec<f32> {
    (0..10).map(|i| (2 * i + 1) as f32 / 20.0).collect()
}

/// Run the full postprocessing + classification chain over every case at each
/// threshold and pick the threshold maximizing the mean object-wise Dice.
/// Ties break toward the lower threshold.
pub fn threshold_sweep(
    cases: &[(&ProbabilityMap, &BinaryMask)],
    thresholds: &[f32],
    settings: &SweepSettings,
) -> Result<SweepResult> {
    if cases.is_empty() {
        return Err(Error::EmptyInput);
    }
    if thresholds.is_empty()
        || thresholds.windows(2).any(|w| w[0] >= w[1])
        || thresholds.iter().any(|&t| !(0.0..=1.0).contains(&t))
    {
        return Err(Error::InvalidParameter(alloc::string::String::from(
            "thresholds must be strictly increasing within [0, 1]",
        )));
    }
    // Ground-truth labelings do not depend on the threshold.
    let gt_components: Vec<LabeledComponents> = cases
        .iter()
        .map(|(_, gt)| connected_components(gt, settings.connectivity))
        .collect();
    let mut scores = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut dice_sum = 0.0;
        let mut positives = 0usize;
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for ((prob, gt), gt_cc) in cases.iter().zip(&gt_components) {
            let (pred, pred_cc) = filter_small_components_labeled(
                &binarize(prob, t),
                settings.min_component_ml,
                settings.min_consecutive_slices,
                settings.slice_axis,
                settings.connectivity,
            );
            let class = metrics::classify_case(
                gt,
                &pred,
                settings.positive_threshold_ml,
                settings.tp_dice_min,
            )?;
            match class.outcome {
                CaseOutcome::Tp => {
                    tp += 1;
                    positives += 1;
                    let pairing = metrics::pair_components(gt_cc, &pred_cc)?;
                    dice_sum += metrics::object_dice(gt_cc, &pred_cc, &pairing);
                }
                CaseOutcome::Fn => {
                    fn_ += 1;
                    positives += 1;
                }
                CaseOutcome::Fp => fp += 1,
                CaseOutcome::Tn => tn += 1,
            }
        }
        let mean = if positives > 0 {
            dice_sum / positives as f64
        } else {
            0.0
        };
        scores.push(ThresholdScore {
            threshold: t,
            mean_object_dice: mean,
            tp,
            fp,
            fn_,
            tn,
        });
    }
    let mut best = 0usize;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_object_dice > scores[best].mean_object_dice {
            best = i;
        }
    }
    Ok(SweepResult {
        best_threshold: scores[best].threshold,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use proptest::prelude::*;

    fn mask_from_indices(g: Geometry, on: &[(usize, usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::empty(g);
        for &(x, y, z) in on {
            m.data[g.index(x, y, z)] = true;
        }
        m
    }

    #[test]
    fn brain_mask_full_is_identity_and_empty_zeroes() {
        let g = Geometry::isotropic([4, 4, 4]);
        let prob = ProbabilityMap::filled(g, 0.8).unwrap();
        let full = BinaryMask::new(g, vec![true; 64]).unwrap();
        let empty = BinaryMask::empty(g);
        assert_eq!(apply_brain_mask(&prob, &full).unwrap(), prob);
        let zeroed = apply_brain_mask(&prob, &empty).unwrap();
        assert!(zeroed.data.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn brain_mask_zeroes_exactly_the_masked_half() {
        let g = Geometry::isotropic([4, 4, 4]);
        let prob = ProbabilityMap::filled(g, 0.6).unwrap();
        let half = BinaryMask::new(g, (0..64).map(|i| i < 32).collect()).unwrap();
        let out = apply_brain_mask(&prob, &half).unwrap();
        assert_eq!(out.data.iter().filter(|&&p| p == 0.0).count(), 32);
        assert_eq!(out.data.iter().filter(|&&p| p == 0.6).count(), 32);
    }

    #[test]
    fn brain_mask_rejects_geometry_mismatch() {
        let prob = ProbabilityMap::filled(Geometry::isotropic([4, 4, 4]), 0.5).unwrap();
        let brain = BinaryMask::empty(Geometry::isotropic([4, 4, 5]));
        assert!(apply_brain_mask(&prob, &brain).is_err());
    }

    #[test]
    fn binarize_uses_strict_inequality() {
        let g = Geometry::isotropic([2, 1, 1]);
        let prob = ProbabilityMap::new(g, vec![0.0, 0.4]).unwrap();
        let m0 = binarize(&prob, 0.0);
        assert_eq!(m0.data, vec![false, true]);
        let m1 = binarize(&prob, 1.0);
        assert!(m1.is_empty_mask());
    }

    #[test]
    fn binarize_constant_map_at_bracketing_thresholds() {
        let g = Geometry::isotropic([3, 3, 3]);
        let prob = ProbabilityMap::filled(g, 0.6).unwrap();
        assert_eq!(binarize(&prob, 0.5).count_set(), 27);
        assert_eq!(binarize(&prob, 0.7).count_set(), 0);
    }

    #[test]
    fn two_disjoint_cubes_are_two_components() {
        let g = Geometry::isotropic([10, 10, 10]);
        let mut on = Vec::new();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    on.push((x, y, z));
                    on.push((x + 5, y + 5, z + 5));
                }
            }
        }
        let m = mask_from_indices(g, &on);
        let cc = connected_components(&m, Connectivity::TwentySix);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc.sizes, vec![8, 8]);
    }

    #[test]
    fn diagonal_voxels_merge_at_26_but_not_6() {
        let g = Geometry::isotropic([4, 4, 4]);
        let m = mask_from_indices(g, &[(1, 1, 1), (2, 2, 2)]);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).len(), 1);
        assert_eq!(connected_components(&m, Connectivity::Six).len(), 2);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::empty(Geometry::isotropic([5, 5, 5]));
        assert!(connected_components(&m, Connectivity::TwentySix).is_empty());
    }

    #[test]
    fn filter_removes_sub_threshold_volume() {
        // 40 voxels at 1 mm^3 = 0.04 mL < 0.05 mL: removed even though it
        // spans several slices.
        let g = Geometry::isotropic([10, 10, 10]);
        let mut on = Vec::new();
        for z in 0..4 {
            for y in 0..2 {
                for x in 0..5 {
                    on.push((x, y, z));
                }
            }
        }
        assert_eq!(on.len(), 40);
        let m = mask_from_indices(g, &on);
        let out = filter_small_components(&m, 0.05, 2, 2, Connectivity::TwentySix);
        assert!(out.is_empty_mask());
    }

    #[test]
    fn filter_removes_single_slice_component() {
        // 120 voxels confined to one axial slice: removed by the
        // two-consecutive-slices rule despite its volume.
        let g = Geometry::isotropic([16, 16, 8]);
        let mut on = Vec::new();
        for y in 0..10 {
            for x in 0..12 {
                on.push((x, y, 3));
            }
        }
        assert_eq!(on.len(), 120);
        let m = mask_from_indices(g, &on);
        let out = filter_small_components(&m, 0.05, 2, 2, Connectivity::TwentySix);
        assert!(out.is_empty_mask());
    }

    #[test]
    fn filter_keeps_large_multi_slice_component() {
        let g = Geometry::isotropic([16, 16, 8]);
        let mut on = Vec::new();
        for z in 2..5 {
            for y in 0..10 {
                for x in 0..7 {
                    on.push((x, y, z));
                }
            }
        }
        assert_eq!(on.len(), 210);
        let m = mask_from_indices(g, &on);
        let out = filter_small_components(&m, 0.05, 2, 2, Connectivity::TwentySix);
        assert_eq!(out.count_set(), 210);
    }

    #[test]
    fn filter_never_adds_and_is_idempotent() {
        let g = Geometry::isotropic([12, 12, 12]);
        let mut on = Vec::new();
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    on.push((x, y, z));
                    on.push((x + 8, y + 8, z + 8));
                }
            }
        }
        on.push((6, 6, 6)); // lone voxel, removed
        let m = mask_from_indices(g, &on);
        let once = filter_small_components(&m, 0.02, 2, 2, Connectivity::TwentySix);
        let twice = filter_small_components(&once, 0.02, 2, 2, Connectivity::TwentySix);
        assert_eq!(once, twice);
        for (a, b) in once.data.iter().zip(&m.data) {
            assert!(!a | b, "filter added a voxel");
        }
    }

    fn simple_settings() -> SweepSettings {
        SweepSettings {
            min_component_ml: 0.0,
            min_consecutive_slices: 1,
            slice_axis: 2,
            connectivity: Connectivity::TwentySix,
            positive_threshold_ml: 0.1,
            tp_dice_min: 0.001,
        }
    }

    #[test]
    fn sweep_prefers_lowest_winning_threshold_when_prob_equals_gt() {
        // 6x6x6 = 216 voxels = 0.216 mL: clearly positive
        let g = Geometry::isotropic([8, 8, 8]);
        let mut gt = BinaryMask::empty(g);
        for z in 1..7 {
            for y in 1..7 {
                for x in 1..7 {
                    gt.data[g.index(x, y, z)] = true;
                }
            }
        }
        let prob = ProbabilityMap::from_mask(&gt);
        let thresholds = default_thresholds();
        let result = threshold_sweep(&[(&prob, &gt)], &thresholds, &simple_settings()).unwrap();
        assert_eq!(result.best_threshold, 0.05);
        assert!(result.scores.iter().all(|s| s.mean_object_dice == 1.0));
    }

    #[test]
    fn sweep_finds_the_separating_threshold() {
        // 0.45 inside GT, 0.30 outside: thresholds in [0.30, 0.45) win with
        // Dice 1; on the mid-decile grid that is exactly 0.35.
        let g = Geometry::isotropic([8, 8, 8]);
        let mut gt = BinaryMask::empty(g);
        for z in 1..7 {
            for y in 1..7 {
                for x in 1..7 {
                    gt.data[g.index(x, y, z)] = true;
                }
            }
        }
        let prob = ProbabilityMap::new(
            g,
            gt.data.iter().map(|&b| if b { 0.45 } else { 0.30 }).collect(),
        )
        .unwrap();
        let result =
            threshold_sweep(&[(&prob, &gt)], &default_thresholds(), &simple_settings()).unwrap();
        assert_eq!(result.best_threshold, 0.35);
        let best = &result.scores[3];
        assert_eq!(best.threshold, 0.35);
        assert_eq!(best.mean_object_dice, 1.0);
        // below 0.30 everything is predicted: still TP but object dice < 1
        assert!(result.scores[0].mean_object_dice < 1.0);
        // at 0.45 and above the prediction is empty: FN, dice 0
        assert_eq!(result.scores[4].mean_object_dice, 0.0);
    }

    #[test]
    fn sweep_all_zero_probabilities_ties_to_lowest() {
        let g = Geometry::isotropic([8, 8, 8]);
        let mut gt = BinaryMask::empty(g);
        for z in 0..6 {
            for y in 0..6 {
                for x in 0..6 {
                    gt.data[g.index(x, y, z)] = true;
                }
            }
        }
        let prob = ProbabilityMap::filled(g, 0.0).unwrap();
        let result =
            threshold_sweep(&[(&prob, &gt)], &default_thresholds(), &simple_settings()).unwrap();
        assert_eq!(result.best_threshold, 0.05);
        assert!(result.scores.iter().all(|s| s.mean_object_dice == 0.0));
    }

    #[test]
    fn sweep_rejects_empty_cases_and_bad_grids() {
        assert!(matches!(
            threshold_sweep(&[], &default_thresholds(), &simple_settings()),
            Err(Error::EmptyInput)
        ));
        let g = Geometry::isotropic([2, 2, 2]);
        let prob = ProbabilityMap::filled(g, 0.5).unwrap();
        let gt = BinaryMask::empty(g);
        assert!(threshold_sweep(&[(&prob, &gt)], &[0.5, 0.4], &simple_settings()).is_err());
        assert!(threshold_sweep(&[(&prob, &gt)], &[], &simple_settings()).is_err());
    }

    proptest! {
        /// Binarize is monotone: raising the threshold can only shrink the mask.
        #[test]
        fn binarize_is_monotone(
            values in prop::collection::vec(0.0f32..=1.0, 27),
            t1 in 0.0f32..=1.0,
            t2 in 0.0f32..=1.0,
        ) {
            let g = Geometry::isotropic([3, 3, 3]);
            let prob = ProbabilityMap::new(g, values).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let m_lo = binarize(&prob, lo);
            let m_hi = binarize(&prob, hi);
            for (a, b) in m_hi.data.iter().zip(&m_lo.data) {
                prop_assert!(!a | b, "mask at higher threshold is not a subset");
            }
        }

        /// Component sizes always sum to the mask's voxel count.
        #[test]
        fn component_sizes_partition_the_mask(bits in prop::collection::vec(any::<bool>(), 4 * 4 * 4)) {
            let g = Geometry::isotropic([4, 4, 4]);
            let m = BinaryMask::new(g, bits).unwrap();
            for conn in [Connectivity::Six, Connectivity::TwentySix] {
                let cc = connected_components(&m, conn);
                prop_assert_eq!(cc.sizes.iter().sum::<usize>(), m.count_set());
                prop_assert_eq!(cc.labels.iter().filter(|&&l| l != 0).count(), m.count_set());
            }
        }
    }
}
