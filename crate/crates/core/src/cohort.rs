//! Case registry, label derivation, exclusion rules, subgroup naming, and
//! patient-wise stratified fold planning.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::rng::CounterRng;
use crate::volume::BinaryMask;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum SourceGroup {
    A,
    B,
}

impl SourceGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceGroup::A => "A",
            SourceGroup::B => "B",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(SourceGroup::A),
            "B" | "b" => Ok(SourceGroup::B),
            other => Err(Error::InvalidRecord(format!("unknown source group {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum TumorType {
    Gli,
    Met,
    Men,
}

impl TumorType {
    pub fn as_str(&self) -> &'static str {
        match self {
            TumorType::Gli => "Gli",
            TumorType::Met => "Met",
            TumorType::Men => "Men",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Gli" | "gli" => Ok(TumorType::Gli),
            "Met" | "met" => Ok(TumorType::Met),
            "Men" | "men" => Ok(TumorType::Men),
            other => Err(Error::InvalidRecord(format!("unknown tumor type {other:?}"))),
        }
    }
}

/// Acquisition time point. The three post-surgical follow-ups are named by
/// the rounded number of months after surgery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum TimePoint {
    Pre,
    EarlyPost,
    Post1,
    Post3,
    Post6,
}

impl TimePoint {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimePoint::Pre => "pre",
            TimePoint::EarlyPost => "early_post",
            TimePoint::Post1 => "post1",
            TimePoint::Post3 => "post3",
            TimePoint::Post6 => "post6",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pre" => Ok(TimePoint::Pre),
            "early_post" => Ok(TimePoint::EarlyPost),
            "post1" => Ok(TimePoint::Post1),
            "post3" => Ok(TimePoint::Post3),
            "post6" => Ok(TimePoint::Post6),
            other => Err(Error::InvalidRecord(format!("unknown time point {other:?}"))),
        }
    }

    /// Coarse pre/post tag used in subgroup names.
    pub fn coarse(&self) -> TimeTag {
        match self {
            TimePoint::Pre => TimeTag::Pre,
            _ => TimeTag::Post,
        }
    }

    pub fn is_post(&self) -> bool {
        !matches!(self, TimePoint::Pre)
    }
}

/// Coarse acquisition tag for subgroup names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum TimeTag {
    Pre,
    Post,
}

impl TimeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimeTag::Pre => "pre",
            TimeTag::Post => "post",
        }
    }
}

/// Segmentation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Target {
    Fh,
    Snfh,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Fh => "FH",
            Target::Snfh => "SNFH",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "FH" | "fh" => Ok(Target::Fh),
            "SNFH" | "snfh" => Ok(Target::Snfh),
            other => Err(Error::InvalidRecord(format!("unknown target {other:?}"))),
        }
    }
}

/// One patient scan with its ground truth and prediction references.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub patient_id: String,
    pub source_group: SourceGroup,
    pub tumor_type: TumorType,
    pub time_point: TimePoint,
    pub target: Target,
    pub gt_path: String,
    pub prob_path: String,
    pub tumor_mask_path: Option<String>,
    pub brain_mask_path: Option<String>,
    pub gt_ml: f64,
}

impl CaseRecord {
    /// Composition rules: patients are identified, SNFH labels exist only in
    /// group B, and meningioma/metastasis scans are pre-operative only.
    pub fn validate(&self) -> Result<()> {
        if self.patient_id.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "case {:?} has an empty patient id",
                self.case_id
            )));
        }
        if self.target == Target::Snfh && self.source_group != SourceGroup::B {
            return Err(Error::InvalidRecord(format!(
                "case {:?}: SNFH target requires source group B",
                self.case_id
            )));
        }
        if matches!(self.tumor_type, TumorType::Men | TumorType::Met) && self.time_point.is_post()
        {
            return Err(Error::InvalidRecord(format!(
                "case {:?}: {} scans are pre-operative only",
                self.case_id,
                self.tumor_type.as_str()
            )));
        }
        Ok(())
    }

    /// Kept cases with `gt_ml == 0` count as true-negative samples.
    pub fn is_positive(&self, positive_threshold_ml: f64) -> bool {
        self.gt_ml > positive_threshold_ml
    }
}

/// Merge tumor-core and surrounding-hyperintensity labels into the full
/// hyperintensity label (voxelwise union).
pub fn derive_fh_label(tumor_core: &BinaryMask, snfh: &BinaryMask) -> Result<BinaryMask> {
    tumor_core.union(snfh)
}

/// Remove the tumor volume from a prediction (set difference), leaving the
/// surrounding hyperintensity only.
pub fn subtract_tumor(pred_fh: &BinaryMask, tumor: &BinaryMask) -> Result<BinaryMask> {
    pred_fh.difference(tumor)
}

/// Split records into kept and excluded. Annotations with a tiny nonzero
/// volume (0 < gt_ml <= threshold) are annotation noise and go to `excluded`;
/// exact zeros stay as true negatives.
pub fn apply_exclusion(
    records: Vec<CaseRecord>,
    exclusion_threshold_ml: f64,
) -> (Vec<CaseRecord>, Vec<CaseRecord>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for r in records {
        if r.gt_ml > 0.0 && r.gt_ml <= exclusion_threshold_ml {
            excluded.push(r);
        } else {
            kept.push(r);
        }
    }
    (kept, excluded)
}

/// Canonical subgroup name: optional tumor-type prefix, sorted source groups,
/// then time tags in pre-before-post order, all underscore-joined. A trailing
/// `*` marks SNFH evaluation with tumor subtraction.
pub fn subgroup_name(
    tumor_type: Option<TumorType>,
    sources: &[SourceGroup],
    times: &[TimeTag],
    snfh_subtracted: bool,
) -> String {
    let mut parts: Vec<&str> = Vec::new();
    if let Some(t) = tumor_type {
        parts.push(t.as_str());
    }
    let sources: BTreeSet<SourceGroup> = sources.iter().copied().collect();
    for s in &sources {
        parts.push(s.as_str());
    }
    let times: BTreeSet<TimeTag> = times.iter().copied().collect();
    for t in &times {
        parts.push(t.as_str());
    }
    let mut name = parts.join("_");
    if snfh_subtracted {
        name.push('*');
    }
    name
}

/// Name of the subgroup a single case belongs to.
pub fn case_subgroup(record: &CaseRecord, snfh_subtracted: bool) -> String {
    subgroup_name(
        Some(record.tumor_type),
        &[record.source_group],
        &[record.time_point.coarse()],
        snfh_subtracted,
    )
}

/// One train/val/test rotation of the fold plan.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rotation {
    pub test: usize,
    pub val: usize,
    pub train: Vec<usize>,
}

/// Patient-to-fold assignment plus the three-way rotation table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
    pub rotations: Vec<Rotation>,
}

impl FoldPlan {
    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.assignment.get(patient_id).copied()
    }

    /// Patients per fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0usize; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Default volume-bin edges in mL; sub-mL lesions behave differently, so the
/// first bin isolates them.
pub fn default_volume_bins() -> Vec<f64> {
    alloc::vec![1.0, 10.0, 50.0]
}

fn volume_bin(ml: f64, edges: &[f64]) -> usize {
    edges.iter().position(|&e| ml <= e).unwrap_or(edges.len())
}

/// Patient-wise stratified split. Patients are grouped by
/// `(source, tumor type, volume bin of their largest ground-truth volume)`;
/// within each stratum they are shuffled by the seed and dealt round-robin to
/// folds (the starting fold rotates per stratum so single-patient strata do
/// not pile onto fold 0). All scans of a patient share its fold, and each
/// rotation uses fold `i` for test, `(i+1) mod k` for validation, the rest
/// for training.
pub fn stratified_split(
    records: &[CaseRecord],
    k: usize,
    seed: u64,
    volume_bins: &[f64],
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    for r in records {
        r.validate()?;
    }

    // Patient-level stratum key from their maximum lesion volume.
    let mut patients: BTreeMap<&str, (SourceGroup, TumorType, f64)> = BTreeMap::new();
    for r in records {
        let entry = patients
            .entry(r.patient_id.as_str())
            .or_insert((r.source_group, r.tumor_type, r.gt_ml));
        entry.2 = entry.2.max(r.gt_ml);
    }

    let mut strata: BTreeMap<(SourceGroup, TumorType, usize), Vec<&str>> = BTreeMap::new();
    for (pid, (src, tt, max_ml)) in &patients {
        strata
            .entry((*src, *tt, volume_bin(*max_ml, volume_bins)))
            .or_default()
            .push(pid);
    }

    let mut rng = CounterRng::with_stream(seed, 0x666f6c6473); // "folds"
    let mut assignment: BTreeMap<String, usize> = BTreeMap::new();
    for (stratum_index, members) in strata.values_mut().enumerate() {
        members.sort_unstable();
        rng.shuffle(members);
        let start = stratum_index % k;
        for (i, pid) in members.iter().enumerate() {
            assignment.insert(String::from(*pid), (start + i) % k);
        }
    }

    let rotations = (0..k)
        .map(|test| {
            let val = (test + 1) % k;
            Rotation {
                test,
                val,
                train: (0..k).filter(|&f| f != test && f != val).collect(),
            }
        })
        .collect();

    Ok(FoldPlan {
        k,
        seed,
        assignment,
        rotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use alloc::string::ToString;
    use alloc::vec;

    fn record(case: &str, patient: &str, src: SourceGroup, tt: TumorType, ml: f64) -> CaseRecord {
        CaseRecord {
            case_id: case.to_string(),
            patient_id: patient.to_string(),
            source_group: src,
            tumor_type: tt,
            time_point: TimePoint::Pre,
            target: Target::Fh,
            gt_path: String::new(),
            prob_path: String::new(),
            tumor_mask_path: None,
            brain_mask_path: None,
            gt_ml: ml,
        }
    }

    #[test]
    fn fh_label_is_the_union() {
        let g = Geometry::isotropic([10, 4, 4]);
        let mut tumor = BinaryMask::empty(g);
        let mut snfh = BinaryMask::empty(g);
        for i in 0..10 {
            tumor.data[i] = true;
        }
        for i in 20..40 {
            snfh.data[i] = true;
        }
        let fh = derive_fh_label(&tumor, &snfh).unwrap();
        assert_eq!(fh.count_set(), 30);

        // snfh inside tumor changes nothing
        let mut inner = BinaryMask::empty(g);
        inner.data[3] = true;
        let fh2 = derive_fh_label(&tumor, &inner).unwrap();
        assert_eq!(fh2.count_set(), tumor.count_set());

        // overlap counts once (inclusion-exclusion): 10 + 20 - 5 = 25
        let mut overlapping = BinaryMask::empty(g);
        for i in 5..25 {
            overlapping.data[i] = true;
        }
        let fh3 = derive_fh_label(&tumor, &overlapping).unwrap();
        assert_eq!(fh3.count_set(), 25);
    }

    #[test]
    fn tumor_subtraction_examples() {
        let g = Geometry::isotropic([10, 10, 1]);
        let mut pred = BinaryMask::empty(g);
        for i in 0..100 {
            pred.data[i] = true;
        }
        let empty = BinaryMask::empty(g);
        assert_eq!(subtract_tumor(&pred, &empty).unwrap(), pred);

        let mut tumor = BinaryMask::empty(g);
        for i in 0..30 {
            tumor.data[i] = true;
        }
        assert_eq!(subtract_tumor(&pred, &tumor).unwrap().count_set(), 70);

        let all = pred.clone();
        assert!(subtract_tumor(&pred, &all).unwrap().is_empty_mask());
        // subtraction never intersects the tumor
        let out = subtract_tumor(&pred, &tumor).unwrap();
        assert_eq!(out.overlap_count(&tumor).unwrap(), 0);
    }

    #[test]
    fn exclusion_rule_partitions_records() {
        let records = vec![
            record("c1", "p1", SourceGroup::A, TumorType::Gli, 0.05),
            record("c2", "p2", SourceGroup::A, TumorType::Gli, 0.0),
            record("c3", "p3", SourceGroup::A, TumorType::Gli, 0.2),
            record("c4", "p4", SourceGroup::A, TumorType::Gli, 0.1),
        ];
        let (kept, excluded) = apply_exclusion(records, 0.1);
        let kept_ids: Vec<&str> = kept.iter().map(|r| r.case_id.as_str()).collect();
        let excl_ids: Vec<&str> = excluded.iter().map(|r| r.case_id.as_str()).collect();
        assert_eq!(kept_ids, vec!["c2", "c3"]);
        assert_eq!(excl_ids, vec!["c1", "c4"]);
        assert!(!kept[0].is_positive(0.1), "0 mL case is a negative sample");
        assert!(kept[1].is_positive(0.1));
    }

    #[test]
    fn subgroup_names_match_the_convention() {
        use SourceGroup::*;
        use TimeTag::*;
        assert_eq!(
            subgroup_name(None, &[A, B], &[Pre, Post], false),
            "A_B_pre_post"
        );
        assert_eq!(
            subgroup_name(None, &[B], &[Pre, Post], true),
            "B_pre_post*"
        );
        assert_eq!(
            subgroup_name(Some(TumorType::Gli), &[A], &[Post], false),
            "Gli_A_post"
        );
        // duplicates and order do not matter
        assert_eq!(
            subgroup_name(None, &[B, A, B], &[Post, Pre], false),
            "A_B_pre_post"
        );
    }

    #[test]
    fn record_validation_enforces_composition() {
        let mut r = record("c", "p", SourceGroup::A, TumorType::Gli, 1.0);
        assert!(r.validate().is_ok());
        r.patient_id = String::new();
        assert!(r.validate().is_err());

        let mut r = record("c", "p", SourceGroup::A, TumorType::Gli, 1.0);
        r.target = Target::Snfh;
        assert!(r.validate().is_err(), "SNFH requires group B");
        r.source_group = SourceGroup::B;
        assert!(r.validate().is_ok());

        let mut r = record("c", "p", SourceGroup::B, TumorType::Men, 1.0);
        r.time_point = TimePoint::EarlyPost;
        assert!(r.validate().is_err(), "Men is pre-operative only");
    }

    #[test]
    fn ten_patients_one_stratum_give_two_per_fold() {
        let records: Vec<CaseRecord> = (0..10)
            .map(|i| {
                record(
                    &format!("c{i}"),
                    &format!("p{i}"),
                    SourceGroup::A,
                    TumorType::Gli,
                    5.0,
                )
            })
            .collect();
        let plan = stratified_split(&records, 5, 7, &default_volume_bins()).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2, 2, 2, 2, 2]);
    }

    #[test]
    fn all_scans_of_a_patient_share_a_fold() {
        let mut records = Vec::new();
        for i in 0..12 {
            for scan in 0..3 {
                let mut r = record(
                    &format!("p{i}_s{scan}"),
                    &format!("p{i}"),
                    SourceGroup::B,
                    TumorType::Gli,
                    2.0 + scan as f64,
                );
                r.time_point = if scan == 0 {
                    TimePoint::Pre
                } else {
                    TimePoint::EarlyPost
                };
                records.push(r);
            }
        }
        let plan = stratified_split(&records, 5, 3, &default_volume_bins()).unwrap();
        for i in 0..12 {
            let f = plan.fold_of(&format!("p{i}")).unwrap();
            assert!(f < 5);
        }
        // case-level folds come from the patient assignment, trivially equal
        // for all scans of one patient
        assert_eq!(plan.assignment.len(), 12);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let records: Vec<CaseRecord> = (0..40)
            .map(|i| {
                record(
                    &format!("c{i}"),
                    &format!("p{i}"),
                    if i % 2 == 0 { SourceGroup::A } else { SourceGroup::B },
                    TumorType::Gli,
                    (i % 7) as f64 * 3.0,
                )
            })
            .collect();
        let a = stratified_split(&records, 5, 11, &default_volume_bins()).unwrap();
        let b = stratified_split(&records, 5, 11, &default_volume_bins()).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&records, 5, 12, &default_volume_bins()).unwrap();
        assert_ne!(a.assignment, c.assignment);
    }

    #[test]
    fn per_stratum_counts_differ_by_at_most_one() {
        let mut records = Vec::new();
        let mut i = 0;
        for (src, tt, n) in [
            (SourceGroup::A, TumorType::Gli, 23),
            (SourceGroup::B, TumorType::Gli, 31),
            (SourceGroup::B, TumorType::Met, 7),
            (SourceGroup::B, TumorType::Men, 12),
        ] {
            for _ in 0..n {
                records.push(record(
                    &format!("c{i}"),
                    &format!("p{i}"),
                    src,
                    tt,
                    (i % 13) as f64,
                ));
                i += 1;
            }
        }
        let bins = default_volume_bins();
        let plan = stratified_split(&records, 5, 99, &bins).unwrap();

        let mut per_stratum: BTreeMap<(SourceGroup, TumorType, usize), Vec<usize>> =
            BTreeMap::new();
        for r in &records {
            let f = plan.fold_of(&r.patient_id).unwrap();
            per_stratum
                .entry((r.source_group, r.tumor_type, volume_bin(r.gt_ml, &bins)))
                .or_insert_with(|| vec![0; 5])[f] += 1;
        }
        for (stratum, counts) in per_stratum {
            let lo = counts.iter().min().unwrap();
            let hi = counts.iter().max().unwrap();
            assert!(hi - lo <= 1, "stratum {stratum:?} counts {counts:?}");
        }
    }

    #[test]
    fn rotations_are_disjoint_and_exhaustive() {
        let records: Vec<CaseRecord> = (0..10)
            .map(|i| {
                record(
                    &format!("c{i}"),
                    &format!("p{i}"),
                    SourceGroup::A,
                    TumorType::Gli,
                    5.0,
                )
            })
            .collect();
        let plan = stratified_split(&records, 5, 0, &default_volume_bins()).unwrap();
        assert_eq!(plan.rotations.len(), 5);
        for rot in &plan.rotations {
            let mut seen = vec![rot.test, rot.val];
            seen.extend(&rot.train);
            seen.sort_unstable();
            assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        }
    }
}
