//! Cohort-level aggregation and table/plot-data emission.
//!
//! Object-wise statistics aggregate over true-positive cases only; detection
//! rates over positive cases; volume deltas split into over- and
//! undersegmentation with median [IQR] summaries. Emitted numbers are fixed
//! to two decimals, mean±std cells zero-padded to width 5 per side.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::cohort::{SourceGroup, Target, TimePoint, TumorType};
use crate::error::Error;
use crate::metrics::{CaseOutcome, DeltaDirection};
use crate::stats;
use crate::Result;

/// Flat per-case evaluation result; one row of the per-case CSV.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    /// Subgroup label, e.g. `Gli_B_pre` (with a `*` suffix when the tumor was
    /// subtracted for SNFH evaluation).
    pub subgroup: String,
    pub source_group: SourceGroup,
    pub tumor_type: TumorType,
    pub time_point: TimePoint,
    pub target: Target,
    pub outcome: CaseOutcome,
    pub gt_ml: f64,
    pub pred_ml: f64,
    /// Object-wise scores; present on TP cases only.
    pub dice: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub delta_ml: Option<f64>,
    pub direction: Option<DeltaDirection>,
}

/// Grouping keys for [`aggregate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupField {
    Subgroup,
    Target,
    SourceGroup,
    TumorType,
    TimePoint,
}

impl GroupField {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "subgroup" => Ok(GroupField::Subgroup),
            "target" => Ok(GroupField::Target),
            "source_group" | "source" => Ok(GroupField::SourceGroup),
            "tumor_type" | "tumor" => Ok(GroupField::TumorType),
            "time_point" | "time" => Ok(GroupField::TimePoint),
            other => Err(Error::InvalidParameter(format!(
                "unknown group field {other:?}"
            ))),
        }
    }

    fn value_of(&self, c: &CaseResult) -> String {
        match self {
            GroupField::Subgroup => c.subgroup.clone(),
            GroupField::Target => c.target.as_str().to_string(),
            GroupField::SourceGroup => c.source_group.as_str().to_string(),
            GroupField::TumorType => c.tumor_type.as_str().to_string(),
            GroupField::TimePoint => c.time_point.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeltaSummary {
    pub median_ml: f64,
    pub iqr_lo_ml: f64,
    pub iqr_hi_ml: f64,
    pub count: usize,
}

/// One output table row.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AggregateRow {
    /// "Test set" label: the non-target group keys joined by spaces.
    pub test_set: String,
    pub target: String,
    pub n_cases: usize,
    pub detection_rate: Option<f64>,
    pub dice: Option<MeanStd>,
    pub recall: Option<MeanStd>,
    pub precision: Option<MeanStd>,
    pub hd95: Option<MeanStd>,
    pub over: Option<DeltaSummary>,
    pub under: Option<DeltaSummary>,
}

fn mean_std_of(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let (mean, std) = stats::mean_sample_std(values);
    Some(MeanStd { mean, std })
}

fn delta_summary(deltas: &[f64]) -> Option<DeltaSummary> {
    if deltas.is_empty() {
        return None;
    }
    let (median, lo, hi) = stats::median_iqr(deltas);
    Some(DeltaSummary {
        median_ml: median,
        iqr_lo_ml: lo,
        iqr_hi_ml: hi,
        count: deltas.len(),
    })
}

/// Group case results and reduce each group. Rows come out sorted by group
/// key, so the output is independent of the input order.
pub fn aggregate(cases: &[CaseResult], group_by: &[GroupField]) -> Result<Vec<AggregateRow>> {
    if cases.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: BTreeMap<Vec<String>, Vec<&CaseResult>> = BTreeMap::new();
    for c in cases {
        let key: Vec<String> = group_by.iter().map(|f| f.value_of(c)).collect();
        groups.entry(key).or_default().push(c);
    }

    let mut rows = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let mut test_set_parts = Vec::new();
        let mut target = String::new();
        for (field, value) in group_by.iter().zip(&key) {
            if matches!(field, GroupField::Target) {
                target = value.clone();
            } else {
                test_set_parts.push(value.clone());
            }
        }

        let outcomes: Vec<CaseOutcome> = members.iter().map(|c| c.outcome).collect();
        let tp: Vec<&&CaseResult> = members
            .iter()
            .filter(|c| c.outcome == CaseOutcome::Tp)
            .collect();
        let collect = |f: fn(&CaseResult) -> Option<f64>| -> Vec<f64> {
            tp.iter().filter_map(|c| f(c)).collect()
        };
        let dice = collect(|c| c.dice);
        let recall = collect(|c| c.recall);
        let precision = collect(|c| c.precision);
        let hd95 = collect(|c| c.hd95_mm);
        let over: Vec<f64> = tp
            .iter()
            .filter(|c| c.direction == Some(DeltaDirection::Over))
            .filter_map(|c| c.delta_ml)
            .collect();
        let under: Vec<f64> = tp
            .iter()
            .filter(|c| c.direction == Some(DeltaDirection::Under))
            .filter_map(|c| c.delta_ml)
            .collect();

        rows.push(AggregateRow {
            test_set: test_set_parts.join(" "),
            target,
            n_cases: members.len(),
            detection_rate: crate::metrics::detection_rate(&outcomes),
            dice: mean_std_of(&dice),
            recall: mean_std_of(&recall),
            precision: mean_std_of(&precision),
            hd95: mean_std_of(&hd95),
            over: delta_summary(&over),
            under: delta_summary(&under),
        });
    }
    Ok(rows)
}

/// Output formats of [`emit_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
    Json,
}

impl TableFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::InvalidParameter(format!(
                "unknown table format {other:?}"
            ))),
        }
    }
}

fn fmt_mean_std(ms: &Option<MeanStd>, percent: bool) -> String {
    match ms {
        None => "-".to_string(),
        Some(ms) => {
            let k = if percent { 100.0 } else { 1.0 };
            format!("{:05.2}\u{00b1}{:05.2}", ms.mean * k, ms.std * k)
        }
    }
}

fn fmt_detection(d: &Option<f64>) -> String {
    match d {
        None => "-".to_string(),
        Some(d) => format!("{d:.2}"),
    }
}

fn fmt_delta(d: &Option<DeltaSummary>) -> String {
    match d {
        None => "-".to_string(),
        Some(d) => format!(
            "{:.2} [{:.2}-{:.2}]",
            d.median_ml, d.iqr_lo_ml, d.iqr_hi_ml
        ),
    }
}

fn fmt_count(d: &Option<DeltaSummary>) -> String {
    match d {
        None => "0".to_string(),
        Some(d) => d.count.to_string(),
    }
}

const TABLE_COLUMNS: [&str; 11] = [
    "Test set",
    "Target",
    "Detection rate",
    "Dice",
    "Recall",
    "Precision",
    "HD95",
    "Overseg \u{0394} (mL)",
    "Overseg #",
    "Underseg \u{0394} (mL)",
    "Underseg #",
];

fn row_cells(r: &AggregateRow) -> [String; 11] {
    [
        r.test_set.clone(),
        r.target.clone(),
        fmt_detection(&r.detection_rate),
        fmt_mean_std(&r.dice, true),
        fmt_mean_std(&r.recall, true),
        fmt_mean_std(&r.precision, true),
        fmt_mean_std(&r.hd95, false),
        fmt_delta(&r.over),
        fmt_count(&r.over),
        fmt_delta(&r.under),
        fmt_count(&r.under),
    ]
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Render rows in the layout of the results tables. CSV and JSON carry the
/// same formatted fields plus the case count.
pub fn emit_table(rows: &[AggregateRow], format: TableFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = String::new();
    match format {
        TableFormat::Markdown => {
            out.push_str(&format!("| {} |\n", TABLE_COLUMNS.join(" | ")));
            out.push_str(&format!(
                "|{}\n",
                " --- |".repeat(TABLE_COLUMNS.len())
            ));
            for r in rows {
                out.push_str(&format!("| {} |\n", row_cells(r).join(" | ")));
            }
        }
        TableFormat::Csv => {
            let mut header: Vec<String> =
                TABLE_COLUMNS.iter().map(|c| c.to_string()).collect();
            header.push("N cases".to_string());
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                let mut cells = row_cells(r).to_vec();
                cells.push(r.n_cases.to_string());
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        TableFormat::Json => {
            out.push_str("[\n");
            for (i, r) in rows.iter().enumerate() {
                let cells = row_cells(r);
                out.push_str("  {");
                let mut fields: Vec<String> = TABLE_COLUMNS
                    .iter()
                    .zip(&cells)
                    .map(|(k, v)| format!("\"{}\": \"{}\"", json_escape(k), json_escape(v)))
                    .collect();
                fields.push(format!("\"N cases\": \"{}\"", r.n_cases));
                out.push_str(&fields.join(", "));
                out.push('}');
                if i + 1 < rows.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str("]\n");
        }
    }
    Ok(out)
}

/// Per-case scatter data for the Dice-vs-volume plots: one row per case,
/// false negatives included with Dice 0.
pub fn emit_scatter_data(cases: &[CaseResult]) -> String {
    let mut out = String::from("group,gt_ml,dice,outcome\n");
    for c in cases {
        let dice = match c.outcome {
            CaseOutcome::Tp => c.dice.unwrap_or(0.0),
            _ => 0.0,
        };
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            c.subgroup,
            c.gt_ml,
            dice,
            c.outcome.as_str()
        ));
    }
    out
}

const CASE_CSV_HEADER: &str = "case_id,group,tumor_type,time_point,target,outcome,gt_ml,pred_ml,dice,recall,precision,hd95_mm,delta_ml,direction";

fn opt6(v: &Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(v) => format!("{v:.6}"),
    }
}

/// One CSV row per (case, target); object-wise fields are empty on non-TP
/// cases.
pub fn emit_case_csv(cases: &[CaseResult]) -> String {
    let mut out = String::from(CASE_CSV_HEADER);
    out.push('\n');
    for c in cases {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{},{},{},{},{},{}\n",
            c.case_id,
            c.subgroup,
            c.tumor_type.as_str(),
            c.time_point.as_str(),
            c.target.as_str(),
            c.outcome.as_str(),
            c.gt_ml,
            c.pred_ml,
            opt6(&c.dice),
            opt6(&c.recall),
            opt6(&c.precision),
            opt6(&c.hd95_mm),
            opt6(&c.delta_ml),
            c.direction.map(|d| d.as_str()).unwrap_or(""),
        ));
    }
    out
}

/// Parse a per-case CSV produced by [`emit_case_csv`].
pub fn parse_case_csv(text: &str) -> Result<Vec<CaseResult>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyInput)?;
    if header != CASE_CSV_HEADER {
        return Err(Error::InvalidParameter(format!(
            "unexpected per-case CSV header: {header:?}"
        )));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::InvalidParameter(format!(
                "line {}: expected 14 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::InvalidParameter(format!("bad number {s:?}")))
            }
        };
        let req = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number {s:?}")))
        };
        let outcome = match fields[5] {
            "TP" => CaseOutcome::Tp,
            "FP" => CaseOutcome::Fp,
            "FN" => CaseOutcome::Fn,
            "TN" => CaseOutcome::Tn,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown outcome {other:?}"
                )))
            }
        };
        let direction = match fields[13] {
            "" => None,
            "over" => Some(DeltaDirection::Over),
            "under" => Some(DeltaDirection::Under),
            "exact" => Some(DeltaDirection::Exact),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown direction {other:?}"
                )))
            }
        };
        // group column carries the subgroup label; source group is its
        // A/B component
        let subgroup = fields[1].to_string();
        let source_group = if subgroup.contains("A_B") {
            SourceGroup::A
        } else if subgroup.contains("_B_") || subgroup.starts_with("B_") {
            SourceGroup::B
        } else {
            SourceGroup::A
        };
        out.push(CaseResult {
            case_id: fields[0].to_string(),
            subgroup,
            source_group,
            tumor_type: TumorType::parse(fields[2])?,
            time_point: TimePoint::parse(fields[3])?,
            target: Target::parse(fields[4])?,
            outcome,
            gt_ml: req(fields[6])?,
            pred_ml: req(fields[7])?,
            dice: opt(fields[8])?,
            recall: opt(fields[9])?,
            precision: opt(fields[10])?,
            hd95_mm: opt(fields[11])?,
            delta_ml: opt(fields[12])?,
            direction,
        });
    }
    Ok(out)
}
