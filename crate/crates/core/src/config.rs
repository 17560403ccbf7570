//! Aggregated pipeline configuration with the protocol defaults. Every
//! constant the pipeline uses lives here so one JSON file can override any of
//! them.

use alloc::vec::Vec;

use crate::augment::AugmentConfig;
use crate::cohort;
use crate::postprocess::{self, Connectivity, SweepSettings};
use crate::preprocess::PreprocessConfig;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub patch_size: [usize; 3],
    pub overlap_fraction: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            patch_size: [160, 160, 160],
            overlap_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    pub min_component_ml: f64,
    pub min_consecutive_slices: usize,
    /// Axis of the consecutive-slices rule; 2 is axial for standard
    /// orientations.
    pub slice_axis: usize,
    pub connectivity: Connectivity,
    pub thresholds: Vec<f32>,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            min_component_ml: 0.05,
            min_consecutive_slices: 2,
            slice_axis: 2,
            connectivity: Connectivity::TwentySix,
            thresholds: postprocess::default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Minimum volume for a mask to count as a finding.
    pub positive_threshold_ml: f64,
    /// Annotations in (0, threshold] are excluded as noise.
    pub exclusion_threshold_ml: f64,
    /// Minimum voxelwise Dice for a positive pair to count as TP.
    pub tp_dice_min: f64,
    /// Unmatched predicted components above this volume drag precision down.
    pub unmatched_pred_min_ml: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            positive_threshold_ml: 0.1,
            exclusion_threshold_ml: 0.1,
            tp_dice_min: 0.001,
            unmatched_pred_min_ml: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub k_folds: usize,
    pub volume_bins_ml: Vec<f64>,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            k_folds: 5,
            volume_bins_ml: cohort::default_volume_bins(),
            seed: 0,
        }
    }
}

/// Everything in one place; sections fall back to their defaults when absent
/// from the config file.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub augment: AugmentConfig,
    pub inference: InferenceConfig,
    pub postprocess: PostprocessConfig,
    pub metrics: MetricsConfig,
    pub cohort: CohortConfig,
}

impl PipelineConfig {
    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            min_component_ml: self.postprocess.min_component_ml,
            min_consecutive_slices: self.postprocess.min_consecutive_slices,
            slice_axis: self.postprocess.slice_axis,
            connectivity: self.postprocess.connectivity,
            positive_threshold_ml: self.metrics.positive_threshold_ml,
            tp_dice_min: self.metrics.tp_dice_min,
        }
    }
}
