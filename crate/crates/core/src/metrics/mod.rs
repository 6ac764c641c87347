//! Evaluation: detection and raster metrics, classification, alert rating
//! and the sweep harnesses.

mod classify;
mod detection;
mod occupancy;
mod perception;
mod rating;
mod sweep;

pub use classify::{classification_report, ClassificationReport};
pub use detection::{
    aligned_iou, average_precision, match_detections, mean_average_precision, pooled_average_precision, tp_metrics,
    MatchResult, TpErrors, TpRow, TpTable, MATCH_THRESHOLD_M,
};
pub use occupancy::{bev_miou, instance_mask, motion_vpq, occupancy_from_boxes, OCCUPIED_THRESHOLD};
pub use perception::{PerceptionEval, PerceptionReport};
pub use rating::{rate_alert, rate_alerts, EpisodeTruth, Rating, RatingHistogram, TickEvidence, RATER_VERSION, TIMELY_MARGIN_S};
pub use sweep::{
    run_intensity_sweep, run_renewal_sweep, run_suite, SweepRow, SweepTable, INTENSITY_SWEEP_RATE, RENEWAL_RATES,
    SWEEP_RENEWAL_K, SWEEP_SUITE_SIZE,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no ground truth for this class")]
    NoGroundTruth,
    #[error("grid specs differ")]
    SpecMismatch,
    #[error("inputs differ in length")]
    LengthMismatch,
    #[error("empty input")]
    EmptyInput,
}
