//! The video and image filter cascades.
//!
//! Every gate here is a pure function of its inputs. [`pipeline`] wires
//! them to a manifest, a decoder and a provider.

mod dbscan;
mod gates;
mod percentile;
pub mod pipeline;
mod shots;

pub use dbscan::{dbscan_cluster, dominant_cluster_retain, NOISE};
pub use gates::*;
pub use percentile::{percentile_prune, quantile, CorpusStatistic};
pub use pipeline::{CurateSummary, Curator};
pub use shots::{boundary_transitions, shot_boundary_scores, split_at_boundaries, stitch_segments, Segment};

use serde::{Deserialize, Serialize};

/// Stage thresholds. Defaults are the published values where one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationThresholds {
    pub min_frames: usize,
    pub min_side: u32,
    pub brightness_low_pct: f64,
    pub brightness_high_pct: f64,
    pub blur_low_pct: f64,
    pub blur_high_pct: f64,
    /// When false only the blurry tail of the Laplacian-variance
    /// distribution is pruned.
    pub blur_prune_top: bool,
    pub statistic_frames: usize,
    pub theta_cut: f64,
    pub theta_stitch: f64,
    pub aesthetic_frames: usize,
    pub aesthetic_min: f64,
    pub ocr_max_chars: u32,
    pub outlier_theta: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
}

impl Default for CurationThresholds {
    fn default() -> Self {
        CurationThresholds {
            min_frames: 81,
            min_side: 320,
            brightness_low_pct: 5.0,
            brightness_high_pct: 5.0,
            blur_low_pct: 5.0,
            blur_high_pct: 5.0,
            blur_prune_top: true,
            statistic_frames: 10,
            theta_cut: 30.0,
            theta_stitch: 0.85,
            aesthetic_frames: 10,
            aesthetic_min: 3.0,
            ocr_max_chars: 30,
            outlier_theta: 0.9,
            dbscan_eps: 0.15,
            dbscan_min_pts: 2,
        }
    }
}

impl CurationThresholds {
    pub fn validate(&self) -> crate::Result<()> {
        let pct_ok = |p: f64| (0.0..50.0).contains(&p);
        let checks = [
            (self.min_frames >= 1, "min_frames must be >= 1"),
            (
                pct_ok(self.brightness_low_pct)
                    && pct_ok(self.brightness_high_pct)
                    && pct_ok(self.blur_low_pct)
                    && pct_ok(self.blur_high_pct),
                "percentiles must lie in [0, 50)",
            ),
            (self.statistic_frames >= 1, "statistic_frames must be >= 1"),
            (self.aesthetic_frames >= 1, "aesthetic_frames must be >= 1"),
            (self.theta_cut >= 0.0, "theta_cut must be >= 0"),
            ((-1.0..=1.0).contains(&self.theta_stitch), "theta_stitch must lie in [-1, 1]"),
            ((-1.0..=1.0).contains(&self.outlier_theta), "outlier_theta must lie in [-1, 1]"),
            ((0.0..=2.0).contains(&self.dbscan_eps), "dbscan_eps must lie in [0, 2]"),
            (self.dbscan_min_pts >= 1, "dbscan_min_pts must be >= 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(crate::Error::Config(format!("curation_thresholds: {msg}"))),
            None => Ok(()),
        }
    }
}
