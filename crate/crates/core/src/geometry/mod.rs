//! Geometry-aware identity metrics: reconstructed point clouds compared by
//! Chamfer distance after ICP, and cross-view feature consistency.

mod chamfer;
mod cloud;
mod icp;
mod kdtree;
mod met3r;

pub use chamfer::*;
pub use cloud::*;
pub use icp::*;
pub use kdtree::KdTree;
pub use met3r::*;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::FrameImage;
use crate::providers::ModelProvider;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    pub conf_quantile: f64,
    pub n_max: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            conf_quantile: 0.5,
            n_max: 4096,
            max_iter: 50,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl GeometryParams {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error::Config;
        if !(0.0..=1.0).contains(&self.conf_quantile) {
            return Err(Config("conf_quantile must be in [0, 1]".into()));
        }
        if self.n_max < 3 || self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Config("n_max >= 3, max_iter >= 1 and tol > 0 are required".into()));
        }
        Ok(())
    }
}

/// Reconstructs both frame sets and compares them.
pub fn clip_chamfer_score(
    provider: &dyn ModelProvider,
    reference: &[FrameImage],
    generated: &[FrameImage],
    params: &GeometryParams,
) -> Result<ChamferOutcome> {
    let r = provider.geometry(reference)?;
    r.validate()?;
    let g = provider.geometry(generated)?;
    g.validate()?;
    chamfer_from_geometry(&r, &g, params)
}
