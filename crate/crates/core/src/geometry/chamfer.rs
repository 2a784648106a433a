use super::*;
use crate::error::{Error, Result};
use crate::model::PointCloud;
use crate::providers::GeometryResult;

fn mean_nearest(from: &PointCloud, tree: &KdTree) -> f64 {
    from.points.iter().map(|p| tree.nearest(p).unwrap().1.sqrt()).sum::<f64>() / from.len() as f64
}

/// `½(mean_a min_b ‖a−b‖ + mean_b min_a ‖a−b‖)`.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (ta, tb) = (KdTree::build(&a.points), KdTree::build(&b.points));
    Ok(0.5 * (mean_nearest(a, &tb) + mean_nearest(b, &ta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChamferOutcome {
    pub distance: f64,
    pub icp: IcpResult,
    pub reference_points: usize,
    pub generated_points: usize,
}

/// Normalized, downsampled reference and generated clouds.
pub fn prepared_cloud(g: &GeometryResult, p: &GeometryParams) -> Result<PointCloud> {
    let cloud = cloud_from_geometry(g, p.conf_quantile)?;
    let cloud = downsample(&cloud, p.n_max, p.seed)?;
    Ok(normalize_cloud(&cloud)?.0)
}

/// Chamfer distance after aligning the generated cloud onto the reference.
pub fn chamfer_from_geometry(reference: &GeometryResult, generated: &GeometryResult, p: &GeometryParams) -> Result<ChamferOutcome> {
    let r = prepared_cloud(reference, p)?;
    let g = prepared_cloud(generated, p)?;
    let icp = icp_align(&g, &r, p.max_iter, p.tol)?;
    let aligned = g.transformed(&icp.transform);
    Ok(ChamferOutcome {
        distance: chamfer_distance(&aligned, &r)?,
        icp,
        reference_points: r.len(),
        generated_points: g.len(),
    })
}
