use nalgebra::{Matrix3, Point3, Vector3};

use super::KdTree;
use crate::error::{Error, Result};
use crate::model::{PointCloud, RigidTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps the source cloud into the target's frame.
    pub transform: RigidTransform,
    pub rms: f64,
    /// RMS nearest-neighbour residual before each update, then the final one.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Least-squares rotation and translation taking `src[i]` onto `dst[i]`.
/// Reflections are corrected by flipping the smallest singular direction.
pub fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<RigidTransform> {
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let max = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * max.max(1e-300)).count();
    if max <= 1e-300 || rank < 2 {
        return Err(Error::DegenerateGeometry(format!("cross-covariance has rank {rank}")));
    }
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // nalgebra sorts singular values in descending order.
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    Ok(RigidTransform::new(r, cd - r * cs))
}

/// Point-to-point ICP from the identity after centroid alignment.
pub fn icp_align(source: &PointCloud, target: &PointCloud, max_iter: usize, tol: f64) -> Result<IcpResult> {
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::DegenerateGeometry("ICP needs at least 3 points per cloud".into()));
    }
    let tree = KdTree::build(&target.points);
    let shift = target.centroid() - source.centroid();
    let mut transform = RigidTransform::new(Matrix3::identity(), shift);
    let mut history = Vec::new();
    let mut moved: Vec<Point3<f64>> = source.points.iter().map(|p| transform.apply(p)).collect();
    let mut matched = Vec::with_capacity(moved.len());
    let correspond = |moved: &[Point3<f64>], matched: &mut Vec<Point3<f64>>| {
        matched.clear();
        let mut sum = 0.0;
        for p in moved {
            let (i, d2) = tree.nearest(p).expect("target is non-empty");
            matched.push(target.points[i]);
            sum += d2;
        }
        (sum / moved.len() as f64).sqrt()
    };
    let mut rms = correspond(&moved, &mut matched);
    let mut iterations = 0;
    while iterations < max_iter {
        history.push(rms);
        let step = kabsch(&moved, &matched)?;
        transform = step.compose(&transform);
        moved = source.points.iter().map(|p| transform.apply(p)).collect();
        iterations += 1;
        let next = correspond(&moved, &mut matched);
        let delta = (rms - next).abs();
        rms = next;
        if delta < tol {
            break;
        }
    }
    history.push(rms);
    Ok(IcpResult {
        transform,
        rms,
        history,
        iterations,
    })
}
