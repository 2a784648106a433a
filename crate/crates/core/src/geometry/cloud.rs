use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curation::quantile;
use crate::error::{Error, Result};
use crate::model::PointCloud;
use crate::providers::GeometryResult;

/// All views' points whose confidence reaches the `q`-quantile of every
/// confidence in the result. Non-finite points are dropped.
pub fn cloud_from_geometry(result: &GeometryResult, q: f64) -> Result<PointCloud> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("confidence quantile {q} outside [0, 1]")));
    }
    let mut all: Vec<f64> = result.views.iter().flat_map(|v| v.confidence.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::EmptyCloud);
    }
    all.sort_by(f64::total_cmp);
    let cut = quantile(&all, q);
    let mut points = Vec::new();
    let mut conf = Vec::new();
    let mut origin = Vec::new();
    for (vi, v) in result.views.iter().enumerate() {
        for (p, &c) in v.pointmap.iter().zip(&v.confidence) {
            if c >= cut && p.coords.iter().all(|x| x.is_finite()) {
                points.push(*p);
                conf.push(c);
                origin.push(vi as u32);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud {
        points,
        confidences: Some(conf),
        frame_origin: Some(origin),
    })
}

/// Seeded uniform subset of at most `n_max` points, in original order.
pub fn downsample(cloud: &PointCloud, n_max: usize, seed: u64) -> Result<PointCloud> {
    if n_max == 0 {
        return Err(Error::Config("n_max must be >= 1".into()));
    }
    if cloud.len() <= n_max {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, cloud.len(), n_max).into_vec();
    idx.sort_unstable();
    Ok(cloud.select(&idx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub centroid: Point3<f64>,
    pub scale: f64,
    /// All points coincided; `scale` was forced to 1.
    pub degenerate: bool,
}

/// Centres the cloud and divides by the mean point norm.
pub fn normalize_cloud(cloud: &PointCloud) -> Result<(PointCloud, Normalization)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let c = cloud.centroid();
    let centred: Vec<Vector3<f64>> = cloud.points.iter().map(|p| p - c).collect();
    let mean_norm = centred.iter().map(|v| v.norm()).sum::<f64>() / centred.len() as f64;
    let degenerate = !(mean_norm > 1e-12);
    if degenerate {
        tracing::warn!(points = cloud.len(), "degenerate cloud: all points identical, scale left at 1");
    }
    let scale = if degenerate { 1.0 } else { mean_norm };
    let out = PointCloud {
        points: centred.iter().map(|v| Point3::from(v / scale)).collect(),
        ..cloud.clone()
    };
    Ok((
        out,
        Normalization {
            centroid: c,
            scale,
            degenerate,
        },
    ))
}
