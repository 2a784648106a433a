//! Analytic synthetic scenes with known cameras.
//!
//! Rendered views are registered by pixel hash so the mock geometry
//! provider can answer with exact pointmaps, intrinsics and poses.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::{GeometryResult, ViewGeometry};
use crate::error::{Error, Result};
use crate::ingest::FrameImage;
use crate::model::RigidTransform;

pub const BACKGROUND: [u8; 3] = [128, 128, 128];

/// A grid texture: `primary` everywhere except lines of `secondary` every
/// `cell` units along both surface coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub primary: [u8; 3],
    pub secondary: [u8; 3],
    pub cell: f64,
}

impl Texture {
    fn color(&self, u: f64, v: f64) -> [u8; 3] {
        let line = |t: f64| (t / self.cell).rem_euclid(1.0) < 0.15;
        if line(u) || line(v) {
            self.secondary
        } else {
            self.primary
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SceneSpec {
    /// The plane `z = z` in world coordinates, textured by `(x, y)`.
    Plane { z: f64, texture: Texture },
    Sphere {
        center: [f64; 3],
        radius: f64,
        texture: Texture,
    },
}

impl SceneSpec {
    /// Nearest intersection with the ray `origin + s·dir`, `s > 0`.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<Point3<f64>> {
        match *self {
            SceneSpec::Plane { z, .. } => {
                if dir.z.abs() < 1e-12 {
                    return None;
                }
                let s = (z - origin.z) / dir.z;
                if s <= 0.0 {
                    return None;
                }
                let mut p = origin + dir * s;
                p.z = z;
                Some(p)
            }
            SceneSpec::Sphere { center, radius, .. } => {
                let c = Point3::from(center);
                let oc = origin - c;
                let a = dir.norm_squared();
                let b = 2.0 * oc.dot(dir);
                let cc = oc.norm_squared() - radius * radius;
                let disc = b * b - 4.0 * a * cc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // Numerically stable roots.
                let q = if b < 0.0 { -0.5 * (b - sq) } else { -0.5 * (b + sq) };
                let (mut s0, mut s1) = (q / a, cc / q);
                if s0 > s1 {
                    std::mem::swap(&mut s0, &mut s1);
                }
                let s = if s0 > 0.0 { s0 } else if s1 > 0.0 { s1 } else { return None };
                let p = origin + dir * s;
                // Project onto the surface to remove rounding drift.
                let r = p - c;
                Some(c + r * (radius / r.norm()))
            }
        }
    }

    pub fn color_at(&self, p: &Point3<f64>) -> [u8; 3] {
        match self {
            SceneSpec::Plane { texture, .. } => texture.color(p.x, p.y),
            SceneSpec::Sphere {
                center, radius, texture, ..
            } => {
                let r = p - Point3::from(*center);
                let u = r.y.atan2(r.x) * radius;
                let v = (r.z / radius).clamp(-1.0, 1.0).acos() * radius;
                texture.color(u, v)
            }
        }
    }
}

/// Pinhole camera. `pose` maps world coordinates into the camera frame;
/// the camera looks along +z and pixel `(i, j)` has its centre at
/// `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: RigidTransform,
}

impl Camera {
    pub fn new(width: u32, height: u32, focal: f64) -> Self {
        Camera {
            width,
            height,
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            pose: RigidTransform::identity(),
        }
    }

    pub fn with_pose(mut self, pose: RigidTransform) -> Self {
        self.pose = pose;
        self
    }

    /// Camera at `eye` looking at `target` with image-down along world `-up`.
    pub fn looking_at(mut self, eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        self.pose = RigidTransform::new(r, -(r * eye.coords));
        self
    }

    /// Camera on a horizontal circle of `distance` around `center`, at `angle` radians.
    pub fn orbit(self, center: Point3<f64>, distance: f64, angle: f64) -> Self {
        let eye = center + Vector3::new(distance * angle.sin(), 0.0, -distance * angle.cos());
        self.looking_at(eye, center, Vector3::new(0.0, -1.0, 0.0))
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.focal, 0.0, self.cx, 0.0, self.focal, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.pose.rotation.transpose() * self.pose.translation))
    }

    pub fn ray(&self, i: u32, j: u32) -> Vector3<f64> {
        let d = Vector3::new(
            (i as f64 + 0.5 - self.cx) / self.focal,
            (j as f64 + 0.5 - self.cy) / self.focal,
            1.0,
        );
        self.pose.rotation.transpose() * d
    }
}

/// Rotation of `degrees` about `axis`.
pub fn rotation_about(axis: Vector3<f64>, degrees: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), degrees.to_radians()).into_inner()
}

/// Ray-casts every pixel; returns the image and the world hit points.
pub fn render(scene: &SceneSpec, camera: &Camera) -> (FrameImage, Vec<Option<Point3<f64>>>) {
    let origin = camera.center();
    let mut hits = Vec::with_capacity(camera.width as usize * camera.height as usize);
    let frame = FrameImage::from_fn(camera.width, camera.height, |i, j| {
        let hit = scene.intersect(&origin, &camera.ray(i, j));
        hits.push(hit);
        hit.map_or(BACKGROUND, |p| scene.color_at(&p))
    });
    (frame, hits)
}

pub fn frame_key(frame: &FrameImage) -> String {
    let mut h = Sha256::new();
    h.update(frame.width().to_le_bytes());
    h.update(frame.height().to_le_bytes());
    h.update(frame.pixels());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisteredView {
    pub scene: SceneSpec,
    pub camera: Camera,
}

impl RegisteredView {
    pub fn hits(&self) -> Vec<Option<Point3<f64>>> {
        render(&self.scene, &self.camera).1
    }
}

/// Shared map from rendered-frame hash to the scene and camera that produced it.
#[derive(Debug, Clone, Default)]
pub struct SceneRegistry {
    views: Arc<RwLock<BTreeMap<String, RegisteredView>>>,
}

impl SceneRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Renders `scene` from `camera` and remembers the result.
    pub fn register(&self, scene: SceneSpec, camera: Camera) -> FrameImage {
        let (frame, _) = render(&scene, &camera);
        self.views
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(frame_key(&frame), RegisteredView { scene, camera });
        frame
    }

    pub fn lookup(&self, frame: &FrameImage) -> Option<RegisteredView> {
        self.views.read().unwrap_or_else(|p| p.into_inner()).get(&frame_key(frame)).cloned()
    }

    pub fn len(&self) -> usize {
        self.views.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let views = self.views.read().unwrap_or_else(|p| p.into_inner());
        let bytes = serde_json::to_vec_pretty(&*views)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Adds every view stored in `path`.
    pub fn load(&self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let loaded: BTreeMap<String, RegisteredView> = serde_json::from_slice(&bytes)?;
        self.views.write().unwrap_or_else(|p| p.into_inner()).extend(loaded);
        Ok(())
    }
}

/// Exact geometry for registered views, expressed in the first view's frame.
pub fn analytic_geometry(views: &[RegisteredView]) -> GeometryResult {
    let first = views[0].camera.pose.clone();
    let first_inv = first.inverse();
    let views = views
        .iter()
        .map(|v| {
            let hits = v.hits();
            let pointmap = hits
                .iter()
                .map(|h| h.map_or(Point3::new(f64::NAN, f64::NAN, f64::NAN), |p| first.apply(&p)))
                .collect();
            let confidence = hits.iter().map(|h| if h.is_some() { 1.0 } else { 0.0 }).collect();
            ViewGeometry {
                width: v.camera.width as usize,
                height: v.camera.height as usize,
                pointmap,
                confidence,
                intrinsics: v.camera.intrinsics(),
                pose: v.camera.pose.compose(&first_inv),
            }
        })
        .collect();
    GeometryResult { views }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture() -> Texture {
        Texture {
            primary: [200, 30, 30],
            secondary: [20, 20, 200],
            cell: 0.25,
        }
    }

    #[test]
    fn frontal_plane_reconstructs_depth_exactly() {
        let scene = SceneSpec::Plane { z: 1.0, texture: texture() };
        let view = RegisteredView {
            scene,
            camera: Camera::new(16, 12, 10.0),
        };
        let g = analytic_geometry(&[view]);
        g.validate().unwrap();
        assert!(g.views[0].pointmap.iter().all(|p| p.z == 1.0));
        // pixel centre (0.5 - 8)/10 at depth 1
        assert_eq!(g.views[0].pointmap[0].x, -0.75);
    }

    #[test]
    fn pose_field_equals_camera_rotation() {
        let scene = SceneSpec::Plane { z: 3.0, texture: texture() };
        let r = rotation_about(Vector3::y(), 10.0);
        let a = RegisteredView {
            scene,
            camera: Camera::new(8, 8, 8.0),
        };
        let b = RegisteredView {
            scene,
            camera: Camera::new(8, 8, 8.0).with_pose(RigidTransform::new(r, Vector3::zeros())),
        };
        let g = analytic_geometry(&[a, b]);
        assert!((g.views[1].pose.rotation - r).norm() < 1e-12);
        assert!(g.views[0].pose.rotation_angle_to(&RigidTransform::identity()) < 1e-12);
    }

    #[test]
    fn sphere_points_lie_on_sphere() {
        let scene = SceneSpec::Sphere {
            center: [0.0, 0.0, 4.0],
            radius: 1.0,
            texture: texture(),
        };
        let cam = Camera::new(32, 32, 30.0);
        let (frame, hits) = render(&scene, &cam);
        let n = hits.iter().flatten().count();
        assert!(n > 100);
        for p in hits.iter().flatten() {
            assert!(((p - Point3::new(0.0, 0.0, 4.0)).norm() - 1.0).abs() < 1e-9);
        }
        assert_eq!(frame.pixel(0, 0), BACKGROUND);
    }

    #[test]
    fn orbit_cameras_look_at_center() {
        let c = Point3::new(0.0, 0.0, 0.0);
        let cam = Camera::new(9, 9, 9.0).orbit(c, 3.0, 0.4);
        let p = cam.pose.apply(&c);
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12);
        assert!((p.z - 3.0).abs() < 1e-12);
        assert!(cam.pose.is_valid(1e-9));
    }

    #[test]
    fn registry_roundtrips_through_json() {
        let reg = SceneRegistry::new();
        let frame = reg.register(SceneSpec::Plane { z: 2.0, texture: texture() }, Camera::new(8, 6, 6.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenes.json");
        reg.save(&path).unwrap();
        let other = SceneRegistry::new();
        other.load(&path).unwrap();
        assert_eq!(other.lookup(&frame), reg.lookup(&frame));
        assert!(other.lookup(&FrameImage::solid(8, 6, [1, 2, 3])).is_none());
    }
}
