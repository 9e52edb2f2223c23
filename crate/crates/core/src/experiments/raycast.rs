//! Opaque solids rendered by exact ray casting, for synthetic targets.

use nalgebra::Matrix3;

use crate::imaging::{Camera, Image};
use crate::scene::{Ray, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub enum Solid {
    Sphere {
        center: Vec3,
        radius: f64,
        color: Vec3,
    },
    /// Cube with edge `2 * half`, rotated by `rotation` (world from body).
    Cube {
        center: Vec3,
        rotation: Matrix3<f64>,
        half: f64,
        color: Vec3,
    },
}

impl Solid {
    pub fn color(&self) -> Vec3 {
        match self {
            Solid::Sphere { color, .. } | Solid::Cube { color, .. } => *color,
        }
    }

    /// Nearest positive hit distance along `ray`.
    pub fn hit(&self, ray: &Ray) -> Option<f64> {
        match self {
            Solid::Sphere { center, radius, .. } => {
                let oc = ray.origin - center;
                let b = oc.dot(&ray.direction);
                let disc = b * b - (oc.norm_squared() - radius * radius);
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                [-b - root, -b + root].into_iter().find(|t| *t > 0.0)
            }
            Solid::Cube {
                center,
                rotation,
                half,
                ..
            } => {
                let o = rotation.transpose() * (ray.origin - center);
                let d = rotation.transpose() * ray.direction;
                let mut near = f64::NEG_INFINITY;
                let mut far = f64::INFINITY;
                for i in 0..3 {
                    if d[i].abs() < 1e-300 {
                        if o[i].abs() > *half {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half - o[i]) / d[i];
                    let b = (half - o[i]) / d[i];
                    near = near.max(a.min(b));
                    far = far.min(a.max(b));
                }
                if near > far || far <= 0.0 {
                    return None;
                }
                Some(if near > 0.0 { near } else { far })
            }
        }
    }
}

/// Color of the nearest solid hit by `ray`, or black.
pub fn cast(solids: &[Solid], ray: &Ray) -> Vec3 {
    solids
        .iter()
        .filter_map(|s| s.hit(ray).map(|t| (t, s.color())))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map_or(Vec3::zeros(), |(_, c)| c)
}

/// Renders `solids` with `supersample x supersample` rays per pixel, averaged.
pub fn render_solids(solids: &[Solid], camera: &Camera, supersample: usize) -> Image {
    let n = supersample.max(1);
    let mut img = Image::new(camera.width, camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let mut acc = Vec3::zeros();
            for j in 0..n {
                for i in 0..n {
                    let u = x as f64 + (i as f64 + 0.5) / n as f64;
                    let v = y as f64 + (j as f64 + 0.5) / n as f64;
                    acc += cast(solids, &camera.generate_ray(u, v));
                }
            }
            img.set(x, y, acc / (n * n) as f64);
        }
    }
    img
}

/// Binary coverage (pixel-center ray hits anything) as 0/1 weights.
pub fn silhouette(solids: &[Solid], camera: &Camera) -> Vec<bool> {
    let mut out = Vec::with_capacity(camera.pixel_count());
    for y in 0..camera.height {
        for x in 0..camera.width {
            let ray = camera.pixel_ray(x, y);
            out.push(solids.iter().any(|s| s.hit(&ray).is_some()));
        }
    }
    out
}
