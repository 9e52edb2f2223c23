//! Pinhole cameras, images and forward rendering.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{Ray, Scene, Vec3};
use crate::visibility::{RayKernel, SampleScheme};

/// Pinhole camera. Camera axes: `x` right, `y` down, `z` forward.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    /// World-from-camera rotation.
    pub orientation: Matrix3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        position: Vec3,
        orientation: Matrix3<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self {
            position,
            orientation,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with `up` pointing to the top of
    /// the image and the principal point at the image center.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let down = -(up - forward * up.dot(&forward));
        if down.norm() < 1e-12 {
            return Err(Error::Domain("up vector parallel to view direction".into()));
        }
        let down = down.normalize();
        let right = down.cross(&forward);
        let orientation = Matrix3::from_columns(&[right, down, forward]);
        Self::new(
            eye,
            orientation,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::field("camera.size", "width and height must be at least 1"));
        }
        let r = &self.orientation;
        let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(orth <= 1e-9) || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::field(
                "camera.orientation",
                "must be a rotation (orthonormal, determinant +1)",
            ));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::field("camera.focal", "focal lengths must be positive"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Ray through image coordinates `(u, v)` (continuous; pixel `(i, j)`
    /// spans `[i, i+1) x [j, j+1)`).
    pub fn generate_ray(&self, u: f64, v: f64) -> Ray {
        let local = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        Ray {
            origin: self.position,
            direction: (self.orientation * local).normalize(),
        }
    }

    /// Ray through the center of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: usize, y: usize) -> Ray {
        self.generate_ray(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Image coordinates of world point `p`, if it lies in front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let local = self.orientation.transpose() * (p - self.position);
        (local.z > 0.0).then(|| {
            (
                self.fx * local.x / local.z + self.cx,
                self.fy * local.y / local.z + self.cy,
            )
        })
    }

    /// Same camera with the pixel grid scaled by `factor` (same frustum).
    pub fn scaled(&self, factor: usize) -> Self {
        let k = factor as f64;
        Self {
            fx: self.fx * k,
            fy: self.fy * k,
            cx: self.cx * k,
            cy: self.cy * k,
            width: self.width * factor,
            height: self.height * factor,
            ..self.clone()
        }
    }
}

/// Linear RGB image, row-major, with optional per-pixel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Vec3>,
    pub weights: Option<Vec<f64>>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, Vec3::zeros())
    }

    pub fn filled(width: usize, height: usize, color: Vec3) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
            weights: None,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Vec3>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.pixels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} pixels",
                weights.len(),
                self.pixels.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::field("weights", "must be finite and nonnegative"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn get(&self, x: usize, y: usize) -> Vec3 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: Vec3) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[index])
    }

    pub fn matches(&self, camera: &Camera) -> Result<()> {
        if self.width != camera.width || self.height != camera.height {
            return Err(Error::DimensionMismatch(format!(
                "image is {}x{}, camera is {}x{}",
                self.width, self.height, camera.width, camera.height
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max)
    }
}

/// Radiance of a single ray.
pub fn render_ray(scene: &Scene, ray: &Ray, scheme: &SampleScheme) -> Vec3 {
    let mut kernel = RayKernel::new();
    kernel.load(scene, ray);
    kernel.forward(scheme, &scheme.sample_weights(), false);
    kernel.radiance(scene)
}

/// Renders every pixel of `camera`. Values are not clamped.
pub fn render(scene: &Scene, camera: &Camera, scheme: &SampleScheme) -> Image {
    let weights = scheme.sample_weights();
    let mut pixels = vec![Vec3::zeros(); camera.pixel_count()];
    if !scene.is_empty() {
        pixels
            .par_chunks_mut(camera.width)
            .enumerate()
            .for_each_init(RayKernel::new, |kernel, (y, row)| {
                for (x, px) in row.iter_mut().enumerate() {
                    kernel.load(scene, &camera.pixel_ray(x, y));
                    if kernel.is_empty() {
                        continue;
                    }
                    kernel.forward(scheme, &weights, false);
                    *px = kernel.radiance(scene);
                }
            });
    }
    Image {
        width: camera.width,
        height: camera.height,
        pixels,
        weights: None,
    }
}
