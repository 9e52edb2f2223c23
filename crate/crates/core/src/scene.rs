//! Gaussian density scenes and their restriction to rays.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Default magnitude below which a projected Gaussian is ignored on a ray.
pub const DEFAULT_CUTOFF: f64 = 1e-5;

/// Smallest standard deviation accepted anywhere in the model.
pub const MIN_SIGMA: f64 = 1e-9;

/// An isotropic, scaled 3D Gaussian density blob with an albedo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub magnitude: f64,
    pub center: Vec3,
    pub sigma: f64,
    pub albedo: Vec3,
}

impl Gaussian {
    pub fn new(magnitude: f64, center: Vec3, sigma: f64, albedo: Vec3) -> Self {
        Self {
            magnitude,
            center,
            sigma,
            albedo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= MIN_SIGMA) || !self.sigma.is_finite() {
            return Err(Error::field(
                "sigma",
                format!("must be at least {MIN_SIGMA}, got {}", self.sigma),
            ));
        }
        if !(self.magnitude >= 0.0) || !self.magnitude.is_finite() {
            return Err(Error::field(
                "magnitude",
                format!("must be nonnegative, got {}", self.magnitude),
            ));
        }
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err(Error::field("center", "must be finite"));
        }
        if !self.albedo.iter().all(|a| (0.0..=1.0).contains(a)) {
            return Err(Error::field(
                "albedo",
                format!("channels must lie in [0, 1], got {:?}", self.albedo.as_slice()),
            ));
        }
        Ok(())
    }

    /// Density of this blob at `x`.
    #[inline]
    pub fn density(&self, x: &Vec3) -> f64 {
        let d2 = (x - self.center).norm_squared();
        self.magnitude * (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// A sum of Gaussians plus the calibration level it was built at.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gaussians: Vec<Gaussian>,
    /// Smoothness level `m` the Gaussians were calibrated with.
    pub smoothness: f64,
    /// Projected magnitudes strictly below this are dropped per ray.
    pub cutoff: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            gaussians: Vec::new(),
            smoothness: 0.1,
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

impl Scene {
    pub fn new(gaussians: Vec<Gaussian>) -> Self {
        Self {
            gaussians,
            ..Default::default()
        }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff >= 0.0) {
            return Err(Error::field("cutoff", "must be nonnegative"));
        }
        for (i, g) in self.gaussians.iter().enumerate() {
            g.validate().map_err(|e| match e {
                Error::Field { field, message } => Error::Field {
                    field: format!("gaussian[{i}].{field}"),
                    message,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Total density `D(x)`.
    pub fn density_at(&self, x: &Vec3) -> f64 {
        self.gaussians.iter().map(|g| g.density(x)).sum()
    }

    /// Projects every Gaussian onto `ray`, dropping those whose projected
    /// magnitude falls below the scene cutoff. Projections that are exactly
    /// zero contribute nothing and are always dropped.
    pub fn project(&self, ray: &Ray) -> Vec<RayGaussian> {
        let mut out = Vec::with_capacity(self.gaussians.len());
        self.project_into(ray, &mut out);
        out
    }

    pub(crate) fn project_into(&self, ray: &Ray, out: &mut Vec<RayGaussian>) {
        out.clear();
        for (i, g) in self.gaussians.iter().enumerate() {
            let rg = project_to_ray(g, ray, i);
            if rg.cbar > 0.0 && rg.cbar >= self.cutoff {
                out.push(rg);
            }
        }
    }
}

/// A half-line `o + s n`, `s >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, s: f64) -> Vec3 {
        self.origin + self.direction * s
    }
}

/// A Gaussian restricted to a ray: `cbar * exp(-(s - mubar)^2 / (2 sigmabar^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayGaussian {
    pub cbar: f64,
    pub mubar: f64,
    pub sigmabar: f64,
    pub source_index: usize,
}

impl RayGaussian {
    #[inline]
    pub fn density(&self, s: f64) -> f64 {
        let t = s - self.mubar;
        self.cbar * (-t * t / (2.0 * self.sigmabar * self.sigmabar)).exp()
    }
}

/// Squared distance from the Gaussian center to the ray's line.
#[inline]
pub(crate) fn perpendicular(g: &Gaussian, ray: &Ray) -> (f64, Vec3) {
    let d = g.center - ray.origin;
    let mubar = d.dot(&ray.direction);
    // (mu - o) - mubar n; its squared norm equals |mu - o|^2 - mubar^2 but
    // never goes negative through cancellation.
    (mubar, d - ray.direction * mubar)
}

/// Restricts `g` to the line of `ray`.
pub fn project_to_ray(g: &Gaussian, ray: &Ray, source_index: usize) -> RayGaussian {
    let (mubar, perp) = perpendicular(g, ray);
    let cbar = g.magnitude * (-perp.norm_squared() / (2.0 * g.sigma * g.sigma)).exp();
    RayGaussian {
        cbar,
        mubar,
        sigmabar: g.sigma,
        source_index,
    }
}
