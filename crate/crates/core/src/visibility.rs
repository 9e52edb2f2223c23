//! Transmittance, point visibility, per-Gaussian visibility and radiance.
//!
//! The scalar functions here evaluate the closed forms directly and serve as
//! the reference path. [`RayKernel`] evaluates the same quantities for every
//! Gaussian on a ray at once and keeps the intermediate error-function values
//! around for the gradient pass.

use crate::error::{Error, Result};
use crate::scene::{Ray, RayGaussian, Scene, Vec3};
use crate::special::{erf, erf_saturating, SQRT_HALF_PI};

/// Where each Gaussian's visibility integral is sampled along the ray:
/// `s = mubar_q + k * step * sigmabar_q` for `k` in `offsets`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleScheme {
    pub offsets: Vec<i32>,
    pub step: f64,
}

impl Default for SampleScheme {
    fn default() -> Self {
        Self {
            offsets: vec![-4, -3, -2, -1, 0],
            step: 1.0,
        }
    }
}

impl SampleScheme {
    pub fn new(offsets: Vec<i32>, step: f64) -> Result<Self> {
        let scheme = Self { offsets, step };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if self.offsets.is_empty() {
            return Err(Error::field("samples", "offset set must not be empty"));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::field("step", "must be positive"));
        }
        Ok(())
    }

    /// `exp(-(k step)^2 / 2)`, the Gaussian's own density at each sample
    /// relative to its peak.
    pub fn sample_weights(&self) -> Vec<f64> {
        self.offsets
            .iter()
            .map(|&k| {
                let t = k as f64 * self.step;
                (-0.5 * t * t).exp()
            })
            .collect()
    }

    /// Parses `-4,-3,-2,-1,0` or the range form `-4..0` (inclusive).
    pub fn parse_offsets(spec: &str) -> Result<Vec<i32>> {
        let spec = spec.trim();
        let bad = || Error::field("samples", format!("cannot parse offsets `{spec}`"));
        if let Some((lo, hi)) = spec.split_once("..") {
            let lo: i32 = lo.trim().parse().map_err(|_| bad())?;
            let hi: i32 = hi.trim().parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            return Ok((lo..=hi).collect());
        }
        spec.split(',')
            .map(|t| t.trim().parse::<i32>().map_err(|_| bad()))
            .collect()
    }
}

#[inline]
fn erf_argument(s: f64, g: &RayGaussian) -> f64 {
    (s - g.mubar) / (std::f64::consts::SQRT_2 * g.sigmabar)
}

/// Optical depth `∫_0^s cbar exp(-(t-mubar)^2/(2 sigmabar^2)) dt` of one
/// projected Gaussian.
#[inline]
pub fn optical_depth(g: &RayGaussian, s: f64) -> f64 {
    g.cbar * g.sigmabar * SQRT_HALF_PI * (erf(erf_argument(s, g)) - erf(erf_argument(0.0, g)))
}

/// Fraction of light surviving from the ray origin to distance `s`.
pub fn transmittance(projected: &[RayGaussian], s: f64) -> f64 {
    // One exponential of the summed depth rather than a product of
    // per-Gaussian factors.
    let depth: f64 = projected.iter().map(|g| optical_depth(g, s)).sum();
    (-depth).exp()
}

/// Fractional visibility of point `x` seen from `o`.
pub fn point_visibility(scene: &Scene, x: &Vec3, o: &Vec3) -> Result<f64> {
    let offset = x - o;
    let dist = offset.norm();
    if dist == 0.0 || !dist.is_finite() {
        return Err(Error::Domain(
            "point visibility needs distinct point and eye".into(),
        ));
    }
    let ray = Ray {
        origin: *o,
        direction: offset / dist,
    };
    Ok(transmittance(&scene.project(&ray), dist))
}

/// Sampled visibility of projected Gaussian `q`: its share of the light
/// reaching the ray origin.
pub fn gaussian_visibility(projected: &[RayGaussian], q: usize, scheme: &SampleScheme) -> f64 {
    let g = &projected[q];
    let lambda = scheme.step * g.sigmabar;
    scheme
        .offsets
        .iter()
        .map(|&k| {
            let s = g.mubar + k as f64 * lambda;
            lambda * transmittance(projected, s) * g.density(s)
        })
        .sum()
}

/// Visibility of the scene's Gaussian `index` along `ray`; 0 if the cutoff
/// drops it.
pub fn source_visibility(scene: &Scene, ray: &Ray, index: usize, scheme: &SampleScheme) -> f64 {
    let p = scene.project(ray);
    p.iter()
        .position(|g| g.source_index == index)
        .map_or(0.0, |q| gaussian_visibility(&p, q, scheme))
}

/// Radiance along the ray: `Σ_q a_q V_q`. `albedos` is aligned with
/// `projected`.
pub fn radiance(projected: &[RayGaussian], albedos: &[Vec3], scheme: &SampleScheme) -> Vec3 {
    assert_eq!(projected.len(), albedos.len(), "one albedo per projected Gaussian");
    (0..projected.len())
        .map(|q| albedos[q] * gaussian_visibility(projected, q, scheme))
        .fold(Vec3::zeros(), |acc, v| acc + v)
}

/// Keeps the projected Gaussians with `cbar >= cutoff`, in order.
pub fn apply_cutoff(projected: &[RayGaussian], cutoff: f64) -> Vec<RayGaussian> {
    projected.iter().filter(|g| g.cbar >= cutoff).copied().collect()
}

/// Batched evaluation of all Gaussian visibilities on one ray.
///
/// Holds its buffers across rays so per-pixel loops do not allocate.
#[derive(Debug, Default, Clone)]
pub struct RayKernel {
    pub ray: Option<Ray>,
    pub projected: Vec<RayGaussian>,
    /// `erf(-mubar_p / (sqrt 2 sigmabar_p))`, the depth integral's lower end.
    pub(crate) base: Vec<f64>,
    /// `cbar_p sigmabar_p sqrt(pi/2)`.
    pub(crate) amp: Vec<f64>,
    /// `1 / (sqrt 2 sigmabar_p)`.
    pub(crate) inv_width: Vec<f64>,
    /// Visibility per projected Gaussian.
    pub visibility: Vec<f64>,
    /// Transmittance at each sample, indexed `q * K + k`.
    pub(crate) sample_t: Vec<f64>,
    /// erf of each Gaussian's argument at each sample, `(q * K + k) * N + p`.
    pub(crate) erfs: Vec<f64>,
    pub(crate) cached: bool,
}

impl RayKernel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Projects `scene` on `ray` (honouring the scene cutoff).
    pub fn load(&mut self, scene: &Scene, ray: &Ray) {
        self.ray = Some(*ray);
        scene.project_into(ray, &mut self.projected);
    }

    /// Loads an explicit projected set (no cutoff applied).
    pub fn load_projected(&mut self, projected: &[RayGaussian]) {
        self.ray = None;
        self.projected.clear();
        self.projected.extend_from_slice(projected);
    }

    pub fn len(&self) -> usize {
        self.projected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projected.is_empty()
    }

    /// Computes every Gaussian visibility. With `cache`, keeps the per-sample
    /// error function values needed by the gradient pass.
    pub fn forward(&mut self, scheme: &SampleScheme, weights: &[f64], cache: bool) {
        let n = self.projected.len();
        let nk = scheme.offsets.len();
        self.base.clear();
        self.amp.clear();
        self.inv_width.clear();
        for g in &self.projected {
            let inv = 1.0 / (std::f64::consts::SQRT_2 * g.sigmabar);
            self.inv_width.push(inv);
            self.base.push(erf_saturating(-g.mubar * inv));
            self.amp.push(g.cbar * g.sigmabar * SQRT_HALF_PI);
        }
        self.visibility.clear();
        self.visibility.resize(n, 0.0);
        self.sample_t.clear();
        self.sample_t.resize(n * nk, 0.0);
        self.cached = cache;
        if cache {
            self.erfs.clear();
            self.erfs.resize(n * nk * n, 0.0);
        }
        for q in 0..n {
            let gq = self.projected[q];
            let lambda = scheme.step * gq.sigmabar;
            let mut vis = 0.0;
            for (ki, &k) in scheme.offsets.iter().enumerate() {
                let s = gq.mubar + k as f64 * lambda;
                let row = (q * nk + ki) * n;
                let mut depth = 0.0;
                for p in 0..n {
                    let e = erf_saturating((s - self.projected[p].mubar) * self.inv_width[p]);
                    if cache {
                        self.erfs[row + p] = e;
                    }
                    depth += self.amp[p] * (e - self.base[p]);
                }
                let t = (-depth).exp();
                self.sample_t[q * nk + ki] = t;
                vis += lambda * t * gq.cbar * weights[ki];
            }
            self.visibility[q] = vis;
        }
    }

    /// `Σ_q a_q V_q` using the source scene's albedos.
    pub fn radiance(&self, scene: &Scene) -> Vec3 {
        let mut l = Vec3::zeros();
        for (g, v) in self.projected.iter().zip(&self.visibility) {
            l += scene.gaussians[g.source_index].albedo * *v;
        }
        l
    }
}
