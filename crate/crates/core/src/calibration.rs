//! Sphere-to-Gaussian calibration.
//!
//! Viewed orthographically, a lone Gaussian's visibility on a ray through its
//! center depends on `c` and `sigma` only through `x = c sigma`:
//!
//! `f(x) = Σ_k w_k x exp(-x b_k)`, `w_k = step exp(-(k step)^2/2)`,
//! `b_k = sqrt(pi/2) (1 + erf(k step / sqrt 2))`.
//!
//! A ray at lateral distance `d = u sigma` sees `x e^{-u^2/2}` instead, so the
//! lateral profile is `g(u) = f(x e^{-u^2/2})`. The two calibration conditions
//! therefore decouple: `f(x) = 1 - m` fixes `x`, the steepest descent of `g`
//! fixes `u* = r / sigma`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::scene::{Gaussian, Scene, Vec3};
use crate::special::{erf, SQRT_HALF_PI};
use crate::visibility::SampleScheme;

/// A reference sphere to be replaced by one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSpec {
    pub center: Vec3,
    pub radius: f64,
    pub albedo: Vec3,
}

impl SphereSpec {
    pub fn new(center: Vec3, radius: f64, albedo: Vec3) -> Self {
        Self {
            center,
            radius,
            albedo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub magnitude: f64,
    pub sigma: f64,
    pub smoothness: f64,
    pub radius: f64,
    /// Center-visibility residual and normalized profile curvature at `r`.
    pub residuals: [f64; 2],
}

/// Center visibility of a calibrated blob as a function of `x = c sigma`.
#[derive(Debug, Clone)]
pub struct CenterProfile {
    w: Vec<f64>,
    b: Vec<f64>,
}

impl CenterProfile {
    pub fn new(scheme: &SampleScheme) -> Self {
        let w = scheme
            .sample_weights()
            .iter()
            .map(|e| scheme.step * e)
            .collect();
        let b = scheme
            .offsets
            .iter()
            .map(|&k| SQRT_HALF_PI * (1.0 + erf(k as f64 * scheme.step / std::f64::consts::SQRT_2)))
            .collect();
        Self { w, b }
    }

    /// `(f, f', f'')` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (mut f, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for (w, b) in self.w.iter().zip(&self.b) {
            let e = w * (-x * b).exp();
            f += e * x;
            d1 += e * (1.0 - x * b);
            d2 += e * (x * b * b - 2.0 * b);
        }
        (f, d1, d2)
    }

    /// `dg/du` of the lateral profile `g(u) = f(x0 e^{-u^2/2})`.
    pub fn lateral_slope(&self, x0: f64, u: f64) -> f64 {
        let h = x0 * (-0.5 * u * u).exp();
        -u * h * self.eval(h).1
    }

    /// `d^2 g / du^2`.
    pub fn lateral_curvature(&self, x0: f64, u: f64) -> f64 {
        let h = x0 * (-0.5 * u * u).exp();
        let (_, d1, d2) = self.eval(h);
        let u2 = u * u;
        d2 * u2 * h * h + d1 * (u2 - 1.0) * h
    }

    /// Smallest `x > 0` with `f(x) = target`.
    pub fn first_crossing(&self, target: f64) -> Option<f64> {
        let mut lo: f64 = 0.0;
        let mut flo = -target;
        while lo < 1e6 {
            let hi = lo + 1e-2 * lo.max(1.0);
            let fhi = self.eval(hi).0 - target;
            if fhi >= 0.0 {
                return Some(bisect(|x| self.eval(x).0 - target, lo, hi, flo));
            }
            lo = hi;
            flo = fhi;
        }
        None
    }

    /// Lateral offset (in units of sigma) of the profile's steepest descent.
    pub fn steepest_inflection(&self, x0: f64) -> Option<f64> {
        const U_MAX: f64 = 12.0;
        const STEPS: usize = 6000;
        let du = U_MAX / STEPS as f64;
        let (mut best_i, mut best) = (0, f64::INFINITY);
        for i in 1..STEPS {
            let s = self.lateral_slope(x0, i as f64 * du);
            if s < best {
                best = s;
                best_i = i;
            }
        }
        if best_i == 0 || !(best < 0.0) {
            return None;
        }
        let (lo, hi) = ((best_i - 1) as f64 * du, (best_i + 1) as f64 * du);
        let flo = self.lateral_curvature(x0, lo);
        let fhi = self.lateral_curvature(x0, hi);
        if flo.signum() == fhi.signum() {
            return None;
        }
        Some(bisect(|u| self.lateral_curvature(x0, u), lo, hi, flo))
    }
}

/// Bisection to machine precision on a sign-changing bracket.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves for the Gaussian whose center transparency is `m` and whose lateral
/// visibility profile has its steepest descent at distance `r`.
pub fn calibrate_sphere(r: f64, m: f64, scheme: &SampleScheme) -> Result<CalibrationResult> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::field("radius", format!("must be positive, got {r}")));
    }
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::field("m", format!("must lie in (0, 1), got {m}")));
    }
    scheme.validate()?;
    let profile = CenterProfile::new(scheme);
    let fail = |iterations| Error::Calibration {
        iterations,
        residuals: [f64::NAN, f64::NAN],
    };
    let x0 = profile.first_crossing(1.0 - m).ok_or_else(|| fail(0))?;
    let u = profile.steepest_inflection(x0).ok_or_else(|| fail(1))?;
    let sigma = r / u;
    let magnitude = x0 / sigma;

    let center = profile.eval(magnitude * sigma).0 - (1.0 - m);
    let h = x0 * (-0.5 * u * u).exp();
    let scale = (u * u * h * profile.eval(h).1).abs().max(f64::MIN_POSITIVE);
    let curvature = profile.lateral_curvature(magnitude * sigma, r / sigma) / scale;
    let residuals = [center, curvature];
    if !(center.abs() < 1e-6 && curvature.abs() < 1e-6) {
        return Err(Error::Calibration {
            iterations: 2,
            residuals,
        });
    }
    Ok(CalibrationResult {
        magnitude,
        sigma,
        smoothness: m,
        radius: r,
        residuals,
    })
}

type CacheKey = (u64, u64, Vec<i32>, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, CalibrationResult>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, CalibrationResult>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// [`calibrate_sphere`] with a process-wide memo.
pub fn calibrate_cached(r: f64, m: f64, scheme: &SampleScheme) -> Result<CalibrationResult> {
    let key = (r.to_bits(), m.to_bits(), scheme.offsets.clone(), scheme.step.to_bits());
    if let Some(hit) = cache().lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(*hit);
    }
    let result = calibrate_sphere(r, m, scheme)?;
    cache()
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(key, result);
    Ok(result)
}

/// One calibrated Gaussian per sphere.
pub fn build_from_spheres(spheres: &[SphereSpec], m: f64, scheme: &SampleScheme) -> Result<Scene> {
    let mut gaussians = Vec::with_capacity(spheres.len());
    for (i, s) in spheres.iter().enumerate() {
        if !(s.radius > 0.0) {
            return Err(Error::field(
                format!("sphere[{i}].radius"),
                format!("must be positive, got {}", s.radius),
            ));
        }
        let cal = calibrate_cached(s.radius, m, scheme)?;
        gaussians.push(Gaussian::new(cal.magnitude, s.center, cal.sigma, s.albedo));
    }
    let mut scene = Scene::new(gaussians);
    scene.smoothness = m;
    Ok(scene)
}
