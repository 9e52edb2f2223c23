//! Image data terms, color dissimilarity, priors and albedo back-projection.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradients::{chain_ray_to_world, GradVector, MagnitudeCoupling, RayPartials};
use crate::imaging::{Camera, Image};
use crate::scene::{perpendicular, Ray, Scene, Vec3};
use crate::visibility::{RayKernel, SampleScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataTerm {
    /// Photo-consistency: squared radiance residual per pixel.
    #[default]
    Pc,
    /// Visibility-weighted color dissimilarity.
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorSpace {
    LinearRgb,
    #[default]
    HsvScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PixelWeighting {
    #[default]
    Uniform,
    /// Use the target image's per-pixel weights.
    PerPixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConfig {
    pub term: DataTerm,
    pub color_space: ColorSpace,
    pub value_scale: f64,
    pub weighting: PixelWeighting,
    /// Skip pixels whose ray passes farther than 4 sigma from every
    /// Gaussian. `None` means on for `Mc`, off for `Pc`.
    pub exclude_far: Option<bool>,
    pub accel_weight: f64,
    pub limit_weight: f64,
    pub limits: Option<Vec<(f64, f64)>>,
    pub samples: SampleScheme,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            term: DataTerm::Pc,
            color_space: ColorSpace::HsvScaled,
            value_scale: 0.2,
            weighting: PixelWeighting::Uniform,
            exclude_far: None,
            accel_weight: 0.0,
            limit_weight: 0.0,
            limits: None,
            samples: SampleScheme::default(),
        }
    }
}

impl EnergyConfig {
    pub fn pc() -> Self {
        Self::default()
    }

    pub fn mc() -> Self {
        Self {
            term: DataTerm::Mc,
            ..Self::default()
        }
    }

    pub fn excludes_far(&self) -> bool {
        self.exclude_far.unwrap_or(self.term == DataTerm::Mc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.accel_weight >= 0.0) || !(self.limit_weight >= 0.0) {
            return Err(Error::field("energy.weights", "prior weights must be nonnegative"));
        }
        if !(self.value_scale >= 0.0) {
            return Err(Error::field("energy.value_scale", "must be nonnegative"));
        }
        if let Some(l) = &self.limits {
            if let Some(i) = l.iter().position(|(lo, hi)| !(lo <= hi)) {
                return Err(Error::field(format!("energy.limits[{i}]"), "lo must not exceed hi"));
            }
        }
        self.samples.validate()
    }
}

/// A camera and the image it observed.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub image: Image,
}

impl View {
    pub fn new(camera: Camera, image: Image) -> Result<Self> {
        image.matches(&camera)?;
        Ok(Self { camera, image })
    }
}

/// Hexcone HSV with all channels in `[0, 1]`; hue of grays is 0.
pub fn rgb_to_hsv(c: &Vec3) -> Vec3 {
    let max = c.max();
    let min = c.min();
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == c.x {
        ((c.y - c.z) / delta).rem_euclid(6.0) / 6.0
    } else if max == c.y {
        ((c.z - c.x) / delta + 2.0) / 6.0
    } else {
        ((c.x - c.y) / delta + 4.0) / 6.0
    };
    Vec3::new(if h >= 1.0 { h - 1.0 } else { h }, s, v)
}

fn hsv_distance(a: &Vec3, b: &Vec3, value_scale: f64) -> f64 {
    let dh = (a.x - b.x).abs();
    let dh = dh.min(1.0 - dh);
    let ds = a.y - b.y;
    let dv = value_scale * (a.z - b.z);
    dh * dh + ds * ds + dv * dv
}

/// Squared distance in the configured color space.
pub fn color_dissimilarity(pixel: &Vec3, albedo: &Vec3, config: &EnergyConfig) -> f64 {
    match config.color_space {
        ColorSpace::LinearRgb => (pixel - albedo).norm_squared(),
        ColorSpace::HsvScaled => {
            hsv_distance(&rgb_to_hsv(pixel), &rgb_to_hsv(albedo), config.value_scale)
        }
    }
}

/// `∂d/∂albedo`. Closed form in RGB; central differences in HSV, where the
/// conversion is only piecewise smooth.
fn dissimilarity_albedo_grad(pixel: &Vec3, albedo: &Vec3, config: &EnergyConfig) -> Vec3 {
    match config.color_space {
        ColorSpace::LinearRgb => 2.0 * (albedo - pixel),
        ColorSpace::HsvScaled => {
            let h = 1e-7;
            let mut g = Vec3::zeros();
            for i in 0..3 {
                let mut p = *albedo;
                p[i] += h;
                let fp = color_dissimilarity(pixel, &p, config);
                p[i] -= 2.0 * h;
                let fm = color_dissimilarity(pixel, &p, config);
                g[i] = (fp - fm) / (2.0 * h);
            }
            g
        }
    }
}

/// Quadratic acceleration and limit penalties. `history` is ordered oldest
/// to newest and ends with the current `theta`; missing older frames repeat
/// the oldest one given.
pub fn prior(history: &[&[f64]], config: &EnergyConfig) -> f64 {
    prior_with_grad(history, config).0
}

/// Prior value and its gradient with respect to the newest entry.
pub fn prior_with_grad(history: &[&[f64]], config: &EnergyConfig) -> (f64, Vec<f64>) {
    let Some(cur) = history.last() else {
        return (0.0, Vec::new());
    };
    let n = history.len();
    let prev = history[n.saturating_sub(2)];
    let prev2 = history[n.saturating_sub(3)];
    let mut value = 0.0;
    let mut grad = vec![0.0; cur.len()];
    if config.accel_weight > 0.0 {
        for i in 0..cur.len() {
            let a = cur[i] - 2.0 * prev[i] + prev2[i];
            value += config.accel_weight * a * a;
            // With a single frame it also stands in for both older ones.
            let coef = if n >= 2 { 1.0 } else { 0.0 };
            grad[i] += 2.0 * config.accel_weight * a * coef;
        }
    }
    if config.limit_weight > 0.0 {
        if let Some(limits) = &config.limits {
            for (i, (lo, hi)) in limits.iter().enumerate().take(cur.len()) {
                let x = cur[i];
                let v = if x < *lo {
                    x - lo
                } else if x > *hi {
                    x - hi
                } else {
                    0.0
                };
                value += config.limit_weight * v * v;
                grad[i] += 2.0 * config.limit_weight * v;
            }
        }
    }
    (value, grad)
}

fn near_any(scene: &Scene, ray: &Ray) -> bool {
    scene.gaussians.iter().any(|g| {
        let (_, perp) = perpendicular(g, ray);
        perp.norm_squared() < 16.0 * g.sigma * g.sigma
    })
}

fn pixel_weights<'a>(target: &'a Image, config: &EnergyConfig) -> Result<Option<&'a [f64]>> {
    match config.weighting {
        PixelWeighting::Uniform => Ok(None),
        PixelWeighting::PerPixel => target
            .weights
            .as_deref()
            .map(Some)
            .ok_or_else(|| Error::InvalidParameter("per-pixel weighting needs image weights".into())),
    }
}

struct RowWork {
    kernel: RayKernel,
    partials: Vec<RayPartials>,
    coeff: Vec<f64>,
}

impl RowWork {
    fn new() -> Self {
        Self {
            kernel: RayKernel::new(),
            partials: Vec::new(),
            coeff: Vec::new(),
        }
    }
}

/// One view's data term, with the gradient with respect to every scene
/// parameter (albedo included) when `with_grad` is set.
pub fn data_term(
    scene: &Scene,
    view: &View,
    config: &EnergyConfig,
    with_grad: bool,
) -> Result<(f64, Option<GradVector>)> {
    let camera = &view.camera;
    let target = &view.image;
    target.matches(camera)?;
    let weights = pixel_weights(target, config)?;
    let shape = config.samples.sample_weights();
    let scheme = &config.samples;
    let exclude = config.excludes_far();
    let albedo_hsv: Vec<Vec3> = scene.gaussians.iter().map(|g| rgb_to_hsv(&g.albedo)).collect();
    let n = scene.len();

    let rows: Vec<Result<(f64, Option<GradVector>)>> = (0..camera.height)
        .into_par_iter()
        .map_init(RowWork::new, |work, y| {
            let mut energy = 0.0;
            let mut grad = with_grad.then(|| GradVector::zeros(n));
            for x in 0..camera.width {
                let idx = y * camera.width + x;
                let w = weights.map_or(1.0, |w| w[idx]);
                if w == 0.0 {
                    continue;
                }
                let pixel = target.pixels[idx];
                let ray = camera.pixel_ray(x, y);
                if exclude && !near_any(scene, &ray) {
                    continue;
                }
                let kernel = &mut work.kernel;
                kernel.load(scene, &ray);
                if kernel.is_empty() {
                    if config.term == DataTerm::Pc {
                        energy += w * pixel.norm_squared();
                    }
                    continue;
                }
                kernel.forward(scheme, &shape, with_grad);
                let coeff = &mut work.coeff;
                coeff.clear();
                let residual = match config.term {
                    DataTerm::Pc => {
                        let r = kernel.radiance(scene) - pixel;
                        energy += w * r.norm_squared();
                        for g in &kernel.projected {
                            coeff.push(2.0 * w * r.dot(&scene.gaussians[g.source_index].albedo));
                        }
                        Some(r)
                    }
                    DataTerm::Mc => {
                        let pixel_hsv = rgb_to_hsv(&pixel);
                        for (g, v) in kernel.projected.iter().zip(&kernel.visibility) {
                            let d = match config.color_space {
                                ColorSpace::LinearRgb => {
                                    (pixel - scene.gaussians[g.source_index].albedo).norm_squared()
                                }
                                ColorSpace::HsvScaled => hsv_distance(
                                    &pixel_hsv,
                                    &albedo_hsv[g.source_index],
                                    config.value_scale,
                                ),
                            };
                            energy += w * d * v;
                            coeff.push(w * d);
                        }
                        None
                    }
                };
                let Some(grad) = grad.as_mut() else { continue };
                kernel.backward(scheme, &shape, coeff, &mut work.partials);
                for (p, g) in kernel.projected.iter().enumerate() {
                    let src = g.source_index;
                    let gaussian = &scene.gaussians[src];
                    let mut block = chain_ray_to_world(
                        gaussian,
                        &ray,
                        g,
                        &work.partials[p],
                        MagnitudeCoupling::Independent,
                    )?;
                    let v = kernel.visibility[p];
                    block.albedo = match residual {
                        Some(r) => 2.0 * w * v * r,
                        None => w * v * dissimilarity_albedo_grad(&pixel, &gaussian.albedo, config),
                    };
                    grad.blocks[src] += block;
                }
            }
            Ok((energy, grad))
        })
        .collect();

    let mut total = 0.0;
    let mut grad = with_grad.then(|| GradVector::zeros(n));
    for row in rows {
        let (e, g) = row?;
        total += e;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            acc.add(&g);
        }
    }
    Ok((total, grad))
}

/// Photo-consistency `Σ ||L - I||²` over all pixels.
pub fn d_pc(scene: &Scene, camera: &Camera, target: &Image, scheme: &SampleScheme) -> Result<f64> {
    let config = EnergyConfig {
        term: DataTerm::Pc,
        exclude_far: Some(false),
        samples: scheme.clone(),
        ..Default::default()
    };
    let view = View {
        camera: camera.clone(),
        image: target.clone(),
    };
    Ok(data_term(scene, &view, &config, false)?.0)
}

/// Visibility-weighted color dissimilarity `Σ_pixels Σ_q d(I, a_q) V_q`.
pub fn d_mc(scene: &Scene, camera: &Camera, target: &Image, config: &EnergyConfig) -> Result<f64> {
    let config = EnergyConfig {
        term: DataTerm::Mc,
        ..config.clone()
    };
    let view = View {
        camera: camera.clone(),
        image: target.clone(),
    };
    Ok(data_term(scene, &view, &config, false)?.0)
}

/// Sum of the data term over several views.
pub fn scene_energy(
    scene: &Scene,
    views: &[View],
    config: &EnergyConfig,
    with_grad: bool,
) -> Result<(f64, Option<GradVector>)> {
    let mut total = 0.0;
    let mut grad = with_grad.then(|| GradVector::zeros(scene.len()));
    for v in views {
        let (e, g) = data_term(scene, v, config, with_grad)?;
        total += e;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            acc.add(&g);
        }
    }
    Ok((total, grad))
}

/// Result of [`back_project_albedo`].
#[derive(Debug, Clone, PartialEq)]
pub struct BackProjection {
    pub albedos: Vec<Vec3>,
    /// Gaussians whose total visibility was below `1e-9`; their albedo is
    /// copied from the input scene.
    pub unseen: Vec<usize>,
}

/// Visibility-weighted mean of the observed colors for each Gaussian. Images
/// with per-pixel weights scale each pixel's contribution (weight 0 drops it,
/// e.g. background outside a silhouette).
pub fn back_project_albedo(scene: &Scene, views: &[View], scheme: &SampleScheme) -> Result<BackProjection> {
    let n = scene.len();
    let shape = scheme.sample_weights();
    let mut num = vec![Vec3::zeros(); n];
    let mut den = vec![0.0; n];
    for view in views {
        view.image.matches(&view.camera)?;
        let cam = &view.camera;
        let rows: Vec<(Vec<Vec3>, Vec<f64>)> = (0..cam.height)
            .into_par_iter()
            .map_init(RayKernel::new, |kernel, y| {
                let mut num = vec![Vec3::zeros(); n];
                let mut den = vec![0.0; n];
                for x in 0..cam.width {
                    kernel.load(scene, &cam.pixel_ray(x, y));
                    if kernel.is_empty() {
                        continue;
                    }
                    let w = view.image.weight(y * cam.width + x);
                    if w == 0.0 {
                        continue;
                    }
                    kernel.forward(scheme, &shape, false);
                    let pixel = view.image.get(x, y);
                    for (g, v) in kernel.projected.iter().zip(&kernel.visibility) {
                        num[g.source_index] += pixel * (w * v);
                        den[g.source_index] += w * v;
                    }
                }
                (num, den)
            })
            .collect();
        for (rn, rd) in rows {
            for q in 0..n {
                num[q] += rn[q];
                den[q] += rd[q];
            }
        }
    }
    let mut unseen = Vec::new();
    let albedos = (0..n)
        .map(|q| {
            if den[q] < 1e-9 {
                unseen.push(q);
                scene.gaussians[q].albedo
            } else {
                num[q] / den[q]
            }
        })
        .collect();
    Ok(BackProjection { albedos, unseen })
}
