//! Free-Gaussian shape estimation from silhouettes, then albedo from color
//! views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raycast::{render_solids, silhouette, Solid};
use crate::calibration::{calibrate_cached, SphereSpec};
use crate::energy::{back_project_albedo, scene_energy, EnergyConfig, View};
use crate::error::{Error, Result};
use crate::imaging::{render, Camera};
use crate::mapping::{apply_mapping, Mapping};
use crate::objective::Objective;
use crate::optimizer::{minimize, OptimConfig, OptimTrace};
use crate::scene::{Gaussian, Scene, Vec3};
use crate::visibility::SampleScheme;

/// Synthetic target: opaque spheres seen by a ring of cameras plus one
/// held-out camera between them.
#[derive(Debug, Clone)]
pub struct ShapeFixture {
    pub spheres: Vec<SphereSpec>,
    pub cameras: Vec<Camera>,
    pub held_out: Camera,
    /// Half-widths of the box seed Gaussians are drawn from.
    pub seed_box: Vec3,
}

fn ring_camera(azimuth: f64, elevation: f64, size: usize, focal: f64) -> Result<Camera> {
    let d = 4.0;
    let eye = Vec3::new(
        d * elevation.cos() * azimuth.sin(),
        d * elevation.sin(),
        -d * elevation.cos() * azimuth.cos(),
    );
    Camera::look_at(eye, Vec3::zeros(), Vec3::y(), focal, size, size)
}

impl ShapeFixture {
    /// A red sphere below a green one, `views` cameras on a ring around them.
    pub fn two_color(views: usize, size: usize) -> Result<Self> {
        let focal = 1.9 * size as f64;
        let step = std::f64::consts::TAU / views.max(1) as f64;
        let cameras = (0..views)
            .map(|i| ring_camera(i as f64 * step, if i % 2 == 0 { 0.35 } else { -0.25 }, size, focal))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spheres: vec![
                SphereSpec::new(Vec3::new(0.0, -0.5, 0.0), 0.4, Vec3::new(0.9, 0.15, 0.1)),
                SphereSpec::new(Vec3::new(0.1, 0.6, 0.05), 0.35, Vec3::new(0.1, 0.8, 0.2)),
            ],
            cameras,
            held_out: ring_camera(0.5 * step, 0.1, size, focal)?,
            seed_box: Vec3::new(0.5, 0.9, 0.5),
        })
    }

    fn solids(&self, white: bool) -> Vec<Solid> {
        self.spheres
            .iter()
            .map(|s| Solid::Sphere {
                center: s.center,
                radius: s.radius,
                color: if white { Vec3::repeat(1.0) } else { s.albedo },
            })
            .collect()
    }

    /// White-on-black coverage images, one per camera.
    pub fn silhouette_views(&self) -> Result<Vec<View>> {
        let solids = self.solids(true);
        self.cameras
            .iter()
            .map(|c| View::new(c.clone(), render_solids(&solids, c, 1)))
            .collect()
    }

    /// Color images weighted by their silhouettes, so background pixels do
    /// not enter the albedo average.
    pub fn color_views(&self) -> Result<Vec<View>> {
        let solids = self.solids(false);
        self.cameras
            .iter()
            .map(|c| {
                let weights = self.mask(c).into_iter().map(|m| f64::from(u8::from(m))).collect();
                View::new(c.clone(), render_solids(&solids, c, 1).with_weights(weights)?)
            })
            .collect()
    }

    pub fn mask(&self, camera: &Camera) -> Vec<bool> {
        silhouette(&self.solids(true), camera)
    }

    /// Color of the sphere whose surface is nearest to `p`.
    pub fn color_at(&self, p: &Vec3) -> Vec3 {
        self.spheres
            .iter()
            .min_by(|a, b| ((p - a.center).norm() - a.radius).total_cmp(&((p - b.center).norm() - b.radius)))
            .map_or(Vec3::zeros(), |s| s.albedo)
    }
}

/// `count` white Gaussians calibrated as spheres of `radius`, centered
/// uniformly in the box `[-half, half]`.
pub fn seed_scene(count: usize, half: Vec3, radius: f64, smoothness: f64, seed: u64) -> Result<Scene> {
    let cal = calibrate_cached(radius, smoothness, &SampleScheme::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..count)
        .map(|_| {
            let c = Vec3::new(
                rng.gen_range(-half.x..half.x),
                rng.gen_range(-half.y..half.y),
                rng.gen_range(-half.z..half.z),
            );
            Gaussian::new(cal.magnitude, c, cal.sigma, Vec3::repeat(1.0))
        })
        .collect();
    let mut scene = Scene::new(gaussians);
    scene.smoothness = smoothness;
    Ok(scene)
}

pub fn shape_optim_config() -> OptimConfig {
    OptimConfig {
        max_iterations: 400,
        rel_tol: 1e-7,
        max_displacement: 0.05,
        ..Default::default()
    }
}

#[derive(Debug, Clone)]
pub struct ShapeResult {
    /// Optimized geometry with back-projected albedos.
    pub scene: Scene,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub unseen: Vec<usize>,
    pub trace: OptimTrace,
}

impl ShapeResult {
    pub fn reduction(&self) -> f64 {
        1.0 - self.final_energy / self.initial_energy
    }
}

/// Fits the seed Gaussians' centers and sizes to `silhouettes` under a free
/// mapping that keeps each `c sigma` fixed, then assigns albedos from
/// `colors` (if given).
pub fn estimate_shape(seed: &Scene, silhouettes: &[View], colors: &[View], config: &OptimConfig) -> Result<ShapeResult> {
    if seed.is_empty() {
        return Err(Error::InvalidParameter("no seed Gaussians".into()));
    }
    let mut template = seed.clone();
    for g in &mut template.gaussians {
        g.albedo = Vec3::repeat(1.0);
    }
    let mapping = Mapping::Free { coupled: true };
    let energy = EnergyConfig::pc();
    let mut objective = Objective::new(&template, &mapping, silhouettes, &energy);
    let theta0 = mapping.identity(&template);
    let initial_energy = objective.value(&theta0)?;
    let res = minimize(&mut objective, &theta0, config)?;
    let mut scene = apply_mapping(&mapping, &res.theta, &template)?;
    let mut unseen = Vec::new();
    if !colors.is_empty() {
        let bp = back_project_albedo(&scene, colors, &energy.samples)?;
        for (g, a) in scene.gaussians.iter_mut().zip(bp.albedos) {
            g.albedo = a;
        }
        unseen = bp.unseen;
    }
    Ok(ShapeResult {
        scene,
        initial_energy,
        final_energy: res.energy,
        unseen,
        trace: res.trace,
    })
}

/// Pixels where the white-albedo version of `scene` renders brighter than
/// one half.
pub fn model_mask(scene: &Scene, camera: &Camera) -> Vec<bool> {
    let mut white = scene.clone();
    for g in &mut white.gaussians {
        g.albedo = Vec3::repeat(1.0);
    }
    render(&white, camera, &SampleScheme::default())
        .pixels
        .iter()
        .map(|p| p.x > 0.5)
        .collect()
}

/// Intersection over union of two masks; 1 when both are empty.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Largest per-channel deviation of each seen Gaussian's albedo from the
/// color of its nearest target sphere.
pub fn albedo_errors(result: &ShapeResult, fixture: &ShapeFixture) -> Vec<f64> {
    result
        .scene
        .gaussians
        .iter()
        .enumerate()
        .filter(|(q, _)| !result.unseen.contains(q))
        .map(|(_, g)| (g.albedo - fixture.color_at(&g.center)).abs().max())
        .collect()
}

/// Data energy of `scene` against `views` under photo-consistency.
pub fn silhouette_energy(scene: &Scene, views: &[View]) -> Result<f64> {
    Ok(scene_energy(scene, views, &EnergyConfig::pc(), false)?.0)
}
