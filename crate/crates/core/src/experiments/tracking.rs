//! Single-view rigid tracking of a red sphere and a blue cube.
//!
//! `theta` is absolute: sphere position (3), then cube position (3) and
//! axis-angle orientation (3). The generic helpers work on any rigid scene
//! file whose `[pose]` is the ground truth.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raycast::{render_solids, Solid};
use crate::calibration::SphereSpec;
use crate::energy::{EnergyConfig, View};
use crate::error::{Error, Result};
use crate::imaging::{render, Camera, Image};
use crate::io::{Geometry, SceneFile};
use crate::mapping::{apply_mapping, Mapping, RigidKind, RigidObject};
use crate::objective::Objective;
use crate::optimizer::{minimize, OptimConfig, OptimTrace};
use crate::scene::{Scene, Vec3};

pub const SPHERE_RADIUS: f64 = 0.5;
pub const CUBE_EDGE: f64 = 0.6;
pub const SPHERE_COLOR: Vec3 = Vec3::new(1.0, 0.0, 0.0);
pub const CUBE_COLOR: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// A run succeeds when every object's center error, relative to its size, is
/// below this. Orientation is reported but not required: a flat-colored cube
/// seen from one view has a depth-flipped twin pose with almost the same image.
pub const MAX_CENTER_ERROR: f64 = 0.1;

/// Half-widths of the uniform box of random starting positions.
pub const START_SPREAD: [f64; 3] = [0.5, 0.5, 1.0];

pub fn truth() -> Vec<f64> {
    vec![-0.4, 0.0, 5.0, 0.25, -0.05, 5.9, 0.2, 0.15, 0.6]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// The Gaussian model rendered at the true pose.
    Model,
    /// Opaque sphere and cube ray cast at the true pose.
    Solids,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigOptions {
    pub target: TargetKind,
    pub smoothness: f64,
    pub cutoff: f64,
    pub focal: f64,
    pub size: usize,
    /// Rays per pixel side for [`TargetKind::Solids`].
    pub supersample: usize,
}

impl Default for RigOptions {
    fn default() -> Self {
        Self {
            target: TargetKind::Model,
            smoothness: 0.1,
            cutoff: 1e-5,
            focal: 120.0,
            size: 128,
            supersample: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Sphere center error in sphere diameters.
    pub sphere: f64,
    /// Cube center error in cube edges.
    pub cube: f64,
    /// Smallest rotation angle between estimate and truth over cube symmetries.
    pub cube_angle: f64,
}

#[derive(Debug, Clone)]
pub struct TrackRun {
    pub init: Vec<f64>,
    /// Per-object center errors relative to object size.
    pub errors: Vec<f64>,
    pub success: bool,
    pub theta: Vec<f64>,
    pub energy: f64,
    /// Set for the sphere+cube rig.
    pub cube_angle: Option<f64>,
    pub trace: OptimTrace,
}

/// The 24 proper rotations mapping an axis-aligned cube onto itself.
pub fn cube_symmetries() -> Vec<Matrix3<f64>> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for p in perms {
        for signs in 0..8u8 {
            let mut m = Matrix3::zeros();
            for (row, &col) in p.iter().enumerate() {
                m[(row, col)] = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

fn rotation(theta: &[f64]) -> Matrix3<f64> {
    *Rotation3::new(Vec3::new(theta[6], theta[7], theta[8])).matrix()
}

/// Solids at pose `theta`.
pub fn solids(theta: &[f64]) -> Vec<Solid> {
    vec![
        Solid::Sphere {
            center: Vec3::new(theta[0], theta[1], theta[2]),
            radius: SPHERE_RADIUS,
            color: SPHERE_COLOR,
        },
        Solid::Cube {
            center: Vec3::new(theta[3], theta[4], theta[5]),
            rotation: rotation(theta),
            half: CUBE_EDGE / 2.0,
            color: CUBE_COLOR,
        },
    ]
}

/// Smallest rotation angle between the rig cube's estimated and true
/// orientation over the cube's symmetries.
pub fn cube_angle(theta: &[f64], truth: &[f64]) -> f64 {
    let rel = rotation(truth).transpose() * rotation(theta);
    cube_symmetries()
        .iter()
        .map(|s| (((rel * s.transpose()).trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos())
        .fold(f64::INFINITY, f64::min)
}

pub fn pose_error(theta: &[f64], truth: &[f64]) -> PoseError {
    let errors = center_errors(&rig_mapping(), theta, truth, &[2.0 * SPHERE_RADIUS, CUBE_EDGE]);
    PoseError {
        sphere: errors[0],
        cube: errors[1],
        cube_angle: cube_angle(theta, truth),
    }
}

pub fn camera(options: &RigOptions) -> Result<Camera> {
    Camera::look_at(
        Vec3::zeros(),
        Vec3::new(0.0, 0.0, 5.5),
        Vec3::y(),
        options.focal,
        options.size,
        options.size,
    )
}

/// Rig spheres in template coordinates (objects centered at the origin).
pub fn template_spheres() -> Vec<SphereSpec> {
    let mut spheres = vec![SphereSpec::new(Vec3::zeros(), SPHERE_RADIUS, SPHERE_COLOR)];
    let step = CUBE_EDGE / 3.0;
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                let c = Vec3::new(i as f64, j as f64, k as f64) * step;
                spheres.push(SphereSpec::new(c, step / 2.0, CUBE_COLOR));
            }
        }
    }
    spheres
}

pub fn rig_mapping() -> Mapping {
    Mapping::Rigid(vec![
        RigidObject {
            name: "sphere".into(),
            members: vec![0],
            pivot: Vec3::zeros(),
            kind: RigidKind::Position,
        },
        RigidObject {
            name: "cube".into(),
            members: (1..28).collect(),
            pivot: Vec3::zeros(),
            kind: RigidKind::Full,
        },
    ])
}

pub fn tracking_optim_config() -> OptimConfig {
    OptimConfig {
        max_iterations: 150,
        rel_tol: 1e-9,
        max_displacement: 0.1,
        ..Default::default()
    }
}

/// The rig as a scene file, posed at the truth.
pub fn scene_file(options: &RigOptions) -> Result<SceneFile> {
    Ok(SceneFile {
        smoothness: options.smoothness,
        cutoff: options.cutoff,
        cameras: vec![camera(options)?],
        geometry: Geometry::Spheres(template_spheres()),
        mapping: Some(rig_mapping()),
        pose: Some(truth()),
        optimizer: tracking_optim_config(),
        ..Default::default()
    })
}

#[derive(Debug, Clone)]
pub struct TrackingRig {
    pub template: Scene,
    pub mapping: Mapping,
    pub truth: Vec<f64>,
    /// Object sizes for the relative center errors.
    pub sizes: Vec<f64>,
    pub views: Vec<View>,
    pub config: EnergyConfig,
    /// Whether `theta` follows the sphere+cube layout.
    pub is_rig: bool,
}

impl TrackingRig {
    pub fn new(options: &RigOptions) -> Result<Self> {
        let file = scene_file(options)?;
        let target = match options.target {
            TargetKind::Model => None,
            TargetKind::Solids => Some(render_solids(&solids(&truth()), &file.cameras[0], options.supersample)),
        };
        let mut rig = Self::from_file(&file, target)?;
        rig.is_rig = true;
        Ok(rig)
    }

    /// Rig from a rigid scene file whose pose is the truth. Without a target,
    /// the model rendered at the truth is used.
    pub fn from_file(file: &SceneFile, target: Option<Image>) -> Result<Self> {
        let template = file.build_scene()?;
        let mapping = file
            .mapping
            .clone()
            .ok_or_else(|| Error::InvalidParameter("tracking needs an [object] mapping".into()))?;
        if !matches!(mapping, Mapping::Rigid(_)) {
            return Err(Error::InvalidParameter("tracking needs a rigid mapping".into()));
        }
        mapping.validate(&template)?;
        let truth = file.pose.clone().unwrap_or_else(|| mapping.identity(&template));
        let cam = file.camera(0)?.clone();
        let target = match target {
            Some(t) => t,
            None => render(&apply_mapping(&mapping, &truth, &template)?, &cam, &file.samples),
        };
        let sizes = match &file.geometry {
            Geometry::Spheres(s) => object_sizes(&mapping, s),
            Geometry::Gaussians(_) => vec![1.0; object_count(&mapping)],
        };
        let mut config = file.energy.clone();
        config.samples = file.samples.clone();
        Ok(Self {
            template,
            mapping,
            truth,
            sizes,
            views: vec![View::new(cam, target)?],
            config,
            is_rig: false,
        })
    }

    pub fn target(&self) -> &Image {
        &self.views[0].image
    }

    pub fn objective(&self) -> Objective<'_> {
        Objective::new(&self.template, &self.mapping, &self.views, &self.config)
    }

    pub fn random_init(&self, rng: &mut impl Rng) -> Vec<f64> {
        random_start(&self.mapping, &self.truth, &START_SPREAD, rng)
    }

    /// Overlapping, distant, and occluded starts for the sphere+cube rig.
    pub fn manual_inits(&self) -> Vec<(&'static str, Vec<f64>)> {
        vec![
            ("overlap", vec![-0.25, 0.2, 5.3, 0.4, 0.1, 6.2, 0.0, 0.0, 0.0]),
            ("distant", vec![-0.4, -1.1, 5.2, 0.7, 0.85, 5.9, 0.75, 0.3, 0.05]),
            // Cube entirely behind the sphere, next to its right edge.
            ("occluded", vec![-0.4, 0.0, 5.0, -0.24, 0.0, 6.3, 0.0, 0.0, 0.0]),
        ]
    }

    pub fn run(&self, init: &[f64], config: &OptimConfig) -> Result<TrackRun> {
        let mut obj = self.objective();
        let res = minimize(&mut obj, init, config)?;
        let errors = center_errors(&self.mapping, &res.theta, &self.truth, &self.sizes);
        Ok(TrackRun {
            init: init.to_vec(),
            success: errors.iter().all(|e| *e < MAX_CENTER_ERROR),
            errors,
            cube_angle: self.is_rig.then(|| cube_angle(&res.theta, &self.truth)),
            theta: res.theta,
            energy: res.energy,
            trace: res.trace,
        })
    }
}

fn object_count(mapping: &Mapping) -> usize {
    match mapping {
        Mapping::Rigid(o) => o.len(),
        Mapping::Free { .. } => 0,
    }
}

/// Largest axis-aligned extent of each object's member spheres.
pub fn object_sizes(mapping: &Mapping, spheres: &[SphereSpec]) -> Vec<f64> {
    let Mapping::Rigid(objects) = mapping else {
        return Vec::new();
    };
    objects
        .iter()
        .map(|o| {
            let mut lo = Vec3::repeat(f64::INFINITY);
            let mut hi = Vec3::repeat(f64::NEG_INFINITY);
            for &q in &o.members {
                let s = &spheres[q];
                lo = lo.inf(&(s.center - Vec3::repeat(s.radius)));
                hi = hi.sup(&(s.center + Vec3::repeat(s.radius)));
            }
            (hi - lo).max()
        })
        .collect()
}

/// Distance between each object's translation in `theta` and `truth`, divided
/// by the object's size.
pub fn center_errors(mapping: &Mapping, theta: &[f64], truth: &[f64], sizes: &[f64]) -> Vec<f64> {
    let Mapping::Rigid(objects) = mapping else {
        return Vec::new();
    };
    let mut at = 0;
    objects
        .iter()
        .zip(sizes)
        .map(|(o, size)| {
            let d = Vec3::new(theta[at] - truth[at], theta[at + 1] - truth[at + 1], theta[at + 2] - truth[at + 2]);
            at += o.kind.arity();
            d.norm() / size
        })
        .collect()
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Rigid pose around `center`: translations offset uniformly within
/// `spread`, orientations uniform over all rotations.
pub fn random_start(mapping: &Mapping, center: &[f64], spread: &[f64; 3], rng: &mut impl Rng) -> Vec<f64> {
    let mut theta = center.to_vec();
    let Mapping::Rigid(objects) = mapping else {
        return theta;
    };
    let mut at = 0;
    for o in objects {
        for i in 0..3 {
            theta[at + i] += rng.gen_range(-spread[i]..spread[i]);
        }
        if o.kind == RigidKind::Full {
            let q = UnitQuaternion::from_quaternion(Quaternion::new(
                gaussian(rng),
                gaussian(rng),
                gaussian(rng),
                gaussian(rng),
            ));
            theta[at + 3..at + 6].copy_from_slice(q.scaled_axis().as_slice());
        }
        at += o.kind.arity();
    }
    theta
}

/// Starting poses for `count` random runs drawn from `seed`.
pub fn random_starts(rig: &TrackingRig, count: usize, seed: u64) -> Vec<Vec<f64>> {
    random_starts_within(rig, count, seed, &START_SPREAD)
}

/// [`random_starts`] with translations offset within `spread` of the truth.
pub fn random_starts_within(rig: &TrackingRig, count: usize, seed: u64, spread: &[f64; 3]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| random_start(&rig.mapping, &rig.truth, spread, &mut rng))
        .collect()
}

/// Runs `count` random initializations drawn from `seed`.
pub fn track_batch(rig: &TrackingRig, count: usize, seed: u64, config: &OptimConfig) -> Result<Vec<TrackRun>> {
    random_starts(rig, count, seed)
        .iter()
        .map(|init| rig.run(init, config))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub runs: usize,
    pub successes: usize,
    /// Per-object center error averaged over successful runs.
    pub mean_errors: Vec<f64>,
}

impl BatchSummary {
    pub fn from_runs(runs: &[TrackRun]) -> Self {
        let ok: Vec<&TrackRun> = runs.iter().filter(|r| r.success).collect();
        let objects = runs.first().map_or(0, |r| r.errors.len());
        let mean_errors = (0..objects)
            .map(|i| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| r.errors[i]).sum::<f64>() / ok.len() as f64
                }
            })
            .collect();
        Self {
            runs: runs.len(),
            successes: ok.len(),
            mean_errors,
        }
    }

    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.runs.max(1) as f64
    }
}

/// Pixels whose center ray hits the cube before anything else, for the solid
/// (binary) version of pose `theta`.
pub fn visible_cube_pixels(theta: &[f64], camera: &Camera) -> usize {
    let s = solids(theta);
    let mut n = 0;
    for y in 0..camera.height {
        for x in 0..camera.width {
            let ray = camera.pixel_ray(x, y);
            let sphere = s[0].hit(&ray).unwrap_or(f64::INFINITY);
            if s[1].hit(&ray).is_some_and(|t| t < sphere) {
                n += 1;
            }
        }
    }
    n
}
