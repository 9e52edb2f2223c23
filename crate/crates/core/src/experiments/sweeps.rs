//! One-parameter slices through a posed scene.

use super::raycast::{render_solids, Solid};
use crate::calibration::SphereSpec;
use crate::energy::{scene_energy, View};
use crate::error::{Error, Result};
use crate::imaging::{Camera, Image};
use crate::io::{Geometry, SceneFile};
use crate::mapping::{apply_mapping, Mapping, RigidKind, RigidObject};
use crate::objective::Objective;
use crate::scene::Vec3;
use crate::visibility::source_visibility;

/// Pixel and template Gaussian whose visibility is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub x: usize,
    pub y: usize,
    pub gaussian: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub energy: Option<f64>,
    pub visibility: Option<f64>,
}

/// `steps + 1` evenly spaced values from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![lo];
    }
    (0..=steps)
        .map(|i| {
            if i == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / steps as f64
            }
        })
        .collect()
}

/// Evaluates the energy over `views` (if any) and the probe visibility at
/// every value of parameter `param`, others fixed at the file's pose.
pub fn run_sweep(
    file: &SceneFile,
    views: &[View],
    param: usize,
    values: &[f64],
    probe: Option<Probe>,
) -> Result<Vec<SweepRow>> {
    let template = file.build_scene()?;
    let mapping = file.mapping.clone().unwrap_or(Mapping::Free { coupled: false });
    mapping.validate(&template)?;
    let theta0 = file.pose.clone().unwrap_or_else(|| mapping.identity(&template));
    let dim = mapping.arity(&template);
    if theta0.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "pose has {} values, mapping needs {dim}",
            theta0.len()
        )));
    }
    if param >= dim {
        return Err(Error::InvalidParameter(format!(
            "parameter {param} out of range (scene has {dim})"
        )));
    }
    let probe_ray = match probe {
        Some(p) => {
            let cam = file.camera(0)?;
            if p.x >= cam.width || p.y >= cam.height || p.gaussian >= template.len() {
                return Err(Error::InvalidParameter(format!("probe {p:?} outside camera or scene")));
            }
            Some((cam.pixel_ray(p.x, p.y), p.gaussian))
        }
        None => None,
    };
    let mut config = file.energy.clone();
    config.samples = file.samples.clone();
    let objective = Objective::new(&template, &mapping, views, &config);
    values
        .iter()
        .map(|&v| {
            let mut theta = theta0.clone();
            theta[param] = v;
            let energy = if views.is_empty() {
                None
            } else {
                Some(objective.value(&theta)?)
            };
            let visibility = match &probe_ray {
                Some((ray, q)) => {
                    let scene = apply_mapping(&mapping, &theta, &template)?;
                    Some(source_visibility(&scene, ray, *q, &file.samples))
                }
                None => None,
            };
            Ok(SweepRow {
                value: v,
                energy,
                visibility,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpStats {
    pub max: f64,
    pub median: f64,
    /// `max / median`; infinite when the median jump is zero.
    pub ratio: f64,
    /// Every first difference quotient is finite.
    pub finite_derivative: bool,
}

/// Statistics of `|v[i+1] - v[i]|` over a uniformly sampled curve.
pub fn jump_stats(values: &[f64], spacing: f64) -> JumpStats {
    let mut jumps: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let finite_derivative = !jumps.is_empty() && jumps.iter().all(|j| (j / spacing).is_finite());
    jumps.sort_by(f64::total_cmp);
    let n = jumps.len();
    let median = match n {
        0 => 0.0,
        _ if n % 2 == 1 => jumps[n / 2],
        _ => 0.5 * (jumps[n / 2 - 1] + jumps[n / 2]),
    };
    let max = jumps.last().copied().unwrap_or(0.0);
    JumpStats {
        max,
        median,
        ratio: if median > 0.0 { max / median } else { f64::INFINITY },
        finite_derivative,
    }
}

pub fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Red sphere rising behind a black occluder, seen along the pixel grazing
/// the occluder's top. Parameter 4 is the red sphere's height.
pub fn two_sphere(smoothness: f64) -> Result<(SceneFile, Probe)> {
    let size = 65;
    let cam = Camera::look_at(Vec3::zeros(), Vec3::z(), Vec3::y(), 100.0, size, size)?;
    let file = SceneFile {
        smoothness,
        cameras: vec![cam],
        geometry: Geometry::Spheres(vec![
            SphereSpec::new(Vec3::new(0.0, -0.5, 4.0), 0.5, Vec3::zeros()),
            SphereSpec::new(Vec3::new(0.0, -0.6, 6.0), 0.2, Vec3::new(1.0, 0.0, 0.0)),
        ]),
        mapping: Some(Mapping::Rigid(vec![
            RigidObject {
                name: "occluder".into(),
                members: vec![0],
                pivot: Vec3::zeros(),
                kind: RigidKind::Position,
            },
            RigidObject {
                name: "red".into(),
                members: vec![1],
                pivot: Vec3::zeros(),
                kind: RigidKind::Position,
            },
        ])),
        pose: Some(vec![0.0; 6]),
        ..Default::default()
    };
    let probe = Probe {
        x: size / 2,
        y: size / 2,
        gaussian: 1,
    };
    Ok((file, probe))
}

pub const TWO_SPHERE_PARAM: usize = 4;
pub const TWO_SPHERE_RANGE: (f64, f64) = (0.0, 1.2);

/// Torso sphere with a four-sphere arm hinged at the shoulder; parameter 8
/// rotates the arm in the image plane. The target is the ray-cast solid scene
/// with the arm at `SHOULDER_TRUTH`.
pub fn shoulder(smoothness: f64) -> Result<(SceneFile, Image)> {
    let cam = Camera::look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, 5.0), Vec3::y(), 90.0, 48, 48)?;
    let white = Vec3::repeat(1.0);
    let pivot = Vec3::new(0.45, 0.3, 5.0);
    let mut spheres = vec![SphereSpec::new(Vec3::new(0.0, 0.0, 5.0), 0.5, white)];
    for i in 0..4 {
        spheres.push(SphereSpec::new(pivot + Vec3::new(0.12 + 0.22 * i as f64, 0.0, 0.0), 0.11, white));
    }
    let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), SHOULDER_TRUTH);
    let solids: Vec<Solid> = spheres
        .iter()
        .enumerate()
        .map(|(i, s)| Solid::Sphere {
            center: if i == 0 { s.center } else { rot * (s.center - pivot) + pivot },
            radius: s.radius,
            color: s.albedo,
        })
        .collect();
    let target = render_solids(&solids, &cam, 3);
    let file = SceneFile {
        smoothness,
        cameras: vec![cam],
        geometry: Geometry::Spheres(spheres),
        mapping: Some(Mapping::Rigid(vec![
            RigidObject {
                name: "torso".into(),
                members: vec![0],
                pivot: Vec3::zeros(),
                kind: RigidKind::Position,
            },
            RigidObject {
                name: "arm".into(),
                members: vec![1, 2, 3, 4],
                pivot,
                kind: RigidKind::Full,
            },
        ])),
        pose: Some(vec![0.0; 9]),
        ..Default::default()
    };
    Ok((file, target))
}

pub const SHOULDER_TRUTH: f64 = 0.4;
pub const SHOULDER_PARAM: usize = 8;
pub const SHOULDER_RANGE: (f64, f64) = (-1.2, 1.6);

/// Energy curve of the shoulder fixture at smoothness `m`.
pub fn shoulder_curve(smoothness: f64, steps: usize) -> Result<Vec<f64>> {
    let (file, target) = shoulder(smoothness)?;
    let views = vec![View::new(file.cameras[0].clone(), target)?];
    let values = linspace(SHOULDER_RANGE.0, SHOULDER_RANGE.1, steps);
    Ok(run_sweep(&file, &views, SHOULDER_PARAM, &values, None)?
        .into_iter()
        .map(|r| r.energy.unwrap_or(f64::NAN))
        .collect())
}

/// Red-sphere visibility curve of the two-sphere fixture.
pub fn two_sphere_curve(smoothness: f64, steps: usize) -> Result<Vec<f64>> {
    let (file, probe) = two_sphere(smoothness)?;
    let values = linspace(TWO_SPHERE_RANGE.0, TWO_SPHERE_RANGE.1, steps);
    Ok(run_sweep(&file, &[], TWO_SPHERE_PARAM, &values, Some(probe))?
        .into_iter()
        .map(|r| r.visibility.unwrap_or(f64::NAN))
        .collect())
}

/// Data energy of `file`'s posed scene against `views` (no prior).
pub fn posed_energy(file: &SceneFile, views: &[View]) -> Result<f64> {
    let template = file.build_scene()?;
    let scene = match (&file.mapping, &file.pose) {
        (Some(m), Some(p)) => apply_mapping(m, p, &template)?,
        _ => template,
    };
    Ok(scene_energy(&scene, views, &file.energy, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 4), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 0), vec![2.0]);
        assert_eq!(*linspace(0.0, 1.2, 500).last().unwrap(), 1.2);
    }

    #[test]
    fn jump_statistics() {
        let s = jump_stats(&[0.0, 1.0, 3.0, 4.0, 10.0], 0.5);
        assert_eq!(s.max, 6.0);
        assert_eq!(s.median, 1.5);
        assert_eq!(s.ratio, 4.0);
        assert!(s.finite_derivative);
        let flat = jump_stats(&[1.0, 1.0, 1.0], 0.1);
        assert_eq!(flat.ratio, f64::INFINITY);
        assert!(!jump_stats(&[0.0, f64::INFINITY], 1.0).finite_derivative);
        assert_eq!(total_variation(&[0.0, 2.0, 1.0, 1.5]), 3.5);
    }

    #[test]
    fn two_sphere_visibility_is_continuous() {
        let (file, probe) = two_sphere(0.1).unwrap();
        let values = linspace(TWO_SPHERE_RANGE.0, TWO_SPHERE_RANGE.1, 100);
        let rows = run_sweep(&file, &[], TWO_SPHERE_PARAM, &values, Some(probe)).unwrap();
        let vis: Vec<f64> = rows.iter().map(|r| r.visibility.unwrap()).collect();
        assert!(rows.iter().all(|r| r.energy.is_none()));
        assert!(vis[0] < 1e-3, "{}", vis[0]);
        assert!(vis.iter().cloned().fold(0.0, f64::max) > 0.1);
        assert!(jump_stats(&vis, 0.012).finite_derivative);
    }

    #[test]
    fn sweep_rejects_bad_parameters() {
        let (file, probe) = two_sphere(0.1).unwrap();
        assert!(run_sweep(&file, &[], 6, &[0.0], Some(probe)).is_err());
        let outside = Probe { x: 65, ..probe };
        assert!(run_sweep(&file, &[], 0, &[0.0], Some(outside)).is_err());
    }

    #[test]
    fn shoulder_energy_is_lowest_near_truth() {
        let curve = shoulder_curve(0.1, 40).unwrap();
        let values = linspace(SHOULDER_RANGE.0, SHOULDER_RANGE.1, 40);
        let best = (0..curve.len()).min_by(|a, b| curve[*a].total_cmp(&curve[*b])).unwrap();
        assert!((values[best] - SHOULDER_TRUTH).abs() < 0.1, "{}", values[best]);
    }
}
