//! Pose parameters `theta` and the scene they generate.
//!
//! Rigid objects move a fixed set of template Gaussians by a rotation about a
//! pivot followed by a translation. Free Gaussians expose their center and
//! log-size directly.

use nalgebra::{Matrix3, Rotation3};

use crate::error::{Error, Result};
use crate::gradients::{GradBlock, GradVector};
use crate::scene::{Scene, Vec3};

/// Below this rotation angle the Rodrigues derivative uses its series form.
const SMALL_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigidKind {
    /// Translation then axis-angle rotation: 6 parameters.
    Full,
    /// Translation only: 3 parameters.
    Position,
}

impl RigidKind {
    pub fn arity(self) -> usize {
        match self {
            RigidKind::Full => 6,
            RigidKind::Position => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidObject {
    pub name: String,
    /// Template Gaussians attached to this object.
    pub members: Vec<usize>,
    /// Center of rotation in template coordinates.
    pub pivot: Vec3,
    pub kind: RigidKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mapping {
    /// `theta` is the concatenation of each object's slice, in order.
    Rigid(Vec<RigidObject>),
    /// `theta` holds `(mu.x, mu.y, mu.z, ln sigma)` per Gaussian. With
    /// `coupled`, `c sigma` keeps its template value.
    Free { coupled: bool },
}

impl Mapping {
    pub fn arity(&self, template: &Scene) -> usize {
        match self {
            Mapping::Rigid(objects) => objects.iter().map(|o| o.kind.arity()).sum(),
            Mapping::Free { .. } => 4 * template.len(),
        }
    }

    pub fn validate(&self, template: &Scene) -> Result<()> {
        if let Mapping::Rigid(objects) = self {
            let mut owner = vec![None; template.len()];
            for (oi, o) in objects.iter().enumerate() {
                for &q in &o.members {
                    if q >= template.len() {
                        return Err(Error::field(
                            format!("object[{oi}].members"),
                            format!("index {q} out of range for {} Gaussians", template.len()),
                        ));
                    }
                    if let Some(prev) = owner[q].replace(oi) {
                        return Err(Error::field(
                            format!("object[{oi}].members"),
                            format!("Gaussian {q} already belongs to object {prev}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parameter labels for reports.
    pub fn labels(&self, template: &Scene) -> Vec<String> {
        match self {
            Mapping::Rigid(objects) => {
                let mut out = Vec::new();
                for o in objects {
                    for c in ["tx", "ty", "tz", "rx", "ry", "rz"].iter().take(o.kind.arity()) {
                        out.push(format!("{}.{c}", o.name));
                    }
                }
                out
            }
            Mapping::Free { .. } => (0..template.len())
                .flat_map(|q| ["x", "y", "z", "log_sigma"].map(|c| format!("g{q}.{c}")))
                .collect(),
        }
    }

    /// The `theta` that reproduces `template` exactly.
    pub fn identity(&self, template: &Scene) -> Vec<f64> {
        match self {
            Mapping::Rigid(_) => vec![0.0; self.arity(template)],
            Mapping::Free { .. } => template
                .gaussians
                .iter()
                .flat_map(|g| [g.center.x, g.center.y, g.center.z, g.sigma.ln()])
                .collect(),
        }
    }
}

/// Parameter vector plus the mapping interpreting it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub values: Vec<f64>,
    pub mapping: Mapping,
}

impl PoseParams {
    pub fn new(values: Vec<f64>, mapping: Mapping) -> Self {
        Self { values, mapping }
    }
}

fn check_arity(mapping: &Mapping, theta: &[f64], template: &Scene) -> Result<()> {
    mapping.validate(template)?;
    let want = mapping.arity(template);
    if theta.len() != want {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, mapping needs {want}",
            theta.len()
        )));
    }
    Ok(())
}

fn rotation(omega: &Vec3) -> Matrix3<f64> {
    *Rotation3::new(*omega).matrix()
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    v.cross_matrix()
}

/// `∂R(omega)/∂omega_i` for `i = 0, 1, 2`.
pub fn rotation_derivatives(omega: &Vec3) -> [Matrix3<f64>; 3] {
    let theta2 = omega.norm_squared();
    let basis = [Vec3::x(), Vec3::y(), Vec3::z()];
    if theta2.sqrt() < SMALL_ANGLE {
        // R = I + [w] + [w]^2/2 + O(|w|^3)
        let w = skew(omega);
        return basis.map(|e| {
            let ei = skew(&e);
            ei + 0.5 * (ei * w + w * ei)
        });
    }
    let r = rotation(omega);
    let w = skew(omega);
    let i_minus_r = Matrix3::identity() - r;
    basis.map(|e| {
        let k = omega.dot(&e);
        (k * w + skew(&omega.cross(&(i_minus_r * e)))) * r / theta2
    })
}

/// Scene generated by `theta` from `template`.
pub fn apply_mapping(mapping: &Mapping, theta: &[f64], template: &Scene) -> Result<Scene> {
    check_arity(mapping, theta, template)?;
    let mut scene = template.clone();
    match mapping {
        Mapping::Rigid(objects) => {
            let mut at = 0;
            for o in objects {
                let t = Vec3::new(theta[at], theta[at + 1], theta[at + 2]);
                let r = match o.kind {
                    RigidKind::Full => rotation(&Vec3::new(theta[at + 3], theta[at + 4], theta[at + 5])),
                    RigidKind::Position => Matrix3::identity(),
                };
                at += o.kind.arity();
                for &q in &o.members {
                    let mu = template.gaussians[q].center;
                    scene.gaussians[q].center = r * (mu - o.pivot) + o.pivot + t;
                }
            }
        }
        Mapping::Free { coupled } => {
            for (q, g) in scene.gaussians.iter_mut().enumerate() {
                let p = &theta[4 * q..4 * q + 4];
                let sigma = p[3].exp();
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::Domain(format!(
                        "Gaussian {q}: log sigma {} gives sigma {sigma}",
                        p[3]
                    )));
                }
                g.center = Vec3::new(p[0], p[1], p[2]);
                if *coupled {
                    let t = &template.gaussians[q];
                    g.magnitude = t.magnitude * t.sigma / sigma;
                }
                g.sigma = sigma;
            }
        }
    }
    Ok(scene)
}

/// Inverse of a rigid mapping: recovers the template from a mapped scene.
pub fn invert_rigid(mapping: &Mapping, theta: &[f64], scene: &Scene) -> Result<Scene> {
    let Mapping::Rigid(objects) = mapping else {
        return Err(Error::InvalidParameter("not a rigid mapping".into()));
    };
    check_arity(mapping, theta, scene)?;
    let mut out = scene.clone();
    let mut at = 0;
    for o in objects {
        let t = Vec3::new(theta[at], theta[at + 1], theta[at + 2]);
        let r = match o.kind {
            RigidKind::Full => rotation(&Vec3::new(theta[at + 3], theta[at + 4], theta[at + 5])),
            RigidKind::Position => Matrix3::identity(),
        };
        at += o.kind.arity();
        for &q in &o.members {
            let mu = scene.gaussians[q].center;
            out.gaussians[q].center = r.transpose() * (mu - o.pivot - t) + o.pivot;
        }
    }
    Ok(out)
}

/// Sparse `∂gamma/∂theta`: for each Gaussian, the `theta` components it
/// depends on and the derivative of its parameters with respect to each.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingJacobian {
    pub dim: usize,
    pub columns: Vec<Vec<(usize, GradBlock)>>,
}

impl MappingJacobian {
    /// `(∂gamma/∂theta)^T g`.
    pub fn pull_back(&self, scene_grad: &GradVector) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (entries, g) in self.columns.iter().zip(&scene_grad.blocks) {
            for (i, d) in entries {
                out[*i] += d.magnitude * g.magnitude
                    + d.center.dot(&g.center)
                    + d.sigma * g.sigma
                    + d.albedo.dot(&g.albedo);
            }
        }
        out
    }

    /// Dense `(8 N) x dim` matrix in [`GradVector::flat`] layout.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.dim]; GradBlock::LEN * self.columns.len()];
        for (q, entries) in self.columns.iter().enumerate() {
            for (i, d) in entries {
                for (r, v) in d.to_array().iter().enumerate() {
                    rows[GradBlock::LEN * q + r][*i] += v;
                }
            }
        }
        rows
    }
}

pub fn mapping_jacobian(mapping: &Mapping, theta: &[f64], template: &Scene) -> Result<MappingJacobian> {
    check_arity(mapping, theta, template)?;
    let mut columns = vec![Vec::new(); template.len()];
    let unit = |v: Vec3| GradBlock {
        center: v,
        ..Default::default()
    };
    match mapping {
        Mapping::Rigid(objects) => {
            let mut at = 0;
            for o in objects {
                let derivs = match o.kind {
                    RigidKind::Full => {
                        Some(rotation_derivatives(&Vec3::new(theta[at + 3], theta[at + 4], theta[at + 5])))
                    }
                    RigidKind::Position => None,
                };
                for &q in &o.members {
                    let arm = template.gaussians[q].center - o.pivot;
                    let col = &mut columns[q];
                    col.push((at, unit(Vec3::x())));
                    col.push((at + 1, unit(Vec3::y())));
                    col.push((at + 2, unit(Vec3::z())));
                    if let Some(d) = &derivs {
                        for (j, dr) in d.iter().enumerate() {
                            col.push((at + 3 + j, unit(dr * arm)));
                        }
                    }
                }
                at += o.kind.arity();
            }
        }
        Mapping::Free { coupled } => {
            for (q, col) in columns.iter_mut().enumerate() {
                let base = 4 * q;
                let sigma = theta[base + 3].exp();
                col.push((base, unit(Vec3::x())));
                col.push((base + 1, unit(Vec3::y())));
                col.push((base + 2, unit(Vec3::z())));
                let t = &template.gaussians[q];
                col.push((
                    base + 3,
                    GradBlock {
                        sigma,
                        magnitude: if *coupled { -t.magnitude * t.sigma / sigma } else { 0.0 },
                        ..Default::default()
                    },
                ));
            }
        }
    }
    Ok(MappingJacobian {
        dim: mapping.arity(template),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Gaussian;
    use std::f64::consts::FRAC_PI_2;

    fn template() -> Scene {
        let w = Vec3::new(1.0, 1.0, 1.0);
        Scene::new(vec![
            Gaussian::new(1.0, Vec3::new(1.0, 0.0, 0.0), 0.3, w),
            Gaussian::new(2.0, Vec3::new(0.2, -0.4, 0.9), 0.5, w),
            Gaussian::new(1.5, Vec3::new(-1.0, 2.0, 0.5), 0.2, w),
        ])
    }

    fn rigid() -> Mapping {
        Mapping::Rigid(vec![
            RigidObject {
                name: "a".into(),
                members: vec![0, 1],
                pivot: Vec3::zeros(),
                kind: RigidKind::Full,
            },
            RigidObject {
                name: "b".into(),
                members: vec![2],
                pivot: Vec3::new(-1.0, 2.0, 0.5),
                kind: RigidKind::Position,
            },
        ])
    }

    #[test]
    fn identity_reproduces_template() {
        let t = template();
        for m in [rigid(), Mapping::Free { coupled: true }, Mapping::Free { coupled: false }] {
            let s = apply_mapping(&m, &m.identity(&t), &t).unwrap();
            for (a, b) in s.gaussians.iter().zip(&t.gaussians) {
                assert!((a.center - b.center).norm() < 1e-15);
                assert!((a.sigma - b.sigma).abs() < 1e-15);
                assert!((a.magnitude - b.magnitude).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn translation_shifts_centers() {
        let t = template();
        let theta = [1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0];
        let s = apply_mapping(&rigid(), &theta, &t).unwrap();
        for (a, b) in s.gaussians.iter().zip(&t.gaussians) {
            assert_eq!(a.center, b.center + Vec3::new(1.0, 2.0, 3.0));
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = template();
        let theta = [0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0];
        let s = apply_mapping(&rigid(), &theta, &t).unwrap();
        assert!((s.gaussians[0].center - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inverse_returns_template() {
        let t = template();
        let theta = [0.3, -1.0, 2.0, 0.4, -0.7, 1.9, 0.5, 0.5, -0.5];
        let s = apply_mapping(&rigid(), &theta, &t).unwrap();
        let back = invert_rigid(&rigid(), &theta, &s).unwrap();
        for (a, b) in back.gaussians.iter().zip(&t.gaussians) {
            assert!((a.center - b.center).norm() < 1e-12);
        }
    }

    fn flat_params(s: &Scene) -> Vec<f64> {
        s.gaussians
            .iter()
            .flat_map(|g| {
                GradBlock {
                    magnitude: g.magnitude,
                    center: g.center,
                    sigma: g.sigma,
                    albedo: g.albedo,
                }
                .to_array()
            })
            .collect()
    }

    fn check_jacobian(m: &Mapping, theta: &[f64]) {
        let t = template();
        let dense = mapping_jacobian(m, theta, &t).unwrap().dense();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut p = theta.to_vec();
            p[i] += h;
            let fp = flat_params(&apply_mapping(m, &p, &t).unwrap());
            p[i] -= 2.0 * h;
            let fm = flat_params(&apply_mapping(m, &p, &t).unwrap());
            for r in 0..fp.len() {
                let num = (fp[r] - fm[r]) / (2.0 * h);
                let ana = dense[r][i];
                assert!(
                    (num - ana).abs() <= 1e-6 * num.abs().max(1.0),
                    "row {r} col {i}: {ana} vs {num}"
                );
            }
        }
    }

    #[test]
    fn rigid_jacobian_matches_differences() {
        check_jacobian(&rigid(), &[0.3, -1.0, 2.0, 0.4, -0.7, 1.9, 0.5, 0.5, -0.5]);
        check_jacobian(&rigid(), &[0.0; 9]);
        check_jacobian(&rigid(), &[0.0, 0.0, 0.0, 1e-8, -2e-8, 0.5e-8, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn free_jacobian_matches_differences() {
        let t = template();
        for coupled in [false, true] {
            let m = Mapping::Free { coupled };
            let mut theta = m.identity(&t);
            theta[3] += 0.2;
            check_jacobian(&m, &theta);
            let jac = mapping_jacobian(&m, &theta, &t).unwrap();
            let (_, d) = jac.columns[0][3];
            assert!((d.sigma - theta[3].exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn translation_block_is_identity() {
        let t = template();
        let jac = mapping_jacobian(&rigid(), &[0.0; 9], &t).unwrap().dense();
        for q in 0..2 {
            for a in 0..3 {
                for b in 0..3 {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert_eq!(jac[8 * q + 1 + a][b], want);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_descriptors() {
        let t = template();
        let dup = Mapping::Rigid(vec![
            RigidObject {
                name: "a".into(),
                members: vec![0, 1],
                pivot: Vec3::zeros(),
                kind: RigidKind::Position,
            },
            RigidObject {
                name: "b".into(),
                members: vec![1],
                pivot: Vec3::zeros(),
                kind: RigidKind::Position,
            },
        ]);
        assert!(apply_mapping(&dup, &[0.0; 6], &t).is_err());
        assert!(apply_mapping(&rigid(), &[0.0; 8], &t).is_err());
        let free = Mapping::Free { coupled: false };
        let mut theta = free.identity(&t);
        theta[3] = -1e4;
        assert!(matches!(apply_mapping(&free, &theta, &t), Err(Error::Domain(_))));
    }
}
