//! Random scene/camera/pose triples for checking `∂F/∂theta` against central
//! differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{DataTerm, EnergyConfig, View};
use crate::error::Result;
use crate::fdcheck::{fd_check, FdOptions, FdReport};
use crate::imaging::{Camera, Image};
use crate::mapping::{Mapping, RigidKind, RigidObject};
use crate::objective::Objective;
use crate::scene::{Gaussian, Scene, Vec3};

pub const IMAGE_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct GradCase {
    pub template: Scene,
    pub mapping: Mapping,
    pub views: Vec<View>,
    pub config: EnergyConfig,
    pub theta: Vec<f64>,
}

impl GradCase {
    pub fn describe(&self) -> String {
        let term = match self.config.term {
            DataTerm::Pc => "pc",
            DataTerm::Mc => "mc",
        };
        let mapping = match &self.mapping {
            Mapping::Rigid(o) => format!("rigid/{}", o.len()),
            Mapping::Free { coupled: true } => "free-coupled".into(),
            Mapping::Free { coupled: false } => "free".into(),
        };
        format!("{term} {mapping} n={}", self.template.len())
    }
}

fn unit_box(rng: &mut impl Rng, half: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-half..half), rng.gen_range(-half..half), rng.gen_range(-half..half))
}

fn random_image(rng: &mut impl Rng) -> Image {
    let px = (0..IMAGE_SIZE * IMAGE_SIZE)
        .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
        .collect();
    Image::from_pixels(IMAGE_SIZE, IMAGE_SIZE, px).expect("size matches")
}

/// Case `index` cycles through photo-consistency / color-model terms and
/// rigid / free / coupled-free mappings.
pub fn random_case(rng: &mut impl Rng, index: usize) -> Result<GradCase> {
    let term = if index.is_multiple_of(2) { DataTerm::Pc } else { DataTerm::Mc };
    let kind = (index / 2) % 3;
    let n = if kind == 0 { rng.gen_range(1..=30) } else { rng.gen_range(1..=8) };
    let center = Vec3::new(0.0, 0.0, 4.0);
    let gaussians = (0..n)
        .map(|_| {
            Gaussian::new(
                rng.gen_range(0.5..6.0),
                center + unit_box(rng, 0.8),
                rng.gen_range(0.15..0.5),
                Vec3::new(rng.gen(), rng.gen(), rng.gen()),
            )
        })
        .collect();
    let template = Scene::new(gaussians);
    let mapping = match kind {
        0 => {
            let split = n / 2;
            let mut objects = vec![RigidObject {
                name: "a".into(),
                members: (split..n).collect(),
                pivot: center + unit_box(rng, 0.5),
                kind: RigidKind::Full,
            }];
            if split > 0 {
                objects.push(RigidObject {
                    name: "b".into(),
                    members: (0..split).collect(),
                    pivot: Vec3::zeros(),
                    kind: RigidKind::Position,
                });
            }
            Mapping::Rigid(objects)
        }
        1 => Mapping::Free { coupled: false },
        _ => Mapping::Free { coupled: true },
    };
    let mut theta = mapping.identity(&template);
    match &mapping {
        Mapping::Rigid(_) => theta.iter_mut().for_each(|t| *t += rng.gen_range(-0.3..0.3)),
        Mapping::Free { .. } => theta.iter_mut().for_each(|t| *t += rng.gen_range(-0.1..0.1)),
    }
    let eye = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let camera = Camera::look_at(
        eye,
        center + unit_box(rng, 0.3),
        Vec3::y(),
        IMAGE_SIZE as f64 * rng.gen_range(1.0..1.6),
        IMAGE_SIZE,
        IMAGE_SIZE,
    )?;
    let views = vec![View::new(camera, random_image(rng))?];
    let config = EnergyConfig {
        term,
        ..EnergyConfig::default()
    };
    Ok(GradCase {
        template,
        mapping,
        views,
        config,
        theta,
    })
}

/// `count` cases from `seed`.
pub fn random_cases(count: usize, seed: u64) -> Result<Vec<GradCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_case(&mut rng, i)).collect()
}

/// `count` copies of `theta` with every component moved uniformly within
/// `±spread`.
pub fn perturbed(theta: &[f64], count: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| theta.iter().map(|t| t + rng.gen_range(-spread..=spread)).collect())
        .collect()
}

/// Differences check of the objective gradient at `theta`. `fault` scales
/// the analytic gradient's first component (harness self-test).
pub fn check_objective(objective: &Objective, theta: &[f64], options: &FdOptions, fault: Option<f64>) -> Result<FdReport> {
    let (_, mut grad) = objective.value_grad(theta)?;
    if let (Some(k), Some(g)) = (fault, grad.first_mut()) {
        *g = if *g == 0.0 { k } else { *g * k };
    }
    let labels = objective.mapping.labels(objective.template);
    Ok(fd_check(
        |x| objective.value(x).unwrap_or(f64::NAN),
        &grad,
        theta,
        Some(&labels),
        options,
    ))
}

pub fn check_case(case: &GradCase, options: &FdOptions, fault: Option<f64>) -> Result<FdReport> {
    let objective = Objective::new(&case.template, &case.mapping, &case.views, &case.config);
    check_objective(&objective, &case.theta, options, fault)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_cover_every_combination() {
        let cases = random_cases(12, 5).unwrap();
        let kinds: std::collections::BTreeSet<String> =
            cases.iter().map(|c| c.describe().split(" n=").next().unwrap().to_string()).collect();
        assert!(kinds.contains("pc free"));
        assert!(kinds.contains("mc free-coupled"));
        assert!(kinds.iter().any(|k| k.starts_with("pc rigid")));
        assert!(kinds.iter().any(|k| k.starts_with("mc rigid")));
        assert_eq!(random_cases(12, 5).unwrap()[3].theta, cases[3].theta);
    }

    #[test]
    fn a_few_cases_pass_and_a_fault_fails() {
        let options = FdOptions::default();
        for case in random_cases(6, 9).unwrap() {
            let r = check_case(&case, &options, None).unwrap();
            assert!(r.passed(), "{}\n{r}", case.describe());
        }
        let case = &random_cases(1, 9).unwrap()[0];
        assert!(!check_case(case, &options, Some(1.5)).unwrap().passed());
    }
}
