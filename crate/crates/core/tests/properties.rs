use gaussvis::io::{parse_scene, serialize_scene, SceneFile};
use gaussvis::mapping::invert_rigid;
use gaussvis::*;
use nalgebra::Rotation3;
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn gaussian() -> impl Strategy<Value = Gaussian> {
    (0.0..4.0, vec3(1.0), 0.1..0.6, (0.0..1.0, 0.0..1.0, 0.0..1.0)).prop_map(|(c, mu, s, (r, g, b))| {
        Gaussian::new(c, mu + Vec3::new(0.0, 0.0, 4.0), s, Vec3::new(r, g, b))
    })
}

fn scene(max: usize) -> impl Strategy<Value = Scene> {
    prop::collection::vec(gaussian(), 1..max).prop_map(Scene::new)
}

fn ray() -> impl Strategy<Value = Ray> {
    (vec3(0.3), -0.3..0.3, -0.3..0.3).prop_map(|(o, dx, dy)| Ray::new(o, Vec3::new(dx, dy, 1.0)))
}

fn camera(size: usize) -> Camera {
    Camera::look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, 4.0), Vec3::y(), 1.4 * size as f64, size, size).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_ignores_order(mut s in scene(8), x in vec3(1.5)) {
        let p = x + Vec3::new(0.0, 0.0, 4.0);
        let before = s.density_at(&p);
        s.gaussians.reverse();
        prop_assert!((s.density_at(&p) - before).abs() <= 1e-12 * before.max(1.0));
    }

    #[test]
    fn projection_reproduces_density(s in scene(8), r in ray(), t in 0.0..8.0f64) {
        let s = s.with_cutoff(0.0);
        let along: f64 = s.project(&r).iter().map(|g| g.density(t)).sum();
        prop_assert!((along - s.density_at(&r.at(t))).abs() < 1e-12);
    }

    #[test]
    fn projection_is_rigid_invariant(g in gaussian(), r in ray(), axis in vec3(2.0), t in vec3(3.0)) {
        let rot = Rotation3::new(axis);
        let moved = Gaussian { center: rot * g.center + t, ..g };
        let moved_ray = Ray::new(rot * r.origin + t, rot * r.direction);
        let a = project_to_ray(&g, &r, 0);
        let b = project_to_ray(&moved, &moved_ray, 0);
        prop_assert!((a.cbar - b.cbar).abs() < 1e-10 * a.cbar.max(1e-3));
        prop_assert!((a.mubar - b.mubar).abs() < 1e-10);
        prop_assert_eq!(a.sigmabar, b.sigmabar);
    }

    #[test]
    fn projection_bounds(g in gaussian(), r in ray()) {
        let p = project_to_ray(&g, &r, 0);
        prop_assert_eq!(p.sigmabar, g.sigma);
        prop_assert!(p.cbar <= g.magnitude);
    }

    #[test]
    fn render_is_linear_in_albedo(s in scene(6), k in 0.0..1.0f64) {
        let cam = camera(6);
        let scheme = SampleScheme::default();
        let base = render(&s, &cam, &scheme);
        let mut scaled = s.clone();
        for g in &mut scaled.gaussians {
            g.albedo *= k;
        }
        let img = render(&scaled, &cam, &scheme);
        for (a, b) in base.pixels.iter().zip(&img.pixels) {
            prop_assert!((a * k - b).abs().max() <= 1e-15 * a.abs().max().max(1.0));
        }
    }

    #[test]
    fn radiance_depends_only_on_the_ray(s in scene(6), u in 0.0..6.0f64, v in 0.0..6.0f64) {
        let cam = camera(6);
        let fine = cam.scaled(2);
        let scheme = SampleScheme::default();
        let a = render_ray(&s, &cam.generate_ray(u, v), &scheme);
        let b = render_ray(&s, &fine.generate_ray(2.0 * u, 2.0 * v), &scheme);
        prop_assert!((a - b).abs().max() < 1e-12);
    }

    #[test]
    fn visibilities_sum_below_one(s in scene(12), r in ray()) {
        let projected = s.project(&r);
        let scheme = SampleScheme::default();
        let total: f64 = (0..projected.len()).map(|q| gaussian_visibility(&projected, q, &scheme)).sum();
        prop_assert!((0.0..=1.0 + 1e-2).contains(&total), "{}", total);
    }

    #[test]
    fn transmittance_never_increases(s in scene(10), r in ray(), a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let projected = s.project(&r);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(transmittance(&projected, hi) <= transmittance(&projected, lo));
    }

    #[test]
    fn rigid_mapping_inverts(theta in prop::collection::vec(-1.5..1.5f64, 9), s in scene(6)) {
        let n = s.len();
        let mapping = Mapping::Rigid(vec![
            RigidObject { name: "a".into(), members: vec![0], pivot: Vec3::zeros(), kind: RigidKind::Position },
            RigidObject {
                name: "b".into(),
                members: (1..n).collect(),
                pivot: Vec3::new(0.1, -0.2, 4.0),
                kind: RigidKind::Full,
            },
        ]);
        let posed = apply_mapping(&mapping, &theta, &s).unwrap();
        let back = invert_rigid(&mapping, &theta, &posed).unwrap();
        for (a, b) in back.gaussians.iter().zip(&s.gaussians) {
            prop_assert!((a.center - b.center).norm() < 1e-12);
        }
    }

    #[test]
    fn uniform_weights_leave_mc_unchanged(s in scene(5), colors in prop::collection::vec(0.0..1.0f64, 3 * 16)) {
        let cam = camera(4);
        let px = colors.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let img = Image::from_pixels(4, 4, px).unwrap();
        let config = EnergyConfig::mc();
        let plain = d_mc(&s, &cam, &img, &config).unwrap();
        let ones = d_mc(&s, &cam, &img.clone().with_weights(vec![1.0; 16]).unwrap(), &config).unwrap();
        prop_assert_eq!(plain.to_bits(), ones.to_bits());
    }

    #[test]
    fn scene_files_round_trip(s in scene(5), m in 0.001..0.5f64) {
        let file = SceneFile {
            smoothness: m,
            cameras: vec![camera(5)],
            geometry: gaussvis::io::Geometry::Gaussians(s.gaussians.clone()),
            ..SceneFile::default()
        };
        let text = serialize_scene(&file);
        let parsed = parse_scene(&text).unwrap();
        prop_assert_eq!(serialize_scene(&parsed), text);
        prop_assert_eq!(parsed.build_scene().unwrap().gaussians, s.gaussians);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn calibration_scales_with_radius(r in 0.2..3.0f64, k in 0.5..4.0f64, m in prop::sample::select(vec![1e-4, 0.01, 0.1, 0.5])) {
        let scheme = SampleScheme::default();
        let a = calibrate_sphere(r, m, &scheme).unwrap();
        let b = calibrate_sphere(k * r, m, &scheme).unwrap();
        prop_assert!((b.sigma / a.sigma - k).abs() < 1e-9 * k);
        prop_assert!((b.magnitude * b.sigma - a.magnitude * a.sigma).abs() < 1e-9 * a.magnitude * a.sigma);
        let again = calibrate_sphere(r, m, &scheme).unwrap();
        prop_assert_eq!(a, again);
    }

    #[test]
    fn perfect_render_is_stationary(s in scene(6)) {
        let cam = camera(6);
        let config = EnergyConfig::pc();
        let target = render(&s, &cam, &config.samples);
        let views = [View::new(cam, target).unwrap()];
        let (e, g) = scene_energy(&s, &views, &config, true).unwrap();
        prop_assert!(e < 1e-20);
        prop_assert!(g.unwrap().flat().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn culled_gaussians_get_no_gradient(s in scene(5), colors in prop::collection::vec(0.0..1.0f64, 3 * 25)) {
        let cam = camera(5);
        let mut s = s;
        // Far off to the side: below the cutoff on every pixel ray.
        s.gaussians.push(Gaussian::new(1.0, Vec3::new(40.0, 0.0, 4.0), 0.3, Vec3::repeat(0.5)));
        let px = colors.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let views = [View::new(cam, Image::from_pixels(5, 5, px).unwrap()).unwrap()];
        for config in [EnergyConfig::pc(), EnergyConfig::mc()] {
            let g = scene_energy(&s, &views, &config, true).unwrap().1.unwrap();
            prop_assert!(g.blocks.last().unwrap().is_zero());
        }
    }

    #[test]
    fn zero_magnitudes_render_black(s in scene(6)) {
        let mut dark = s.clone();
        for g in &mut dark.gaussians {
            g.magnitude = 0.0;
        }
        let img = render(&dark, &camera(5), &SampleScheme::default());
        prop_assert!(img.pixels.iter().all(|p| *p == Vec3::zeros()));
    }
}

#[test]
fn more_smoothness_means_less_optical_depth() {
    let scheme = SampleScheme::default();
    let depth: Vec<f64> = [1e-4, 0.01, 0.1, 0.5]
        .iter()
        .map(|m| {
            let c = calibrate_sphere(1.0, *m, &scheme).unwrap();
            c.magnitude * c.sigma
        })
        .collect();
    assert!(depth.windows(2).all(|w| w[1] < w[0]), "{depth:?}");
}
