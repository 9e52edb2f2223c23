//! Writes the scene files used by the command-line tests into a directory.
//!
//! cargo run -p gaussvis --example fixtures -- fixtures

use std::path::PathBuf;

use gaussvis::experiments::shape::ShapeFixture;
use gaussvis::experiments::{sweeps, tracking};
use gaussvis::io::{serialize_scene, write_image, Geometry, SceneFile};
use gaussvis::{Camera, SphereSpec, Vec3};

fn actor() -> gaussvis::Result<SceneFile> {
    let skin = Vec3::new(0.85, 0.65, 0.5);
    let shirt = Vec3::new(0.2, 0.35, 0.8);
    let legs = Vec3::new(0.3, 0.3, 0.3);
    let mut spheres = vec![SphereSpec::new(Vec3::new(0.0, 0.78, 5.0), 0.16, skin)];
    for i in 0..4 {
        spheres.push(SphereSpec::new(Vec3::new(0.0, 0.5 - 0.18 * i as f64, 5.0), 0.17, shirt));
    }
    for side in [-1.0, 1.0] {
        for i in 0..3 {
            let t = i as f64;
            spheres.push(SphereSpec::new(Vec3::new(side * (0.24 + 0.16 * t), 0.48 - 0.12 * t, 5.0), 0.08, shirt));
        }
        spheres.push(SphereSpec::new(Vec3::new(side * 0.74, 0.1, 5.0), 0.07, skin));
        for i in 0..4 {
            spheres.push(SphereSpec::new(Vec3::new(side * 0.1, -0.22 - 0.2 * i as f64, 5.0), 0.1, legs));
        }
    }
    Ok(SceneFile {
        smoothness: 0.5,
        cameras: vec![Camera::look_at(Vec3::zeros(), Vec3::new(0.0, 0.1, 5.0), Vec3::y(), 110.0, 64, 64)?],
        geometry: Geometry::Spheres(spheres),
        ..SceneFile::default()
    })
}

fn shape() -> gaussvis::Result<SceneFile> {
    let fixture = ShapeFixture::two_color(8, 32)?;
    let mut cameras = fixture.cameras.clone();
    cameras.push(fixture.held_out.clone());
    Ok(SceneFile {
        cameras,
        geometry: Geometry::Spheres(fixture.spheres.clone()),
        optimizer: gaussvis::experiments::shape::shape_optim_config(),
        ..SceneFile::default()
    })
}

fn main() -> gaussvis::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let write = |name: &str, file: &SceneFile| std::fs::write(dir.join(name), serialize_scene(file));
    write("actor.scene", &actor()?)?;
    write("tracking.scene", &tracking::scene_file(&tracking::RigOptions::default())?)?;
    write("two_sphere.scene", &sweeps::two_sphere(0.1)?.0)?;
    let (shoulder, target) = sweeps::shoulder(0.1)?;
    write("shoulder.scene", &shoulder)?;
    write_image(&dir.join("shoulder_target.pfm"), &target, false)?;
    write("shape.scene", &shape()?)?;
    Ok(())
}
