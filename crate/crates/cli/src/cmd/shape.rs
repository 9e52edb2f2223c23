use std::fmt::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use gaussvis::experiments::shape::{albedo_errors, estimate_shape, iou, model_mask, seed_scene, ShapeFixture};
use gaussvis::io::{serialize_scene, Geometry, SceneFile};
use gaussvis::{Vec3, View};

use crate::common::{emit, load_views, SceneArgs};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Cameras, optimizer settings and (without `--silhouettes`) the
    /// `[sphere]` target rendered into synthetic views.
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Silhouette image per fitting camera.
    #[arg(long, value_delimiter = ',')]
    pub silhouettes: Vec<PathBuf>,
    /// Color image per fitting camera, for the albedos.
    #[arg(long, value_delimiter = ',')]
    pub colors: Vec<PathBuf>,
    /// Number of seed Gaussians.
    #[arg(long, default_value_t = 50)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Radius of the sphere each seed is calibrated to.
    #[arg(long, default_value_t = 0.12)]
    pub radius: f64,
    /// Half-widths of the origin-centered box seeds are drawn from.
    #[arg(long = "box", value_delimiter = ',', num_args = 3)]
    pub seed_box: Option<Vec<f64>>,
    /// Camera left out of the fit and used to score the silhouette.
    #[arg(long)]
    pub held_out: Option<usize>,
    /// Output scene file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optimizer trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn output_file(file: &SceneFile, gaussians: Vec<gaussvis::Gaussian>) -> SceneFile {
    SceneFile {
        smoothness: file.smoothness,
        cutoff: file.cutoff,
        samples: file.samples.clone(),
        cameras: file.cameras.clone(),
        geometry: Geometry::Gaussians(gaussians),
        ..SceneFile::default()
    }
}

/// Largest absolute coordinate of any sphere surface, per axis.
fn sphere_extent(fixture: Option<&ShapeFixture>) -> Vec3 {
    match fixture {
        Some(f) if !f.spheres.is_empty() => f
            .spheres
            .iter()
            .fold(Vec3::zeros(), |m, s| m.sup(&(s.center.abs() + Vec3::repeat(s.radius)))),
        _ => Vec3::repeat(1.0),
    }
}

pub fn run(args: Args) -> Result<()> {
    let file = args.scene.load()?;
    if let Some(h) = args.held_out {
        file.camera(h)?;
    }
    let mut fit = file.clone();
    fit.cameras = file
        .cameras
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != args.held_out)
        .map(|(_, c)| c.clone())
        .collect();
    if fit.cameras.is_empty() {
        bail!("no cameras to fit");
    }

    if args.seeds == 0 {
        eprintln!("warning: no seed Gaussians; writing an empty scene");
        return emit(Some(&args.out), &serialize_scene(&output_file(&file, Vec::new())));
    }

    let fixture = match &file.geometry {
        Geometry::Spheres(s) if !s.is_empty() => Some(ShapeFixture {
            spheres: s.clone(),
            cameras: fit.cameras.clone(),
            held_out: args.held_out.map_or_else(|| fit.cameras[0].clone(), |h| file.cameras[h].clone()),
            seed_box: Vec3::zeros(),
        }),
        _ => None,
    };
    let (silhouettes, colors) = if args.silhouettes.is_empty() {
        let Some(f) = &fixture else {
            bail!("give --silhouettes, or a scene file with [sphere] targets");
        };
        (f.silhouette_views()?, f.color_views()?)
    } else {
        let silhouettes = load_views(&mut fit, &args.silhouettes, None)?;
        let colors = load_views(&mut fit, &args.colors, None)?
            .into_iter()
            .zip(&silhouettes)
            .map(|(c, s)| {
                let mask = s.image.pixels.iter().map(|p| f64::from(u8::from(p.x > 0.5))).collect();
                View::new(c.camera, c.image.with_weights(mask)?)
            })
            .collect::<gaussvis::Result<Vec<_>>>()?;
        (silhouettes, colors)
    };

    let half = match &args.seed_box {
        Some(b) => Vec3::new(b[0], b[1], b[2]),
        None => sphere_extent(fixture.as_ref()),
    };
    let seed = seed_scene(args.seeds, half, args.radius, file.smoothness, args.seed)?;
    let result = estimate_shape(&seed, &silhouettes, &colors, &file.optimizer)?;

    emit(Some(&args.out), &serialize_scene(&output_file(&file, result.scene.gaussians.clone())))?;
    if let Some(p) = &args.trace {
        emit(Some(p), &result.trace.to_csv())?;
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "initial_energy,{:e}", result.initial_energy);
    let _ = writeln!(summary, "final_energy,{:e}", result.final_energy);
    let _ = writeln!(summary, "reduction,{}", result.reduction());
    let _ = writeln!(summary, "iterations,{}", result.trace.iterations());
    let _ = writeln!(summary, "unseen,{}", result.unseen.len());
    if let Some(f) = &fixture {
        if args.held_out.is_some() {
            let score = iou(&model_mask(&result.scene, &f.held_out), &f.mask(&f.held_out));
            let _ = writeln!(summary, "held_out_iou,{score}");
        }
        if !colors.is_empty() {
            let worst = albedo_errors(&result, f).into_iter().fold(0.0, f64::max);
            let _ = writeln!(summary, "max_albedo_error,{worst}");
        }
    }
    print!("{summary}");
    Ok(())
}
