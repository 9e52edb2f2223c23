use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use gaussvis::io::write_image;
use gaussvis::{apply_mapping, render};

use crate::common::SceneArgs;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 0)]
    pub camera: usize,
    /// Pose to render instead of the file's `[pose]` (comma-separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub pose: Option<Vec<f64>>,
    /// Output image; `.ppm` or `.pfm`.
    #[arg(long)]
    pub out: PathBuf,
    /// Gamma-encode PPM output.
    #[arg(long)]
    pub gamma: bool,
}

pub fn run(args: Args) -> Result<()> {
    let file = args.scene.load()?;
    let mut scene = file.build_scene()?;
    let pose = args.pose.or_else(|| file.pose.clone());
    match (&file.mapping, pose) {
        (Some(mapping), Some(theta)) => scene = apply_mapping(mapping, &theta, &scene)?,
        (None, Some(_)) => bail!("a pose needs an [object] or [free] mapping"),
        _ => {}
    }
    let camera = file.camera(args.camera)?;
    let image = render(&scene, camera, &file.samples);
    write_image(&args.out, &image, args.gamma).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}
