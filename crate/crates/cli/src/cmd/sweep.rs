use std::fmt::Write;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use gaussvis::experiments::sweeps::{linspace, run_sweep, Probe};
use gaussvis::{apply_mapping, render, Mapping, View};

use crate::common::{emit, load_views, parse_range, SceneArgs};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Index into the pose vector.
    #[arg(long)]
    pub param: usize,
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub range: (f64, f64),
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Target image per camera (default: the scene rendered at its pose).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<PathBuf>,
    /// Per-pixel weights (greyscale PFM) for every target.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Also record the visibility of template Gaussian `g` at pixel `x,y` of
    /// camera 0.
    #[arg(long, value_parser = parse_probe)]
    pub probe: Option<Probe>,
    /// CSV output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_probe(s: &str) -> Result<Probe, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("malformed probe `{s}`"))?;
    match v[..] {
        [x, y, gaussian] => Ok(Probe { x, y, gaussian }),
        _ => Err("expected x,y,gaussian".into()),
    }
}

pub fn run(args: Args) -> Result<()> {
    let mut file = args.scene.load()?;
    let mut views = load_views(&mut file, &args.targets, args.weights.as_deref())?;
    if views.is_empty() {
        let template = file.build_scene()?;
        let mapping = file.mapping.clone().unwrap_or(Mapping::Free { coupled: false });
        let pose = file.pose.clone().unwrap_or_else(|| mapping.identity(&template));
        let posed = apply_mapping(&mapping, &pose, &template)?;
        views = file
            .cameras
            .iter()
            .map(|c| View::new(c.clone(), render(&posed, c, &file.samples)))
            .collect::<gaussvis::Result<_>>()?;
    }
    if views.is_empty() {
        return Err(anyhow!("the scene file defines no camera"));
    }
    let values = linspace(args.range.0, args.range.1, args.steps);
    let rows = run_sweep(&file, &views, args.param, &values, args.probe)?;
    let mut csv = String::from("value,energy,visibility\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let _ = writeln!(csv, "{},{},{}", r.value, cell(r.energy), cell(r.visibility));
    }
    emit(args.out.as_deref(), &csv)
}
