use std::fmt::Write;
use std::path::PathBuf;

use anyhow::Result;
use gaussvis::energy::DataTerm;
use gaussvis::experiments::gradsuite::{check_case, check_objective, perturbed, random_cases};
use gaussvis::{render, FdOptions, FdReport, Mapping, Objective, View};

use crate::common::{emit, load_views, Energy, Failed, SceneArgs};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Check this scene around its pose; without it, random scenes are drawn.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub samples: Option<String>,
    /// Data term (scene checks).
    #[arg(long, value_enum)]
    pub energy: Option<Energy>,
    /// Target image per camera (default: the scene rendered at its pose).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<PathBuf>,
    /// Per-pixel weights (greyscale PFM) for every target.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of checks.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Pose perturbation for scene checks.
    #[arg(long, default_value_t = 0.05)]
    pub spread: f64,
    /// CSV summary (default: table on standard output only).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Harness self-test: scale the first analytic gradient component.
    #[arg(long, hide = true)]
    pub inject_fault: Option<f64>,
}

fn worst_line(report: &FdReport) -> String {
    match report.worst() {
        Some(e) => format!(
            "{} analytic {:e} numeric {:e} rel {:e}",
            e.label, e.analytic, e.numeric, e.rel_error
        ),
        None => "non-finite energy".into(),
    }
}

pub fn run(args: Args) -> Result<()> {
    let options = FdOptions::default();
    let mut reports: Vec<(String, FdReport)> = Vec::new();
    match args.scene.clone() {
        None => {
            for (i, case) in random_cases(args.count, args.seed)?.into_iter().enumerate() {
                let report = check_case(&case, &options, args.inject_fault)?;
                reports.push((format!("{i}: {}", case.describe()), report));
            }
        }
        Some(scene) => {
            let scene_args = SceneArgs {
                scene,
                m: args.m,
                cutoff: args.cutoff,
                samples: args.samples.clone(),
                energy: args.energy,
                max_iterations: None,
            };
            let mut file = scene_args.load()?;
            let template = file.build_scene()?;
            let mapping = file.mapping.clone().unwrap_or(Mapping::Free { coupled: false });
            mapping.validate(&template)?;
            let pose = file.pose.clone().unwrap_or_else(|| mapping.identity(&template));
            let mut views = load_views(&mut file, &args.targets, args.weights.as_deref())?;
            if views.is_empty() {
                let posed = gaussvis::apply_mapping(&mapping, &pose, &template)?;
                views = file
                    .cameras
                    .iter()
                    .map(|c| View::new(c.clone(), render(&posed, c, &file.samples)))
                    .collect::<gaussvis::Result<_>>()?;
            }
            let objective = Objective::new(&template, &mapping, &views, &file.energy);
            let term = match file.energy.term {
                DataTerm::Pc => "pc",
                DataTerm::Mc => "mc",
            };
            for (i, theta) in perturbed(&pose, args.count, args.spread, args.seed).iter().enumerate() {
                let report = check_objective(&objective, theta, &options, args.inject_fault)?;
                reports.push((format!("{i}: {term} scene"), report));
            }
        }
    }

    let mut table = format!("{:<32} {:>6} {:>12} {:>6}\n", "check", "params", "max.rel.err", "ok");
    let mut csv = String::from("check,description,parameters,max_rel_error,passed\n");
    let mut failed = 0;
    for (i, (name, r)) in reports.iter().enumerate() {
        let ok = r.passed();
        failed += usize::from(!ok);
        let _ = writeln!(
            table,
            "{:<32} {:>6} {:>12.3e} {:>6}",
            name,
            r.entries.len(),
            r.max_rel_error(),
            if ok { "yes" } else { "NO" }
        );
        let desc = name.split_once(": ").map_or(name.as_str(), |(_, d)| d);
        let _ = writeln!(csv, "{i},{desc},{},{:e},{ok}", r.entries.len(), r.max_rel_error());
    }
    print!("{table}");
    if let Some(out) = &args.out {
        emit(Some(out), &csv)?;
    }
    println!("{} of {} checks passed", reports.len() - failed, reports.len());
    if failed > 0 {
        let (name, worst) = reports
            .iter()
            .filter(|(_, r)| !r.passed())
            .max_by(|a, b| a.1.max_rel_error().total_cmp(&b.1.max_rel_error()))
            .expect("a failed check");
        return Err(Failed(format!("gradient check failed; worst: check {name}, {}", worst_line(worst))).into());
    }
    Ok(())
}
