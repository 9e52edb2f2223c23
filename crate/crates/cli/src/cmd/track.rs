use std::fmt::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use gaussvis::experiments::tracking::{random_starts_within, BatchSummary, TrackRun, TrackingRig, START_SPREAD};
use gaussvis::io::SceneFile;
use gaussvis::optimizer::Status;
use gaussvis::{minimize, Mapping, Objective};

use crate::common::{emit, join, load_views, Failed, SceneArgs};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Images of one frame, one per camera; repeat the flag per frame.
    #[arg(long)]
    pub frames: Vec<String>,
    /// Per-pixel weights (greyscale PFM) for every image.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Explicit starting pose (comma-separated); repeatable in batch mode.
    #[arg(long, allow_hyphen_values = true)]
    pub init: Vec<String>,
    /// Batch mode: number of random starts around the file's pose.
    #[arg(long)]
    pub inits: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Half-widths of the random translation offsets.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub spread: Option<Vec<f64>>,
    /// Per-frame (or per-run) CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optimizer trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_pose(s: &str, dim: usize) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| anyhow::anyhow!("malformed pose `{s}`"))?;
    if v.len() != dim {
        bail!("pose has {} values, the mapping needs {dim}", v.len());
    }
    Ok(v)
}

fn frame_paths(frame: &str) -> Vec<PathBuf> {
    frame.split(',').map(|p| PathBuf::from(p.trim())).collect()
}

fn trace_rows(csv: &mut String, key: usize, run: &gaussvis::OptimTrace) {
    for r in &run.records {
        let _ = writeln!(csv, "{key},{},{:e},{:e},{:e}", r.iteration, r.energy, r.grad_norm, r.step);
    }
}

pub fn run(args: Args) -> Result<()> {
    let mut file = args.scene.load()?;
    if args.inits.is_some() {
        batch(&args, &mut file)
    } else {
        sequence(&args, &mut file)
    }
}

fn batch(args: &Args, file: &mut SceneFile) -> Result<()> {
    let target = match args.frames.first() {
        Some(frame) => {
            let views = load_views(file, &frame_paths(frame), args.weights.as_deref())?;
            views.into_iter().next().map(|v| v.image)
        }
        None => None,
    };
    let rig = TrackingRig::from_file(file, target)?;
    let dim = rig.truth.len();
    let mut starts: Vec<(&str, Vec<f64>)> = Vec::new();
    for s in &args.init {
        starts.push(("manual", parse_pose(s, dim)?));
    }
    let spread = match &args.spread {
        Some(v) => [v[0], v[1], v[2]],
        None => START_SPREAD,
    };
    for theta in random_starts_within(&rig, args.inits.unwrap_or(0), args.seed, &spread) {
        starts.push(("random", theta));
    }

    let objects = rig.sizes.len();
    let mut csv = String::from("run,start,success,energy,iterations,status");
    for i in 0..objects {
        let _ = write!(csv, ",error_{i}");
    }
    for label in rig.mapping.labels(&rig.template) {
        let _ = write!(csv, ",{label}");
    }
    csv.push('\n');
    let mut traces = String::from("run,iteration,energy,grad_norm,step\n");
    let mut runs: Vec<TrackRun> = Vec::new();
    for (i, (kind, init)) in starts.iter().enumerate() {
        let run = rig.run(init, &file.optimizer)?;
        let _ = writeln!(
            csv,
            "{i},{kind},{},{:e},{},{:?},{},{}",
            run.success,
            run.energy,
            run.trace.iterations(),
            run.trace.status,
            join(&run.errors),
            join(&run.theta)
        );
        trace_rows(&mut traces, i, &run.trace);
        runs.push(run);
    }
    emit(args.out.as_deref(), &csv)?;
    if let Some(p) = &args.trace {
        emit(Some(p), &traces)?;
    }
    let summary = BatchSummary::from_runs(&runs);
    let mean = if summary.successes > 0 { join(&summary.mean_errors) } else { "n/a".into() };
    eprintln!(
        "{} of {} runs succeeded ({:.3}); mean center error over successes: {mean}",
        summary.successes,
        summary.runs,
        summary.success_rate(),
    );
    Ok(())
}

fn sequence(args: &Args, file: &mut SceneFile) -> Result<()> {
    if args.frames.is_empty() {
        bail!("give --frames for tracking, or --inits for a batch of random starts");
    }
    let template = file.build_scene()?;
    let mapping = file.mapping.clone().unwrap_or(Mapping::Free { coupled: false });
    mapping.validate(&template)?;
    let dim = mapping.arity(&template);
    let mut theta = match args.init.first() {
        Some(s) => parse_pose(s, dim)?,
        None => file.pose.clone().unwrap_or_else(|| mapping.identity(&template)),
    };
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut csv = String::from("frame,energy,iterations,status");
    for label in mapping.labels(&template) {
        let _ = write!(csv, ",{label}");
    }
    csv.push('\n');
    let mut traces = String::from("frame,iteration,energy,grad_norm,step\n");
    let mut aborted = None;
    for (f, frame) in args.frames.iter().enumerate() {
        let views = load_views(file, &frame_paths(frame), args.weights.as_deref())?;
        let mut objective = Objective::new(&template, &mapping, &views, &file.energy);
        objective.history = history.clone();
        let res = minimize(&mut objective, &theta, &file.optimizer)?;
        let _ = writeln!(
            csv,
            "{f},{:e},{},{:?},{}",
            res.energy,
            res.trace.iterations(),
            res.trace.status,
            join(&res.theta)
        );
        trace_rows(&mut traces, f, &res.trace);
        if res.trace.status == Status::NonFinite && aborted.is_none() {
            aborted = Some(f);
        }
        history.push(res.theta.clone());
        theta = res.theta;
    }
    emit(args.out.as_deref(), &csv)?;
    if let Some(p) = &args.trace {
        emit(Some(p), &traces)?;
    }
    if let Some(f) = aborted {
        return Err(Failed(format!("optimization hit a non-finite energy at frame {f}")).into());
    }
    Ok(())
}
