use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use gaussvis::energy::{DataTerm, PixelWeighting};
use gaussvis::io::{parse_scene, read_image, read_weights, SceneFile};
use gaussvis::{SampleScheme, View};

/// A check or optimization that ran but did not pass (exit code 1).
#[derive(Debug)]
pub struct Failed(pub String);

impl fmt::Display for Failed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failed {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Energy {
    Pc,
    Mc,
}

/// Scene file plus the overrides every command accepts.
#[derive(Debug, clap::Args)]
pub struct SceneArgs {
    /// Scene description file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Smoothness level used to calibrate `[sphere]` geometry.
    #[arg(long)]
    pub m: Option<f64>,
    /// Projected-magnitude cutoff (0 keeps every Gaussian).
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Sample offsets, e.g. `-4..0` or `-4,-2,0`.
    #[arg(long, allow_hyphen_values = true)]
    pub samples: Option<String>,
    /// Data term.
    #[arg(long, value_enum)]
    pub energy: Option<Energy>,
    /// Optimizer iteration limit.
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

impl SceneArgs {
    pub fn load(&self) -> Result<SceneFile> {
        let text = std::fs::read_to_string(&self.scene)
            .with_context(|| format!("cannot read {}", self.scene.display()))?;
        let mut file = parse_scene(&text).with_context(|| format!("in {}", self.scene.display()))?;
        if let Some(m) = self.m {
            if !(m > 0.0 && m < 1.0) {
                bail!("--m must lie in (0, 1)");
            }
            file.smoothness = m;
        }
        if let Some(c) = self.cutoff {
            if !(c >= 0.0) {
                bail!("--cutoff must be nonnegative");
            }
            file.cutoff = c;
        }
        if let Some(spec) = &self.samples {
            file.samples = SampleScheme::new(SampleScheme::parse_offsets(spec)?, file.samples.step)?;
        }
        if let Some(e) = self.energy {
            file.energy.term = match e {
                Energy::Pc => DataTerm::Pc,
                Energy::Mc => DataTerm::Mc,
            };
        }
        if let Some(n) = self.max_iterations {
            file.optimizer.max_iterations = n;
        }
        file.energy.samples = file.samples.clone();
        Ok(file)
    }
}

/// Pairs `images[i]` with camera `i` of `file`. A weight map, if given, is
/// attached to every image and switches the energy to per-pixel weighting.
pub fn load_views(file: &mut SceneFile, images: &[PathBuf], weights: Option<&Path>) -> Result<Vec<View>> {
    if images.len() > file.cameras.len() {
        bail!("{} images for {} cameras", images.len(), file.cameras.len());
    }
    let weights = match weights {
        Some(p) => {
            file.energy.weighting = PixelWeighting::PerPixel;
            Some(read_weights(p).with_context(|| format!("cannot read {}", p.display()))?)
        }
        None => None,
    };
    images
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let mut image = read_image(path).with_context(|| format!("cannot read {}", path.display()))?;
            if let Some((w, h, values)) = &weights {
                if (*w, *h) != (image.width, image.height) {
                    bail!("weights are {w}x{h}, {} is {}x{}", path.display(), image.width, image.height);
                }
                image = image.with_weights(values.clone())?;
            }
            let view = View::new(file.cameras[i].clone(), image).with_context(|| format!("{}", path.display()))?;
            Ok(view)
        })
        .collect()
}

/// Writes `text` to `out`, or to standard output.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `lo:hi`.
pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    if !(lo <= hi) {
        return Err("lo must not exceed hi".into());
    }
    Ok((lo, hi))
}

pub fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
