use std::path::PathBuf;

use anyhow::Result;
use gaussvis::{calibrate_sphere, SampleScheme};

use crate::common::emit;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Sphere radii.
    #[arg(long, value_delimiter = ',', required = true)]
    pub radius: Vec<f64>,
    /// Smoothness levels.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub m: Vec<f64>,
    /// Sample offsets, e.g. `-4..0`.
    #[arg(long, allow_hyphen_values = true)]
    pub samples: Option<String>,
    /// CSV output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let scheme = match &args.samples {
        Some(s) => SampleScheme::new(SampleScheme::parse_offsets(s)?, 1.0)?,
        None => SampleScheme::default(),
    };
    let mut csv = String::from("radius,m,magnitude,sigma,center_residual,inflection_residual\n");
    for &r in &args.radius {
        for &m in &args.m {
            let c = calibrate_sphere(r, m, &scheme)?;
            csv += &format!(
                "{r},{m},{},{},{:e},{:e}\n",
                c.magnitude, c.sigma, c.residuals[0], c.residuals[1]
            );
        }
    }
    emit(args.out.as_deref(), &csv)
}
