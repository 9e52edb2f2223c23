//! `gaussvis`: render, verify, calibrate, track, estimate shape and sweep.
//!
//! Exit codes: 0 success, 1 failed check or aborted optimization, 2 usage or
//! I/O error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cmd;
mod common;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::Failed;

#[derive(Debug, Parser)]
#[command(name = "gaussvis", version, about = "Translucent Gaussian scene model tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render one camera of a scene file to a PPM or PFM image.
    Render(cmd::render::Args),
    /// Compare analytic energy gradients with central differences.
    Gradcheck(cmd::gradcheck::Args),
    /// Calibrate Gaussians against reference spheres.
    Calibrate(cmd::calibrate::Args),
    /// Track rigid objects through frames, or from random starts.
    Track(cmd::track::Args),
    /// Fit free Gaussians to silhouettes and assign albedos.
    Shape(cmd::shape::Args),
    /// Sweep one parameter and record energy and visibility.
    Sweep(cmd::sweep::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    let result = match cli.command {
        Command::Render(a) => cmd::render::run(a),
        Command::Gradcheck(a) => cmd::gradcheck::run(a),
        Command::Calibrate(a) => cmd::calibrate::run(a),
        Command::Track(a) => cmd::track::run(a),
        Command::Shape(a) => cmd::shape::run(a),
        Command::Sweep(a) => cmd::sweep::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Failed>().is_some() {
        return 1;
    }
    match e.downcast_ref::<gaussvis::Error>() {
        Some(gaussvis::Error::Optimizer { .. } | gaussvis::Error::Calibration { .. }) => 1,
        _ => 2,
    }
}
