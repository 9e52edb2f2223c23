//! Synthetic fixtures behind the command-line experiments.

pub mod cutoff;
pub mod gradsuite;
pub mod raycast;
pub mod shape;
pub mod sweeps;
pub mod tracking;
