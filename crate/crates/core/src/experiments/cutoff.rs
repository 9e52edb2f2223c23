//! Effect of dropping faint projected Gaussians on the tracking rig.

use super::tracking::{center_errors, tracking_optim_config, RigOptions, TrackRun, TrackingRig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CutoffReport {
    /// Largest per-channel difference between the target renders.
    pub render_diff: f64,
    /// Per-object distance between the two endpoints over the object's size.
    pub endpoint_shift: Vec<f64>,
    pub with_cutoff: TrackRun,
    pub without_cutoff: TrackRun,
}

/// Tracks from the named manual start twice, with `options.cutoff` and with
/// no exclusion at all.
pub fn cutoff_impact(options: &RigOptions, start: &str) -> Result<CutoffReport> {
    let on = TrackingRig::new(options)?;
    let off = TrackingRig::new(&RigOptions { cutoff: 0.0, ..*options })?;
    let init = on
        .manual_inits()
        .into_iter()
        .find(|(name, _)| *name == start)
        .map(|(_, theta)| theta)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown start `{start}`")))?;
    let config = tracking_optim_config();
    let with_cutoff = on.run(&init, &config)?;
    let without_cutoff = off.run(&init, &config)?;
    Ok(CutoffReport {
        render_diff: on.target().max_abs_diff(off.target()),
        endpoint_shift: center_errors(&on.mapping, &with_cutoff.theta, &without_cutoff.theta, &on.sizes),
        with_cutoff,
        without_cutoff,
    })
}
