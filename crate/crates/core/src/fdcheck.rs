//! Central-difference gradient verification.

use std::fmt;

/// Step ladder and pass thresholds for [`fd_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    /// Base step; the actual step for component `i` is `step * max(1, |x_i|)`.
    pub step: f64,
    /// Number of rungs `h, h/2, h/4, ...`.
    pub rungs: usize,
    pub rel_tol: f64,
    /// Below this magnitude (analytic and numeric) the absolute test applies.
    pub abs_floor: f64,
    pub abs_tol: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rungs: 3,
            rel_tol: 1e-4,
            abs_floor: 1e-6,
            abs_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdEntry {
    pub index: usize,
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric| / |numeric|` at the best rung.
    pub rel_error: f64,
    pub abs_error: f64,
    /// Both values were below the absolute-test floor.
    pub tiny: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    /// The function returned NaN/inf at some probe point.
    pub non_finite: bool,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        !self.non_finite && self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !(e.tiny && e.passed))
            .map(|e| e.rel_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&FdEntry> {
        self.entries.iter().max_by(|a, b| {
                (!a.passed, a.rel_error)
                    .partial_cmp(&(!b.passed, b.rel_error))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    }

    pub fn merge(&mut self, other: FdReport) {
        self.non_finite |= other.non_finite;
        self.entries.extend(other.entries);
    }
}

impl fmt::Display for FdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>16} {:>16} {:>12} {:>6}",
            "parameter", "analytic", "numeric", "rel.error", "ok"
        )?;
        for e in &self.entries {
            writeln!(
                f,
                "{:<24} {:>16.8e} {:>16.8e} {:>12.3e} {:>6}",
                e.label,
                e.analytic,
                e.numeric,
                e.rel_error,
                if e.passed { "yes" } else { "NO" }
            )?;
        }
        if self.non_finite {
            writeln!(f, "non-finite function value encountered")?;
        }
        Ok(())
    }
}

/// Compares `gradient` (analytic, at `point`) against central differences of
/// `function`, component by component, keeping the best of the step rungs.
pub fn fd_check<F>(
    mut function: F,
    gradient: &[f64],
    point: &[f64],
    labels: Option<&[String]>,
    options: &FdOptions,
) -> FdReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(gradient.len(), point.len());
    let mut report = FdReport::default();
    let mut x = point.to_vec();
    for i in 0..point.len() {
        let base = options.step * point[i].abs().max(1.0);
        let analytic = gradient[i];
        let mut best: Option<(f64, f64)> = None; // (numeric, abs error)
        for rung in 0..options.rungs.max(1) {
            let h = base / f64::from(1u32 << rung.min(30));
            x[i] = point[i] + h;
            let fp = function(&x);
            x[i] = point[i] - h;
            let fm = function(&x);
            x[i] = point[i];
            if !fp.is_finite() || !fm.is_finite() {
                report.non_finite = true;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let err = (analytic - numeric).abs();
            if best.is_none_or(|(_, e)| err < e) {
                best = Some((numeric, err));
            }
        }
        let (numeric, abs_error) = best.unwrap_or((f64::NAN, f64::NAN));
        let rel_error = if numeric == 0.0 {
            if abs_error == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            abs_error / numeric.abs()
        };
        let small = analytic.abs().max(numeric.abs()) < options.abs_floor;
        let passed = analytic.is_finite()
            && abs_error.is_finite()
            && (rel_error < options.rel_tol || (small && abs_error < options.abs_tol));
        report.entries.push(FdEntry {
            index: i,
            label: labels
                .and_then(|l| l.get(i).cloned())
                .unwrap_or_else(|| format!("x[{i}]")),
            analytic,
            numeric,
            rel_error,
            abs_error,
            tiny: small,
            passed,
        });
    }
    report
}
