//! Preconditioned nonlinear conjugate gradients (Polak-Ribière+) with an
//! Armijo backtracking line search.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::objective::Objective;

/// Something to minimize.
pub trait Problem {
    fn value(&mut self, x: &[f64]) -> Result<f64>;
    fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Problem for Objective<'_> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        Objective::value(self, x)
    }

    fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Objective::value_grad(self, x)
    }
}

/// Adapts a pair of closures to [`Problem`].
pub struct FnProblem<F, G> {
    pub f: F,
    pub fg: G,
}

impl<F, G> Problem for FnProblem<F, G>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }

    fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.fg)(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    /// `1 / max(sqrt(v_i), floor)` with `v` a running mean of squared
    /// gradient components.
    #[default]
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub max_iterations: usize,
    /// Stop when the gradient's Euclidean norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the energy by less than this
    /// fraction of its magnitude (0 disables).
    pub rel_tol: f64,
    /// Trial step of the first line search.
    pub initial_step: f64,
    /// Upper bound on any trial step.
    pub max_step: f64,
    /// Upper bound on `max_i |alpha d_i|` for any trial point.
    pub max_displacement: f64,
    /// Sufficient-decrease constant `c1`.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Reset to the preconditioned steepest descent direction every this
    /// many iterations; `None` uses `dim(theta)`.
    pub restart_interval: Option<usize>,
    pub preconditioner: Preconditioner,
    /// Decay of the squared-gradient average.
    pub decay: f64,
    pub precond_floor: f64,
    /// Keep every `n`-th parameter vector in the trace (0 keeps none).
    pub snapshot_every: usize,
    /// Recorded in the trace; the minimizer itself is deterministic.
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            grad_tol: 1e-10,
            rel_tol: 0.0,
            initial_step: 1e-2,
            max_step: 1e6,
            max_displacement: f64::INFINITY,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            restart_interval: None,
            preconditioner: Preconditioner::Diagonal,
            decay: 0.9,
            precond_floor: 1e-8,
            snapshot_every: 0,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || !(self.rel_tol >= 0.0) {
            return Err(Error::field("optimizer.tolerance", "must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::field("optimizer.backtrack", "must lie in (0, 1)"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::field("optimizer.armijo", "must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0) || !(self.max_step >= self.initial_step) {
            return Err(Error::field("optimizer.step", "need 0 < initial_step <= max_step"));
        }
        if !(self.max_displacement > 0.0) {
            return Err(Error::field("optimizer.max_displacement", "must be positive"));
        }
        if !(self.decay >= 0.0 && self.decay < 1.0) || !(self.precond_floor > 0.0) {
            return Err(Error::field("optimizer.preconditioner", "decay in [0, 1), floor > 0"));
        }
        if self.restart_interval == Some(0) {
            return Err(Error::field("optimizer.restart", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
    /// Accepted step length along the search direction (0 for the initial row).
    pub step: f64,
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    GradientTolerance,
    EnergyTolerance,
    MaxIterations,
    /// No sufficient decrease even along the steepest descent direction.
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    pub records: Vec<IterationRecord>,
    pub status: Status,
    pub evaluations: usize,
    pub seed: u64,
}

impl OptimTrace {
    pub fn final_energy(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.energy)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,energy,grad_norm,step\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{:e},{:e},{:e}", r.iteration, r.energy, r.grad_norm, r.step);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub energy: f64,
    pub trace: OptimTrace,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

/// Outcome of one line search: step and energy at the accepted point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineStep {
    pub alpha: f64,
    pub energy: f64,
    pub evaluations: usize,
}

/// Minimizer of the quadratic through `f(0) = f0`, `f'(0) = slope`,
/// `f(alpha) = fa`, if it curves upward.
fn quadratic_minimizer(f0: f64, slope: f64, alpha: f64, fa: f64) -> Option<f64> {
    let curvature = fa - f0 - slope * alpha;
    (curvature > 0.0).then(|| -slope * alpha * alpha / (2.0 * curvature))
}

/// Backtracking search along `d` from `x` (energy `f0`, directional
/// derivative `slope < 0`). After the first trial, the quadratic model's
/// minimizer is also probed; the lower of the two Armijo-satisfying points is
/// kept. Returns `None` if no trial gives sufficient decrease.
pub fn armijo_line_search<P: Problem + ?Sized>(
    problem: &mut P,
    x: &[f64],
    d: &[f64],
    f0: f64,
    slope: f64,
    alpha0: f64,
    config: &OptimConfig,
) -> Result<Option<LineStep>> {
    let armijo_ok = |alpha: f64, f: f64| f <= f0 + config.armijo * alpha * slope;
    let reach = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cap = config.max_step.min(config.max_displacement / reach);
    let mut evaluations = 0;
    let mut alpha = alpha0.min(cap);
    for attempt in 0..=config.max_backtracks {
        let fa = problem.value(&axpy(x, alpha, d))?;
        evaluations += 1;
        let model = if fa.is_finite() {
            quadratic_minimizer(f0, slope, alpha, fa)
        } else {
            None
        };
        if fa.is_finite() && armijo_ok(alpha, fa) {
            let mut best = LineStep {
                alpha,
                energy: fa,
                evaluations,
            };
            if attempt == 0 {
                if let Some(m) = model.map(|m| m.min(cap)) {
                    if m > 0.0 && (m - alpha).abs() > 1e-3 * alpha {
                        let fm = problem.value(&axpy(x, m, d))?;
                        evaluations += 1;
                        if fm.is_finite() && armijo_ok(m, fm) && fm < fa {
                            best = LineStep {
                                alpha: m,
                                energy: fm,
                                evaluations,
                            };
                        }
                    }
                }
            }
            best.evaluations = evaluations;
            return Ok(Some(best));
        }
        let lo = 0.1 * alpha;
        let hi = config.backtrack * alpha;
        alpha = match model {
            Some(m) if m.is_finite() => m.clamp(lo, hi),
            _ => hi,
        };
        if alpha == 0.0 {
            break;
        }
    }
    Ok(None)
}

fn precondition(p: &[f64], g: &[f64]) -> Vec<f64> {
    p.iter().zip(g).map(|(a, b)| a * b).collect()
}

/// Minimizes `problem` from `theta0`.
pub fn minimize<P: Problem + ?Sized>(problem: &mut P, theta0: &[f64], config: &OptimConfig) -> Result<OptimResult> {
    config.validate()?;
    let n = theta0.len();
    let restart = config.restart_interval.unwrap_or(n.max(1));
    let mut x = theta0.to_vec();
    let (mut f, mut g) = problem.value_grad(&x)?;
    if !f.is_finite() || !finite(&g) {
        return Err(Error::Optimizer {
            iteration: 0,
            reason: format!("non-finite objective or gradient at the start (energy {f})"),
        });
    }
    let mut evaluations = 1;
    let snapshot = |it: usize, x: &[f64]| {
        (config.snapshot_every > 0 && it.is_multiple_of(config.snapshot_every)).then(|| x.to_vec())
    };
    let mut records = vec![IterationRecord {
        iteration: 0,
        energy: f,
        grad_norm: norm(&g),
        step: 0.0,
        theta: snapshot(0, &x),
    }];

    let mut sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    let weights = |sq: &[f64]| -> Vec<f64> {
        match config.preconditioner {
            Preconditioner::None => vec![1.0; n],
            Preconditioner::Diagonal => sq.iter().map(|v| 1.0 / v.sqrt().max(config.precond_floor)).collect(),
        }
    };
    let mut pw = weights(&sq);
    let mut s = precondition(&pw, &g);
    let mut d: Vec<f64> = s.iter().map(|v| -v).collect();
    let mut prev_alpha = config.initial_step;
    let mut prev_slope: Option<f64> = None;
    let mut since_restart = 0;
    let mut status = Status::MaxIterations;

    for it in 1..=config.max_iterations {
        if norm(&g) < config.grad_tol {
            status = Status::GradientTolerance;
            break;
        }
        let mut slope = dot(&g, &d);
        let mut steepest = since_restart == 0;
        if !(slope < 0.0) {
            d = s.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            steepest = true;
            since_restart = 0;
        }
        let alpha0 = match prev_slope {
            Some(ps) => (prev_alpha * ps / slope).clamp(1e-12, config.max_step),
            None => config.initial_step,
        };
        let mut found = armijo_line_search(problem, &x, &d, f, slope, alpha0, config)?;
        if found.is_none() && !steepest {
            d = s.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            since_restart = 0;
            found = armijo_line_search(problem, &x, &d, f, slope, config.initial_step, config)?;
        }
        let Some(step) = found else {
            status = Status::LineSearchFailed;
            break;
        };
        evaluations += step.evaluations;
        let x_new = axpy(&x, step.alpha, &d);
        let (f_new, g_new) = problem.value_grad(&x_new)?;
        evaluations += 1;
        if !f_new.is_finite() || !finite(&g_new) {
            status = Status::NonFinite;
            break;
        }
        let decrease = f - f_new;

        if config.preconditioner == Preconditioner::Diagonal {
            for (v, gi) in sq.iter_mut().zip(&g_new) {
                *v = config.decay * *v + (1.0 - config.decay) * gi * gi;
            }
            pw = weights(&sq);
        }
        let s_new = precondition(&pw, &g_new);
        since_restart += 1;
        let beta = if since_restart >= restart {
            since_restart = 0;
            0.0
        } else {
            let num: f64 = g_new.iter().zip(s_new.iter().zip(&s)).map(|(gi, (a, b))| gi * (a - b)).sum();
            (num / dot(&g, &s)).max(0.0)
        };
        d = s_new.iter().zip(&d).map(|(si, di)| -si + beta * di).collect();

        prev_alpha = step.alpha;
        prev_slope = Some(slope);
        x = x_new;
        f = f_new;
        g = g_new;
        s = s_new;
        records.push(IterationRecord {
            iteration: it,
            energy: f,
            grad_norm: norm(&g),
            step: step.alpha,
            theta: snapshot(it, &x),
        });
        if config.rel_tol > 0.0 && decrease <= config.rel_tol * f.abs().max(f64::MIN_POSITIVE) {
            status = Status::EnergyTolerance;
            break;
        }
    }
    if status == Status::MaxIterations && norm(&g) < config.grad_tol {
        status = Status::GradientTolerance;
    }
    Ok(OptimResult {
        theta: x,
        energy: f,
        trace: OptimTrace {
            records,
            status,
            evaluations,
            seed: config.seed,
        },
    })
}
