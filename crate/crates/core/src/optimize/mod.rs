//! Minimization of the vaccination cost.
//!
//! * [`optimize_switch_times`]: multi-start Nelder–Mead over the per-region,
//!   per-week switching times of bang-bang policies, a compass polish, and a
//!   final stationarity refinement driven by the switching functions.
//! * [`brute_force_switch_grid`]: exhaustive grid oracle for tiny instances.
//! * [`fbsm_grid`]: forward-backward sweep on a grid control with a supply
//!   penalty, as a baseline.
//! * [`optimize_quadratic`] and [`compare_costs`]: the same sweep for a
//!   quadratic vaccination effort, and its comparison with the linear optimum.

mod nelder_mead;
mod oracle;
mod refine;
mod sweep;
mod switch_times;

pub use nelder_mead::{compass_search, nelder_mead, NmOutcome, NmSettings};
pub use oracle::{brute_force_switch_grid, ORACLE_MAX_DIMS};
pub use sweep::{
    calibrate_quadratic_weight, compare_costs, fbsm_grid, max_interior_jump, optimize_quadratic,
    Comparison,
};
pub use refine::{refine_stationary, Refinement};
pub use switch_times::optimize_switch_times;

use crate::error::{Error, Result};
use crate::forward::{cost_linear, simulate, BangSchedule, Control, GridControl};
use crate::model::Scenario;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Tuning knobs shared by all optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Simulation step (days); must tile a week.
    pub h: f64,
    /// Number of multi-start points.
    pub starts: usize,
    /// Evaluation budget per Nelder–Mead run, or sweep iterations.
    pub max_iters: usize,
    /// Switching-time tolerance (days).
    pub tol_tau: f64,
    /// Relative objective tolerance.
    pub tol_j: f64,
    pub seed: u64,
    /// Initial supply-violation penalty weight of the grid methods.
    pub penalty_mu: f64,
    /// Relaxation of the sweep update, in `(0, 1]`.
    pub damping: f64,
    /// Run the switching-function refinement after the derivative-free search.
    pub refine: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            h: 0.01,
            starts: 8,
            max_iters: 600,
            tol_tau: 1e-6,
            tol_j: 1e-10,
            seed: 1,
            penalty_mu: 10.0,
            damping: 0.3,
            refine: true,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        crate::forward::steps_per_week(self.h)?;
        let positive = [
            ("tol_tau", self.tol_tau),
            ("tol_j", self.tol_j),
            ("penalty_mu", self.penalty_mu),
            ("damping", self.damping),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidOptions(format!("{name} = {v} must be positive")));
            }
        }
        if self.damping > 1.0 {
            return Err(Error::InvalidOptions(format!(
                "damping = {} must not exceed 1",
                self.damping
            )));
        }
        if self.starts == 0 || self.max_iters == 0 {
            return Err(Error::InvalidOptions("starts and max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Start index; refinement and sweep phases use their own labels.
    pub start: usize,
    pub phase: String,
    pub evaluation: usize,
    pub j: f64,
    /// Best `j` of this start so far.
    pub best_j: f64,
}

/// Outcome of one multi-start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: usize,
    pub initial_fractions: Vec<f64>,
    pub j: f64,
    pub tau: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

/// Result of any optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub method: String,
    pub schedule: Option<BangSchedule>,
    pub grid: Option<GridControl>,
    /// Cost of the returned policy, re-simulated on the options' grid (for the
    /// quadratic sweep this is the quadratic cost).
    pub j: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub log: Vec<LogEntry>,
    pub starts: Vec<StartSummary>,
    /// `(region, week)` pairs whose switch sits on a week boundary.
    pub boundary_active: Vec<(usize, usize)>,
    pub diagnostics: Vec<String>,
}

impl OptResult {
    pub fn control(&self) -> Option<Control> {
        match (&self.schedule, &self.grid) {
            (Some(s), _) => Some(Control::Bang(s.clone())),
            (None, Some(g)) => Some(Control::Grid(g.clone())),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// Evaluation log as CSV.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("start,phase,evaluation,J,best_J\n");
        for e in &self.log {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.start,
                e.phase,
                e.evaluation,
                crate::export::fmt_num(e.j),
                crate::export::fmt_num(e.best_j)
            );
        }
        out
    }
}

/// `J` of a bang-bang schedule.
pub fn objective(sc: &Scenario, tau: &BangSchedule, h: f64) -> Result<f64> {
    let traj = simulate(sc, &Control::Bang(tau.clone()), h)?;
    cost_linear(&traj, sc)
}

/// `(region, week)` pairs whose switching time lies on a week boundary.
pub fn boundary_active(schedule: &BangSchedule, tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..schedule.groups {
        for w in 0..schedule.weeks {
            let frac = schedule.get(i, w) / crate::model::WEEK - w as f64;
            if frac <= tol || frac >= 1.0 - tol {
                out.push((i, w));
            }
        }
    }
    out
}

/// Lowest `j`, then lexicographically smallest switching times.
pub(crate) fn better(j_a: f64, tau_a: &[f64], j_b: f64, tau_b: &[f64]) -> bool {
    match j_a.total_cmp(&j_b) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            for (a, b) in tau_a.iter().zip(tau_b) {
                match a.total_cmp(b) {
                    std::cmp::Ordering::Less => return true,
                    std::cmp::Ordering::Greater => return false,
                    _ => {}
                }
            }
            false
        }
    }
}
