//! Forward–backward sweeps on grid controls: the bang-bang baseline with a
//! supply penalty, and the quadratic-effort variant used for comparison.

use super::switch_times::optimize_switch_times;
use super::{LogEntry, OptResult, OptimizeOptions};
use crate::adjoint::{integrate_costate, CostateOptions};
use crate::error::{Error, Result};
use crate::forward::{
    cost_linear, cost_quadratic, effort_square_series, running_cost_series, simpson, simulate,
    simulate_with, steps_per_week, Control, GridControl, SimOptions, StateTrajectory,
};
use crate::model::Scenario;
use serde::{Deserialize, Serialize};

/// Largest penalty weight the sweep escalates to.
const MU_MAX: f64 = 1e6;
/// Control-change tolerance of a sweep, relative to the rate cap.
const SWEEP_TOL: f64 = 1e-7;
/// "On" targets overshoot the cap so the simulator realizes the exact cap.
const ON_OVERSHOOT: f64 = 1.1;

#[derive(Clone, Copy)]
enum Effort {
    Linear,
    Quadratic(f64),
}

struct Sweep {
    control: GridControl,
    iterations: usize,
    converged: bool,
    mu: f64,
    log: Vec<LogEntry>,
    diagnostics: Vec<String>,
}

fn supply_violation(sc: &Scenario, traj: &StateTrajectory, eps: f64) -> Vec<f64> {
    traj.times
        .iter()
        .zip(&traj.v)
        .map(|(&t, &v)| {
            let d = sc.shipments.smoothed_with(t.min(sc.horizon), eps).unwrap_or(f64::INFINITY);
            (v - d).max(0.0)
        })
        .collect()
}

fn sweep(sc: &Scenario, opts: &OptimizeOptions, effort: Effort) -> Result<Sweep> {
    opts.validate()?;
    sc.validate()?;
    let h = opts.h;
    steps_per_week(h)?;
    let k = sc.groups;
    let eps = sc.shipments.epsilon;
    let mut control = GridControl::zeros(sc, h);
    let nodes = control.nodes();
    let mut mu = opts.penalty_mu;
    let mut omega = opts.damping;
    let mut log = Vec::new();
    let mut best = f64::INFINITY;
    let mut prev_pen = f64::INFINITY;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut flips = 0usize;
    let mut prev_on: Vec<bool> = vec![false; nodes * k];
    let mut iterations = 0;
    let sim = SimOptions {
        h,
        clamp_stock: false,
        bump: None,
    };
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let traj = simulate_with(sc, &Control::Grid(control.clone()), &sim)?;
        let over = supply_violation(sc, &traj, eps);
        let penalty = mu * simpson(&over.iter().map(|o| o * o).collect::<Vec<_>>(), h);
        let base = match effort {
            Effort::Linear => cost_linear(&traj, sc)?,
            Effort::Quadratic(cq) => cost_quadratic(&traj, sc, cq)?,
        };
        let j_pen = base + penalty;
        best = best.min(j_pen);
        log.push(LogEntry {
            start: 0,
            phase: format!("sweep mu={mu:e}"),
            evaluation: it,
            j: j_pen,
            best_j: best,
        });
        if j_pen > prev_pen {
            omega = (omega * 0.5).max(1e-3);
        }
        prev_pen = j_pen;

        let adj = integrate_costate(
            sc,
            &traj,
            &CostateOptions {
                terminal_v: match effort {
                    Effort::Linear => -sc.dose_cost,
                    Effort::Quadratic(_) => 0.0,
                },
                open_loop: true,
                quadratic: match effort {
                    Effort::Linear => None,
                    Effort::Quadratic(cq) => Some(cq),
                },
                penalty: Some((mu, eps)),
            },
        )?;
        let mut change = 0.0f64;
        flips = 0;
        for node in 0..nodes {
            let s = traj.s_at(node);
            let ps = adj.psi_s_at(node);
            let pv = adj.psi_v[node];
            for j in 0..k {
                let n = sc.populations[j];
                let cap = sc.max_rate[j] / s[j];
                let target = match effort {
                    Effort::Linear => {
                        let on = -pv * n + ps[j] < 0.0;
                        if on != prev_on[node * k + j] {
                            flips += 1;
                        }
                        prev_on[node * k + j] = on;
                        if on {
                            ON_OVERSHOOT * cap
                        } else {
                            0.0
                        }
                    }
                    Effort::Quadratic(cq) => {
                        let u = (pv * n - ps[j]) / (2.0 * cq * n * s[j]);
                        if u >= cap {
                            ON_OVERSHOOT * cap
                        } else {
                            u.max(0.0)
                        }
                    }
                };
                let r = &mut control.rates[node * k + j];
                let new = *r + omega * (target - *r);
                // measure change in realized effort, relative to the cap
                let realized = |u: f64| u.min(cap) * s[j] / sc.max_rate[j];
                change = change.max((realized(new) - realized(*r)).abs());
                *r = new;
            }
        }
        last_change = change;
        if change < SWEEP_TOL {
            let worst = over.iter().cloned().fold(0.0, f64::max);
            if worst > 1e-9 * sc.shipments.total().max(1e-300) && mu < MU_MAX {
                mu = (2.0 * mu).min(MU_MAX);
                omega = opts.damping;
                prev_pen = f64::INFINITY;
            } else {
                converged = true;
                break;
            }
        }
    }
    let mut diagnostics = vec![format!(
        "{iterations} sweeps, final penalty weight {mu:e}, last control change {last_change:.3e}"
    )];
    if !converged {
        diagnostics.push(format!(
            "not converged: {flips} node switches flipped in the last sweep, damping {omega:.3e}"
        ));
    }
    Ok(Sweep {
        control,
        iterations,
        converged,
        mu,
        log,
        diagnostics,
    })
}

fn finish(sc: &Scenario, method: &str, s: Sweep, effort: Effort) -> Result<OptResult> {
    // the returned cost is that of the control with the stock clamp enforced
    let traj = simulate(sc, &Control::Grid(s.control.clone()), s.control.h)?;
    let j = match effort {
        Effort::Linear => cost_linear(&traj, sc)?,
        Effort::Quadratic(cq) => cost_quadratic(&traj, sc, cq)?,
    };
    let mut diagnostics = s.diagnostics;
    diagnostics.push(format!("penalty weight reached {:e}", s.mu));
    Ok(OptResult {
        method: method.into(),
        schedule: None,
        grid: Some(s.control),
        j,
        converged: s.converged,
        evaluations: s.iterations,
        log: s.log,
        starts: Vec::new(),
        boundary_active: Vec::new(),
        diagnostics,
    })
}

/// Forward–backward sweep for the linear cost on a grid control.
///
/// The supply constraint is replaced by the penalty
/// `mu * max(0, V - D_eps)^2`; `mu` doubles whenever a sweep settles with
/// the supply still exceeded. The reported `J` re-simulates the final
/// control with the stock clamp.
pub fn fbsm_grid(sc: &Scenario, opts: &OptimizeOptions) -> Result<OptResult> {
    let s = sweep(sc, opts, Effort::Linear)?;
    finish(sc, "fbsm_grid", s, Effort::Linear)
}

/// Sweep for the quadratic effort cost `c_q sum_j int n_j (u_j s_j)^2`; the
/// control update is the closed-form maximizer of the Hamiltonian clipped
/// to `[0, v_j / s_j]`. Returns `J_quad`.
pub fn optimize_quadratic(sc: &Scenario, c_q: f64, opts: &OptimizeOptions) -> Result<OptResult> {
    if !(c_q > 0.0 && c_q.is_finite()) {
        return Err(Error::InvalidOptions(format!("c_q = {c_q} must be positive")));
    }
    let s = sweep(sc, opts, Effort::Quadratic(c_q))?;
    finish(sc, "quadratic", s, Effort::Quadratic(c_q))
}

/// Scales the quadratic weight so that, on the linear optimum, the effort
/// cost equals the dose cost: `c_q = c_v V(T) / sum_j int n_j (u_j s_j)^2`.
pub fn calibrate_quadratic_weight(sc: &Scenario, linear: &StateTrajectory) -> Result<f64> {
    let effort = simpson(&effort_square_series(linear, sc), linear.h);
    let doses = linear.v[linear.nodes() - 1];
    if !(effort > 0.0) || !(doses > 0.0) {
        return Err(Error::InvalidOptions(
            "the linear optimum vaccinates nobody; c_q cannot be calibrated".into(),
        ));
    }
    Ok(sc.dose_cost * doses / effort)
}

/// Aligned series of the linear and quadratic optima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub c_q: f64,
    pub j_lin: f64,
    pub j_quad: f64,
    pub times: Vec<f64>,
    /// Doses per day, `sum_j n_j u_j s_j`.
    pub effort_lin: Vec<f64>,
    pub effort_quad: Vec<f64>,
    /// Infectious proportion of the total population.
    pub infectious_lin: Vec<f64>,
    pub infectious_quad: Vec<f64>,
    pub vaccinated_lin: Vec<f64>,
    pub vaccinated_quad: Vec<f64>,
    /// Cumulative `J_quad(t) - J_lin(t)` (trapezoidal running costs).
    pub cost_difference: Vec<f64>,
    /// Largest change of any rate between consecutive nodes of one week.
    pub max_jump_lin: f64,
    pub max_jump_quad: f64,
    /// `0.5 * max_j,t v_j / s_j(t)` along the quadratic optimum.
    pub jump_threshold: f64,
    pub linear: OptResult,
    pub quadratic: OptResult,
}

impl Comparison {
    /// Builds the series from the two re-simulated optima.
    pub fn from_trajectories(
        sc: &Scenario,
        lin: &StateTrajectory,
        quad: &StateTrajectory,
        c_q: f64,
        linear: OptResult,
        quadratic: OptResult,
    ) -> Result<Self> {
        let effort = |t: &StateTrajectory| -> Vec<f64> {
            (0..t.nodes())
                .map(|k| {
                    let (s, u) = (t.s_at(k), t.u_at(k));
                    (0..sc.groups).map(|j| sc.populations[j] * u[j] * s[j]).sum()
                })
                .collect()
        };
        let infectious = |t: &StateTrajectory| -> Vec<f64> {
            (0..t.nodes()).map(|k| t.infectious_total(&sc.populations, k)).collect()
        };
        let h = lin.h;
        let health_l = running_cost_series(lin, sc);
        let health_q = running_cost_series(quad, sc);
        let effsq_q = effort_square_series(quad, sc);
        let mut diff = Vec::with_capacity(lin.nodes());
        let (mut acc_l, mut acc_q) = (0.0, 0.0);
        for k in 0..lin.nodes() {
            if k > 0 {
                acc_l += 0.5 * h * (health_l[k - 1] + health_l[k]);
                acc_q += 0.5 * h * (health_q[k - 1] + c_q * effsq_q[k - 1] + health_q[k] + c_q * effsq_q[k]);
            }
            diff.push(acc_q - (acc_l + sc.dose_cost * lin.v[k]));
        }
        let threshold = 0.5
            * (0..quad.nodes())
                .flat_map(|k| (0..sc.groups).map(move |j| (k, j)))
                .map(|(k, j)| sc.max_rate[j] / quad.s_at(k)[j])
                .fold(0.0, f64::max);
        Ok(Self {
            c_q,
            j_lin: cost_linear(lin, sc)?,
            j_quad: cost_quadratic(quad, sc, c_q)?,
            times: lin.times.clone(),
            effort_lin: effort(lin),
            effort_quad: effort(quad),
            infectious_lin: infectious(lin),
            infectious_quad: infectious(quad),
            vaccinated_lin: lin.v.clone(),
            vaccinated_quad: quad.v.clone(),
            cost_difference: diff,
            max_jump_lin: max_interior_jump(lin)?,
            max_jump_quad: max_interior_jump(quad)?,
            jump_threshold: threshold,
            linear,
            quadratic,
        })
    }

    /// The four series of both optima as CSV columns.
    pub fn to_csv(&self) -> String {
        let headers: Vec<String> = [
            "time",
            "effort_lin",
            "effort_quad",
            "infectious_lin",
            "infectious_quad",
            "vaccinated_lin",
            "vaccinated_quad",
            "cost_difference",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        crate::export::columns_csv(
            &headers,
            &[
                self.times.clone(),
                self.effort_lin.clone(),
                self.effort_quad.clone(),
                self.infectious_lin.clone(),
                self.infectious_quad.clone(),
                self.vaccinated_lin.clone(),
                self.vaccinated_quad.clone(),
                self.cost_difference.clone(),
            ],
        )
    }
}

/// Largest `|u_j(t_{k+1}) - u_j(t_k)|` over node pairs inside one week.
pub fn max_interior_jump(traj: &StateTrajectory) -> Result<f64> {
    let spw = steps_per_week(traj.h)?;
    let mut worst = 0.0f64;
    for k in 0..traj.nodes() - 1 {
        if (traj.start_node + k + 1) % spw == 0 {
            continue;
        }
        let (a, b) = (traj.u_at(k), traj.u_at(k + 1));
        for j in 0..traj.groups {
            worst = worst.max((b[j] - a[j]).abs());
        }
    }
    Ok(worst)
}

/// Linear optimum (switching times) against the quadratic-effort optimum.
/// Without `c_q` the weight is calibrated on the linear optimum.
pub fn compare_costs(sc: &Scenario, c_q: Option<f64>, opts: &OptimizeOptions) -> Result<Comparison> {
    let linear = optimize_switch_times(sc, opts)?;
    let lin_traj = simulate(sc, &linear.control().expect("schedule"), opts.h)?;
    let c_q = match c_q {
        Some(c) => c,
        None => calibrate_quadratic_weight(sc, &lin_traj)?,
    };
    let quadratic = optimize_quadratic(sc, c_q, opts)?;
    let quad_traj = simulate(sc, &quadratic.control().expect("grid"), opts.h)?;
    Comparison::from_trajectories(sc, &lin_traj, &quad_traj, c_q, linear, quadratic)
}
