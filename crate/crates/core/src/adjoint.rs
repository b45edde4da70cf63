//! Costates of the vaccination problem: backward integration, the supply
//! multiplier `lambda`, the mixed-constraint multipliers `r`, and switching
//! functions.
//!
//! Sign convention: `psi = -grad(cost-to-go)` with `lambda_0 = 1`, so the
//! terminal data are `psi_s(T) = 0`, `psi_x(T) = 0`, `psi_V = -c_v`. Along a
//! bang-bang schedule the rate is realized as the state feedback `u = v / s`
//! on active arcs, so `u s` does not depend on `s` and no control terms enter
//! the `psi_s` equation. Open-loop grid controls add them back on unsaturated
//! pieces.

use crate::error::{Error, Result};
use crate::forward::{
    field_with_rates, steps_per_week, BangSchedule, Control, StateTrajectory, EXHAUSTION_TOL,
};
use crate::isotonic::nonincreasing_fit;
use crate::model::{Scenario, WEEK};
use serde::{Deserialize, Serialize};

/// Costates sampled on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub groups: usize,
    pub stages: usize,
    pub h: f64,
    pub times: Vec<f64>,
    pub populations: Vec<f64>,
    /// `nodes x groups`.
    pub psi_s: Vec<f64>,
    /// `nodes x groups x stages`.
    pub psi_x: Vec<f64>,
    /// Costate of `V` at every node. Constant `-c_v` for the linear problem;
    /// it only moves when a supply penalty is attached.
    pub psi_v: Vec<f64>,
    /// Supply multiplier, zero until [`estimate_lambda`] runs.
    pub lambda: Vec<f64>,
    /// `nodes x 2K`: `r_j` (throughput cap) then `r_{j+K}` (nonnegativity).
    pub r: Vec<f64>,
    /// `nodes x groups` switching functions for the current `lambda`.
    pub phi: Vec<f64>,
    pub lambda0: f64,
}

impl AdjointTrajectory {
    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn psi_s_at(&self, k: usize) -> &[f64] {
        &self.psi_s[k * self.groups..(k + 1) * self.groups]
    }

    #[inline]
    pub fn psi_x_at(&self, k: usize) -> &[f64] {
        let w = self.groups * self.stages;
        &self.psi_x[k * w..(k + 1) * w]
    }

    #[inline]
    pub fn phi_at(&self, k: usize) -> &[f64] {
        &self.phi[k * self.groups..(k + 1) * self.groups]
    }

    #[inline]
    pub fn r_at(&self, k: usize) -> &[f64] {
        &self.r[k * 2 * self.groups..(k + 1) * 2 * self.groups]
    }

    /// Installs a supply multiplier and recomputes every switching function.
    pub fn set_lambda(&mut self, lambda: Vec<f64>) {
        assert_eq!(lambda.len(), self.nodes(), "one lambda per node");
        self.lambda = lambda;
        for k in 0..self.nodes() {
            for j in 0..self.groups {
                self.phi[k * self.groups + j] = switching_function(self, self.lambda[k], j, k);
            }
        }
    }

    /// `psi_s` of region `j` at time `t`, linear between nodes.
    pub fn psi_s_interp(&self, j: usize, t: f64) -> f64 {
        let (k, w) = self.bracket(t);
        let a = self.psi_s[k * self.groups + j];
        let b = self.psi_s[(k + 1).min(self.nodes() - 1) * self.groups + j];
        a + w * (b - a)
    }

    pub fn psi_v_interp(&self, t: f64) -> f64 {
        let (k, w) = self.bracket(t);
        let a = self.psi_v[k];
        let b = self.psi_v[(k + 1).min(self.nodes() - 1)];
        a + w * (b - a)
    }

    fn bracket(&self, t: f64) -> (usize, f64) {
        let last = self.nodes() - 1;
        let pos = ((t - self.times[0]) / self.h).clamp(0.0, last as f64);
        let k = (pos.floor() as usize).min(last.saturating_sub(1));
        (k, pos - k as f64)
    }
}

/// What the costate equations include beyond the core linear dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostateOptions {
    /// `psi_V(T)`.
    pub terminal_v: f64,
    /// Add the `d(u s)/ds` terms of open-loop rates on unsaturated pieces.
    pub open_loop: bool,
    /// Weight of the quadratic effort `c_q n_j (u_j s_j)^2` in the running cost.
    pub quadratic: Option<f64>,
    /// Supply penalty `mu * max(0, V - D_eps)^2` as `(mu, epsilon)`.
    pub penalty: Option<(f64, f64)>,
}

impl CostateOptions {
    pub fn linear(sc: &Scenario) -> Self {
        Self {
            terminal_v: -sc.dose_cost,
            open_loop: false,
            quadratic: None,
            penalty: None,
        }
    }
}

/// Backward integration of the costates along `traj` for the linear cost.
pub fn integrate_adjoint(
    sc: &Scenario,
    traj: &StateTrajectory,
    control: &Control,
) -> Result<AdjointTrajectory> {
    let mut opts = CostateOptions::linear(sc);
    if let Control::Grid(g) = control {
        if (g.h - traj.h).abs() > 1e-12 || g.nodes() != traj.nodes() {
            return Err(Error::GridMismatch(format!(
                "control has {} nodes at step {}, trajectory {} at step {}",
                g.nodes(),
                g.h,
                traj.nodes(),
                traj.h
            )));
        }
        opts.open_loop = true;
    }
    integrate_costate(sc, traj, &opts)
}

struct Point<'a> {
    t: f64,
    y: Vec<f64>,
    u_before: &'a [f64],
    u_after: &'a [f64],
}

/// Backward RK4 over the same pieces the forward pass used. States at the
/// half-step stages come from cubic Hermite interpolation of the piece ends.
pub fn integrate_costate(
    sc: &Scenario,
    traj: &StateTrajectory,
    opts: &CostateOptions,
) -> Result<AdjointTrajectory> {
    if traj.groups != sc.groups || traj.stages != sc.stages {
        return Err(Error::GridMismatch("trajectory dimensions differ from the scenario".into()));
    }
    steps_per_week(traj.h)?;
    if !traj.is_complete(sc.horizon) {
        return Err(Error::GridMismatch(
            "adjoint needs a trajectory covering the whole horizon".into(),
        ));
    }
    let k = sc.groups;
    let d = sc.stages;
    let n = traj.nodes();
    let np = sc.state_len();
    let mut adj = AdjointTrajectory {
        groups: k,
        stages: d,
        h: traj.h,
        times: traj.times.clone(),
        populations: sc.populations.clone(),
        psi_s: vec![0.0; n * k],
        psi_x: vec![0.0; n * k * d],
        psi_v: vec![0.0; n],
        lambda: vec![0.0; n],
        r: vec![0.0; n * 2 * k],
        phi: vec![0.0; n * k],
        lambda0: 1.0,
    };
    let store = |adj: &mut AdjointTrajectory, node: usize, p: &[f64]| {
        adj.psi_s[node * k..(node + 1) * k].copy_from_slice(&p[..k]);
        adj.psi_x[node * k * d..(node + 1) * k * d].copy_from_slice(&p[k..k + k * d]);
        adj.psi_v[node] = p[np - 1];
    };

    let mut p = vec![0.0; np];
    p[np - 1] = opts.terminal_v;
    store(&mut adj, n - 1, &p);

    let mut ws = Scratch::new(np, k);
    let mut pts: Vec<Point> = Vec::new();
    for step in (0..n - 1).rev() {
        pts.clear();
        pts.push(Point {
            t: traj.times[step],
            y: traj.state_at(step),
            u_before: traj.u_left_at(step),
            u_after: traj.u_at(step),
        });
        for kn in traj.knots_in_step(step) {
            pts.push(Point {
                t: kn.time,
                y: kn.state.clone(),
                u_before: &kn.u_before,
                u_after: &kn.u_after,
            });
        }
        pts.push(Point {
            t: traj.times[step + 1],
            y: traj.state_at(step + 1),
            u_before: traj.u_left_at(step + 1),
            u_after: traj.u_at(step + 1),
        });
        for piece in (0..pts.len() - 1).rev() {
            let (a, b) = (&pts[piece], &pts[piece + 1]);
            let dt = b.t - a.t;
            if dt <= 0.0 {
                continue;
            }
            backward_piece(sc, opts, a, b, dt, &mut p, &mut ws);
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure {
                last_valid_time: traj.times[step + 1],
            });
        }
        store(&mut adj, step, &p);
    }
    let lambda = vec![0.0; n];
    adj.set_lambda(lambda);
    Ok(adj)
}

struct Scratch {
    dy_a: Vec<f64>,
    dy_b: Vec<f64>,
    y_mid: Vec<f64>,
    u_open: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    coef: Vec<f64>,
}

impl Scratch {
    fn new(np: usize, k: usize) -> Self {
        Self {
            dy_a: vec![0.0; np],
            dy_b: vec![0.0; np],
            y_mid: vec![0.0; np],
            u_open: vec![0.0; k],
            k1: vec![0.0; np],
            k2: vec![0.0; np],
            k3: vec![0.0; np],
            k4: vec![0.0; np],
            tmp: vec![0.0; np],
            coef: vec![0.0; k],
        }
    }
}

fn backward_piece(
    sc: &Scenario,
    opts: &CostateOptions,
    a: &Point,
    b: &Point,
    dt: f64,
    p: &mut [f64],
    ws: &mut Scratch,
) {
    let np = p.len();
    let k = sc.groups;
    field_with_rates(sc, &a.y, a.u_after, &mut ws.dy_a);
    field_with_rates(sc, &b.y, b.u_before, &mut ws.dy_b);
    for j in 0..np {
        ws.y_mid[j] = 0.5 * (a.y[j] + b.y[j]) + dt / 8.0 * (ws.dy_a[j] - ws.dy_b[j]);
    }
    // open-loop rate on this piece, zero where the rate is a feedback on the cap
    for i in 0..k {
        let u = a.u_after[i];
        let saturated = u * a.y[i] >= sc.max_rate[i] * (1.0 - 1e-9);
        ws.u_open[i] = if opts.open_loop && !saturated { u } else { 0.0 };
    }
    let t_mid = 0.5 * (a.t + b.t);
    let Scratch {
        y_mid,
        u_open,
        k1,
        k2,
        k3,
        k4,
        tmp,
        coef,
        ..
    } = ws;
    costate_rhs(sc, opts, b.t, &b.y, p, u_open, coef, k1);
    for j in 0..np {
        tmp[j] = p[j] - 0.5 * dt * k1[j];
    }
    costate_rhs(sc, opts, t_mid, y_mid, tmp, u_open, coef, k2);
    for j in 0..np {
        tmp[j] = p[j] - 0.5 * dt * k2[j];
    }
    costate_rhs(sc, opts, t_mid, y_mid, tmp, u_open, coef, k3);
    for j in 0..np {
        tmp[j] = p[j] - dt * k3[j];
    }
    costate_rhs(sc, opts, a.t, &a.y, tmp, u_open, coef, k4);
    for j in 0..np {
        p[j] -= dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
}

/// `d psi / dt = -dH/d(state)`.
#[allow(clippy::too_many_arguments)]
fn costate_rhs(
    sc: &Scenario,
    opts: &CostateOptions,
    t: f64,
    y: &[f64],
    p: &[f64],
    u_open: &[f64],
    coef: &mut [f64],
    dp: &mut [f64],
) {
    let k = sc.groups;
    let d = sc.stages;
    let np = p.len();
    let s = &y[..k];
    let x = &y[k..k + k * d];
    let ps = &p[..k];
    let px = &p[k..k + k * d];
    let pv = p[np - 1];
    for j in 0..k {
        coef[j] = (ps[j] - px[j * d]) * s[j];
    }
    for i in 0..k {
        let f = sc.force_of_infection(i, x);
        let mut v = (ps[i] - px[i * d]) * f;
        let u = u_open[i];
        if u != 0.0 {
            v += (ps[i] - pv * sc.populations[i]) * u;
            if let Some(cq) = opts.quadratic {
                v += 2.0 * cq * sc.populations[i] * u * u * s[i];
            }
        }
        if sc.migration.is_some() {
            for j in 0..k {
                v -= ps[j] * sc.migration_jacobian(j, i);
            }
        }
        dp[i] = v;
    }
    for i in 0..k {
        for m in 0..d {
            let mut v = sc.populations[i] * sc.health_cost[m];
            for j in 0..k {
                v += coef[j] * sc.beta(j, i)[m];
            }
            for r in 0..d {
                v -= px[i * d + r] * sc.progression[r * d + m];
            }
            dp[k + i * d + m] = v;
        }
    }
    dp[np - 1] = match opts.penalty {
        Some((mu, eps)) => {
            let supply = sc
                .shipments
                .smoothed_with(t.clamp(0.0, sc.horizon), eps)
                .unwrap_or(f64::INFINITY);
            2.0 * mu * (y[np - 1] - supply).max(0.0)
        }
        None => 0.0,
    };
}

/// `phi_j = (lambda - psi_V) n_j + psi_s_j` at node `k`; with `psi_V = -c_v`
/// this is `(c_v + lambda) n_j + psi_s_j`.
pub fn switching_function(adj: &AdjointTrajectory, lambda: f64, j: usize, k: usize) -> f64 {
    (lambda - adj.psi_v[k]) * adj.populations[j] + adj.psi_s[k * adj.groups + j]
}

/// Stationarity residual of one interior switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchResidual {
    pub region: usize,
    pub week: usize,
    pub time: f64,
    /// The multiplier that would make `phi` vanish at this switch on its own.
    pub implied_lambda: f64,
    /// `|phi(tau)|` under the final estimate.
    pub residual: f64,
}

/// Value of stock at a contact inside `[from, to]`: the `v`-weighted
/// average of `psi_V - psi_s_i / n_i` over the regions still vaccinating
/// when the stock ran out. Extra doses before the contact move it earlier by
/// `1 / sum n_i v_i` per dose and cut exactly those regions short.
fn contact_price(
    sc: &Scenario,
    adj: &AdjointTrajectory,
    schedule: &BangSchedule,
    contacts: &[f64],
    from: f64,
    to: f64,
) -> Option<f64> {
    let t = *contacts.iter().find(|&&t| t >= from - 1e-12 && t <= to + 1e-12)?;
    let w = ((t / WEEK).floor() as usize).min(sc.weeks() - 1);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..sc.groups {
        if schedule.get(i, w) >= t - 1e-12 {
            num += sc.max_rate[i] * adj.psi_s_interp(i, t);
            den += sc.populations[i] * sc.max_rate[i];
        }
    }
    (den > 0.0).then(|| adj.psi_v_interp(t) - num / den)
}

/// Result of [`estimate_lambda`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub lambda: Vec<f64>,
    pub max_residual: f64,
    pub switches: Vec<SwitchResidual>,
    /// Stock-contact instants.
    pub contacts: Vec<f64>,
    /// Set when the estimate had to fall back to `lambda = 0`.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// Reconstructs the supply multiplier from switch-time stationarity.
///
/// `[0, T]` is cut into free stretches (stock not exhausted) and exhausted
/// arcs. Free stretches carry a constant value: the mean over the interior
/// switches inside them of the `lambda` that zeroes `phi` at the switch, or,
/// without such switches, the price of the stock contact that ends them (the
/// next stretch's value when neither exists); the final stretch is 0.
/// On an exhausted arc nothing is vaccinated, so `lambda` is the smallest
/// value keeping every `phi` nonnegative there (never below the next
/// stretch). The sequence is then projected onto nonincreasing, nonnegative
/// profiles and `lambda(T)` is set to 0.
pub fn estimate_lambda(
    sc: &Scenario,
    traj: &StateTrajectory,
    adj: &AdjointTrajectory,
    schedule: &BangSchedule,
) -> LambdaEstimate {
    let n = traj.nodes();
    let mut est = LambdaEstimate {
        lambda: vec![0.0; n],
        max_residual: 0.0,
        switches: Vec::new(),
        contacts: traj
            .events_of(crate::forward::EventKind::StockExhausted)
            .map(|e| e.time)
            .collect(),
        degenerate: false,
        warnings: Vec::new(),
    };
    if n < 2
        || adj.nodes() != n
        || traj.stock_out.len() != n
        || schedule.groups != sc.groups
        || schedule.weeks != sc.weeks()
    {
        est.degenerate = true;
        est.warnings
            .push("trajectory, adjoint and schedule do not line up; lambda set to 0".into());
        return est;
    }
    let h = traj.h;
    let active = &traj.exhausted(EXHAUSTION_TOL);
    let week_ends = traj.exhausted_week_ends(EXHAUSTION_TOL);

    // maximal runs of equal exhaustion status, also cut where a week ends
    // with the stock used up
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut first = 0;
    for node in 1..=n {
        if node == n || active[node] != active[first] || week_ends.contains(&node) {
            segments.push((first, node));
            first = node;
        }
    }
    let segment_of = |node: usize| segments.partition_point(|&(_, end)| end <= node);

    // interior switches: active just before tau, strictly inside the week
    let mut implied: Vec<Vec<f64>> = vec![Vec::new(); segments.len()];
    let mut located: Vec<(usize, usize, f64, usize)> = Vec::new();
    for i in 0..sc.groups {
        for w in 0..sc.weeks() {
            let tau = schedule.get(i, w);
            let lo = WEEK * w as f64;
            if !(tau > lo + 1e-12 && tau < lo + WEEK - 1e-12) {
                continue;
            }
            let before = (((tau - 1e-9) / h).floor() as usize).min(n - 1);
            if active[before] || traj.u_at(before)[i] <= 0.0 {
                continue;
            }
            let seg = segment_of(before);
            let value = adj.psi_v_interp(tau) - adj.psi_s_interp(i, tau) / sc.populations[i];
            implied[seg].push(value);
            located.push((i, w, tau, before));
        }
    }

    let mut raw = vec![0.0; n];
    let mut next_level = 0.0;
    for (si, &(a, b)) in segments.iter().enumerate().rev() {
        let terminal = si + 1 == segments.len();
        if active[a] {
            for node in (a..b).rev() {
                let needed = (0..sc.groups)
                    .map(|j| adj.psi_v[node] - adj.psi_s_at(node)[j] / sc.populations[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                raw[node] = needed.max(next_level);
            }
            next_level = raw[a];
        } else {
            let value = if terminal {
                0.0
            } else if implied[si].is_empty() {
                match contact_price(sc, adj, schedule, &est.contacts, traj.times[b - 1], traj.times[b.min(n - 1)]) {
                    Some(price) => price.max(next_level),
                    None => {
                        est.warnings.push(format!(
                    "no interior switch on [{:.4}, {:.4}]; value carried from the next interval",
                            traj.times[a],
                            traj.times[b.min(n - 1)]
                        ));
                        next_level
                    }
                }
            } else {
                implied[si].iter().sum::<f64>() / implied[si].len() as f64
            };
            raw[a..b].iter_mut().for_each(|l| *l = value);
            next_level = value;
        }
    }

    let mut lambda = nonincreasing_fit(&raw, &vec![1.0; n]);
    lambda.iter_mut().for_each(|l| *l = l.max(0.0));
    lambda[n - 1] = 0.0;

    for &(i, w, tau, before) in &located {
        let phi = (lambda[before] - adj.psi_v_interp(tau)) * sc.populations[i]
            + adj.psi_s_interp(i, tau);
        est.max_residual = est.max_residual.max(phi.abs());
        est.switches.push(SwitchResidual {
            region: i,
            week: w,
            time: tau,
            implied_lambda: adj.psi_v_interp(tau) - adj.psi_s_interp(i, tau) / sc.populations[i],
            residual: phi.abs(),
        });
    }
    est.lambda = lambda;
    est
}

/// Mixed-constraint multipliers reconstructed from the switching functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// `nodes x 2K`.
    pub r: Vec<f64>,
    pub min_r: f64,
    /// Largest `|r_j (u_j s_j - v_j)|` or `|r_{j+K} u_j|`.
    pub complementarity: f64,
    /// `(node, region)` pairs where the rate is neither off nor on the cap.
    pub interior: Vec<(usize, usize)>,
}

/// Case split of the stationarity condition `-phi_j s_j = r_j s_j - r_{j+K}`:
/// off nodes get `r_j = 0, r_{j+K} = phi_j s_j`, saturated nodes get
/// `r_{j+K} = 0, r_j = -phi_j`.
pub fn reconstruct_multipliers(
    sc: &Scenario,
    adj: &AdjointTrajectory,
    traj: &StateTrajectory,
) -> Multipliers {
    let k = sc.groups;
    let n = traj.nodes().min(adj.nodes());
    let mut out = Multipliers {
        r: vec![0.0; n * 2 * k],
        min_r: f64::INFINITY,
        complementarity: 0.0,
        interior: Vec::new(),
    };
    for node in 0..n {
        let s = traj.s_at(node);
        let u = traj.u_at(node);
        let phi = adj.phi_at(node);
        for j in 0..k {
            let vmax = sc.max_rate[j];
            let us = u[j] * s[j];
            let (rj, rjk) = if us <= 1e-12 * vmax {
                (0.0, phi[j] * s[j])
            } else if (us - vmax).abs() <= 1e-9 * vmax {
                (-phi[j], 0.0)
            } else {
                out.interior.push((node, j));
                (0.0, 0.0)
            };
            out.r[node * 2 * k + j] = rj;
            out.r[node * 2 * k + k + j] = rjk;
            out.min_r = out.min_r.min(rj).min(rjk);
            let c = (rj * (us - vmax)).abs().max((rjk * u[j]).abs());
            out.complementarity = out.complementarity.max(c);
        }
    }
    out
}

/// Adjoint, supply multiplier and mixed multipliers for a bang-bang schedule.
pub fn costates_for_schedule(
    sc: &Scenario,
    traj: &StateTrajectory,
    schedule: &BangSchedule,
) -> Result<(AdjointTrajectory, LambdaEstimate, Multipliers)> {
    let mut adj = integrate_adjoint(sc, traj, &Control::Bang(schedule.clone()))?;
    let est = estimate_lambda(sc, traj, &adj, schedule);
    adj.set_lambda(est.lambda.clone());
    let mult = reconstruct_multipliers(sc, &adj, traj);
    adj.r = mult.r.clone();
    Ok((adj, est, mult))
}
