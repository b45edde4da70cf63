//! Forward integration of the controlled epidemic and the cost functionals.
//!
//! Steps are fixed-size classic RK4 on a grid that lands exactly on week
//! boundaries. Inside a step, every control discontinuity (a switch time, a
//! bump edge, the instant the weekly stock runs out) splits the step so each
//! piece is integrated with a single smooth control law. The split points are
//! kept as [`Knot`]s so the adjoint can integrate over the same pieces.

use crate::error::{Error, Result};
use crate::model::{Scenario, WEEK};
use serde::{Deserialize, Serialize};

/// Tolerance (days) on the stock-exhaustion instant located by bisection.
pub const EVENT_TOL: f64 = 1e-10;
/// `V` within this distance of the budget at a week start counts as exhausted.
const STOCK_SLACK: f64 = 1e-12;
/// Doses within this distance of the budget count as a used-up stock when
/// reading a finished trajectory.
pub const EXHAUSTION_TOL: f64 = 1e-9;

/// Per-region, per-week switching times. Region `i` vaccinates at full
/// throughput from the start of week `w` until `tau(i, w)`, then stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BangSchedule {
    pub groups: usize,
    pub weeks: usize,
    /// Row-major `groups x weeks`.
    pub tau: Vec<f64>,
}

impl BangSchedule {
    pub fn new(groups: usize, weeks: usize, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != groups * weeks {
            return Err(Error::ControlShape(format!(
                "{} switch times for {groups} groups x {weeks} weeks",
                tau.len()
            )));
        }
        for i in 0..groups {
            for w in 0..weeks {
                let t = tau[i * weeks + w];
                let lo = WEEK * w as f64;
                if !(t >= lo - 1e-12 && t <= lo + WEEK + 1e-12) {
                    return Err(Error::ControlShape(format!(
                        "tau[{i}][{w}] = {t} outside week [{lo}, {}]",
                        lo + WEEK
                    )));
                }
            }
        }
        Ok(Self { groups, weeks, tau })
    }

    /// Switch at the fraction `frac` of each week, for every region.
    pub fn uniform(sc: &Scenario, frac: f64) -> Self {
        let weeks = sc.weeks();
        let tau = (0..sc.groups)
            .flat_map(|_| (0..weeks).map(move |w| WEEK * (w as f64 + frac)))
            .collect();
        Self {
            groups: sc.groups,
            weeks,
            tau,
        }
    }

    /// Never vaccinate.
    pub fn never(sc: &Scenario) -> Self {
        Self::uniform(sc, 0.0)
    }

    /// Vaccinate whenever stock remains.
    pub fn full(sc: &Scenario) -> Self {
        Self::uniform(sc, 1.0)
    }

    /// Builds a schedule from week fractions in `[0, 1]` (values are clamped).
    pub fn from_fractions(groups: usize, weeks: usize, frac: &[f64]) -> Self {
        let tau = frac
            .iter()
            .enumerate()
            .map(|(idx, f)| WEEK * ((idx % weeks) as f64 + f.clamp(0.0, 1.0)))
            .collect();
        Self { groups, weeks, tau }
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.tau
            .iter()
            .enumerate()
            .map(|(idx, t)| t / WEEK - (idx % self.weeks) as f64)
            .collect()
    }

    #[inline]
    pub fn get(&self, group: usize, week: usize) -> f64 {
        self.tau[group * self.weeks + week]
    }

    pub fn set(&mut self, group: usize, week: usize, t: f64) {
        let lo = WEEK * week as f64;
        self.tau[group * self.weeks + week] = t.clamp(lo, lo + WEEK);
    }
}

/// Open-loop rates on the simulation grid, held constant over each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridControl {
    pub groups: usize,
    pub h: f64,
    /// Row-major `nodes x groups`.
    pub rates: Vec<f64>,
}

impl GridControl {
    pub fn new(groups: usize, h: f64, rates: Vec<f64>) -> Result<Self> {
        if groups == 0 || rates.len() % groups != 0 {
            return Err(Error::ControlShape("rate vector is not nodes x groups".into()));
        }
        if let Some(p) = rates.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::ControlShape(format!(
                "rate {} at node {} group {} is negative or not finite",
                rates[p],
                p / groups,
                p % groups
            )));
        }
        Ok(Self { groups, h, rates })
    }

    pub fn zeros(sc: &Scenario, h: f64) -> Self {
        let nodes = node_count(sc.horizon, h);
        Self {
            groups: sc.groups,
            h,
            rates: vec![0.0; nodes * sc.groups],
        }
    }

    /// The rates a trajectory actually applied, as an open-loop control.
    pub fn from_trajectory(traj: &StateTrajectory) -> Self {
        Self {
            groups: traj.groups,
            h: traj.h,
            rates: traj.u_realized.clone(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.rates.len() / self.groups
    }

    #[inline]
    pub fn rate(&self, node: usize, group: usize) -> f64 {
        self.rates[node * self.groups + group]
    }
}

/// Additive rate perturbation `delta` for one region on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub region: usize,
    pub start: f64,
    pub end: f64,
    pub delta: f64,
}

/// A vaccination policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Control {
    Bang(BangSchedule),
    Grid(GridControl),
}

impl From<BangSchedule> for Control {
    fn from(b: BangSchedule) -> Self {
        Control::Bang(b)
    }
}

impl From<GridControl> for Control {
    fn from(g: GridControl) -> Self {
        Control::Grid(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Switch,
    StockExhausted,
    WeekBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub region: Option<usize>,
    pub week: usize,
}

/// State at an intra-step split point, with the control just before and just after.
#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    pub step: usize,
    pub time: f64,
    pub state: Vec<f64>,
    pub u_before: Vec<f64>,
    pub u_after: Vec<f64>,
}

/// Sampled solution on the uniform grid `t_k = k h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub groups: usize,
    pub stages: usize,
    pub h: f64,
    /// Grid index of the first stored node (nonzero for restarted runs).
    pub start_node: usize,
    pub times: Vec<f64>,
    /// `nodes x groups`.
    pub s: Vec<f64>,
    /// `nodes x groups x stages`.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Rate applied just after each node.
    pub u_realized: Vec<f64>,
    /// Rate applied just before each node.
    pub u_left: Vec<f64>,
    /// Whether the weekly stock is exhausted just after each node.
    pub stock_out: Vec<bool>,
    pub events: Vec<Event>,
    pub knots: Vec<Knot>,
    /// Budget `D(t_k)` used for the stock clamp at each node.
    pub budget: Vec<f64>,
}

impl StateTrajectory {
    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn s_at(&self, k: usize) -> &[f64] {
        &self.s[k * self.groups..(k + 1) * self.groups]
    }

    #[inline]
    pub fn x_at(&self, k: usize) -> &[f64] {
        let w = self.groups * self.stages;
        &self.x[k * w..(k + 1) * w]
    }

    #[inline]
    pub fn u_at(&self, k: usize) -> &[f64] {
        &self.u_realized[k * self.groups..(k + 1) * self.groups]
    }

    #[inline]
    pub fn u_left_at(&self, k: usize) -> &[f64] {
        &self.u_left[k * self.groups..(k + 1) * self.groups]
    }

    /// Flat state `(s, x, V)` at node `k`.
    pub fn state_at(&self, k: usize) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.groups * (self.stages + 1) + 1);
        y.extend_from_slice(self.s_at(k));
        y.extend_from_slice(self.x_at(k));
        y.push(self.v[k]);
        y
    }

    /// Knots inside step `k` (local node index), in time order.
    pub fn knots_in_step(&self, k: usize) -> impl Iterator<Item = &Knot> {
        let global = self.start_node + k;
        let first = self.knots.partition_point(|kn| kn.step < global);
        self.knots[first..]
            .iter()
            .take_while(move |kn| kn.step == global)
    }

    pub fn is_complete(&self, horizon: f64) -> bool {
        self.start_node == 0
            && self
                .times
                .last()
                .is_some_and(|&t| (t - horizon).abs() < 1e-9)
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Nodes where the stock is used up: clamped, or `V` within `tol` of the
    /// week's budget. Schedules that switch off exactly as the stock runs out
    /// never trigger the clamp but exhaust the stock all the same.
    pub fn exhausted(&self, tol: f64) -> Vec<bool> {
        (0..self.nodes())
            .map(|k| self.stock_out[k] || self.budget[k] - self.v[k] <= tol)
            .collect()
    }

    /// Week-start nodes at which the previous week's stock was used up.
    pub fn exhausted_week_ends(&self, tol: f64) -> Vec<usize> {
        let Ok(spw) = steps_per_week(self.h) else {
            return Vec::new();
        };
        (1..self.nodes())
            .filter(|&k| (self.start_node + k) % spw == 0)
            .filter(|&k| self.budget[k - 1] - self.v[k] <= tol)
            .collect()
    }

    pub fn infectious_total(&self, populations: &[f64], k: usize) -> f64 {
        let x = self.x_at(k);
        (0..self.groups)
            .map(|i| populations[i] * x[i * self.stages])
            .sum()
    }
}

/// Number of grid nodes for a horizon and step.
pub fn node_count(horizon: f64, h: f64) -> usize {
    (horizon / h).round() as usize + 1
}

/// Steps per week, or an error if `h` does not tile a week exactly.
pub fn steps_per_week(h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::StepOffWeekBoundary { h });
    }
    let n = WEEK / h;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::StepOffWeekBoundary { h });
    }
    Ok(r as usize)
}

/// Options for [`simulate_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub h: f64,
    /// Stop vaccinating the instant cumulative doses reach the week's budget.
    /// Disabled only by penalty-based grid methods.
    pub clamp_stock: bool,
    pub bump: Option<Bump>,
}

impl SimOptions {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            clamp_stock: true,
            bump: None,
        }
    }
}

/// Where a restarted integration begins.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPoint {
    pub node: usize,
    pub state: Vec<f64>,
    pub stock_out: bool,
}

/// Simulates the full horizon from the scenario's initial condition.
pub fn simulate(sc: &Scenario, control: &Control, h: f64) -> Result<StateTrajectory> {
    simulate_with(sc, control, &SimOptions::new(h))
}

pub fn simulate_with(sc: &Scenario, control: &Control, opts: &SimOptions) -> Result<StateTrajectory> {
    let y0 = sc.initial_state();
    let budget = sc.shipments.plateau(0);
    let start = StartPoint {
        node: 0,
        stock_out: opts.clamp_stock && y0[y0.len() - 1] >= budget - STOCK_SLACK,
        state: y0,
    };
    simulate_from(sc, control, opts, &start)
}

struct Law<'a> {
    control: &'a Control,
    bump: Option<&'a Bump>,
    step: usize,
    week: usize,
    mode_t: f64,
    stock_out: bool,
}

impl Law<'_> {
    #[inline]
    fn rate(&self, sc: &Scenario, i: usize, s: f64) -> f64 {
        if self.stock_out {
            return 0.0;
        }
        let cap = sc.max_rate[i] / s;
        let mut u = match self.control {
            Control::Bang(b) => {
                if self.mode_t < b.get(i, self.week) {
                    cap
                } else {
                    0.0
                }
            }
            Control::Grid(g) => g.rate(self.step, i),
        };
        if let Some(b) = self.bump {
            if b.region == i && self.mode_t >= b.start && self.mode_t < b.end {
                u += b.delta;
            }
        }
        u.clamp(0.0, cap)
    }
}

struct Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Right-hand side of the controlled system for the flat state `(s, x, V)`.
#[inline]
fn rhs(sc: &Scenario, law: &Law, y: &[f64], dy: &mut [f64]) {
    let k = sc.groups;
    let d = sc.stages;
    let (s, rest) = y.split_at(k);
    let x = &rest[..k * d];
    let mut dv = 0.0;
    for i in 0..k {
        let f = sc.force_of_infection(i, x);
        let u = law.rate(sc, i, s[i]);
        let inflow = s[i] * f;
        dy[i] = -inflow - u * s[i];
        let off = k + i * d;
        sc.progression_apply(&x[i * d..(i + 1) * d], &mut dy[off..off + d]);
        dy[off] += inflow;
        dv += sc.populations[i] * u * s[i];
    }
    if sc.migration.is_some() {
        sc.migration_add(s, &mut dy[..k]);
    }
    dy[k * (d + 1)] = dv;
}

/// Vector field with the rates `u` frozen (used for dense-output interpolation).
pub(crate) fn field_with_rates(sc: &Scenario, y: &[f64], u: &[f64], dy: &mut [f64]) {
    let k = sc.groups;
    let d = sc.stages;
    let (s, rest) = y.split_at(k);
    let x = &rest[..k * d];
    let mut dv = 0.0;
    for i in 0..k {
        let inflow = s[i] * sc.force_of_infection(i, x);
        dy[i] = -inflow - u[i] * s[i];
        let off = k + i * d;
        sc.progression_apply(&x[i * d..(i + 1) * d], &mut dy[off..off + d]);
        dy[off] += inflow;
        dv += sc.populations[i] * u[i] * s[i];
    }
    if sc.migration.is_some() {
        sc.migration_add(s, &mut dy[..k]);
    }
    dy[k * (d + 1)] = dv;
}

fn rk4(sc: &Scenario, law: &Law, y: &[f64], dt: f64, w: &mut Work, out: &mut [f64]) {
    let n = y.len();
    rhs(sc, law, y, &mut w.k1);
    for j in 0..n {
        w.tmp[j] = y[j] + 0.5 * dt * w.k1[j];
    }
    rhs(sc, law, &w.tmp, &mut w.k2);
    for j in 0..n {
        w.tmp[j] = y[j] + 0.5 * dt * w.k2[j];
    }
    rhs(sc, law, &w.tmp, &mut w.k3);
    for j in 0..n {
        w.tmp[j] = y[j] + dt * w.k3[j];
    }
    rhs(sc, law, &w.tmp, &mut w.k4);
    for j in 0..n {
        out[j] = y[j] + dt / 6.0 * (w.k1[j] + 2.0 * w.k2[j] + 2.0 * w.k3[j] + w.k4[j]);
    }
}

/// [`rk4`] with compensated (Kahan) accumulation of the increment: `carry`
/// holds the low-order bits lost when adding a small increment to `y`, so
/// roundoff does not build up over thousands of steps and the fourth-order
/// truncation error stays observable down to small `h`.
fn rk4_compensated(sc: &Scenario, law: &Law, y: &[f64], dt: f64, w: &mut Work, carry: &mut [f64], out: &mut [f64]) {
    rk4(sc, law, y, dt, w, out);
    for j in 0..y.len() {
        let inc = dt / 6.0 * (w.k1[j] + 2.0 * w.k2[j] + 2.0 * w.k3[j] + w.k4[j]) + carry[j];
        out[j] = y[j] + inc;
        carry[j] = inc - (out[j] - y[j]);
    }
}

fn rates(sc: &Scenario, law: &Law, y: &[f64]) -> Vec<f64> {
    (0..sc.groups).map(|i| law.rate(sc, i, y[i])).collect()
}

fn fill_rates(sc: &Scenario, law: &Law, y: &[f64], out: &mut [f64]) {
    for (i, u) in out.iter_mut().enumerate() {
        *u = law.rate(sc, i, y[i]);
    }
}

/// Integrates from `start` to the horizon.
pub fn simulate_from(
    sc: &Scenario,
    control: &Control,
    opts: &SimOptions,
    start: &StartPoint,
) -> Result<StateTrajectory> {
    let h = opts.h;
    let spw = steps_per_week(h)?;
    let total_steps = spw * sc.weeks();
    let k_groups = sc.groups;
    let d = sc.stages;
    let n_state = sc.state_len();
    let v_idx = n_state - 1;
    match control {
        Control::Bang(b) => {
            if b.groups != k_groups || b.weeks != sc.weeks() {
                return Err(Error::ControlShape(format!(
                    "schedule is {} x {}, scenario needs {} x {}",
                    b.groups,
                    b.weeks,
                    k_groups,
                    sc.weeks()
                )));
            }
        }
        Control::Grid(g) => {
            if g.groups != k_groups || g.nodes() != total_steps + 1 {
                return Err(Error::ControlShape(format!(
                    "grid control has {} nodes x {} groups, expected {} x {}",
                    g.nodes(),
                    g.groups,
                    total_steps + 1,
                    k_groups
                )));
            }
            if (g.h - h).abs() > 1e-12 {
                return Err(Error::GridMismatch(format!("control step {} vs {}", g.h, h)));
            }
        }
    }
    if start.state.len() != n_state || start.node > total_steps {
        return Err(Error::ControlShape("start point does not fit the scenario".into()));
    }

    let nodes = total_steps - start.node + 1;
    let mut traj = StateTrajectory {
        groups: k_groups,
        stages: d,
        h,
        start_node: start.node,
        times: Vec::with_capacity(nodes),
        s: Vec::with_capacity(nodes * k_groups),
        x: Vec::with_capacity(nodes * k_groups * d),
        v: Vec::with_capacity(nodes),
        u_realized: Vec::with_capacity(nodes * k_groups),
        u_left: Vec::with_capacity(nodes * k_groups),
        stock_out: Vec::with_capacity(nodes),
        events: Vec::new(),
        knots: Vec::new(),
        budget: Vec::with_capacity(nodes),
    };

    let mut y = start.state.clone();
    let mut next = vec![0.0; n_state];
    let mut probe = vec![0.0; n_state];
    let mut work = Work::new(n_state);
    let mut carry = vec![0.0; n_state];
    let mut probe_carry = vec![0.0; n_state];
    let mut stock_out = start.stock_out && opts.clamp_stock;
    let mut u_left_node = vec![0.0; k_groups];
    let mut cuts: Vec<f64> = Vec::new();

    let push_node = |traj: &mut StateTrajectory, t: f64, y: &[f64]| {
        traj.times.push(t);
        traj.s.extend_from_slice(&y[..k_groups]);
        traj.x.extend_from_slice(&y[k_groups..k_groups + k_groups * d]);
        traj.v.push(y[v_idx]);
    };

    for step in start.node..=total_steps {
        let t = step as f64 * h;
        let week = (step / spw).min(sc.weeks() - 1);
        let budget = sc.shipments.plateau(week);
        if step % spw == 0 && step < total_steps && step > start.node {
            traj.events.push(Event {
                time: t,
                kind: EventKind::WeekBoundary,
                region: None,
                week,
            });
            stock_out = opts.clamp_stock && y[v_idx] >= budget - STOCK_SLACK;
            if stock_out {
                traj.events.push(Event {
                    time: t,
                    kind: EventKind::StockExhausted,
                    region: None,
                    week,
                });
            }
        } else if step == start.node && stock_out {
            traj.events.push(Event {
                time: t,
                kind: EventKind::StockExhausted,
                region: None,
                week,
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            let last_valid_time = traj.times.last().copied().unwrap_or(t);
            return Err(Error::IntegrationFailure { last_valid_time });
        }
        push_node(&mut traj, t, &y);
        traj.budget.push(budget);
        traj.u_left.extend_from_slice(&u_left_node);

        if step == total_steps {
            // control law evaluated at the horizon itself
            let law = Law {
                control,
                bump: opts.bump.as_ref(),
                step,
                week,
                mode_t: t,
                stock_out,
            };
            traj.u_realized.extend(rates(sc, &law, &y));
            traj.stock_out.push(stock_out);
            break;
        }

        let t_end = (step + 1) as f64 * h;
        cuts.clear();
        if !stock_out {
            if let Control::Bang(b) = control {
                for i in 0..k_groups {
                    let tau = b.get(i, week);
                    if tau > t && tau < t_end {
                        cuts.push(tau);
                    }
                }
            }
        }
        if let Some(b) = &opts.bump {
            for edge in [b.start, b.end] {
                if edge > t && edge < t_end {
                    cuts.push(edge);
                }
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cut times"));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        cuts.push(t_end);

        let mut a = t;
        let mut first = true;
        for (ci, &b_end) in cuts.iter().enumerate() {
            let mode = |lo: f64, hi: f64, out: bool| Law {
                control,
                bump: opts.bump.as_ref(),
                step,
                week,
                mode_t: 0.5 * (lo + hi),
                stock_out: out,
            };
            let law = mode(a, b_end, stock_out);
            if first {
                traj.u_realized.extend(rates(sc, &law, &y));
                traj.stock_out.push(stock_out);
                first = false;
            }
            probe_carry.copy_from_slice(&carry);
            rk4_compensated(sc, &law, &y, b_end - a, &mut work, &mut carry, &mut next);
            if opts.clamp_stock && !stock_out && next[v_idx] > budget {
                // locate the exhaustion instant inside [a, b_end]
                let (mut lo, mut hi) = (0.0, b_end - a);
                while hi - lo > EVENT_TOL {
                    let mid = 0.5 * (lo + hi);
                    rk4(sc, &law, &y, mid, &mut work, &mut probe);
                    if probe[v_idx] > budget {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let t_hit = a + lo;
                // the trial step is discarded; restart its compensation too
                carry.iter_mut().zip(&probe_carry).for_each(|(c, p)| *c = *p);
                if lo > 1e-13 {
                    rk4_compensated(sc, &law, &y, lo, &mut work, &mut carry, &mut probe);
                    std::mem::swap(&mut y, &mut probe);
                }
                stock_out = true;
                traj.events.push(Event {
                    time: t_hit,
                    kind: EventKind::StockExhausted,
                    region: None,
                    week,
                });
                let rest = mode(t_hit, b_end, true);
                if lo > 1e-13 {
                    traj.knots.push(Knot {
                        step,
                        time: t_hit,
                        state: y.clone(),
                        u_before: rates(sc, &law, &y),
                        u_after: vec![0.0; k_groups],
                    });
                } else if ci == 0 {
                    // exhausted at the very start of the step
                    let row = traj.u_realized.len() - k_groups;
                    traj.u_realized[row..].iter_mut().for_each(|u| *u = 0.0);
                    let last = traj.stock_out.len() - 1;
                    traj.stock_out[last] = true;
                } else if let Some(kn) = traj.knots.last_mut() {
                    kn.u_after.iter_mut().for_each(|u| *u = 0.0);
                }
                rk4_compensated(sc, &rest, &y, b_end - t_hit, &mut work, &mut carry, &mut next);
                fill_rates(sc, &rest, &next, &mut u_left_node);
            } else {
                fill_rates(sc, &law, &next, &mut u_left_node);
            }
            std::mem::swap(&mut y, &mut next);
            if ci + 1 < cuts.len() {
                let after = mode(b_end, cuts[ci + 1], stock_out);
                let u_after = rates(sc, &after, &y);
                if let Control::Bang(bs) = control {
                    if !stock_out {
                        for i in 0..k_groups {
                            if (bs.get(i, week) - b_end).abs() < 1e-14 {
                                traj.events.push(Event {
                                    time: b_end,
                                    kind: EventKind::Switch,
                                    region: Some(i),
                                    week,
                                });
                            }
                        }
                    }
                }
                traj.knots.push(Knot {
                    step,
                    time: b_end,
                    state: y.clone(),
                    u_before: u_left_node.clone(),
                    u_after,
                });
            }
            a = b_end;
        }
    }
    // switch times that coincide with grid nodes never split a step
    if let Control::Bang(bs) = control {
        for i in 0..k_groups {
            for w in 0..sc.weeks() {
                let tau = bs.get(i, w);
                let on_node = ((tau / h).round() * h - tau).abs() < 1e-12;
                let week_end = WEEK * (w + 1) as f64;
                if on_node && tau > WEEK * w as f64 && tau < week_end && tau > start.node as f64 * h {
                    let k = (tau / h).round() as usize - start.node;
                    if !traj.stock_out[k - 1] && traj.u_left_at(k)[i] > 0.0 {
                        traj.events.push(Event {
                            time: tau,
                            kind: EventKind::Switch,
                            region: Some(i),
                            week: w,
                        });
                    }
                }
            }
        }
    }
    traj.events
        .sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite event times"));
    Ok(traj)
}

/// Composite Simpson rule on uniformly spaced samples; the last three
/// intervals use the 3/8 rule when the interval count is odd.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let (even_end, tail) = if n % 2 == 0 { (n, false) } else { (n - 3, true) };
            let mut acc = 0.0;
            if even_end > 0 {
                let mut sum = values[0] + values[even_end];
                for (j, v) in values.iter().enumerate().take(even_end).skip(1) {
                    sum += if j % 2 == 1 { 4.0 * v } else { 2.0 * v };
                }
                acc += sum * h / 3.0;
            }
            if tail {
                let v = &values[even_end..];
                acc += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            acc
        }
    }
}

fn require_complete(traj: &StateTrajectory, sc: &Scenario) -> Result<()> {
    if traj.groups != sc.groups || traj.stages != sc.stages {
        return Err(Error::IncompleteTrajectory("dimension mismatch".into()));
    }
    if !traj.is_complete(sc.horizon) {
        return Err(Error::IncompleteTrajectory(format!(
            "covers [{}, {}], horizon is {}",
            traj.times.first().copied().unwrap_or(f64::NAN),
            traj.times.last().copied().unwrap_or(f64::NAN),
            sc.horizon
        )));
    }
    Ok(())
}

/// Running health cost `sum_i n_i <c, x_i(t_k)>` at every node.
pub fn running_cost_series(traj: &StateTrajectory, sc: &Scenario) -> Vec<f64> {
    (0..traj.nodes()).map(|k| sc.running_cost(traj.x_at(k))).collect()
}

/// `c_v V(T) + sum_i int n_i <c, x_i> dt`.
pub fn cost_linear(traj: &StateTrajectory, sc: &Scenario) -> Result<f64> {
    require_complete(traj, sc)?;
    let health = simpson(&running_cost_series(traj, sc), traj.h);
    Ok(sc.dose_cost * traj.v[traj.nodes() - 1] + health)
}

/// Quadratic-effort integrand `sum_j n_j (u_j s_j)^2` at every node.
pub fn effort_square_series(traj: &StateTrajectory, sc: &Scenario) -> Vec<f64> {
    (0..traj.nodes())
        .map(|k| {
            let s = traj.s_at(k);
            let u = traj.u_at(k);
            (0..sc.groups)
                .map(|j| sc.populations[j] * (u[j] * s[j]).powi(2))
                .sum()
        })
        .collect()
}

/// `c_q sum_j int n_j u_j^2 s_j^2 dt + sum_i int n_i <c, x_i> dt`.
pub fn cost_quadratic(traj: &StateTrajectory, sc: &Scenario, c_q: f64) -> Result<f64> {
    require_complete(traj, sc)?;
    let health = simpson(&running_cost_series(traj, sc), traj.h);
    let effort = simpson(&effort_square_series(traj, sc), traj.h);
    Ok(c_q * effort + health)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let f = |t: f64| 2.0 * t * t * t - t * t + 3.0;
        let exact = |t: f64| 0.5 * t.powi(4) - t.powi(3) / 3.0 + 3.0 * t;
        for n in [2usize, 3, 4, 7, 10] {
            let h = 1.5 / n as f64;
            let v: Vec<f64> = (0..=n).map(|j| f(j as f64 * h)).collect();
            assert!((simpson(&v, h) - exact(1.5)).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn step_must_tile_weeks() {
        assert_eq!(steps_per_week(0.01).unwrap(), 700);
        assert_eq!(steps_per_week(0.05).unwrap(), 140);
        assert!(matches!(steps_per_week(0.03), Err(Error::StepOffWeekBoundary { .. })));
        let sc = preset("cities3").unwrap();
        assert!(simulate(&sc, &BangSchedule::never(&sc).into(), 0.3).is_err());
    }

    #[test]
    fn disease_free_state_is_invariant() {
        let mut sc = preset("cities3").unwrap();
        sc.initial.x0.iter_mut().for_each(|v| *v = 0.0);
        let traj = simulate(&sc, &Control::Grid(GridControl::zeros(&sc, 0.05)), 0.05).unwrap();
        for k in 0..traj.nodes() {
            assert_eq!(traj.s_at(k), sc.initial.s0.as_slice());
            assert!(traj.x_at(k).iter().all(|&v| v == 0.0));
            assert_eq!(traj.v[k], 0.0);
        }
        assert_eq!(cost_linear(&traj, &sc).unwrap(), 0.0);
    }

    #[test]
    fn never_vaccinating_leaves_v_at_zero() {
        let sc = preset("cities3").unwrap();
        let traj = simulate(&sc, &BangSchedule::never(&sc).into(), 0.05).unwrap();
        assert!(traj.v.iter().all(|&v| v == 0.0));
        assert!(traj.events_of(EventKind::Switch).next().is_none());
        let health = simpson(&running_cost_series(&traj, &sc), traj.h);
        assert_eq!(cost_linear(&traj, &sc).unwrap(), health);
        assert_eq!(cost_quadratic(&traj, &sc, 3.0).unwrap(), health);
    }

    #[test]
    fn full_week_vaccination_hits_first_budget() {
        let sc = preset("cities3").unwrap();
        let traj = simulate(&sc, &BangSchedule::full(&sc).into(), 0.01).unwrap();
        let hit = traj
            .events_of(EventKind::StockExhausted)
            .find(|e| e.week == 0)
            .expect("week-0 stock runs out");
        assert!(hit.time < 7.0);
        let rate: f64 = (0..3).map(|i| sc.populations[i] * sc.max_rate[i]).sum();
        assert!((hit.time - (1.0 / 30.0) / rate).abs() < 1e-8);
        let k = (hit.time / 0.01).ceil() as usize;
        assert!(traj.u_at(k).iter().all(|&u| u == 0.0));
        assert!(traj.u_at(k - 2).iter().all(|&u| u > 0.0));
        for (k, &v) in traj.v.iter().enumerate() {
            assert!(v <= traj.budget[k] + 1e-10);
        }
    }

    #[test]
    fn saturated_quadratic_effort_before_clamp() {
        // huge budgets: the mixed constraint saturates all horizon long
        let mut sc = preset("cities3").unwrap();
        sc.shipments.week_budgets = vec![10.0; 4];
        let traj = simulate(&sc, &BangSchedule::full(&sc).into(), 0.05).unwrap();
        let effort = simpson(&effort_square_series(&traj, &sc), traj.h);
        let expect: f64 = (0..3)
            .map(|j| sc.populations[j] * sc.max_rate[j].powi(2))
            .sum::<f64>()
            * 28.0;
        // the node at T switches off, so only the last Simpson weight differs
        let tail: f64 = (0..3).map(|j| sc.populations[j] * sc.max_rate[j].powi(2)).sum::<f64>()
            * traj.h
            / 3.0;
        assert!((effort + tail - expect).abs() < 1e-14, "{effort} vs {expect}");
    }

    #[test]
    fn interior_switches_are_recorded() {
        let sc = preset("cities3").unwrap();
        let mut b = BangSchedule::never(&sc);
        b.set(1, 0, 1.234567);
        b.set(2, 2, 15.5);
        let traj = simulate(&sc, &b.clone().into(), 0.01).unwrap();
        let sw: Vec<_> = traj.events_of(EventKind::Switch).collect();
        assert_eq!(sw.len(), 2);
        assert_eq!(sw[0].region, Some(1));
        assert!((sw[0].time - 1.234567).abs() < 1e-15);
        assert_eq!(sw[1].region, Some(2));
        assert!((sw[1].time - 15.5).abs() < 1e-15);
        // u s sits on the throughput cap on the active arc
        let k = 50;
        let us = traj.u_at(k)[1] * traj.s_at(k)[1];
        assert!((us - sc.max_rate[1]).abs() < 1e-15);
        assert_eq!(traj.u_at(k)[0], 0.0);
    }

    #[test]
    fn restart_reproduces_tail() {
        let sc = preset("cities3").unwrap();
        let control: Control = BangSchedule::uniform(&sc, 0.6).into();
        let opts = SimOptions::new(0.01);
        let full = simulate_with(&sc, &control, &opts).unwrap();
        let k0 = 900;
        let start = StartPoint {
            node: k0,
            state: full.state_at(k0),
            stock_out: full.stock_out[k0],
        };
        let tail = simulate_from(&sc, &control, &opts, &start).unwrap();
        assert_eq!(tail.nodes(), full.nodes() - k0);
        // the stored node lacks the sub-ulp compensation carry of the full run
        let last = tail.nodes() - 1;
        for (a, b) in tail.state_at(last).iter().zip(full.state_at(full.nodes() - 1)) {
            assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn wrong_grid_shape_is_rejected() {
        let sc = preset("cities3").unwrap();
        let g = GridControl::zeros(&sc, 0.02);
        assert!(matches!(simulate(&sc, &g.into(), 0.01), Err(Error::ControlShape(_))));
        assert!(GridControl::new(2, 0.1, vec![0.0, -1.0]).is_err());
        assert!(BangSchedule::new(1, 1, vec![8.0]).is_err());
    }
}
