//! Problem instances: the metapopulation network, linear disease dynamics,
//! running and dose costs, and the weekly shipment data.
//!
//! Every group `i` carries a susceptible proportion `s_i`, a vector of `d`
//! disease-stage proportions `x_i` (group-major storage, `x[i * d + m]`), and
//! the whole population shares one cumulative vaccination counter `V`.
//! Forces of infection are linear, `f_i(x) = sum_j <B_ij, x_j>`, and
//! within-group progression is `g(x_i) = G x_i`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Days per shipment period.
pub const WEEK: f64 = 7.0;

/// Weekly vaccine shipments and the smoothing width used for the smoothed
/// cumulative supply curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipmentSchedule {
    /// Doses (population-normalized) arriving at the start of each week.
    pub week_budgets: Vec<f64>,
    /// Width of the smoothing window centred on each week boundary, in days.
    pub epsilon: f64,
}

impl ShipmentSchedule {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn new(week_budgets: Vec<f64>, epsilon: f64) -> Result<Self> {
        if week_budgets.is_empty() {
            return Err(Error::InvalidScenario("no weekly budgets".into()));
        }
        if let Some((w, b)) = week_budgets
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.is_finite() && **b >= 0.0))
        {
            return Err(Error::InvalidScenario(format!(
                "week_budgets[{w}] = {b} must be a nonnegative number"
            )));
        }
        if !(epsilon > 0.0 && epsilon < WEEK) {
            return Err(Error::InvalidScenario(format!(
                "epsilon = {epsilon} must lie in (0, 7)"
            )));
        }
        Ok(Self {
            week_budgets,
            epsilon,
        })
    }

    pub fn weeks(&self) -> usize {
        self.week_budgets.len()
    }

    pub fn horizon(&self) -> f64 {
        WEEK * self.weeks() as f64
    }

    /// Cumulative budget available during week `w` (the plateau value of `D`).
    pub fn plateau(&self, week: usize) -> f64 {
        let last = week.min(self.weeks() - 1);
        self.week_budgets[..=last].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.plateau(self.weeks() - 1)
    }

    /// Week index containing `t`; the horizon itself belongs to the last week.
    pub fn week_of(&self, t: f64) -> usize {
        ((t / WEEK).floor().max(0.0) as usize).min(self.weeks() - 1)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::Domain { t, horizon });
        }
        Ok(())
    }

    /// Right-continuous step function `D(t)` of cumulative shipments.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.plateau(self.week_of(t)))
    }

    /// `D_eps(t)` with the schedule's own smoothing width.
    pub fn smoothed(&self, t: f64) -> Result<f64> {
        self.smoothed_with(t, self.epsilon)
    }

    /// Smooth, nondecreasing version of `D`: equal to `D` except on
    /// `[7w - eps/2, 7w + eps/2]` around interior week boundaries, where the two
    /// plateaus are joined by a `C^inf` smoothstep (all derivatives vanish at
    /// both ends of the window).
    pub fn smoothed_with(&self, t: f64, epsilon: f64) -> Result<f64> {
        self.check_domain(t)?;
        if !(epsilon > 0.0 && epsilon < WEEK) {
            return Err(Error::InvalidScenario(format!(
                "epsilon = {epsilon} must lie in (0, 7)"
            )));
        }
        let half = 0.5 * epsilon;
        let nearest = (t / WEEK).round();
        let boundary = nearest * WEEK;
        let w = nearest as usize;
        if w == 0 || w >= self.weeks() || (t - boundary).abs() >= half {
            return Ok(self.plateau(self.week_of(t)));
        }
        let lo = self.plateau(w - 1);
        let hi = self.plateau(w);
        let xi = (t - boundary) / epsilon + 0.5;
        Ok(lo + (hi - lo) * smoothstep(xi))
    }
}

fn smoothstep(xi: f64) -> f64 {
    fn bump(z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            (-1.0 / z).exp()
        }
    }
    if xi <= 0.0 {
        return 0.0;
    }
    if xi >= 1.0 {
        return 1.0;
    }
    let a = bump(xi);
    let b = bump(1.0 - xi);
    a / (a + b)
}

/// Initial state of every group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    /// Susceptible proportion per group.
    pub s0: Vec<f64>,
    /// Disease-stage proportions, group-major (`x0[i * d + m]`).
    pub x0: Vec<f64>,
    /// Cumulative vaccinations at `t = 0`.
    pub v0: f64,
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub groups: usize,
    pub stages: usize,
    /// Group sizes, normalized to sum to one.
    pub populations: Vec<f64>,
    /// Force-of-infection coefficients `B[(i * K + j) * d + m]`: the weight of
    /// stage `m` of group `j` in the force of infection on group `i`.
    pub transmission: Vec<f64>,
    /// Within-group progression matrix `G`, row-major `d x d`.
    pub progression: Vec<f64>,
    /// Running health cost per individual per day, one entry per stage.
    pub health_cost: Vec<f64>,
    /// Cost per administered dose.
    pub dose_cost: f64,
    /// Maximum vaccination throughput per group (proportion of the group per day).
    pub max_rate: Vec<f64>,
    /// Optional linear migration of susceptibles, `K x K` row-major, acting on
    /// head counts `n_j s_j`. Columns must sum to zero and off-diagonal entries
    /// must be nonnegative.
    pub migration: Option<Vec<f64>>,
    pub shipments: ShipmentSchedule,
    pub horizon: f64,
    pub initial: InitialCondition,
}

impl Scenario {
    /// Structural validation. Assumption checks on signs and reachability are
    /// diagnostic only and live in [`validate_assumptions`].
    pub fn validate(&self) -> Result<()> {
        let k = self.groups;
        let d = self.stages;
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if k == 0 {
            return bad("at least one group is required".into());
        }
        if d < 2 {
            return bad(format!("stage count d = {d} must be at least 2"));
        }
        let expect = |name: &str, len: usize, want: usize| -> Result<()> {
            if len != want {
                Err(Error::InvalidScenario(format!(
                    "{name} has length {len}, expected {want}"
                )))
            } else {
                Ok(())
            }
        };
        expect("populations", self.populations.len(), k)?;
        expect("transmission", self.transmission.len(), k * k * d)?;
        expect("progression", self.progression.len(), d * d)?;
        expect("health_cost", self.health_cost.len(), d)?;
        expect("max_rate", self.max_rate.len(), k)?;
        expect("s0", self.initial.s0.len(), k)?;
        expect("x0", self.initial.x0.len(), k * d)?;
        if let Some(q) = &self.migration {
            expect("migration", q.len(), k * k)?;
        }
        let finite = |name: &str, v: &[f64]| -> Result<()> {
            match v.iter().position(|x| !x.is_finite()) {
                Some(i) => Err(Error::InvalidScenario(format!("{name}[{i}] is not finite"))),
                None => Ok(()),
            }
        };
        finite("transmission", &self.transmission)?;
        finite("progression", &self.progression)?;
        finite("health_cost", &self.health_cost)?;
        finite("x0", &self.initial.x0)?;

        for (i, &n) in self.populations.iter().enumerate() {
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::NonPositive {
                    name: "populations",
                    index: i,
                    value: n,
                });
            }
        }
        let total: f64 = self.populations.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("populations sum to {total}, expected 1"));
        }
        for (i, &v) in self.max_rate.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositive {
                    name: "v_max",
                    index: i,
                    value: v,
                });
            }
        }
        if !(self.dose_cost > 0.0 && self.dose_cost.is_finite()) {
            return Err(Error::NonPositive {
                name: "c_v",
                index: 0,
                value: self.dose_cost,
            });
        }
        let weeks = self.horizon / WEEK;
        if !(self.horizon > 0.0) || (weeks - weeks.round()).abs() > 1e-9 {
            return bad(format!("horizon T = {} is not a multiple of 7", self.horizon));
        }
        if weeks.round() as usize != self.shipments.weeks() {
            return bad(format!(
                "{} weekly budgets for a {}-day horizon",
                self.shipments.weeks(),
                self.horizon
            ));
        }
        for i in 0..k {
            let s0 = self.initial.s0[i];
            if !(s0 > 0.0 && s0 <= 1.0) {
                return bad(format!("s0[{i}] = {s0} must lie in (0, 1]"));
            }
            let xs = &self.initial.x0[i * d..(i + 1) * d];
            if let Some(m) = xs.iter().position(|&v| v < 0.0) {
                return bad(format!("x0[{m}][{i}] is negative"));
            }
            let mass = s0 + xs.iter().sum::<f64>();
            if mass > 1.0 + 1e-12 {
                return bad(format!("group {i} initial proportions sum to {mass} > 1"));
            }
        }
        if !(self.initial.v0 >= 0.0) {
            return bad("V0 must be nonnegative".into());
        }
        if let Some(q) = &self.migration {
            for col in 0..k {
                let sum: f64 = (0..k).map(|row| q[row * k + col]).sum();
                if sum.abs() > 1e-12 {
                    return bad(format!("migration column {col} sums to {sum}, expected 0"));
                }
                for row in 0..k {
                    if row != col && q[row * k + col] < 0.0 {
                        return bad(format!("migration[{row}][{col}] is negative"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn weeks(&self) -> usize {
        self.shipments.weeks()
    }

    /// Length of the flat state vector `(s, x, V)`.
    pub fn state_len(&self) -> usize {
        self.groups * (self.stages + 1) + 1
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.state_len());
        y.extend_from_slice(&self.initial.s0);
        y.extend_from_slice(&self.initial.x0);
        y.push(self.initial.v0);
        y
    }

    #[inline]
    pub fn beta(&self, i: usize, j: usize) -> &[f64] {
        let d = self.stages;
        let base = (i * self.groups + j) * d;
        &self.transmission[base..base + d]
    }

    /// Force of infection on group `i` for the stage matrix `x` (group-major).
    #[inline]
    pub fn force_of_infection(&self, i: usize, x: &[f64]) -> f64 {
        let d = self.stages;
        let row = &self.transmission[i * self.groups * d..(i + 1) * self.groups * d];
        row.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    /// `G x_i` written into `out`.
    #[inline]
    pub fn progression_apply(&self, xi: &[f64], out: &mut [f64]) {
        let d = self.stages;
        for (r, o) in out.iter_mut().enumerate().take(d) {
            *o = self.progression[r * d..(r + 1) * d]
                .iter()
                .zip(xi)
                .map(|(g, v)| g * v)
                .sum();
        }
    }

    /// Migration term in proportion units, `q_i(s) = (1/n_i) sum_j Q_ij n_j s_j`,
    /// added into `out`.
    pub fn migration_add(&self, s: &[f64], out: &mut [f64]) {
        if let Some(q) = &self.migration {
            let k = self.groups;
            for i in 0..k {
                let mut acc = 0.0;
                for j in 0..k {
                    acc += q[i * k + j] * self.populations[j] * s[j];
                }
                out[i] += acc / self.populations[i];
            }
        }
    }

    /// `d q_i / d s_j` in proportion units.
    pub fn migration_jacobian(&self, i: usize, j: usize) -> f64 {
        match &self.migration {
            Some(q) => {
                let k = self.groups;
                q[i * k + j] * self.populations[j] / self.populations[i]
            }
            None => 0.0,
        }
    }

    pub fn has_migration(&self) -> bool {
        self.migration
            .as_ref()
            .is_some_and(|q| q.iter().any(|&v| v != 0.0))
    }

    /// Weighted running health cost `sum_i n_i <c, x_i>`.
    pub fn running_cost(&self, x: &[f64]) -> f64 {
        let d = self.stages;
        (0..self.groups)
            .map(|i| {
                let xi = &x[i * d..(i + 1) * d];
                self.populations[i]
                    * self.health_cost.iter().zip(xi).map(|(c, v)| c * v).sum::<f64>()
            })
            .sum()
    }

    /// Total population mass `sum_i n_i (s_i + sum_m x_im) + V`.
    pub fn population_mass(&self, s: &[f64], x: &[f64], v: f64) -> f64 {
        let d = self.stages;
        (0..self.groups)
            .map(|i| self.populations[i] * (s[i] + x[i * d..(i + 1) * d].iter().sum::<f64>()))
            .sum::<f64>()
            + v
    }
}

/// Inputs to [`build_sir_commuter`].
#[derive(Debug, Clone, PartialEq)]
pub struct CommuterParams {
    /// Transmission rate of each city.
    pub beta: Vec<f64>,
    pub gamma: f64,
    /// Fraction of time residents spend in their home city.
    pub alpha: f64,
    /// Row-stochastic commuting matrix, `commuting[i][l]` = share of city `i`'s
    /// commuters that travel to city `l`.
    pub commuting: Vec<Vec<f64>>,
    pub populations: Vec<f64>,
    pub max_rate: Vec<f64>,
    pub shipments: ShipmentSchedule,
    pub dose_cost: f64,
    /// Cost per infectious individual per day.
    pub hospital_cost: f64,
    pub horizon: f64,
    pub s0: Vec<f64>,
    pub i0: Vec<f64>,
    pub migration: Option<Vec<f64>>,
}

/// Effective city-to-city transmission coefficients for SIR cities coupled by
/// daily commuting.
///
/// With presence matrix `P = alpha I + (1 - alpha) M`, a resident of `i` spends
/// fraction `P_il` of the day in `l`, where the prevalence is the presence-weighted
/// share of infectious visitors. Hence
/// `kappa_ij = sum_l P_il beta_l n_j P_jl / sum_k n_k P_kl`.
pub fn commuter_kappa(
    beta: &[f64],
    alpha: f64,
    commuting: &[Vec<f64>],
    populations: &[f64],
) -> Vec<f64> {
    let k = beta.len();
    let presence = |i: usize, l: usize| {
        let id = if i == l { alpha } else { 0.0 };
        id + (1.0 - alpha) * commuting[i][l]
    };
    let present: Vec<f64> = (0..k)
        .map(|l| (0..k).map(|m| populations[m] * presence(m, l)).sum())
        .collect();
    let mut kappa = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            kappa[i * k + j] = (0..k)
                .filter(|&l| present[l] > 0.0)
                .map(|l| presence(i, l) * beta[l] * populations[j] * presence(j, l) / present[l])
                .sum();
        }
    }
    kappa
}

/// Builds an SIR metapopulation (`x = (I, R)`) whose cities are coupled by
/// daily commuting.
pub fn build_sir_commuter(p: &CommuterParams) -> Result<Scenario> {
    let k = p.beta.len();
    if p.commuting.len() != k || p.commuting.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidScenario(format!("commuting matrix must be {k} x {k}")));
    }
    for (row, r) in p.commuting.iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if r.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotStochastic { row, sum });
        }
    }
    for (i, &b) in p.beta.iter().enumerate() {
        if !(b > 0.0) {
            return Err(Error::NonPositive {
                name: "beta",
                index: i,
                value: b,
            });
        }
    }
    if !(p.gamma > 0.0) {
        return Err(Error::NonPositive {
            name: "gamma",
            index: 0,
            value: p.gamma,
        });
    }
    if !(p.alpha > 0.0 && p.alpha <= 1.0) {
        return Err(Error::InvalidScenario(format!(
            "alpha = {} must lie in (0, 1]",
            p.alpha
        )));
    }
    if p.populations.len() != k || p.s0.len() != k || p.i0.len() != k {
        return Err(Error::InvalidScenario(
            "populations, s0 and i0 must have one entry per city".into(),
        ));
    }
    let kappa = commuter_kappa(&p.beta, p.alpha, &p.commuting, &p.populations);
    let d = 2;
    let mut transmission = vec![0.0; k * k * d];
    for i in 0..k {
        for j in 0..k {
            transmission[(i * k + j) * d] = kappa[i * k + j];
        }
    }
    let mut x0 = vec![0.0; k * d];
    for i in 0..k {
        x0[i * d] = p.i0[i];
        x0[i * d + 1] = (1.0 - p.s0[i] - p.i0[i]).max(0.0);
    }
    let scenario = Scenario {
        groups: k,
        stages: d,
        populations: p.populations.clone(),
        transmission,
        progression: vec![-p.gamma, 0.0, p.gamma, 0.0],
        health_cost: vec![p.hospital_cost, 0.0],
        dose_cost: p.dose_cost,
        max_rate: p.max_rate.clone(),
        migration: p.migration.clone(),
        shipments: p.shipments.clone(),
        horizon: p.horizon,
        initial: InitialCondition {
            s0: p.s0.clone(),
            x0,
            v0: 0.0,
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Outcome of one structural assumption check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    /// Description of the first violating entry, if any.
    pub violation: Option<String>,
}

/// Result of [`validate_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, violation: Option<String>) -> AssumptionCheck {
    AssumptionCheck {
        name: name.to_string(),
        passed: violation.is_none(),
        violation,
    }
}

/// Checks the sign, Metzler and cost-reachability assumptions under which the
/// bang-bang results hold. Diagnostic only.
pub fn validate_assumptions(sc: &Scenario) -> AssumptionReport {
    let k = sc.groups;
    let d = sc.stages;
    let transmission = sc
        .transmission
        .iter()
        .position(|&b| b < 0.0)
        .map(|p| {
            let (ij, m) = (p / d, p % d);
            format!("B[{}][{}][{m}] = {} < 0", ij / k, ij % k, sc.transmission[p])
        });
    let cost = sc
        .health_cost
        .iter()
        .position(|&c| c < 0.0)
        .map(|m| format!("c[{m}] = {} < 0", sc.health_cost[m]));
    let mut metzler = None;
    'outer: for r in 0..d {
        for c in 0..d {
            if r != c && sc.progression[r * d + c] < 0.0 {
                metzler = Some(format!("G[{r}][{c}] = {} < 0", sc.progression[r * d + c]));
                break 'outer;
            }
        }
    }
    if metzler.is_none() {
        for c in 0..d {
            let sum: f64 = (0..d).map(|r| sc.progression[r * d + c]).sum();
            if sum.abs() > 1e-12 {
                metzler = Some(format!("column {c} of G sums to {sum}"));
                break;
            }
        }
    }
    let reach = if sc.health_cost[0] > 0.0 {
        None
    } else {
        let reachable = reachable_stages(&sc.progression, d);
        if reachable
            .iter()
            .enumerate()
            .any(|(j, &r)| j > 0 && r && sc.health_cost[j] > 0.0)
        {
            None
        } else {
            Some("no cost-bearing stage is reachable from the infection inflow stage".into())
        }
    };
    AssumptionReport {
        checks: vec![
            check("transmission_nonnegative", transmission),
            check("cost_nonnegative", cost),
            check("progression_metzler", metzler),
            check("cost_reachable", reach),
        ],
    }
}

/// Stages reachable from stage 0 along strictly positive transitions `G[next][prev]`.
fn reachable_stages(g: &[f64], d: usize) -> Vec<bool> {
    let mut seen = vec![false; d];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(prev) = queue.pop_front() {
        for next in 0..d {
            if next != prev && !seen[next] && g[next * d + prev] > 0.0 {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budgets() -> ShipmentSchedule {
        ShipmentSchedule::new(vec![1.0 / 30.0, 2.0 / 30.0, 3.0 / 30.0, 4.0 / 30.0], 0.1).unwrap()
    }

    #[test]
    fn cumulative_shipments_follow_partial_sums() {
        let s = budgets();
        assert_eq!(s.cumulative(3.0).unwrap(), 1.0 / 30.0);
        assert!((s.cumulative(10.0).unwrap() - 3.0 / 30.0).abs() < 1e-15);
        assert!((s.cumulative(27.9).unwrap() - 10.0 / 30.0).abs() < 1e-15);
        assert!((s.cumulative(28.0).unwrap() - 10.0 / 30.0).abs() < 1e-15);
        assert!(matches!(s.cumulative(28.5), Err(Error::Domain { .. })));
        assert!(matches!(s.cumulative(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn zero_budgets_give_zero_supply() {
        let s = ShipmentSchedule::new(vec![0.0; 4], 0.1).unwrap();
        for t in [0.0, 3.5, 7.0, 20.0, 28.0] {
            assert_eq!(s.cumulative(t).unwrap(), 0.0);
            assert_eq!(s.smoothed(t).unwrap(), 0.0);
        }
    }

    #[test]
    fn smoothed_supply_meets_plateaus_and_is_symmetric() {
        let s = budgets();
        let eps = s.epsilon;
        for w in 1..4 {
            let b = 7.0 * w as f64;
            let lo = s.plateau(w - 1);
            let hi = s.plateau(w);
            assert_eq!(s.smoothed(b - eps / 2.0).unwrap(), lo);
            assert_eq!(s.smoothed(b + eps / 2.0).unwrap(), hi);
            let mid = s.smoothed(b).unwrap();
            assert!((mid - 0.5 * (lo + hi)).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothed_supply_has_flat_second_derivative_at_joins() {
        let s = budgets();
        let h = 1e-4;
        for w in 1..4 {
            for side in [-1.0, 1.0] {
                let t = 7.0 * w as f64 + side * s.epsilon / 2.0;
                let d2 = (s.smoothed(t + h).unwrap() - 2.0 * s.smoothed(t).unwrap()
                    + s.smoothed(t - h).unwrap())
                    / (h * h);
                assert!(d2.abs() < 1e-6, "week {w} side {side}: {d2}");
            }
        }
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(ShipmentSchedule::new(vec![-1.0], 0.1).is_err());
        assert!(ShipmentSchedule::new(vec![1.0], 0.0).is_err());
        assert!(ShipmentSchedule::new(vec![1.0], 7.0).is_err());
        assert!(ShipmentSchedule::new(vec![], 0.1).is_err());
    }

    fn single_city(alpha: f64) -> CommuterParams {
        CommuterParams {
            beta: vec![0.25],
            gamma: 1.0 / 7.0,
            alpha,
            commuting: vec![vec![1.0]],
            populations: vec![1.0],
            max_rate: vec![0.01],
            shipments: ShipmentSchedule::new(vec![0.1], 0.1).unwrap(),
            dose_cost: 0.01,
            hospital_cost: 100.0,
            horizon: 7.0,
            s0: vec![0.97],
            i0: vec![0.03],
            migration: None,
        }
    }

    #[test]
    fn single_city_reduces_to_plain_sir() {
        for alpha in [0.1, 0.64, 1.0] {
            let sc = build_sir_commuter(&single_city(alpha)).unwrap();
            assert!((sc.beta(0, 0)[0] - 0.25).abs() < 1e-15);
            assert_eq!(sc.beta(0, 0)[1], 0.0);
            assert!(validate_assumptions(&sc).all_passed());
        }
    }

    #[test]
    fn commuter_rejects_bad_inputs() {
        let mut p = single_city(0.5);
        p.commuting = vec![vec![0.9]];
        assert!(matches!(
            build_sir_commuter(&p),
            Err(Error::NotStochastic { row: 0, .. })
        ));
        let mut p = single_city(0.5);
        p.beta = vec![-0.1];
        assert!(matches!(build_sir_commuter(&p), Err(Error::NonPositive { .. })));
        let mut p = single_city(0.5);
        p.gamma = 0.0;
        assert!(build_sir_commuter(&p).is_err());
        let mut p = single_city(0.5);
        p.alpha = 0.0;
        assert!(build_sir_commuter(&p).is_err());
    }

    #[test]
    fn zero_cost_fails_reachability() {
        let mut sc = build_sir_commuter(&single_city(0.64)).unwrap();
        sc.health_cost = vec![0.0, 0.0];
        let report = validate_assumptions(&sc);
        assert!(!report.get("cost_reachable").unwrap().passed);
        assert!(report.get("progression_metzler").unwrap().passed);
    }

    #[test]
    fn seir_chain_reaches_cost_stage() {
        // stages E, I, H, R with E -> I -> H -> R
        let (a, b, c) = (0.2, 0.1, 0.05);
        let g = vec![
            -a, 0.0, 0.0, 0.0, //
            a, -b, 0.0, 0.0, //
            0.0, b, -c, 0.0, //
            0.0, 0.0, c, 0.0,
        ];
        assert_eq!(reachable_stages(&g, 4), vec![true; 4]);
        let mut sc = build_sir_commuter(&single_city(0.64)).unwrap();
        sc.stages = 4;
        sc.progression = g;
        sc.health_cost = vec![0.0, 0.0, 1.0, 0.0];
        sc.transmission = vec![0.3, 0.0, 0.0, 0.0];
        let report = validate_assumptions(&sc);
        assert!(report.all_passed(), "{report:?}");
        // break the chain before the cost stage
        sc.progression[2 * 4 + 1] = 0.0;
        sc.progression[4 + 1] = 0.0;
        assert!(!validate_assumptions(&sc).get("cost_reachable").unwrap().passed);
    }

    #[test]
    fn metzler_violation_names_the_entry() {
        let mut sc = build_sir_commuter(&single_city(0.64)).unwrap();
        sc.progression = vec![-0.1, -0.1, 0.1, 0.1];
        let c = validate_assumptions(&sc);
        let m = c.get("progression_metzler").unwrap();
        assert!(!m.passed);
        assert!(m.violation.as_ref().unwrap().contains("G[0][1]"));
    }
}
