//! Numerical certificates for a candidate policy: the bang-bang structure,
//! absence of singular arcs, the sign pattern of the costates, the
//! first-order optimality conditions and forward invariance.
//!
//! Every check is a pure function of its inputs and returns a
//! [`CheckSection`]; [`VerificationReport`] collects them.

use crate::adjoint::{costates_for_schedule, integrate_adjoint, AdjointTrajectory, LambdaEstimate, Multipliers};
use crate::error::Result;
use crate::forward::{
    simulate, steps_per_week, BangSchedule, Control, EventKind, StateTrajectory, EXHAUSTION_TOL,
};
use crate::model::{validate_assumptions, Scenario};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

/// Tolerances of all checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Structural residual tolerance (relative to `v_max` for rates).
    pub structural: f64,
    /// `|phi|` below this counts as zero.
    pub tol_phi: f64,
    /// Shortest singular interval that fails the no-singular check (days).
    pub min_len: f64,
    /// Fraction of nodes whose control must agree with the sign of `phi`.
    pub quorum: f64,
    pub min_multiplier: f64,
    pub complementarity: f64,
    pub drift: f64,
    pub positivity: f64,
    pub supply: f64,
}

impl Tolerances {
    pub fn for_scenario(sc: &Scenario) -> Self {
        let n_max = sc.populations.iter().cloned().fold(0.0, f64::max);
        Self {
            structural: 1e-8,
            tol_phi: 1e-4 * sc.dose_cost * n_max,
            min_len: 0.5,
            quorum: 0.99,
            min_multiplier: -1e-8,
            complementarity: 1e-12,
            drift: 1e-9,
            positivity: 1e-10,
            supply: 1e-10,
        }
    }
}

/// First violation found by a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub region: Option<usize>,
    pub time: f64,
    pub detail: String,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSection {
    pub name: String,
    pub passed: bool,
    /// Set when the check's precondition does not hold; a skipped check passes.
    pub skipped: Option<String>,
    /// The underlying theory does not cover this scenario (e.g. migration).
    pub experimental: bool,
    pub worst_residual: f64,
    pub offending: Option<Offender>,
    /// Named sub-results and diagnostics.
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CheckSection {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            passed: true,
            skipped: None,
            experimental: false,
            worst_residual: 0.0,
            offending: None,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn skip(mut self, reason: impl Into<String>) -> Self {
        self.skipped = Some(reason.into());
        self
    }

    /// Records a failure; the first offender is kept.
    fn fail(&mut self, region: Option<usize>, time: f64, detail: impl Into<String>) {
        self.passed = false;
        if self.offending.is_none() {
            self.offending = Some(Offender {
                region,
                time,
                detail: detail.into(),
            });
        }
    }

    fn residual(&mut self, r: f64) {
        self.worst_residual = self.worst_residual.max(r);
    }
}

/// All checks run on one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub sections: Vec<CheckSection>,
    pub tolerances: Tolerances,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(sections: Vec<CheckSection>, tolerances: Tolerances) -> Self {
        let passed = sections.iter().all(|s| s.passed);
        Self {
            passed,
            sections,
            tolerances,
            notes: vec![
                "sign consistency is checked at grid nodes with a quorum, standing in for \
                 'almost everywhere'"
                    .into(),
            ],
        }
    }

    pub fn section(&self, name: &str) -> Option<&CheckSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per check plus the offending point of failures.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let status = match (&s.skipped, s.passed) {
                (Some(_), _) => "SKIP",
                (None, true) => "PASS",
                (None, false) => "FAIL",
            };
            let _ = write!(out, "{status} {:<14} worst residual {:.3e}", s.name, s.worst_residual);
            if s.experimental {
                out.push_str(" [experimental]");
            }
            if let Some(reason) = &s.skipped {
                let _ = write!(out, " ({reason})");
            }
            out.push('\n');
            if let Some(o) = &s.offending {
                let region = o.region.map_or("-".to_string(), |r| (r + 1).to_string());
                let _ = writeln!(out, "     region {region} at t = {:.6}: {}", o.time, o.detail);
            }
        }
        let _ = writeln!(out, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        out
    }
}

fn rate_on(sc: &Scenario, traj: &StateTrajectory, node: usize, i: usize, tol: f64) -> bool {
    traj.u_at(node)[i] * traj.s_at(node)[i] > tol * sc.max_rate[i]
}

/// Week-start activation, no reactivation within a week, and no vaccination
/// once the stock is exhausted; at most one switch per region and week.
pub fn check_structure(sc: &Scenario, traj: &StateTrajectory, tol: f64) -> CheckSection {
    let mut sec = CheckSection::new("structure");
    let spw = match steps_per_week(traj.h) {
        Ok(s) => s,
        Err(e) => return sec.skip(e.to_string()),
    };
    let n = traj.nodes();
    let contacts: Vec<f64> = traj.events_of(EventKind::StockExhausted).map(|e| e.time).collect();
    let mut max_switches = 0usize;
    for w in 0..sc.weeks() {
        let first = (w * spw).saturating_sub(traj.start_node);
        let last = ((w + 1) * spw).saturating_sub(traj.start_node).min(n - 1);
        if first >= last {
            continue;
        }
        for i in 0..sc.groups {
            let mut switches = 0;
            let mut was_on = rate_on(sc, traj, first, i, tol);
            let mut ever_on = was_on;
            for node in first + 1..last {
                let on = rate_on(sc, traj, node, i, tol);
                if on != was_on {
                    switches += 1;
                }
                if on && !was_on {
                    let t = traj.times[node];
                    if ever_on {
                        sec.fail(Some(i), t, "vaccination resumes after stopping within the week");
                    } else {
                        sec.fail(Some(i), t, "vaccination starts after the week start");
                    }
                }
                ever_on |= on;
                was_on = on;
            }
            max_switches = max_switches.max(switches);
            if switches > 1 {
                sec.fail(Some(i), traj.times[first], format!("{switches} switches in week {w}"));
            }
        }
        // nothing is given once the stock is gone
        for node in first..last {
            let gap = traj.budget[node] - traj.v[node];
            if gap > tol && !traj.stock_out[node] {
                continue;
            }
            let t = traj.times[node];
            let contact_ahead = contacts.iter().any(|&c| c > t && c <= t + traj.h);
            if contact_ahead && !traj.stock_out[node] {
                continue;
            }
            for i in 0..sc.groups {
                let us = traj.u_at(node)[i] * traj.s_at(node)[i];
                sec.residual(us / sc.max_rate[i]);
                if us > tol * sc.max_rate[i] {
                    sec.fail(Some(i), t, format!("vaccinating with exhausted stock (gap {gap:.3e})"));
                }
            }
        }
    }
    sec.metrics.insert("max_switches_per_week".into(), max_switches as f64);
    sec.metrics.insert("stock_contacts".into(), contacts.len() as f64);
    sec
}

/// Fails on any interval of at least `min_len` days, away from week
/// boundaries, where some `|phi_i| < tol_phi` while the rate is strictly
/// between its bounds.
pub fn check_no_singular(
    sc: &Scenario,
    adj: &AdjointTrajectory,
    traj: &StateTrajectory,
    tol_phi: f64,
    min_len: f64,
    tol: f64,
) -> CheckSection {
    let mut sec = CheckSection::new("no_singular");
    let n = traj.nodes().min(adj.nodes());
    let shrink = sc.shipments.epsilon / 2.0;
    let mut margin = f64::INFINITY;
    let mut longest = 0.0f64;
    for i in 0..sc.groups {
        let vmax = sc.max_rate[i];
        let mut run_start: Option<f64> = None;
        for node in 0..n {
            let t = traj.times[node];
            let in_week = {
                let r = t % crate::model::WEEK;
                r >= shrink && r <= crate::model::WEEK - shrink && t <= sc.horizon - shrink
            };
            let us = traj.u_at(node)[i] * traj.s_at(node)[i];
            let phi = adj.phi_at(node)[i];
            let to_bang = us.min(vmax - us).max(0.0) / vmax;
            margin = margin.min(phi.abs().max(to_bang * vmax));
            let singular = in_week && phi.abs() < tol_phi && us > tol * vmax && us < vmax * (1.0 - tol);
            match (singular, run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(a)) => {
                    let len = traj.times[node - 1] - a;
                    longest = longest.max(len);
                    if len >= min_len {
                        sec.fail(Some(i), a, format!("singular arc of {len:.3} days"));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(a) = run_start {
            let len = traj.times[n - 1] - a;
            longest = longest.max(len);
            if len >= min_len {
                sec.fail(Some(i), a, format!("singular arc of {len:.3} days"));
            }
        }
    }
    sec.worst_residual = longest;
    sec.metrics.insert("longest_singular_run".into(), longest);
    sec.metrics.insert("margin".into(), margin);
    sec
}

/// Costate sign pattern: `psi_I_i < psi_s_i < 0`, `psi_s_i` strictly
/// increasing and `psi_I_i` nondecreasing, at every node `t_k < T - h`.
pub fn check_shadow_price(sc: &Scenario, adj: &AdjointTrajectory, traj: &StateTrajectory, tol: f64) -> CheckSection {
    let mut sec = CheckSection::new("shadow_price");
    sec.experimental = sc.has_migration();
    if sec.experimental {
        sec.notes
            .push("migration is outside the assumptions of the sign result; reported for inspection".into());
    }
    let assumptions = validate_assumptions(sc);
    let failed: Vec<String> = assumptions
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    if !failed.is_empty() {
        return sec.skip(format!("assumptions not met: {}", failed.join(", ")));
    }
    let n = traj.nodes().min(adj.nodes());
    let min_force = (0..n)
        .flat_map(|node| (0..sc.groups).map(move |i| (node, i)))
        .map(|(node, i)| sc.force_of_infection(i, traj.x_at(node)))
        .fold(f64::INFINITY, f64::min);
    sec.metrics.insert("min_force_of_infection".into(), min_force);
    if !(min_force > tol) {
        return sec.skip(format!("force of infection reaches {min_force:.3e}"));
    }
    let d = sc.stages;
    let (mut order, mut increase, mut infected) = (0usize, 0usize, 0usize);
    for node in 0..n.saturating_sub(2) {
        let t = traj.times[node];
        let (ps, px) = (adj.psi_s_at(node), adj.psi_x_at(node));
        let (ps1, px1) = (adj.psi_s_at(node + 1), adj.psi_x_at(node + 1));
        for i in 0..sc.groups {
            let pi = px[i * d];
            if !(pi < ps[i] && ps[i] < 0.0) {
                order += 1;
                sec.residual((pi - ps[i]).max(ps[i]).max(0.0));
                sec.fail(Some(i), t, format!("psi_I = {pi:.6e}, psi_s = {:.6e}", ps[i]));
            }
            let ds = ps1[i] - ps[i];
            if !(ds > 0.0) {
                increase += 1;
                sec.residual(-ds);
                sec.fail(Some(i), t, format!("psi_s does not increase ({ds:.3e})"));
            }
            let dx = px1[i * d] - pi;
            if dx < 0.0 {
                infected += 1;
                sec.residual(-dx);
                sec.fail(Some(i), t, format!("psi_I decreases ({dx:.3e})"));
            }
        }
    }
    sec.metrics.insert("ordering_violations".into(), order as f64);
    sec.metrics.insert("psi_s_increase_violations".into(), increase as f64);
    sec.metrics.insert("psi_I_increase_violations".into(), infected as f64);
    sec
}

/// Optimality conditions: sign consistency between `phi` and the control,
/// nonnegative multipliers, complementarity, the shape of `lambda` and
/// `psi_V = -c_v`.
pub fn check_pmp(
    sc: &Scenario,
    adj: &AdjointTrajectory,
    traj: &StateTrajectory,
    mult: &Multipliers,
    tol: &Tolerances,
) -> CheckSection {
    let mut sec = CheckSection::new("pmp");
    let n = traj.nodes().min(adj.nodes());
    let k = sc.groups;
    // (a) sign consistency; the final node carries no control information
    let (mut agree, mut total) = (0usize, 0usize);
    let mut first_disagreement: Option<(usize, f64, f64)> = None;
    for node in 0..n - 1 {
        let phi = adj.phi_at(node);
        for j in 0..k {
            total += 1;
            let us = traj.u_at(node)[j] * traj.s_at(node)[j];
            let vmax = sc.max_rate[j];
            let ok = if phi[j] > tol.tol_phi {
                us <= tol.structural * vmax
            } else if phi[j] < -tol.tol_phi {
                us >= vmax * (1.0 - tol.structural)
            } else {
                true
            };
            if ok {
                agree += 1;
            } else if first_disagreement.is_none() {
                first_disagreement = Some((j, traj.times[node], phi[j]));
            }
        }
    }
    let fraction = agree as f64 / total.max(1) as f64;
    sec.metrics.insert("sign_consistency".into(), fraction);
    if fraction < tol.quorum {
        let (j, t, phi) = first_disagreement.expect("disagreement exists");
        sec.fail(Some(j), t, format!("sign consistency {fraction:.4} below quorum (phi = {phi:.3e})"));
    }
    // (b) multipliers
    sec.metrics.insert("min_multiplier".into(), mult.min_r);
    if mult.min_r < tol.min_multiplier {
        let pos = mult.r.iter().position(|&r| r == mult.min_r).unwrap_or(0);
        let (node, col) = (pos / (2 * k), pos % (2 * k));
        sec.residual(-mult.min_r);
        sec.fail(Some(col % k), traj.times[node.min(n - 1)], format!("multiplier {:.3e}", mult.min_r));
    }
    // (c) complementarity
    sec.metrics.insert("complementarity".into(), mult.complementarity);
    sec.metrics.insert("interior_nodes".into(), mult.interior.len() as f64);
    if mult.complementarity > tol.complementarity {
        sec.fail(None, 0.0, format!("complementarity residual {:.3e}", mult.complementarity));
    }
    // (d) lambda: nonincreasing, nonnegative, zero at T, constant while stock remains
    let lambda = &adj.lambda;
    let scale = lambda.iter().cloned().fold(1.0, f64::max);
    let exhausted = traj.exhausted(EXHAUSTION_TOL);
    let week_ends = traj.exhausted_week_ends(EXHAUSTION_TOL);
    let mut lambda_worst = 0.0f64;
    for node in 0..n {
        let t = traj.times[node];
        if lambda[node] < 0.0 {
            lambda_worst = lambda_worst.max(-lambda[node]);
            sec.fail(None, t, format!("lambda = {:.3e} is negative", lambda[node]));
        }
        if node + 1 < n {
            let rise = lambda[node + 1] - lambda[node];
            if rise > 1e-12 * scale {
                lambda_worst = lambda_worst.max(rise);
                sec.fail(None, t, format!("lambda increases by {rise:.3e}"));
            }
            let free = !exhausted[node] && !exhausted[node + 1] && !week_ends.contains(&(node + 1));
            if free && rise.abs() > 1e-12 * scale {
                lambda_worst = lambda_worst.max(rise.abs());
                sec.fail(None, t, "lambda varies while stock remains");
            }
        }
    }
    if lambda[n - 1] != 0.0 {
        sec.fail(None, traj.times[n - 1], format!("lambda(T) = {:.3e}", lambda[n - 1]));
    }
    sec.metrics.insert("lambda_violation".into(), lambda_worst);
    // (e) psi_V is constant
    let pv_dev = adj
        .psi_v
        .iter()
        .map(|p| (p + sc.dose_cost).abs())
        .fold(0.0, f64::max);
    sec.metrics.insert("psi_v_deviation".into(), pv_dev);
    if pv_dev > tol.structural * sc.dose_cost.max(1.0) {
        sec.fail(None, 0.0, format!("psi_V deviates from -c_v by {pv_dev:.3e}"));
    }
    sec.residual(lambda_worst.max(pv_dev).max((-mult.min_r).max(0.0)));
    sec
}

/// Positivity, the Gronwall lower bound on `s`, conservation of
/// `sum n_i (s_i + sum x_i) + V`, the supply bound and the rate cap.
pub fn check_invariance(sc: &Scenario, traj: &StateTrajectory, tol: &Tolerances) -> CheckSection {
    let mut sec = CheckSection::new("invariance");
    let n = traj.nodes();
    let k = sc.groups;
    // positivity
    let mut min_state = f64::INFINITY;
    for node in 0..n {
        let t = traj.times[node];
        let worst = traj
            .s_at(node)
            .iter()
            .chain(traj.x_at(node))
            .chain(std::iter::once(&traj.v[node]))
            .cloned()
            .fold(f64::INFINITY, f64::min);
        min_state = min_state.min(worst);
        if worst < -tol.positivity {
            sec.fail(None, t, format!("state component {worst:.3e} below zero"));
        }
    }
    sec.metrics.insert("min_state".into(), min_state);
    // Gronwall bound s_i(t) >= s_i(0) exp(-C_i t) with C_i = max(f_i + u_i) - Q_ii
    let q_diag = |i: usize| sc.migration.as_ref().map_or(0.0, |q| q[i * k + i]);
    for i in 0..k {
        let c = (0..n)
            .map(|node| sc.force_of_infection(i, traj.x_at(node)) + traj.u_at(node)[i])
            .fold(0.0, f64::max)
            - q_diag(i).min(0.0);
        let s0 = traj.s_at(0)[i];
        sec.metrics.insert(format!("lower_bound_s_{}", i + 1), s0 * (-c * sc.horizon).exp());
        for node in 0..n {
            let t = traj.times[node];
            let bound = s0 * (-c * (t - traj.times[0])).exp();
            let s = traj.s_at(node)[i];
            if s < bound * (1.0 - 1e-9) - tol.positivity {
                sec.fail(Some(i), t, format!("s = {s:.6e} below its bound {bound:.6e}"));
                break;
            }
        }
    }
    // conservation
    let mass0 = sc.population_mass(traj.s_at(0), traj.x_at(0), traj.v[0]);
    let drift = (0..n)
        .map(|node| (sc.population_mass(traj.s_at(node), traj.x_at(node), traj.v[node]) - mass0).abs())
        .fold(0.0, f64::max);
    sec.metrics.insert("population_drift".into(), drift);
    sec.residual(drift);
    if drift > tol.drift {
        sec.fail(None, 0.0, format!("population drift {drift:.3e}"));
    }
    // supply and rate cap
    let mut over = 0.0f64;
    for node in 0..n {
        let t = traj.times[node];
        let d = sc.shipments.cumulative(t.min(sc.horizon)).unwrap_or(f64::INFINITY);
        let excess = traj.v[node] - d;
        over = over.max(excess);
        if excess > tol.supply {
            sec.fail(None, t, format!("V exceeds D by {excess:.3e}"));
        }
    }
    sec.metrics.insert("supply_excess".into(), over);
    for i in 0..k {
        let s_min = (0..n).map(|node| traj.s_at(node)[i]).fold(f64::INFINITY, f64::min);
        let cap = sc.max_rate[i] / s_min;
        for node in 0..n {
            let u = traj.u_at(node)[i];
            if u > cap * (1.0 + 1e-12) {
                sec.fail(Some(i), traj.times[node], format!("rate {u:.6e} above {cap:.6e}"));
                break;
            }
        }
    }
    sec
}

/// Runs every check on a bang-bang schedule.
pub fn verify_schedule(sc: &Scenario, schedule: &BangSchedule, h: f64) -> Result<VerificationReport> {
    let tol = Tolerances::for_scenario(sc);
    let traj = simulate(sc, &Control::Bang(schedule.clone()), h)?;
    let (adj, est, mult) = costates_for_schedule(sc, &traj, schedule)?;
    Ok(report_for(sc, &traj, &adj, Some((&est, &mult)), tol))
}

/// Runs the checks that apply to an arbitrary control. Grid controls have
/// no switching times to reconstruct the supply multiplier from, so the
/// optimality-condition check is skipped for them.
pub fn verify_control(sc: &Scenario, control: &Control, h: f64) -> Result<VerificationReport> {
    match control {
        Control::Bang(b) => verify_schedule(sc, b, h),
        Control::Grid(_) => {
            let tol = Tolerances::for_scenario(sc);
            let traj = simulate(sc, control, h)?;
            let adj = integrate_adjoint(sc, &traj, control)?;
            Ok(report_for(sc, &traj, &adj, None, tol))
        }
    }
}

fn report_for(
    sc: &Scenario,
    traj: &StateTrajectory,
    adj: &AdjointTrajectory,
    multipliers: Option<(&LambdaEstimate, &Multipliers)>,
    tol: Tolerances,
) -> VerificationReport {
    let mut sections = vec![
        check_structure(sc, traj, tol.structural),
        check_no_singular(sc, adj, traj, tol.tol_phi, tol.min_len, tol.structural),
        check_shadow_price(sc, adj, traj, tol.structural),
    ];
    match multipliers {
        Some((est, mult)) => {
            let mut pmp = check_pmp(sc, adj, traj, mult, &tol);
            pmp.metrics.insert("switch_residual".into(), est.max_residual);
            pmp.notes.extend(est.warnings.iter().cloned());
            sections.push(pmp);
        }
        None => sections.push(
            CheckSection::new("pmp").skip("multipliers are reconstructed for bang-bang schedules only"),
        ),
    }
    sections.push(check_invariance(sc, traj, &tol));
    VerificationReport::new(sections, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::GridControl;
    use crate::presets::preset;

    #[test]
    fn reactivation_within_a_week_is_reported() {
        let sc = preset("cities3").unwrap();
        let h = 0.1;
        let mut g = GridControl::zeros(&sc, h);
        let nodes = g.nodes();
        for node in 0..nodes {
            let t = node as f64 * h;
            let on = t < 2.0 || (3.0..4.0).contains(&t);
            g.rates[node * 3] = if on { 1.0 } else { 0.0 };
        }
        let traj = simulate(&sc, &Control::Grid(g), h).unwrap();
        let sec = check_structure(&sc, &traj, 1e-8);
        assert!(!sec.passed);
        let o = sec.offending.unwrap();
        assert_eq!(o.region, Some(0));
        assert!((o.time - 3.0).abs() < 1e-9, "{}", o.time);
    }

    #[test]
    fn increasing_lambda_fails_pmp() {
        let sc = preset("cities3").unwrap();
        let sched = BangSchedule::never(&sc);
        let traj = simulate(&sc, &Control::Bang(sched.clone()), 0.1).unwrap();
        let (mut adj, _, mult) = costates_for_schedule(&sc, &traj, &sched).unwrap();
        let n = adj.nodes();
        adj.set_lambda((0..n).map(|k| if k < n / 2 { 0.0 } else if k + 1 < n { 1.0 } else { 0.0 }).collect());
        let sec = check_pmp(&sc, &adj, &traj, &mult, &Tolerances::for_scenario(&sc));
        assert!(!sec.passed);
        assert!(sec.metrics["lambda_violation"] >= 1.0);
    }

    #[test]
    fn disease_free_skips_shadow_price() {
        let mut sc = preset("cities3").unwrap();
        sc.initial.x0.iter_mut().for_each(|x| *x = 0.0);
        let sched = BangSchedule::never(&sc);
        let report = verify_schedule(&sc, &sched, 0.1).unwrap();
        assert!(report.section("shadow_price").unwrap().skipped.is_some());
        assert!(report.section("invariance").unwrap().passed);
        assert!(report.section("structure").unwrap().passed);
    }

    #[test]
    fn report_text_lists_every_check() {
        let sc = preset("cities3").unwrap();
        let report = verify_schedule(&sc, &BangSchedule::uniform(&sc, 0.5), 0.1).unwrap();
        let text = report.to_text();
        for name in ["structure", "no_singular", "shadow_price", "pmp", "invariance"] {
            assert!(text.contains(name), "{text}");
        }
        assert_eq!(report.passed, report.sections.iter().all(|s| s.passed));
    }
}
