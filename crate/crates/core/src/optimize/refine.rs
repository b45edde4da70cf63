//! Exact first-order stationarity for bang-bang schedules.
//!
//! Without the stock clamp, the reduced problem is a smooth program in the
//! switching times with one supply constraint per week,
//! `g_w(tau) = V(end of week w) - D_w <= 0` (`V` is nondecreasing, so this
//! bounds the whole week). While a region is on it receives exactly
//! `n_i v_i` doses per day, so every `g_w` is *linear* in the switching times.
//! A schedule the clamp cuts short at a stock contact is the same trajectory
//! as the one whose cut regions switch exactly at the contact, so the two
//! problems share their optima.
//!
//! The gradient comes from the adjoint, `dJ/dtau_iw = n_i v_i (c_v +
//! psi_s_i(tau_iw) / n_i)`, and the Hessian from finite differences of it. A
//! primal active-set Newton method keeps every iterate feasible, decreases
//! the cost monotonically and releases constraints by multiplier sign. At the
//! solution, with `Lambda_w` the sum of the week multipliers from week `w` on,
//! `c_v + Lambda_w + psi_s_i(tau_iw) / n_i` vanishes at every interior switch,
//! is `>= 0` at a week start and `<= 0` at a week end.

use crate::adjoint::{integrate_adjoint, AdjointTrajectory};
use crate::error::Result;
use crate::forward::{
    cost_linear, simulate, simulate_with, steps_per_week, BangSchedule, Control, EventKind,
    SimOptions, StateTrajectory,
};
use crate::model::{Scenario, WEEK};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Outcome of [`refine_stationary`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub schedule: BangSchedule,
    /// Cost of `schedule` with the stock clamp.
    pub j: f64,
    /// Newton steps taken.
    pub iterations: usize,
    pub converged: bool,
    /// Final stationarity residual of the free switches (per capita).
    pub residual: f64,
    /// Week prices `Lambda_w`.
    pub prices: Vec<f64>,
    /// Cost after every accepted step.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Lower,
    Upper,
    Free,
}

/// A working-set member: a switch held at a week boundary, or a binding week.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Constraint {
    Bound(usize, Slot),
    Week(usize),
}

struct Point {
    traj: StateTrajectory,
    adj: AdjointTrajectory,
    j: f64,
}

struct Problem<'a> {
    sc: &'a Scenario,
    h: f64,
    spw: usize,
    w_count: usize,
    /// `n_i v_i`: doses per day while region `i` is on.
    weight: Vec<f64>,
}

/// Per-capita switching residual tolerance relative to the price scale.
const PHI_TOL: f64 = 1e-11;
/// Finite-difference step of the Hessian (days).
const FD_STEP: f64 = 1e-7;
/// Weeks closer than this to their supply (doses) start out binding.
const BINDING: f64 = 1e-9;

impl Problem<'_> {
    fn group(&self, e: usize) -> usize {
        e / self.w_count
    }

    fn week(&self, e: usize) -> usize {
        e % self.w_count
    }

    fn bounds(&self, e: usize) -> (f64, f64) {
        let w = self.week(e) as f64;
        (WEEK * w, WEEK * (w + 1.0))
    }

    fn eval(&self, tau: &BangSchedule) -> Result<Point> {
        let control = Control::Bang(tau.clone());
        let opts = SimOptions {
            h: self.h,
            clamp_stock: false,
            bump: None,
        };
        let traj = simulate_with(self.sc, &control, &opts)?;
        let adj = integrate_adjoint(self.sc, &traj, &control)?;
        let j = cost_linear(&traj, self.sc)?;
        Ok(Point { traj, adj, j })
    }

    /// `V(end of week w) - D_w` in doses.
    fn excess(&self, p: &Point, w: usize) -> f64 {
        p.traj.v[(w + 1) * self.spw] - self.sc.shipments.plateau(w)
    }

    /// `c_v + psi_s_i(tau_e) / n_i`.
    fn phi(&self, p: &Point, tau: &BangSchedule, e: usize) -> f64 {
        let i = self.group(e);
        self.sc.dose_cost + p.adj.psi_s_interp(i, tau.tau[e]) / self.sc.populations[i]
    }

    /// Constraint row of week `a` restricted to `cols`.
    fn row(&self, a: usize, cols: &[usize]) -> Vec<f64> {
        cols.iter()
            .map(|&e| if self.week(e) <= a { self.weight[self.group(e)] } else { 0.0 })
            .collect()
    }
}

/// Least-squares week multipliers for the free switches: `phi_e +
/// sum_{a >= week(e)} mu_a = 0`.
fn multipliers(prob: &Problem, phi: &[f64], free: &[usize], weeks: &[usize]) -> Vec<f64> {
    if weeks.is_empty() || free.is_empty() {
        return vec![0.0; weeks.len()];
    }
    let m = DMatrix::from_fn(free.len(), weeks.len(), |r, c| {
        if prob.week(free[r]) <= weeks[c] {
            1.0
        } else {
            0.0
        }
    });
    let rhs = DVector::from_iterator(free.len(), free.iter().map(|&e| -phi[e]));
    m.svd(true, true)
        .solve(&rhs, 1e-12)
        .map(|x| x.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; weeks.len()])
}

fn prices(prob: &Problem, weeks: &[usize], mu: &[f64]) -> Vec<f64> {
    (0..prob.w_count)
        .map(|w| weeks.iter().zip(mu).filter(|(&a, _)| a >= w).map(|(_, m)| m).sum())
        .collect()
}

/// Newton direction on the working set: the equality-constrained QP with the
/// Hessian's eigenvalues made positive.
fn direction(h: DMatrix<f64>, g: &DVector<f64>, a: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-8 * top).max(1e-12);
    let vals = eig.eigenvalues.map(|v| v.abs().max(floor));
    let hp = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    let m = a.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&hp);
    k.view_mut((n, 0), (m, n)).copy_from(a);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    let sol = k.svd(true, true).solve(&rhs, 1e-14).ok()?;
    Some(sol.rows(0, n).into_owned())
}

/// Drives `schedule` to an exact KKT point of the smooth program (see the
/// module docs) with at most `max_iters` Newton steps. Every step lowers the
/// cost, so the result is never worse than the (contact-cut) input.
pub fn refine_stationary(
    sc: &Scenario,
    schedule: &BangSchedule,
    h: f64,
    max_iters: usize,
) -> Result<Refinement> {
    let w_count = sc.weeks();
    let prob = Problem {
        sc,
        h,
        spw: steps_per_week(h)?,
        w_count,
        weight: (0..sc.groups).map(|i| sc.populations[i] * sc.max_rate[i]).collect(),
    };
    let dims = schedule.tau.len();

    // regions cut by the clamp switch at the contact instead
    let mut tau = schedule.clone();
    let clamped = simulate(sc, &Control::Bang(tau.clone()), h)?;
    for e in clamped.events_of(EventKind::StockExhausted) {
        let w = e.week.min(w_count - 1);
        for i in 0..sc.groups {
            if tau.get(i, w) > e.time {
                tau.set(i, w, e.time);
            }
        }
    }
    let mut slots: Vec<Slot> = (0..dims)
        .map(|e| {
            let (lo, hi) = prob.bounds(e);
            if prob.weight[prob.group(e)] <= 0.0 || tau.tau[e] <= lo + 1e-9 {
                Slot::Lower
            } else if tau.tau[e] >= hi - 1e-9 {
                Slot::Upper
            } else {
                Slot::Free
            }
        })
        .collect();
    for e in 0..dims {
        let (lo, hi) = prob.bounds(e);
        match slots[e] {
            Slot::Lower => tau.tau[e] = lo,
            Slot::Upper => tau.tau[e] = hi,
            Slot::Free => {}
        }
    }
    // restore feasibility lost to the contact bisection, week by week
    let mut p = prob.eval(&tau)?;
    for w in 0..w_count {
        let over = prob.excess(&p, w);
        if over <= 0.0 {
            continue;
        }
        let on: Vec<usize> = (0..dims)
            .filter(|&e| prob.week(e) == w && tau.tau[e] > prob.bounds(e).0)
            .collect();
        let rate: f64 = on.iter().map(|&e| prob.weight[prob.group(e)]).sum();
        if rate > 0.0 {
            for &e in &on {
                let (lo, _) = prob.bounds(e);
                tau.tau[e] = (tau.tau[e] - over / rate).max(lo);
            }
            p = prob.eval(&tau)?;
        }
    }
    let mut active: Vec<bool> = (0..w_count).map(|w| prob.excess(&p, w) >= -BINDING).collect();

    let mut history = vec![p.j];
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut week_prices = vec![0.0; w_count];
    let mut released: Option<usize> = None;
    let mut guard = 0;
    while iterations < max_iters && guard < 4 * max_iters + 8 {
        guard += 1;
        let phi: Vec<f64> = (0..dims).map(|e| prob.phi(&p, &tau, e)).collect();
        let free: Vec<usize> = (0..dims).filter(|&e| slots[e] == Slot::Free).collect();
        let weeks: Vec<usize> = (0..w_count).filter(|&w| active[w]).collect();
        let mu = multipliers(&prob, &phi, &free, &weeks);
        let lam = prices(&prob, &weeks, &mu);
        let scale = 1.0 + sc.dose_cost + lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = PHI_TOL * scale;
        residual = free
            .iter()
            .map(|&e| (phi[e] + lam[prob.week(e)]).abs())
            .fold(0.0, f64::max);
        week_prices = lam.clone();

        if residual <= tol {
            // stationary on the working set: release the worst wrong-sign multiplier
            let mut worst: Option<(f64, Constraint)> = None;
            let mut consider = |v: f64, what: Constraint| {
                if v > tol && worst.is_none_or(|(b, _)| v > b) {
                    worst = Some((v, what));
                }
            };
            for e in 0..dims {
                if prob.weight[prob.group(e)] <= 0.0 {
                    continue;
                }
                let r = phi[e] + lam[prob.week(e)];
                match slots[e] {
                    Slot::Lower => consider(-r, Constraint::Bound(e, Slot::Lower)),
                    Slot::Upper => consider(r, Constraint::Bound(e, Slot::Upper)),
                    Slot::Free => {}
                }
            }
            for (c, &a) in weeks.iter().enumerate() {
                consider(-mu[c], Constraint::Week(a));
            }
            match worst {
                None => {
                    converged = true;
                    break;
                }
                Some((_, Constraint::Bound(e, _))) => {
                    slots[e] = Slot::Free;
                    released = Some(e);
                }
                Some((_, Constraint::Week(a))) => active[a] = false,
            }
            continue;
        }

        // Newton step on the working set
        iterations += 1;
        let nf = free.len();
        let g = DVector::from_iterator(
            nf,
            free.iter().map(|&e| prob.weight[prob.group(e)] * phi[e]),
        );
        let mut hess = DMatrix::zeros(nf, nf);
        for (c, &e) in free.iter().enumerate() {
            let (_, hi) = prob.bounds(e);
            let step = if tau.tau[e] + FD_STEP <= hi { FD_STEP } else { -FD_STEP };
            let mut probe = tau.clone();
            probe.tau[e] += step;
            let pp = prob.eval(&probe)?;
            for (r, &f) in free.iter().enumerate() {
                let gp = prob.weight[prob.group(f)] * prob.phi(&pp, &probe, f);
                hess[(r, c)] = (gp - g[r]) / step;
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let a = DMatrix::from_fn(weeks.len(), nf, |r, c| prob.row(weeks[r], &free)[c]);
        let Some(d) = direction(hess, &g, &a) else {
            break;
        };
        let slope = g.dot(&d);
        if !(slope < 0.0) {
            break;
        }
        // longest feasible step and the constraint that blocks it
        let mut alpha_max = f64::INFINITY;
        let mut block: Option<Constraint> = None;
        for (c, &e) in free.iter().enumerate() {
            let (lo, hi) = prob.bounds(e);
            let (limit, slot) = if d[c] > 0.0 {
                ((hi - tau.tau[e]) / d[c], Slot::Upper)
            } else if d[c] < 0.0 {
                ((lo - tau.tau[e]) / d[c], Slot::Lower)
            } else {
                continue;
            };
            if Some(e) == released && limit <= 0.0 {
                continue;
            }
            if limit < alpha_max {
                alpha_max = limit.max(0.0);
                block = Some(Constraint::Bound(e, slot));
            }
        }
        for w in (0..w_count).filter(|&w| !active[w]) {
            let rate: f64 = prob.row(w, &free).iter().zip(d.iter()).map(|(r, v)| r * v).sum();
            if rate > 0.0 {
                let limit = (-prob.excess(&p, w) / rate).max(0.0);
                if limit < alpha_max {
                    alpha_max = limit;
                    block = Some(Constraint::Week(w));
                }
            }
        }
        released = None;
        let mut alpha = alpha_max.min(1.0);
        let blocked = alpha_max <= 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = tau.clone();
            for (c, &e) in free.iter().enumerate() {
                let (lo, hi) = prob.bounds(e);
                trial.tau[e] = (tau.tau[e] + alpha * d[c]).clamp(lo, hi);
            }
            if blocked && alpha == alpha_max {
                if let Some(Constraint::Bound(e, slot)) = block {
                    let (lo, hi) = prob.bounds(e);
                    trial.tau[e] = if slot == Slot::Lower { lo } else { hi };
                }
            }
            let tp = prob.eval(&trial)?;
            if tp.j <= p.j + 1e-4 * alpha * slope + 1e-14 * p.j.abs() {
                accepted = Some((trial, tp, alpha));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, tp, alpha)) = accepted else {
            break;
        };
        if blocked && alpha == alpha_max {
            match block {
                Some(Constraint::Bound(e, slot)) => slots[e] = slot,
                Some(Constraint::Week(w)) => active[w] = true,
                None => {}
            }
        }
        tau = trial;
        p = tp;
        history.push(p.j);
    }

    let j = super::objective(sc, &tau, h)?;
    Ok(Refinement {
        schedule: tau,
        j,
        iterations,
        converged,
        residual,
        prices: week_prices,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    #[test]
    fn refinement_never_raises_the_cost() {
        let sc = preset("toy").unwrap();
        let start = BangSchedule::uniform(&sc, 0.4);
        let j0 = super::super::objective(&sc, &start, 0.01).unwrap();
        let r = refine_stationary(&sc, &start, 0.01, 60).unwrap();
        assert!(r.j <= j0 + 1e-12 * j0.abs(), "{} > {j0}", r.j);
        assert!(r.converged, "{r:?}");
    }
}
