//! Independent reference integrator for bang-bang schedules.
//!
//! Written directly from the model equations, without the crate's stepping
//! machinery: the horizon is cut at every switching time, and the instant a
//! weekly stock runs out is found in closed form (while the set of active
//! regions is fixed, `V` grows linearly). Each piece is then integrated with
//! classic RK4 at a much finer step than the crate uses.

#![allow(dead_code)]

use epictrl_core::{BangSchedule, Scenario};

pub struct Reference {
    /// `(s, x, V)` at every week end, week 0 first.
    pub week_ends: Vec<Vec<f64>>,
    pub j: f64,
}

fn rhs(sc: &Scenario, on: &[bool], y: &[f64], dy: &mut [f64]) {
    let k = sc.groups;
    let d = sc.stages;
    let (s, rest) = y.split_at(k);
    let x = &rest[..k * d];
    for i in 0..k {
        let mut force = 0.0;
        for j in 0..k {
            for m in 0..d {
                force += sc.transmission[(i * k + j) * d + m] * x[j * d + m];
            }
        }
        let dose = if on[i] { sc.max_rate[i] } else { 0.0 };
        dy[i] = -s[i] * force - dose;
        if let Some(q) = &sc.migration {
            for j in 0..k {
                dy[i] += q[i * k + j] * sc.populations[j] * s[j] / sc.populations[i];
            }
        }
        for m in 0..d {
            let mut g = 0.0;
            for l in 0..d {
                g += sc.progression[m * d + l] * x[i * d + l];
            }
            if m == 0 {
                g += s[i] * force;
            }
            dy[k + i * d + m] = g;
        }
    }
    let doses: f64 = (0..k).filter(|&i| on[i]).map(|i| sc.populations[i] * sc.max_rate[i]).sum();
    let last = k * (d + 1);
    dy[last] = doses;
    // running health cost as an extra quadrature state
    dy[last + 1] = (0..k)
        .map(|i| {
            sc.populations[i]
                * (0..d).map(|m| sc.health_cost[m] * x[i * d + m]).sum::<f64>()
        })
        .sum();
}

fn rk4(sc: &Scenario, on: &[bool], y: &mut [f64], a: f64, b: f64, dt: f64) {
    if b <= a {
        return;
    }
    let n = ((b - a) / dt).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let len = y.len();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];
    for _ in 0..n {
        rhs(sc, on, y, &mut k1);
        for c in 0..len {
            tmp[c] = y[c] + 0.5 * h * k1[c];
        }
        rhs(sc, on, &tmp, &mut k2);
        for c in 0..len {
            tmp[c] = y[c] + 0.5 * h * k2[c];
        }
        rhs(sc, on, &tmp, &mut k3);
        for c in 0..len {
            tmp[c] = y[c] + h * k3[c];
        }
        rhs(sc, on, &tmp, &mut k4);
        for c in 0..len {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
}

/// Runs `schedule` with (`clamp = true`) or without the weekly stock limit.
pub fn reference(sc: &Scenario, schedule: &BangSchedule, dt: f64, clamp: bool) -> Reference {
    let k = sc.groups;
    let mut y = sc.initial_state();
    y.push(0.0);
    let v_idx = k * (sc.stages + 1);
    let mut week_ends = Vec::new();
    for w in 0..sc.weeks() {
        let (start, end) = (7.0 * w as f64, 7.0 * (w + 1) as f64);
        let mut cuts: Vec<f64> = (0..k).map(|i| schedule.get(i, w)).filter(|&t| t > start && t < end).collect();
        cuts.push(end);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let budget = sc.shipments.plateau(w);
        let mut exhausted = false;
        let mut a = start;
        for &b in &cuts {
            let on: Vec<bool> = (0..k).map(|i| !exhausted && schedule.get(i, w) >= b).collect();
            let rate: f64 = (0..k).filter(|&i| on[i]).map(|i| sc.populations[i] * sc.max_rate[i]).sum();
            if clamp && rate > 0.0 && y[v_idx] + rate * (b - a) > budget {
                let te = a + ((budget - y[v_idx]) / rate).max(0.0);
                rk4(sc, &on, &mut y, a, te, dt);
                y[v_idx] = budget;
                exhausted = true;
                rk4(sc, &vec![false; k], &mut y, te, b, dt);
            } else {
                rk4(sc, &on, &mut y, a, b, dt);
            }
            a = b;
        }
        week_ends.push(y[..=v_idx].to_vec());
    }
    let j = y[v_idx + 1] + sc.dose_cost * y[v_idx];
    Reference { week_ends, j }
}
