//! Costates against finite differences of the cost.
//!
//! `psi = -grad(cost-to-go)`, so `psi(0)` is minus the gradient of `J` in the
//! initial state, and moving a switch `tau_iw` later changes `J` at the rate
//! `v_i phi_i(tau_iw)`.

use epictrl_core::{
    cost_linear, costates_for_schedule, integrate_adjoint, preset, simulate, simulate_with,
    switching_function, BangSchedule, Bump, Control, GridControl, Scenario, SimOptions,
};

const H: f64 = 0.01;

fn j_of(sc: &Scenario, control: &Control) -> f64 {
    cost_linear(&simulate(sc, control, H).unwrap(), sc).unwrap()
}

/// Switch at 30% of every week: the stock never binds on cities3.
fn loose(sc: &Scenario) -> BangSchedule {
    BangSchedule::uniform(sc, 0.3)
}

#[test]
fn switch_time_gradient_matches_central_differences() {
    let sc = preset("cities3").unwrap();
    let base = loose(&sc);
    let traj = simulate(&sc, &Control::Bang(base.clone()), H).unwrap();
    assert!(traj.events.iter().all(|e| e.kind != epictrl_core::EventKind::StockExhausted));
    let adj = integrate_adjoint(&sc, &traj, &Control::Bang(base.clone())).unwrap();
    for i in 0..3 {
        for w in 0..4 {
            let t = base.get(i, w);
            let mut plus = base.clone();
            let mut minus = base.clone();
            let dt = 1e-4;
            plus.set(i, w, t + dt);
            minus.set(i, w, t - dt);
            let fd = (j_of(&sc, &Control::Bang(plus)) - j_of(&sc, &Control::Bang(minus))) / (2.0 * dt);
            let phi = (-adj.psi_v_interp(t)) * sc.populations[i] + adj.psi_s_interp(i, t);
            let predicted = sc.max_rate[i] * phi;
            assert!(
                (fd - predicted).abs() <= 1e-5 * fd.abs().max(1e-6),
                "region {i} week {w}: fd {fd} vs {predicted}"
            );
        }
    }
}

fn with_initial(sc: &Scenario, component: usize, delta: f64) -> Scenario {
    let mut out = sc.clone();
    let k = sc.groups;
    if component < k {
        out.initial.s0[component] += delta;
    } else {
        out.initial.x0[component - k] += delta;
    }
    out
}

fn check_initial_gradient(sc: &Scenario, control: &Control, psi0: &[f64]) {
    let k = sc.groups;
    let d = sc.stages;
    for c in 0..k * (d + 1) {
        let delta = 1e-6;
        let fd = (j_of(&with_initial(sc, c, delta), control) - j_of(&with_initial(sc, c, -delta), control))
            / (2.0 * delta);
        let want = -psi0[c];
        assert!(
            (fd - want).abs() <= 1e-5 * want.abs().max(1e-3),
            "component {c}: fd {fd} vs -psi {want}"
        );
    }
}

fn psi_at_start(adj: &epictrl_core::AdjointTrajectory) -> Vec<f64> {
    let mut v = adj.psi_s_at(0).to_vec();
    v.extend_from_slice(adj.psi_x_at(0));
    v
}

#[test]
fn initial_costates_are_minus_the_cost_gradient() {
    let sc = preset("cities3").unwrap();
    let control = Control::Bang(loose(&sc));
    let traj = simulate(&sc, &control, H).unwrap();
    let adj = integrate_adjoint(&sc, &traj, &control).unwrap();
    check_initial_gradient(&sc, &control, &psi_at_start(&adj));
}

#[test]
fn open_loop_costates_include_the_rate_terms() {
    let sc = preset("cities3").unwrap();
    // rates below the cap everywhere, held fixed while the state moves
    let traj = simulate(&sc, &Control::Bang(loose(&sc)), H).unwrap();
    let mut grid = GridControl::from_trajectory(&traj);
    grid.rates.iter_mut().for_each(|r| *r *= 0.5);
    let control = Control::Grid(grid);
    let traj = simulate(&sc, &control, H).unwrap();
    let adj = integrate_adjoint(&sc, &traj, &control).unwrap();
    check_initial_gradient(&sc, &control, &psi_at_start(&adj));
}

/// `J(bumped) - J` against `delta * int phi_j s_j dt` over the bump.
fn bump_error(sc: &Scenario, control: &Control, region: usize, start: f64, delta: f64) -> (f64, f64) {
    let traj = simulate(sc, control, H).unwrap();
    let adj = match control {
        Control::Bang(b) => costates_for_schedule(sc, &traj, b).unwrap().0,
        Control::Grid(_) => integrate_adjoint(sc, &traj, control).unwrap(),
    };
    let width = 0.1;
    let bump = Bump { region, start, end: start + width, delta };
    let opts = SimOptions { h: H, clamp_stock: true, bump: Some(bump) };
    let bumped = simulate_with(sc, control, &opts).unwrap();
    let fd = cost_linear(&bumped, sc).unwrap() - cost_linear(&traj, sc).unwrap();
    let k0 = (start / H).round() as usize;
    let k1 = ((start + width) / H).round() as usize;
    let integrand: Vec<f64> = (k0..=k1)
        .map(|k| switching_function(&adj, adj.lambda[k], region, k) * traj.s_at(k)[region])
        .collect();
    let predicted = delta * integrand.windows(2).map(|p| 0.5 * H * (p[0] + p[1])).sum::<f64>();
    (fd, predicted)
}

#[test]
fn bump_prediction_matches_finite_difference() {
    let sc = preset("cities3").unwrap();
    let sched = loose(&sc);
    let control = Control::Bang(sched.clone());
    for region in 0..3 {
        for start in [0.5, 4.0, 9.3, 12.0, 22.0, 26.5] {
            // slow down an active region, start an idle one
            let on = start < sched.get(region, (start / 7.0) as usize);
            let delta = if on { -1e-4 } else { 1e-4 };
            let (fd, predicted) = bump_error(&sc, &control, region, start, delta);
            assert!(
                (fd - predicted).abs() <= 0.05 * predicted.abs(),
                "region {region} at {start}: fd {fd} vs {predicted}"
            );
        }
    }
}

#[test]
fn bump_prediction_holds_for_open_loop_rates() {
    let sc = preset("cities3").unwrap();
    let traj = simulate(&sc, &Control::Bang(loose(&sc)), H).unwrap();
    let mut grid = GridControl::from_trajectory(&traj);
    grid.rates.iter_mut().for_each(|r| *r *= 0.5);
    let control = Control::Grid(grid);
    for (region, start) in [(0usize, 1.0), (1, 8.0), (2, 20.0)] {
        let (fd, predicted) = bump_error(&sc, &control, region, start, 1e-4);
        assert!((fd - predicted).abs() <= 0.05 * predicted.abs(), "fd {fd} vs {predicted}");
    }
}
