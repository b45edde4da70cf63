mod common;

use epictrl_core::model::{commuter_kappa, WEEK};
use epictrl_core::presets::{preset_params, PRESET_NAMES};
use epictrl_core::{preset, preset_with_migration, simulate, BangSchedule, Control, Scenario};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn state_at_week_end(traj: &epictrl_core::StateTrajectory, w: usize) -> Vec<f64> {
    let spw = (WEEK / traj.h).round() as usize;
    traj.state_at((w + 1) * spw)
}

fn compare_with_reference(sc: &Scenario, schedule: &BangSchedule, clamp_hits: bool) {
    let traj = simulate(sc, &Control::Bang(schedule.clone()), 0.01).unwrap();
    let reference = common::reference(sc, schedule, 1e-3, true);
    for (w, want) in reference.week_ends.iter().enumerate() {
        let got = state_at_week_end(&traj, w);
        for (c, (g, r)) in got.iter().zip(want).enumerate() {
            assert!((g - r).abs() <= 1e-9, "week {w} component {c}: {g} vs {r}");
        }
    }
    let j = epictrl_core::cost_linear(&traj, sc).unwrap();
    assert!((j - reference.j).abs() <= 1e-7 * reference.j.abs(), "J {j} vs {}", reference.j);
    let contacts = traj.events.iter().filter(|e| e.kind == epictrl_core::EventKind::StockExhausted).count();
    assert_eq!(contacts > 0, clamp_hits, "stock contacts: {contacts}");
}

#[test]
fn interior_switches_match_fine_reference() {
    let sc = preset("cities3").unwrap();
    let tau: Vec<f64> = (0..3)
        .flat_map(|i| (0..4).map(move |w| 7.0 * w as f64 + 0.7 + 1.3 * i as f64 + 0.37 * w as f64))
        .collect();
    compare_with_reference(&sc, &BangSchedule::new(3, 4, tau).unwrap(), false);
}

#[test]
fn stock_clamp_matches_closed_form_exhaustion() {
    for name in PRESET_NAMES {
        let sc = preset(name).unwrap();
        compare_with_reference(&sc, &BangSchedule::full(&sc), true);
    }
}

#[test]
fn migration_matches_fine_reference() {
    let sc = preset_with_migration("cities5", 0.05).unwrap();
    compare_with_reference(&sc, &BangSchedule::uniform(&sc, 0.9), true);
}

#[test]
fn toy_matches_fine_reference() {
    let sc = preset("toy").unwrap();
    for t in [0.0, 0.013, 3.3, 6.99, 7.0] {
        compare_with_reference(&sc, &BangSchedule::new(1, 1, vec![t]).unwrap(), false);
    }
}

/// `kappa = P diag(beta / (n^T P)) (diag(n) P)^T` as dense matrix products.
fn kappa_by_matrices(beta: &[f64], alpha: f64, m: &[Vec<f64>], n: &[f64]) -> DMatrix<f64> {
    let k = beta.len();
    let p = DMatrix::from_fn(k, k, |i, l| alpha * (i == l) as u8 as f64 + (1.0 - alpha) * m[i][l]);
    let nv = DVector::from_column_slice(n);
    let present = p.transpose() * &nv;
    let scale = DMatrix::from_diagonal(&DVector::from_fn(k, |l, _| beta[l] / present[l]));
    &p * scale * (DMatrix::from_diagonal(&nv) * &p).transpose()
}

#[test]
fn kappa_matches_matrix_product_for_every_preset() {
    for name in PRESET_NAMES {
        let p = preset_params(name).unwrap();
        let n = epictrl_core::presets::normalize(&p.populations);
        let got = commuter_kappa(&p.beta, p.alpha, &p.commuting, &n);
        let want = kappa_by_matrices(&p.beta, p.alpha, &p.commuting, &n);
        let k = p.beta.len();
        for i in 0..k {
            for j in 0..k {
                let (g, w) = (got[i * k + j], want[(i, j)]);
                assert!((g - w).abs() <= 1e-15 * w.abs().max(1e-3), "{name} kappa[{i}][{j}]: {g} vs {w}");
                assert!(g >= 0.0);
            }
        }
        let sc = preset(name).unwrap();
        for i in 0..k {
            for j in 0..k {
                assert_eq!(sc.beta(i, j), &[got[i * k + j], 0.0][..]);
            }
        }
    }
}

#[test]
fn single_city_kappa_is_beta() {
    let kappa = commuter_kappa(&[0.37], 0.2, &[vec![1.0]], &[1.0]);
    assert!((kappa[0] - 0.37).abs() < 1e-16);
}

fn schedule_strategy(groups: usize, weeks: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, groups * weeks)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_schedules_conserve_mass_and_respect_supply(frac in schedule_strategy(5, 4)) {
        let sc = preset("cities5").unwrap();
        let schedule = BangSchedule::from_fractions(5, 4, &frac);
        let traj = simulate(&sc, &Control::Bang(schedule), 0.02).unwrap();
        let m0 = sc.population_mass(traj.s_at(0), traj.x_at(0), traj.v[0]);
        for k in 0..traj.nodes() {
            let m = sc.population_mass(traj.s_at(k), traj.x_at(k), traj.v[k]);
            prop_assert!((m - m0).abs() <= 1e-9);
            prop_assert!(traj.state_at(k).iter().all(|v| *v >= -1e-10));
            prop_assert!(traj.v[k] <= traj.budget[k] + 1e-10);
            if k > 0 {
                prop_assert!(traj.v[k] >= traj.v[k - 1] - 1e-15);
                for i in 0..5 {
                    prop_assert!(traj.s_at(k)[i] <= traj.s_at(k - 1)[i] + 1e-15);
                }
            }
        }
    }

    #[test]
    fn more_vaccination_uses_more_doses_and_lowers_health_cost(frac in schedule_strategy(3, 4), bump in 0.0f64..0.3) {
        let sc = preset("cities3").unwrap();
        let low = BangSchedule::from_fractions(3, 4, &frac);
        let high_frac: Vec<f64> = frac.iter().map(|f| (f + bump).min(1.0)).collect();
        let high = BangSchedule::from_fractions(3, 4, &high_frac);
        let a = simulate(&sc, &Control::Bang(low), 0.05).unwrap();
        let b = simulate(&sc, &Control::Bang(high), 0.05).unwrap();
        let last = a.nodes() - 1;
        prop_assert!(b.v[last] >= a.v[last] - 1e-12);
        // susceptibles carry a positive marginal health cost
        let health = |t: &epictrl_core::StateTrajectory| {
            epictrl_core::cost_linear(t, &sc).unwrap() - sc.dose_cost * t.v[last]
        };
        prop_assert!(health(&b) <= health(&a) + 1e-10);
    }
}
