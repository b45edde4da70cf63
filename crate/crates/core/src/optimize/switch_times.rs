//! Reduced problem: optimize the `K x W` switching times directly.

use super::nelder_mead::{compass_search, nelder_mead, NmSettings};
use super::{better, boundary_active, objective, LogEntry, OptResult, OptimizeOptions, StartSummary};
use super::refine::refine_stationary;
use crate::error::Result;
use crate::forward::BangSchedule;
use crate::model::{Scenario, WEEK};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::cell::{Cell, RefCell};

/// Start points in week fractions: all week-end, all week-start, then a
/// Latin hypercube sample.
pub(crate) fn start_points(dims: usize, starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![1.0; dims]];
    if starts > 1 {
        pts.push(vec![0.0; dims]);
    }
    let m = starts.saturating_sub(2);
    if m > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lhs = vec![vec![0.0; dims]; m];
        let mut strata: Vec<usize> = (0..m).collect();
        for d in 0..dims {
            strata.shuffle(&mut rng);
            for (r, row) in lhs.iter_mut().enumerate() {
                row[d] = (strata[r] as f64 + rng.gen::<f64>()) / m as f64;
            }
        }
        pts.extend(lhs);
    }
    pts.truncate(starts);
    pts
}

struct StartRun {
    summary: StartSummary,
    log: Vec<LogEntry>,
}

fn run_start(sc: &Scenario, opts: &OptimizeOptions, index: usize, x0: &[f64]) -> StartRun {
    let (k, w) = (sc.groups, sc.weeks());
    let log = RefCell::new(Vec::new());
    let best = Cell::new(f64::INFINITY);
    let phase = Cell::new("nelder_mead");
    let mut f = |x: &[f64]| -> f64 {
        let sched = BangSchedule::from_fractions(k, w, x);
        let j = objective(sc, &sched, opts.h).unwrap_or(f64::INFINITY);
        best.set(best.get().min(j));
        let mut log = log.borrow_mut();
        let evaluation = log.len();
        log.push(LogEntry {
            start: index,
            phase: phase.get().to_string(),
            evaluation,
            j,
            best_j: best.get(),
        });
        j
    };
    let settings = NmSettings {
        max_evals: opts.max_iters,
        x_tol: (opts.tol_tau / WEEK).max(1e-4),
        f_tol_rel: opts.tol_j,
        initial_step: 0.1,
    };
    let mut out = nelder_mead(&mut f, x0, &settings);
    let mut converged = out.converged;
    // one restart from the best vertex with a fresh, smaller simplex
    phase.set("restart");
    let again = nelder_mead(
        &mut f,
        &out.x,
        &NmSettings {
            initial_step: 0.02,
            ..settings
        },
    );
    if again.f < out.f {
        converged = again.converged;
        out = again;
    }
    phase.set("compass");
    let polished = compass_search(
        &mut f,
        &out.x,
        out.f,
        0.005,
        opts.tol_tau / WEEK,
        opts.max_iters,
    );
    converged &= polished.converged;
    let tau = BangSchedule::from_fractions(k, w, &polished.x).tau;
    let log = log.into_inner();
    StartRun {
        summary: StartSummary {
            start: index,
            initial_fractions: x0.to_vec(),
            j: polished.f,
            tau,
            evaluations: log.len(),
            converged,
        },
        log,
    }
}

/// Multi-start Nelder–Mead over switching times (see the module docs).
pub fn optimize_switch_times(sc: &Scenario, opts: &OptimizeOptions) -> Result<OptResult> {
    opts.validate()?;
    sc.validate()?;
    let (k, w) = (sc.groups, sc.weeks());
    let dims = k * w;
    let starts = start_points(dims, opts.starts, opts.seed);
    let runs: Vec<StartRun> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| run_start(sc, opts, i, x0))
        .collect();

    let mut best_idx = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        let b = &runs[best_idx].summary;
        if better(r.summary.j, &r.summary.tau, b.j, &b.tau) {
            best_idx = i;
        }
    }
    let mut log: Vec<LogEntry> = runs.iter().flat_map(|r| r.log.iter().cloned()).collect();
    let summaries: Vec<StartSummary> = runs.into_iter().map(|r| r.summary).collect();
    let mut schedule = BangSchedule::new(k, w, summaries[best_idx].tau.clone())?;
    let mut j = objective(sc, &schedule, opts.h)?;
    let mut converged = summaries[best_idx].converged;
    let mut diagnostics = Vec::new();

    if opts.refine {
        let refined = refine_stationary(sc, &schedule, opts.h, 100)?;
        let start = summaries.len();
        let mut best_j = j;
        for (e, jj) in refined.history.iter().enumerate() {
            best_j = best_j.min(*jj);
            log.push(LogEntry {
                start,
                phase: "refine".into(),
                evaluation: e,
                j: *jj,
                best_j,
            });
        }
        if refined.j <= j + 1e-12 * j.abs() {
            diagnostics.push(format!(
                "stationarity refinement: {} Newton steps, J {} -> {}, residual {:.3e}",
                refined.iterations, j, refined.j, refined.residual
            ));
            schedule = refined.schedule;
            j = refined.j;
            converged = converged || refined.converged;
        } else {
            diagnostics.push("stationarity refinement rejected (higher cost)".into());
        }
    }
    Ok(OptResult {
        method: "switch_times".into(),
        boundary_active: boundary_active(&schedule, 1e-12),
        schedule: Some(schedule),
        grid: None,
        j,
        converged,
        evaluations: log.len(),
        log,
        starts: summaries,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_points_are_deterministic_latin_hypercube() {
        let a = start_points(5, 10, 7);
        let b = start_points(5, 10, 7);
        assert_eq!(a, b);
        assert_eq!(a[0], vec![1.0; 5]);
        assert_eq!(a[1], vec![0.0; 5]);
        // each coordinate has exactly one sample per stratum
        for d in 0..5 {
            let mut strata: Vec<usize> = a[2..].iter().map(|p| (p[d] * 8.0).floor() as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
        assert_ne!(start_points(5, 10, 8), a);
    }
}
