//! Exhaustive search over a grid of switching times, for tiny instances.

use super::{better, boundary_active, objective, LogEntry, OptResult};
use crate::error::{Error, Result};
use crate::forward::BangSchedule;
use crate::model::{Scenario, WEEK};

/// Largest number of switching times the oracle accepts.
pub const ORACLE_MAX_DIMS: usize = 3;

/// Evaluates every schedule whose switching times lie on a grid of spacing
/// `resolution` days inside each week and returns the cheapest one. Ties go
/// to the lexicographically smallest switching times.
pub fn brute_force_switch_grid(sc: &Scenario, resolution: f64, h: f64) -> Result<OptResult> {
    sc.validate()?;
    let (k, w) = (sc.groups, sc.weeks());
    let dims = k * w;
    if dims > ORACLE_MAX_DIMS {
        return Err(Error::OracleGuard {
            dims,
            max: ORACLE_MAX_DIMS,
        });
    }
    let cells = (WEEK / resolution).round();
    if !(resolution > 0.0) || cells < 1.0 || (cells * resolution - WEEK).abs() > 1e-9 {
        return Err(Error::InvalidOptions(format!(
            "resolution {resolution} does not divide a week into whole cells"
        )));
    }
    let cells = cells as usize;
    let levels = cells + 1;
    let total = levels.pow(dims as u32);
    let mut idx = vec![0usize; dims];
    let mut frac = vec![0.0; dims];
    let mut best: Option<(f64, BangSchedule)> = None;
    let mut log = Vec::with_capacity(total);
    for e in 0..total {
        // odometer with the last coordinate fastest: lexicographic order
        let mut rem = e;
        for d in (0..dims).rev() {
            idx[d] = rem % levels;
            rem /= levels;
        }
        for (f, &i) in frac.iter_mut().zip(&idx) {
            *f = i as f64 / cells as f64;
        }
        let sched = BangSchedule::from_fractions(k, w, &frac);
        let j = objective(sc, &sched, h)?;
        let replace = match &best {
            None => true,
            Some((bj, bs)) => better(j, &sched.tau, *bj, &bs.tau),
        };
        if replace {
            best = Some((j, sched));
        }
        log.push(LogEntry {
            start: 0,
            phase: "grid".into(),
            evaluation: e,
            j,
            best_j: best.as_ref().map_or(j, |b| b.0),
        });
    }
    let (j, schedule) = best.expect("grid has at least one point");
    Ok(OptResult {
        method: "brute_force".into(),
        boundary_active: boundary_active(&schedule, 1e-12),
        schedule: Some(schedule),
        grid: None,
        j,
        converged: true,
        evaluations: total,
        log,
        starts: Vec::new(),
        diagnostics: vec![format!("{total} grid points at resolution {resolution} days")],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    #[test]
    fn refuses_large_instances() {
        let sc = preset("cities3").unwrap();
        let err = brute_force_switch_grid(&sc, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::OracleGuard { max: 3, .. }));
    }
}
