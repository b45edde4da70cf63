//! Box-constrained Nelder–Mead and compass search on the unit cube.
//!
//! Trial points are projected onto `[0, 1]^n` before evaluation. Expansion,
//! contraction and shrink coefficients adapt to the dimension (Gao & Han),
//! which keeps the simplex from collapsing prematurely in 10–30 dimensions.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmSettings {
    pub max_evals: usize,
    /// Stop when every vertex is within this sup-distance of the best one...
    pub x_tol: f64,
    /// ...and the objective spread is below this fraction of `|f_best|`.
    pub f_tol_rel: f64,
    pub initial_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub evals: usize,
}

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(f: &mut F, x0: &[f64], s: &NmSettings) -> NmOutcome {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut x = x0.to_vec();
    project(&mut x);
    pts.push(x.clone());
    for i in 0..n {
        let mut v = x.clone();
        v[i] = if v[i] + s.initial_step <= 1.0 {
            v[i] + s.initial_step
        } else {
            v[i] - s.initial_step
        };
        pts.push(v);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    loop {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n.saturating_sub(1)];
        let spread_x = pts
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&pts[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let spread_f = vals[worst] - vals[best];
        if spread_x <= s.x_tol && spread_f <= s.f_tol_rel * vals[best].abs() + f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        if evals >= s.max_evals {
            break;
        }
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &idx in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[idx]) {
                *c += v / nf;
            }
        }
        let along = |coef: f64, from: &[f64], out: &mut Vec<f64>| {
            for j in 0..n {
                out[j] = centroid[j] + coef * (from[j] - centroid[j]);
            }
            project(out);
        };
        along(-alpha, &pts[worst], &mut trial);
        let fr = eval(&trial, &mut evals);
        if fr < vals[best] {
            along(beta, &trial.clone(), &mut trial2);
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                pts[worst].copy_from_slice(&trial2);
                vals[worst] = fe;
            } else {
                pts[worst].copy_from_slice(&trial);
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second_worst] {
            pts[worst].copy_from_slice(&trial);
            vals[worst] = fr;
            continue;
        }
        let accepted = if fr < vals[worst] {
            along(gamma, &trial.clone(), &mut trial2);
            let fc = eval(&trial2, &mut evals);
            (fc <= fr).then_some(fc)
        } else {
            along(gamma, &pts[worst].clone(), &mut trial2);
            let fc = eval(&trial2, &mut evals);
            (fc < vals[worst]).then_some(fc)
        };
        if let Some(fc) = accepted {
            pts[worst].copy_from_slice(&trial2);
            vals[worst] = fc;
            continue;
        }
        let anchor = pts[best].clone();
        for idx in 0..=n {
            if idx == best {
                continue;
            }
            for j in 0..n {
                pts[idx][j] = anchor[j] + delta * (pts[idx][j] - anchor[j]);
            }
            vals[idx] = eval(&pts[idx], &mut evals);
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
        .expect("nonempty simplex");
    NmOutcome {
        x: pts[best].clone(),
        f: vals[best],
        converged,
        evals,
    }
}

/// Coordinate polling with step halving, started from `(x0, f0)`.
pub fn compass_search<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    f0: f64,
    step: f64,
    min_step: f64,
    max_evals: usize,
) -> NmOutcome {
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut step = step;
    let mut evals = 0;
    let mut trial = x.clone();
    while step >= min_step {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [-1.0, 1.0] {
                if evals >= max_evals {
                    return NmOutcome {
                        x,
                        f: fx,
                        converged: false,
                        evals,
                    };
                }
                trial.copy_from_slice(&x);
                trial[i] = (x[i] + dir * step).clamp(0.0, 1.0);
                if trial[i] == x[i] {
                    continue;
                }
                evals += 1;
                let ft = f(&trial);
                if ft < fx {
                    x.copy_from_slice(&trial);
                    fx = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    NmOutcome {
        x,
        f: fx,
        converged: true,
        evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> NmSettings {
        NmSettings {
            max_evals: 5000,
            x_tol: 1e-9,
            f_tol_rel: 1e-14,
            initial_step: 0.1,
        }
    }

    #[test]
    fn finds_interior_minimum_of_a_quadratic() {
        let target = [0.3, 0.7, 0.55, 0.2];
        let mut f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (i as f64 + 1.0) * (a - b).powi(2))
                .sum::<f64>()
                + 1.0
        };
        let out = nelder_mead(&mut f, &[0.5; 4], &settings());
        assert!(out.converged);
        for (a, b) in out.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn respects_the_box() {
        // unconstrained minimum at (1.4, -0.3): projected answer is (1, 0)
        let mut f = |x: &[f64]| (x[0] - 1.4).powi(2) + (x[1] + 0.3).powi(2);
        let out = nelder_mead(&mut f, &[0.5, 0.5], &settings());
        assert!((out.x[0] - 1.0).abs() < 1e-7 && out.x[1].abs() < 1e-7, "{:?}", out.x);
        let f0 = f(&[0.5, 0.5]);
        let out = compass_search(&mut f, &[0.5, 0.5], f0, 0.1, 1e-9, 10_000);
        assert!((out.x[0] - 1.0).abs() < 1e-8 && out.x[1].abs() < 1e-8);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut f = |x: &[f64]| x.iter().map(|v| (v - 0.123).powi(2)).sum::<f64>();
        let s = NmSettings {
            max_evals: 20,
            ..settings()
        };
        let out = nelder_mead(&mut f, &[0.9; 6], &s);
        assert!(!out.converged);
        assert!(out.evals <= 20 + 7);
    }
}
