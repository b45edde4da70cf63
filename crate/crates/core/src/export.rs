//! CSV and JSON emission of trajectories, costates and generic series.
//!
//! Numbers are written with 17 significant digits so every value round-trips.

use crate::adjoint::AdjointTrajectory;
use crate::forward::StateTrajectory;
use std::fmt::Write;

/// Formats a float with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column-oriented CSV: one header per column, all columns the same length.
pub fn columns_csv(headers: &[String], columns: &[Vec<f64>]) -> String {
    assert_eq!(headers.len(), columns.len(), "one header per column");
    let rows = columns.first().map_or(0, Vec::len);
    assert!(columns.iter().all(|c| c.len() == rows), "ragged columns");
    let mut out = headers.join(",");
    out.push('\n');
    for r in 0..rows {
        for (c, col) in columns.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&fmt_num(col[r]));
        }
        out.push('\n');
    }
    out
}

/// Label of disease stage `m`: `I`, `R` for SIR models, `x{m+1}` otherwise.
pub fn stage_label(stages: usize, m: usize) -> String {
    if stages == 2 {
        ["I", "R"][m].to_string()
    } else {
        format!("x{}", m + 1)
    }
}

/// `time, s_1..s_K, <stage>_1..<stage>_K for every stage, V, u_1..u_K`.
pub fn trajectory_csv(traj: &StateTrajectory) -> String {
    let k = traj.groups;
    let d = traj.stages;
    let n = traj.nodes();
    let mut headers = vec!["time".to_string()];
    let mut cols = vec![traj.times.clone()];
    for i in 0..k {
        headers.push(format!("s_{}", i + 1));
        cols.push((0..n).map(|t| traj.s_at(t)[i]).collect());
    }
    for m in 0..d {
        for i in 0..k {
            headers.push(format!("{}_{}", stage_label(d, m), i + 1));
            cols.push((0..n).map(|t| traj.x_at(t)[i * d + m]).collect());
        }
    }
    headers.push("V".into());
    cols.push(traj.v.clone());
    for i in 0..k {
        headers.push(format!("u_{}", i + 1));
        cols.push((0..n).map(|t| traj.u_at(t)[i]).collect());
    }
    columns_csv(&headers, &cols)
}

/// Events as a JSON array.
pub fn events_json(traj: &StateTrajectory) -> String {
    serde_json::to_string_pretty(&traj.events).expect("events serialize")
}

/// `time, psi_s_*, psi_<stage>_*, lambda, phi_*`.
pub fn adjoint_csv(adj: &AdjointTrajectory) -> String {
    let k = adj.groups;
    let d = adj.stages;
    let n = adj.nodes();
    let mut headers = vec!["time".to_string()];
    let mut cols = vec![adj.times.clone()];
    for i in 0..k {
        headers.push(format!("psi_s_{}", i + 1));
        cols.push((0..n).map(|t| adj.psi_s_at(t)[i]).collect());
    }
    for m in 0..d {
        for i in 0..k {
            headers.push(format!("psi_{}_{}", stage_label(d, m), i + 1));
            cols.push((0..n).map(|t| adj.psi_x_at(t)[i * d + m]).collect());
        }
    }
    headers.push("lambda".into());
    cols.push(adj.lambda.clone());
    for i in 0..k {
        headers.push(format!("phi_{}", i + 1));
        cols.push((0..n).map(|t| adj.phi_at(t)[i]).collect());
    }
    columns_csv(&headers, &cols)
}

/// Parses a CSV produced by [`columns_csv`] back into headers and columns.
pub fn parse_columns_csv(text: &str) -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let headers: Vec<String> = lines.next()?.split(',').map(str::to_string).collect();
    let mut cols = vec![Vec::new(); headers.len()];
    for line in lines.filter(|l| !l.is_empty()) {
        let mut count = 0;
        for (c, field) in line.split(',').enumerate() {
            cols.get_mut(c)?.push(field.parse().ok()?);
            count += 1;
        }
        if count != headers.len() {
            return None;
        }
    }
    Some((headers, cols))
}

/// Two-column `key,value` text for small summaries.
pub fn key_values(pairs: &[(&str, f64)]) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in pairs {
        let _ = writeln!(out, "{k},{}", fmt_num(*v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{simulate, BangSchedule};
    use crate::presets::preset;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn trajectory_csv_layout() {
        let sc = preset("cities3").unwrap();
        let traj = simulate(&sc, &BangSchedule::uniform(&sc, 0.5).into(), 0.5).unwrap();
        let csv = trajectory_csv(&traj);
        let (headers, cols) = parse_columns_csv(&csv).unwrap();
        assert_eq!(
            headers,
            ["time", "s_1", "s_2", "s_3", "I_1", "I_2", "I_3", "R_1", "R_2", "R_3", "V", "u_1", "u_2", "u_3"]
        );
        assert_eq!(cols[0].len(), traj.nodes());
        assert_eq!(cols[10], traj.v);
        assert_eq!(cols[5][7], traj.x_at(7)[2]);
    }
}
