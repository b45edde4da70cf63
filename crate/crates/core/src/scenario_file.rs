//! JSON scenario files.
//!
//! Two shapes are accepted. The commuter shape gives city transmission rates
//! `beta`, a recovery rate `gamma`, the home-stay fraction `alpha` and the
//! commuting matrix `M`; it always describes an SIR model. The general shape
//! gives the force-of-infection tensor `B` (`K x K x d`), the progression
//! matrix `G` (`d x d`) and the cost vector `c` directly. Common keys: `K`,
//! `d`, `n`, `c_v`, `v_max`, `week_budgets`, `epsilon`, `T`, `s0`, `x0`
//! (`d x K`), and optionally `Q` (`K x K`, acting on head counts) and `V0`.
//!
//! `v_max` entries may be numbers or strings such as `"0.3/T"` or `"1/56"`;
//! `T` resolves to the horizon. Export always uses the general shape, so a
//! saved scenario reloads to an identical value.

use crate::error::{Error, Result};
use crate::model::{
    commuter_kappa, validate_assumptions, AssumptionReport, InitialCondition, Scenario,
    ShipmentSchedule, WEEK,
};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;

/// Serializable general-shape scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub n: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub c_v: f64,
    pub v_max: Vec<f64>,
    pub week_budgets: Vec<f64>,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub s0: Vec<f64>,
    pub x0: Vec<Vec<f64>>,
    #[serde(rename = "V0")]
    pub v0: f64,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none", default)]
    pub q: Option<Vec<Vec<f64>>>,
}

impl ScenarioFile {
    pub fn from_scenario(sc: &Scenario) -> Self {
        let k = sc.groups;
        let d = sc.stages;
        let square = |v: &[f64], n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|r| v[r * n..(r + 1) * n].to_vec()).collect()
        };
        Self {
            k,
            d,
            n: sc.populations.clone(),
            b: (0..k)
                .map(|i| (0..k).map(|j| sc.beta(i, j).to_vec()).collect())
                .collect(),
            g: square(&sc.progression, d),
            c: sc.health_cost.clone(),
            c_v: sc.dose_cost,
            v_max: sc.max_rate.clone(),
            week_budgets: sc.shipments.week_budgets.clone(),
            epsilon: sc.shipments.epsilon,
            t: sc.horizon,
            s0: sc.initial.s0.clone(),
            x0: (0..d)
                .map(|m| (0..k).map(|i| sc.initial.x0[i * d + m]).collect())
                .collect(),
            v0: sc.initial.v0,
            q: sc.migration.as_ref().map(|q| square(q, k)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Writes `sc` as a general-shape JSON document.
pub fn save_scenario(sc: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, ScenarioFile::from_scenario(sc).to_json()).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads and validates a scenario file. Assumption failures are returned in
/// the report; with `strict` they become an error instead.
pub fn load_scenario(path: &Path, strict: bool) -> Result<(Scenario, AssumptionReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text, strict)
}

/// [`load_scenario`] on an in-memory document.
pub fn parse_scenario(text: &str, strict: bool) -> Result<(Scenario, AssumptionReport)> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    let sc = scenario_from_value(&value)?;
    let report = validate_assumptions(&sc);
    if strict && !report.all_passed() {
        return Err(Error::Assumptions(
            report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{}: {}", c.name, c.violation.clone().unwrap_or_default()))
                .collect(),
        ));
    }
    Ok((sc, report))
}

const KNOWN_KEYS: [&str; 21] = [
    "name", "K", "d", "n", "beta", "B", "gamma", "G", "alpha", "M", "c", "c_v", "c_h", "v_max",
    "week_budgets", "epsilon", "T", "s0", "x0", "Q", "V0",
];

struct Reader<'a> {
    obj: &'a Map<String, Value>,
    problems: Vec<String>,
}

impl<'a> Reader<'a> {
    fn fail(&mut self, pointer: &str, msg: impl Into<String>) {
        self.problems.push(format!("{pointer}: {}", msg.into()));
    }

    fn field(&mut self, key: &str, required: bool) -> Option<&'a Value> {
        let v = self.obj.get(key);
        if v.is_none() && required {
            self.fail(&format!("/{key}"), "missing required key");
        }
        v
    }

    fn number_at(&mut self, v: &Value, pointer: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(pointer, "expected a finite number");
                None
            }
        }
    }

    fn number(&mut self, key: &str, required: bool) -> Option<f64> {
        let v = self.field(key, required)?;
        self.number_at(v, &format!("/{key}"))
    }

    fn vector_at(&mut self, v: &Value, pointer: &str, len: Option<usize>) -> Option<Vec<f64>> {
        let Some(arr) = v.as_array() else {
            self.fail(pointer, "expected an array of numbers");
            return None;
        };
        if let Some(len) = len {
            if arr.len() != len {
                self.fail(pointer, format!("expected {len} entries, found {}", arr.len()));
                return None;
            }
        }
        let mut out = Vec::with_capacity(arr.len());
        let mut ok = true;
        for (i, e) in arr.iter().enumerate() {
            match self.number_at(e, &format!("{pointer}/{i}")) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn vector(&mut self, key: &str, len: Option<usize>, required: bool) -> Option<Vec<f64>> {
        let v = self.field(key, required)?;
        self.vector_at(v, &format!("/{key}"), len)
    }

    fn matrix(&mut self, key: &str, rows: usize, cols: usize, required: bool) -> Option<Vec<Vec<f64>>> {
        let v = self.field(key, required)?;
        let pointer = format!("/{key}");
        let Some(arr) = v.as_array() else {
            self.fail(&pointer, "expected an array of rows");
            return None;
        };
        if arr.len() != rows {
            self.fail(&pointer, format!("expected {rows} rows, found {}", arr.len()));
            return None;
        }
        let mut out = Vec::with_capacity(rows);
        for (r, row) in arr.iter().enumerate() {
            out.push(self.vector_at(row, &format!("{pointer}/{r}"), Some(cols))?);
        }
        Some(out)
    }
}

fn rate_value(text: &str, horizon: f64) -> Option<f64> {
    let parse = |s: &str| -> Option<f64> {
        let s = s.trim();
        if s == "T" {
            Some(horizon)
        } else {
            s.parse().ok()
        }
    };
    match text.split_once('/') {
        Some((a, b)) => Some(parse(a)? / parse(b)?),
        None => parse(text),
    }
}

fn scenario_from_value(value: &Value) -> Result<Scenario> {
    let Some(obj) = value.as_object() else {
        return Err(Error::Schema(vec!["/: expected a JSON object".into()]));
    };
    let mut rd = Reader {
        obj,
        problems: Vec::new(),
    };
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            rd.fail(&format!("/{key}"), "unknown key");
        }
    }
    let general = obj.contains_key("B");
    if general && obj.contains_key("beta") {
        rd.fail("/beta", "give either beta (commuter shape) or B (general shape), not both");
    }
    let k = match rd.field("K", true).map(|v| v.as_u64()) {
        Some(Some(k)) if k > 0 => Some(k as usize),
        Some(_) => {
            rd.fail("/K", "expected a positive integer");
            None
        }
        None => None,
    };
    let d = match rd.field("d", general).map(|v| v.as_u64()) {
        Some(Some(d)) if d >= 2 => Some(d as usize),
        Some(_) => {
            rd.fail("/d", "expected an integer of at least 2");
            None
        }
        None if !general => Some(2),
        None => None,
    };
    let (Some(k), Some(d)) = (k, d) else {
        return Err(Error::Schema(rd.problems));
    };
    if !general && d != 2 {
        rd.fail("/d", "the commuter shape describes SIR cities, so d must be 2");
    }

    let horizon = rd.number("T", true);
    let c_v = rd.number("c_v", true);
    let epsilon = rd
        .number("epsilon", false)
        .unwrap_or(ShipmentSchedule::DEFAULT_EPSILON);
    let mut n = rd.vector("n", Some(k), true);
    let budgets = rd.vector("week_budgets", None, true);
    let s0 = rd.vector("s0", Some(k), true);
    let x0 = rd.matrix("x0", d, k, true);
    let v0 = rd.number("V0", false).unwrap_or(0.0);
    let q = rd.matrix("Q", k, k, false);

    let mut v_max = None;
    if let (Some(v), Some(t)) = (rd.field("v_max", true), horizon) {
        match v.as_array() {
            Some(arr) if arr.len() == k => {
                let mut out = Vec::with_capacity(k);
                for (i, e) in arr.iter().enumerate() {
                    let val = match e {
                        Value::String(s) => rate_value(s, t),
                        other => other.as_f64(),
                    };
                    match val {
                        Some(x) if x > 0.0 && x.is_finite() => out.push(x),
                        _ => rd.fail(&format!("/v_max/{i}"), "expected a positive rate"),
                    }
                }
                if out.len() == k {
                    v_max = Some(out);
                }
            }
            _ => rd.fail("/v_max", format!("expected {k} entries")),
        }
    }

    if let Some(pops) = &n {
        for (i, &p) in pops.iter().enumerate() {
            if !(p > 0.0) {
                rd.fail(&format!("/n/{i}"), "population share must be positive");
            }
        }
    }
    if let Some(b) = &budgets {
        for (w, &v) in b.iter().enumerate() {
            if v < 0.0 {
                rd.fail(&format!("/week_budgets/{w}"), "weekly budget must be nonnegative");
            }
        }
    }
    if let (Some(t), Some(b)) = (horizon, &budgets) {
        let weeks = t / WEEK;
        if !(t > 0.0) || (weeks - weeks.round()).abs() > 1e-9 {
            rd.fail("/T", "horizon must be a positive multiple of 7 days");
        } else if weeks.round() as usize != b.len() {
            rd.fail(
                "/week_budgets",
                format!("{} budgets for {} weeks", b.len(), weeks.round()),
            );
        }
    }
    if let Some(c) = c_v {
        if !(c > 0.0) {
            rd.fail("/c_v", "dose cost must be positive");
        }
    }
    if let Some(s) = &s0 {
        for (i, &v) in s.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                rd.fail(&format!("/s0/{i}"), "initial susceptible share must lie in (0, 1]");
            }
        }
    }
    if let Some(x) = &x0 {
        for (m, row) in x.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v < 0.0 {
                    rd.fail(&format!("/x0/{m}/{i}"), "stage shares must be nonnegative");
                }
            }
        }
    }
    if let Some(q) = &q {
        for col in 0..k {
            let sum: f64 = (0..k).map(|r| q[r][col]).sum();
            if sum.abs() > 1e-12 {
                rd.fail(&format!("/Q/{col}"), format!("column {col} sums to {sum}, expected 0"));
            }
            for (r, row) in q.iter().enumerate() {
                if r != col && row[col] < 0.0 {
                    rd.fail(&format!("/Q/{r}/{col}"), "off-diagonal migration rate is negative");
                }
            }
        }
    }

    // disease model
    let mut transmission = None;
    let mut progression = None;
    let health_cost: Option<Vec<f64>>;
    if general {
        if let Some(v) = rd.field("B", true) {
            transmission = read_tensor(&mut rd, v, k, d);
        }
        progression = rd.matrix("G", d, d, true).map(|g| g.concat());
        health_cost = rd.vector("c", Some(d), true);
    } else {
        let beta = rd.vector("beta", Some(k), true);
        let gamma = rd.number("gamma", true);
        let alpha = rd.number("alpha", true);
        let m = rd.matrix("M", k, k, true);
        if let Some(b) = &beta {
            for (i, &v) in b.iter().enumerate() {
                if !(v > 0.0) {
                    rd.fail(&format!("/beta/{i}"), "transmission rate must be positive");
                }
            }
        }
        if let Some(g) = gamma {
            if !(g > 0.0) {
                rd.fail("/gamma", "recovery rate must be positive");
            }
        }
        if let Some(a) = alpha {
            if !(a > 0.0 && a <= 1.0) {
                rd.fail("/alpha", "home-stay fraction must lie in (0, 1]");
            }
        }
        if let Some(m) = &m {
            for (r, row) in m.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    rd.fail(
                        &format!("/M/{r}"),
                        format!("row {r} sums to {sum}; rows must be nonnegative and sum to 1"),
                    );
                }
            }
        }
        health_cost = match (rd.vector("c", Some(2), false), rd.number("c_h", false)) {
            (Some(c), _) => Some(c),
            (None, Some(ch)) => Some(vec![ch, 0.0]),
            (None, None) => {
                rd.fail("/c_h", "missing: give c_h or c");
                None
            }
        };
        if let Some(g) = gamma {
            progression = Some(vec![-g, 0.0, g, 0.0]);
        }
        if rd.problems.is_empty() {
            if let (Some(b), Some(a), Some(m), Some(pops)) = (&beta, alpha, &m, &n) {
                let total: f64 = pops.iter().sum();
                let shares: Vec<f64> = pops.iter().map(|p| p / total).collect();
                let kappa = commuter_kappa(b, a, m, &shares);
                let mut t = vec![0.0; k * k * 2];
                for i in 0..k {
                    for j in 0..k {
                        t[(i * k + j) * 2] = kappa[i * k + j];
                    }
                }
                transmission = Some(t);
            }
        }
    }

    if !rd.problems.is_empty() {
        return Err(Error::Schema(rd.problems));
    }
    let (Some(horizon), Some(c_v), Some(budgets), Some(s0), Some(x0), Some(v_max)) =
        (horizon, c_v, budgets, s0, x0, v_max)
    else {
        return Err(Error::Schema(vec!["/: incomplete scenario".into()]));
    };
    let (Some(transmission), Some(progression), Some(health_cost)) =
        (transmission, progression, health_cost)
    else {
        return Err(Error::Schema(vec!["/: incomplete disease model".into()]));
    };
    let pops = n.take().expect("checked above");
    let total: f64 = pops.iter().sum();
    let populations = if (total - 1.0).abs() > 1e-12 {
        crate::presets::normalize(&pops)
    } else {
        pops
    };
    let mut x0_flat = vec![0.0; k * d];
    for (m, row) in x0.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            x0_flat[i * d + m] = v;
        }
    }
    let shipments = ShipmentSchedule::new(budgets, epsilon)
        .map_err(|e| Error::Schema(vec![format!("/epsilon: {e}")]))?;
    let sc = Scenario {
        groups: k,
        stages: d,
        populations,
        transmission,
        progression,
        health_cost,
        dose_cost: c_v,
        max_rate: v_max,
        migration: q.map(|q| q.concat()),
        shipments,
        horizon,
        initial: InitialCondition {
            s0,
            x0: x0_flat,
            v0,
        },
    };
    sc.validate().map_err(|e| Error::Schema(vec![format!("/: {e}")]))?;
    Ok(sc)
}

fn read_tensor(rd: &mut Reader, v: &Value, k: usize, d: usize) -> Option<Vec<f64>> {
    let Some(rows) = v.as_array().filter(|a| a.len() == k) else {
        rd.fail("/B", format!("expected {k} x {k} x {d} nested arrays"));
        return None;
    };
    let mut out = Vec::with_capacity(k * k * d);
    for (i, row) in rows.iter().enumerate() {
        let Some(cells) = row.as_array().filter(|a| a.len() == k) else {
            rd.fail(&format!("/B/{i}"), format!("expected {k} entries"));
            return None;
        };
        for (j, cell) in cells.iter().enumerate() {
            let ptr = format!("/B/{i}/{j}");
            let vals = rd.vector_at(cell, &ptr, Some(d))?;
            for (m, &b) in vals.iter().enumerate() {
                if b < 0.0 {
                    rd.fail(&format!("{ptr}/{m}"), "transmission coefficient must be nonnegative");
                }
            }
            out.extend(vals);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{preset, preset_with_migration, PRESET_NAMES};

    #[test]
    fn presets_round_trip() {
        for name in PRESET_NAMES {
            let sc = preset(name).unwrap();
            let text = ScenarioFile::from_scenario(&sc).to_json();
            let (back, report) = parse_scenario(&text, true).unwrap();
            assert_eq!(back, sc, "{name}");
            assert!(report.all_passed());
        }
        let sc = preset_with_migration("cities3", 0.02).unwrap();
        let (back, _) = parse_scenario(&ScenarioFile::from_scenario(&sc).to_json(), false).unwrap();
        assert_eq!(back, sc);
    }

    fn commuter_doc() -> Value {
        serde_json::json!({
            "K": 2,
            "n": [0.6, 0.4],
            "beta": [0.3, 0.2],
            "gamma": 0.14285714285714285,
            "alpha": 0.64,
            "M": [[0.9, 0.1], [0.2, 0.8]],
            "c_h": 100.0,
            "c_v": 0.01,
            "v_max": ["0.3/T", 0.01],
            "week_budgets": [0.05, 0.05],
            "T": 14,
            "s0": [0.97, 0.98],
            "x0": [[0.02, 0.01], [0.01, 0.01]]
        })
    }

    #[test]
    fn commuter_shape_builds_sir() {
        let (sc, _) = parse_scenario(&commuter_doc().to_string(), true).unwrap();
        assert_eq!(sc.stages, 2);
        assert_eq!(sc.max_rate[0], 0.3 / 14.0);
        assert_eq!(sc.health_cost, vec![100.0, 0.0]);
        assert_eq!(sc.initial.x0, vec![0.02, 0.01, 0.01, 0.01]);
    }

    #[test]
    fn non_stochastic_row_is_named() {
        let mut doc = commuter_doc();
        doc["M"][1] = serde_json::json!([0.5, 0.4]);
        let err = parse_scenario(&doc.to_string(), false).unwrap_err();
        match err {
            Error::Schema(p) => assert!(p.iter().any(|m| m.starts_with("/M/1:")), "{p:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn negative_beta_is_rejected() {
        let mut doc = commuter_doc();
        doc["beta"][0] = serde_json::json!(-0.3);
        let err = parse_scenario(&doc.to_string(), false).unwrap_err();
        assert!(err.to_string().contains("/beta/0"), "{err}");
    }

    #[test]
    fn problems_are_collected() {
        let mut doc = commuter_doc();
        doc["T"] = serde_json::json!(10);
        doc["s0"] = serde_json::json!([0.97]);
        doc["bogus"] = serde_json::json!(1);
        let Error::Schema(p) = parse_scenario(&doc.to_string(), false).unwrap_err() else {
            panic!()
        };
        assert!(p.iter().any(|m| m.starts_with("/T:")));
        assert!(p.iter().any(|m| m.starts_with("/s0:")));
        assert!(p.iter().any(|m| m.starts_with("/bogus:")));
    }

    #[test]
    fn strict_mode_escalates_assumptions() {
        let mut doc = commuter_doc();
        doc["c_h"] = serde_json::json!(0.0);
        assert!(parse_scenario(&doc.to_string(), false).is_ok());
        assert!(matches!(
            parse_scenario(&doc.to_string(), true),
            Err(Error::Assumptions(_))
        ));
    }

    #[test]
    fn malformed_json_is_reported() {
        assert!(matches!(parse_scenario("{\"K\": ", false), Err(Error::Malformed(_))));
    }
}
