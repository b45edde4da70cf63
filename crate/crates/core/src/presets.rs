//! Built-in 3-, 5- and 8-city commuter networks.
//!
//! All share `T = 28` days, `gamma = 1/7`, `alpha = 0.64`, weekly shipments of
//! `{1, 2, 3, 4} / 30`, `c_v = 0.01` and `c_h = 100`. Population lists are
//! normalized to sum to one; recovered proportions start at `1 - s0 - i0`.

use crate::error::{Error, Result};
use crate::model::{build_sir_commuter, CommuterParams, Scenario, ShipmentSchedule};

pub const PRESET_NAMES: [&str; 3] = ["cities3", "cities5", "cities8"];
/// Single city, single week: small enough for the brute-force oracle.
pub const TOY: &str = "toy";

pub const HORIZON: f64 = 28.0;
pub const GAMMA: f64 = 1.0 / 7.0;
pub const ALPHA: f64 = 0.64;
pub const DOSE_COST: f64 = 0.01;
pub const HOSPITAL_COST: f64 = 100.0;
const TOY_DOSE_COST: f64 = 10.0;

pub fn week_budgets() -> Vec<f64> {
    [1.0, 2.0, 3.0, 4.0].iter().map(|v| v / 30.0).collect()
}

/// Raw (pre-normalization) parameters of a preset.
pub fn preset_params(name: &str) -> Result<CommuterParams> {
    let (beta, pops, s0, i0, vmax, m): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) =
        match name {
            "cities3" => (
                vec![0.3, 0.2, 0.1],
                vec![0.83, 0.083, 0.083],
                vec![0.96, 0.97, 0.95],
                vec![0.02, 0.02, 0.01],
                vec![0.3; 3],
                vec![
                    vec![0.9, 0.05, 0.05],
                    vec![0.45, 0.45, 0.10],
                    vec![0.45, 0.10, 0.45],
                ],
            ),
            "cities5" => (
                vec![0.35, 0.3, 0.25, 0.2, 0.15],
                vec![0.5, 0.3, 0.1, 0.05, 0.05],
                vec![0.97; 5],
                vec![0.01; 5],
                vec![0.35, 0.32, 0.3, 0.28, 0.26],
                vec![
                    vec![0.8, 0.05, 0.05, 0.05, 0.05],
                    vec![0.1, 0.7, 0.1, 0.05, 0.05],
                    vec![0.05, 0.1, 0.7, 0.1, 0.05],
                    vec![0.05, 0.05, 0.1, 0.7, 0.1],
                    vec![0.05, 0.05, 0.05, 0.1, 0.75],
                ],
            ),
            "cities8" => (
                vec![0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.04],
                vec![0.46, 0.26, 0.13, 0.06, 0.03, 0.02, 0.007, 0.007],
                vec![0.98; 8],
                vec![0.005; 8],
                vec![0.5, 0.48, 0.46, 0.44, 0.42, 0.4, 0.38, 0.36],
                vec![
                    vec![0.7, 0.1, 0.05, 0.05, 0.03, 0.03, 0.02, 0.02],
                    vec![0.1, 0.7, 0.1, 0.02, 0.02, 0.02, 0.02, 0.02],
                    vec![0.05, 0.1, 0.75, 0.02, 0.02, 0.02, 0.02, 0.02],
                    vec![0.05, 0.02, 0.02, 0.75, 0.05, 0.05, 0.03, 0.03],
                    vec![0.03, 0.02, 0.02, 0.05, 0.8, 0.03, 0.02, 0.03],
                    vec![0.03, 0.02, 0.02, 0.05, 0.03, 0.8, 0.03, 0.02],
                    vec![0.02, 0.02, 0.02, 0.03, 0.02, 0.03, 0.85, 0.01],
                    vec![0.02, 0.02, 0.02, 0.03, 0.03, 0.02, 0.01, 0.85],
                ],
            ),
            TOY => return Ok(toy_params()),
            other => {
                return Err(Error::InvalidScenario(format!(
                    "unknown preset '{other}'; valid presets: {}, {TOY}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
    Ok(CommuterParams {
        beta,
        gamma: GAMMA,
        alpha: ALPHA,
        commuting: m,
        populations: pops,
        max_rate: vmax.iter().map(|v| v / HORIZON).collect(),
        shipments: ShipmentSchedule::new(week_budgets(), ShipmentSchedule::DEFAULT_EPSILON)?,
        dose_cost: DOSE_COST,
        hospital_cost: HOSPITAL_COST,
        horizon: HORIZON,
        s0,
        i0,
        migration: None,
    })
}

/// One city over one week. Vaccinating pays early on and stops paying well
/// before the horizon, so the optimal switch is interior and the supply
/// (enough for the whole week) never binds.
fn toy_params() -> CommuterParams {
    CommuterParams {
        beta: vec![0.5],
        gamma: GAMMA,
        alpha: ALPHA,
        commuting: vec![vec![1.0]],
        populations: vec![1.0],
        max_rate: vec![0.05],
        shipments: ShipmentSchedule::new(vec![0.5], ShipmentSchedule::DEFAULT_EPSILON)
            .expect("valid toy shipments"),
        dose_cost: TOY_DOSE_COST,
        hospital_cost: HOSPITAL_COST,
        horizon: 7.0,
        s0: vec![0.9],
        i0: vec![0.05],
        migration: None,
    }
}

/// Normalizes populations so they sum to one.
pub fn normalize(pops: &[f64]) -> Vec<f64> {
    let total: f64 = pops.iter().sum();
    let mut out: Vec<f64> = pops.iter().map(|p| p / total).collect();
    // absorb the rounding residue so the sum is exact to the last ulp or two
    let residue = 1.0 - out.iter().sum::<f64>();
    if let Some(big) = out
        .iter_mut()
        .max_by(|a, b| a.partial_cmp(b).expect("finite populations"))
    {
        *big += residue;
    }
    out
}

/// Scenario for a named preset.
pub fn preset(name: &str) -> Result<Scenario> {
    let mut p = preset_params(name)?;
    p.populations = normalize(&p.populations);
    build_sir_commuter(&p)
}

/// Mass-conserving migration of susceptibles along the commuting network:
/// people of city `j` relocate to city `l` at rate `rate * M_jl` per day.
pub fn commuting_migration(commuting: &[Vec<f64>], rate: f64) -> Vec<f64> {
    let k = commuting.len();
    let mut q = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                q[i * k + j] = rate * commuting[j][i];
            }
        }
    }
    for j in 0..k {
        let out: f64 = (0..k).filter(|&i| i != j).map(|i| q[i * k + j]).sum();
        q[j * k + j] = -out;
    }
    q
}

/// Preset with linear migration of susceptibles added.
pub fn preset_with_migration(name: &str, rate: f64) -> Result<Scenario> {
    let mut p = preset_params(name)?;
    p.populations = normalize(&p.populations);
    p.migration = Some(commuting_migration(&p.commuting, rate));
    build_sir_commuter(&p)
}
