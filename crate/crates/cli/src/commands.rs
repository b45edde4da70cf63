use crate::svg::Figure;
use crate::{Common, Mode};
use anyhow::{anyhow, bail, Context, Result};
use epictrl_core::export::{adjoint_csv, events_json, key_values, stage_label, trajectory_csv};
use epictrl_core::model::WEEK;
use epictrl_core::scenario_file::ScenarioFile;
use epictrl_core::{
    brute_force_switch_grid, compare_costs, costates_for_schedule, cost_linear, fbsm_grid,
    integrate_adjoint, load_scenario, optimize_switch_times, preset, preset_with_migration,
    validate_assumptions, verify_control, BangSchedule, Control, GridControl,
    OptResult, OptimizeOptions, Scenario, ShipmentSchedule, StateTrajectory,
};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Machine-readable error document.
pub fn error_json(e: &anyhow::Error) -> String {
    let kind = match e.downcast_ref::<epictrl_core::Error>() {
        Some(core) => core.kind(),
        None if e.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "usage",
    };
    let causes: Vec<String> = e.chain().map(|c| c.to_string()).collect();
    serde_json::to_string_pretty(&json!({
        "error": { "kind": kind, "message": e.to_string(), "causes": causes }
    }))
    .expect("error serializes")
}

fn load(common: &Common) -> Result<Scenario> {
    let mut sc = match (&common.preset, &common.scenario) {
        (Some(name), None) => match common.migration {
            Some(rate) => preset_with_migration(name, rate)?,
            None => preset(name)?,
        },
        (None, Some(path)) => {
            if common.migration.is_some() {
                bail!("--migration applies to presets; put Q in the scenario file instead");
            }
            load_scenario(path, common.strict)?.0
        }
        (None, None) => bail!("one of --preset or --scenario is required"),
        (Some(_), Some(_)) => bail!("--preset and --scenario are mutually exclusive"),
    };
    if let Some(eps) = common.epsilon {
        sc.shipments = ShipmentSchedule::new(sc.shipments.week_budgets.clone(), eps)?;
    }
    let report = validate_assumptions(&sc);
    for c in report.checks.iter().filter(|c| !c.passed) {
        let detail = c.violation.as_deref().unwrap_or("violated");
        if common.strict {
            bail!(epictrl_core::Error::Assumptions(vec![format!("{}: {detail}", c.name)]));
        }
        eprintln!("warning: assumption {} fails: {detail}", c.name);
    }
    Ok(sc)
}

fn options(common: &Common) -> Result<OptimizeOptions> {
    let mut opts = OptimizeOptions {
        h: common.h,
        starts: common.starts,
        seed: common.seed,
        ..Default::default()
    };
    if let Some(m) = common.max_iters {
        opts.max_iters = m;
    }
    opts.validate()?;
    Ok(opts)
}

/// Writes into the output directory and reports each file on stdout.
struct Output<'a> {
    dir: PathBuf,
    plots: bool,
    common: &'a Common,
}

impl<'a> Output<'a> {
    fn new(common: &'a Common, sc: &Scenario) -> Result<Self> {
        std::fs::create_dir_all(&common.out)
            .with_context(|| format!("cannot create {}", common.out.display()))?;
        let out = Self {
            dir: common.out.clone(),
            plots: !common.no_plots,
            common,
        };
        out.write("scenario.json", &ScenarioFile::from_scenario(sc).to_json())?;
        Ok(out)
    }

    fn write(&self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn figure(&self, stem: &str, fig: &Figure) -> Result<()> {
        self.write(&format!("{stem}.csv"), &fig.csv())?;
        if self.plots {
            self.write(&format!("{stem}.svg"), &fig.svg())?;
        }
        Ok(())
    }

    fn source(&self) -> String {
        match (&self.common.preset, &self.common.scenario) {
            (Some(p), _) => p.clone(),
            (_, Some(s)) => s.display().to_string(),
            _ => String::new(),
        }
    }
}

fn week_guides(sc: &Scenario) -> Vec<f64> {
    (1..sc.weeks()).map(|w| WEEK * w as f64).collect()
}

fn per_region(
    sc: &Scenario,
    traj: &StateTrajectory,
    title: &str,
    y_label: &str,
    prefix: &str,
    value: impl Fn(usize, usize) -> f64,
) -> Figure {
    let mut fig = Figure::new(title, "time", y_label, traj.times.clone());
    for i in 0..sc.groups {
        fig.push(format!("{prefix}_{}", i + 1), (0..traj.nodes()).map(|k| value(k, i)).collect());
    }
    fig.guides = week_guides(sc);
    fig
}

/// Control and infection panels of a trajectory.
fn trajectory_figures(out: &Output, sc: &Scenario, traj: &StateTrajectory) -> Result<()> {
    let d = sc.stages;
    out.figure(
        "controls",
        &per_region(sc, traj, "Vaccination rate per region", "u", "u", |k, i| traj.u_at(k)[i]),
    )?;
    let stage = stage_label(d, 0);
    out.figure(
        "infectious",
        &per_region(sc, traj, "Infectious proportion per region", &stage, &stage, |k, i| {
            traj.x_at(k)[i * d]
        }),
    )?;
    Ok(())
}

/// Reads an optimize result, a tagged control or a bare schedule/grid.
fn read_policy(path: &Path) -> Result<Control> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| epictrl_core::Error::Malformed(format!("{}: {e}", path.display())))?;
    if value.get("method").is_some() {
        let r: OptResult = serde_json::from_value(value)
            .map_err(|e| epictrl_core::Error::Malformed(e.to_string()))?;
        return r.control().ok_or_else(|| anyhow!("{} holds no policy", path.display()));
    }
    if let Ok(c) = serde_json::from_value::<Control>(value.clone()) {
        return Ok(c);
    }
    if let Ok(b) = serde_json::from_value::<BangSchedule>(value.clone()) {
        return Ok(Control::Bang(BangSchedule::new(b.groups, b.weeks, b.tau)?));
    }
    if let Ok(g) = serde_json::from_value::<GridControl>(value) {
        return Ok(Control::Grid(GridControl::new(g.groups, g.h, g.rates)?));
    }
    bail!(epictrl_core::Error::Malformed(format!(
        "{}: expected an optimize result, a schedule or a grid control",
        path.display()
    )))
}

pub fn run_simulate(common: &Common, schedule: Option<&Path>, fraction: f64) -> Result<ExitCode> {
    let sc = load(common)?;
    let control = match schedule {
        Some(p) => read_policy(p)?,
        None => {
            if !(0.0..=1.0).contains(&fraction) {
                bail!(epictrl_core::Error::InvalidOptions(format!(
                    "fraction {fraction} outside [0, 1]"
                )));
            }
            Control::Bang(BangSchedule::uniform(&sc, fraction))
        }
    };
    let traj = epictrl_core::simulate(&sc, &control, common.h)?;
    let j = cost_linear(&traj, &sc)?;
    let out = Output::new(common, &sc)?;
    out.write("trajectory.csv", &trajectory_csv(&traj))?;
    out.write("events.json", &events_json(&traj))?;
    let peak = (0..traj.nodes())
        .map(|k| traj.infectious_total(&sc.populations, k))
        .fold(0.0, f64::max);
    let last = traj.nodes() - 1;
    out.write(
        "summary.csv",
        &key_values(&[("J", j), ("doses", traj.v[last]), ("peak_infectious", peak)]),
    )?;
    out.figure(
        "states",
        &per_region(&sc, &traj, "Susceptible proportion per region", "s", "s", |k, i| {
            traj.s_at(k)[i]
        }),
    )?;
    trajectory_figures(&out, &sc, &traj)?;
    println!("J = {j:.12}");
    Ok(ExitCode::SUCCESS)
}

pub fn optimize(common: &Common, mode: Mode) -> Result<ExitCode> {
    let sc = load(common)?;
    let opts = options(common)?;
    let result = match mode {
        Mode::Bang => optimize_switch_times(&sc, &opts)?,
        Mode::Grid => fbsm_grid(&sc, &opts)?,
    };
    let control = result.control().ok_or_else(|| anyhow!("optimizer returned no policy"))?;
    let traj = epictrl_core::simulate(&sc, &control, opts.h)?;
    let out = Output::new(common, &sc)?;
    out.write("result.json", &result.to_json())?;
    out.write("log.csv", &result.log_csv())?;
    out.write("trajectory.csv", &trajectory_csv(&traj))?;
    trajectory_figures(&out, &sc, &traj)?;
    println!("{} on {}: J = {:.12} after {} evaluations", result.method, out.source(), result.j, result.evaluations);
    for d in &result.diagnostics {
        println!("  {d}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(common: &Common, schedule: &Path) -> Result<ExitCode> {
    let sc = load(common)?;
    let control = read_policy(schedule)?;
    let report = verify_control(&sc, &control, common.h)?;
    let out = Output::new(common, &sc)?;
    out.write("verification.json", &report.to_json())?;
    print!("{}", report.to_text());
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn oracle(common: &Common, resolution: f64) -> Result<ExitCode> {
    let sc = load(common)?;
    let result = brute_force_switch_grid(&sc, resolution, common.h)?;
    let out = Output::new(common, &sc)?;
    out.write("oracle.json", &result.to_json())?;
    out.write("log.csv", &result.log_csv())?;
    let tau = result.schedule.as_ref().map(|s| s.tau.clone()).unwrap_or_default();
    println!("grid optimum over {} points: J = {:.12}, tau = {tau:?}", result.evaluations, result.j);
    Ok(ExitCode::SUCCESS)
}

pub fn compare(common: &Common, cq: Option<f64>) -> Result<ExitCode> {
    let sc = load(common)?;
    let opts = options(common)?;
    let cmp = compare_costs(&sc, cq, &opts)?;
    let out = Output::new(common, &sc)?;
    out.write("comparison.csv", &cmp.to_csv())?;
    let summary = json!({
        "c_q": cmp.c_q,
        "j_lin": cmp.j_lin,
        "j_quad": cmp.j_quad,
        "abs_cost_difference": (cmp.j_quad - cmp.j_lin).abs(),
        "max_jump_lin": cmp.max_jump_lin,
        "max_jump_quad": cmp.max_jump_quad,
        "jump_threshold": cmp.jump_threshold,
        "quadratic_smooth": cmp.max_jump_quad <= cmp.jump_threshold,
        "linear": { "method": cmp.linear.method, "j": cmp.linear.j, "schedule": cmp.linear.schedule },
        "quadratic": { "method": cmp.quadratic.method, "j": cmp.quadratic.j, "converged": cmp.quadratic.converged },
    });
    out.write("comparison.json", &serde_json::to_string_pretty(&summary)?)?;
    let pair = |stem: &str, title: &str, y: &str, lin: &[f64], quad: &[f64]| -> Result<()> {
        let mut fig = Figure::new(title, "time", y, cmp.times.clone());
        fig.push("linear", lin.to_vec());
        fig.push("quadratic", quad.to_vec());
        fig.guides = week_guides(&sc);
        out.figure(stem, &fig)
    };
    pair("effort", "Doses per day", "sum n u s", &cmp.effort_lin, &cmp.effort_quad)?;
    pair("infectious", "Infectious proportion", "I", &cmp.infectious_lin, &cmp.infectious_quad)?;
    pair("vaccinated", "Doses administered", "V", &cmp.vaccinated_lin, &cmp.vaccinated_quad)?;
    let mut fig = Figure::new("Running cost difference", "time", "J_quad(t) - J_lin(t)", cmp.times.clone());
    fig.push("difference", cmp.cost_difference.clone());
    fig.guides = week_guides(&sc);
    out.figure("cost_difference", &fig)?;
    println!(
        "J_lin = {:.12}, J_quad = {:.12} (c_q = {:.6e}), |difference| = {:.6e}",
        cmp.j_lin,
        cmp.j_quad,
        cmp.c_q,
        (cmp.j_quad - cmp.j_lin).abs()
    );
    println!(
        "largest in-week control jump: linear {:.6e}, quadratic {:.6e} (threshold {:.6e})",
        cmp.max_jump_lin, cmp.max_jump_quad, cmp.jump_threshold
    );
    Ok(ExitCode::SUCCESS)
}

pub fn adjoint(common: &Common, schedule: Option<&Path>) -> Result<ExitCode> {
    let sc = load(common)?;
    let control = match schedule {
        Some(p) => read_policy(p)?,
        None => {
            let r = optimize_switch_times(&sc, &options(common)?)?;
            println!("optimized: J = {:.12}", r.j);
            r.control().ok_or_else(|| anyhow!("optimizer returned no policy"))?
        }
    };
    let traj = epictrl_core::simulate(&sc, &control, common.h)?;
    let adj = match &control {
        Control::Bang(b) => costates_for_schedule(&sc, &traj, b)?.0,
        Control::Grid(_) => integrate_adjoint(&sc, &traj, &control)?,
    };
    let out = Output::new(common, &sc)?;
    out.write("adjoint.csv", &adjoint_csv(&adj))?;
    let mut fig = Figure::new("Susceptible costates", "time", "psi_s", adj.times.clone());
    for i in 0..sc.groups {
        fig.push(format!("psi_s_{}", i + 1), (0..adj.nodes()).map(|k| adj.psi_s_at(k)[i]).collect());
    }
    fig.guides = week_guides(&sc);
    out.figure("psi_s", &fig)?;
    let mut phi = Figure::new("Switching functions", "time", "phi", adj.times.clone());
    for i in 0..sc.groups {
        phi.push(format!("phi_{}", i + 1), (0..adj.nodes()).map(|k| adj.phi_at(k)[i]).collect());
    }
    phi.guides = week_guides(&sc);
    out.figure("switching", &phi)?;
    for i in 0..sc.groups {
        let increasing = (1..adj.nodes()).all(|k| adj.psi_s_at(k)[i] > adj.psi_s_at(k - 1)[i]);
        println!("region {}: psi_s strictly increasing: {increasing}", i + 1);
    }
    Ok(ExitCode::SUCCESS)
}
