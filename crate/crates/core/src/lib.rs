//! Optimal vaccination on a constrained metapopulation epidemic.
//!
//! The crate simulates SIR-type metapopulations under vaccination with a
//! per-group throughput cap and a weekly shipment budget, optimizes the
//! per-region weekly switching times of bang-bang policies, integrates the
//! costate system along a candidate policy, and checks the resulting
//! first-order optimality structure numerically.

pub mod adjoint;
pub mod error;
pub mod export;
pub mod forward;
pub mod isotonic;
pub mod model;
pub mod optimize;
pub mod presets;
pub mod scenario_file;
pub mod verify;

pub use adjoint::{
    costates_for_schedule, estimate_lambda, integrate_adjoint, integrate_costate,
    reconstruct_multipliers, switching_function, CostateOptions,
    AdjointTrajectory, LambdaEstimate, Multipliers,
};
pub use error::{Error, Result};
pub use forward::{
    cost_linear, cost_quadratic, simulate, simulate_from, simulate_with, BangSchedule, Bump,
    Control, Event, EventKind, GridControl, SimOptions, StartPoint, StateTrajectory,
};
pub use model::{
    build_sir_commuter, validate_assumptions, AssumptionReport, CommuterParams,
    InitialCondition, Scenario, ShipmentSchedule,
};
pub use optimize::{
    brute_force_switch_grid, compare_costs, fbsm_grid, objective, optimize_quadratic,
    optimize_switch_times, refine_stationary, Comparison, OptResult, OptimizeOptions,
};
pub use presets::{preset, preset_with_migration};
pub use scenario_file::{load_scenario, ScenarioFile};
pub use verify::{verify_control, verify_schedule, Tolerances, VerificationReport};
