//! Solver, simulator and verifier for one-dimensional infinite-horizon
//! noncooperative differential games with discounted integral costs.
//!
//! The state is scalar and evolves as `x' = sum_i a_i`, where player `i`
//! chooses feedback `a_i` to minimize
//! `integral_0^inf e^(-t) [ h_i(x) + a_i(t)^2 k_i(x) / 2 ] dt`.
//! Stationary Nash equilibria in feedback form reduce to a system of
//! ordinary differential equations coupling the value functions `u_i` and
//! their gradients `p_i = u_i'`; this crate builds solutions of that
//! system, classifies its planar phase portrait, simulates the closed loop
//! and certifies the Nash property by dynamic programming on each player's
//! frozen best-response problem.
//!
//! Modules:
//! * [`game_model`] — game data, validation against the standing
//!   assumptions, regime classification;
//! * [`hj_system`] — pointwise algebra of the value system, gradient
//!   flows, jump admissibility;
//! * [`phase_plane`] — equilibria, linearization, region taxonomy and
//!   orbit integration of the rescaled planar field;
//! * [`equilibrium_solver`] — constructs admissible solutions (constant,
//!   window-limit, periodic), certifies them with invariant regions and
//!   audits candidate profiles;
//! * [`game_simulator`] — closed-loop trajectories under equilibrium
//!   feedback and discounted cost accumulation along them;
//! * [`nash_verifier`] — independent dynamic-programming solves of each
//!   player's frozen-opponent deviation problem, certifying (or refuting)
//!   the Nash property of a candidate;
//! * [`ode`] — shared adaptive Runge–Kutta integrator with dense output
//!   and event localization;
//! * [`cli_io`] — the command-line surface: spec ingestion, artifact
//!   persistence and reproducible run manifests;
//! * [`interp`] — spline, piecewise-linear and Hermite interpolation
//!   helpers.

pub mod cli_io;
pub mod equilibrium_solver;
pub mod game_model;
pub mod game_simulator;
pub mod hj_system;
pub mod interp;
pub mod nash_verifier;
pub mod ode;
pub mod phase_plane;

pub use cli_io::{run, Cli, CliError, Command, RunManifest};
pub use equilibrium_solver::{
    audit, constant_solution, construct_admissible, contraction_probe, default_nu_schedule,
    growth_counterexample, invariant_region, jump_counterexample, periodic_solution,
    AdmissibilityReport, ConstructionMeta, ContractionProbe, InvariantRegion, PiecewiseSolution,
    SolverError,
};
pub use game_model::{
    classify_regime, validate_game, CostFunction, GameSpec, ModelError, PerturbationShape,
    Regime, ValidationReport, Violation,
};
pub use game_simulator::{
    cumulative_costs, evaluate_cost, simulate, CostBreakdown, EventKind, SimError, Trajectory,
    TrajectoryEvent,
};
pub use nash_verifier::{
    check_nash, dp_value, DeviationProblem, DpOptions, DpValue, NashOptions, NashReport,
    PlayerCertificate, ProbeGap, VerifyError,
};
pub use hj_system::{
    delta, gradient_ode_rhs, hj_residual, jump_admissible, optimal_feedback, rescaled_rhs,
    value_from_gradient, GradientState, HjError, JumpRecord,
};
pub use phase_plane::{
    classify_point, find_equilibria, integrate_orbit, linearize, sample_portrait, x_window,
    EndBehavior, Linearization, Orbit, OrbitOptions, OrbitTermination, PhaseError, RegionLabel,
    SlopeField, XWindow,
};
