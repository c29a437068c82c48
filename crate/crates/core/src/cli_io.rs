//! Command-line surface: game-spec ingestion, artifact persistence and run
//! manifests.
//!
//! Every subcommand reads inputs, writes its artifacts into `--out`, prints a
//! short human-readable summary to stdout, and finishes with a
//! `manifest.json` recording the command, a SHA-256 digest of the input spec,
//! the effective parameters, the list of files written, the seed and the
//! tool version. Re-running a command with the manifest's parameters
//! reproduces the artifacts byte-identically: all randomness is drawn from a
//! seeded generator (default seed 0) and CSV floats are rendered with 17
//! significant digits, which round-trips `f64` losslessly.
//!
//! Exit codes: `0` success, `1` malformed input (unreadable files, JSON
//! syntax or schema errors — diagnosed with line and column), `2` assumption
//! violation or failed certification, `3` numerical failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::equilibrium_solver::{
    audit, construct_admissible, default_nu_schedule, growth_counterexample, jump_counterexample,
    periodic_solution, AdmissibilityReport, PiecewiseSolution, SolverError, DEFAULT_CAUCHY_TOL,
};
use crate::game_model::{classify_regime, validate_game, GameSpec, Regime};
use crate::game_simulator::{cumulative_costs, evaluate_cost, simulate, SimError, DEFAULT_HORIZON};
use crate::nash_verifier::{check_nash, NashOptions, VerifyError};
use crate::phase_plane::{integrate_orbit, sample_portrait, x_window, OrbitOptions, SlopeField};

/// Top-level command-line interface.
#[derive(Debug, Parser)]
#[command(
    name = "dgsolve",
    version,
    about = "Solve, simulate and certify feedback Nash equilibria of \
             one-dimensional discounted differential games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands of the tool.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a game spec against the standing assumptions and classify it.
    Validate {
        /// Game specification (JSON).
        #[arg(long)]
        spec: PathBuf,
    },
    /// Construct an admissible solution and write it with its audit.
    Solve {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Largest anchor window of the construction schedule.
        #[arg(long)]
        nu_max: Option<f64>,
        /// Cauchy tolerance of the window-limit construction.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep a grid of gradient starts and label each orbit's fate.
    Portrait {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid points per axis of the start sweep.
        #[arg(long, default_value_t = 21)]
        grid_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Integrate one orbit of the rescaled gradient flow.
    Orbit {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Starting gradient, first component.
        #[arg(long, allow_hyphen_values = true)]
        p1: f64,
        /// Starting gradient, second component.
        #[arg(long, allow_hyphen_values = true)]
        p2: f64,
        /// Length of the rescaled-time span (negative integrates backward).
        #[arg(long, default_value_t = 50.0, allow_hyphen_values = true)]
        s_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate the closed loop from a start state and accumulate costs.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Initial state.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        y: f64,
        /// Simulation horizon.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        nu_max: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Certify the Nash property of the solved game by dynamic programming.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// State grid size of the DP solves.
        #[arg(long)]
        grid_n: Option<usize>,
        /// Acceptance tolerance on the DP gap.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build a periodic solution of the antisymmetric linear game,
    /// witnessing non-uniqueness.
    Example2 {
        /// Slope magnitude of the antisymmetric running costs.
        #[arg(long)]
        kappa: f64,
        /// Orbit anchor (0 < alpha < kappa selects the member).
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
        /// Half-width of the tiled window.
        #[arg(long, default_value_t = 10.0)]
        half_width: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reproduce the two canonical rejections: a profile with an
    /// inadmissible gradient jump and one violating the growth bound.
    Counterexamples {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure bound for the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or malformed input (exit 1).
    #[error("{0}")]
    Input(String),
    /// Assumption violation or failed certification (exit 2).
    #[error("{0}")]
    Assumption(String),
    /// Numerical failure (exit 3).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit code of this failure class.
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Assumption(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Unsupported(_)
            | SolverError::DomainError(_)
            | SolverError::InvariantViolation { .. } => CliError::Assumption(e.to_string()),
            SolverError::NoConvergence { .. }
            | SolverError::OrbitNotClosed { .. }
            | SolverError::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidInput(_) => CliError::Assumption(e.to_string()),
            SimError::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::InvalidProblem(_) | VerifyError::WindowTooSmall { .. } => {
                CliError::Assumption(e.to_string())
            }
            VerifyError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

/// Execution record written beside every artifact set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunManifest {
    /// Subcommand that produced the artifacts.
    pub command: String,
    /// SHA-256 of the input spec bytes, when a spec file was read.
    pub spec_sha256: Option<String>,
    /// Effective parameters, stringified (sorted by key).
    pub parameters: BTreeMap<String, String>,
    /// File names written into the output directory (sorted).
    pub outputs: Vec<String>,
    /// Seed all randomness was drawn from.
    pub seed: u64,
    /// Version of the tool.
    pub tool_version: String,
}

/// Render a float with 17 significant digits (lossless `f64` round-trip).
#[must_use]
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Load and parse a game specification, with line/column diagnostics on
/// malformed JSON and field names on schema mismatches.
pub fn load_spec(path: &Path) -> Result<(GameSpec, String), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read spec {}: {e}", path.display())))?;
    let spec: GameSpec = serde_json::from_str(&text).map_err(|e| {
        CliError::Input(format!(
            "malformed game spec {} (line {}, column {}): {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    Ok((spec, hex))
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", out.display())))
}

fn write_text(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::write(out.join(name), contents)
        .map_err(|e| CliError::Input(format!("cannot write {name}: {e}")))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical(format!("cannot serialize {name}: {e}")))?;
    text.push('\n');
    write_text(out, name, &text)
}

/// Assemble a CSV from a header and numeric rows (17 significant digits),
/// with optional trailing string columns appended per row.
fn csv_table(header: &[&str], rows: &[(Vec<f64>, Vec<String>)]) -> String {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for (nums, tags) in rows {
        let mut fields: Vec<String> = nums.iter().map(|&v| csv_float(v)).collect();
        fields.extend(tags.iter().cloned());
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    text
}

fn finish_manifest(
    out: &Path,
    command: &str,
    spec_sha256: Option<String>,
    parameters: BTreeMap<String, String>,
    mut outputs: Vec<String>,
    seed: u64,
) -> Result<(), CliError> {
    outputs.push("manifest.json".to_string());
    outputs.sort();
    let manifest = RunManifest {
        command: command.to_string(),
        spec_sha256,
        parameters,
        outputs,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(out, "manifest.json", &manifest)
}

fn describe_regime(regime: &Regime) -> String {
    match regime {
        Regime::CooperativeIncreasing => "cooperative (increasing costs)".to_string(),
        Regime::CooperativeDecreasing => "cooperative (decreasing costs)".to_string(),
        Regime::Conflicting { kappa1, kappa2, delta } => format!(
            "conflicting (mean slopes ({kappa1:.4}, {kappa2:.4}), deviation {delta:.4})"
        ),
        Regime::LinearExample { kappa } => {
            format!("antisymmetric linear (slope magnitude {kappa:.4})")
        }
        Regime::General => "general (outside the classified regimes)".to_string(),
    }
}

/// Mean running-cost slopes over the window grid, used as the frozen-slope
/// pair of portrait sweeps.
fn mean_slopes(spec: &GameSpec) -> [f64; 2] {
    let grid = spec.window_grid(8);
    let mut sums = [0.0_f64; 2];
    for &x in &grid {
        sums[0] += spec.h[0].derivative(x);
        sums[1] += spec.h[1].derivative(x);
    }
    #[allow(clippy::cast_precision_loss)]
    let n = grid.len() as f64;
    [sums[0] / n, sums[1] / n]
}

/// Writes `solution.json`, `solution.csv` and `audit.json`, returning the
/// file list and the audit. The audit is recomputed on the exact artifact
/// being persisted (not copied from the constructor's self-check), so
/// re-reading the file and re-auditing reproduces it bit for bit.
fn solution_files(
    out: &Path,
    spec: &GameSpec,
    solution: &PiecewiseSolution,
) -> Result<(Vec<String>, AdmissibilityReport), CliError> {
    write_json(out, "solution.json", solution)?;
    let rows: Vec<(Vec<f64>, Vec<String>)> = solution
        .grid
        .iter()
        .zip(solution.p_samples.iter())
        .zip(solution.u_samples.iter())
        .map(|((&x, p), u)| (vec![x, p[0], p[1], u[0], u[1]], Vec::new()))
        .collect();
    write_text(out, "solution.csv", &csv_table(&["x", "p1", "p2", "u1", "u2"], &rows))?;
    let report = audit(solution, spec);
    write_json(out, "audit.json", &report)?;
    let files = vec![
        "solution.json".to_string(),
        "solution.csv".to_string(),
        "audit.json".to_string(),
    ];
    Ok((files, report))
}

/// Run one subcommand to completion, writing artifacts and printing a
/// summary. The caller maps the error class to the process exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { spec: spec_path } => {
            let (spec, _) = load_spec(&spec_path)?;
            let report = validate_game(&spec)
                .map_err(|e| CliError::Input(format!("spec rejected: {e}")))?;
            let regime = classify_regime(&spec);
            println!("{report}");
            println!("regime: {}", describe_regime(&regime));
            if report.is_empty() {
                Ok(())
            } else {
                Err(CliError::Assumption("assumption violations found".into()))
            }
        }

        Command::Solve { spec: spec_path, out, nu_max, tol, seed } => {
            let (spec, sha) = load_spec(&spec_path)?;
            ensure_out_dir(&out)?;
            let schedule = nu_schedule(nu_max);
            let tol = tol.unwrap_or(DEFAULT_CAUCHY_TOL);
            let solution = construct_admissible(&spec, &schedule, tol)?;
            let (outputs, report) = solution_files(&out, &spec, &solution)?;
            println!("{report}");
            let mut params = BTreeMap::new();
            params.insert("nu-max".into(), format!("{}", schedule.last().copied().unwrap_or(0.0)));
            params.insert("tol".into(), format!("{tol}"));
            finish_manifest(&out, "solve", Some(sha), params, outputs, seed)?;
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Assumption("constructed solution failed its audit".into()))
            }
        }

        Command::Portrait { spec: spec_path, out, grid_n, seed } => {
            let (spec, sha) = load_spec(&spec_path)?;
            ensure_out_dir(&out)?;
            if grid_n < 2 {
                return Err(CliError::Input(format!(
                    "portrait grid needs at least 2 points per axis, got {grid_n}"
                )));
            }
            let kappa = mean_slopes(&spec);
            let reach = 3.0 * (1.0 + kappa[0].abs().max(kappa[1].abs()));
            let samples = sample_portrait(
                kappa,
                (-reach, reach),
                (-reach, reach),
                grid_n,
                50.0,
                &OrbitOptions::default(),
            );
            let rows: Vec<(Vec<f64>, Vec<String>)> = samples
                .iter()
                .map(|s| {
                    let tag = match &s.outcome {
                        Ok(t) => t.tag().to_string(),
                        Err(e) => format!("error: {e}"),
                    };
                    (vec![s.p0[0], s.p0[1]], vec![tag])
                })
                .collect();
            write_text(&out, "portrait.csv", &csv_table(&["p1", "p2", "outcome"], &rows))?;
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for (_, tags) in &rows {
                *counts.entry(tags[0].clone()).or_insert(0) += 1;
            }
            let summary: Vec<String> =
                counts.iter().map(|(tag, n)| format!("{tag}: {n}")).collect();
            println!(
                "portrait: {} starts around slopes ({:.4}, {:.4}) — {}",
                rows.len(),
                kappa[0],
                kappa[1],
                summary.join(", ")
            );
            let mut params = BTreeMap::new();
            params.insert("grid-n".into(), grid_n.to_string());
            params.insert("reach".into(), format!("{reach}"));
            finish_manifest(&out, "portrait", Some(sha), params, vec!["portrait.csv".into()], seed)
        }

        Command::Orbit { spec: spec_path, out, p1, p2, s_max, seed } => {
            let (spec, sha) = load_spec(&spec_path)?;
            ensure_out_dir(&out)?;
            if s_max == 0.0 || !s_max.is_finite() {
                return Err(CliError::Input(format!(
                    "s-max must be finite and nonzero, got {s_max}"
                )));
            }
            let orbit = integrate_orbit(
                SlopeField::Game { spec: &spec, x0: 0.0 },
                [p1, p2],
                (0.0, s_max),
                &OrbitOptions::default(),
            )
            .map_err(|e| CliError::Numerical(e.to_string()))?;
            let window = x_window(&orbit);
            let rows: Vec<(Vec<f64>, Vec<String>)> = orbit
                .s_samples
                .iter()
                .zip(orbit.p_samples.iter())
                .zip(orbit.x_samples.iter())
                .map(|((&s, p), &x)| (vec![s, p[0], p[1], x], Vec::new()))
                .collect();
            write_text(&out, "orbit.csv", &csv_table(&["s", "p1", "p2", "x"], &rows))?;
            write_json(
                &out,
                "orbit.json",
                &serde_json::json!({
                    "termination": orbit.termination,
                    "x-window": window,
                    "samples": rows.len(),
                }),
            )?;
            println!(
                "orbit from ({p1}, {p2}): {} after {} samples, x in [{:.6}, {:.6}]",
                orbit.termination.tag(),
                rows.len(),
                window.x_min,
                window.x_max
            );
            let mut params = BTreeMap::new();
            params.insert("p1".into(), format!("{p1}"));
            params.insert("p2".into(), format!("{p2}"));
            params.insert("s-max".into(), format!("{s_max}"));
            finish_manifest(
                &out,
                "orbit",
                Some(sha),
                params,
                vec!["orbit.csv".into(), "orbit.json".into()],
                seed,
            )
        }

        Command::Simulate { spec: spec_path, out, y, horizon, nu_max, tol, seed } => {
            let (spec, sha) = load_spec(&spec_path)?;
            ensure_out_dir(&out)?;
            let schedule = nu_schedule(nu_max);
            let tol = tol.unwrap_or(DEFAULT_CAUCHY_TOL);
            let horizon = horizon.unwrap_or(DEFAULT_HORIZON);
            let solution = construct_admissible(&spec, &schedule, tol)?;
            let trajectory = simulate(&solution, &spec, y, horizon)?;
            let costs = evaluate_cost(&spec, &trajectory, &solution);
            let cumulative = cumulative_costs(&spec, &trajectory, &solution);
            let rows: Vec<(Vec<f64>, Vec<String>)> = trajectory
                .t_samples
                .iter()
                .zip(trajectory.x_samples.iter())
                .zip(trajectory.control_samples.iter())
                .zip(cumulative.iter())
                .map(|(((&t, &x), a), c)| (vec![t, x, a[0], a[1], c[0], c[1]], Vec::new()))
                .collect();
            write_text(
                &out,
                "trajectory.csv",
                &csv_table(&["t", "x", "alpha1", "alpha2", "cost1", "cost2"], &rows),
            )?;
            write_json(&out, "trajectory.json", &trajectory)?;
            write_json(&out, "costs.json", &costs)?;
            for event in &trajectory.events {
                println!("t = {:.6}: {:?} at x = {:.6}", event.t, event.kind, event.x);
            }
            println!(
                "simulated from y = {y} to T = {horizon}: final x = {:.6}, \
                 costs ({:.6}, {:.6})",
                trajectory.final_state(),
                costs[0].total,
                costs[1].total
            );
            let mut params = BTreeMap::new();
            params.insert("y".into(), format!("{y}"));
            params.insert("horizon".into(), format!("{horizon}"));
            params.insert("tol".into(), format!("{tol}"));
            finish_manifest(
                &out,
                "simulate",
                Some(sha),
                params,
                vec!["trajectory.csv".into(), "trajectory.json".into(), "costs.json".into()],
                seed,
            )
        }

        Command::Verify { spec: spec_path, out, grid_n, tol, seed } => {
            let (spec, sha) = load_spec(&spec_path)?;
            ensure_out_dir(&out)?;
            let solution =
                construct_admissible(&spec, &default_nu_schedule(), DEFAULT_CAUCHY_TOL)?;
            let mut options = NashOptions::default();
            if let Some(n) = grid_n {
                options.dp.grid_n = n;
            }
            if let Some(t) = tol {
                options.tol_dp = t;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let half = spec.half_width / 2.0;
            let probes: Vec<f64> = (0..10).map(|_| rng.random_range(-half..half)).collect();
            let report = check_nash(&solution, &spec, &probes, &options)?;
            let rows: Vec<(Vec<f64>, Vec<String>)> = report
                .certificates
                .iter()
                .flat_map(|cert| {
                    cert.gaps.iter().map(|g| {
                        (
                            vec![cert.player as f64 + 1.0, g.y, g.value_candidate, g.value_dp, g.gap],
                            Vec::new(),
                        )
                    })
                })
                .collect();
            write_text(&out, "gaps.csv", &csv_table(&["player", "y", "u", "v-dp", "gap"], &rows))?;
            write_json(&out, "nash.json", &report)?;
            println!("{report}");
            let mut params = BTreeMap::new();
            params.insert("grid-n".into(), options.dp.grid_n.to_string());
            params.insert("tol-dp".into(), format!("{}", options.tol_dp));
            finish_manifest(
                &out,
                "verify",
                Some(sha),
                params,
                vec!["gaps.csv".into(), "nash.json".into()],
                seed,
            )?;
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Assumption("Nash certification failed".into()))
            }
        }

        Command::Example2 { kappa, alpha, out, half_width, seed } => {
            ensure_out_dir(&out)?;
            let solution = periodic_solution(kappa, alpha, half_width)?;
            let spec = GameSpec::two_player_unit(
                crate::game_model::CostFunction::linear(-kappa, 0.0)
                    .map_err(CliError::Assumption)?,
                crate::game_model::CostFunction::linear(kappa, 0.0)
                    .map_err(CliError::Assumption)?,
                kappa.max(1.0),
                half_width,
            )
            .map_err(|e| CliError::Assumption(e.to_string()))?;
            let (outputs, report) = solution_files(&out, &spec, &solution)?;
            println!("{report}");
            let mut params = BTreeMap::new();
            params.insert("kappa".into(), format!("{kappa}"));
            params.insert("alpha".into(), format!("{alpha}"));
            params.insert("half-width".into(), format!("{half_width}"));
            finish_manifest(&out, "example2", None, params, outputs, seed)?;
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Assumption("periodic solution failed its audit".into()))
            }
        }

        Command::Counterexamples { out, seed } => {
            ensure_out_dir(&out)?;
            let (jump_spec, jump_solution) = jump_counterexample();
            let jump_report = audit(&jump_solution, &jump_spec);
            let (growth_spec, growth_solution) = growth_counterexample();
            let growth_report = audit(&growth_solution, &growth_spec);

            write_json(
                &out,
                "counterexamples.json",
                &serde_json::json!([
                    { "label": "inadmissible-jump", "audit": jump_report },
                    { "label": "superlinear-growth", "audit": growth_report },
                ]),
            )?;
            println!(
                "inadmissible-jump: jump condition {} (expected FAIL)",
                if jump_report.jumps_ok { "ok" } else { "FAIL" }
            );
            println!(
                "superlinear-growth: growth bound {} (expected FAIL)",
                if growth_report.growth_ok { "ok" } else { "FAIL" }
            );
            finish_manifest(
                &out,
                "counterexamples",
                None,
                BTreeMap::new(),
                vec!["counterexamples.json".into()],
                seed,
            )?;
            let jump_rejected = !jump_report.jumps_ok && jump_report.residual_ok;
            let growth_rejected = !growth_report.growth_ok && growth_report.residual_ok;
            if jump_rejected && growth_rejected {
                Ok(())
            } else {
                Err(CliError::Assumption(
                    "a counterexample was not rejected for its expected reason".into(),
                ))
            }
        }
    }
}

/// Doubling anchor schedule, optionally capped.
fn nu_schedule(nu_max: Option<f64>) -> Vec<f64> {
    let mut schedule = default_nu_schedule();
    if let Some(cap) = nu_max {
        schedule.retain(|&nu| nu <= cap);
        if schedule.last().copied().unwrap_or(0.0) < cap {
            schedule.push(cap);
        }
    }
    schedule
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_round_trip_losslessly() {
        for &v in &[
            0.0,
            -1.0,
            std::f64::consts::PI,
            1.0 / 3.0,
            -2.2250738585072014e-308,
            1.7976931348623157e308,
            -5.4321e-17,
        ] {
            let text = csv_float(v);
            let back: f64 = text.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {text} -> {back}");
        }
    }

    #[test]
    fn manifest_serialization_is_deterministic() {
        let build = || {
            let mut params = BTreeMap::new();
            params.insert("tol".to_string(), "1e-8".to_string());
            params.insert("nu-max".to_string(), "256".to_string());
            RunManifest {
                command: "solve".into(),
                spec_sha256: Some("ab".repeat(32)),
                parameters: params,
                outputs: vec!["solution.json".into(), "manifest.json".into()],
                seed: 0,
                tool_version: "0.1.0".into(),
            }
        };
        let a = serde_json::to_string_pretty(&build()).unwrap();
        let b = serde_json::to_string_pretty(&build()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"spec-sha256\""));
    }

    #[test]
    fn malformed_spec_reports_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\n  \"players\": 2,\n  oops\n}").unwrap();
        let err = load_spec(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn schema_errors_name_the_offending_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schema.json");
        fs::write(
            &path,
            r#"{ "players": 2,
                 "h": [ { "kind": "linear", "kappa": 1.0, "offset": 0.0, "bogus": 1 },
                        { "kind": "linear", "kappa": 2.0, "offset": 0.0 } ],
                 "k": [ { "kind": "linear", "kappa": 0.0, "offset": 1.0 },
                        { "kind": "linear", "kappa": 0.0, "offset": 1.0 } ],
                 "C": 4.0, "L": 5.0 }"#,
        )
        .unwrap();
        let err = load_spec(&path).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn nu_schedule_caps_and_extends() {
        let capped = nu_schedule(Some(100.0));
        assert_eq!(capped.last().copied(), Some(100.0));
        assert!(capped.iter().all(|&nu| nu <= 100.0));
        let exact = nu_schedule(Some(64.0));
        assert_eq!(exact.last().copied(), Some(64.0));
        assert_eq!(exact.iter().filter(|&&nu| nu == 64.0).count(), 1);
        assert!(nu_schedule(None).len() >= 2);
    }
}
