//! Dynamic-programming certification of the Nash property.
//!
//! A feedback pair is a Nash equilibrium when no player can lower their own
//! discounted cost by deviating unilaterally while the opponent's feedback
//! stays frozen. For each player this deviation problem is a standard
//! one-dimensional discounted optimal control problem:
//!
//! `V_i(y) = inf_a integral_0^inf e^(-t) [ h_i(x) + k_i(x) a(t)^2 / 2 ] dt`
//!
//! subject to `x' = a(t) + beta(x)`, where `beta` is the frozen opponent
//! feedback read off the candidate solution (right-continuous, linear
//! interpolation between grid nodes, clamped beyond them). The candidate is
//! certified at `y` when the independently computed `V_i(y)` agrees with the
//! candidate value `u_i(y)` within tolerance: a gap far below zero exposes a
//! profitable deviation, a gap far above zero exposes an unattainable
//! candidate value. Neither sign is excused.
//!
//! [`dp_value`] solves the deviation problem by semi-Lagrangian value
//! iteration,
//!
//! `V(x) = min_a { dt (h_i(x) + k_i(x) a^2 / 2) + e^(-dt) V(x + dt (a + beta(x))) }`,
//!
//! on a uniform state grid covering 1.5x the solution window, with linear
//! interpolation (and linear extrapolation) of `V` at the foot points and a
//! bracketed search over a bounded control box. The scheme is first-order in
//! `dt` — its fixed point for a linear value has slope `dt / (1 - e^(-dt))`
//! instead of 1 — so the solve is run at `dt` and `2 dt` and the returned
//! values are the Richardson extrapolation `2 V_dt - V_2dt`, which cancels
//! the leading bias; the difference `sup |V_dt - V_2dt|` is reported as the
//! discretization-error estimate. Sweeps are embarrassingly parallel across
//! the state grid and are distributed with rayon.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium_solver::PiecewiseSolution;
use crate::game_model::GameSpec;

/// Value iteration stops once the sup-norm change of a sweep drops below
/// this threshold.
pub const DP_SWEEP_TOL: f64 = 1e-9;

/// Default acceptance tolerance on the DP gap `V_i(y) - u_i(y)`.
pub const DEFAULT_TOL_DP: f64 = 1e-2;

/// Verification failures.
#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    /// The deviation problem or solver options are ill-posed.
    #[error("invalid verification input: {0}")]
    InvalidProblem(String),
    /// Foot points of the scheme can leave twice the solution window, where
    /// the frozen feedback has no meaningful extension.
    #[error(
        "state grid too small: foot points reach |x| = {needed:.3} but only \
         |x| <= {available:.3} is covered; enlarge the window or reduce dt"
    )]
    WindowTooSmall { needed: f64, available: f64 },
    /// Value iteration failed to reach the sweep tolerance.
    #[error("value iteration did not converge: change {change:.3e} after {sweeps} sweeps")]
    NoConvergence { sweeps: usize, change: f64 },
}

/// One player's frozen-opponent deviation problem.
#[derive(Debug, Clone)]
pub struct DeviationProblem<'a> {
    /// The deviating player (0-based).
    pub player: usize,
    /// Game data supplying `h_i`, `k_i` and the assumption bound.
    pub spec: &'a GameSpec,
    /// Candidate solution supplying the frozen opponent feedback and the
    /// value to certify.
    pub solution: &'a PiecewiseSolution,
    /// Half-width of the control box `[-a_max, a_max]`. Optimal deviations
    /// satisfy `|a| = |p|/k <= C max|p|`, so the default `2C (1 + max|p|)`
    /// never clips the minimizer.
    pub a_max: f64,
}

impl<'a> DeviationProblem<'a> {
    /// Set up the deviation problem for `player` against the frozen opponent.
    pub fn new(
        spec: &'a GameSpec,
        solution: &'a PiecewiseSolution,
        player: usize,
    ) -> Result<Self, VerifyError> {
        if spec.players != 2 {
            return Err(VerifyError::InvalidProblem(format!(
                "verification supports exactly two players, got {}",
                spec.players
            )));
        }
        if player >= 2 {
            return Err(VerifyError::InvalidProblem(format!(
                "player index {player} out of range for a two-player game"
            )));
        }
        solution.validate().map_err(VerifyError::InvalidProblem)?;
        let p_max = solution
            .p_samples
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0_f64, |m, &v| m.max(v.abs()));
        let a_max = 2.0 * spec.c_bound * (1.0 + p_max);
        Ok(Self { player, spec, solution, a_max })
    }

    /// The frozen opponent feedback `beta(x)` (right-continuous, clamped
    /// beyond the solution grid).
    #[must_use]
    pub fn opponent_feedback(&self, x: f64) -> f64 {
        let other = 1 - self.player;
        -self.solution.p_at(x)[other] / self.spec.k[other].value(x)
    }
}

/// Discretization parameters of the semi-Lagrangian solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DpOptions {
    /// State grid size on `[-1.5 L, 1.5 L]` (at least 201).
    pub grid_n: usize,
    /// Control grid size on `[-a_max, a_max]` (at least 41); a short
    /// bracketed refinement runs around the best grid control.
    pub control_n: usize,
    /// Time step of the scheme, in `(0, 0.1]`.
    pub dt: f64,
    /// Hard cap on value-iteration sweeps.
    pub max_sweeps: usize,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self { grid_n: 801, control_n: 81, dt: 0.01, max_sweeps: 100_000 }
    }
}

impl DpOptions {
    fn validate(&self) -> Result<(), VerifyError> {
        if self.grid_n < 201 {
            return Err(VerifyError::InvalidProblem(format!(
                "grid_n must be at least 201, got {}",
                self.grid_n
            )));
        }
        if self.control_n < 41 {
            return Err(VerifyError::InvalidProblem(format!(
                "control_n must be at least 41, got {}",
                self.control_n
            )));
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(VerifyError::InvalidProblem(format!(
                "dt must lie in (0, 0.1], got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Result of a deviation-problem solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DpValue {
    /// Uniform state grid of the scheme.
    pub grid: Vec<f64>,
    /// Richardson-extrapolated deviation values on the grid.
    pub values: Vec<f64>,
    /// Greedy minimizing control at each grid node (from the fine-step run).
    pub policy: Vec<f64>,
    /// `sup |V_dt - V_2dt|`: first-order estimate of the remaining
    /// time-discretization error of `values`.
    pub richardson_error: f64,
    /// Sweeps used by the fine-step run.
    pub sweeps: usize,
    /// Final sup-norm sweep change of the fine-step run.
    pub sup_change: f64,
    /// Fine time step.
    pub dt: f64,
}

impl DpValue {
    /// Deviation value at `y` (linear interpolation on the DP grid).
    #[must_use]
    pub fn value_at(&self, y: f64) -> f64 {
        crate::interp::linear_eval(&self.grid, &self.values, y)
    }
}

/// O(1) linear interpolation on a uniform grid with linear extrapolation
/// through the boundary segments.
#[inline]
fn uniform_interp(x0: f64, step: f64, vals: &[f64], x: f64) -> f64 {
    let n = vals.len();
    let s = (x - x0) / step;
    #[allow(clippy::cast_possible_truncation)]
    let i = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
    let theta = s - i as f64;
    vals[i] + theta * (vals[i + 1] - vals[i])
}

/// One value-iteration solve at a fixed `dt`; returns the grid values, the
/// greedy policy, the sweep count and the final change.
#[allow(clippy::type_complexity)]
fn solve_at_dt(
    problem: &DeviationProblem<'_>,
    grid: &[f64],
    control_n: usize,
    dt: f64,
    max_sweeps: usize,
    warm_start: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, usize, f64), VerifyError> {
    let n = grid.len();
    let x0 = grid[0];
    let step = grid[1] - grid[0];
    let discount = (-dt).exp();
    let a_max = problem.a_max;
    let a_step = 2.0 * a_max / (control_n - 1) as f64;
    let i_player = problem.player;
    let spec = problem.spec;

    // Per-node data that never changes across sweeps.
    let frozen: Vec<(f64, f64, f64)> = grid
        .iter()
        .map(|&x| {
            (
                spec.h[i_player].value(x),
                spec.k[i_player].value(x),
                problem.opponent_feedback(x),
            )
        })
        .collect();

    let mut v = warm_start.to_vec();
    let mut sweeps = 0usize;
    loop {
        sweeps += 1;
        if sweeps > max_sweeps {
            return Err(VerifyError::NoConvergence { sweeps: sweeps - 1, change: f64::NAN });
        }
        let prev = &v;
        let next: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = grid[i];
                let (h, k, beta) = frozen[i];
                let objective = |a: f64| {
                    let foot = x + dt * (a + beta);
                    dt * (h + 0.5 * k * a * a) + discount * uniform_interp(x0, step, prev, foot)
                };
                // Coarse scan over the control grid.
                let mut best_a = -a_max;
                let mut best = objective(best_a);
                for j in 1..control_n {
                    let a = -a_max + j as f64 * a_step;
                    let val = objective(a);
                    if val < best {
                        best = val;
                        best_a = a;
                    }
                }
                // Bracketed golden-section refinement around the best grid
                // control: the objective is a strict quadratic in `a` plus a
                // piecewise-linear term, so the minimum inside the bracket is
                // located to far below the scheme's own accuracy.
                let mut lo = (best_a - a_step).max(-a_max);
                let mut hi = (best_a + a_step).min(a_max);
                for _ in 0..40 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if objective(m1) <= objective(m2) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                let a_ref = 0.5 * (lo + hi);
                let v_ref = objective(a_ref);
                if v_ref < best {
                    (v_ref, a_ref)
                } else {
                    (best, best_a)
                }
            })
            .collect();

        let mut change = 0.0_f64;
        let mut values = Vec::with_capacity(n);
        let mut policy = Vec::with_capacity(n);
        for (i, (val, pol)) in next.into_iter().enumerate() {
            change = change.max((val - v[i]).abs());
            values.push(val);
            policy.push(pol);
        }
        v = values;
        if change < DP_SWEEP_TOL {
            return Ok((v, policy, sweeps, change));
        }
    }
}

/// Solve the deviation problem by semi-Lagrangian value iteration.
///
/// Runs the scheme at `options.dt` and `2 * options.dt` and returns the
/// Richardson-extrapolated values (see the module documentation). The
/// iteration is warm-started from the candidate value, which does not affect
/// the fixed point (the operator is an `e^(-dt)` contraction) but shortens
/// the transient.
pub fn dp_value(problem: &DeviationProblem<'_>, options: &DpOptions) -> Result<DpValue, VerifyError> {
    options.validate()?;
    let spec = problem.spec;
    let window = spec.half_width;
    let span = 1.5 * window;
    let n = options.grid_n;
    let grid: Vec<f64> = (0..n)
        .map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64)
        .collect();

    // Foot points must stay inside twice the window: beyond it the frozen
    // feedback is pure clamping with no claim to accuracy.
    let beta_max = grid
        .iter()
        .map(|&x| problem.opponent_feedback(x).abs())
        .fold(0.0_f64, f64::max);
    let needed = span + options.dt * (problem.a_max + beta_max);
    let available = 2.0 * window;
    if needed > available {
        return Err(VerifyError::WindowTooSmall { needed, available });
    }

    let warm: Vec<f64> = grid
        .iter()
        .map(|&x| problem.solution.u_at(x.clamp(-window, window))[problem.player])
        .collect();

    let (v_fine, policy, sweeps, sup_change) = solve_at_dt(
        problem,
        &grid,
        options.control_n,
        options.dt,
        options.max_sweeps,
        &warm,
    )?;
    let (v_coarse, _, _, _) = solve_at_dt(
        problem,
        &grid,
        options.control_n,
        2.0 * options.dt,
        options.max_sweeps,
        &warm,
    )?;

    let mut richardson_error = 0.0_f64;
    let values: Vec<f64> = v_fine
        .iter()
        .zip(v_coarse.iter())
        .map(|(&f, &c)| {
            richardson_error = richardson_error.max((f - c).abs());
            2.0 * f - c
        })
        .collect();

    Ok(DpValue {
        grid,
        values,
        policy,
        richardson_error,
        sweeps,
        sup_change,
        dt: options.dt,
    })
}

/// Options of the Nash certification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NashOptions {
    /// Discretization of the per-player DP solves.
    pub dp: DpOptions,
    /// Acceptance tolerance on the gap `V_i(y) - u_i(y)`.
    pub tol_dp: f64,
}

impl Default for NashOptions {
    fn default() -> Self {
        Self { dp: DpOptions::default(), tol_dp: DEFAULT_TOL_DP }
    }
}

/// The gap at one probe point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProbeGap {
    /// Probe state.
    pub y: f64,
    /// Independently computed deviation value `V_i(y)`.
    pub value_dp: f64,
    /// Candidate value `u_i(y)`.
    pub value_candidate: f64,
    /// `value_dp - value_candidate`.
    pub gap: f64,
}

/// Certification outcome for one player.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PlayerCertificate {
    /// The deviating player (0-based).
    pub player: usize,
    /// Gap at each probe point.
    pub gaps: Vec<ProbeGap>,
    /// Most negative gap (profitable-deviation direction).
    pub min_gap: f64,
    /// Most positive gap (unattainable-value direction).
    pub max_gap: f64,
    /// Discretization-error estimate of the DP solve.
    pub richardson_error: f64,
    /// Whether every gap lies within the tolerance band.
    pub pass: bool,
}

/// Certification outcome for the full candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NashReport {
    /// Per-player certificates.
    pub certificates: Vec<PlayerCertificate>,
    /// Tolerance band applied to each gap.
    pub tol_dp: f64,
    /// Whether every player passed.
    pub pass: bool,
}

impl std::fmt::Display for NashReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for cert in &self.certificates {
            writeln!(
                f,
                "player {}: gap in [{:+.3e}, {:+.3e}], dp error est {:.3e} .. {}",
                cert.player + 1,
                cert.min_gap,
                cert.max_gap,
                cert.richardson_error,
                if cert.pass { "ok" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "verdict: {} (tolerance {:.1e})",
            if self.pass { "NASH-CONSISTENT" } else { "NOT CERTIFIED" },
            self.tol_dp
        )
    }
}

/// Certify the candidate solution at the probe states.
///
/// For each player, solves the frozen-opponent deviation problem and
/// compares the resulting value with the candidate value at every probe.
/// Probes must lie inside the solution window.
pub fn check_nash(
    solution: &PiecewiseSolution,
    spec: &GameSpec,
    probes: &[f64],
    options: &NashOptions,
) -> Result<NashReport, VerifyError> {
    if probes.is_empty() {
        return Err(VerifyError::InvalidProblem("no probe states supplied".into()));
    }
    if options.tol_dp.is_nan() || options.tol_dp <= 0.0 {
        return Err(VerifyError::InvalidProblem(format!(
            "tol_dp must be positive, got {}",
            options.tol_dp
        )));
    }
    let window = spec.half_width;
    for &y in probes {
        if !y.is_finite() || y.abs() > window {
            return Err(VerifyError::InvalidProblem(format!(
                "probe {y} lies outside the solution window [-{window}, {window}]"
            )));
        }
    }

    let mut certificates = Vec::with_capacity(2);
    for player in 0..2 {
        let problem = DeviationProblem::new(spec, solution, player)?;
        let dp = dp_value(&problem, &options.dp)?;
        let gaps: Vec<ProbeGap> = probes
            .iter()
            .map(|&y| {
                let value_dp = dp.value_at(y);
                let value_candidate = solution.u_at(y)[player];
                ProbeGap { y, value_dp, value_candidate, gap: value_dp - value_candidate }
            })
            .collect();
        let min_gap = gaps.iter().map(|g| g.gap).fold(f64::INFINITY, f64::min);
        let max_gap = gaps.iter().map(|g| g.gap).fold(f64::NEG_INFINITY, f64::max);
        let pass = min_gap >= -options.tol_dp && max_gap <= options.tol_dp;
        certificates.push(PlayerCertificate {
            player,
            gaps,
            min_gap,
            max_gap,
            richardson_error: dp.richardson_error,
            pass,
        });
    }
    let pass = certificates.iter().all(|c| c.pass);
    Ok(NashReport { certificates, tol_dp: options.tol_dp, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium_solver::{constant_solution, growth_counterexample};
    use crate::game_model::{CostFunction, GameSpec, PerturbationShape};
    use approx::assert_abs_diff_eq;

    /// Cheaper-than-default discretization for unit tests; the extrapolated
    /// scheme at dt = 0.02 still resolves values to a few 1e-4.
    fn test_options() -> DpOptions {
        DpOptions { grid_n: 401, control_n: 41, dt: 0.02, max_sweeps: 100_000 }
    }

    #[test]
    fn flat_costs_have_zero_deviation_value() {
        let spec = GameSpec::two_player_unit(
            CostFunction::constant(0.0),
            CostFunction::constant(0.0),
            2.0,
            4.0,
        )
        .unwrap();
        let solution = crate::equilibrium_solver::construct_admissible(
            &spec,
            &crate::equilibrium_solver::default_nu_schedule(),
            crate::equilibrium_solver::DEFAULT_CAUCHY_TOL,
        )
        .unwrap();
        for player in 0..2 {
            let problem = DeviationProblem::new(&spec, &solution, player).unwrap();
            let dp = dp_value(&problem, &test_options()).unwrap();
            let sup = dp.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            assert!(sup <= 1e-9, "player {player}: sup |V| = {sup:.3e}");
            // The greedy control is no control at all.
            for &a in &dp.policy {
                assert_abs_diff_eq!(a, 0.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn constant_game_deviation_value_matches_the_closed_form() {
        // kappa = (1, 2): against the frozen alpha_2 = -2, player 1's
        // deviation value is the candidate value itself, u_1(y) = y - 5/2.
        let solution = constant_solution(1.0, 2.0, 5.0);
        let spec = GameSpec::constant_slopes(1.0, 2.0, 4.0, 5.0).unwrap();
        let problem = DeviationProblem::new(&spec, &solution, 0).unwrap();
        assert!(problem.a_max >= 2.0 * 4.0 * 3.0 - 1e-12);
        assert_abs_diff_eq!(problem.opponent_feedback(0.3), -2.0, epsilon = 1e-12);

        let dp = dp_value(&problem, &test_options()).unwrap();
        for &y in &[-2.0, -0.5, 0.0, 1.0, 2.5] {
            assert_abs_diff_eq!(dp.value_at(y), y - 2.5, epsilon = 2e-3);
        }
        // The greedy policy recovers the equilibrium feedback alpha_1 = -1.
        let mid = dp.grid.len() / 2;
        assert_abs_diff_eq!(dp.policy[mid], -1.0, epsilon = 2e-2);
        assert!(dp.richardson_error > 0.0);
    }

    #[test]
    fn refining_the_discretization_does_not_move_the_values() {
        let h1 = CostFunction::smooth_perturbed(-1.0, 0.02, PerturbationShape::Sin, 1.0).unwrap();
        let h2 = CostFunction::smooth_perturbed(2.0, 0.02, PerturbationShape::Sin, 1.0).unwrap();
        let spec = GameSpec::two_player_unit(h1, h2, 4.0, 5.0).unwrap();
        let solution = crate::equilibrium_solver::construct_admissible(
            &spec,
            &crate::equilibrium_solver::default_nu_schedule(),
            crate::equilibrium_solver::DEFAULT_CAUCHY_TOL,
        )
        .unwrap();
        let problem = DeviationProblem::new(&spec, &solution, 0).unwrap();

        let coarse = dp_value(
            &problem,
            &DpOptions { grid_n: 201, control_n: 41, dt: 0.04, max_sweeps: 100_000 },
        )
        .unwrap();
        let fine = dp_value(
            &problem,
            &DpOptions { grid_n: 801, control_n: 81, dt: 0.01, max_sweeps: 100_000 },
        )
        .unwrap();
        for &y in &[-2.0, -1.0, 0.0, 1.0, 2.0] {
            let drift = (coarse.value_at(y) - fine.value_at(y)).abs();
            assert!(
                drift <= 5e-3,
                "4x refinement moved V({y}) by {drift:.3e}"
            );
        }
        assert!(fine.richardson_error < coarse.richardson_error);
    }

    #[test]
    fn constant_solution_is_certified_as_nash() {
        let solution = constant_solution(1.0, 2.0, 5.0);
        let spec = GameSpec::constant_slopes(1.0, 2.0, 4.0, 5.0).unwrap();
        let options = NashOptions { dp: test_options(), tol_dp: DEFAULT_TOL_DP };
        let report =
            check_nash(&solution, &spec, &[-2.5, -1.0, 0.0, 1.0, 2.5], &options).unwrap();
        assert!(report.pass, "{report}");
        for cert in &report.certificates {
            assert!(cert.min_gap >= -options.tol_dp);
            assert!(cert.max_gap <= options.tol_dp);
        }
        let shown = format!("{report}");
        assert!(shown.contains("NASH-CONSISTENT"));
    }

    #[test]
    fn unbounded_candidate_value_fails_certification() {
        // u_1 = -x^2/2 against flat running costs promises arbitrarily
        // negative values, but the true deviation value with h = 0 is
        // nonnegative-bounded; the DP gap exposes the fraud at the probes.
        let (spec, solution) = growth_counterexample();
        let options = NashOptions { dp: test_options(), tol_dp: DEFAULT_TOL_DP };
        let report = check_nash(&solution, &spec, &[-8.0, -4.0, 4.0, 8.0], &options).unwrap();
        assert!(!report.pass, "{report}");
        let cert = &report.certificates[0];
        assert!(
            cert.max_gap > 1.0,
            "expected a blatant positive gap, got {:+.3e}",
            cert.max_gap
        );
    }

    #[test]
    fn options_and_probes_are_validated() {
        let solution = constant_solution(1.0, 2.0, 5.0);
        let spec = GameSpec::constant_slopes(1.0, 2.0, 4.0, 5.0).unwrap();
        let problem = DeviationProblem::new(&spec, &solution, 0).unwrap();

        let bad = DpOptions { grid_n: 100, ..DpOptions::default() };
        assert!(matches!(dp_value(&problem, &bad), Err(VerifyError::InvalidProblem(_))));
        let bad = DpOptions { control_n: 10, ..DpOptions::default() };
        assert!(matches!(dp_value(&problem, &bad), Err(VerifyError::InvalidProblem(_))));
        let bad = DpOptions { dt: 0.5, ..DpOptions::default() };
        assert!(matches!(dp_value(&problem, &bad), Err(VerifyError::InvalidProblem(_))));
        assert!(DeviationProblem::new(&spec, &solution, 5).is_err());

        let options = NashOptions::default();
        assert!(matches!(
            check_nash(&solution, &spec, &[], &options),
            Err(VerifyError::InvalidProblem(_))
        ));
        assert!(matches!(
            check_nash(&solution, &spec, &[9.0], &options),
            Err(VerifyError::InvalidProblem(_))
        ));
    }

    #[test]
    fn tight_windows_are_rejected() {
        // A narrow window with a long step sends foot points past twice the
        // window span.
        let solution = constant_solution(1.0, 2.0, 1.0);
        let spec = GameSpec::constant_slopes(1.0, 2.0, 4.0, 1.0).unwrap();
        let problem = DeviationProblem::new(&spec, &solution, 0).unwrap();
        let opts = DpOptions { dt: 0.1, ..DpOptions::default() };
        match dp_value(&problem, &opts) {
            Err(VerifyError::WindowTooSmall { needed, available }) => {
                assert!(needed > available);
            }
            other => panic!("expected WindowTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn greedy_rollout_reproduces_the_dp_value() {
        // The rollout realizes the dt-scheme's own discounted cost, so the
        // comparison uses the default (fine) discretization: at coarser dt
        // the scheme bias alone would exceed the band.
        let spec = GameSpec::constant_slopes(1.0, 2.0, 4.0, 5.0).unwrap();
        let solution = constant_solution(1.0, 2.0, 5.0);
        let problem = DeviationProblem::new(&spec, &solution, 0).unwrap();
        let opts = DpOptions::default();
        let dp = dp_value(&problem, &opts).unwrap();

        // Play the greedy-in-V policy forward with the discrete scheme and
        // accumulate its own discounted cost.
        let y = 2.0;
        let dt = opts.dt;
        let steps = (40.0 / dt).ceil() as usize;
        let mut x = y;
        let mut rollout = 0.0;
        let mut discount = 1.0;
        for _ in 0..steps {
            let h = spec.h[0].value(x);
            let k = spec.k[0].value(x);
            let beta = problem.opponent_feedback(x);
            let mut best = (f64::INFINITY, 0.0);
            for j in 0..=2000 {
                let a = -problem.a_max + f64::from(j) / 1000.0 * problem.a_max;
                let foot = x + dt * (a + beta);
                let objective = dt * (h + 0.5 * k * a * a) + (-dt).exp() * dp.value_at(foot);
                if objective < best.0 {
                    best = (objective, a);
                }
            }
            let a = best.1;
            rollout += discount * dt * (h + 0.5 * k * a * a);
            discount *= (-dt).exp();
            x += dt * (a + beta);
        }
        let gap = (rollout - dp.value_at(y)).abs();
        assert!(gap <= 2.0 * DEFAULT_TOL_DP, "rollout gap {gap:.3e} > 2 tol_dp");
    }
}
