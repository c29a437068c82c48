//! Algebra of the stationary value system and its gradient flow.
//!
//! For an m-player game with running costs `h_i(x) + a_i^2 k_i(x)/4` and
//! unit discounting, a smooth equilibrium value profile `u = (u_1..u_m)`
//! with gradients `p_i = u_i'` satisfies, player by player,
//!
//! ```text
//! u_i = (p_i / (2 k_i) - sum_j p_j / k_j) * p_i + h_i(x),
//! ```
//!
//! and the optimal feedback is `a_i = -p_i / k_i`. This module evaluates
//! that algebra: feedbacks, pointwise residuals of the system, the
//! differentiated (gradient) form for two players with unit control
//! weights, its desingularized rescaling, and the admissibility conditions
//! for gradient jumps.

use serde::{Deserialize, Serialize};

use crate::game_model::GameSpec;

/// Tolerance below which the gradient-flow denominator counts as singular.
pub const EPS_SINGULAR: f64 = 1e-12;
/// Tolerance on the jump identities.
pub const JUMP_IDENTITY_TOL: f64 = 1e-9;
/// Slack for the one-sided jump sign conditions (pure rounding allowance).
const JUMP_SIGN_SLACK: f64 = 1e-12;
/// Pointwise tolerance for treating a control weight as exactly one.
const UNIT_WEIGHT_TOL: f64 = 1e-9;

/// A point on a gradient curve: position and one gradient per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientState {
    pub x: f64,
    pub p: Vec<f64>,
}

impl GradientState {
    pub fn new(x: f64, p: Vec<f64>) -> Self {
        GradientState { x, p }
    }

    /// Two-player convenience accessor.
    pub fn pair(&self) -> [f64; 2] {
        [self.p[0], self.p[1]]
    }
}

/// A candidate or audited gradient discontinuity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    /// Location of the discontinuity.
    pub y: f64,
    /// Left limits of the gradients.
    pub p_minus: Vec<f64>,
    /// Right limits of the gradients.
    pub p_plus: Vec<f64>,
    /// Whether every jump condition holds.
    pub admissible: bool,
    /// Worst absolute defect of the per-player jump identities.
    pub identities_residual: f64,
    /// Name of the first violated condition, when inadmissible.
    pub violation: Option<String>,
}

impl JumpRecord {
    /// A candidate record, not yet audited.
    pub fn candidate(y: f64, p_minus: Vec<f64>, p_plus: Vec<f64>) -> Self {
        JumpRecord {
            y,
            p_minus,
            p_plus,
            admissible: false,
            identities_residual: f64::NAN,
            violation: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HjError {
    #[error("gradient flow denominator |Delta| = {delta:.3e} below {EPS_SINGULAR:.0e} at x = {x}")]
    Singular { x: f64, delta: f64 },
    #[error("{0}")]
    Unsupported(String),
}

/// Nash feedback controls `a_i = -p_i / k_i(x)` for every player.
pub fn optimal_feedback(spec: &GameSpec, state: &GradientState) -> Vec<f64> {
    assert_eq!(state.p.len(), spec.players, "gradient count != player count");
    spec.k
        .iter()
        .zip(&state.p)
        .map(|(k, p)| -p / k.value(state.x))
        .collect()
}

/// The value profile the stationary system assigns to a gradient profile:
/// `u_i = (p_i/(2k_i) - sum_j p_j/k_j) p_i + h_i(x)`. On a solution this is
/// the value function itself, which is how constructed gradients are turned
/// back into values.
pub fn value_from_gradient(spec: &GameSpec, x: f64, p: &[f64]) -> Vec<f64> {
    assert_eq!(p.len(), spec.players, "gradient count != player count");
    let k_inv: Vec<f64> = spec.k.iter().map(|k| 1.0 / k.value(x)).collect();
    let drift: f64 = p.iter().zip(&k_inv).map(|(pj, ki)| pj * ki).sum();
    (0..spec.players)
        .map(|i| (0.5 * p[i] * k_inv[i] - drift) * p[i] + spec.h[i].value(x))
        .collect()
}

/// Residuals of the stationary system at one point: component `i` is
/// `(p_i/(2k_i) - sum_j p_j/k_j) p_i + h_i(x) - u_i`, zero on exact solutions.
pub fn hj_residual(spec: &GameSpec, x: f64, u: &[f64], p: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), spec.players, "value count != player count");
    value_from_gradient(spec, x, p)
        .into_iter()
        .zip(u)
        .map(|(v, ui)| v - ui)
        .collect()
}

/// Quadratic form `Delta(p) = p1^2 + p2^2 + p1 p2` appearing as the
/// denominator of the two-player gradient flow. Positive-definite:
/// `|p|^2 / 2 <= Delta(p) <= 2 |p|^2`.
pub fn delta(p: [f64; 2]) -> f64 {
    p[0] * p[0] + p[1] * p[1] + p[0] * p[1]
}

/// Numerators of the two-player unit-weight gradient flow with the cost
/// slopes frozen at `hp = (h1'(x), h2'(x))`:
///
/// ```text
/// N1 = -p1^2 + (h1' - h2') p1 + h1' p2
/// N2 = -p2^2 + (h2' - h1') p2 + h2' p1
/// ```
///
/// The gradient ODE in x is `p' = N / Delta(p)`; the rescaled flow in the
/// auxiliary clock s is `dp/ds = N` with `dx/ds = Delta(p)`.
pub fn rescaled_field(hp: [f64; 2], p: [f64; 2]) -> [f64; 2] {
    let [h1, h2] = hp;
    let [p1, p2] = p;
    [
        -p1 * p1 + (h1 - h2) * p1 + h1 * p2,
        -p2 * p2 + (h2 - h1) * p2 + h2 * p1,
    ]
}

fn require_planar_unit_weights(spec: &GameSpec, x: f64) -> Result<(), HjError> {
    if spec.players != 2 {
        return Err(HjError::Unsupported(format!(
            "gradient flow is formulated for 2 players, spec has {}",
            spec.players
        )));
    }
    for (i, k) in spec.k.iter().enumerate() {
        let v = k.value(x);
        if (v - 1.0).abs() > UNIT_WEIGHT_TOL {
            return Err(HjError::Unsupported(format!(
                "gradient flow requires unit control weights; k_{} ({}) = {v} at x = {x}",
                i + 1,
                i + 1,
            )));
        }
    }
    Ok(())
}

/// Right-hand side `dp/dx` of the two-player gradient system at `state`.
/// Fails with [`HjError::Singular`] when `|Delta(p)|` is below
/// [`EPS_SINGULAR`], where the x-parametrization degenerates.
pub fn gradient_ode_rhs(spec: &GameSpec, state: &GradientState) -> Result<[f64; 2], HjError> {
    require_planar_unit_weights(spec, state.x)?;
    let p = state.pair();
    let d = delta(p);
    if d.abs() < EPS_SINGULAR {
        return Err(HjError::Singular { x: state.x, delta: d });
    }
    let hp = [spec.h[0].derivative(state.x), spec.h[1].derivative(state.x)];
    let n = rescaled_field(hp, p);
    Ok([n[0] / d, n[1] / d])
}

/// Right-hand side of the desingularized flow `dp/ds` at `state` (the
/// numerators of the gradient ODE); finite everywhere, including p = 0.
pub fn rescaled_rhs(spec: &GameSpec, state: &GradientState) -> Result<[f64; 2], HjError> {
    require_planar_unit_weights(spec, state.x)?;
    let hp = [spec.h[0].derivative(state.x), spec.h[1].derivative(state.x)];
    Ok(rescaled_field(hp, state.pair()))
}

/// Audits a candidate gradient jump at `record.y` against the admissibility
/// conditions and returns the filled record:
///
/// * sign conditions `sum_i p_i^+ / k_i <= 0 <= sum_i p_i^- / k_i`
///   (jumps must be repulsive for the closed-loop flow), and
/// * per-player identities
///   `(p_i^±)^2 / (2 k_i) + sum_{j != i} p_i^± p_j^± / k_j` equal across the
///   jump, within [`JUMP_IDENTITY_TOL`].
pub fn jump_admissible(spec: &GameSpec, record: &JumpRecord) -> JumpRecord {
    let m = spec.players;
    assert_eq!(record.p_minus.len(), m, "left gradient count != player count");
    assert_eq!(record.p_plus.len(), m, "right gradient count != player count");
    let y = record.y;
    let k: Vec<f64> = spec.k.iter().map(|k| k.value(y)).collect();

    let side_sum = |p: &[f64]| -> f64 { p.iter().zip(&k).map(|(pi, ki)| pi / ki).sum() };
    let sum_plus = side_sum(&record.p_plus);
    let sum_minus = side_sum(&record.p_minus);

    // Per-player invariant that must match across the jump.
    let side_identity = |p: &[f64], i: usize| -> f64 {
        let own = p[i] * p[i] / (2.0 * k[i]);
        let cross: f64 = (0..m)
            .filter(|&j| j != i)
            .map(|j| p[i] * p[j] / k[j])
            .sum();
        own + cross
    };
    let mut residual = 0.0_f64;
    for i in 0..m {
        let defect =
            (side_identity(&record.p_plus, i) - side_identity(&record.p_minus, i)).abs();
        residual = residual.max(defect);
    }

    let mut violation = None;
    if sum_plus > JUMP_SIGN_SLACK {
        violation = Some(format!(
            "right-limit sign condition: sum_i p_i^+/k_i = {sum_plus:.6e} > 0"
        ));
    } else if sum_minus < -JUMP_SIGN_SLACK {
        violation = Some(format!(
            "left-limit sign condition: sum_i p_i^-/k_i = {sum_minus:.6e} < 0"
        ));
    } else if residual > JUMP_IDENTITY_TOL {
        violation = Some(format!(
            "jump identities: worst residual {residual:.6e} exceeds {JUMP_IDENTITY_TOL:.0e}"
        ));
    }

    JumpRecord {
        y,
        p_minus: record.p_minus.clone(),
        p_plus: record.p_plus.clone(),
        admissible: violation.is_none(),
        identities_residual: residual,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::{CostFunction, GameSpec};
    use approx::assert_abs_diff_eq;

    fn linear_game(k1: f64, k2: f64) -> GameSpec {
        GameSpec::constant_slopes(k1, k2, 4.0, 10.0).unwrap()
    }

    #[test]
    fn feedback_is_scaled_negative_gradient() {
        let spec = linear_game(1.0, 2.0);
        let state = GradientState::new(0.3, vec![1.0, -0.5]);
        let a = optimal_feedback(&spec, &state);
        assert_abs_diff_eq!(a[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn residual_vanishes_on_constant_gradient_solution() {
        // For h_i = kappa_i x and unit weights, u_i = kappa_i x - k1 k2 - k_i^2/2
        // with p_i = kappa_i solves the system identically.
        let (k1, k2) = (1.0, 2.0);
        let spec = linear_game(k1, k2);
        for x in [-3.0, -0.7, 0.0, 1.3, 9.0] {
            let u = [k1 * x - k1 * k2 - k1 * k1 / 2.0, k2 * x - k1 * k2 - k2 * k2 / 2.0];
            let r = hj_residual(&spec, x, &u, &[k1, k2]);
            assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r[1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_detects_wrong_values() {
        let spec = linear_game(1.0, 2.0);
        let r = hj_residual(&spec, 0.0, &[0.0, 0.0], &[1.0, 2.0]);
        // Exact values at x = 0 are (-2.5, -4), so the residuals are their
        // negatives.
        assert_abs_diff_eq!(r[0], -2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], -4.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_three_player_symmetric() {
        // Three symmetric players, h_i = x, k_i = 1, constant gradients
        // p_i = 1: u_i = (1/2 - 3) * 1 + x = x - 5/2.
        let h = vec![
            CostFunction::linear(1.0, 0.0).unwrap(),
            CostFunction::linear(1.0, 0.0).unwrap(),
            CostFunction::linear(1.0, 0.0).unwrap(),
        ];
        let k = vec![
            CostFunction::constant(1.0),
            CostFunction::constant(1.0),
            CostFunction::constant(1.0),
        ];
        let spec = GameSpec::new(3, h, k, 4.0, 10.0).unwrap();
        let u = [1.0 - 2.5, 1.0 - 2.5, 1.0 - 2.5];
        let r = hj_residual(&spec, 1.0, &u, &[1.0, 1.0, 1.0]);
        for ri in r {
            assert_abs_diff_eq!(ri, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn delta_sandwich_examples() {
        assert_abs_diff_eq!(delta([1.0, 1.0]), 3.0);
        assert_abs_diff_eq!(delta([1.0, -1.0]), 1.0);
        assert_abs_diff_eq!(delta([2.0, 0.0]), 4.0);
        let p = [0.3, -0.9];
        let norm2 = p[0] * p[0] + p[1] * p[1];
        assert!(delta(p) >= 0.5 * norm2 - 1e-15);
        assert!(delta(p) <= 2.0 * norm2 + 1e-15);
    }

    #[test]
    fn gradient_rhs_matches_rescaled_over_delta() {
        let spec = linear_game(-1.0, 2.0);
        let state = GradientState::new(0.4, vec![0.7, -0.2]);
        let g = gradient_ode_rhs(&spec, &state).unwrap();
        let n = rescaled_rhs(&spec, &state).unwrap();
        let d = delta(state.pair());
        assert_abs_diff_eq!(g[0], n[0] / d, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], n[1] / d, epsilon = 1e-15);
    }

    #[test]
    fn gradient_rhs_singular_at_origin() {
        let spec = linear_game(1.0, 2.0);
        let state = GradientState::new(0.0, vec![0.0, 0.0]);
        match gradient_ode_rhs(&spec, &state) {
            Err(HjError::Singular { delta, .. }) => assert_eq!(delta, 0.0),
            other => panic!("expected singular error, got {other:?}"),
        }
        // The rescaled flow stays finite there.
        let n = rescaled_rhs(&spec, &state).unwrap();
        assert_eq!(n, [0.0, 0.0]);
    }

    #[test]
    fn rescaled_field_hand_checked() {
        // hp = (1, 2), p = (1, 1):
        // N1 = -1 + (1-2)*1 + 1*1 = -1; N2 = -1 + (2-1)*1 + 2*1 = 2.
        let n = rescaled_field([1.0, 2.0], [1.0, 1.0]);
        assert_abs_diff_eq!(n[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n[1], 2.0, epsilon = 1e-15);
        // Constant slopes are stationary: p = hp kills both numerators.
        let n = rescaled_field([-1.0, 2.0], [-1.0, 2.0]);
        assert_abs_diff_eq!(n[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_rhs_rejects_nonunit_weights() {
        let h = vec![CostFunction::linear(1.0, 0.0).unwrap(), CostFunction::linear(2.0, 0.0).unwrap()];
        let k = vec![CostFunction::constant(2.0), CostFunction::constant(1.0)];
        let spec = GameSpec::new(2, h, k, 4.0, 10.0).unwrap();
        let state = GradientState::new(0.0, vec![1.0, 1.0]);
        assert!(matches!(gradient_ode_rhs(&spec, &state), Err(HjError::Unsupported(_))));
        assert!(matches!(rescaled_rhs(&spec, &state), Err(HjError::Unsupported(_))));
    }

    #[test]
    fn sign_flip_jump_is_admissible() {
        let spec = linear_game(1.0, 2.0);
        let cand = JumpRecord::candidate(0.0, vec![2.0, -1.0], vec![-2.0, 1.0]);
        let rec = jump_admissible(&spec, &cand);
        assert!(rec.admissible, "violation: {:?}", rec.violation);
        assert!(rec.identities_residual <= JUMP_IDENTITY_TOL);
    }

    #[test]
    fn reversed_jump_is_rejected_when_left_sum_positive() {
        // Swapping the sides of an admissible jump with p1^- + p2^- > 0 must
        // fail the right-limit sign condition.
        let spec = linear_game(1.0, 2.0);
        let rec = jump_admissible(&spec, &JumpRecord::candidate(0.0, vec![-2.0, 1.0], vec![2.0, -1.0]));
        assert!(!rec.admissible);
        assert!(rec.violation.as_deref().unwrap().contains("right-limit sign"));
    }

    #[test]
    fn identity_defect_is_reported() {
        let spec = linear_game(1.0, 2.0);
        // p+ = -p- keeps the identities exactly; perturb one side.
        let rec = jump_admissible(&spec, &JumpRecord::candidate(0.0, vec![2.0, -1.0], vec![-2.0, 1.1]));
        assert!(!rec.admissible);
        assert!(rec.identities_residual > JUMP_IDENTITY_TOL);
        assert!(rec.violation.as_deref().unwrap().contains("identities"));
    }

    #[test]
    fn zero_jump_is_admissible() {
        // Equal one-sided limits with nonnegative scaled sum: a trivial
        // "jump" (continuity point) passes.
        let spec = linear_game(1.0, 2.0);
        let rec = jump_admissible(&spec, &JumpRecord::candidate(0.5, vec![0.0, 0.0], vec![0.0, 0.0]));
        assert!(rec.admissible);
        assert_abs_diff_eq!(rec.identities_residual, 0.0);
    }

    #[test]
    fn nonunit_weights_use_pointwise_values() {
        // k1 = 2, k2 = 1: sums are p1/2 + p2. Take p- = (2, 0): sum- = 1 >= 0.
        // p+ = (-2, 0): sum+ = -1 <= 0. Identities: i=1: p1^2/4 + p1 p2 = 1
        // both sides; i=2: p2^2/2 + p2 p1 / 2 = 0 both sides. Admissible.
        let h = vec![CostFunction::linear(1.0, 0.0).unwrap(), CostFunction::linear(2.0, 0.0).unwrap()];
        let k = vec![CostFunction::constant(2.0), CostFunction::constant(1.0)];
        let spec = GameSpec::new(2, h, k, 4.0, 10.0).unwrap();
        let rec = jump_admissible(&spec, &JumpRecord::candidate(0.0, vec![2.0, 0.0], vec![-2.0, 0.0]));
        assert!(rec.admissible, "violation: {:?}", rec.violation);
    }
}
