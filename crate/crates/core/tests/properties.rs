//! Randomized cross-module properties of the value-system algebra and the
//! serialization surface.

use proptest::prelude::*;

use dgsolve::equilibrium_solver::{audit, construct_admissible, default_nu_schedule};
use dgsolve::game_model::{CostFunction, GameSpec, PerturbationShape};
use dgsolve::hj_system::{
    delta, gradient_ode_rhs, jump_admissible, rescaled_rhs, GradientState, JumpRecord,
};

fn unit_k_spec() -> GameSpec {
    GameSpec::constant_slopes(1.0, 2.0, 4.0, 5.0).unwrap()
}

fn fresh_record(y: f64, p_minus: [f64; 2], p_plus: [f64; 2]) -> JumpRecord {
    JumpRecord {
        y,
        p_minus: p_minus.to_vec(),
        p_plus: p_plus.to_vec(),
        admissible: false,
        identities_residual: f64::NAN,
        violation: None,
    }
}

proptest! {
    /// Determinant sandwich over the full working range of gradients.
    #[test]
    fn delta_is_sandwiched_by_the_squared_norm(
        p1 in -1e3..1e3_f64,
        p2 in -1e3..1e3_f64,
    ) {
        let n2 = p1 * p1 + p2 * p2;
        let d = delta([p1, p2]);
        prop_assert!(0.5 * n2 <= d && d <= 2.0 * n2, "delta {d} vs |p|^2 {n2}");
    }

    /// Away from the singularity the raw gradient field is exactly the
    /// rescaled field divided by the determinant.
    #[test]
    fn gradient_field_is_the_rescaled_field_over_delta(
        x in -5.0..5.0_f64,
        p1 in -10.0..10.0_f64,
        p2 in -10.0..10.0_f64,
    ) {
        let d = delta([p1, p2]);
        prop_assume!(d > 1e-6);
        let spec = unit_k_spec();
        let state = GradientState::new(x, vec![p1, p2]);
        let raw = gradient_ode_rhs(&spec, &state).unwrap();
        let rescaled = rescaled_rhs(&spec, &state).unwrap();
        for i in 0..2 {
            let expected = rescaled[i] / d;
            let scale = expected.abs().max(1e-300);
            prop_assert!(
                (raw[i] - expected).abs() <= 1e-12 * scale,
                "component {i}: raw {} vs rescaled/delta {expected}",
                raw[i]
            );
        }
    }

    /// Reversing an admissible jump breaks the sign condition whenever the
    /// left-side drift is strictly repulsive, so no jump can be admissible
    /// read in both directions unless both one-sided drifts vanish.
    #[test]
    fn reversed_jumps_are_inadmissible(
        y in -4.0..4.0_f64,
        a in 0.01..5.0_f64,
        b in 0.01..5.0_f64,
    ) {
        let spec = unit_k_spec();
        // Symmetric repulsive jump: p^- = (a, b), p^+ = (-a, -b). The
        // per-player identities hold by sign symmetry and the drift sums
        // are ±(a + b).
        let forward = jump_admissible(&spec, &fresh_record(y, [a, b], [-a, -b]));
        prop_assert!(forward.admissible, "{:?}", forward.violation);
        let reversed = jump_admissible(&spec, &fresh_record(y, [-a, -b], [a, b]));
        prop_assert!(!reversed.admissible, "reversed jump accepted with sum {}", a + b);
    }

    /// Sign-flipped gradient pairs with non-positive right drift always pass:
    /// the identities cancel term by term and the sign condition is exactly
    /// the non-positivity of the right drift sum.
    #[test]
    fn sign_flipped_pairs_with_repulsive_drift_pass(
        y in -4.0..4.0_f64,
        q1 in -5.0..5.0_f64,
        q2 in -5.0..5.0_f64,
    ) {
        prop_assume!(q1 + q2 <= 0.0);
        let spec = unit_k_spec();
        let record = jump_admissible(&spec, &fresh_record(y, [-q1, -q2], [q1, q2]));
        prop_assert!(record.admissible, "{:?}", record.violation);
        prop_assert!(record.identities_residual <= 1e-9);
    }

    /// Central differences of every cost family agree with the analytic
    /// derivative to O(eps^2).
    #[test]
    fn cost_derivatives_match_central_differences(
        x in -5.0..5.0_f64,
        kappa in -3.0..3.0_f64,
        amplitude in 0.01..0.5_f64,
        scale in 0.5..2.0_f64,
        shape_pick in 0..3_usize,
    ) {
        let shape = [
            PerturbationShape::Tanh,
            PerturbationShape::Sin,
            PerturbationShape::GaussianBump,
        ][shape_pick];
        let costs = [
            CostFunction::linear(kappa, 0.25).unwrap(),
            CostFunction::smooth_perturbed(kappa, amplitude, shape, scale).unwrap(),
        ];
        let eps = 1e-4;
        for h in &costs {
            let fd = (h.value(x + eps) - h.value(x - eps)) / (2.0 * eps);
            let exact = h.derivative(x);
            let tol = 1e-6 * exact.abs().max(1.0);
            prop_assert!(
                (fd - exact).abs() <= tol,
                "{h:?} at {x}: fd {fd} vs exact {exact}"
            );
        }
    }
}

/// Constructed solutions round-trip through JSON with identical audits.
#[test]
fn solution_audits_survive_serialization() {
    let spec = GameSpec::constant_slopes(-1.0, 2.0, 4.0, 5.0).unwrap();
    let solution = construct_admissible(&spec, &default_nu_schedule(), 1e-8).unwrap();
    let before = audit(&solution, &spec);
    assert!(before.pass);

    let text = serde_json::to_string(&solution).unwrap();
    let back: dgsolve::equilibrium_solver::PiecewiseSolution =
        serde_json::from_str(&text).unwrap();
    assert_eq!(back, solution);
    let after = audit(&back, &spec);
    assert_eq!(after, before);
}
