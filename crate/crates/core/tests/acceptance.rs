//! Acceptance suite: one test per release criterion, each at its stated
//! tolerance. Every test prints a single `criterion N: PASS — ...` line on
//! success; a failure panics with the measured quantity.
//!
//! All randomness is drawn from `ChaCha8Rng` with fixed seeds so the suite
//! is reproducible run to run.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dgsolve::equilibrium_solver::{
    audit, construct_admissible, contraction_probe, default_nu_schedule, growth_counterexample,
    invariant_region, jump_counterexample, periodic_solution, PiecewiseSolution,
    DEFAULT_CAUCHY_TOL,
};
use dgsolve::game_model::{CostFunction, GameSpec, PerturbationShape, Regime};
use dgsolve::game_simulator::{evaluate_cost, simulate};
use dgsolve::hj_system::{delta, hj_residual};
use dgsolve::nash_verifier::{check_nash, NashOptions};
use dgsolve::phase_plane::{
    classify_point, integrate_orbit, linearize, x_window, EndBehavior, OrbitOptions,
    OrbitTermination, RegionLabel, SlopeField,
};

/// The three constant-slope benchmark games.
fn constant_cases() -> Vec<([f64; 2], GameSpec)> {
    [[1.0, 2.0], [2.0, 1.0], [-1.0, 2.0]]
        .into_iter()
        .map(|kappa| {
            let spec = GameSpec::constant_slopes(kappa[0], kappa[1], 4.0, 5.0).unwrap();
            (kappa, spec)
        })
        .collect()
}

fn solve(spec: &GameSpec) -> PiecewiseSolution {
    construct_admissible(spec, &default_nu_schedule(), DEFAULT_CAUCHY_TOL).unwrap()
}

/// Conflicting game with mean slopes (−1, 2) and a sine perturbation of
/// derivative amplitude `delta`.
fn conflicting_perturbed(delta: f64) -> GameSpec {
    let h1 = CostFunction::smooth_perturbed(-1.0, delta, PerturbationShape::Sin, 1.0).unwrap();
    let h2 = CostFunction::smooth_perturbed(2.0, delta, PerturbationShape::Sin, 1.3).unwrap();
    GameSpec::two_player_unit(h1, h2, 4.0, 5.0).unwrap()
}

#[test]
fn criterion_01_constant_game_exactness() {
    for (kappa, spec) in constant_cases() {
        let clock = Instant::now();
        let solution = solve(&spec);
        let elapsed = clock.elapsed().as_secs_f64();

        let mut p_err = 0.0_f64;
        let mut residual = 0.0_f64;
        for (i, &x) in solution.grid.iter().enumerate() {
            let p = solution.p_samples[i];
            let u = solution.u_samples[i];
            p_err = p_err.max((p[0] - kappa[0]).abs().max((p[1] - kappa[1]).abs()));
            for r in hj_residual(&spec, x, &u, &p) {
                residual = residual.max(r.abs());
            }
        }
        assert!(p_err <= 1e-8, "kappa {kappa:?}: gradient error {p_err:.3e} > 1e-8");
        assert!(residual <= 1e-10, "kappa {kappa:?}: residual {residual:.3e} > 1e-10");
        assert!(elapsed < 5.0, "kappa {kappa:?}: solve took {elapsed:.2}s >= 5s");
        println!(
            "criterion 1 [{kappa:?}]: PASS — gradient error {p_err:.2e}, \
             residual {residual:.2e}, {elapsed:.2}s"
        );
    }
    println!("criterion 1: PASS — all three constant games exact");
}

#[test]
fn criterion_02_counterexamples_rejected() {
    let (jump_spec, jump_profile) = jump_counterexample();
    let jump_report = audit(&jump_profile, &jump_spec);
    assert!(!jump_report.jumps_ok, "jump counterexample was not rejected at its jump");
    assert!(
        jump_report.residual_ok && jump_report.growth_ok,
        "jump counterexample must fail only the jump condition: {jump_report}"
    );
    assert!(!jump_report.pass);

    let (growth_spec, growth_profile) = growth_counterexample();
    let growth_report = audit(&growth_profile, &growth_spec);
    assert!(!growth_report.growth_ok, "growth counterexample was not rejected for growth");
    assert!(
        growth_report.residual_ok && growth_report.jumps_ok,
        "growth counterexample must fail only the growth bound: {growth_report}"
    );
    assert!(!growth_report.pass);

    println!(
        "criterion 2: PASS — jump profile rejected at its jump, \
         quadratic profile rejected for growth"
    );
}

#[test]
fn criterion_03_periodic_non_uniqueness() {
    let clock = Instant::now();
    let kappa = 1.0;
    let half_width = 10.0;
    let spec = GameSpec::two_player_unit(
        CostFunction::linear(-kappa, 0.0).unwrap(),
        CostFunction::linear(kappa, 0.0).unwrap(),
        kappa,
        half_width,
    )
    .unwrap();

    let alphas = [0.25, 0.5, 0.75];
    let mut solutions = Vec::new();
    for &alpha in &alphas {
        let solution = periodic_solution(kappa, alpha, half_width).unwrap();

        // Independent closure check: re-integrate the closed orbit through
        // (−α, α) and measure the Poincaré return distance.
        let orbit = integrate_orbit(
            SlopeField::Constant { kappa: [-kappa, kappa] },
            [-alpha, alpha],
            (0.0, 200.0),
            &OrbitOptions::default(),
        )
        .unwrap();
        assert!(
            matches!(orbit.termination, OrbitTermination::ClosedOrbit { .. }),
            "alpha {alpha}: orbit did not close: {:?}",
            orbit.termination
        );
        let p_end = orbit.p_samples.last().unwrap();
        let closure = (p_end[0] + alpha).hypot(p_end[1] - alpha);
        assert!(closure < 1e-6, "alpha {alpha}: closure error {closure:.3e} >= 1e-6");

        let report = audit(&solution, &spec);
        assert!(
            report.residual_max < 1e-6,
            "alpha {alpha}: residual {:.3e} >= 1e-6",
            report.residual_max
        );
        assert!(report.pass, "alpha {alpha}: audit failed: {report}");
        solutions.push((alpha, solution));
    }

    // Pairwise sup-distance of the gradient profiles over the window.
    let probe: Vec<f64> = (0..=400).map(|i| -10.0 + 0.05 * f64::from(i)).collect();
    for i in 0..solutions.len() {
        for j in (i + 1)..solutions.len() {
            let (ai, si) = &solutions[i];
            let (aj, sj) = &solutions[j];
            let mut dist = 0.0_f64;
            for &x in &probe {
                let (pi, pj) = (si.p_at(x), sj.p_at(x));
                dist = dist.max((pi[0] - pj[0]).abs().max((pi[1] - pj[1]).abs()));
            }
            assert!(
                dist > 0.1,
                "alpha {ai} vs {aj}: sup-distance {dist:.3} <= 0.1 — not distinct"
            );
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "periodic construction took {elapsed:.2}s >= 10s");
    println!(
        "criterion 3: PASS — three distinct periodic solutions \
         (closure < 1e-6, residual < 1e-6), {elapsed:.2}s"
    );
}

#[test]
fn criterion_04_delta_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut violations = 0_u32;
    for _ in 0..100_000 {
        let p = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let n2 = p[0] * p[0] + p[1] * p[1];
        let d = delta(p);
        if !(0.5 * n2 <= d && d <= 2.0 * n2) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "{violations} sandwich violations out of 100000");
    println!("criterion 4: PASS — 100000 random p, zero sandwich violations");
}

/// Integrates the rescaled game flow from each start and returns the worst
/// region violation seen along any sampled path.
fn worst_violation(
    spec: &GameSpec,
    region: &dgsolve::equilibrium_solver::InvariantRegion,
    starts: &[([f64; 2], f64)],
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &(p0, x0) in starts {
        let orbit = integrate_orbit(
            SlopeField::Game { spec, x0 },
            p0,
            (0.0, 50.0),
            &OrbitOptions::default(),
        )
        .unwrap();
        for &p in &orbit.p_samples {
            worst = worst.max(region.violation(p));
        }
    }
    worst
}

#[test]
fn criterion_05_invariant_regions() {
    // Cooperative game with C = 2: polygon region.
    let coop = GameSpec::two_player_unit(
        CostFunction::smooth_perturbed(1.0, 0.2, PerturbationShape::Sin, 1.0).unwrap(),
        CostFunction::smooth_perturbed(1.5, 0.3, PerturbationShape::Sin, 0.7).unwrap(),
        2.0,
        5.0,
    )
    .unwrap();
    let polygon = invariant_region(&coop).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut starts = Vec::new();
    while starts.len() < 100 {
        let p = [rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)];
        if polygon.violation(p) <= 0.0 {
            starts.push((p, rng.random_range(-5.0..5.0)));
        }
    }
    let coop_worst = worst_violation(&coop, &polygon, &starts);
    assert!(
        coop_worst <= 1e-6,
        "cooperative polygon: worst violation {coop_worst:.3e} > 1e-6"
    );

    // Conflicting game with mean slopes (−1, 2) and deviation 0.05: ball.
    let confl = conflicting_perturbed(0.05);
    let ball = invariant_region(&confl).unwrap();
    let (center, radius, certified) = match &ball {
        dgsolve::equilibrium_solver::InvariantRegion::Ball {
            center,
            radius,
            certified_delta,
            ..
        } => (*center, *radius, *certified_delta),
        other => panic!("expected a ball region, got {other:?}"),
    };
    let mut starts = Vec::new();
    for _ in 0..100 {
        let r = radius * rng.random_range(0.0_f64..1.0).sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let p = [center[0] + r * theta.cos(), center[1] + r * theta.sin()];
        starts.push((p, rng.random_range(-5.0..5.0)));
    }
    let confl_worst = worst_violation(&confl, &ball, &starts);
    assert!(
        confl_worst <= 1e-6,
        "conflicting ball (radius {radius:.3}, certified deviation {certified:.4}): \
         worst violation {confl_worst:.3e} > 1e-6"
    );
    println!(
        "criterion 5: PASS — 100 cooperative starts stay in the polygon \
         (worst {coop_worst:.2e}), 100 conflicting starts stay in the ball \
         (worst {confl_worst:.2e}; certified deviation {certified:.4})"
    );
}

#[test]
fn criterion_06_eigenvalue_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // Cooperative bound with C = 2.
    let c = 2.0_f64;
    let (lo, hi) = ((3.0 / (4.0 * c * c)).sqrt(), (2.0 * c * c - 1.0 / (c * c)).sqrt());
    for _ in 0..100 {
        let k1 = rng.random_range(0.5..=2.0);
        let k2 = rng.random_range(0.5..=2.0);
        let lin = linearize(k1, k2, [0.0, 0.0]).unwrap();
        for (re, im) in lin.eigenvalues {
            let mag = re.hypot(im);
            assert!(
                lo <= mag && mag <= hi,
                "cooperative ({k1:.3}, {k2:.3}): |lambda| = {mag:.4} outside [{lo:.4}, {hi:.4}]"
            );
        }
    }

    // Conflicting bound with zero deviation.
    for _ in 0..100 {
        let k1: f64 = rng.random_range(-2.0..=-0.1);
        let k2: f64 = rng.random_range(0.1..=2.0);
        if (k1 + k2).abs() < 1e-3 {
            continue;
        }
        let (lo, hi) = (std::f64::consts::FRAC_1_SQRT_2 * (k2 - k1), k2 - k1);
        let lin = linearize(k1, k2, [0.0, 0.0]).unwrap();
        for (re, im) in lin.eigenvalues {
            let mag = re.hypot(im);
            assert!(
                lo - 1e-12 <= mag && mag <= hi + 1e-12,
                "conflicting ({k1:.3}, {k2:.3}): |lambda| = {mag:.4} outside [{lo:.4}, {hi:.4}]"
            );
        }
    }
    println!("criterion 6: PASS — saddle eigenvalue bounds hold for 200 random slope pairs");
}

#[test]
fn criterion_07_contraction_probe() {
    let spec = conflicting_perturbed(0.02);
    let probe = contraction_probe(&spec, [-1.0, 2.0], [-0.9, 1.9], 0.0, 20.0).unwrap();
    assert!(probe.rate > 0.0, "fitted contraction rate {} not positive", probe.rate);
    assert!(probe.final_gap < 1e-6, "final gap {:.3e} >= 1e-6", probe.final_gap);
    println!(
        "criterion 7: PASS — in-ball graphs contract at fitted rate {:.3}, \
         final gap {:.2e}",
        probe.rate, probe.final_gap
    );
}

/// Rejection-samples `n` points with the wanted label inside the box.
fn sample_region(
    rng: &mut ChaCha8Rng,
    regime: &Regime,
    kappa: [f64; 2],
    box_p1: (f64, f64),
    box_p2: (f64, f64),
    want: impl Fn(RegionLabel) -> bool,
    n: usize,
) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        assert!(attempts < 100_000, "region sampling did not terminate");
        let p = [
            rng.random_range(box_p1.0..box_p1.1),
            rng.random_range(box_p2.0..box_p2.1),
        ];
        if want(classify_point(regime, kappa, p).unwrap()) {
            out.push(p);
        }
    }
    out
}

#[test]
fn criterion_08_blowup_taxonomy() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let coop_kappa = [1.0, 2.0];
    let coop = Regime::CooperativeIncreasing;
    let confl_kappa = [-1.0, 2.0];
    let confl = Regime::Conflicting { kappa1: -1.0, kappa2: 2.0, delta: 0.0 };

    // (label, kappa, starts, forward?)
    type BlowUpGroup<'a> = (&'a str, [f64; 2], Vec<[f64; 2]>, bool);
    let groups: Vec<BlowUpGroup> = vec![
        (
            "cooperative A forward",
            coop_kappa,
            sample_region(&mut rng, &coop, coop_kappa, (-3.0, -0.05), (-3.0, -0.05),
                |l| l == RegionLabel::A, 20),
            true,
        ),
        (
            "cooperative B backward",
            coop_kappa,
            sample_region(&mut rng, &coop, coop_kappa, (0.05, 3.0), (-3.0, -0.05),
                |l| l == RegionLabel::B, 20),
            false,
        ),
        (
            "cooperative C backward",
            coop_kappa,
            sample_region(&mut rng, &coop, coop_kappa, (-3.0, -0.05), (0.05, 3.0),
                |l| l == RegionLabel::C1 || l == RegionLabel::C2, 20),
            false,
        ),
        (
            "conflicting Xi1 forward",
            confl_kappa,
            sample_region(&mut rng, &confl, confl_kappa, (0.05, 3.0), (-3.0, -0.05),
                |l| l == RegionLabel::Xi1, 20),
            true,
        ),
        (
            "conflicting quadrant++ backward",
            confl_kappa,
            sample_region(&mut rng, &confl, confl_kappa, (0.05, 3.0), (0.05, 3.0),
                |l| l == RegionLabel::QuadrantPP, 20),
            false,
        ),
    ];

    for (label, kappa, starts, forward) in groups {
        let span = if forward { (0.0, 50.0) } else { (0.0, -50.0) };
        for p0 in starts {
            let orbit = integrate_orbit(
                SlopeField::Constant { kappa },
                p0,
                span,
                &OrbitOptions::default(),
            )
            .unwrap();
            assert!(
                matches!(orbit.termination, OrbitTermination::BlowUp { .. }),
                "{label} from {p0:?}: expected blow-up, got {:?}",
                orbit.termination
            );
            let expo = orbit.blowup_fit_exponent().unwrap();
            assert!(
                (-1.2..=-0.8).contains(&expo),
                "{label} from {p0:?}: rate-fit exponent {expo:.3} outside [-1.2, -0.8]"
            );
            let window = x_window(&orbit);
            let divergent = if forward { window.upper } else { window.lower };
            assert_eq!(
                divergent,
                EndBehavior::Unbounded,
                "{label} from {p0:?}: divergent end not reported as unbounded"
            );
        }
        println!("criterion 8 [{label}]: PASS — 20 starts, blow-up with exponent near -1");
    }
    println!("criterion 8: PASS — blow-up taxonomy confirmed in all five region groups");
}

#[test]
fn criterion_09_value_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (kappa, spec) in constant_cases() {
        let solution = solve(&spec);
        let mut worst = 0.0_f64;
        for _ in 0..20 {
            let y = rng.random_range(-5.0..5.0);
            let trajectory = simulate(&solution, &spec, y, 40.0).unwrap();
            let costs = evaluate_cost(&spec, &trajectory, &solution);
            let u = solution.u_at(y);
            for i in 0..2 {
                let gap = (costs[i].total - u[i]).abs();
                let allowed = 1e-4 + costs[i].tail_bound;
                assert!(
                    gap <= allowed,
                    "kappa {kappa:?}, y = {y:.4}, player {i}: \
                     |cost - u| = {gap:.3e} > {allowed:.3e}"
                );
                worst = worst.max(gap);
            }
        }
        println!("criterion 9 [{kappa:?}]: PASS — 20 starts, worst gap {worst:.2e}");
    }
    println!("criterion 9: PASS — simulated costs match the value functions");
}

#[test]
fn criterion_10_nash_certification() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let probes: Vec<f64> = (0..10).map(|_| rng.random_range(-2.5..2.5)).collect();
    let options = NashOptions::default();
    assert_eq!(options.dp.grid_n, 801);
    assert_eq!(options.dp.control_n, 81);
    assert!((options.dp.dt - 0.01).abs() < 1e-15);
    assert!((options.tol_dp - 1e-2).abs() < 1e-15);

    let coop = GameSpec::constant_slopes(1.0, 2.0, 4.0, 5.0).unwrap();
    let coop_report = check_nash(&solve(&coop), &coop, &probes, &options).unwrap();
    assert!(coop_report.pass, "cooperative constant game not certified:\n{coop_report}");

    let confl = conflicting_perturbed(0.02);
    let confl_report = check_nash(&solve(&confl), &confl, &probes, &options).unwrap();
    assert!(confl_report.pass, "conflicting perturbed game not certified:\n{confl_report}");

    let elapsed = clock.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "certification took {elapsed:.1}s >= 120s");
    println!(
        "criterion 10: PASS — both games certified at 10 probes \
         (tolerance 1e-2), {elapsed:.1}s"
    );
}
