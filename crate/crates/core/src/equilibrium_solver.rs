//! Construction and certification of stationary equilibrium solutions.
//!
//! A solution of the stationary system is carried as a sampled profile of
//! gradients `p(x)` and values `u(x)` on a uniform grid over the working
//! interval, together with any declared gradient jumps. This module builds
//! such profiles three ways — the exact constant-slope formula, a
//! window-limit iteration that integrates the gradient flow from anchors far
//! to the left, and the closed-orbit tiling for the antisymmetric linear
//! game — and audits any profile (including externally supplied ones)
//! against the three admissibility conditions:
//!
//! * **A1** the algebraic residual of the stationary system vanishes on the
//!   grid,
//! * **A2** values grow at most linearly, with slope controlled by the
//!   assumption bound `C`,
//! * **A3** every declared gradient jump satisfies the sign conditions and
//!   per-player jump identities.
//!
//! Constructions are certified by invariant regions of the rescaled planar
//! field: a pentagon in the positive quadrant for cooperative games and a
//! ball around the mean slopes for conflicting games. Iterates that drift
//! out of their region abort with the exit point rather than silently
//! returning a profile the certification does not cover.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::game_model::{classify_regime, uniform_grid, validate_game, GameSpec, Regime};
use crate::hj_system::{delta, jump_admissible, rescaled_field, value_from_gradient, JumpRecord};
use crate::ode::{self, CrossingDirection, Event, OdeOptions, OdeSolution, OdeTermination};

/// Sup-norm tolerance for declaring the window-limit iteration converged.
pub const DEFAULT_CAUCHY_TOL: f64 = 1e-8;
/// Largest acceptable stationary-system residual on the grid (A1).
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Slack added to the assumption bound `C` when judging the growth slope (A2).
pub const GROWTH_SLOPE_TOL: f64 = 0.5;
/// Numerical drift past an invariant region boundary tolerated before the
/// construction aborts.
pub const REGION_MARGIN: f64 = 1e-6;
/// Distance at which a first return must land on its start to count as a
/// closed orbit.
pub const ORBIT_CLOSURE_TOL: f64 = 1e-6;
/// Grid points per unit length used for returned solution profiles.
pub const SOLUTION_GRID_DENSITY: usize = 64;

/// Below this `Delta` the x-parametrized gradient flow is considered too
/// close to the singular locus and integration switches to the rescaled
/// clock.
const DELTA_SWITCH_LOW: f64 = 1e-6;
/// The rescaled-clock leg hands back to x-parametrization once `Delta`
/// recovers past this level.
const DELTA_SWITCH_HIGH: f64 = 2e-6;
/// Safety factor applied to the provable ball radius bound.
const BALL_SAFETY: f64 = 0.9;
/// Boundary samples used by the empirical ball invariance check.
const BALL_FLUX_SAMPLES: usize = 720;
/// Hard cap on x/s integration legs per window pass.
const MAX_LEGS: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    /// The game falls outside the regimes this construction certifies.
    #[error("{0}")]
    Unsupported(String),
    /// An iterate drifted out of the certifying invariant region.
    #[error(
        "iterate left the invariant region at x = {x}: p = ({p1:.6}, {p2:.6}) is outside by {excess:.3e}"
    )]
    InvariantViolation { x: f64, p1: f64, p2: f64, excess: f64 },
    /// The window-limit iteration did not become Cauchy by the last anchor.
    #[error("no convergence by nu = {nu_max}: last sup-difference {achieved:.3e} above tolerance")]
    NoConvergence { nu_max: f64, achieved: f64 },
    /// A precondition on the inputs fails.
    #[error("{0}")]
    DomainError(String),
    /// The first return of a would-be periodic orbit missed its start.
    #[error("first return misses the start by {residual:.3e} (tolerance {ORBIT_CLOSURE_TOL:.0e})")]
    OrbitNotClosed { residual: f64 },
    /// Integration broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

// ---------------------------------------------------------------------------
// Solution profiles
// ---------------------------------------------------------------------------

/// How a solution profile was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
pub enum ConstructionMeta {
    /// Exact constant-gradient formula `p ≡ κ`.
    Constant { kappa: [f64; 2] },
    /// Window limit: gradient flow from an anchor at `x = −ν`, iterated in ν
    /// until consecutive restrictions agree within `sup_diff`.
    NuLimit { nu: f64, sup_diff: f64 },
    /// Closed-orbit tiling for the antisymmetric linear game.
    Periodic { kappa: f64, alpha: f64, x_period: f64, s_period: f64 },
    /// Supplied from outside the constructors (for example a handwritten
    /// profile put up for audit).
    External { label: String },
}

/// A sampled candidate solution of the stationary system on `[−L, L]`.
///
/// `p` holds gradient samples (right-limits at declared jump locations) and
/// `u` value samples on the strictly increasing `grid`. Between nodes,
/// gradients interpolate linearly and values with a cubic Hermite patch whose
/// slopes are the gradient samples (so `u′ = p` holds at the nodes by
/// construction). Declared jumps are respected: the node at a jump location
/// carries the right limit, and interpolation on the segment ending there
/// uses the recorded left limit instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseSolution {
    /// Strictly increasing sample locations spanning the working interval.
    pub grid: Vec<f64>,
    /// Gradient samples, right-continuous at jumps.
    #[serde(rename = "p")]
    pub p_samples: Vec<[f64; 2]>,
    /// Value samples.
    #[serde(rename = "u")]
    pub u_samples: Vec<[f64; 2]>,
    /// Declared gradient discontinuities.
    pub jumps: Vec<JumpRecord>,
    /// Provenance of the profile.
    pub meta: ConstructionMeta,
    /// Admissibility audit, when one has been attached.
    pub audit: Option<AdmissibilityReport>,
}

impl PiecewiseSolution {
    /// Structural invariants: matching lengths, a strictly increasing finite
    /// grid, finite samples, and jump locations inside the grid span.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.grid.len();
        if n < 2 {
            return Err(format!("grid must have at least 2 points, got {n}"));
        }
        if self.p_samples.len() != n || self.u_samples.len() != n {
            return Err(format!(
                "sample counts ({}, {}) do not match grid length {n}",
                self.p_samples.len(),
                self.u_samples.len()
            ));
        }
        for w in self.grid.windows(2) {
            if w[1] <= w[0] {
                return Err(format!("grid not strictly increasing near x = {}", w[0]));
            }
        }
        let finite2 = |v: &[f64; 2]| v[0].is_finite() && v[1].is_finite();
        if !self.grid.iter().all(|x| x.is_finite())
            || !self.p_samples.iter().all(finite2)
            || !self.u_samples.iter().all(finite2)
        {
            return Err("non-finite entries in solution samples".into());
        }
        let (lo, hi) = (self.grid[0], self.grid[n - 1]);
        for j in &self.jumps {
            if !(j.y >= lo && j.y <= hi) {
                return Err(format!("jump at y = {} outside the grid span", j.y));
            }
            if j.p_minus.len() != 2 || j.p_plus.len() != 2 {
                return Err("jump limits must have two components".into());
            }
        }
        Ok(())
    }

    /// Half-width of the covered interval (largest |grid endpoint|).
    pub fn half_width(&self) -> f64 {
        self.grid[0].abs().max(self.grid[self.grid.len() - 1].abs())
    }

    /// Index of the segment containing `x` and the gradient to use at its
    /// right node (the recorded left limit when that node is a jump).
    fn segment(&self, x: f64) -> (usize, [f64; 2]) {
        let n = self.grid.len();
        let idx = self.grid.partition_point(|&g| g <= x);
        let i = idx.saturating_sub(1).min(n - 2);
        let x1 = self.grid[i + 1];
        let mut right = self.p_samples[i + 1];
        for j in &self.jumps {
            if (j.y - x1).abs() <= 1e-12 * (1.0 + x1.abs()) {
                right = [j.p_minus[0], j.p_minus[1]];
                break;
            }
        }
        (i, right)
    }

    /// Gradient profile at `x`: piecewise linear between nodes, right limit
    /// exactly at a node, clamped to the nearest node outside the grid.
    pub fn p_at(&self, x: f64) -> [f64; 2] {
        let idx = self.grid.partition_point(|&g| g <= x);
        if idx > 0 && self.grid[idx - 1] == x {
            return self.p_samples[idx - 1];
        }
        let (i, right) = self.segment(x);
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        let left = self.p_samples[i];
        [
            left[0] + t * (right[0] - left[0]),
            left[1] + t * (right[1] - left[1]),
        ]
    }

    /// Value profile at `x`: cubic Hermite on each segment with slopes given
    /// by the gradient samples, clamped to the nearest node outside the grid.
    pub fn u_at(&self, x: f64) -> [f64; 2] {
        let (i, right_p) = self.segment(x);
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let dx = x1 - x0;
        let t = ((x - x0) / dx).clamp(0.0, 1.0);
        let (u0, u1) = (self.u_samples[i], self.u_samples[i + 1]);
        let p0 = self.p_samples[i];
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        [
            h00 * u0[0] + h10 * dx * p0[0] + h01 * u1[0] + h11 * dx * right_p[0],
            h00 * u0[1] + h10 * dx * p0[1] + h01 * u1[1] + h11 * dx * right_p[1],
        ]
    }
}

/// Values `u = (p/2 − (p₁+p₂))·p + h(x)` paired up for a planar profile.
fn value_pair(spec: &GameSpec, x: f64, p: [f64; 2]) -> [f64; 2] {
    let v = value_from_gradient(spec, x, &p);
    [v[0], v[1]]
}

// ---------------------------------------------------------------------------
// Admissibility audit
// ---------------------------------------------------------------------------

/// Result of checking a candidate profile against the admissibility
/// conditions. `pass` is the conjunction of the three verdicts; the
/// derivative defect is a diagnostic (how well the value samples
/// differentiate back to the gradient samples) and does not gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AdmissibilityReport {
    /// Largest |stationary residual| over grid points and players.
    pub residual_max: f64,
    /// A1: `residual_max ≤ 1e-6`.
    pub residual_ok: bool,
    /// Smallest C′ with `|uᵢ(x)| ≤ C′(1 + |x|)` on the grid.
    pub c_prime: f64,
    /// Largest per-player slope of |u| against |x| over the outer 20% of the
    /// grid.
    pub growth_slope: f64,
    /// A2: `growth_slope ≤ C + 0.5`.
    pub growth_ok: bool,
    /// Audited copies of the declared jumps.
    pub jumps: Vec<JumpRecord>,
    /// A3: every declared jump is admissible.
    pub jumps_ok: bool,
    /// Largest |centered difference of u − p| away from jumps.
    pub derivative_defect: f64,
    /// Conjunction of the three verdicts.
    pub pass: bool,
}

impl std::fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(
            f,
            "A1 residual: max {:.3e} [{}]",
            self.residual_max,
            tag(self.residual_ok)
        )?;
        writeln!(
            f,
            "A2 growth: C' = {:.4}, outer slope {:.4} [{}]",
            self.c_prime,
            self.growth_slope,
            tag(self.growth_ok)
        )?;
        writeln!(
            f,
            "A3 jumps: {} declared, {} admissible [{}]",
            self.jumps.len(),
            self.jumps.iter().filter(|j| j.admissible).count(),
            tag(self.jumps_ok)
        )?;
        write!(f, "verdict: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Least-squares slope of `ys` against `xs`.
fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 { 0.0 } else { sxy / sxx }
}

/// Audits a candidate profile against the admissibility conditions for
/// `spec`: pointwise stationary residuals (A1), linear growth of the values
/// (A2, judged by the |u|-vs-|x| slope over the outer 20% of the grid
/// against `C + 0.5`), and the jump conditions for every declared
/// discontinuity (A3).
pub fn audit(solution: &PiecewiseSolution, spec: &GameSpec) -> AdmissibilityReport {
    let n = solution.grid.len();

    // A1: algebraic residual at every node (right-limits at jumps).
    let mut residual_max = 0.0_f64;
    for i in 0..n {
        let x = solution.grid[i];
        let p = solution.p_samples[i];
        let u = solution.u_samples[i];
        let v = value_pair(spec, x, p);
        residual_max = residual_max.max((v[0] - u[0]).abs()).max((v[1] - u[1]).abs());
    }
    let residual_ok = residual_max <= RESIDUAL_TOL;

    // A2: smallest C' and the outer-window growth slope.
    let mut c_prime = 0.0_f64;
    for (x, u) in solution.grid.iter().zip(&solution.u_samples) {
        let denom = 1.0 + x.abs();
        c_prime = c_prime.max(u[0].abs() / denom).max(u[1].abs() / denom);
    }
    let span = solution.half_width();
    let cutoff = 0.8 * span;
    let mut growth_slope = 0.0_f64;
    for player in 0..2 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (x, u) in solution.grid.iter().zip(&solution.u_samples) {
            if x.abs() >= cutoff {
                xs.push(x.abs());
                ys.push(u[player].abs());
            }
        }
        if xs.len() >= 2 {
            growth_slope = growth_slope.max(ls_slope(&xs, &ys));
        }
    }
    let growth_ok = growth_slope <= spec.c_bound + GROWTH_SLOPE_TOL;

    // A3: re-audit every declared jump.
    let jumps: Vec<JumpRecord> = solution
        .jumps
        .iter()
        .map(|j| jump_admissible(spec, j))
        .collect();
    let jumps_ok = jumps.iter().all(|j| j.admissible);

    // Diagnostic: centered differences of u should reproduce p away from
    // declared jumps (kinks from one-sided limits are skipped).
    let mut derivative_defect = 0.0_f64;
    for i in 1..n.saturating_sub(1) {
        let (xl, xr) = (solution.grid[i - 1], solution.grid[i + 1]);
        if solution.jumps.iter().any(|j| j.y >= xl && j.y <= xr) {
            continue;
        }
        let du = [
            (solution.u_samples[i + 1][0] - solution.u_samples[i - 1][0]) / (xr - xl),
            (solution.u_samples[i + 1][1] - solution.u_samples[i - 1][1]) / (xr - xl),
        ];
        let p = solution.p_samples[i];
        derivative_defect = derivative_defect
            .max((du[0] - p[0]).abs())
            .max((du[1] - p[1]).abs());
    }

    AdmissibilityReport {
        residual_max,
        residual_ok,
        c_prime,
        growth_slope,
        growth_ok,
        jumps,
        jumps_ok,
        derivative_defect,
        pass: residual_ok && growth_ok && jumps_ok,
    }
}

// ---------------------------------------------------------------------------
// Constant solutions
// ---------------------------------------------------------------------------

/// The exact constant-gradient solution for slopes `h′ ≡ (κ₁, κ₂)`:
/// `p ≡ κ` and `uᵢ(x) = κᵢ x − κ₁κ₂ − κᵢ²/2`, sampled on `[−L, L]`.
pub fn constant_solution(kappa1: f64, kappa2: f64, half_width: f64) -> PiecewiseSolution {
    assert!(half_width.is_finite() && half_width > 0.0, "half-width must be positive");
    let grid = uniform_grid(-half_width, half_width, SOLUTION_GRID_DENSITY);
    let cross = kappa1 * kappa2;
    let p_samples = vec![[kappa1, kappa2]; grid.len()];
    let u_samples: Vec<[f64; 2]> = grid
        .iter()
        .map(|&x| {
            [
                kappa1 * x - cross - 0.5 * kappa1 * kappa1,
                kappa2 * x - cross - 0.5 * kappa2 * kappa2,
            ]
        })
        .collect();
    PiecewiseSolution {
        grid,
        p_samples,
        u_samples,
        jumps: Vec::new(),
        meta: ConstructionMeta::Constant { kappa: [kappa1, kappa2] },
        audit: None,
    }
}

// ---------------------------------------------------------------------------
// Invariant regions
// ---------------------------------------------------------------------------

/// A region of the gradient plane that the rescaled flow cannot leave, used
/// to certify window-limit constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
pub enum InvariantRegion {
    /// Convex polygon (counterclockwise vertices). Used for cooperative
    /// games: with bound `C`, the gradient flow preserves
    /// `{p ∈ [0, 2C]² : p₁ + p₂ ≥ 1/(2C)}` (mirrored through the origin for
    /// decreasing costs).
    Polygon { vertices: Vec<[f64; 2]>, regime: Regime },
    /// Ball around the mean slopes for conflicting games with
    /// `κ₁ + κ₂ > 0` (games with negative sum are certified through their
    /// reflection, recorded in `regime`). `certified_delta` is the largest
    /// slope deviation for which the empirical boundary-flux check passed at
    /// this radius; it can fall short of the game's actual deviation.
    Ball {
        center: [f64; 2],
        radius: f64,
        certified_delta: f64,
        regime: Regime,
    },
}

impl InvariantRegion {
    /// Signed violation of the region at `p`: positive values measure how
    /// far outside `p` lies, non-positive values mean `p` is inside.
    pub fn violation(&self, p: [f64; 2]) -> f64 {
        match self {
            InvariantRegion::Polygon { vertices, .. } => {
                let mut worst = f64::NEG_INFINITY;
                let m = vertices.len();
                for i in 0..m {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % m];
                    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                    let len = dx.hypot(dy);
                    // Outward normal of a counterclockwise edge.
                    let n = [dy / len, -dx / len];
                    worst = worst.max(n[0] * (p[0] - a[0]) + n[1] * (p[1] - a[1]));
                }
                worst
            }
            InvariantRegion::Ball { center, radius, .. } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) - radius
            }
        }
    }

    /// Whether `p` lies in the region, allowing `margin` of drift outside.
    pub fn contains(&self, p: [f64; 2], margin: f64) -> bool {
        self.violation(p) <= margin
    }

    /// The regime this region certifies.
    pub fn regime(&self) -> Regime {
        match self {
            InvariantRegion::Polygon { regime, .. } | InvariantRegion::Ball { regime, .. } => *regime,
        }
    }
}

/// The cooperative pentagon `{p ∈ [0, 2C]² : p₁ + p₂ ≥ 1/(2C)}`.
fn cooperative_polygon(c: f64) -> Vec<[f64; 2]> {
    let hi = 2.0 * c;
    let lo = 1.0 / (2.0 * c);
    vec![[lo, 0.0], [hi, 0.0], [hi, hi], [0.0, hi], [0.0, lo]]
}

/// Empirical invariance check for a candidate ball: the rescaled field must
/// point strictly inward at every boundary sample for every extreme slope
/// pair within deviation `delta` of `kappa` (the field is affine in the
/// slopes, so box corners are the worst cases).
fn ball_flux_ok(center: [f64; 2], kappa: [f64; 2], delta: f64, radius: f64) -> bool {
    let corners = [
        [kappa[0] - delta, kappa[1] - delta],
        [kappa[0] - delta, kappa[1] + delta],
        [kappa[0] + delta, kappa[1] - delta],
        [kappa[0] + delta, kappa[1] + delta],
    ];
    for j in 0..BALL_FLUX_SAMPLES {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / BALL_FLUX_SAMPLES as f64;
        let n = [theta.cos(), theta.sin()];
        let p = [center[0] + radius * n[0], center[1] + radius * n[1]];
        for hp in corners {
            let f = rescaled_field(hp, p);
            if f[0] * n[0] + f[1] * n[1] >= 0.0 {
                return false;
            }
        }
    }
    true
}

/// An invariant region of the rescaled gradient flow certifying the game's
/// window-limit construction.
///
/// * Cooperative games get the pentagon `{p ∈ [0, 2C]² : p₁ + p₂ ≥ 1/(2C)}`
///   (mirrored through the origin when costs decrease).
/// * Conflicting games get a ball centred at the mean slopes `κ` with radius
///   starting from `0.9·(√2/2)·|κ₁ + κ₂|` and shrunk while the empirical
///   boundary-flux check fails for the game's slope deviation δ. If no
///   radius passes at full δ, the starting radius is kept and
///   `certified_delta` records the largest deviation that does pass there.
///   Games with `κ₁ + κ₂ < 0` are certified through their reflection.
/// * The antisymmetric linear game (`κ₁ + κ₂ = 0`) admits no such ball and
///   anything outside these regimes is unsupported.
pub fn invariant_region(spec: &GameSpec) -> Result<InvariantRegion, SolverError> {
    let regime = classify_regime(spec);
    match regime {
        Regime::CooperativeIncreasing => Ok(InvariantRegion::Polygon {
            vertices: cooperative_polygon(spec.c_bound),
            regime,
        }),
        Regime::CooperativeDecreasing => Ok(InvariantRegion::Polygon {
            vertices: cooperative_polygon(spec.c_bound)
                .into_iter()
                .map(|v| [-v[0], -v[1]])
                .collect(),
            regime,
        }),
        Regime::Conflicting { kappa1, kappa2, delta } => {
            // Reduce to a positive slope sum; the reflected game has slopes
            // (−κ₂, −κ₁) and the same deviation.
            let (k1, k2, certified_regime) = if kappa1 + kappa2 > 0.0 {
                (kappa1, kappa2, regime)
            } else {
                (
                    -kappa2,
                    -kappa1,
                    Regime::Conflicting { kappa1: -kappa2, kappa2: -kappa1, delta },
                )
            };
            let center = [k1, k2];
            let r0 = BALL_SAFETY * FRAC_1_SQRT_2 * (k1 + k2);
            let mut radius = r0;
            let mut ok = false;
            for _ in 0..30 {
                if ball_flux_ok(center, center, delta, radius) {
                    ok = true;
                    break;
                }
                radius *= 0.95;
            }
            let certified_delta = if ok {
                delta
            } else {
                // No radius works at full δ: keep the nominal radius and
                // bisect for the deviation it does certify.
                radius = r0;
                let mut lo = 0.0;
                let mut hi = delta;
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if ball_flux_ok(center, center, mid, radius) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            Ok(InvariantRegion::Ball {
                center,
                radius,
                certified_delta,
                regime: certified_regime,
            })
        }
        Regime::LinearExample { .. } => Err(SolverError::Unsupported(
            "antisymmetric linear game: the slope sum vanishes, so no invariant ball exists; \
             use the periodic construction"
                .into(),
        )),
        Regime::General => Err(SolverError::Unsupported(
            "no invariant region is known outside the cooperative and conflicting regimes".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Window-limit construction
// ---------------------------------------------------------------------------

/// The default anchor schedule `ν = 2, 4, …, 256`.
pub fn default_nu_schedule() -> Vec<f64> {
    (1..=8).map(|k| f64::from(1u32 << k)).collect()
}

/// One integration leg of a window pass, either parametrized by x directly
/// or by the rescaled clock (state `[p₁, p₂, x]`) near the singular locus.
enum LegKind {
    X(OdeSolution),
    S(OdeSolution),
}

struct Leg {
    x_hi: f64,
    kind: LegKind,
}

struct GraphRun {
    samples: Vec<[f64; 2]>,
    /// How many legs fell back to the rescaled clock.
    /// How many singular-locus transits were needed (read by diagnostics).
    #[cfg_attr(not(test), allow(dead_code))]
    s_legs: usize,
}

/// Locates `x` on a rescaled-clock leg by bisecting the monotone map `x(s)`.
fn s_leg_eval(sol: &OdeSolution, x: f64) -> [f64; 2] {
    let (mut lo, mut hi) = (sol.ts[0], sol.last_t());
    let mut buf = vec![0.0; 3];
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        sol.eval_into(mid, &mut buf);
        if buf[2] < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    sol.eval_into(0.5 * (lo + hi), &mut buf);
    [buf[0], buf[1]]
}

/// Integrates the gradient flow as a graph `p(x)` from `(x_start, anchor)`
/// to the right end of `grid` and samples it at the grid nodes.
///
/// Integration runs in x directly; when `Delta(p)` drops below
/// [`DELTA_SWITCH_LOW`] (the graph passing through the singular locus at the
/// origin) it switches to the rescaled clock, which carries the graph
/// through the origin at a single x, and hands back once `Delta` recovers.
/// When `region` is given, samples drifting outside it by more than
/// [`REGION_MARGIN`] abort the pass.
fn integrate_graph(
    spec: &GameSpec,
    anchor: [f64; 2],
    x_start: f64,
    grid: &[f64],
    region: Option<&InvariantRegion>,
) -> Result<GraphRun, SolverError> {
    let x_end = *grid.last().expect("empty grid");
    assert!(x_start <= grid[0], "anchor must sit left of the grid");
    let opts = OdeOptions::default();

    let mut legs: Vec<Leg> = Vec::new();
    let mut x_cur = x_start;
    let mut p_cur = anchor;
    let mut s_legs = 0usize;

    let numerical = |e: ode::OdeError, clock: &str| {
        SolverError::Numerical(format!("{clock}-clock leg failed: {e}"))
    };

    while x_cur < x_end - 1e-12 * (1.0 + x_end.abs()) {
        if legs.len() >= MAX_LEGS {
            return Err(SolverError::Numerical(format!(
                "window pass exceeded {MAX_LEGS} integration legs near x = {x_cur}"
            )));
        }

        // x-clock leg until the end, a region exit, or Delta collapsing.
        let mut exit: Option<(f64, [f64; 2], f64)> = None;
        let mut switch = false;
        let mut broke = false;
        {
            let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
                let p = [y[0], y[1]];
                let d = delta(p);
                let hp = [spec.h[0].derivative(x), spec.h[1].derivative(x)];
                let f = rescaled_field(hp, p);
                dy[0] = f[0] / d;
                dy[1] = f[1] / d;
            };
            let mut stop = |x: f64, y: &[f64]| {
                let p = [y[0], y[1]];
                if !(p[0].is_finite() && p[1].is_finite()) {
                    broke = true;
                    return true;
                }
                if let Some(reg) = region {
                    let v = reg.violation(p);
                    if v > REGION_MARGIN {
                        exit = Some((x, p, v));
                        return true;
                    }
                }
                if delta(p) < DELTA_SWITCH_LOW {
                    switch = true;
                    return true;
                }
                false
            };
            let sol = ode::integrate(rhs, (x_cur, x_end), &p_cur, &opts, &[], Some(&mut stop))
                .map_err(|e| numerical(e, "x"))?;
            let reached_end = sol.termination == OdeTermination::ReachedEnd;
            let x_hi = sol.last_t();
            p_cur = [sol.last_y()[0], sol.last_y()[1]];
            if sol.ts.len() > 1 {
                legs.push(Leg { x_hi, kind: LegKind::X(sol) });
            }
            x_cur = x_hi;
            if let Some((x, p, v)) = exit {
                return Err(SolverError::InvariantViolation { x, p1: p[0], p2: p[1], excess: v });
            }
            if broke {
                return Err(SolverError::Numerical(format!(
                    "gradient flow produced non-finite values near x = {x_cur}"
                )));
            }
            if reached_end {
                break;
            }
        }

        if !switch {
            continue;
        }

        // Rescaled-clock leg: state [p₁, p₂, x], run until Delta recovers or
        // the window is crossed.
        s_legs += 1;
        let mut exit: Option<(f64, [f64; 2], f64)> = None;
        let mut done = false;
        let mut broke = false;
        {
            let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
                let p = [y[0], y[1]];
                let hp = [spec.h[0].derivative(y[2]), spec.h[1].derivative(y[2])];
                let f = rescaled_field(hp, p);
                dy[0] = f[0];
                dy[1] = f[1];
                dy[2] = delta(p);
            };
            let recover = Event::new(CrossingDirection::Up, |_s, y: &[f64]| {
                delta([y[0], y[1]]) - DELTA_SWITCH_HIGH
            });
            let mut stop = |_s: f64, y: &[f64]| {
                let p = [y[0], y[1]];
                if !(p[0].is_finite() && p[1].is_finite() && y[2].is_finite()) {
                    broke = true;
                    return true;
                }
                if let Some(reg) = region {
                    let v = reg.violation(p);
                    if v > REGION_MARGIN {
                        exit = Some((y[2], p, v));
                        return true;
                    }
                }
                if y[2] >= x_end {
                    done = true;
                    return true;
                }
                false
            };
            let y0 = [p_cur[0], p_cur[1], x_cur];
            let sol = ode::integrate(rhs, (0.0, 1e4), &y0, &opts, &[recover], Some(&mut stop))
                .map_err(|e| numerical(e, "s"))?;
            let ended = sol.termination == OdeTermination::ReachedEnd;
            let y = sol.last_y();
            p_cur = [y[0], y[1]];
            let x_hi = y[2];
            if sol.ts.len() > 1 {
                legs.push(Leg { x_hi, kind: LegKind::S(sol) });
            }
            x_cur = x_hi;
            if let Some((x, p, v)) = exit {
                return Err(SolverError::InvariantViolation { x, p1: p[0], p2: p[1], excess: v });
            }
            if broke {
                return Err(SolverError::Numerical(format!(
                    "rescaled flow produced non-finite values near x = {x_cur}"
                )));
            }
            if ended {
                // The rescaled clock ran out without Delta recovering: the
                // graph stalled against the singular locus.
                return Err(SolverError::Numerical(format!(
                    "graph stalled near the singular locus around x = {x_cur}"
                )));
            }
            if done {
                break;
            }
        }
    }

    // Sample the assembled graph at the grid nodes.
    let samples = grid
        .iter()
        .map(|&x| {
            for leg in &legs {
                if x <= leg.x_hi + 1e-9 * (1.0 + leg.x_hi.abs()) {
                    return match &leg.kind {
                        LegKind::X(sol) => {
                            let y = sol.eval(x);
                            [y[0], y[1]]
                        }
                        LegKind::S(sol) => s_leg_eval(sol, x),
                    };
                }
            }
            p_cur
        })
        .collect();
    Ok(GraphRun { samples, s_legs })
}

/// Builds the admissible solution on `[−L, L]` as the limit of gradient-flow
/// windows anchored ever farther left.
///
/// For each anchor distance ν in the schedule (skipping ν < L, whose windows
/// do not cover the working interval; the schedule is extended by doubling
/// until at least two anchors reach past L), the gradient flow starts at
/// `x = −ν` from the regime's anchor point — `(1, 1)` for cooperative games,
/// the mean slopes for conflicting ones — and is integrated to `x = L`
/// inside the certifying invariant region. The construction converges when
/// two consecutive restrictions to `[−L, L]` agree within `tol` in the sup
/// norm. Decreasing-cost and negative-slope-sum games are solved through
/// their reflection `u(x) = ũ(−x)`, `p(x) = −p̃(−x)`.
///
/// Games whose slopes vanish identically short-circuit to `p ≡ 0`,
/// `u = h`. The antisymmetric linear game and anything outside the
/// cooperative/conflicting regimes are unsupported here.
pub fn construct_admissible(
    spec: &GameSpec,
    nu_schedule: &[f64],
    tol: f64,
) -> Result<PiecewiseSolution, SolverError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SolverError::DomainError(format!(
            "convergence tolerance must be positive, got {tol}"
        )));
    }
    let report = validate_game(spec)
        .map_err(|e| SolverError::DomainError(format!("malformed game: {e}")))?;
    if !report.is_empty() {
        return Err(SolverError::DomainError(format!(
            "game violates the standing assumptions: {}",
            report
        )));
    }

    // Degenerate game with flat running costs: the zero gradient is exact.
    let flat = spec
        .assumption_grid()
        .iter()
        .all(|&x| spec.h.iter().all(|h| h.derivative(x) == 0.0));
    if flat {
        let grid = spec.window_grid(SOLUTION_GRID_DENSITY);
        let p_samples = vec![[0.0, 0.0]; grid.len()];
        let u_samples: Vec<[f64; 2]> = grid
            .iter()
            .map(|&x| [spec.h[0].value(x), spec.h[1].value(x)])
            .collect();
        let mut sol = PiecewiseSolution {
            grid,
            p_samples,
            u_samples,
            jumps: Vec::new(),
            meta: ConstructionMeta::Constant { kappa: [0.0, 0.0] },
            audit: None,
        };
        sol.audit = Some(audit(&sol, spec));
        return Ok(sol);
    }

    match classify_regime(spec) {
        Regime::CooperativeIncreasing => {
            window_limit(spec, [1.0, 1.0], nu_schedule, tol)
        }
        Regime::Conflicting { kappa1, kappa2, .. } if kappa1 + kappa2 > 0.0 => {
            window_limit(spec, [kappa1, kappa2], nu_schedule, tol)
        }
        Regime::CooperativeDecreasing | Regime::Conflicting { .. } => {
            // Solve the reflected game (increasing / positive slope sum) and
            // map back through u(x) = ũ(−x), p(x) = −p̃(−x).
            let mirrored = spec.reflected();
            let tilde = construct_admissible(&mirrored, nu_schedule, tol)?;
            Ok(reflect_solution(tilde, spec))
        }
        Regime::LinearExample { .. } => Err(SolverError::Unsupported(
            "antisymmetric linear game: the window limit does not settle; \
             use the periodic construction"
                .into(),
        )),
        Regime::General => Err(SolverError::Unsupported(
            "window-limit construction covers only cooperative and conflicting games".into(),
        )),
    }
}

/// Maps a solution of the reflected game back to the original:
/// `u(x) = ũ(−x)`, `p(x) = −p̃(−x)`.
fn reflect_solution(tilde: PiecewiseSolution, spec: &GameSpec) -> PiecewiseSolution {
    let n = tilde.grid.len();
    let grid: Vec<f64> = tilde.grid.iter().rev().map(|&x| -x).collect();
    let p_samples: Vec<[f64; 2]> = tilde
        .p_samples
        .iter()
        .rev()
        .map(|p| [-p[0], -p[1]])
        .collect();
    let u_samples: Vec<[f64; 2]> = tilde.u_samples.iter().rev().copied().collect();
    debug_assert_eq!(grid.len(), n);
    // Left and right limits swap roles (and flip sign) under reflection.
    let jumps = tilde
        .jumps
        .into_iter()
        .map(|j| {
            JumpRecord::candidate(
                -j.y,
                j.p_plus.iter().map(|v| -v).collect(),
                j.p_minus.iter().map(|v| -v).collect(),
            )
        })
        .collect();
    let mut sol = PiecewiseSolution {
        grid,
        p_samples,
        u_samples,
        jumps,
        meta: tilde.meta,
        audit: None,
    };
    sol.audit = Some(audit(&sol, spec));
    sol
}

/// Core of [`construct_admissible`] for games already in a directly
/// integrable regime (cooperative increasing or conflicting with positive
/// slope sum).
fn window_limit(
    spec: &GameSpec,
    anchor: [f64; 2],
    nu_schedule: &[f64],
    tol: f64,
) -> Result<PiecewiseSolution, SolverError> {
    let l = spec.half_width;
    let region = invariant_region(spec)?;
    let grid = spec.window_grid(SOLUTION_GRID_DENSITY);

    let mut schedule: Vec<f64> = nu_schedule
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    schedule.sort_by(f64::total_cmp);
    schedule.dedup();
    if schedule.is_empty() {
        return Err(SolverError::DomainError("empty anchor schedule".into()));
    }
    // Restrictions to [−L, L] only exist for ν ≥ L; make sure at least two
    // anchors reach that far so the Cauchy test has a pair to compare.
    while schedule.iter().filter(|&&v| v >= l).count() < 2 {
        let last = *schedule.last().unwrap();
        schedule.push(2.0 * last);
    }

    let mut prev: Option<(f64, Vec<[f64; 2]>)> = None;
    let mut last_sup = f64::INFINITY;
    let mut nu_max = *schedule.last().unwrap();
    for &nu in &schedule {
        if nu < l {
            continue;
        }
        nu_max = nu;
        let run = integrate_graph(spec, anchor, -nu, &grid, Some(&region))?;
        if let Some((_, prev_samples)) = &prev {
            let sup = run
                .samples
                .iter()
                .zip(prev_samples)
                .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
                .fold(0.0_f64, f64::max);
            last_sup = sup;
            if sup < tol {
                let u_samples: Vec<[f64; 2]> = grid
                    .iter()
                    .zip(&run.samples)
                    .map(|(&x, &p)| value_pair(spec, x, p))
                    .collect();
                let mut sol = PiecewiseSolution {
                    grid,
                    p_samples: run.samples,
                    u_samples,
                    jumps: Vec::new(),
                    meta: ConstructionMeta::NuLimit { nu, sup_diff: sup },
                    audit: None,
                };
                sol.audit = Some(audit(&sol, spec));
                return Ok(sol);
            }
        }
        prev = Some((nu, run.samples));
    }
    Err(SolverError::NoConvergence { nu_max, achieved: last_sup })
}

// ---------------------------------------------------------------------------
// Periodic construction for the antisymmetric linear game
// ---------------------------------------------------------------------------

/// Builds the periodic solution of the antisymmetric linear game
/// `h₁′ ≡ −κ`, `h₂′ ≡ +κ` from the closed orbit through `(−α, α)`.
///
/// The rescaled flow is integrated from `(−α, α)` to its first return to the
/// line `p₁ + p₂ = 0` crossed with the departure orientation; the return
/// must land within [`ORBIT_CLOSURE_TOL`] of the start. The x-advance over
/// one loop, `ℓ = ∮ Δ ds`, is the spatial period used to tile `[−L, L]`,
/// and values come from the stationary algebra (they pick up the linear
/// drift of the running costs on top of a periodic part).
///
/// Requires `κ > 0` and `0 < α < κ` (orbits through `(−α, α)` encircle the
/// interior equilibrium only in that range).
pub fn periodic_solution(kappa: f64, alpha: f64, half_width: f64) -> Result<PiecewiseSolution, SolverError> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(SolverError::DomainError(format!(
            "the antisymmetric linear game needs kappa > 0, got {kappa}"
        )));
    }
    if !(alpha.is_finite() && alpha > 0.0 && alpha < kappa) {
        return Err(SolverError::DomainError(format!(
            "orbit parameter must satisfy 0 < alpha < kappa, got alpha = {alpha}, kappa = {kappa}"
        )));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(SolverError::DomainError(format!(
            "half-width must be positive, got {half_width}"
        )));
    }

    let c_bound = kappa.max(1.0);
    let spec = GameSpec::constant_slopes(-kappa, kappa, c_bound, half_width)
        .map_err(|e| SolverError::DomainError(e.to_string()))?;
    let hp = [-kappa, kappa];

    // One loop of the closed orbit, with the x-advance carried along.
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let p = [y[0], y[1]];
        let f = rescaled_field(hp, p);
        dy[0] = f[0];
        dy[1] = f[1];
        dy[2] = delta(p);
    };
    // The departure has d(p₁+p₂)/ds = 2α(κ−α) > 0, so the matching-
    // orientation return is the next upward crossing of the same line.
    let section = Event::new(CrossingDirection::Up, |_s, y: &[f64]| y[0] + y[1]);
    let s_max = 500.0 * (1.0 + 1.0 / kappa);
    let y0 = [-alpha, alpha, 0.0];
    let sol = ode::integrate(rhs, (0.0, s_max), &y0, &OdeOptions::default(), &[section], None)
        .map_err(|e| SolverError::Numerical(format!("orbit integration failed: {e}")))?;
    if !matches!(sol.termination, OdeTermination::Event { .. }) {
        return Err(SolverError::Numerical(format!(
            "no return to the section within s = {s_max}"
        )));
    }
    let y_ret = sol.last_y();
    let closure = (y_ret[0] + alpha).hypot(y_ret[1] - alpha);
    if closure > ORBIT_CLOSURE_TOL {
        return Err(SolverError::OrbitNotClosed { residual: closure });
    }
    let s_period = sol.last_t();
    let x_period = y_ret[2];
    if !(x_period.is_finite() && x_period > 0.0) {
        return Err(SolverError::Numerical(format!(
            "nonpositive spatial period {x_period}"
        )));
    }

    // Tile the window: p(x) repeats with period ℓ, anchored so that
    // x = 0 carries the section point (−α, α).
    let grid = uniform_grid(-half_width, half_width, SOLUTION_GRID_DENSITY);
    let p_samples: Vec<[f64; 2]> = grid
        .iter()
        .map(|&x| {
            let phase = x.rem_euclid(x_period).min(x_period);
            s_leg_eval(&sol, phase)
        })
        .collect();
    let u_samples: Vec<[f64; 2]> = grid
        .iter()
        .zip(&p_samples)
        .map(|(&x, &p)| value_pair(&spec, x, p))
        .collect();
    let mut out = PiecewiseSolution {
        grid,
        p_samples,
        u_samples,
        jumps: Vec::new(),
        meta: ConstructionMeta::Periodic { kappa, alpha, x_period, s_period },
        audit: None,
    };
    out.audit = Some(audit(&out, &spec));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Profiles that fail the audit on purpose
// ---------------------------------------------------------------------------

/// Packages a handwritten profile for the flat game `h ≡ 0` on `[−L, L]`.
fn external_profile(
    half_width: f64,
    c_bound: f64,
    label: &str,
    u1: impl Fn(f64) -> f64,
    p1: impl Fn(f64) -> f64,
    jumps: Vec<JumpRecord>,
) -> (GameSpec, PiecewiseSolution) {
    let spec = GameSpec::constant_slopes(0.0, 0.0, c_bound, half_width)
        .expect("flat game is well-formed");
    let grid = uniform_grid(-half_width, half_width, SOLUTION_GRID_DENSITY);
    let p_samples: Vec<[f64; 2]> = grid.iter().map(|&x| [p1(x), 0.0]).collect();
    let u_samples: Vec<[f64; 2]> = grid.iter().map(|&x| [u1(x), 0.0]).collect();
    let jumps = jumps.into_iter().map(|j| jump_admissible(&spec, &j)).collect();
    let mut sol = PiecewiseSolution {
        grid,
        p_samples,
        u_samples,
        jumps,
        meta: ConstructionMeta::External { label: label.into() },
        audit: None,
    };
    sol.audit = Some(audit(&sol, &spec));
    (spec, sol)
}

/// A profile that solves the flat game pointwise but jumps the wrong way:
/// `u₁ = −(1 − |x|)²/2` inside `|x| < 1` (zero outside), `u₂ ≡ 0`. The
/// gradient jumps from −1 to +1 at the origin, violating the right-limit
/// sign condition, so the audit fails A3 while A1 and A2 hold.
pub fn jump_counterexample() -> (GameSpec, PiecewiseSolution) {
    let u1 = |x: f64| {
        if x.abs() < 1.0 {
            -0.5 * (1.0 - x.abs()) * (1.0 - x.abs())
        } else {
            0.0
        }
    };
    // Right-continuous derivative of u₁.
    let p1 = |x: f64| {
        if !(-1.0..1.0).contains(&x) {
            0.0
        } else if x < 0.0 {
            -(1.0 + x)
        } else {
            1.0 - x
        }
    };
    let jump = JumpRecord::candidate(0.0, vec![-1.0, 0.0], vec![1.0, 0.0]);
    external_profile(2.0, 2.0, "inward-pointing gradient jump", u1, p1, vec![jump])
}

/// A profile that solves the flat game pointwise but grows quadratically:
/// `u₁ = −x²/2`, `u₂ ≡ 0`. Smooth, zero residual, no jumps — the audit
/// fails the linear growth bound A2.
pub fn growth_counterexample() -> (GameSpec, PiecewiseSolution) {
    external_profile(
        10.0,
        2.0,
        "quadratically growing values",
        |x| -0.5 * x * x,
        |x| -x,
        Vec::new(),
    )
}

// ---------------------------------------------------------------------------
// Contraction probe
// ---------------------------------------------------------------------------

/// Two gradient graphs driven through the same window, with the gap between
/// them sampled on the shared clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ContractionProbe {
    /// Sample times on the clock of the first graph.
    pub s_samples: Vec<f64>,
    /// Euclidean gap between the two graphs at equal x.
    pub gaps: Vec<f64>,
    /// Least-squares exponential rate: positive values mean contraction,
    /// `gap(s) ≈ gap(0)·e^{−rate·s}`.
    pub rate: f64,
    /// Gap at the final sample.
    pub final_gap: f64,
}

/// Runs two gradient graphs from distinct anchors at the same starting `x`
/// and measures how fast they collapse onto each other.
///
/// Both graphs are advanced on the rescaled clock of the first: the second
/// is dragged along in x so the gap is always measured between gradients at
/// the same spatial point. A positive fitted rate certifies local uniqueness
/// of the window limit — nearby anchors forget their start exponentially.
pub fn contraction_probe(
    spec: &GameSpec,
    anchor_a: [f64; 2],
    anchor_b: [f64; 2],
    x0: f64,
    s_max: f64,
) -> Result<ContractionProbe, SolverError> {
    let gap0 = (anchor_a[0] - anchor_b[0]).hypot(anchor_a[1] - anchor_b[1]);
    if gap0 == 0.0 {
        return Err(SolverError::DomainError("anchors must be distinct".into()));
    }
    if !(s_max.is_finite() && s_max > 0.0) {
        return Err(SolverError::DomainError(format!(
            "probe span must be positive, got {s_max}"
        )));
    }

    // State [p, p̃, x]: the first graph runs on its own rescaled clock and
    // the second is converted to that clock via dp̃/ds = F(p̃)·Δ(p)/Δ(p̃).
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let p = [y[0], y[1]];
        let q = [y[2], y[3]];
        let x = y[4];
        let hp = [spec.h[0].derivative(x), spec.h[1].derivative(x)];
        let fp = rescaled_field(hp, p);
        let fq = rescaled_field(hp, q);
        let ratio = delta(p) / delta(q);
        dy[0] = fp[0];
        dy[1] = fp[1];
        dy[2] = fq[0] * ratio;
        dy[3] = fq[1] * ratio;
        dy[4] = delta(p);
    };
    let mut broke = false;
    let mut stop = |_s: f64, y: &[f64]| {
        if y.iter().any(|v| !v.is_finite()) {
            broke = true;
            return true;
        }
        false
    };
    let y0 = [anchor_a[0], anchor_a[1], anchor_b[0], anchor_b[1], x0];
    let sol = ode::integrate(rhs, (0.0, s_max), &y0, &OdeOptions::default(), &[], Some(&mut stop))
        .map_err(|e| SolverError::Numerical(format!("probe integration failed: {e}")))?;
    if broke {
        return Err(SolverError::Numerical(
            "probe produced non-finite values (a graph crossed the singular locus)".into(),
        ));
    }

    let n = 256;
    let mut s_samples = Vec::with_capacity(n + 1);
    let mut gaps = Vec::with_capacity(n + 1);
    let mut buf = vec![0.0; 5];
    for j in 0..=n {
        let s = s_max * j as f64 / n as f64;
        sol.eval_into(s, &mut buf);
        s_samples.push(s);
        gaps.push((buf[0] - buf[2]).hypot(buf[1] - buf[3]));
    }
    // Fit the decay where the gap is meaningfully above the floating-point
    // floor of the state magnitudes.
    let floor = 1e-14 * (anchor_a[0].abs() + anchor_a[1].abs() + 1.0);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (s, g) in s_samples.iter().zip(&gaps) {
        if *g > floor {
            xs.push(*s);
            ys.push(g.ln());
        }
    }
    let rate = if xs.len() >= 2 { -ls_slope(&xs, &ys) } else { f64::INFINITY };
    let final_gap = *gaps.last().unwrap();
    Ok(ContractionProbe { s_samples, gaps, rate, final_gap })
}
