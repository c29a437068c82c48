//! Phase-plane analysis of the desingularized planar gradient flow
//!
//! ```text
//! dp1/ds = -p1^2 + (h1' - h2') p1 + h1' p2
//! dp2/ds = -p2^2 + (h2' - h1') p2 + h2' p1
//! dx/ds  = Delta(p) = p1^2 + p2^2 + p1 p2
//! ```
//!
//! With frozen slopes `h' = kappa` the field is polynomial and the analysis
//! is exact: equilibria (always the origin and `kappa` itself), their
//! linearizations, a taxonomy of plane regions with known invariance and
//! fate, and orbit integration that diagnoses blow-up in finite s
//! (`|p| ~ eta / |s - s0|`), convergence, closed orbits, and the behavior
//! of the reparametrization x(s) at each end. For non-constant slopes the
//! same integration runs with `h'(x(s))` evaluated along the orbit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::game_model::{GameSpec, Regime};
use crate::hj_system::{delta, rescaled_field};
use crate::ode::{self, CrossingDirection, Event, OdeError, OdeOptions, OdeTermination};

/// Default threshold on |p| above which an orbit counts as blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;
/// Default threshold on |dp/ds| below which an orbit counts as converged.
pub const CONVERGE_TOL: f64 = 1e-12;
/// Default closure tolerance for closed-orbit detection.
pub const CLOSURE_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum PhaseError {
    #[error("{0}")]
    DomainError(String),
    #[error("p = (0, 0) is an equilibrium excluded from every region")]
    OriginError,
    #[error("numerical breakdown at s = {s}: {reason} (p = ({p1:.6e}, {p2:.6e}))")]
    NumericalBreakdown { s: f64, p1: f64, p2: f64, reason: String },
}

/// The slopes driving the gradient flow: frozen constants, or a game's
/// cost derivatives evaluated along x(s).
#[derive(Debug, Clone, Copy)]
pub enum SlopeField<'a> {
    /// `h' ≡ kappa` — the exact polynomial field.
    Constant { kappa: [f64; 2] },
    /// `h'(x(s))` from a two-player unit-weight game, anchored at `x0`.
    Game { spec: &'a GameSpec, x0: f64 },
}

impl SlopeField<'_> {
    fn x0(&self) -> f64 {
        match self {
            SlopeField::Constant { .. } => 0.0,
            SlopeField::Game { x0, .. } => *x0,
        }
    }

    fn hp(&self, x: f64) -> [f64; 2] {
        match self {
            SlopeField::Constant { kappa } => *kappa,
            SlopeField::Game { spec, .. } => {
                [spec.h[0].derivative(x), spec.h[1].derivative(x)]
            }
        }
    }

    fn validate(&self) -> Result<(), PhaseError> {
        if let SlopeField::Game { spec, .. } = self {
            if spec.players != 2 {
                return Err(PhaseError::DomainError(format!(
                    "gradient flow needs a two-player game, spec has {} players",
                    spec.players
                )));
            }
            if !spec.has_unit_weights(1e-9) {
                return Err(PhaseError::DomainError(
                    "gradient flow needs unit control weights k ≡ 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Why an orbit integration ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OrbitTermination {
    /// |dp/ds| fell below the convergence tolerance at `p_limit`.
    Converged { p_limit: [f64; 2] },
    /// |p| exceeded the blow-up threshold; the tail fits
    /// `|p(s)| ≈ eta / |s - s0|`.
    BlowUp { s0: f64, eta: f64 },
    /// The requested s-span ended without a definitive asymptotic.
    LeftWindow,
    /// The orbit returned to its start within the closure tolerance.
    ClosedOrbit { period: f64 },
}

impl OrbitTermination {
    /// Short tag for tabular export.
    pub fn tag(&self) -> &'static str {
        match self {
            OrbitTermination::Converged { .. } => "converged",
            OrbitTermination::BlowUp { .. } => "blow-up",
            OrbitTermination::LeftWindow => "left-window",
            OrbitTermination::ClosedOrbit { .. } => "closed-orbit",
        }
    }
}

/// One integrated orbit of the rescaled flow, with the cumulative
/// reparametrization `x(s) = x0 + ∫ Delta(p) dσ`.
#[derive(Debug, Clone, Serialize)]
pub struct Orbit {
    pub s_samples: Vec<f64>,
    pub p_samples: Vec<[f64; 2]>,
    pub x_samples: Vec<f64>,
    pub termination: OrbitTermination,
}

impl Orbit {
    pub fn is_forward(&self) -> bool {
        self.s_samples.len() < 2 || self.s_samples[self.s_samples.len() - 1] >= self.s_samples[0]
    }

    fn p_norm(&self, i: usize) -> f64 {
        let [a, b] = self.p_samples[i];
        (a * a + b * b).sqrt()
    }

    /// For a blown-up orbit, the fitted exponent of `|p(s)|` against
    /// `|s - s0|` over the last decade of growth (≈ −1 on the
    /// `eta / |s - s0|` law). `None` unless the orbit blew up.
    pub fn blowup_fit_exponent(&self) -> Option<f64> {
        let s0 = match self.termination {
            OrbitTermination::BlowUp { s0, .. } => s0,
            _ => return None,
        };
        let n = self.s_samples.len();
        let peak = self.p_norm(n - 1);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let r = self.p_norm(i);
            let gap = (s0 - self.s_samples[i]).abs();
            if r >= 0.1 * peak && gap > 0.0 {
                xs.push(gap.ln());
                ys.push(r.ln());
            }
        }
        fit_slope(&xs, &ys)
    }
}

/// Least-squares slope of ys against xs; `None` when degenerate.
fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope plus squared correlation of the least-squares line.
fn fit_slope_r2(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / sxx, (sxy * sxy) / (sxx * syy)))
}

/// Jacobian of the rescaled field with frozen slopes `kappa` at `p`.
pub fn jacobian(kappa: [f64; 2], p: [f64; 2]) -> [[f64; 2]; 2] {
    let [k1, k2] = kappa;
    [
        [k1 - k2 - 2.0 * p[0], k1],
        [k2, k2 - k1 - 2.0 * p[1]],
    ]
}

/// All real stationary points of the frozen-slope rescaled field; always
/// contains the origin and `(kappa1, kappa2)`. Found by eliminating p2,
/// solving the resulting polynomial in p1 by companion-matrix eigenvalues,
/// and polishing each candidate with Newton iteration on the full system.
pub fn find_equilibria(kappa1: f64, kappa2: f64) -> Vec<[f64; 2]> {
    let kappa = [kappa1, kappa2];
    let scale = 1.0_f64.max(kappa1.abs()).max(kappa2.abs());
    let mut candidates: Vec<[f64; 2]> = vec![[0.0, 0.0]];

    if kappa1 == 0.0 {
        // F1 = -p1 (p1 + kappa2) = 0, then F2 quadratic in p2.
        for p1 in [0.0, -kappa2] {
            let disc = kappa2 * kappa2 + 4.0 * kappa2 * p1;
            if disc >= 0.0 {
                let r = disc.sqrt();
                candidates.push([p1, 0.5 * (kappa2 + r)]);
                candidates.push([p1, 0.5 * (kappa2 - r)]);
            }
        }
    } else {
        // Substituting p2 = (p1^2 - (kappa1 - kappa2) p1) / kappa1 into
        // F2 = 0 gives p1 times a monic cubic.
        let a = kappa1 - kappa2;
        let c2 = -2.0 * a;
        let c1 = a * a + a * kappa1;
        let c0 = -(a * a * kappa1 + kappa2 * kappa1 * kappa1);
        let companion = nalgebra::Matrix3::new(
            0.0, 0.0, -c0, //
            1.0, 0.0, -c1, //
            0.0, 1.0, -c2,
        );
        for root in companion.complex_eigenvalues().iter() {
            if root.im.abs() <= 1e-7 * (1.0 + root.re.abs()) {
                let p1 = root.re;
                candidates.push([p1, (p1 * p1 - a * p1) / kappa1]);
            }
        }
    }

    let mut out: Vec<[f64; 2]> = Vec::new();
    for cand in candidates {
        if let Some(p) = newton_polish(kappa, cand) {
            let dup = out
                .iter()
                .any(|q| (q[0] - p[0]).abs() + (q[1] - p[1]).abs() <= 1e-8 * scale);
            if !dup {
                out.push(p);
            }
        }
    }
    out.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    out
}

fn newton_polish(kappa: [f64; 2], start: [f64; 2]) -> Option<[f64; 2]> {
    let scale = 1.0_f64.max(kappa[0].abs()).max(kappa[1].abs());
    let mut p = start;
    for _ in 0..25 {
        let f = rescaled_field(kappa, p);
        if !f[0].is_finite() || !f[1].is_finite() {
            return None;
        }
        if f[0].abs().max(f[1].abs()) <= 1e-13 * scale * scale {
            return Some(p);
        }
        let j = jacobian(kappa, p);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 * scale * scale {
            return None;
        }
        p = [
            p[0] - (j[1][1] * f[0] - j[0][1] * f[1]) / det,
            p[1] - (j[0][0] * f[1] - j[1][0] * f[0]) / det,
        ];
    }
    let f = rescaled_field(kappa, p);
    (f[0].abs().max(f[1].abs()) <= 1e-9 * scale * scale).then_some(p)
}

/// Linearization of the frozen-slope field at an equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct Linearization {
    pub jacobian: [[f64; 2]; 2],
    /// Eigenvalues as (re, im), ordered by descending real part, then
    /// positive imaginary part first.
    pub eigenvalues: [(f64, f64); 2],
    /// Eigendirection angles in (−π/2, π/2], present for real eigenvalues.
    pub eigenvector_angles: [Option<f64>; 2],
}

/// Linearizes the frozen-slope field at `point`, which must be an
/// equilibrium (checked; otherwise `DomainError`). At the origin the
/// matrix is `[[κ1−κ2, κ1], [κ2, κ2−κ1]]` with `|λ| = √(κ1²+κ2²−κ1κ2)`
/// and eigendirections `tan α = (λ + κ2 − κ1)/κ1`.
pub fn linearize(kappa1: f64, kappa2: f64, point: [f64; 2]) -> Result<Linearization, PhaseError> {
    let kappa = [kappa1, kappa2];
    let scale = 1.0 + kappa1 * kappa1 + kappa2 * kappa2 + point[0] * point[0] + point[1] * point[1];
    let f = rescaled_field(kappa, point);
    if f[0].abs().max(f[1].abs()) > 1e-7 * scale {
        return Err(PhaseError::DomainError(format!(
            "({}, {}) is not an equilibrium of the frozen-slope field (|field| = {:.3e})",
            point[0],
            point[1],
            f[0].abs().max(f[1].abs())
        )));
    }
    let j = jacobian(kappa, point);
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr / 4.0 - det;
    let (eigenvalues, angles): ([(f64, f64); 2], [Option<f64>; 2]) = if disc >= 0.0 {
        let r = disc.sqrt();
        let l1 = tr / 2.0 + r;
        let l2 = tr / 2.0 - r;
        ([(l1, 0.0), (l2, 0.0)], [Some(eigen_angle(&j, l1)), Some(eigen_angle(&j, l2))])
    } else {
        let w = (-disc).sqrt();
        ([(tr / 2.0, w), (tr / 2.0, -w)], [None, None])
    };
    Ok(Linearization { jacobian: j, eigenvalues, eigenvector_angles: angles })
}

/// Angle of the eigendirection for real eigenvalue `l`, folded into (−π/2, π/2].
fn eigen_angle(j: &[[f64; 2]; 2], l: f64) -> f64 {
    let (v1, v2) = if j[0][1].abs() > 1e-300 {
        (j[0][1], l - j[0][0])
    } else if j[1][0].abs() > 1e-300 {
        (l - j[1][1], j[1][0])
    } else if (l - j[0][0]).abs() <= (l - j[1][1]).abs() {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let mut a = v2.atan2(v1);
    if a <= -std::f64::consts::FRAC_PI_2 {
        a += std::f64::consts::PI;
    } else if a > std::f64::consts::FRAC_PI_2 {
        a -= std::f64::consts::PI;
    }
    a
}

/// Region taxonomy of the frozen-slope plane (origin excluded everywhere).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    /// Cooperative: third quadrant (weakly), p ≠ 0 — blow-up region.
    A,
    /// Cooperative: p1 > 0, p2 < 0.
    B,
    /// Cooperative: p1 < 0, p2 > κ2 − κ1.
    C1,
    /// Cooperative: p1 < 0, 0 < p2 ≤ κ2 − κ1.
    C2,
    /// Cooperative: first quadrant with p1 + p2 ≥ 2κ2.
    D,
    /// Cooperative: first quadrant with p1 + p2 ≤ 2κ1.
    E,
    /// Cooperative: first quadrant with 2κ1 < p1 + p2 < 2κ2 (traps the
    /// stable focus).
    F,
    /// Conflicting: p2 < 0 and p1 + p2 ≤ 0 outside the third quadrant.
    Xi1,
    /// Conflicting: p2 < 0 and p1 + p2 > 0.
    Xi2,
    /// Conflicting: closed first quadrant (weakly), p ≠ 0.
    QuadrantPP,
    /// Conflicting: open third quadrant.
    QuadrantMM,
    /// Conflicting: second quadrant, numbered by the saddle sector at the
    /// origin it falls in (counterclockwise, S1 contains the +p1 axis).
    SaddleSector(u8),
}

impl std::fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionLabel::A => write!(f, "A"),
            RegionLabel::B => write!(f, "B"),
            RegionLabel::C1 => write!(f, "C1"),
            RegionLabel::C2 => write!(f, "C2"),
            RegionLabel::D => write!(f, "D"),
            RegionLabel::E => write!(f, "E"),
            RegionLabel::F => write!(f, "F"),
            RegionLabel::Xi1 => write!(f, "Xi1"),
            RegionLabel::Xi2 => write!(f, "Xi2"),
            RegionLabel::QuadrantPP => write!(f, "Quadrant++"),
            RegionLabel::QuadrantMM => write!(f, "Quadrant--"),
            RegionLabel::SaddleSector(k) => write!(f, "S{k}"),
        }
    }
}

/// Labels `p` in the taxonomy of the given regime with frozen slopes
/// `kappa`. Boundary points resolve to the set whose defining inequalities
/// hold weakly (ties toward the invariant set). The regime argument selects
/// the taxonomy; `kappa` supplies the constants.
pub fn classify_point(
    regime: &Regime,
    kappa: [f64; 2],
    p: [f64; 2],
) -> Result<RegionLabel, PhaseError> {
    if p[0] == 0.0 && p[1] == 0.0 {
        return Err(PhaseError::OriginError);
    }
    let [k1, k2] = kappa;
    match regime {
        Regime::CooperativeIncreasing => {
            if !(0.0 < k1 && k1 <= k2) {
                return Err(PhaseError::DomainError(format!(
                    "cooperative taxonomy needs 0 < κ1 ≤ κ2, got ({k1}, {k2})"
                )));
            }
            Ok(classify_cooperative(kappa, p))
        }
        Regime::Conflicting { .. } => {
            if !(k1 < 0.0 && 0.0 < k2) {
                return Err(PhaseError::DomainError(format!(
                    "conflicting taxonomy needs κ1 < 0 < κ2, got ({k1}, {k2})"
                )));
            }
            Ok(classify_conflicting(kappa, p))
        }
        other => Err(PhaseError::DomainError(format!(
            "no region taxonomy for the {} regime",
            regime_name(other)
        ))),
    }
}

fn regime_name(r: &Regime) -> &'static str {
    match r {
        Regime::CooperativeIncreasing => "cooperative-increasing",
        Regime::CooperativeDecreasing => "cooperative-decreasing",
        Regime::Conflicting { .. } => "conflicting",
        Regime::LinearExample { .. } => "linear-example",
        Regime::General => "general",
    }
}

fn classify_cooperative(kappa: [f64; 2], p: [f64; 2]) -> RegionLabel {
    let [k1, k2] = kappa;
    let [p1, p2] = p;
    if p1 <= 0.0 && p2 <= 0.0 {
        RegionLabel::A
    } else if p2 < 0.0 {
        // Here p1 > 0.
        RegionLabel::B
    } else if p1 < 0.0 {
        // Here p2 > 0.
        if p2 > k2 - k1 {
            RegionLabel::C1
        } else {
            RegionLabel::C2
        }
    } else {
        // Closed first quadrant, p ≠ 0, split by the invariant strip.
        let w = p1 + p2;
        if w <= 2.0 * k1 {
            RegionLabel::E
        } else if w >= 2.0 * k2 {
            RegionLabel::D
        } else {
            RegionLabel::F
        }
    }
}

fn classify_conflicting(kappa: [f64; 2], p: [f64; 2]) -> RegionLabel {
    let [p1, p2] = p;
    if p1 >= 0.0 && p2 >= 0.0 {
        RegionLabel::QuadrantPP
    } else if p1 < 0.0 && p2 < 0.0 {
        RegionLabel::QuadrantMM
    } else if p2 < 0.0 {
        // Here p1 ≥ 0.
        if p1 + p2 <= 0.0 {
            RegionLabel::Xi1
        } else {
            RegionLabel::Xi2
        }
    } else {
        // Second quadrant: p1 < 0, p2 ≥ 0 — label by saddle sector.
        RegionLabel::SaddleSector(saddle_sector(kappa, p))
    }
}

/// The four sectors cut by the origin's eigendirections, numbered
/// counterclockwise with S1 the sector containing the +p1 direction.
fn saddle_sector(kappa: [f64; 2], p: [f64; 2]) -> u8 {
    let [k1, k2] = kappa;
    let lam = (k1 * k1 + k2 * k2 - k1 * k2).sqrt();
    // tan α_i = (λ_i + κ2 − κ1)/κ1 for the origin matrix; κ1 ≠ 0 here.
    let a1 = ((lam + k2 - k1) / k1).atan();
    let a2 = ((-lam + k2 - k1) / k1).atan();
    let tau = std::f64::consts::TAU;
    let mut rays = [
        a1.rem_euclid(tau),
        a2.rem_euclid(tau),
        (a1 + std::f64::consts::PI).rem_euclid(tau),
        (a2 + std::f64::consts::PI).rem_euclid(tau),
    ];
    rays.sort_by(f64::total_cmp);
    let sector_of = |theta: f64| -> usize {
        // Index k means theta ∈ [rays[k], rays[k+1]) with wrap at k = 3.
        for k in 0..3 {
            if theta >= rays[k] && theta < rays[k + 1] {
                return k + 1;
            }
        }
        // Wrapping sector [rays[3], rays[0] + 2π).
        0
    };
    let k0 = sector_of(0.0);
    let kp = sector_of(p[1].atan2(p[0]).rem_euclid(tau));
    ((kp + 4 - k0) % 4 + 1) as u8
}

/// Integration controls for [`integrate_orbit`].
#[derive(Debug, Clone)]
pub struct OrbitOptions {
    pub blowup_threshold: f64,
    pub converge_tol: f64,
    pub closure_tol: f64,
    /// Watch for closed orbits (frozen-slope fields only).
    pub detect_closed: bool,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            blowup_threshold: BLOWUP_THRESHOLD,
            converge_tol: CONVERGE_TOL,
            closure_tol: CLOSURE_TOL,
            detect_closed: true,
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

/// Integrates the rescaled flow from `p0` over `s_span` (backward when the
/// span is reversed), accumulating `x(s)`. Termination precedence at each
/// accepted step: blow-up, convergence, closed orbit; reaching the end of
/// the span yields `LeftWindow`.
pub fn integrate_orbit(
    field: SlopeField<'_>,
    p0: [f64; 2],
    s_span: (f64, f64),
    opts: &OrbitOptions,
) -> Result<Orbit, PhaseError> {
    field.validate()?;
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        let p = [y[0], y[1]];
        let n = rescaled_field(field.hp(y[2]), p);
        dy[0] = n[0];
        dy[1] = n[1];
        dy[2] = delta(p);
    };
    let speed = |y: &[f64]| -> f64 {
        let n = rescaled_field(field.hp(y[2]), [y[0], y[1]]);
        n[0].hypot(n[1])
    };

    let mut orbit = Orbit {
        s_samples: vec![s_span.0],
        p_samples: vec![p0],
        x_samples: vec![field.x0()],
        termination: OrbitTermination::LeftWindow,
    };
    let mut state = vec![p0[0], p0[1], field.x0()];

    if speed(&state) < opts.converge_tol {
        orbit.termination = OrbitTermination::Converged { p_limit: p0 };
        return Ok(orbit);
    }

    // Poincaré section through p0, normal to the initial velocity: a
    // same-direction crossing that lands back near p0 closes the orbit.
    let watch_section = opts.detect_closed && matches!(field, SlopeField::Constant { .. });
    let n0 = rescaled_field(field.hp(field.x0()), p0);
    let n0_len = n0[0].hypot(n0[1]);
    let normal = [n0[0] / n0_len, n0[1] / n0_len];

    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        max_steps: opts.max_steps,
        ..Default::default()
    };
    let mut s_cur = s_span.0;
    const MAX_LEGS: usize = 256;

    // An explicit integrator hovers around an attracting equilibrium at the
    // tolerance floor instead of reaching |dp/ds| < converge_tol exactly, so
    // once the state is inside that floor we snap to the Newton-polished
    // equilibrium and report it as the limit (where the field really is
    // below the tolerance). The floor scales with the equilibrium itself, so
    // a slow transit near the origin saddle (which stays orders of magnitude
    // farther out than atol) is not captured.
    let snap_floor = |eq: [f64; 2]| 100.0 * (opts.atol + opts.rtol * eq[0].hypot(eq[1]));
    let mut snapped: Option<[f64; 2]> = None;

    for leg in 0.. {
        let events: Vec<Event<'_>> = if watch_section && leg < MAX_LEGS {
            vec![Event::new(CrossingDirection::Up, |_s, y: &[f64]| {
                (y[0] - p0[0]) * normal[0] + (y[1] - p0[1]) * normal[1]
            })]
        } else {
            Vec::new()
        };
        let mut stop = |_s: f64, y: &[f64]| -> bool {
            let r = y[0].hypot(y[1]);
            if r > opts.blowup_threshold {
                return true;
            }
            let v = speed(y);
            if v < opts.converge_tol {
                return true;
            }
            if v < 1e-6 {
                if let SlopeField::Constant { kappa } = field {
                    if let Some(eq) = newton_polish(kappa, [y[0], y[1]]) {
                        if (y[0] - eq[0]).hypot(y[1] - eq[1]) <= snap_floor(eq) {
                            snapped = Some(eq);
                            return true;
                        }
                    }
                }
            }
            false
        };
        let sol = ode::integrate(rhs, (s_cur, s_span.1), &state, &ode_opts, &events, Some(&mut stop))
            .map_err(|e| match e {
                OdeError::StepSizeUnderflow { t, y, .. } => PhaseError::NumericalBreakdown {
                    s: t,
                    p1: y[0],
                    p2: y[1],
                    reason: "step size underflow".into(),
                },
                OdeError::MaxSteps { t, steps, y } => PhaseError::NumericalBreakdown {
                    s: t,
                    p1: y[0],
                    p2: y[1],
                    reason: format!("step budget ({steps}) exhausted"),
                },
            })?;
        for (t, y) in sol.ts.iter().zip(&sol.ys).skip(1) {
            orbit.s_samples.push(*t);
            orbit.p_samples.push([y[0], y[1]]);
            orbit.x_samples.push(y[2]);
        }

        match sol.termination {
            OdeTermination::Stopped => {
                let y = sol.last_y();
                let p = [y[0], y[1]];
                orbit.termination = if p[0].hypot(p[1]) > opts.blowup_threshold {
                    fit_blowup(&orbit)
                } else {
                    OrbitTermination::Converged { p_limit: snapped.unwrap_or(p) }
                };
                return Ok(orbit);
            }
            OdeTermination::ReachedEnd => {
                orbit.termination = OrbitTermination::LeftWindow;
                return Ok(orbit);
            }
            OdeTermination::Event { .. } => {
                let y = sol.last_y();
                let dist = (y[0] - p0[0]).hypot(y[1] - p0[1]);
                if dist <= opts.closure_tol {
                    orbit.termination = OrbitTermination::ClosedOrbit {
                        period: sol.last_t() - s_span.0,
                    };
                    return Ok(orbit);
                }
                // Not a closure: nudge just past the section and continue.
                s_cur = sol.last_t();
                state = sol.last_y().to_vec();
                let dir = (s_span.1 - s_span.0).signum();
                let h = dir * 1e-7 * (1.0 + s_cur.abs());
                rk4_step(&rhs, &mut s_cur, &mut state, h);
                if (s_span.1 - s_cur) * dir <= 0.0 {
                    orbit.termination = OrbitTermination::LeftWindow;
                    return Ok(orbit);
                }
            }
        }
    }
    unreachable!("leg loop always returns");
}

fn rk4_step(rhs: &impl Fn(f64, &[f64], &mut [f64]), t: &mut f64, y: &mut [f64], h: f64) {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    rhs(*t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs(*t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs(*t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs(*t + h, &tmp, &mut k4);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    *t += h;
}

/// Fits the blow-up law over the last decade of |p|: `1/|p|` is asymptotically
/// linear in s with slope ∓1/eta vanishing at s0.
fn fit_blowup(orbit: &Orbit) -> OrbitTermination {
    let n = orbit.s_samples.len();
    let peak = orbit.p_norm(n - 1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let r = orbit.p_norm(i);
        if r >= 0.1 * peak {
            xs.push(orbit.s_samples[i]);
            ys.push(1.0 / r);
        }
    }
    match fit_slope(&xs, &ys) {
        Some(b) if b != 0.0 => {
            let my = ys.iter().sum::<f64>() / ys.len() as f64;
            let mx = xs.iter().sum::<f64>() / xs.len() as f64;
            let a = my - b * mx;
            OrbitTermination::BlowUp { s0: -a / b, eta: 1.0 / b.abs() }
        }
        _ => OrbitTermination::BlowUp { s0: *orbit.s_samples.last().unwrap(), eta: f64::NAN },
    }
}

/// Behavior of x(s) at one end of an orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EndBehavior {
    /// x approaches a finite limit (hyperbolic approach to the origin:
    /// Delta decays exponentially and its integral converges).
    FiniteLimit(f64),
    /// x diverges at this end (finite-s blow-up, convergence to a nonzero
    /// equilibrium, or a closed orbit advancing x every loop).
    Unbounded,
    /// Integration stopped before the asymptotic was resolved.
    Truncated(f64),
}

/// The x-range an orbit sweeps and how each end behaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XWindow {
    pub x_min: f64,
    pub x_max: f64,
    /// Behavior at the smaller-x end.
    pub lower: EndBehavior,
    /// Behavior at the larger-x end.
    pub upper: EndBehavior,
}

/// Classifies the swept x-range of an integrated orbit. The far end follows
/// the termination; a truncated far end is upgraded to a finite limit when
/// the tail shows clean exponential decay of |p| toward the origin (Delta
/// then decays at twice the rate and its remaining integral is appended).
pub fn x_window(orbit: &Orbit) -> XWindow {
    let n = orbit.s_samples.len();
    let x_first = orbit.x_samples[0];
    let x_last = orbit.x_samples[n - 1];
    let (x_min, x_max) = if x_first <= x_last { (x_first, x_last) } else { (x_last, x_first) };

    if let OrbitTermination::ClosedOrbit { .. } = orbit.termination {
        // A closed orbit advances x by its finite loop integral forever,
        // in both directions: p(x) extends periodically to the whole line.
        return XWindow { x_min, x_max, lower: EndBehavior::Unbounded, upper: EndBehavior::Unbounded };
    }

    let far = match &orbit.termination {
        OrbitTermination::BlowUp { .. } => EndBehavior::Unbounded,
        OrbitTermination::Converged { p_limit } => {
            if p_limit[0].hypot(p_limit[1]) <= 1e-6 {
                EndBehavior::FiniteLimit(x_last)
            } else {
                EndBehavior::Unbounded
            }
        }
        OrbitTermination::LeftWindow => truncated_tail_behavior(orbit),
        OrbitTermination::ClosedOrbit { .. } => unreachable!(),
    };
    let near = EndBehavior::Truncated(x_first);
    if x_first <= x_last {
        XWindow { x_min, x_max, lower: near, upper: far }
    } else {
        XWindow { x_min, x_max, lower: far, upper: near }
    }
}

/// Detects a clean hyperbolic approach to the origin in the trailing
/// samples: |p| small and log-linear decay. Returns the finite x-limit with
/// the remaining tail integral appended, or `Truncated` otherwise.
fn truncated_tail_behavior(orbit: &Orbit) -> EndBehavior {
    let n = orbit.s_samples.len();
    let x_last = orbit.x_samples[n - 1];
    let p_end = orbit.p_norm(n - 1);
    if p_end >= 1e-3 || n < 8 {
        return EndBehavior::Truncated(x_last);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let r = orbit.p_norm(i);
        if r > 0.0 && r <= 10.0 * p_end {
            xs.push(orbit.s_samples[i]);
            ys.push(r.ln());
        }
    }
    match fit_slope_r2(&xs, &ys) {
        Some((m, r2)) if r2 > 0.999 => {
            // Decay must run in the direction of integration.
            let dir = if orbit.is_forward() { 1.0 } else { -1.0 };
            let rate = m * dir;
            if rate < -0.05 {
                // Delta ~ |p|^2 keeps decaying at twice the rate; append the
                // remaining integral (x decreases on backward orbits).
                let tail = delta(orbit.p_samples[n - 1]).abs() / (2.0 * rate.abs());
                EndBehavior::FiniteLimit(x_last + dir * tail)
            } else {
                EndBehavior::Truncated(x_last)
            }
        }
        _ => EndBehavior::Truncated(x_last),
    }
}

/// One start of a portrait sweep.
#[derive(Debug, Clone, Serialize)]
pub struct PortraitSample {
    pub p0: [f64; 2],
    pub outcome: Result<OrbitTermination, String>,
}

/// Integrates a grid of starts `(p1, p2)` over `[0, s_max]` in parallel,
/// returning outcomes in row-major grid order (deterministic).
pub fn sample_portrait(
    kappa: [f64; 2],
    p1_range: (f64, f64),
    p2_range: (f64, f64),
    grid_n: usize,
    s_max: f64,
    opts: &OrbitOptions,
) -> Vec<PortraitSample> {
    assert!(grid_n >= 2, "portrait grid needs at least 2 points per axis");
    let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (grid_n - 1) as f64;
    let starts: Vec<[f64; 2]> = (0..grid_n * grid_n)
        .map(|idx| {
            let (i, j) = (idx / grid_n, idx % grid_n);
            [lin(p1_range.0, p1_range.1, i), lin(p2_range.0, p2_range.1, j)]
        })
        .collect();
    starts
        .into_par_iter()
        .map(|p0| {
            let outcome = integrate_orbit(SlopeField::Constant { kappa }, p0, (0.0, s_max), opts)
                .map(|o| o.termination)
                .map_err(|e| e.to_string());
            PortraitSample { p0, outcome }
        })
        .collect()
}
