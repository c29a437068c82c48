//! Game definitions: serializable cost functions, standing-assumption
//! validation, and regime classification.
//!
//! A game has m ≥ 2 players, running costs `hᵢ(x)` and control-cost weights
//! `kᵢ(x)`, a bound `C` with `1/C ≤ kᵢ(x) ≤ C` and `|hᵢ′(x)| ≤ C`, and a
//! working interval `[−L, L]`. Cost functions come from a small closed
//! family so game specifications stay portable files rather than code.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

use crate::interp::CubicSpline;

/// Points per unit length used by grid-based assumption checks.
pub const ASSUMPTION_GRID_DENSITY: usize = 64;
/// Assumption checks scan `[−ASSUMPTION_WINDOW_FACTOR·L, +…·L]`.
pub const ASSUMPTION_WINDOW_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed game specification: {0}")]
    Malformed(String),
    #[error("non-finite {quantity} for player {player} at x = {x}")]
    NonFinite {
        player: usize,
        quantity: &'static str,
        x: f64,
    },
}

/// Shape of the bounded perturbation added to a linear trend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationShape {
    /// `h(x) = κx + A·tanh(x/ℓ)` — a smoothed step, `h′ = κ + (A/ℓ)·sech²(x/ℓ)`.
    Tanh,
    /// `h(x) = κx − A·ℓ·cos(x/ℓ)` — oscillation, `h′ = κ + A·sin(x/ℓ)`.
    Sin,
    /// `h(x) = κx + A·exp(−(x/ℓ)²)` — a localized bump.
    GaussianBump,
}

/// A member of the serializable cost-function family. Construct through
/// [`CostFunction::linear`], [`CostFunction::smooth_perturbed`], or
/// [`CostFunction::tabulated`]; every member has a value and a first
/// derivative at every real x.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
#[serde(try_from = "RawCostFunction")]
pub enum CostFunction {
    /// `h(x) = kappa·x + offset`.
    Linear { kappa: f64, offset: f64 },
    /// Linear trend `kappa·x` plus a bounded perturbation of the given
    /// shape, amplitude, and length scale (see [`PerturbationShape`]).
    SmoothPerturbed {
        kappa: f64,
        amplitude: f64,
        shape: PerturbationShape,
        length_scale: f64,
    },
    /// Natural cubic spline through the sample table, extended linearly
    /// beyond it (so the derivative stays bounded globally).
    Tabulated {
        xs: Vec<f64>,
        values: Vec<f64>,
        #[serde(skip)]
        spline: OnceLock<CubicSpline>,
    },
}

/// Serde-side mirror of [`CostFunction`] that rejects unknown fields and
/// checks per-kind field consistency before constructing the real type.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RawCostFunction {
    kind: String,
    kappa: Option<f64>,
    offset: Option<f64>,
    amplitude: Option<f64>,
    shape: Option<PerturbationShape>,
    length_scale: Option<f64>,
    xs: Option<Vec<f64>>,
    values: Option<Vec<f64>>,
}

impl TryFrom<RawCostFunction> for CostFunction {
    type Error = String;

    fn try_from(raw: RawCostFunction) -> Result<Self, String> {
        let forbid = |field: &str, present: bool, kind: &str| {
            if present {
                Err(format!("field `{field}` is not valid for kind `{kind}`"))
            } else {
                Ok(())
            }
        };
        match raw.kind.as_str() {
            "linear" => {
                forbid("amplitude", raw.amplitude.is_some(), "linear")?;
                forbid("shape", raw.shape.is_some(), "linear")?;
                forbid("length-scale", raw.length_scale.is_some(), "linear")?;
                forbid("xs", raw.xs.is_some(), "linear")?;
                forbid("values", raw.values.is_some(), "linear")?;
                let kappa = raw.kappa.ok_or("linear requires `kappa`")?;
                CostFunction::linear(kappa, raw.offset.unwrap_or(0.0))
            }
            "smooth-perturbed" => {
                forbid("offset", raw.offset.is_some(), "smooth-perturbed")?;
                forbid("xs", raw.xs.is_some(), "smooth-perturbed")?;
                forbid("values", raw.values.is_some(), "smooth-perturbed")?;
                let kappa = raw.kappa.ok_or("smooth-perturbed requires `kappa`")?;
                let amplitude = raw.amplitude.ok_or("smooth-perturbed requires `amplitude`")?;
                let shape = raw.shape.ok_or("smooth-perturbed requires `shape`")?;
                CostFunction::smooth_perturbed(kappa, amplitude, shape, raw.length_scale.unwrap_or(1.0))
            }
            "tabulated" => {
                forbid("kappa", raw.kappa.is_some(), "tabulated")?;
                forbid("offset", raw.offset.is_some(), "tabulated")?;
                forbid("amplitude", raw.amplitude.is_some(), "tabulated")?;
                forbid("shape", raw.shape.is_some(), "tabulated")?;
                forbid("length-scale", raw.length_scale.is_some(), "tabulated")?;
                let xs = raw.xs.ok_or("tabulated requires `xs`")?;
                let values = raw.values.ok_or("tabulated requires `values`")?;
                CostFunction::tabulated(xs, values)
            }
            other => Err(format!(
                "unknown cost-function kind `{other}` (expected `linear`, `smooth-perturbed`, or `tabulated`)"
            )),
        }
    }
}

impl CostFunction {
    /// `h(x) = kappa·x + offset`.
    pub fn linear(kappa: f64, offset: f64) -> Result<Self, String> {
        if !kappa.is_finite() || !offset.is_finite() {
            return Err("linear cost requires finite kappa and offset".into());
        }
        Ok(CostFunction::Linear { kappa, offset })
    }

    /// Linear trend plus a bounded perturbation; `length_scale` must be positive.
    pub fn smooth_perturbed(
        kappa: f64,
        amplitude: f64,
        shape: PerturbationShape,
        length_scale: f64,
    ) -> Result<Self, String> {
        if !kappa.is_finite() || !amplitude.is_finite() {
            return Err("smooth-perturbed cost requires finite kappa and amplitude".into());
        }
        if length_scale <= 0.0 || !length_scale.is_finite() {
            return Err("smooth-perturbed cost requires length-scale > 0".into());
        }
        Ok(CostFunction::SmoothPerturbed {
            kappa,
            amplitude,
            shape,
            length_scale,
        })
    }

    /// Cubic-spline interpolant of the sample table.
    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Result<Self, String> {
        // Build eagerly so malformed tables are rejected at construction.
        let spline = CubicSpline::new(xs.clone(), values.clone())?;
        let cell = OnceLock::new();
        let _ = cell.set(spline);
        Ok(CostFunction::Tabulated {
            xs,
            values,
            spline: cell,
        })
    }

    /// Constant function `h ≡ c` (a zero-slope linear member).
    pub fn constant(c: f64) -> Self {
        CostFunction::Linear { kappa: 0.0, offset: c }
    }

    fn spline(&self) -> Option<&CubicSpline> {
        match self {
            CostFunction::Tabulated { xs, values, spline } => Some(spline.get_or_init(|| {
                // Constructors and deserialization build the spline eagerly,
                // so this path only fires for hand-assembled variants; a
                // malformed table there is a caller bug.
                CubicSpline::new(xs.clone(), values.clone())
                    .unwrap_or_else(|e| panic!("malformed tabulated cost: {e}"))
            })),
            _ => None,
        }
    }

    /// Function value `h(x)`.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            CostFunction::Linear { kappa, offset } => kappa * x + offset,
            CostFunction::SmoothPerturbed {
                kappa,
                amplitude,
                shape,
                length_scale,
            } => {
                let u = x / length_scale;
                kappa * x
                    + match shape {
                        PerturbationShape::Tanh => amplitude * u.tanh(),
                        PerturbationShape::Sin => -amplitude * length_scale * u.cos(),
                        PerturbationShape::GaussianBump => amplitude * (-u * u).exp(),
                    }
            }
            CostFunction::Tabulated { .. } => self.spline().unwrap().value(x),
        }
    }

    /// Analytic first derivative `h′(x)`.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            CostFunction::Linear { kappa, .. } => *kappa,
            CostFunction::SmoothPerturbed {
                kappa,
                amplitude,
                shape,
                length_scale,
            } => {
                let u = x / length_scale;
                kappa
                    + match shape {
                        PerturbationShape::Tanh => {
                            let c = u.cosh();
                            amplitude / (length_scale * c * c)
                        }
                        PerturbationShape::Sin => amplitude * u.sin(),
                        PerturbationShape::GaussianBump => {
                            -2.0 * amplitude * u * (-u * u).exp() / length_scale
                        }
                    }
            }
            CostFunction::Tabulated { .. } => self.spline().unwrap().derivative(x),
        }
    }

    /// The reflected function `x ↦ h(−x)`, expressed inside the same family.
    pub fn reflected(&self) -> CostFunction {
        match self {
            CostFunction::Linear { kappa, offset } => CostFunction::Linear {
                kappa: -kappa,
                offset: *offset,
            },
            CostFunction::SmoothPerturbed {
                kappa,
                amplitude,
                shape,
                length_scale,
            } => CostFunction::SmoothPerturbed {
                kappa: -kappa,
                // tanh is odd, the sin-shape antiderivative −cos and the
                // gaussian bump are even in x.
                amplitude: match shape {
                    PerturbationShape::Tanh => -amplitude,
                    PerturbationShape::Sin | PerturbationShape::GaussianBump => *amplitude,
                },
                shape: *shape,
                length_scale: *length_scale,
            },
            CostFunction::Tabulated { xs, values, .. } => {
                let rx: Vec<f64> = xs.iter().rev().map(|v| -v).collect();
                let rv: Vec<f64> = values.iter().rev().cloned().collect();
                CostFunction::tabulated(rx, rv).expect("reflection of a valid table is valid")
            }
        }
    }
}

/// A complete game specification.
///
/// Serialized form: `{ "players": m, "h": [...], "k": [...], "C": c, "L": l }`
/// with cost functions `{ "kind": "...", ... }`; unknown fields are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawGameSpec")]
pub struct GameSpec {
    /// Player count m ≥ 2.
    pub players: usize,
    /// Running costs h₁…h_m.
    pub h: Vec<CostFunction>,
    /// Control-cost weights k₁…k_m (only their values are used).
    pub k: Vec<CostFunction>,
    /// Uniform bound: `1/C ≤ kᵢ ≤ C` and `|hᵢ′| ≤ C`.
    #[serde(rename = "C")]
    pub c_bound: f64,
    /// Working-interval half-width; solutions live on `[−L, L]`.
    #[serde(rename = "L")]
    pub half_width: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGameSpec {
    players: usize,
    h: Vec<CostFunction>,
    k: Vec<CostFunction>,
    #[serde(rename = "C")]
    c_bound: f64,
    #[serde(rename = "L")]
    half_width: f64,
}

impl TryFrom<RawGameSpec> for GameSpec {
    type Error = String;

    fn try_from(raw: RawGameSpec) -> Result<Self, String> {
        GameSpec::new(raw.players, raw.h, raw.k, raw.c_bound, raw.half_width).map_err(|e| e.to_string())
    }
}

impl GameSpec {
    /// Builds a structurally checked specification: m ≥ 2, matching list
    /// lengths, finite C > 0, finite L > 0.
    pub fn new(
        players: usize,
        h: Vec<CostFunction>,
        k: Vec<CostFunction>,
        c_bound: f64,
        half_width: f64,
    ) -> Result<Self, ModelError> {
        if players < 2 {
            return Err(ModelError::Malformed(format!(
                "player count must be at least 2, got {players}"
            )));
        }
        if h.len() != players || k.len() != players {
            return Err(ModelError::Malformed(format!(
                "expected {players} running costs and {players} weights, got {} and {}",
                h.len(),
                k.len()
            )));
        }
        if !(c_bound.is_finite() && c_bound > 0.0) {
            return Err(ModelError::Malformed(format!(
                "bound C must be finite and positive, got {c_bound}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(ModelError::Malformed(format!(
                "half-width L must be finite and positive, got {half_width}"
            )));
        }
        Ok(GameSpec {
            players,
            h,
            k,
            c_bound,
            half_width,
        })
    }

    /// Convenience constructor for two-player games with unit weights.
    pub fn two_player_unit(
        h1: CostFunction,
        h2: CostFunction,
        c_bound: f64,
        half_width: f64,
    ) -> Result<Self, ModelError> {
        GameSpec::new(
            2,
            vec![h1, h2],
            vec![CostFunction::constant(1.0), CostFunction::constant(1.0)],
            c_bound,
            half_width,
        )
    }

    /// Two-player game with constant slopes `h′ ≡ (κ₁, κ₂)` and unit weights.
    pub fn constant_slopes(kappa1: f64, kappa2: f64, c_bound: f64, half_width: f64) -> Result<Self, ModelError> {
        GameSpec::two_player_unit(
            CostFunction::Linear { kappa: kappa1, offset: 0.0 },
            CostFunction::Linear { kappa: kappa2, offset: 0.0 },
            c_bound,
            half_width,
        )
    }

    /// The grid used by assumption checks:
    /// `[−10L, 10L]` at [`ASSUMPTION_GRID_DENSITY`] points per unit length.
    pub fn assumption_grid(&self) -> Vec<f64> {
        let half = ASSUMPTION_WINDOW_FACTOR * self.half_width;
        uniform_grid(-half, half, ASSUMPTION_GRID_DENSITY)
    }

    /// A uniform grid over the working interval `[−L, L]` at the given density.
    pub fn window_grid(&self, points_per_unit: usize) -> Vec<f64> {
        uniform_grid(-self.half_width, self.half_width, points_per_unit)
    }

    /// The game with every cost reflected, `h̃ᵢ(x) = hᵢ(−x)`, `k̃ᵢ(x) = kᵢ(−x)`.
    pub fn reflected(&self) -> GameSpec {
        GameSpec {
            players: self.players,
            h: self.h.iter().map(CostFunction::reflected).collect(),
            k: self.k.iter().map(CostFunction::reflected).collect(),
            c_bound: self.c_bound,
            half_width: self.half_width,
        }
    }

    /// True when every weight is within `tol` of 1 on the working grid.
    pub fn has_unit_weights(&self, tol: f64) -> bool {
        let grid = self.window_grid(ASSUMPTION_GRID_DENSITY);
        self.k
            .iter()
            .all(|k| grid.iter().all(|&x| (k.value(x) - 1.0).abs() <= tol))
    }
}

/// A uniform grid on `[a, b]` with `points_per_unit` points per unit length
/// (at least two points, endpoints included).
pub fn uniform_grid(a: f64, b: f64, points_per_unit: usize) -> Vec<f64> {
    debug_assert!(b > a);
    let n = (((b - a) * points_per_unit as f64).ceil() as usize).max(1);
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

/// One violated assumption, aggregated over the scan grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    /// Which bound failed, e.g. `"k below 1/C"`.
    pub assumption: String,
    /// Player index (0-based).
    pub player: usize,
    /// First grid point where the bound failed.
    pub witness_x: f64,
    /// Grid point with the worst excess.
    pub worst_x: f64,
    /// Offending quantity value at `worst_x`.
    pub worst_value: f64,
    /// The bound that was violated, as a number.
    pub bound: f64,
    /// How many grid points violated this assumption.
    pub count: usize,
}

/// Outcome of [`validate_game`]: empty iff all standing assumptions hold on
/// the scan grid.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Number of grid points scanned.
    pub grid_points: usize,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "all assumptions hold on {} grid points", self.grid_points);
        }
        writeln!(f, "{} violated assumption(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(
                f,
                "  player {}: {} — first at x = {:.6}, worst {} = {:.6} at x = {:.6} (bound {:.6}, {} grid points)",
                v.player + 1,
                v.assumption,
                v.witness_x,
                v.assumption.split_whitespace().next().unwrap_or("value"),
                v.worst_value,
                v.worst_x,
                v.bound,
                v.count
            )?;
        }
        Ok(())
    }
}

/// Checks the standing assumptions `1/C ≤ kᵢ(x) ≤ C` and `|hᵢ′(x)| ≤ C` on
/// a dense grid over `[−10L, 10L]`. Non-finite cost evaluations are a hard
/// error naming the offending x; bound violations are collected in the
/// report with witnesses.
pub fn validate_game(spec: &GameSpec) -> Result<ValidationReport, ModelError> {
    let grid = spec.assumption_grid();
    let mut report = ValidationReport {
        violations: Vec::new(),
        grid_points: grid.len(),
    };
    let record = |assumption: &str, player: usize, x: f64, value: f64, bound: f64, report: &mut ValidationReport| {
        if let Some(v) = report
            .violations
            .iter_mut()
            .find(|v| v.assumption == assumption && v.player == player)
        {
            v.count += 1;
            let excess_new = (value - bound).abs();
            let excess_old = (v.worst_value - v.bound).abs();
            if excess_new > excess_old {
                v.worst_x = x;
                v.worst_value = value;
            }
        } else {
            report.violations.push(Violation {
                assumption: assumption.to_string(),
                player,
                witness_x: x,
                worst_x: x,
                worst_value: value,
                bound,
                count: 1,
            });
        }
    };

    let c = spec.c_bound;
    for &x in &grid {
        for i in 0..spec.players {
            let hv = spec.h[i].value(x);
            let hd = spec.h[i].derivative(x);
            let kv = spec.k[i].value(x);
            if !hv.is_finite() || !hd.is_finite() {
                return Err(ModelError::NonFinite { player: i, quantity: "running cost h", x });
            }
            if !kv.is_finite() {
                return Err(ModelError::NonFinite { player: i, quantity: "weight k", x });
            }
            if kv < 1.0 / c {
                record("k below 1/C", i, x, kv, 1.0 / c, &mut report);
            }
            if kv > c {
                record("k above C", i, x, kv, c, &mut report);
            }
            if hd.abs() > c {
                record("|h'| above C", i, x, hd, c, &mut report);
            }
        }
    }
    Ok(report)
}

/// Structural regime of a validated two-player game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum Regime {
    /// `1/C ≤ hᵢ′(x) ≤ C` for both players on the scan grid.
    CooperativeIncreasing,
    /// `−C ≤ hᵢ′(x) ≤ −1/C` for both players on the scan grid.
    CooperativeDecreasing,
    /// `|hᵢ′(x) − κᵢ| ≤ δ` with `κ₁ < 0 < κ₂`, `κ₁ + κ₂ ≠ 0`; κᵢ is the grid
    /// mean of hᵢ′ and δ the maximal deviation from it.
    Conflicting { kappa1: f64, kappa2: f64, delta: f64 },
    /// Exactly `h₁ = −κx`, `h₂ = +κx` with κ > 0.
    LinearExample { kappa: f64 },
    /// Anything else.
    General,
}

/// Classifies a validated game by the grid statistics of its cost slopes.
/// The exact-linear tag is decided structurally; the others use grid
/// min/mean/max of `hᵢ′` on the assumption grid.
pub fn classify_regime(spec: &GameSpec) -> Regime {
    // Exact structural check for the antisymmetric linear example.
    if spec.players == 2 {
        if let (
            CostFunction::Linear { kappa: k1, offset: o1 },
            CostFunction::Linear { kappa: k2, offset: o2 },
        ) = (&spec.h[0], &spec.h[1])
        {
            if *o1 == 0.0 && *o2 == 0.0 && *k1 == -*k2 && *k2 > 0.0 {
                return Regime::LinearExample { kappa: *k2 };
            }
        }
    }

    let grid = spec.assumption_grid();
    let mut mins = vec![f64::INFINITY; spec.players];
    let mut maxs = vec![f64::NEG_INFINITY; spec.players];
    let mut means = vec![0.0; spec.players];
    for &x in &grid {
        for i in 0..spec.players {
            let d = spec.h[i].derivative(x);
            mins[i] = mins[i].min(d);
            maxs[i] = maxs[i].max(d);
            means[i] += d;
        }
    }
    for m in &mut means {
        *m /= grid.len() as f64;
    }

    let c = spec.c_bound;
    let all_increasing = (0..spec.players).all(|i| mins[i] >= 1.0 / c && maxs[i] <= c);
    if all_increasing {
        return Regime::CooperativeIncreasing;
    }
    let all_decreasing = (0..spec.players).all(|i| maxs[i] <= -1.0 / c && mins[i] >= -c);
    if all_decreasing {
        return Regime::CooperativeDecreasing;
    }

    if spec.players == 2 {
        let (kappa1, kappa2) = (means[0], means[1]);
        let scale = kappa1.abs() + kappa2.abs();
        if kappa1 < 0.0 && kappa2 > 0.0 && (kappa1 + kappa2).abs() > 1e-9 * scale.max(1.0) {
            let delta = (0..2)
                .map(|i| (maxs[i] - means[i]).abs().max((means[i] - mins[i]).abs()))
                .fold(0.0_f64, f64::max);
            return Regime::Conflicting { kappa1, kappa2, delta };
        }
    }
    Regime::General
}
