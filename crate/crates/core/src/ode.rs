//! Adaptive Dormand–Prince 5(4) integration with a continuous (dense)
//! extension and event localization.
//!
//! The embedded pair controls the local error against `atol + rtol·|y|`;
//! accepted steps keep a fourth-order interpolant so solutions can be
//! sampled at arbitrary points and event crossings can be located by
//! bisection without re-integration. Integration runs forward or backward
//! depending on the ordering of the time span.

/// Tolerances and limits for one integration.
#[derive(Debug, Clone)]
pub struct OdeOptions {
    /// Relative tolerance per component.
    pub rtol: f64,
    /// Absolute tolerance per component.
    pub atol: f64,
    /// Initial step size (chosen automatically when `None`).
    pub h_init: Option<f64>,
    /// Upper bound on the step magnitude (defaults to the span length).
    pub h_max: Option<f64>,
    /// Hard cap on accepted+rejected steps.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: None,
            h_max: None,
            max_steps: 2_000_000,
        }
    }
}

/// In-place right-hand side `f(t, y, dy)`.
pub type RhsMut<'a> = dyn FnMut(f64, &[f64], &mut [f64]) + 'a;

/// Scalar event function `g(t, y)` whose zero crossings are localized.
pub type EventFn<'a> = Box<dyn Fn(f64, &[f64]) -> f64 + 'a>;

/// Early-termination predicate checked after every accepted step.
pub type StopFn<'a> = dyn FnMut(f64, &[f64]) -> bool + 'a;

/// Which sign changes of an event function count as a crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingDirection {
    /// Negative to non-negative.
    Up,
    /// Positive to non-positive.
    Down,
    /// Any sign change.
    Any,
}

/// A terminal event: integration stops where `f` crosses zero in the given
/// direction. A crossing is only armed once `f` has been observed nonzero,
/// so starting exactly on the zero set does not fire immediately.
pub struct Event<'a> {
    pub f: EventFn<'a>,
    pub direction: CrossingDirection,
}

impl<'a> Event<'a> {
    pub fn new(direction: CrossingDirection, f: impl Fn(f64, &[f64]) -> f64 + 'a) -> Self {
        Event { f: Box::new(f), direction }
    }
}

/// Why the integration stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum OdeTermination {
    /// Reached the end of the requested span.
    ReachedEnd,
    /// Event `index` crossed zero at the final recorded time.
    Event { index: usize },
    /// The caller's stop predicate returned true at the final sample.
    Stopped,
}

#[derive(Debug, thiserror::Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (|h| = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64, y: Vec<f64> },
    #[error("step budget exhausted after {steps} steps at t = {t}")]
    MaxSteps { t: f64, steps: usize, y: Vec<f64> },
}

/// One accepted step's interpolant: evaluate with the Horner-style scheme
/// at `θ = (t − t0)/h ∈ [0, 1]`.
#[derive(Debug, Clone)]
struct DenseSegment {
    t0: f64,
    h: f64,
    r1: Vec<f64>,
    r2: Vec<f64>,
    r3: Vec<f64>,
    r4: Vec<f64>,
    r5: Vec<f64>,
}

impl DenseSegment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.r1[i]
                + theta
                    * (self.r2[i]
                        + theta1 * (self.r3[i] + theta * (self.r4[i] + theta1 * self.r5[i])));
        }
    }
}

/// Accepted samples plus the continuous extension.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub termination: OdeTermination,
    dense: Vec<DenseSegment>,
}

impl OdeSolution {
    pub fn dim(&self) -> usize {
        self.ys[0].len()
    }

    pub fn last_t(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn last_y(&self) -> &[f64] {
        self.ys.last().unwrap()
    }

    /// Evaluates the continuous extension at `t` (clamped to the covered span).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.dense.is_empty() {
            out.copy_from_slice(&self.ys[0]);
            return;
        }
        let seg = self.find_segment(t);
        seg.eval_into(t, out);
    }

    fn find_segment(&self, t: f64) -> &DenseSegment {
        let forward = self.dense[0].h > 0.0;
        let mut lo = 0usize;
        let mut hi = self.dense.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            let seg = &self.dense[mid];
            let t_end = seg.t0 + seg.h;
            let past = if forward { t > t_end } else { t < t_end };
            if past {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        &self.dense[lo]
    }
}

// Dormand–Prince 5(4) coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Error coefficients: fifth-order weights minus the embedded fourth-order ones.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
/// Bisection iterations when localizing an event inside a step.
const EVENT_BISECTIONS: usize = 80;

struct Stepper<'f> {
    f: &'f mut RhsMut<'f>,
    n: usize,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
}

impl<'f> Stepper<'f> {
    fn new(f: &'f mut RhsMut<'f>, n: usize) -> Self {
        Stepper {
            f,
            n,
            k: std::array::from_fn(|_| vec![0.0; n]),
            y_stage: vec![0.0; n],
        }
    }

    /// One trial step from `(t, y)` with step `h`; `k[0]` must hold `f(t, y)`.
    /// Returns `(y_new, err_norm)`; fills `k[1..7]` (`k[6]` = derivative at the
    /// new point, reusable as `k[0]` on acceptance).
    fn try_step(&mut self, t: f64, y: &[f64], h: f64, rtol: f64, atol: f64) -> (Vec<f64>, f64) {
        let n = self.n;
        macro_rules! stage {
            ($c:expr, $idx:expr, $($coef:expr => $kj:expr),+) => {{
                for i in 0..n {
                    let mut acc = 0.0;
                    $(acc += $coef * self.k[$kj][i];)+
                    self.y_stage[i] = y[i] + h * acc;
                }
                let (pre, post) = self.k.split_at_mut($idx);
                let _ = pre;
                (self.f)(t + $c * h, &self.y_stage, &mut post[0]);
            }};
        }
        stage!(1.0 / 5.0, 1, A21 => 0);
        stage!(3.0 / 10.0, 2, A31 => 0, A32 => 1);
        stage!(4.0 / 5.0, 3, A41 => 0, A42 => 1, A43 => 2);
        stage!(8.0 / 9.0, 4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(1.0, 5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);

        let mut y_new = vec![0.0; n];
        for i in 0..n {
            y_new[i] = y[i]
                + h * (B1 * self.k[0][i]
                    + B3 * self.k[2][i]
                    + B4 * self.k[3][i]
                    + B5 * self.k[4][i]
                    + B6 * self.k[5][i]);
        }
        (self.f)(t + h, &y_new, &mut self.k[6]);

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        (y_new, (err / n as f64).sqrt())
    }

    fn dense_segment(&self, t: f64, h: f64, y: &[f64], y_new: &[f64]) -> DenseSegment {
        let n = self.n;
        let mut r1 = vec![0.0; n];
        let mut r2 = vec![0.0; n];
        let mut r3 = vec![0.0; n];
        let mut r4 = vec![0.0; n];
        let mut r5 = vec![0.0; n];
        for i in 0..n {
            let ydiff = y_new[i] - y[i];
            let bspl = h * self.k[0][i] - ydiff;
            r1[i] = y[i];
            r2[i] = ydiff;
            r3[i] = bspl;
            r4[i] = ydiff - h * self.k[6][i] - bspl;
            r5[i] = h
                * (D1 * self.k[0][i]
                    + D3 * self.k[2][i]
                    + D4 * self.k[3][i]
                    + D5 * self.k[4][i]
                    + D6 * self.k[5][i]
                    + D7 * self.k[6][i]);
        }
        DenseSegment { t0: t, h, r1, r2, r3, r4, r5 }
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step(
    f: &mut RhsMut<'_>,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    span: f64,
    rtol: f64,
    atol: f64,
) -> f64 {
    let n = y0.len();
    let sc = |y: &[f64], i: usize| atol + rtol * y[i].abs();
    let d0 = (y0.iter().enumerate().map(|(i, v)| (v / sc(y0, i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / sc(y0, i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    // One explicit Euler step to probe the second derivative.
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, k)| y + dir * h0 * k).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + dir * h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .enumerate()
        .map(|(i, (a, b))| ((a - b) / sc(y0, i)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let max_d = d1.max(d2);
    let h1 = if max_d <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / max_d).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates `y′ = f(t, y)` from `t_span.0` to `t_span.1` (backward when
/// `t_span.1 < t_span.0`). Stops early at the first event crossing or when
/// `stop` returns true at an accepted step.
pub fn integrate(
    mut f: impl FnMut(f64, &[f64], &mut [f64]),
    t_span: (f64, f64),
    y0: &[f64],
    opts: &OdeOptions,
    events: &[Event<'_>],
    mut stop: Option<&mut StopFn<'_>>,
) -> Result<OdeSolution, OdeError> {
    let (t0, t_end) = t_span;
    let n = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    assert!(span > 0.0, "empty integration span");

    let mut stepper = Stepper::new(&mut f, n);
    let mut t = t0;
    let mut y = y0.to_vec();
    (stepper.f)(t, &y, &mut stepper.k[0]);

    let h_max = opts.h_max.unwrap_or(span).abs();
    let mut h = opts
        .h_init
        .map(f64::abs)
        .unwrap_or_else(|| {
            let f0 = stepper.k[0].clone();
            initial_step(stepper.f, t, &y, &f0, dir, span, opts.rtol, opts.atol)
        })
        .min(h_max)
        .max(f64::MIN_POSITIVE);

    let mut sol = OdeSolution {
        ts: vec![t],
        ys: vec![y.clone()],
        termination: OdeTermination::ReachedEnd,
        dense: Vec::new(),
    };

    // Event bookkeeping: last observed value and whether it has been armed
    // (seen nonzero since the start).
    let mut ev_val: Vec<f64> = events.iter().map(|e| (e.f)(t, &y)).collect();
    let mut ev_armed: Vec<bool> = ev_val.iter().map(|v| *v != 0.0).collect();

    if let Some(cb) = stop.as_deref_mut() {
        if cb(t, &y) {
            sol.termination = OdeTermination::Stopped;
            return Ok(sol);
        }
    }

    let mut rejected_last = false;
    for _step in 0..opts.max_steps {
        let remaining = (t_end - t) * dir;
        if remaining <= 1e-14 * span {
            sol.termination = OdeTermination::ReachedEnd;
            return Ok(sol);
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepSizeUnderflow { t, h, y });
        }

        let (y_new, err) = stepper.try_step(t, &y, dir * h, opts.rtol, opts.atol);
        if !err.is_finite() {
            // Retreat hard from a nonsensical step.
            h *= 0.1;
            rejected_last = true;
            continue;
        }
        if err > 1.0 {
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            rejected_last = true;
            continue;
        }

        // Accepted.
        let seg = stepper.dense_segment(t, dir * h, &y, &y_new);
        let t_new = if last { t_end } else { t + dir * h };

        // Event check on this step.
        let mut fired: Option<(usize, f64)> = None;
        for (idx, ev) in events.iter().enumerate() {
            let v_new = (ev.f)(t_new, &y_new);
            let v_old = ev_val[idx];
            if ev_armed[idx] {
                let crossed = match ev.direction {
                    CrossingDirection::Up => v_old < 0.0 && v_new >= 0.0,
                    CrossingDirection::Down => v_old > 0.0 && v_new <= 0.0,
                    CrossingDirection::Any => (v_old < 0.0 && v_new >= 0.0) || (v_old > 0.0 && v_new <= 0.0),
                };
                if crossed {
                    // Localize by bisection on the dense interpolant.
                    let mut lo = t;
                    let mut hi = t_new;
                    let mut v_lo = v_old;
                    let mut buf = vec![0.0; n];
                    for _ in 0..EVENT_BISECTIONS {
                        let mid = 0.5 * (lo + hi);
                        seg.eval_into(mid, &mut buf);
                        let v_mid = (ev.f)(mid, &buf);
                        if (v_lo < 0.0) == (v_mid < 0.0) {
                            lo = mid;
                            v_lo = v_mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let t_star = 0.5 * (lo + hi);
                    match fired {
                        Some((_, prev)) if (prev - t) * dir <= (t_star - t) * dir => {}
                        _ => fired = Some((idx, t_star)),
                    }
                }
            }
            if v_new != 0.0 {
                ev_armed[idx] = true;
            }
            ev_val[idx] = v_new;
        }

        if let Some((idx, t_star)) = fired {
            let mut y_star = vec![0.0; n];
            seg.eval_into(t_star, &mut y_star);
            sol.ts.push(t_star);
            sol.ys.push(y_star);
            let mut seg = seg;
            seg.h = t_star - seg.t0;
            // Keep the interpolant but clip it to the event time.
            sol.dense.push(seg);
            sol.termination = OdeTermination::Event { index: idx };
            return Ok(sol);
        }

        t = t_new;
        y = y_new;
        stepper.k.swap(0, 6);
        sol.ts.push(t);
        sol.ys.push(y.clone());
        sol.dense.push(seg);

        if let Some(cb) = stop.as_deref_mut() {
            if cb(t, &y) {
                sol.termination = OdeTermination::Stopped;
                return Ok(sol);
            }
        }

        let fac_max = if rejected_last { 1.0 } else { FAC_MAX };
        let fac = if err == 0.0 {
            fac_max
        } else {
            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, fac_max)
        };
        h = (h * fac).min(h_max);
        rejected_last = false;
    }
    Err(OdeError::MaxSteps { t, steps: opts.max_steps, y })
}
