//! Interpolation primitives shared across the crate: natural cubic splines
//! (tabulated cost functions), piecewise-linear interpolation (gradients,
//! DP value functions), and cubic Hermite evaluation (value functions with
//! known derivatives).

/// Natural cubic spline through `(xs[i], ys[i])` with linear extension
/// beyond the table (the end slopes continue, so the first derivative stays
/// bounded globally).
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots (natural: zero at both ends).
    m: Vec<f64>,
}

impl CubicSpline {
    /// Builds the spline. Requires at least two strictly increasing knots.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, String> {
        if xs.len() != ys.len() {
            return Err(format!(
                "knot/value length mismatch: {} vs {}",
                xs.len(),
                ys.len()
            ));
        }
        if xs.len() < 2 {
            return Err("need at least two knots".to_string());
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err("knots must be strictly increasing".to_string());
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err("knots and values must be finite".to_string());
        }
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Solve the tridiagonal system for interior second derivatives
            // (Thomas algorithm); natural boundary conditions m[0] = m[n-1] = 0.
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h_l = xs[i] - xs[i - 1];
                let h_r = xs[i + 1] - xs[i];
                diag[i] = 2.0 * (h_l + h_r);
                upper[i] = h_r;
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h_r - (ys[i] - ys[i - 1]) / h_l);
            }
            // Forward sweep over the interior block 1..n-1; the lower
            // coefficient of row i is h_l = xs[i] - xs[i-1].
            for i in 2..n - 1 {
                let h_l = xs[i] - xs[i - 1];
                let w = h_l / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Ok(Self { xs, ys, m })
    }

    fn segment(&self, x: f64) -> usize {
        // Index i with xs[i] <= x < xs[i+1], clamped to the table.
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    /// Spline value; linear extension with the boundary slope outside the table.
    pub fn value(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.ys[0] + self.derivative(self.xs[0]) * (x - self.xs[0]);
        }
        if x > self.xs[n - 1] {
            return self.ys[n - 1] + self.derivative(self.xs[n - 1]) * (x - self.xs[n - 1]);
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// Spline first derivative; constant outside the table.
    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let xc = x.clamp(self.xs[0], self.xs[n - 1]);
        let i = self.segment(xc);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - xc) / h;
        let b = (xc - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }
}

/// Piecewise-linear interpolation on a strictly increasing grid, with linear
/// extrapolation using the boundary segment's slope.
pub fn linear_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(xs.len() >= 2);
    let n = xs.len();
    let i = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => return ys[i],
        Err(0) => 0,
        Err(i) if i >= n => n - 2,
        Err(i) => i - 1,
    };
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Cubic Hermite interpolation on a strictly increasing grid with known
/// values and first derivatives at the nodes; linear extrapolation outside.
pub fn hermite_eval(xs: &[f64], ys: &[f64], dys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert_eq!(xs.len(), dys.len());
    let n = xs.len();
    if x <= xs[0] {
        return ys[0] + dys[0] * (x - xs[0]);
    }
    if x >= xs[n - 1] {
        return ys[n - 1] + dys[n - 1] * (x - xs[n - 1]);
    }
    let i = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => return ys[i],
        Err(i) => i - 1,
    };
    let h = xs[i + 1] - xs[i];
    let t = (x - xs[i]) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * ys[i] + h10 * h * dys[i] + h01 * ys[i + 1] + h11 * h * dys[i + 1]
}
