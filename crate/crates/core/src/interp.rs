//! Monotone cubic (Fritsch-Carlson) interpolation.
//!
//! Used for tabulated growth laws, grid functions handed to the
//! Frobenius-Perron transfer, and inverse-CDF sampling. The interpolant never
//! overshoots the local data range, so positive data stay positive.

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Build from strictly increasing abscissae. Panics on malformed input;
    /// callers validate their tables first.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2, "need at least two samples");
        assert!(
            xs.windows(2).all(|w| w[0] < w[1]),
            "abscissae must be strictly increasing"
        );
        let slopes = fritsch_carlson_slopes(&xs, &ys);
        Self { xs, ys, slopes }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Index of the segment containing x (clamped to the end segments).
    pub fn segment(&self, x: f64) -> usize {
        match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).expect("non-NaN"))
        {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    /// Evaluate at x. Outside the table the end cubic segments extend; the
    /// extension is only ever exercised within rounding distance of the ends.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_on_segment(self.segment(x), x)
    }

    /// Evaluate at x when the bracketing segment is already known
    /// (precomputed hot paths in the transport step).
    pub fn eval_on_segment(&self, seg: usize, x: f64) -> f64 {
        let h = self.xs[seg + 1] - self.xs[seg];
        let t = (x - self.xs[seg]) / h;
        let (y0, y1) = (self.ys[seg], self.ys[seg + 1]);
        let (m0, m1) = (self.slopes[seg], self.slopes[seg + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
    }

    /// Derivative at x.
    pub fn deriv(&self, x: f64) -> f64 {
        let seg = self.segment(x);
        let h = self.xs[seg + 1] - self.xs[seg];
        let t = (x - self.xs[seg]) / h;
        let (y0, y1) = (self.ys[seg], self.ys[seg + 1]);
        let (m0, m1) = (self.slopes[seg], self.slopes[seg + 1]);
        let t2 = t * t;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t2 + 6.0 * t) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        dh00 * y0 + dh10 * m0 + dh01 * y1 + dh11 * m1
    }
}

/// Fritsch-Carlson limited slopes: the interpolant is monotone on every
/// segment where the data are monotone, and flat at interior extrema.
fn fritsch_carlson_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n - 1]; // secants
    for i in 0..n - 1 {
        d[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
    }
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            // Weighted harmonic mean keeps the scheme scale-invariant.
            let w1 = 2.0 * (xs[i + 1] - xs[i]) + (xs[i] - xs[i - 1]);
            let w2 = (xs[i + 1] - xs[i]) + 2.0 * (xs[i] - xs[i - 1]);
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    // Non-centered 3-point end slopes, limited so the end segments cannot
    // overshoot or change direction against the data.
    if n >= 3 {
        m[0] = edge_slope(xs[1] - xs[0], xs[2] - xs[1], d[0], d[1]);
        m[n - 1] = edge_slope(
            xs[n - 1] - xs[n - 2],
            xs[n - 2] - xs[n - 3],
            d[n - 2],
            d[n - 3],
        );
    }
    m
}

fn edge_slope(h1: f64, h2: f64, d1: f64, d2: f64) -> f64 {
    let m = ((2.0 * h1 + h2) * d1 - h1 * d2) / (h1 + h2);
    if m.signum() != d1.signum() && m != 0.0 {
        0.0
    } else if d1.signum() != d2.signum() && m.abs() > 3.0 * d1.abs() {
        3.0 * d1
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reproduces_nodes_exactly() {
        let xs = vec![0.0, 1.0, 2.5, 4.0];
        let ys = vec![1.0, 2.0, 0.5, 0.7];
        let c = MonotoneCubic::new(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert_relative_eq!(c.eval(*x), *y, epsilon = 1e-14);
        }
    }

    #[test]
    fn monotone_data_give_monotone_interpolant() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 0.7).tanh() + 0.01 * x).collect();
        let c = MonotoneCubic::new(xs, ys);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let x = 5.7 * k as f64 / 1000.0;
            let v = c.eval(x);
            assert!(v >= prev - 1e-12, "not monotone at x = {x}");
            prev = v;
        }
    }

    #[test]
    fn positive_data_stay_positive() {
        let xs = vec![0.0, 0.5, 1.0, 1.5, 2.0];
        let ys = vec![1.0, 0.01, 0.8, 0.02, 1.2];
        let c = MonotoneCubic::new(xs, ys);
        for k in 0..=2000 {
            let x = 2.0 * k as f64 / 2000.0;
            assert!(c.eval(x) > 0.0, "dipped non-positive at x = {x}");
        }
    }

    #[test]
    fn third_order_accuracy_on_smooth_data() {
        // The limited slopes cost one order against a true cubic spline:
        // expect O(h^3) convergence on smooth monotone data.
        let mut errors = Vec::new();
        for n in [100usize, 200, 400] {
            let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x).exp()).collect();
            let c = MonotoneCubic::new(xs, ys);
            let mut worst: f64 = 0.0;
            for k in 0..=999 {
                let x = k as f64 / 999.0;
                worst = worst.max((c.eval(x) - (2.0 * x).exp()).abs());
            }
            errors.push(worst);
        }
        assert!(errors[2] < 1e-6, "worst error {} at n = 400", errors[2]);
        let rate = (errors[0] / errors[2]).log2() / 2.0;
        assert!(rate > 2.5, "observed order {rate}");
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let xs: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin() + 2.0).collect();
        let c = MonotoneCubic::new(xs, ys);
        let h = 1e-6;
        for k in 1..50 {
            let x = 0.05 + k as f64 * 0.098;
            let fd = (c.eval(x + h) - c.eval(x - h)) / (2.0 * h);
            assert_relative_eq!(c.deriv(x), fd, epsilon = 1e-6, max_relative = 1e-6);
        }
    }
}
