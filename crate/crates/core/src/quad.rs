//! Gauss-Legendre quadrature: single panels, composite rules, and the
//! node/weight grid used by the Nystrom discretization.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on the Legendre polynomial recurrence; nodes accurate to
/// machine precision for the orders used here (n <= 64).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Integrate `f` over [a, b] with a single n-point Gauss-Legendre panel.
pub fn gl_integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut f: F) -> f64 {
    if a == b {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Composite Gauss-Legendre: `panels` equal subintervals of [a, b], each with
/// an n-point rule.
pub fn composite_gl<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    panels: usize,
    n: usize,
    mut f: F,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(n);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            sum += w * f(mid + half * x);
        }
    }
    sum * 0.5 * h
}

/// Trapezoid rule on an arbitrary sorted abscissa/value table.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mut sum = 0.0;
    for i in 1..xs.len() {
        sum += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    sum
}

/// Composite Gauss-Legendre node/weight grid on an interval, used as the
/// collocation grid for the Nystrom method.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Composite grid with `panels` panels of `per_panel` Gauss-Legendre
    /// nodes each. Nodes are strictly increasing and interior to [lo, hi];
    /// weights sum to the interval length.
    pub fn composite(lo: f64, hi: f64, panels: usize, per_panel: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidModel(format!(
                "bad quadrature interval [{lo}, {hi}]"
            )));
        }
        if panels == 0 || per_panel == 0 {
            return Err(Error::InvalidModel("empty quadrature grid".into()));
        }
        let (base_nodes, base_weights) = gauss_legendre(per_panel);
        let h = (hi - lo) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let left = lo + p as f64 * h;
            let mid = left + 0.5 * h;
            for (x, w) in base_nodes.iter().zip(&base_weights) {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        Ok(Self {
            lo,
            hi,
            nodes,
            weights,
        })
    }

    /// Grid with roughly `n` total nodes split over panels of 32.
    pub fn with_nodes(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let per_panel = 32.min(n.max(1));
        let panels = n.div_ceil(per_panel).max(1);
        Self::composite(lo, hi, panels, per_panel)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted inner product sum_i w_i u_i v_i.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u)
            .zip(v)
            .map(|((w, a), b)| w * a * b)
            .sum()
    }

    /// Integral of a grid function: sum_i w_i f_i.
    pub fn integrate_values(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl_nodes_match_reference_values() {
        // Classical 5-point values.
        let (nodes, weights) = gauss_legendre(5);
        let expect_nodes = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        let expect_weights = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        for i in 0..5 {
            assert_relative_eq!(nodes[i], expect_nodes[i], epsilon = 1e-14);
            assert_relative_eq!(weights[i], expect_weights[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn gl_exact_for_polynomials() {
        // n-point rule is exact through degree 2n-1.
        let v = gl_integrate(0.0, 1.0, 8, |x| x.powi(15));
        assert_relative_eq!(v, 1.0 / 16.0, epsilon = 1e-14);
    }

    #[test]
    fn composite_integrates_smooth_function() {
        let v = composite_gl(0.0, std::f64::consts::PI, 8, 32, f64::sin);
        assert_relative_eq!(v, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn grid_weights_sum_to_length() {
        let g = QuadratureGrid::composite(0.8, 1.6, 8, 32).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert_relative_eq!(total, 0.8, epsilon = 1e-12);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes()[0] > 0.8 && *g.nodes().last().unwrap() < 1.6);
    }

    #[test]
    fn trapezoid_linear_exact() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert_relative_eq!(trapezoid(&xs, &ys), 2.5, epsilon = 1e-14);
    }
}
