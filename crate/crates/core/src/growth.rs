//! Single-cell growth: the flow of x' = g(x), daughter-size maps, the
//! cycle-age map, and the Frobenius-Perron change of variables between
//! mother and daughter initial-size densities.

use crate::cycle::CycleModel;
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

/// Growth velocity field on the size window, together with the newborn-size
/// window `[x_lo, x_hi]`. The field itself is defined on `[x_lo, 2*x_hi]`.
#[derive(Debug, Clone)]
pub struct GrowthLaw {
    kind: GrowthKind,
    x_lo: f64,
    x_hi: f64,
}

#[derive(Debug, Clone)]
pub enum GrowthKind {
    /// g(x) = kappa * x
    Exponential { kappa: f64 },
    /// g(x) = kappa * x + beta
    Affine { kappa: f64, beta: f64 },
    /// Monotone cubic interpolation of positive samples.
    Tabulated(MonotoneCubic),
}

impl GrowthLaw {
    pub fn exponential(kappa: f64, x_lo: f64, x_hi: f64) -> Result<Self> {
        let law = Self {
            kind: GrowthKind::Exponential { kappa },
            x_lo,
            x_hi,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn affine(kappa: f64, beta: f64, x_lo: f64, x_hi: f64) -> Result<Self> {
        let law = Self {
            kind: GrowthKind::Affine { kappa, beta },
            x_lo,
            x_hi,
        };
        law.validate()?;
        Ok(law)
    }

    /// Tabulated law from samples covering `[x_lo, 2*x_hi]`. Values must be
    /// strictly positive at the nodes; the monotone interpolant then stays
    /// positive between them.
    pub fn tabulated(xs: Vec<f64>, gs: Vec<f64>, x_lo: f64, x_hi: f64) -> Result<Self> {
        if xs.len() < 2 || xs.len() != gs.len() {
            return Err(Error::InvalidModel("tabulated growth law needs matching samples".into()));
        }
        if xs[0] > x_lo || *xs.last().unwrap() < 2.0 * x_hi {
            return Err(Error::InvalidModel(format!(
                "tabulated samples [{}, {}] do not cover [{}, {}]",
                xs[0],
                xs.last().unwrap(),
                x_lo,
                2.0 * x_hi
            )));
        }
        for (&x, &g) in xs.iter().zip(&gs) {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::NonPositiveG { x, g });
            }
        }
        let law = Self {
            kind: GrowthKind::Tabulated(MonotoneCubic::new(xs, gs)),
            x_lo,
            x_hi,
        };
        law.validate()?;
        Ok(law)
    }

    /// Sample a closure on a uniform grid over `[x_lo, 2*x_hi]`.
    pub fn tabulated_from_fn<F: Fn(f64) -> f64>(
        f: F,
        x_lo: f64,
        x_hi: f64,
        n: usize,
    ) -> Result<Self> {
        let n = n.max(8);
        let hi = 2.0 * x_hi;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    x_lo + (hi - x_lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        let gs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        Self::tabulated(xs, gs, x_lo, x_hi)
    }

    /// The same growth field with a different newborn window. Tabulated
    /// samples must already cover the new domain; flows are bit-identical to
    /// the original law's, which matters when a window is derived from them.
    pub fn with_window(&self, x_lo: f64, x_hi: f64) -> Result<Self> {
        if let GrowthKind::Tabulated(c) = &self.kind {
            if c.xs()[0] > x_lo || *c.xs().last().unwrap() < 2.0 * x_hi {
                return Err(Error::InvalidModel(format!(
                    "tabulated samples do not cover the new window [{x_lo}, {}]",
                    2.0 * x_hi
                )));
            }
        }
        let law = Self {
            kind: self.kind.clone(),
            x_lo,
            x_hi,
        };
        law.validate()?;
        Ok(law)
    }

    fn validate(&self) -> Result<()> {
        if !(self.x_lo.is_finite() && self.x_hi.is_finite()) || self.x_lo <= 0.0 || self.x_lo >= self.x_hi {
            return Err(Error::InvalidModel(format!(
                "newborn window must satisfy 0 < x_lo < x_hi, got [{}, {}]",
                self.x_lo, self.x_hi
            )));
        }
        // g must be positive across the whole domain; endpoints suffice for
        // the monotone closed forms, nodes were checked for tabulated laws.
        for x in [self.x_lo, 2.0 * self.x_hi] {
            let g = self.g(x);
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::NonPositiveG { x, g });
            }
        }
        Ok(())
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn kind(&self) -> &GrowthKind {
        &self.kind
    }

    /// Absolute slack allowed outside the domain before a DomainExit:
    /// quadrature nodes may land on the boundary up to rounding.
    pub fn domain_tol(&self) -> f64 {
        1e-9 * self.x_hi
    }

    /// Growth velocity g(x).
    pub fn g(&self, x: f64) -> f64 {
        match &self.kind {
            GrowthKind::Exponential { kappa } => kappa * x,
            GrowthKind::Affine { kappa, beta } => kappa * x + beta,
            GrowthKind::Tabulated(c) => c.eval(x),
        }
    }

    fn check_in_domain(&self, x: f64, span: f64) -> Result<f64> {
        let tol = self.domain_tol();
        if x < self.x_lo - tol || x > 2.0 * self.x_hi + tol {
            return Err(Error::DomainExit { x, span });
        }
        Ok(x.clamp(self.x_lo, 2.0 * self.x_hi))
    }

    /// Flow map pi_a(x): the solution of x' = g(x), x(0) = x, at age a.
    /// Negative a gives the backward flow. Since g > 0 the trajectory is the
    /// interval between x and the result, so checking both ends suffices.
    pub fn flow(&self, x: f64, a: f64) -> Result<f64> {
        self.check_in_domain(x, a)?;
        let out = match &self.kind {
            GrowthKind::Exponential { kappa } => x * (kappa * a).exp(),
            GrowthKind::Affine { kappa, beta } => {
                if *kappa == 0.0 {
                    x + beta * a
                } else {
                    let c = beta / kappa;
                    (x + c) * (kappa * a).exp() - c
                }
            }
            GrowthKind::Tabulated(c) => self.flow_ode(c, x, a)?,
        };
        self.check_in_domain(out, a)
    }

    /// Adaptive Cash-Karp RK45 for tabulated laws. The per-step tolerance
    /// sits far below the documented 1e-10 contract so that accumulated
    /// error stays an order of magnitude inside the domain-clamp slack even
    /// for flows that end exactly on the boundary.
    fn flow_ode(&self, c: &MonotoneCubic, x0: f64, a: f64) -> Result<f64> {
        if a == 0.0 {
            return Ok(x0);
        }
        let atol = 3e-14 * self.x_hi.max(1.0);
        let lo = self.x_lo - self.domain_tol();
        let hi = 2.0 * self.x_hi + self.domain_tol();
        let dir = a.signum();
        let mut t = 0.0;
        let mut x = x0;
        let mut h = a / 8.0;
        let mut steps = 0usize;
        while (a - t) * dir > 1e-15 * a.abs() {
            if (t + h - a) * dir > 0.0 {
                h = a - t;
            }
            let f = |y: f64| c.eval(y);
            let k1 = f(x);
            let k2 = f(x + h * (0.2 * k1));
            let k3 = f(x + h * (0.075 * k1 + 0.225 * k2));
            let k4 = f(x + h * (0.3 * k1 - 0.9 * k2 + 1.2 * k3));
            let k5 = f(x + h * (-11.0 / 54.0 * k1 + 2.5 * k2 - 70.0 / 27.0 * k3 + 35.0 / 27.0 * k4));
            let k6 = f(x
                + h * (1631.0 / 55296.0 * k1
                    + 175.0 / 512.0 * k2
                    + 575.0 / 13824.0 * k3
                    + 44275.0 / 110592.0 * k4
                    + 253.0 / 4096.0 * k5));
            let x5 = x + h * (37.0 / 378.0 * k1 + 250.0 / 621.0 * k3 + 125.0 / 594.0 * k4 + 512.0 / 1771.0 * k6);
            let x4 = x + h
                * (2825.0 / 27648.0 * k1
                    + 18575.0 / 48384.0 * k3
                    + 13525.0 / 55296.0 * k4
                    + 277.0 / 14336.0 * k5
                    + 0.25 * k6);
            let err = (x5 - x4).abs();
            if err <= atol || h.abs() < 1e-14 * a.abs() {
                t += h;
                x = x5;
                if x < lo || x > hi {
                    return Err(Error::DomainExit { x, span: a });
                }
                let g = c.eval(x);
                if !(g > 0.0) {
                    return Err(Error::NonPositiveG { x, g });
                }
            }
            let scale = if err > 0.0 {
                0.9 * (atol / err).powf(0.2)
            } else {
                5.0
            };
            h *= scale.clamp(0.2, 5.0);
            steps += 1;
            if steps > 100_000 {
                return Err(Error::DomainExit { x, span: a });
            }
        }
        Ok(x)
    }

    /// Daughter initial size S_a(x_b) = pi_a(x_b) / 2.
    pub fn daughter_size(&self, x_b: f64, a: f64) -> Result<f64> {
        Ok(0.5 * self.flow(x_b, a)?)
    }

    /// Cycle age a(y; x_b) = integral of 1/g over [x_b, 2y]: the cycle length
    /// for which a mother of initial size x_b yields daughters of initial
    /// size y. Negative when 2y < x_b (signed, for kernel support tests).
    pub fn cycle_age(&self, y: f64, x_b: f64) -> Result<f64> {
        let span = 2.0 * y - x_b;
        self.check_in_domain(x_b, span)?;
        self.check_in_domain(2.0 * y, span)?;
        match &self.kind {
            GrowthKind::Exponential { kappa } => Ok((2.0 * y / x_b).ln() / kappa),
            GrowthKind::Affine { kappa, beta } => {
                if *kappa == 0.0 {
                    Ok((2.0 * y - x_b) / beta)
                } else {
                    Ok(((kappa * 2.0 * y + beta) / (kappa * x_b + beta)).ln() / kappa)
                }
            }
            GrowthKind::Tabulated(c) => Ok(self.age_integral(c, x_b, 2.0 * y)),
        }
    }

    /// Integral of 1/g over [from, to] by the same adaptive RK45 scheme the
    /// flow uses, applied to a'(x) = 1/g(x).
    fn age_integral(&self, c: &MonotoneCubic, from: f64, to: f64) -> f64 {
        if from == to {
            return 0.0;
        }
        let atol = 1e-13;
        let mut x = from;
        let mut acc = 0.0;
        let mut h = (to - from) / 8.0;
        let dir = (to - from).signum();
        let mut steps = 0usize;
        while (to - x) * dir > 1e-15 * (to - from).abs() {
            if (x + h - to) * dir > 0.0 {
                h = to - x;
            }
            let f = |u: f64| 1.0 / c.eval(u);
            let k1 = f(x);
            let k2 = f(x + 0.2 * h);
            let k3 = f(x + 0.3 * h);
            let k4 = f(x + 0.6 * h);
            let k5 = f(x + h);
            let k6 = f(x + 0.875 * h);
            let _ = k2;
            let a5 = h * (37.0 / 378.0 * k1 + 250.0 / 621.0 * k3 + 125.0 / 594.0 * k4 + 512.0 / 1771.0 * k6);
            let a4 = h
                * (2825.0 / 27648.0 * k1
                    + 18575.0 / 48384.0 * k3
                    + 13525.0 / 55296.0 * k4
                    + 277.0 / 14336.0 * k5
                    + 0.25 * k6);
            let err = (a5 - a4).abs();
            if err <= atol || h.abs() < 1e-14 * (to - from).abs() {
                x += h;
                acc += a5;
            }
            let scale = if err > 0.0 {
                0.9 * (atol / err).powf(0.2)
            } else {
                5.0
            };
            h *= scale.clamp(0.2, 5.0);
            steps += 1;
            if steps > 100_000 {
                break;
            }
        }
        acc
    }

    /// d/dx_b of the inverse daughter map: 2 g(pi_{-a}(2 x_b)) / g(2 x_b).
    /// Equals 2 exactly at a = 0.
    pub fn jacobian_factor(&self, x_b: f64, a: f64) -> Result<f64> {
        let y = self.flow(2.0 * x_b, -a)?;
        Ok(2.0 * self.g(y) / self.g(2.0 * x_b))
    }

    /// Minimum initial size of cells that can split at age a:
    /// x_lo itself if S_a(x_lo) >= x_lo, otherwise the preimage of x_lo.
    pub fn min_split_size(&self, a: f64) -> Result<f64> {
        let s = self.daughter_size(self.x_lo, a)?;
        if s >= self.x_lo {
            Ok(self.x_lo)
        } else {
            self.flow(2.0 * self.x_lo, -a)
        }
    }
}

/// The Frobenius-Perron operator P_a applied to a grid function f on the
/// newborn window: pushes a density of mother initial sizes (with cycle
/// length exactly a) forward to the density of daughter initial sizes.
///
/// Positive, never mass-increasing; identically zero (BadAge) when a lies
/// outside the global cycle-length support of `cycle`.
pub fn perron_apply(
    law: &GrowthLaw,
    cycle: &CycleModel,
    nodes: &[f64],
    f: &[f64],
    a: f64,
) -> Result<Vec<f64>> {
    assert_eq!(nodes.len(), f.len());
    if let Some(&bad) = f.iter().find(|v| **v < 0.0) {
        return Err(Error::NegativeInput(format!("perron_apply input has {bad}")));
    }
    let (a_lo, a_hi) = cycle.global_support();
    if a <= a_lo || a >= a_hi {
        return Err(Error::BadAge { a });
    }
    let x_a = law.min_split_size(a)?;
    let support_lo = law.daughter_size(x_a, a)?;
    let interp = MonotoneCubic::new(nodes.to_vec(), f.to_vec());
    let tol = law.domain_tol();
    let mut out = vec![0.0; nodes.len()];
    for (i, &x) in nodes.iter().enumerate() {
        if x < support_lo - tol || x > law.x_hi() + tol {
            continue;
        }
        let y = law.flow(2.0 * x, -a)?;
        if y < law.x_lo() - tol || y > law.x_hi() + tol {
            continue; // f is extended by zero outside the newborn window
        }
        let jac = 2.0 * law.g(y) / law.g(2.0 * x);
        out[i] = (jac * interp.eval(y.clamp(law.x_lo(), law.x_hi()))).max(0.0);
    }
    Ok(out)
}
