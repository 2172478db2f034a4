//! Cycle-length densities q(x_b, a) and derived quantities: survival
//! function, 1/Phi weight, hazard rate, support bounds, inverse-CDF
//! sampling, and the random-growth-rate birth density.

use crate::density::Density1d;
use crate::error::{Error, Result};
use crate::growth::GrowthLaw;
use crate::quad::{composite_gl, trapezoid};

/// Division must occur strictly before the survival function reaches this.
const PHI_FLOOR: f64 = 1e-300;

/// Nodes per tabulated CDF used by `sample_tau` (spec: at least 512).
const TAU_CDF_NODES: usize = 513;

/// Distribution of the cell-cycle length, parametrized by the initial size.
#[derive(Debug, Clone)]
pub struct CycleModel {
    kind: CycleKind,
    x_lo: f64,
    x_hi: f64,
    /// min over the window of a_lo(x_b) and max of a_hi(x_b).
    support_hull: (f64, f64),
}

#[derive(Debug, Clone)]
pub enum CycleKind {
    /// Constant size-increment model on an exponentially growing cell:
    /// the division size is x_b + Delta with Delta ~ h, which induces
    /// q(x_b, a) = kappa x_b e^{kappa a} h(x_b e^{kappa a} - x_b).
    /// `delay` shifts the whole cycle (a differentiation period before the
    /// increment clock starts); zero for the plain model.
    ConstantDelta {
        kappa: f64,
        h: Density1d,
        delay: f64,
    },
    /// Target-size division: the cell aims for f(x_b) = 2 x_b^{1-alpha} x0^alpha
    /// and divides at age tau_0(x_b) + xi with a symmetric perturbation xi
    /// supported on [-eps, eps]. tau_0 is the travel time from x_b to f(x_b).
    TargetSize {
        alpha: f64,
        x0: f64,
        eps: f64,
        xi: Density1d,
        law: GrowthLaw,
    },
    /// Rectangular table of q values, bilinear between nodes.
    Tabulated(QTable),
}

impl CycleModel {
    pub fn constant_delta(kappa: f64, h: Density1d, x_lo: f64, x_hi: f64) -> Result<Self> {
        Self::constant_delta_delayed(kappa, h, 0.0, x_lo, x_hi)
    }

    pub fn constant_delta_delayed(
        kappa: f64,
        h: Density1d,
        delay: f64,
        x_lo: f64,
        x_hi: f64,
    ) -> Result<Self> {
        if kappa <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "constant-delta model needs kappa > 0, got {kappa}"
            )));
        }
        if h.lo() <= 0.0 {
            return Err(Error::InvalidModel(
                "size-increment support must be positive so that a_lo > 0".into(),
            ));
        }
        if delay < 0.0 {
            return Err(Error::InvalidModel(format!("delay must be nonnegative: {delay}")));
        }
        Self::finish(CycleKind::ConstantDelta { kappa, h, delay }, x_lo, x_hi)
    }

    pub fn target_size(
        alpha: f64,
        x0: f64,
        eps: f64,
        xi: Density1d,
        law: GrowthLaw,
        x_lo: f64,
        x_hi: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidModel(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if x0 <= 0.0 || eps <= 0.0 {
            return Err(Error::InvalidModel("target size and eps must be positive".into()));
        }
        if (xi.lo() - (-eps)).abs() > 1e-12 * eps || (xi.hi() - eps).abs() > 1e-12 * eps {
            return Err(Error::InvalidModel(
                "timing perturbation must be supported on [-eps, eps]".into(),
            ));
        }
        Self::finish(
            CycleKind::TargetSize {
                alpha,
                x0,
                eps,
                xi,
                law,
            },
            x_lo,
            x_hi,
        )
    }

    pub fn tabulated(table: QTable) -> Result<Self> {
        let (x_lo, x_hi) = (table.xs[0], *table.xs.last().unwrap());
        Self::finish(CycleKind::Tabulated(table), x_lo, x_hi)
    }

    fn finish(kind: CycleKind, x_lo: f64, x_hi: f64) -> Result<Self> {
        if !(x_lo.is_finite() && x_hi.is_finite()) || x_lo <= 0.0 || x_lo >= x_hi {
            return Err(Error::InvalidModel(format!(
                "newborn window must satisfy 0 < x_lo < x_hi, got [{x_lo}, {x_hi}]"
            )));
        }
        let mut model = Self {
            kind,
            x_lo,
            x_hi,
            support_hull: (f64::INFINITY, f64::NEG_INFINITY),
        };
        let n = 257;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let x = x_lo + (x_hi - x_lo) * i as f64 / (n - 1) as f64;
            lo = lo.min(model.a_lo(x)?);
            hi = hi.max(model.a_hi(x)?);
        }
        model.support_hull = (lo, hi);
        Ok(model)
    }

    pub fn kind(&self) -> &CycleKind {
        &self.kind
    }

    pub fn window(&self) -> (f64, f64) {
        (self.x_lo, self.x_hi)
    }

    fn window_tol(&self) -> f64 {
        1e-9 * self.x_hi
    }

    fn check_window(&self, x_b: f64) -> Result<f64> {
        if x_b < self.x_lo - self.window_tol() || x_b > self.x_hi + self.window_tol() {
            return Err(Error::OutOfWindow {
                x_b,
                lo: self.x_lo,
                hi: self.x_hi,
            });
        }
        Ok(x_b.clamp(self.x_lo, self.x_hi))
    }

    /// (min a_lo, max a_hi) over the whole newborn window.
    pub fn global_support(&self) -> (f64, f64) {
        self.support_hull
    }

    /// Travel time from x_b to the target size, for target-size models.
    pub fn time_to_target(&self, x_b: f64) -> Result<f64> {
        match &self.kind {
            CycleKind::TargetSize { alpha, x0, law, .. } => {
                let target = 2.0 * x_b.powf(1.0 - alpha) * x0.powf(*alpha);
                law.cycle_age(0.5 * target, x_b)
            }
            _ => Err(Error::InvalidModel("not a target-size model".into())),
        }
    }

    /// Lower support bound of the cycle length at initial size x_b.
    pub fn a_lo(&self, x_b: f64) -> Result<f64> {
        let x_b = self.check_window(x_b)?;
        match &self.kind {
            CycleKind::ConstantDelta { kappa, h, delay } => {
                Ok(((x_b + h.lo()) / x_b).ln() / kappa + delay)
            }
            CycleKind::TargetSize { eps, .. } => Ok(self.time_to_target(x_b)? - eps),
            CycleKind::Tabulated(t) => Ok(t.support_at(x_b).0),
        }
    }

    /// Upper support bound of the cycle length at initial size x_b.
    pub fn a_hi(&self, x_b: f64) -> Result<f64> {
        let x_b = self.check_window(x_b)?;
        match &self.kind {
            CycleKind::ConstantDelta { kappa, h, delay } => {
                Ok(((x_b + h.hi()) / x_b).ln() / kappa + delay)
            }
            CycleKind::TargetSize { eps, .. } => Ok(self.time_to_target(x_b)? + eps),
            CycleKind::Tabulated(t) => Ok(t.support_at(x_b).1),
        }
    }

    /// Cycle-length density q(x_b, a). Zero outside the support, including
    /// all a <= 0.
    pub fn density_q(&self, x_b: f64, a: f64) -> Result<f64> {
        let x_b = self.check_window(x_b)?;
        match &self.kind {
            CycleKind::ConstantDelta { kappa, h, delay } => {
                let a = a - delay;
                if a <= 0.0 {
                    return Ok(0.0);
                }
                let grown = x_b * (kappa * a).exp();
                Ok(kappa * grown * h.pdf(grown - x_b))
            }
            CycleKind::TargetSize { xi, .. } => {
                if a <= 0.0 {
                    return Ok(0.0);
                }
                let tau0 = self.time_to_target(x_b)?;
                Ok(xi.pdf(a - tau0))
            }
            CycleKind::Tabulated(t) => {
                if a <= 0.0 {
                    return Ok(0.0);
                }
                Ok(t.eval(x_b, a))
            }
        }
    }

    /// Survival function Phi(x_b, a): probability that a cell born at size
    /// x_b has not divided by age a. Exactly 1 below the support.
    pub fn survival_phi(&self, x_b: f64, a: f64) -> Result<f64> {
        let x_b = self.check_window(x_b)?;
        let (lo, hi) = (self.a_lo(x_b)?, self.a_hi(x_b)?);
        if a <= lo {
            return Ok(1.0);
        }
        if a >= hi {
            return Ok(0.0);
        }
        let phi = match &self.kind {
            CycleKind::Tabulated(t) => 1.0 - t.cdf(x_b, a),
            _ => composite_gl(a, hi, 8, 32, |s| {
                self.density_q(x_b, s).unwrap_or(0.0)
            }),
        };
        Ok(phi.clamp(0.0, 1.0))
    }

    /// Compensating weight Psi = 1/Phi. Diverges at the maximal age.
    pub fn weight_psi(&self, x_b: f64, a: f64) -> Result<f64> {
        let phi = self.survival_phi(x_b, a)?;
        if phi < PHI_FLOOR {
            return Err(Error::SurvivalZero { x_b, a });
        }
        Ok(1.0 / phi)
    }

    /// Hazard rate p = q / Phi; the instantaneous division rate at age a.
    pub fn hazard_p(&self, x_b: f64, a: f64) -> Result<f64> {
        let q = self.density_q(x_b, a)?;
        let phi = self.survival_phi(x_b, a)?;
        if phi < PHI_FLOOR {
            return Err(Error::SurvivalZero { x_b, a });
        }
        Ok(q / phi)
    }

    /// CDF of the cycle length at x_b, i.e. 1 - Phi.
    pub fn cdf_tau(&self, x_b: f64, a: f64) -> Result<f64> {
        Ok(1.0 - self.survival_phi(x_b, a)?)
    }

    /// Inverse-CDF sample of the cycle length from a uniform variate in
    /// (0, 1), via monotone interpolation of a tabulated CDF
    /// (`TAU_CDF_NODES` nodes across the support of q(x_b, .)).
    pub fn sample_tau(&self, x_b: f64, u01: f64) -> Result<f64> {
        debug_assert!(u01 > 0.0 && u01 < 1.0, "uniform draw must lie in (0,1)");
        let x_b = self.check_window(x_b)?;
        let lo = self.a_lo(x_b)?;
        let hi = self.a_hi(x_b)?;
        let step = (hi - lo) / (TAU_CDF_NODES - 1) as f64;
        // Cumulative trapezoid of q on the uniform grid; q vanishes at both
        // support edges or jumps there, either way the table is monotone.
        let mut cdf = [0.0f64; TAU_CDF_NODES];
        let mut prev = self.density_q(x_b, lo)?;
        for k in 1..TAU_CDF_NODES {
            let a = lo + step * k as f64;
            let cur = self.density_q(x_b, a)?;
            cdf[k] = cdf[k - 1] + 0.5 * (prev + cur) * step;
            prev = cur;
        }
        let total = cdf[TAU_CDF_NODES - 1];
        if !(total > 0.0) {
            return Err(Error::InvalidModel(format!(
                "cycle density has no mass at x_b = {x_b}"
            )));
        }
        let target = u01 * total;
        let idx = cdf.partition_point(|c| *c < target).min(TAU_CDF_NODES - 1);
        if idx == 0 {
            return Ok(lo);
        }
        let (c0, c1) = (cdf[idx - 1], cdf[idx]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        Ok(lo + step * ((idx - 1) as f64 + frac))
    }

    /// Mean cycle length at x_b.
    pub fn mean_cycle(&self, x_b: f64) -> Result<f64> {
        let x_b = self.check_window(x_b)?;
        let (lo, hi) = (self.a_lo(x_b)?, self.a_hi(x_b)?);
        Ok(composite_gl(lo, hi, 8, 32, |a| {
            a * self.density_q(x_b, a).unwrap_or(0.0)
        }))
    }

    /// Mean cycle length at the window midpoint; the model's natural time
    /// scale for horizons and step sizes.
    pub fn mean_cycle_length(&self) -> Result<f64> {
        self.mean_cycle(0.5 * (self.x_lo + self.x_hi))
    }

    /// Whether q tends to zero at its support edges (continuity of q on the
    /// closed domain). None when unknown.
    pub fn edge_continuous(&self) -> Option<bool> {
        match &self.kind {
            CycleKind::ConstantDelta { h, .. } => Some(h.vanishes_at_edges()),
            CycleKind::TargetSize { xi, .. } => Some(xi.vanishes_at_edges()),
            CycleKind::Tabulated(t) => Some(t.edges_vanish()),
        }
    }
}

/// Rectangular q table: columns at fixed x_b, rows on a shared age grid.
#[derive(Debug, Clone)]
pub struct QTable {
    xs: Vec<f64>,
    a_grid: Vec<f64>,
    /// Per-column values, renormalized to unit mass under the trapezoid rule.
    cols: Vec<Vec<f64>>,
    /// Per-column cumulative integral at the age nodes (ends at 1).
    cum: Vec<Vec<f64>>,
    a_lo_col: Vec<f64>,
    a_hi_col: Vec<f64>,
    max_renorm_dev: f64,
}

impl QTable {
    /// Build from a rectangular grid. `values[i][k]` is q(xs[i], a_grid[k]).
    /// Columns are renormalized; the largest renormalization deviation is
    /// recorded and exposed.
    pub fn new(xs: Vec<f64>, a_grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if xs.len() < 2 || a_grid.len() < 2 || values.len() != xs.len() {
            return Err(Error::Parse("q table must be rectangular with >= 2 rows/columns".into()));
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) || !a_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parse("q table grids must be strictly increasing".into()));
        }
        if a_grid[0] < 0.0 {
            return Err(Error::Parse("q table ages must be nonnegative".into()));
        }
        let mut cols = Vec::with_capacity(xs.len());
        let mut cum = Vec::with_capacity(xs.len());
        let mut a_lo_col = Vec::with_capacity(xs.len());
        let mut a_hi_col = Vec::with_capacity(xs.len());
        let mut max_renorm_dev = 0.0f64;
        for (i, col) in values.into_iter().enumerate() {
            if col.len() != a_grid.len() {
                return Err(Error::Parse(format!("q table column {i} has wrong length")));
            }
            if col.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Parse(format!("q table column {i} has negative or non-finite values")));
            }
            let mass = trapezoid(&a_grid, &col);
            if !(mass > 0.0) {
                return Err(Error::Parse(format!("q table column {i} has no mass")));
            }
            max_renorm_dev = max_renorm_dev.max((mass - 1.0).abs());
            let scaled: Vec<f64> = col.iter().map(|v| v / mass).collect();
            let mut c = Vec::with_capacity(a_grid.len());
            c.push(0.0);
            for k in 1..a_grid.len() {
                let seg = 0.5 * (scaled[k] + scaled[k - 1]) * (a_grid[k] - a_grid[k - 1]);
                c.push(c[k - 1] + seg);
            }
            let first = scaled.iter().position(|v| *v > 0.0).unwrap();
            let last = scaled.iter().rposition(|v| *v > 0.0).unwrap();
            a_lo_col.push(a_grid[first.saturating_sub(1)]);
            a_hi_col.push(a_grid[(last + 1).min(a_grid.len() - 1)]);
            cols.push(scaled);
            cum.push(c);
        }
        Ok(Self {
            xs,
            a_grid,
            cols,
            cum,
            a_lo_col,
            a_hi_col,
            max_renorm_dev,
        })
    }

    /// Parse CSV text with header `x_b,a,q`, row-major in x_b.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty q table".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["x_b", "a", "q"] {
            return Err(Error::Parse(format!("expected header x_b,a,q, found {header}")));
        }
        let mut triples = Vec::new();
        for (ln, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", ln + 2)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)))
            };
            triples.push((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?));
        }
        let mut xs: Vec<f64> = triples.iter().map(|t| t.0).collect();
        xs.dedup();
        let n_x = xs.len();
        if n_x < 2 || triples.len() % n_x != 0 {
            return Err(Error::Parse("q table is not rectangular".into()));
        }
        let n_a = triples.len() / n_x;
        let a_grid: Vec<f64> = triples[..n_a].iter().map(|t| t.1).collect();
        let mut values = Vec::with_capacity(n_x);
        for i in 0..n_x {
            let block = &triples[i * n_a..(i + 1) * n_a];
            if block.iter().any(|t| t.0 != xs[i]) {
                return Err(Error::Parse("q table rows are not grouped by x_b".into()));
            }
            for (k, t) in block.iter().enumerate() {
                if t.1 != a_grid[k] {
                    return Err(Error::Parse("q table age grid differs between columns".into()));
                }
            }
            values.push(block.iter().map(|t| t.2).collect());
        }
        Self::new(xs, a_grid, values)
    }

    pub fn max_renorm_dev(&self) -> f64 {
        self.max_renorm_dev
    }

    /// Largest jump of the detected support bounds between adjacent columns;
    /// the resolution below which support continuity cannot be judged.
    pub fn support_resolution(&self) -> f64 {
        let mut r = self.a_grid[1] - self.a_grid[0];
        for w in self.a_lo_col.windows(2) {
            r = r.max((w[1] - w[0]).abs());
        }
        for w in self.a_hi_col.windows(2) {
            r = r.max((w[1] - w[0]).abs());
        }
        r
    }

    fn edges_vanish(&self) -> bool {
        self.cols.iter().all(|col| {
            let peak = col.iter().cloned().fold(0.0, f64::max);
            let first = col.iter().position(|v| *v > 0.0).unwrap_or(0);
            let last = col.iter().rposition(|v| *v > 0.0).unwrap_or(0);
            col[first] < 0.05 * peak && col[last] < 0.05 * peak
        })
    }

    fn x_cell(&self, x: f64) -> (usize, f64) {
        let i = match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).expect("non-NaN"))
        {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        };
        let w = ((x - self.xs[i]) / (self.xs[i + 1] - self.xs[i])).clamp(0.0, 1.0);
        (i, w)
    }

    /// Union support of the two bracketing columns: blending preserves the
    /// exact unit mass of the linear-in-x interpolant.
    fn support_at(&self, x: f64) -> (f64, f64) {
        let (i, w) = self.x_cell(x);
        if w == 0.0 {
            (self.a_lo_col[i], self.a_hi_col[i])
        } else if w == 1.0 {
            (self.a_lo_col[i + 1], self.a_hi_col[i + 1])
        } else {
            (
                self.a_lo_col[i].min(self.a_lo_col[i + 1]),
                self.a_hi_col[i].max(self.a_hi_col[i + 1]),
            )
        }
    }

    fn col_eval(&self, i: usize, a: f64) -> f64 {
        let grid = &self.a_grid;
        if a <= grid[0] || a >= *grid.last().unwrap() {
            return if a == grid[0] {
                self.cols[i][0]
            } else if a == *grid.last().unwrap() {
                *self.cols[i].last().unwrap()
            } else {
                0.0
            };
        }
        let k = grid.partition_point(|v| *v <= a) - 1;
        let k = k.min(grid.len() - 2);
        let t = (a - grid[k]) / (grid[k + 1] - grid[k]);
        self.cols[i][k] * (1.0 - t) + self.cols[i][k + 1] * t
    }

    fn col_cum(&self, i: usize, a: f64) -> f64 {
        let grid = &self.a_grid;
        if a <= grid[0] {
            return 0.0;
        }
        if a >= *grid.last().unwrap() {
            return *self.cum[i].last().unwrap();
        }
        let k = (grid.partition_point(|v| *v <= a) - 1).min(grid.len() - 2);
        let q0 = self.cols[i][k];
        let qa = self.col_eval(i, a);
        self.cum[i][k] + 0.5 * (q0 + qa) * (a - grid[k])
    }

    fn eval(&self, x: f64, a: f64) -> f64 {
        let (i, w) = self.x_cell(x);
        let v = self.col_eval(i, a) * (1.0 - w) + self.col_eval(i + 1, a) * w;
        v.max(0.0)
    }

    fn cdf(&self, x: f64, a: f64) -> f64 {
        let (i, w) = self.x_cell(x);
        let total_i = *self.cum[i].last().unwrap();
        let total_j = *self.cum[i + 1].last().unwrap();
        let c = (self.col_cum(i, a) / total_i) * (1.0 - w) + (self.col_cum(i + 1, a) / total_j) * w;
        c.clamp(0.0, 1.0)
    }
}

/// Conditional density of the single-cell growth rate given the initial
/// size. The bundled variant is independent of x_b, matching the
/// experimental observation that the mean rate does not depend on newborn
/// size; the conditional signature is kept on all accessors.
#[derive(Debug, Clone)]
pub struct GrowthRateDistribution {
    base: Density1d,
}

impl GrowthRateDistribution {
    pub fn independent(base: Density1d) -> Result<Self> {
        if base.lo() <= 0.0 {
            return Err(Error::InvalidModel("growth rates must be positive".into()));
        }
        Ok(Self { base })
    }

    /// k(r | x_b).
    pub fn density(&self, r: f64, _x_b: f64) -> f64 {
        self.base.pdf(r)
    }

    pub fn support(&self, _x_b: f64) -> (f64, f64) {
        (self.base.lo(), self.base.hi())
    }

    /// Draw a rate for a newborn of size x_b.
    pub fn sample(&self, _x_b: f64, u01: f64) -> f64 {
        self.base.sample(u01)
    }

    /// Density of the size x = x_b e^{kappa a} reached at age a when the
    /// rate is random: f(x; x_b, a) = k(ln(x/x_b)/a | x_b) / (a x).
    pub fn birth_density(&self, x: f64, x_b: f64, a: f64) -> f64 {
        debug_assert!(x > 0.0 && x_b > 0.0 && a > 0.0);
        if x <= x_b {
            return 0.0;
        }
        let r = (x / x_b).ln() / a;
        self.density(r, x_b) / (a * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn delta_uniform() -> CycleModel {
        CycleModel::constant_delta(1.0, Density1d::uniform(0.5, 1.5).unwrap(), 0.5, 1.5).unwrap()
    }

    fn target_exp() -> CycleModel {
        // kappa = 1, alpha = 1, x0 = 1, eps = 0.2 with the window from the
        // target-size construction.
        let (lo, hi) = ((-0.2f64).exp(), (0.2f64).exp());
        let law = GrowthLaw::exponential(1.0, lo, hi).unwrap();
        CycleModel::target_size(
            1.0,
            1.0,
            0.2,
            Density1d::raised_cosine(-0.2, 0.2).unwrap(),
            law,
            lo,
            hi,
        )
        .unwrap()
    }

    #[test]
    fn constant_delta_density_example() {
        // kappa = 1, x_b = 1, uniform increment on [0.5, 1.5], a = ln 2:
        // q = 1 * 1 * e^{ln 2} * h(1) = 2.
        let m = delta_uniform();
        assert_relative_eq!(
            m.density_q(1.0, std::f64::consts::LN_2).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn density_vanishes_outside_support() {
        let m = delta_uniform();
        let lo = m.a_lo(1.0).unwrap();
        let hi = m.a_hi(1.0).unwrap();
        assert_eq!(m.density_q(1.0, lo - 1e-6).unwrap(), 0.0);
        assert_eq!(m.density_q(1.0, hi + 1e-6).unwrap(), 0.0);
        assert_eq!(m.density_q(1.0, -0.3).unwrap(), 0.0);
        assert!(m.density_q(1.0, 0.5 * (lo + hi)).unwrap() > 0.0);
    }

    #[test]
    fn support_consistency_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [delta_uniform(), target_exp()] {
            let (wlo, whi) = m.window();
            for _ in 0..10_000 {
                let x = rng.gen_range(wlo..whi);
                let a = rng.gen_range(0.0..3.0);
                let q = m.density_q(x, a).unwrap();
                let inside = a > m.a_lo(x).unwrap() && a < m.a_hi(x).unwrap();
                if inside {
                    assert!(q > 0.0, "q = 0 inside support at ({x}, {a})");
                } else {
                    assert_eq!(q, 0.0, "q > 0 outside support at ({x}, {a})");
                }
            }
        }
    }

    #[test]
    fn normalization_over_window() {
        for m in [delta_uniform(), target_exp()] {
            let (wlo, whi) = m.window();
            let mut worst = 0.0f64;
            for i in 0..64 {
                let x = wlo + (whi - wlo) * (i as f64 + 0.5) / 64.0;
                let (lo, hi) = (m.a_lo(x).unwrap(), m.a_hi(x).unwrap());
                let mass = composite_gl(lo, hi, 8, 32, |a| m.density_q(x, a).unwrap());
                worst = worst.max((mass - 1.0).abs());
            }
            assert!(worst < 1e-8, "normalization deviation {worst}");
        }
    }

    #[test]
    fn target_size_tau0_closed_form() {
        // alpha = 1 with exponential growth: tau_0 = ln(2 x0 / x_b) / kappa.
        let m = target_exp();
        for x in [0.85, 1.0, 1.15] {
            assert_relative_eq!(
                m.time_to_target(x).unwrap(),
                (2.0 / x).ln(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn survival_basics_and_median() {
        let m = delta_uniform();
        let x = 1.1;
        assert_eq!(m.survival_phi(x, 0.0).unwrap(), 1.0);
        let hi = m.a_hi(x).unwrap();
        assert_eq!(m.survival_phi(x, hi + 1e-9).unwrap(), 0.0);

        // Median from a fine trapezoid CDF oracle.
        let lo = m.a_lo(x).unwrap();
        let n = 40_000;
        let mut median = None;
        let mut acc = 0.0;
        let step = (hi - lo) / n as f64;
        let mut prev = m.density_q(x, lo).unwrap();
        for k in 1..=n {
            let a = lo + step * k as f64;
            let cur = m.density_q(x, a).unwrap();
            acc += 0.5 * (prev + cur) * step;
            prev = cur;
            if acc >= 0.5 {
                median = Some(a);
                break;
            }
        }
        let median = median.unwrap();
        assert_relative_eq!(m.survival_phi(x, median).unwrap(), 0.5, epsilon = 1e-4);
    }

    #[test]
    fn psi_is_inverse_survival() {
        let m = target_exp();
        let x = 1.02;
        assert_relative_eq!(m.weight_psi(x, 0.0).unwrap(), 1.0);
        let (lo, hi) = (m.a_lo(x).unwrap(), m.a_hi(x).unwrap());
        let mut last = 0.0;
        for k in 1..10 {
            let a = lo + (hi - lo) * k as f64 / 12.0;
            let psi = m.weight_psi(x, a).unwrap();
            let phi = m.survival_phi(x, a).unwrap();
            assert_relative_eq!(psi * phi, 1.0, epsilon = 1e-12);
            assert!(psi >= last);
            last = psi;
        }
        // Diverges at the maximal age.
        assert!(matches!(
            m.weight_psi(x, hi),
            Err(Error::SurvivalZero { .. })
        ));
    }

    #[test]
    fn hazard_reconstruction_identity() {
        // q = p exp(-int_0^a p) away from the upper support edge.
        let m = delta_uniform();
        let x = 0.9;
        let (lo, hi) = (m.a_lo(x).unwrap(), m.a_hi(x).unwrap());
        assert_eq!(m.hazard_p(x, 0.5 * lo).unwrap(), 0.0);
        for k in 1..8 {
            let a = lo + (hi - lo) * k as f64 / 10.0;
            let p = m.hazard_p(x, a).unwrap();
            let q = m.density_q(x, a).unwrap();
            assert!(p >= q);
            let int_p = composite_gl(lo, a, 16, 32, |s| m.hazard_p(x, s).unwrap());
            assert!(
                (q - p * (-int_p).exp()).abs() < 1e-6,
                "reconstruction off at a = {a}"
            );
        }
    }

    #[test]
    fn sample_tau_endpoints_and_support() {
        let m = target_exp();
        let x = 1.05;
        let (lo, hi) = (m.a_lo(x).unwrap(), m.a_hi(x).unwrap());
        assert!((m.sample_tau(x, 1e-12).unwrap() - lo).abs() < 1e-3);
        assert!((m.sample_tau(x, 1.0 - 1e-12).unwrap() - hi).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = m.sample_tau(x, rng.gen_range(1e-9..1.0)).unwrap();
            assert!(t >= lo && t <= hi);
        }
    }

    #[test]
    fn sample_tau_mean_and_ks() {
        let m = delta_uniform();
        let x = 1.0;
        let n = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut draws: Vec<f64> = Vec::with_capacity(n);
        for _ in 0..n {
            draws.push(m.sample_tau(x, rng.gen_range(f64::MIN_POSITIVE..1.0)).unwrap());
        }
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let expect = m.mean_cycle(x).unwrap();
        let var: f64 = draws.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * se + 1e-6,
            "mean {mean} vs {expect} (se {se})"
        );

        // Kolmogorov-Smirnov against the quadrature CDF.
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, t) in draws.iter().enumerate().step_by(97) {
            let emp = (i + 1) as f64 / n as f64;
            let theory = m.cdf_tau(x, *t).unwrap();
            ks = ks.max((emp - theory).abs());
        }
        assert!(ks < 0.002, "KS = {ks}");
    }

    #[test]
    fn constant_delta_change_of_variables() {
        // Mass of q over an age range equals the mass of h over the matching
        // increment range.
        let m = delta_uniform();
        let x = 1.2f64;
        let (d_lo, d_hi) = (0.7f64, 1.3f64);
        let a_lo = ((x + d_lo) / x).ln();
        let a_hi = ((x + d_hi) / x).ln();
        let q_mass = composite_gl(a_lo, a_hi, 8, 32, |a| m.density_q(x, a).unwrap());
        let h = Density1d::uniform(0.5, 1.5).unwrap();
        let h_mass = composite_gl(d_lo, d_hi, 8, 32, |d| h.pdf(d));
        assert_relative_eq!(q_mass, h_mass, epsilon = 1e-8);
    }

    #[test]
    fn growth_rate_birth_density_normalizes() {
        let k = GrowthRateDistribution::independent(
            Density1d::raised_cosine(0.8, 1.2).unwrap(),
        )
        .unwrap();
        let (x_b, a) = (1.0, 0.6);
        let x_min = x_b * (0.8f64 * a).exp();
        let x_max = x_b * (1.2f64 * a).exp();
        let mass = composite_gl(x_min, x_max, 16, 32, |x| k.birth_density(x, x_b, a));
        assert_relative_eq!(mass, 1.0, epsilon = 1e-6);

        // Near-point-mass rate concentrates the size near x_b e^{r a}.
        let tight = GrowthRateDistribution::independent(
            Density1d::uniform(0.999, 1.001).unwrap(),
        )
        .unwrap();
        let peak_at = x_b * (1.0f64 * a).exp();
        let lo = x_b * (0.999f64 * a).exp();
        let hi = x_b * (1.001f64 * a).exp();
        let inside = composite_gl(lo, hi, 8, 32, |x| tight.birth_density(x, x_b, a));
        assert_relative_eq!(inside, 1.0, epsilon = 1e-6);
        assert!(tight.birth_density(peak_at * 1.01, x_b, a) == 0.0);
    }

    #[test]
    fn growth_rate_density_matches_monte_carlo() {
        // Histogram of x_b e^{kappa a} with kappa ~ k against the closed form.
        let k = GrowthRateDistribution::independent(
            Density1d::raised_cosine(0.8, 1.2).unwrap(),
        )
        .unwrap();
        let (x_b, a) = (1.0, 0.7);
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lo = x_b * (0.8f64 * a).exp();
        let hi = x_b * (1.2f64 * a).exp();
        let bins = 40;
        let mut hist = vec![0.0f64; bins];
        for _ in 0..n {
            let r = k.sample(x_b, rng.gen_range(1e-12..1.0));
            let x = x_b * (r * a).exp();
            let b = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
            hist[b.min(bins - 1)] += 1.0;
        }
        let bw = (hi - lo) / bins as f64;
        for (b, count) in hist.iter().enumerate() {
            let mid = lo + (b as f64 + 0.5) * bw;
            let emp = count / (n as f64 * bw);
            let theory = k.birth_density(mid, x_b, a);
            assert!(
                (emp - theory).abs() < 0.08 * theory.max(1.0),
                "bin {b}: {emp} vs {theory}"
            );
        }
    }

    #[test]
    fn qtable_csv_roundtrip() {
        let mut csv = String::from("x_b,a,q\n");
        let xs = [0.8, 1.0, 1.2];
        let ages: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
        for x in xs {
            for a in &ages {
                // Triangular bump supported on [0.5, 1.5], scaled slightly off
                // unit mass to exercise renormalization.
                let v = (1.0 - (a - 1.0f64).abs() / 0.5).max(0.0) * 1.01;
                csv.push_str(&format!("{x},{a},{v}\n"));
            }
        }
        let table = QTable::from_csv(&csv).unwrap();
        assert!(table.max_renorm_dev() > 1e-4);
        let m = CycleModel::tabulated(table).unwrap();
        assert_eq!(m.window(), (0.8, 1.2));
        // Interior positivity and normalization after renormalize.
        assert!(m.density_q(0.9, 1.0).unwrap() > 0.0);
        assert_eq!(m.density_q(0.9, 0.2).unwrap(), 0.0);
        let mass = {
            let ages: Vec<f64> = (0..=3000).map(|k| 0.4 + k as f64 * 1.2 / 3000.0).collect();
            let vals: Vec<f64> = ages.iter().map(|a| m.density_q(0.9, *a).unwrap()).collect();
            trapezoid(&ages, &vals)
        };
        assert_relative_eq!(mass, 1.0, epsilon = 1e-8);
        assert_eq!(m.survival_phi(0.9, 0.1).unwrap(), 1.0);
        assert!(m.survival_phi(0.9, 1.0).unwrap() < 1.0);
    }

    #[test]
    fn qtable_rejects_malformed() {
        assert!(QTable::from_csv("x,a,q\n1,2,3\n").is_err());
        assert!(QTable::from_csv("x_b,a,q\n1.0,0.0,0.1\n1.0,0.1,0.2\n2.0,0.0,0.1\n").is_err());
        assert!(QTable::from_csv("x_b,a,q\n1.0,0.0,-0.1\n1.0,0.1,0.2\n").is_err());
    }

    #[test]
    fn out_of_window_is_rejected() {
        let m = delta_uniform();
        assert!(matches!(
            m.density_q(0.3, 0.5),
            Err(Error::OutOfWindow { .. })
        ));
        assert!(matches!(
            m.sample_tau(2.5, 0.5),
            Err(Error::OutOfWindow { .. })
        ));
    }
}
