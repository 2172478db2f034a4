//! Nystrom discretization of the renewal operators acting on newborn-size
//! profiles, the Malthusian parameter lambda as the root of
//! r(K_lambda) = 1, the stationary birth profile, and the dual (adjoint)
//! eigenfunction on the age / initial-size domain.
//!
//! K_lambda acts on the dual side,
//!     K_lambda v(x_b) = int 2 e^{-lambda a} q(x_b, a) v(S_a(x_b)) da,
//! and in kernel form has
//!     k_lambda(x_b, y) = 4 e^{-lambda a(y; x_b)} q(x_b, a(y; x_b)) / g(2y),
//! where a(y; x_b) is the cycle age at which a mother born at x_b produces
//! daughters born at y. J is its adjoint on densities; its kernel is the
//! transpose j(x, y) = k_lambda(y, x), which is what the renewal boundary
//! condition of the transport system induces.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cycle::CycleModel;
use crate::error::{Error, Result};
use crate::growth::GrowthLaw;
use crate::interp::MonotoneCubic;
use crate::quad::{gl_integrate, QuadratureGrid};
use crate::validate::validate_assumptions;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 100_000;
const BISECT_RESIDUAL: f64 = 1e-10;

/// lambda-independent parts of the Nystrom kernel, so the bisection can
/// re-weight with e^{-lambda a} without re-evaluating flows or q.
pub struct KernelCache {
    n: usize,
    /// ages[i][j] = a(y_j; x_i)
    ages: Array2<f64>,
    /// base[i][j] = 4 q(x_i, a(y_j; x_i)) w_j / g(2 y_j)
    base: Array2<f64>,
    weights: Vec<f64>,
}

impl KernelCache {
    pub fn new(law: &GrowthLaw, model: &CycleModel, grid: &QuadratureGrid) -> Result<Self> {
        let n = grid.len();
        let nodes = grid.nodes();
        let weights = grid.weights();
        let rows: Result<Vec<(Vec<f64>, Vec<f64>)>> = nodes
            .par_iter()
            .map(|&x| {
                let mut ages = vec![0.0; n];
                let mut base = vec![0.0; n];
                for j in 0..n {
                    let y = nodes[j];
                    let a = law.cycle_age(y, x)?;
                    ages[j] = a;
                    let q = model.density_q(x, a)?;
                    base[j] = 4.0 * q * weights[j] / law.g(2.0 * y);
                }
                Ok((ages, base))
            })
            .collect();
        let rows = rows?;
        let mut ages = Array2::zeros((n, n));
        let mut base = Array2::zeros((n, n));
        for (i, (ar, br)) in rows.into_iter().enumerate() {
            for j in 0..n {
                ages[[i, j]] = ar[j];
                base[[i, j]] = br[j];
            }
        }
        Ok(Self {
            n,
            ages,
            base,
            weights: weights.to_vec(),
        })
    }

    /// Nystrom matrix of K_lambda: M[i][j] = k_lambda(x_i, y_j) w_j.
    pub fn k_matrix(&self, lambda: f64) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for j in 0..self.n {
                let b = self.base[[i, j]];
                if b != 0.0 {
                    m[[i, j]] = b * (-lambda * self.ages[[i, j]]).exp();
                }
            }
        }
        m
    }

    /// Nystrom matrix of J, the adjoint of K_lambda under the grid inner
    /// product: J[i][j] = k_lambda(x_j, x_i) w_j.
    pub fn j_matrix(&self, lambda: f64) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for j in 0..self.n {
                let b = self.base[[j, i]];
                if b != 0.0 {
                    m[[i, j]] =
                        b * (-lambda * self.ages[[j, i]]).exp() * self.weights[j] / self.weights[i];
                }
            }
        }
        m
    }
}

/// Nystrom matrix of the dual renewal operator at the given rate.
pub fn build_k(
    law: &GrowthLaw,
    model: &CycleModel,
    grid: &QuadratureGrid,
    lambda: f64,
) -> Result<Array2<f64>> {
    Ok(KernelCache::new(law, model, grid)?.k_matrix(lambda))
}

/// Nystrom matrix of the birth-profile renewal operator at the given rate.
pub fn build_j(
    law: &GrowthLaw,
    model: &CycleModel,
    grid: &QuadratureGrid,
    lambda: f64,
) -> Result<Array2<f64>> {
    Ok(KernelCache::new(law, model, grid)?.j_matrix(lambda))
}

#[derive(Debug, Clone)]
pub struct PerronPair {
    pub radius: f64,
    /// Dominant eigenvector, sup-normalized to 1.
    pub vector: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration for the dominant eigenpair of a nonnegative matrix.
/// Always returns the best estimate; `converged` is false when the radius
/// did not settle within the iteration cap.
pub fn spectral_radius(m: &Array2<f64>) -> PerronPair {
    let n = m.nrows();
    let mut v = Array1::from_elem(n, 1.0);
    let mut radius = 0.0f64;
    for it in 1..=POWER_MAX_ITER {
        let u = m.dot(&v);
        let norm = u.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        if norm == 0.0 {
            return PerronPair {
                radius: 0.0,
                vector: v.to_vec(),
                converged: true,
                iterations: it,
            };
        }
        let next = &u / norm;
        let dv = next
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let dr = (norm - radius).abs();
        v = next;
        radius = norm;
        if dr < POWER_TOL * radius.max(1.0) && dv < 10.0 * POWER_TOL {
            return PerronPair {
                radius,
                vector: v.to_vec(),
                converged: true,
                iterations: it,
            };
        }
    }
    PerronPair {
        radius,
        vector: v.to_vec(),
        converged: false,
        iterations: POWER_MAX_ITER,
    }
}

/// One record per probed rate: (lambda, spectral radius).
pub type BisectionTrace = Vec<(f64, f64)>;

/// The Malthusian parameter: the unique rate where the dual renewal operator
/// has unit spectral radius. Bisection on [0, ln 4 / a_lo]; the bracket is
/// guaranteed by r(K_0) = 2 and r <= 1/2 at the right end. Returns the rate,
/// the dual profile at that rate, the residual |r - 1|, and the trace.
pub fn solve_malthus(
    law: &GrowthLaw,
    model: &CycleModel,
    grid: &QuadratureGrid,
) -> Result<(f64, Vec<f64>, f64, BisectionTrace)> {
    let cache = KernelCache::new(law, model, grid)?;
    let (a_lo, _) = model.global_support();
    if !(a_lo > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "global minimum cycle length must be positive, got {a_lo}"
        )));
    }
    let mut trace = BisectionTrace::new();
    let eval = |lambda: f64, trace: &mut BisectionTrace| {
        let pair = spectral_radius(&cache.k_matrix(lambda));
        trace.push((lambda, pair.radius));
        pair
    };

    let r0 = eval(0.0, &mut trace);
    if r0.radius <= 1.0 {
        return Err(Error::BracketFailure { r0: r0.radius });
    }
    let mut hi = (4.0f64).ln() / a_lo;
    let mut r_hi = eval(hi, &mut trace);
    let mut widenings = 0;
    while r_hi.radius >= 1.0 {
        // r <= 1/2 there in exact arithmetic; widen defensively if the
        // discretization ever spoils it.
        hi *= 2.0;
        r_hi = eval(hi, &mut trace);
        widenings += 1;
        if widenings > 4 {
            return Err(Error::BracketFailure { r0: r_hi.radius });
        }
    }

    let mut lo = 0.0f64;
    let mut best = (0.5 * (lo + hi), r0);
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        let pair = eval(mid, &mut trace);
        let r = pair.radius;
        best = (mid, pair);
        if (r - 1.0).abs() < BISECT_RESIDUAL {
            break;
        }
        if r > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (lambda, pair) = best;
    let residual = (pair.radius - 1.0).abs();
    Ok((lambda, pair.vector, residual, trace))
}

/// Stationary birth profile: the Perron fixed point of J at the Malthusian
/// rate, sup-normalized, with the sup-norm residual of J f = f. Positivity
/// holds at interior nodes; nothing is asserted at the window endpoints.
pub fn stationary_birth_profile(
    law: &GrowthLaw,
    model: &CycleModel,
    grid: &QuadratureGrid,
    lambda: f64,
) -> Result<(Vec<f64>, f64)> {
    let j = build_j(law, model, grid, lambda)?;
    let pair = spectral_radius(&j);
    if !pair.converged {
        return Err(Error::NoConvergence {
            radius: pair.radius,
            iterations: pair.iterations,
        });
    }
    let f = Array1::from_vec(pair.vector.clone());
    let jf = j.dot(&f);
    let resid = jf
        .iter()
        .zip(f.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok((pair.vector, resid))
}

/// Descending cumulative integrals on the level grid:
/// out[k] = int_{a_k}^{a_hi} h(s) ds, with cells clipped to [a_lo, a_hi] so
/// the integrand's support edges always land on panel boundaries.
fn tail_integrals<F: Fn(f64) -> f64>(a_levels: &[f64], a_lo: f64, a_hi: f64, h: F) -> Vec<f64> {
    let n = a_levels.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    let top = *a_levels.last().unwrap();
    if a_hi > top {
        let e0 = top.max(a_lo);
        if a_hi > e0 {
            acc += gl_integrate(e0, a_hi, 8, &h);
        }
    }
    out[n - 1] = acc;
    for k in (0..n - 1).rev() {
        let e0 = a_levels[k].max(a_lo);
        let e1 = a_levels[k + 1].min(a_hi);
        if e1 > e0 {
            acc += gl_integrate(e0, e1, 8, &h);
        }
        out[k] = acc;
    }
    out
}

#[derive(Debug, Clone)]
pub struct Residuals {
    /// |r(K_lambda) - 1| at the solved rate.
    pub r_k: f64,
    /// Sup-norm residual of J f = f.
    pub r_j: f64,
    /// Worst relative adjointness defect over random vector pairs.
    pub adjoint_gap: f64,
}

/// Full spectral data of the model on a quadrature grid.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub lambda: f64,
    pub grid: QuadratureGrid,
    /// Dual profile, sup-normalized to 1.
    pub v_tilde: Vec<f64>,
    /// Birth profile, scaled jointly with f_full.
    pub f_tilde: Vec<f64>,
    /// Uniform age levels on [0, a_max].
    pub a_levels: Vec<f64>,
    /// Maximal age per grid node; the table mask.
    pub a_hi_nodes: Vec<f64>,
    /// v(x_b, a) on nodes x levels, zero beyond the mask.
    pub v_full: Array2<f64>,
    /// f_i(x_b, a) = e^{-lambda a} f_tilde(x_b), scaled so that
    /// iint f_i v dx_b da = 1.
    pub f_full: Array2<f64>,
    /// Survival function on the same table.
    pub phi: Array2<f64>,
    pub residuals: Residuals,
    /// Empirical constants of the sandwich c1 Phi <= v <= c2 Phi.
    pub c_sandwich: (f64, f64),
}

impl SpectralSolution {
    /// Solve the full eigenproblem after checking (A1)-(A6). `n_a_levels`
    /// is the age resolution of the 2-D tables (512 in the CLI default).
    pub fn solve(
        law: &GrowthLaw,
        model: &CycleModel,
        grid: QuadratureGrid,
        n_a_levels: usize,
    ) -> Result<Self> {
        let report = validate_assumptions(law, model);
        if !report.hard_ok() {
            return Err(Error::AssumptionViolation(report.to_text()));
        }
        Self::solve_unchecked(law, model, grid, n_a_levels)
    }

    /// Same as `solve` but trusts the caller on (A1)-(A6).
    pub fn solve_unchecked(
        law: &GrowthLaw,
        model: &CycleModel,
        grid: QuadratureGrid,
        n_a_levels: usize,
    ) -> Result<Self> {
        let n_a = n_a_levels.max(16);
        let (lambda, v_tilde, r_k, _) = solve_malthus(law, model, &grid)?;
        let (mut f_tilde, r_j) = stationary_birth_profile(law, model, &grid, lambda)?;

        let cache = KernelCache::new(law, model, &grid)?;
        let k_m = cache.k_matrix(lambda);
        let j_m = cache.j_matrix(lambda);
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let n = grid.len();
        let mut adjoint_gap = 0.0f64;
        for _ in 0..10 {
            let f: Array1<f64> = Array1::from_iter((0..n).map(|_| rng.gen_range(0.0..1.0)));
            let g: Array1<f64> = Array1::from_iter((0..n).map(|_| rng.gen_range(0.0..1.0)));
            let jf = j_m.dot(&f);
            let kg = k_m.dot(&g);
            let lhs = grid.inner(g.as_slice().unwrap(), jf.as_slice().unwrap());
            let rhs = grid.inner(kg.as_slice().unwrap(), f.as_slice().unwrap());
            let nf = grid.inner(f.as_slice().unwrap(), f.as_slice().unwrap()).sqrt();
            let ng = grid.inner(g.as_slice().unwrap(), g.as_slice().unwrap()).sqrt();
            adjoint_gap = adjoint_gap.max((lhs - rhs).abs() / (nf * ng));
        }

        // Age levels spanning the largest maximal age over the window.
        let nodes = grid.nodes().to_vec();
        let mut a_hi_nodes = Vec::with_capacity(n);
        let mut a_max = 0.0f64;
        for &x in &nodes {
            let hi = model.a_hi(x)?;
            a_hi_nodes.push(hi);
            a_max = a_max.max(hi);
        }
        a_max = a_max
            .max(model.a_hi(model.window().0)?)
            .max(model.a_hi(model.window().1)?);
        let a_levels: Vec<f64> = (0..n_a)
            .map(|k| a_max * k as f64 / (n_a - 1) as f64)
            .collect();

        // Survival table and the dual eigenfunction
        //   v(x_b, a) = e^{lambda a} int_a^{a_hi} 2 q(s) v~(S_s(x_b)) e^{-lambda s} ds
        // accumulated from the top level down, cells aligned to the support.
        let v_interp = MonotoneCubic::new(nodes.clone(), v_tilde.clone());
        let (w_lo, w_hi) = model.window();
        let tables: Result<Vec<(Vec<f64>, Vec<f64>)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = nodes[i];
                let lo = model.a_lo(x)?;
                let hi = a_hi_nodes[i];
                // Flow table s -> S_s(x), sampled by composition so tabulated
                // laws do not pay a full ODE solve per quadrature node.
                let m_flow = 257;
                let mut ss = Vec::with_capacity(m_flow);
                let mut vals = Vec::with_capacity(m_flow);
                let mut cur = x;
                let step = hi / (m_flow - 1) as f64;
                for k in 0..m_flow {
                    ss.push(k as f64 * step);
                    vals.push(0.5 * cur);
                    if k + 1 < m_flow {
                        cur = law.flow(cur, step)?;
                    }
                }
                let s_of_a = MonotoneCubic::new(ss, vals);
                let phi_tail = tail_integrals(&a_levels, lo, hi, |s| {
                    model.density_q(x, s).unwrap_or(0.0)
                });
                let v_tail = tail_integrals(&a_levels, lo, hi, |s| {
                    let q = model.density_q(x, s).unwrap_or(0.0);
                    if q == 0.0 {
                        return 0.0;
                    }
                    let daughter = s_of_a.eval(s).clamp(w_lo, w_hi);
                    2.0 * q * v_interp.eval(daughter) * (-lambda * s).exp()
                });
                let mut phi_row = vec![0.0; n_a];
                let mut v_row = vec![0.0; n_a];
                for k in 0..n_a {
                    let a = a_levels[k];
                    if a >= hi {
                        break;
                    }
                    phi_row[k] = if a <= lo { 1.0 } else { phi_tail[k].clamp(0.0, 1.0) };
                    v_row[k] = (lambda * a).exp() * v_tail[k];
                }
                Ok((phi_row, v_row))
            })
            .collect();
        let tables = tables?;
        let mut phi = Array2::zeros((n, n_a));
        let mut v_full = Array2::zeros((n, n_a));
        for (i, (p_row, v_row)) in tables.into_iter().enumerate() {
            for k in 0..n_a {
                phi[[i, k]] = p_row[k];
                v_full[[i, k]] = v_row[k];
            }
        }

        // f_i(x_b, a) = e^{-lambda a} f~(x_b) on the mask, normalized so
        // that iint f_i v = 1; the same scale is pushed into f_tilde.
        let mut f_full = Array2::zeros((n, n_a));
        for i in 0..n {
            for k in 0..n_a {
                if a_levels[k] <= a_hi_nodes[i] {
                    f_full[[i, k]] = (-lambda * a_levels[k]).exp() * f_tilde[i];
                }
            }
        }
        let scale = quad2d_product(&grid, &a_levels, &f_full, &v_full);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::NoConvergence {
                radius: scale,
                iterations: 0,
            });
        }
        f_full.mapv_inplace(|v| v / scale);
        for v in &mut f_tilde {
            *v /= scale;
        }

        // Empirical sandwich constants away from the upper age edge.
        let da = a_levels[1] - a_levels[0];
        let mut c1 = f64::INFINITY;
        let mut c2 = 0.0f64;
        for i in 0..n {
            for k in 0..n_a {
                if a_levels[k] < a_hi_nodes[i] - da && phi[[i, k]] > 0.0 {
                    let ratio = v_full[[i, k]] / phi[[i, k]];
                    c1 = c1.min(ratio);
                    c2 = c2.max(ratio);
                }
            }
        }

        Ok(Self {
            lambda,
            grid,
            v_tilde,
            f_tilde,
            a_levels,
            a_hi_nodes,
            v_full,
            f_full,
            phi,
            residuals: Residuals {
                r_k,
                r_j,
                adjoint_gap,
            },
            c_sandwich: (c1, c2),
        })
    }

    /// The AEG linear functional alpha(u0) = iint u0 Psi v dx_b da.
    /// Errors when u0 carries mass at or beyond the maximal age, where the
    /// 1/Phi weight overflows.
    pub fn aeg_functional(&self, u0: &Array2<f64>) -> Result<f64> {
        let n = self.grid.len();
        let n_a = self.a_levels.len();
        assert_eq!(u0.dim(), (n, n_a));
        let da = self.a_levels[1] - self.a_levels[0];
        let mut weighted = Array2::zeros((n, n_a));
        for i in 0..n {
            for k in 0..n_a {
                let u = u0[[i, k]];
                if u == 0.0 {
                    continue;
                }
                if u < 0.0 {
                    return Err(Error::NegativeInput("aeg functional input".into()));
                }
                if self.phi[[i, k]] < 1e-300 {
                    return Err(Error::WeightDivergence {
                        x_b: self.grid.nodes()[i],
                        delta: da,
                    });
                }
                weighted[[i, k]] = u * self.v_full[[i, k]] / self.phi[[i, k]];
            }
        }
        Ok(quad2d(&self.grid, &self.a_levels, &weighted))
    }

    /// The stable age / initial-size profile Phi * f_i of the untransformed
    /// system, on the solution's table.
    pub fn stable_profile(&self) -> Array2<f64> {
        let mut out = self.f_full.clone();
        for ((i, k), v) in out.indexed_iter_mut() {
            *v *= self.phi[[i, k]];
        }
        out
    }
}

/// 2-D quadrature over the table: grid weights in x, trapezoid in a.
pub fn quad2d(grid: &QuadratureGrid, a_levels: &[f64], table: &Array2<f64>) -> f64 {
    let n_a = a_levels.len();
    let da = a_levels[1] - a_levels[0];
    let mut total = 0.0;
    for (i, w) in grid.weights().iter().enumerate() {
        let mut col = 0.0;
        for k in 0..n_a {
            let tw = if k == 0 || k == n_a - 1 { 0.5 * da } else { da };
            col += tw * table[[i, k]];
        }
        total += w * col;
    }
    total
}

/// 2-D quadrature of the pointwise product of two tables.
pub fn quad2d_product(
    grid: &QuadratureGrid,
    a_levels: &[f64],
    a: &Array2<f64>,
    b: &Array2<f64>,
) -> f64 {
    let n_a = a_levels.len();
    let da = a_levels[1] - a_levels[0];
    let mut total = 0.0;
    for (i, w) in grid.weights().iter().enumerate() {
        let mut col = 0.0;
        for k in 0..n_a {
            let tw = if k == 0 || k == n_a - 1 { 0.5 * da } else { da };
            col += tw * a[[i, k]] * b[[i, k]];
        }
        total += w * col;
    }
    total
}
