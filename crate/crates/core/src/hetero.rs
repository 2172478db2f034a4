//! Multi-type populations: per-type growth laws and cycle models, daughter
//! type probabilities r_ij, and asymmetric size fractions beta_ij.

use crate::cycle::CycleModel;
use crate::error::{Error, Result};
use crate::growth::GrowthLaw;

#[derive(Debug, Clone)]
pub struct HeteroDivisionRule {
    laws: Vec<GrowthLaw>,
    cycles: Vec<CycleModel>,
    /// r[i][j]: probability that a daughter of a type-i mother has type j.
    r: Vec<Vec<f64>>,
    /// beta[i][j]: daughter initial size as a fraction of the mother's
    /// division size.
    beta: Vec<Vec<f64>>,
}

impl HeteroDivisionRule {
    pub fn new(
        laws: Vec<GrowthLaw>,
        cycles: Vec<CycleModel>,
        r: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = laws.len();
        if n == 0 || cycles.len() != n || r.len() != n || beta.len() != n {
            return Err(Error::InvalidModel(
                "hetero rule needs matching per-type laws, cycles, r, beta".into(),
            ));
        }
        for (i, row) in r.iter().enumerate() {
            if row.len() != n || beta[i].len() != n {
                return Err(Error::InvalidModel(format!("row {i} has wrong length")));
            }
            if row.iter().any(|p| *p < 0.0) {
                return Err(Error::InvalidModel(format!("negative probability in r row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "r row {i} sums to {sum}, expected 1"
                )));
            }
            if beta[i].iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
                return Err(Error::InvalidModel(format!(
                    "beta row {i} must lie strictly inside (0, 1)"
                )));
            }
        }
        Ok(Self {
            laws,
            cycles,
            r,
            beta,
        })
    }

    /// Symmetric single-type rule: both daughters get half the mother.
    pub fn single(law: GrowthLaw, cycle: CycleModel) -> Self {
        Self {
            laws: vec![law],
            cycles: vec![cycle],
            r: vec![vec![1.0]],
            beta: vec![vec![0.5]],
        }
    }

    pub fn n_types(&self) -> usize {
        self.laws.len()
    }

    pub fn law(&self, i: usize) -> &GrowthLaw {
        &self.laws[i]
    }

    pub fn cycle(&self, i: usize) -> &CycleModel {
        &self.cycles[i]
    }

    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.r[i][j]
    }

    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.beta[i][j]
    }

    /// Initial size of a type-j daughter of a type-i mother born at x_b that
    /// divides at age a: beta_ij * pi^i_a(x_b).
    pub fn daughter_size(&self, i: usize, j: usize, x_b: f64, a: f64) -> Result<f64> {
        Ok(self.beta[i][j] * self.laws[i].flow(x_b, a)?)
    }

    /// The P^{ij}_a density factor at daughter size x_b: the preimage mother
    /// initial size y = pi^i_{-a}(x_b / beta_ij) together with the weight
    /// (r_ij / beta_ij) g_i(y) / g_i(x_b / beta_ij), so that
    /// P^{ij}_a f(x_b) = weight * f(y).
    pub fn transfer_factor(&self, i: usize, j: usize, x_b: f64, a: f64) -> Result<(f64, f64)> {
        let division_size = x_b / self.beta[i][j];
        let law = &self.laws[i];
        let y = law.flow(division_size, -a)?;
        let w = self.r[i][j] / self.beta[i][j] * law.g(y) / law.g(division_size);
        Ok((y, w))
    }

    /// Apply P^{ij}_a to a mother-initial-size density given as a closure
    /// (zero outside the type-i window), evaluated at daughter size x_b.
    pub fn transfer_apply<F: Fn(f64) -> f64>(
        &self,
        i: usize,
        j: usize,
        f: &F,
        x_b: f64,
        a: f64,
    ) -> f64 {
        let (w_lo, w_hi) = self.cycles[i].window();
        match self.transfer_factor(i, j, x_b, a) {
            Ok((y, w)) if y >= w_lo && y <= w_hi => w * f(y),
            _ => 0.0,
        }
    }
}
