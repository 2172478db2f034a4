//! One-dimensional probability densities on a bounded interval.
//!
//! These parametrize the division-noise laws: the size increment in the
//! constant-increment cycle model and the timing perturbation in the
//! target-size model.

use crate::error::{Error, Result};
use crate::quad::composite_gl;

/// Density on a closed bounded support, strictly positive in the interior.
#[derive(Debug, Clone)]
pub struct Density1d {
    kind: DensityKind,
    lo: f64,
    hi: f64,
    /// 1/(integral of the unnormalized shape over [lo, hi]).
    norm: f64,
    /// CDF tabulated on a uniform grid over [lo, hi] for inverse sampling.
    cdf: Vec<f64>,
}

const CDF_NODES: usize = 513;

#[derive(Debug, Clone)]
pub enum DensityKind {
    Uniform,
    /// Normal with the given sigma, centered on the interval midpoint and
    /// truncated to it. Discontinuous at the support edges.
    TruncNormal { sigma: f64 },
    /// cos^2-shaped bump; vanishes with zero slope at both support edges, so
    /// kernels built from it stay C^1 across the support boundary.
    RaisedCosine,
}

impl Density1d {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DensityKind::Uniform, lo, hi)
    }

    pub fn trunc_normal(lo: f64, hi: f64, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::InvalidModel(format!("sigma must be positive: {sigma}")));
        }
        Self::new(DensityKind::TruncNormal { sigma }, lo, hi)
    }

    pub fn raised_cosine(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DensityKind::RaisedCosine, lo, hi)
    }

    fn new(kind: DensityKind, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidModel(format!("bad density support [{lo}, {hi}]")));
        }
        let mut d = Self {
            kind,
            lo,
            hi,
            norm: 1.0,
            cdf: Vec::new(),
        };
        let mass = composite_gl(lo, hi, 8, 32, |x| d.shape(x));
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidModel("density shape has no mass".into()));
        }
        d.norm = 1.0 / mass;
        // Cumulative trapezoid table for inverse-CDF sampling.
        let step = (hi - lo) / (CDF_NODES - 1) as f64;
        let mut cdf = Vec::with_capacity(CDF_NODES);
        cdf.push(0.0);
        let mut prev = d.pdf(lo);
        let mut acc = 0.0;
        for k in 1..CDF_NODES {
            let x = lo + step * k as f64;
            let cur = d.pdf(x);
            acc += 0.5 * (prev + cur) * step;
            cdf.push(acc);
            prev = cur;
        }
        let total = *cdf.last().unwrap();
        for v in &mut cdf {
            *v /= total;
        }
        d.cdf = cdf;
        Ok(d)
    }

    /// Inverse-CDF draw from a uniform variate in (0, 1).
    pub fn sample(&self, u01: f64) -> f64 {
        debug_assert!(u01 > 0.0 && u01 < 1.0);
        let idx = match self
            .cdf
            .binary_search_by(|v| v.partial_cmp(&u01).expect("non-NaN"))
        {
            Ok(i) => return self.lo + (self.hi - self.lo) * i as f64 / (CDF_NODES - 1) as f64,
            Err(0) => return self.lo,
            Err(i) => i - 1,
        };
        let step = (self.hi - self.lo) / (CDF_NODES - 1) as f64;
        let (c0, c1) = (self.cdf[idx], self.cdf[(idx + 1).min(CDF_NODES - 1)]);
        let frac = if c1 > c0 { (u01 - c0) / (c1 - c0) } else { 0.0 };
        self.lo + step * (idx as f64 + frac)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    /// Unnormalized shape, zero outside [lo, hi].
    fn shape(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        match self.kind {
            DensityKind::Uniform => 1.0,
            DensityKind::TruncNormal { sigma } => {
                let mid = 0.5 * (self.lo + self.hi);
                let z = (x - mid) / sigma;
                (-0.5 * z * z).exp()
            }
            DensityKind::RaisedCosine => {
                let mid = 0.5 * (self.lo + self.hi);
                let half = 0.5 * (self.hi - self.lo);
                let c = (std::f64::consts::FRAC_PI_2 * (x - mid) / half).cos();
                c * c
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.norm * self.shape(x)
    }

    /// True when pdf -> 0 continuously at both support edges.
    pub fn vanishes_at_edges(&self) -> bool {
        matches!(self.kind, DensityKind::RaisedCosine)
    }
}
