//! Glen's flow law in r-Stokes form.

use crate::error::{Error, Result};

/// Power-law rheology `alpha (eps + |Du|)^(r-2) Du`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rheology {
    /// Glen fluidity, constant over the domain.
    pub glen_a: f64,
    pub glen_n: f64,
    /// `r = 1 + 1/n`, in `(1, 2]`.
    pub r: f64,
    /// `alpha = (1/2)^(r/2) A^(1-r)`.
    pub alpha: f64,
    pub eps_reg: f64,
}

impl Rheology {
    pub fn new(glen_a: f64, glen_n: f64, eps_reg: f64) -> Result<Self> {
        if !(glen_a > 0.0) || !glen_a.is_finite() {
            return Err(Error::InvalidInput(format!("glen_A must be positive, got {glen_a}")));
        }
        if !(glen_n >= 1.0) || !glen_n.is_finite() {
            return Err(Error::InvalidInput(format!("glen_n must be >= 1, got {glen_n}")));
        }
        if !(eps_reg >= 0.0) || !eps_reg.is_finite() {
            return Err(Error::InvalidInput(format!("eps_reg must be >= 0, got {eps_reg}")));
        }
        let r = 1.0 + 1.0 / glen_n;
        let alpha = 0.5f64.powf(0.5 * r) * glen_a.powf(1.0 - r);
        Ok(Rheology {
            glen_a,
            glen_n,
            r,
            alpha,
            eps_reg,
        })
    }

    /// Rheology for a given exponent `r` in `(1, 2]`.
    pub fn from_r(glen_a: f64, r: f64, eps_reg: f64) -> Result<Self> {
        if !(r > 1.0 && r <= 2.0) {
            return Err(Error::InvalidInput(format!("r must lie in (1, 2], got {r}")));
        }
        let mut rh = Self::new(glen_a, 1.0 / (r - 1.0), eps_reg)?;
        rh.r = r;
        rh.alpha = 0.5f64.powf(0.5 * r) * glen_a.powf(1.0 - r);
        Ok(rh)
    }

    /// Same fluidity and regularization with another exponent.
    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::from_r(self.glen_a, r, self.eps_reg)
    }

    /// Conjugate exponent `r / (r - 1)`.
    pub fn r_conjugate(&self) -> f64 {
        self.r / (self.r - 1.0)
    }

    /// Viscosity factor `alpha (eps + |Du|)^(r-2)`. Infinite when
    /// `eps = |Du| = 0` and `r < 2`.
    pub fn stress_coefficient(&self, du_norm: f64) -> f64 {
        if self.r == 2.0 {
            return self.alpha;
        }
        self.alpha * (self.eps_reg + du_norm).powf(self.r - 2.0)
    }

    /// Derivative of the viscosity factor with respect to `|Du|`.
    pub fn stress_coefficient_derivative(&self, du_norm: f64) -> f64 {
        if self.r == 2.0 {
            return 0.0;
        }
        self.alpha * (self.r - 2.0) * (self.eps_reg + du_norm).powf(self.r - 3.0)
    }
}
