//! Piecewise-cubic interpolation on a uniform grid.
//!
//! Each interval [tᵢ, tᵢ₊₁] uses the cubic through the four nearest samples
//! (shifted inwards at the two ends). The interpolant is only C⁰ at the
//! knots, but it is a single polynomial inside every interval, so an
//! integrator whose steps subdivide the grid keeps its full order.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct UniformCubic {
    t0: f64,
    h: f64,
    values: Vec<f64>,
}

impl UniformCubic {
    pub fn new(t0: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::Domain("cubic interpolation needs at least four samples".into()));
        }
        if !(h > 0.0) {
            return Err(Error::Domain(format!("grid step must be positive, got {h}")));
        }
        Ok(Self { t0, h, values })
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.h * (self.values.len() - 1) as f64
    }

    /// Value at `t`, clamped to the grid.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.values.len();
        let x = ((t - self.t0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        // stencil i-1..i+2, shifted to stay inside
        let start = i.saturating_sub(1).min(n - 4);
        let s = x - start as f64;
        let f = &self.values[start..start + 4];
        // Lagrange basis on nodes 0, 1, 2, 3
        let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
        let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
        let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
        let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
        f[0] * l0 + f[1] * l1 + f[2] * l2 + f[3] * l3
    }
}
