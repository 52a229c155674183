//! Closed-form families for the auxiliary (Ermakov) function b(t).
//!
//! Two families are provided: a Gaussian bump for the swapping collision,
//! which returns to b = 1 on both sides, and a sigmoid for merging two ions
//! into one well, which settles at b = 3^(-1/4). All derivatives come from
//! Taylor jets, never from finite differences.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Order of the jets used when evaluating b. Seven coefficients leave enough
/// headroom for b̈ to be differentiated twice more (for r̈).
pub const JET_ORDER: usize = 7;
pub type BJet = Jet<JET_ORDER>;

/// 3^(1/4)
pub fn quartic_root_3() -> f64 {
    3f64.powf(0.25)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzKind {
    GaussianBump,
    CombineSigmoid,
    /// b ≡ 1, the free oscillator.
    Constant,
}

/// Variants of the merging sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineForm {
    /// (3^¼ − 1)/(e^{(t−T/2)/σ} + 3^¼) + 3^(−¼). Goes from 1 to 3^(−¼).
    #[default]
    SignFixed,
    /// (1 − 3^(−¼))/(e^{(t−T/2)/σ} + 1) + 3^(−¼). Same curve, midpoint at T/2.
    CenteredLogistic,
    /// (1 − 3^¼)/(e^{(t−T/2)/σ} + 3^¼) + 3^(−¼). Tends to 2·3^(−¼) − 1 for
    /// t → −∞; kept for comparison only.
    Unshifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub kind: AnsatzKind,
    /// Width σ in units of 1/ω₀.
    pub sigma: f64,
    /// Process time T in units of 1/ω₀, once resolved.
    pub process_time: Option<f64>,
    #[serde(default)]
    pub combine_form: CombineForm,
}

/// b and its first two derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BSample {
    pub b: f64,
    pub b_dot: f64,
    pub b_ddot: f64,
}

impl AnsatzSpec {
    pub fn gaussian_bump(sigma: f64) -> Result<Self> {
        Self::new(AnsatzKind::GaussianBump, sigma)
    }

    pub fn combine_sigmoid(sigma: f64) -> Result<Self> {
        Self::new(AnsatzKind::CombineSigmoid, sigma)
    }

    pub fn constant(duration: f64) -> Self {
        Self {
            kind: AnsatzKind::Constant,
            sigma: 1.0,
            process_time: Some(duration),
            combine_form: CombineForm::SignFixed,
        }
    }

    pub fn new(kind: AnsatzKind, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("ansatz sigma must be > 0, got {sigma}")));
        }
        Ok(Self {
            kind,
            sigma,
            process_time: None,
            combine_form: CombineForm::SignFixed,
        })
    }

    pub fn with_process_time(mut self, t: f64) -> Self {
        self.process_time = Some(t);
        self
    }

    pub fn with_combine_form(mut self, form: CombineForm) -> Self {
        self.combine_form = form;
        self
    }

    pub fn process_time(&self) -> Result<f64> {
        self.process_time.ok_or(Error::UnresolvedProcessTime)
    }

    /// Values b should approach before and after the process.
    pub fn boundary_targets(&self) -> (f64, f64) {
        match self.kind {
            AnsatzKind::GaussianBump | AnsatzKind::Constant => (1.0, 1.0),
            AnsatzKind::CombineSigmoid => (1.0, 1.0 / quartic_root_3()),
        }
    }

    /// b(t) as a Taylor jet around `t`.
    pub fn b_jet(&self, t: f64) -> Result<BJet> {
        let big_t = self.process_time()?;
        let u = BJet::variable(t) - 0.5 * big_t;
        let sigma = self.sigma;
        Ok(match self.kind {
            AnsatzKind::Constant => BJet::constant(1.0),
            AnsatzKind::GaussianBump => {
                let g = (-(u * u) * (1.0 / (sigma * sigma))).exp() * (PI.sqrt() / sigma);
                (g + 1.0).powf(-0.5)
            }
            AnsatzKind::CombineSigmoid => {
                let q = quartic_root_3();
                let (num, den) = match self.combine_form {
                    CombineForm::SignFixed => (q - 1.0, q),
                    CombineForm::CenteredLogistic => (1.0 - 1.0 / q, 1.0),
                    CombineForm::Unshifted => (1.0 - q, q),
                };
                let s = u * (1.0 / sigma);
                let frac = if s.value() <= 0.0 {
                    // num / (e^s + den)
                    BJet::constant(num) / (s.exp() + den)
                } else {
                    // num e^{-s} / (1 + den e^{-s}), safe for large s
                    let e = (-s).exp();
                    e * num / (e * den + 1.0)
                };
                frac + 1.0 / q
            }
        })
    }

    /// b(t) together with b(t) − 1, the latter formed without cancellation
    /// so that the far tails keep full relative precision.
    pub fn b_excess_jets(&self, t: f64) -> Result<(BJet, BJet)> {
        let b = self.b_jet(t)?;
        let big_t = self.process_time()?;
        let u = BJet::variable(t) - 0.5 * big_t;
        let sigma = self.sigma;
        let d = match self.kind {
            AnsatzKind::Constant => BJet::constant(0.0),
            AnsatzKind::GaussianBump => {
                let g = (-(u * u) * (1.0 / (sigma * sigma))).exp() * (PI.sqrt() / sigma);
                -(g * b * b / (b + 1.0))
            }
            AnsatzKind::CombineSigmoid => {
                let q = quartic_root_3();
                let (num, den) = match self.combine_form {
                    CombineForm::SignFixed => (q - 1.0, q),
                    CombineForm::CenteredLogistic => (1.0 - 1.0 / q, 1.0),
                    CombineForm::Unshifted => return Ok((b, b - 1.0)),
                };
                // num/(e^s + den) - num/den = -(num/den) e^s / (e^s + den)
                let s = u * (1.0 / sigma);
                let frac = if s.value() <= 0.0 {
                    let e = s.exp();
                    e / (e + den)
                } else {
                    BJet::constant(1.0) / ((-s).exp() * den + 1.0)
                };
                frac * (-num / den)
            }
        };
        Ok((b, d))
    }

    pub fn eval_b(&self, t: f64) -> Result<BSample> {
        let j = self.b_jet(t)?;
        Ok(BSample {
            b: j.deriv(0),
            b_dot: j.deriv(1),
            b_ddot: j.deriv(2),
        })
    }
}

/// Densely sampled auxiliary function on [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryTrajectory {
    pub times: Vec<f64>,
    pub b: Vec<f64>,
    pub b_dot: Vec<f64>,
    pub b_ddot: Vec<f64>,
    /// ∫₀ᵗ ω₀/b² dt′
    pub theta_minus: Vec<f64>,
    pub spec: AnsatzSpec,
}

impl AuxiliaryTrajectory {
    /// Samples the ansatz on a uniform grid with `steps` intervals over
    /// [0, T]. The phase is accumulated with composite Simpson weights.
    pub fn sample(spec: &AnsatzSpec, steps: usize) -> Result<Self> {
        let big_t = spec.process_time()?;
        if steps < 2 {
            return Err(Error::Domain("trajectory needs at least two intervals".into()));
        }
        let h = big_t / steps as f64;
        let mut times = Vec::with_capacity(steps + 1);
        let mut b = Vec::with_capacity(steps + 1);
        let mut b_dot = Vec::with_capacity(steps + 1);
        let mut b_ddot = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let t = i as f64 * h;
            let s = spec.eval_b(t)?;
            if !(s.b > 0.0) {
                return Err(Error::Domain(format!("b({t}) = {} is not positive", s.b)));
            }
            times.push(t);
            b.push(s.b);
            b_dot.push(s.b_dot);
            b_ddot.push(s.b_ddot);
        }
        let integrand: Vec<f64> = b.iter().map(|x| 1.0 / (x * x)).collect();
        let theta_minus = cumulative_simpson(&integrand, h);
        Ok(Self {
            times,
            b,
            b_dot,
            b_ddot,
            theta_minus,
            spec: *spec,
        })
    }

    pub fn process_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Running integral of uniformly sampled `f`. Even nodes get plain composite
/// Simpson; odd nodes add the quadratic-interpolant integral over one panel.
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (f[0] + f[1]);
        return out;
    }
    let mut i = 2;
    while i < n {
        out[i] = out[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
        out[i - 1] = out[i - 2] + h / 12.0 * (5.0 * f[i - 2] + 8.0 * f[i - 1] - f[i]);
        i += 2;
    }
    if n % 2 == 0 {
        let k = n - 1;
        out[k] = out[k - 1] + h / 12.0 * (-f[k - 2] + 8.0 * f[k - 1] + 5.0 * f[k]);
    }
    out
}

/// Integral of uniformly sampled `f` (odd length) by composite Simpson.
pub fn simpson(f: &[f64], h: f64) -> f64 {
    *cumulative_simpson(f, h).last().unwrap_or(&0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointDeviation {
    pub b_deviation: f64,
    pub b_dot: f64,
    pub b_ddot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub start: EndpointDeviation,
    pub end: EndpointDeviation,
    pub threshold: f64,
    pub violated: bool,
}

impl BoundaryReport {
    pub fn max_deviation(&self) -> f64 {
        [
            self.start.b_deviation,
            self.start.b_dot,
            self.end.b_deviation,
            self.end.b_dot,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-3;

/// Compares both ends of the trajectory against the boundary values of its
/// ansatz family. A violation is any |b − target| or |ḃ| above `threshold`.
pub fn validate_boundaries(traj: &AuxiliaryTrajectory, threshold: f64) -> BoundaryReport {
    let (start_target, end_target) = traj.spec.boundary_targets();
    let at = |i: usize, target: f64| EndpointDeviation {
        b_deviation: (traj.b[i] - target).abs(),
        b_dot: traj.b_dot[i].abs(),
        b_ddot: traj.b_ddot[i].abs(),
    };
    let start = at(0, start_target);
    let end = at(traj.len() - 1, end_target);
    let mut report = BoundaryReport {
        start,
        end,
        threshold,
        violated: false,
    };
    report.violated = report.max_deviation() > threshold;
    report
}
