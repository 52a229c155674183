//! Single-mode initial states shared by the Gaussian and Fock solvers.
//!
//! Quadratures are in zero-point units of a reference oscillator of
//! frequency ω₀: Q = (a + a†)/√2, P = −i(a − a†)/√2, so the vacuum has
//! ⟨Q²⟩ = ⟨P²⟩ = 1/2.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeInput {
    Vacuum,
    Thermal(f64),
    Fock(usize),
    Coherent(Complex64),
    /// Quadrature squeezing in dB along Q.
    Squeezed(f64),
}

impl ModeInput {
    /// Coherent state with real amplitude and the given mean occupation.
    pub fn coherent_with_mean(n: f64) -> Self {
        ModeInput::Coherent(Complex64::new(n.sqrt(), 0.0))
    }

    /// Mean occupation ⟨a†a⟩, displacement included.
    pub fn mean_occupation(&self) -> f64 {
        match *self {
            ModeInput::Vacuum => 0.0,
            ModeInput::Thermal(n) => n,
            ModeInput::Fock(n) => n as f64,
            ModeInput::Coherent(a) => a.norm_sqr(),
            ModeInput::Squeezed(db) => {
                let r = squeeze_parameter(db);
                r.sinh().powi(2)
            }
        }
    }

    /// First moments (⟨Q⟩, ⟨P⟩) and the symmetrized covariance. Exact for
    /// every variant as far as first and second moments go.
    pub fn moments(&self) -> (Vector2<f64>, Matrix2<f64>) {
        let half = Matrix2::identity() * 0.5;
        match *self {
            ModeInput::Vacuum => (Vector2::zeros(), half),
            ModeInput::Thermal(n) => (Vector2::zeros(), half * (2.0 * n + 1.0)),
            ModeInput::Fock(n) => (Vector2::zeros(), half * (2.0 * n as f64 + 1.0)),
            ModeInput::Coherent(a) => (
                Vector2::new(2f64.sqrt() * a.re, 2f64.sqrt() * a.im),
                half,
            ),
            ModeInput::Squeezed(db) => {
                let r = squeeze_parameter(db);
                (
                    Vector2::zeros(),
                    Matrix2::new(0.5 * (-2.0 * r).exp(), 0.0, 0.0, 0.5 * (2.0 * r).exp()),
                )
            }
        }
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, ModeInput::Fock(n) if *n > 0)
    }
}

/// r such that the squeezed variance is e^{−2r}/2 for `db` decibels.
pub fn squeeze_parameter(db: f64) -> f64 {
    db / 20.0 * std::f64::consts::LN_10
}

impl FromStr for ModeInput {
    type Err = Error;

    /// `vacuum`, `thermal:N`, `fock:N`, `coherent:N` (mean occupation, real
    /// amplitude) or `squeezed:DB`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("input", format!("cannot parse state '{s}'"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            let v: f64 = a.ok_or_else(bad)?.trim_end_matches("dB").parse().map_err(|_| bad())?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        match kind {
            "vacuum" | "ground" if arg.is_none() => Ok(ModeInput::Vacuum),
            "thermal" => Ok(ModeInput::Thermal(num(arg)?)),
            "coherent" => Ok(ModeInput::coherent_with_mean(num(arg)?)),
            "squeezed" => Ok(ModeInput::Squeezed(num(arg)?)),
            "fock" => {
                let v = num(arg)?;
                if v.fract() != 0.0 {
                    return Err(bad());
                }
                Ok(ModeInput::Fock(v as usize))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ModeInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeInput::Vacuum => write!(f, "vacuum"),
            ModeInput::Thermal(n) => write!(f, "thermal:{n}"),
            ModeInput::Fock(n) => write!(f, "fock:{n}"),
            ModeInput::Coherent(a) if a.im == 0.0 => write!(f, "coherent:{}", a.re * a.re),
            ModeInput::Coherent(a) => write!(f, "coherent:{}+{}i", a.re, a.im),
            ModeInput::Squeezed(db) => write!(f, "squeezed:{db}"),
        }
    }
}

impl Serialize for ModeInput {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!("vacuum".parse::<ModeInput>().unwrap(), ModeInput::Vacuum);
        assert_eq!("thermal:5".parse::<ModeInput>().unwrap(), ModeInput::Thermal(5.0));
        assert_eq!("fock:3".parse::<ModeInput>().unwrap(), ModeInput::Fock(3));
        assert_eq!("squeezed:5dB".parse::<ModeInput>().unwrap(), ModeInput::Squeezed(5.0));
        let c: ModeInput = "coherent:40".parse().unwrap();
        assert!((c.mean_occupation() - 40.0).abs() < 1e-12);
        for bad in ["thermal", "fock:1.5", "coherent:-1", "warm:3", "thermal:x"] {
            assert!(bad.parse::<ModeInput>().is_err(), "{bad}");
        }
    }

    #[test]
    fn squeezed_moments_have_minimum_uncertainty() {
        let (m, c) = ModeInput::Squeezed(5.0).moments();
        assert_eq!(m, Vector2::zeros());
        assert!((c[(0, 0)] * c[(1, 1)] - 0.25).abs() < 1e-15);
        // 5 dB: variance ratio 10^(-0.5)
        assert!((c[(0, 0)] / 0.5 - 10f64.powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn coherent_moments() {
        let (m, c) = ModeInput::Coherent(Complex64::new(1.5, -0.5)).moments();
        // n = (<Q>^2 + <P>^2)/2
        assert!(((m[0] * m[0] + m[1] * m[1]) / 2.0 - 2.5).abs() < 1e-14);
        assert_eq!(c, Matrix2::identity() * 0.5);
    }
}
