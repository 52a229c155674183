//! Physical constants and the scaled unit system.
//!
//! Everything inside the crate works in scaled units: time in 1/ω₀, length in
//! the characteristic length l₀, mass in m₁ (the qubit mass) and curvatures in
//! m₁ω₀². Energies handed to the Fock solver are in ħω₀. With these choices
//! the Coulomb constant e²/(4πε₀) is exactly 1/2.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementary charge (C), exact in SI 2019.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity (F/m), CODATA 2022.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_818_8e-12;
/// Atomic mass constant (kg), CODATA 2022.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_068_92e-27;
/// Reduced Planck constant (J s), exact in SI 2019.
pub const HBAR: f64 = 1.054_571_817e-34;

/// e²/(4πε₀) in SI (J m).
pub fn coulomb_constant_si() -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * PI * VACUUM_PERMITTIVITY)
}

/// e²/(4πε₀) in scaled units.
pub const COULOMB_K: f64 = 0.5;

/// A singly charged ion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub label: String,
    /// Mass in atomic mass units.
    pub mass_u: f64,
}

impl IonSpecies {
    pub fn new(label: impl Into<String>, mass_u: f64) -> Result<Self> {
        if !(mass_u > 0.0) || !mass_u.is_finite() {
            return Err(Error::Domain(format!("ion mass must be > 0, got {mass_u}")));
        }
        Ok(Self {
            label: label.into(),
            mass_u,
        })
    }

    pub fn calcium40() -> Self {
        Self {
            label: "40Ca+".into(),
            mass_u: 40.0,
        }
    }

    pub fn magnesium24() -> Self {
        Self {
            label: "24Mg+".into(),
            mass_u: 24.0,
        }
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_u * ATOMIC_MASS_UNIT
    }
}

/// l₀ = (2e²/(4πε₀ m₁ω₀²))^(1/3), the separation of two identical ions of mass
/// `m1_kg` in one harmonic well of angular frequency `omega0`.
pub fn characteristic_length(m1_kg: f64, omega0: f64) -> Result<f64> {
    if !(m1_kg > 0.0) || !(omega0 > 0.0) {
        return Err(Error::Domain(format!(
            "characteristic length needs m1 > 0 and omega0 > 0 (got {m1_kg}, {omega0})"
        )));
    }
    Ok((2.0 * coulomb_constant_si() / (m1_kg * omega0 * omega0)).cbrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    Scaled,
    Si,
}

/// Quantities that cross the SI boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Time,
    Length,
    FrequencySq,
    Curvature,
    Energy,
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Quantity::Time),
            "length" => Ok(Quantity::Length),
            "frequency_sq" | "frequency²" => Ok(Quantity::FrequencySq),
            "curvature" => Ok(Quantity::Curvature),
            "energy" => Ok(Quantity::Energy),
            other => Err(Error::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Quantity::Time => "time",
            Quantity::Length => "length",
            Quantity::FrequencySq => "frequency_sq",
            Quantity::Curvature => "curvature",
            Quantity::Energy => "energy",
        };
        f.write_str(s)
    }
}

/// The unit system anchored on the qubit mass and the reference trap
/// frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Angular frequency ω₀ (rad/s).
    pub omega0: f64,
    /// Characteristic length l₀ (m).
    pub l0: f64,
    /// Reference mass m₁ (kg).
    pub m1_kg: f64,
    pub mode: UnitMode,
}

impl UnitSystem {
    pub fn new(m1_kg: f64, omega0: f64) -> Result<Self> {
        let l0 = characteristic_length(m1_kg, omega0)?;
        Ok(Self {
            omega0,
            l0,
            m1_kg,
            mode: UnitMode::Scaled,
        })
    }

    /// e²/(4πε₀) expressed in m₁ω₀²l₀³. Equals [`COULOMB_K`] up to rounding.
    pub fn coulomb_k(&self) -> f64 {
        coulomb_constant_si() / (self.m1_kg * self.omega0 * self.omega0 * self.l0.powi(3))
    }

    /// ħ in units of m₁ω₀l₀². Its square root is the zero-point length of the
    /// qubit in units of l₀.
    pub fn hbar_scaled(&self) -> f64 {
        HBAR / (self.m1_kg * self.omega0 * self.l0 * self.l0)
    }

    fn unit_of(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Time => 1.0 / self.omega0,
            Quantity::Length => self.l0,
            Quantity::FrequencySq => self.omega0 * self.omega0,
            Quantity::Curvature => self.m1_kg * self.omega0 * self.omega0,
            Quantity::Energy => HBAR * self.omega0,
        }
    }

    pub fn to_scaled(&self, q: Quantity, si_value: f64) -> f64 {
        si_value / self.unit_of(q)
    }

    pub fn from_scaled(&self, q: Quantity, scaled: f64) -> f64 {
        scaled * self.unit_of(q)
    }

    /// String-tagged variant used at the file/CLI boundary.
    pub fn to_scaled_tagged(&self, tag: &str, si_value: f64) -> Result<f64> {
        Ok(self.to_scaled(tag.parse()?, si_value))
    }

    pub fn from_scaled_tagged(&self, tag: &str, scaled: f64) -> Result<f64> {
        Ok(self.from_scaled(tag.parse()?, scaled))
    }
}
