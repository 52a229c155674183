//! Run configuration.
//!
//! The on-disk format is TOML with the keys below. Every key is read
//! explicitly so that errors can name the offending key.
//!
//! ```toml
//! qubit_mass_u = 40.0
//! coolant_mass_u = 24.0
//! omega0_hz = 1.0e6
//! phase_tolerance = 1e-4
//! sample_dt_scaled = 0.01
//! strict_curvature = false
//!
//! [ansatz]
//! kind = "gaussian_bump"
//! sigma_scaled = 1.4142135623730951
//!
//! [combine]            # optional, used by the merge step
//! sigma_scaled = 0.2
//! r_start_l0 = 100.0
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::ansatz::{AnsatzKind, AnsatzSpec, CombineForm};
use crate::error::{Error, Result};
use crate::units::{IonSpecies, UnitSystem};

pub const DEFAULT_PHASE_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_SAMPLE_DT: f64 = 0.01;
pub const DEFAULT_COMBINE_SIGMA: f64 = 0.2;
pub const DEFAULT_COMBINE_R_START: f64 = 100.0;

/// Plain mirror of the configuration file, used for manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub qubit_mass_u: f64,
    pub coolant_mass_u: f64,
    pub omega0_hz: f64,
    pub ansatz: AnsatzSection,
    pub phase_tolerance: f64,
    pub sample_dt_scaled: f64,
    pub strict_curvature: bool,
    pub combine: CombineSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSection {
    pub kind: AnsatzKind,
    pub sigma_scaled: f64,
    #[serde(default)]
    pub combine_form: CombineForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombineSection {
    pub sigma_scaled: f64,
    pub r_start_l0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionConfig {
    pub qubit: IonSpecies,
    pub coolant: IonSpecies,
    pub units: UnitSystem,
    pub ansatz: AnsatzSpec,
    pub phase_tolerance: f64,
    pub sample_dt: f64,
    pub strict_curvature: bool,
    pub combine_sigma: f64,
    pub combine_r_start: f64,
}

impl CollisionConfig {
    /// ⁴⁰Ca⁺ qubit, ²⁴Mg⁺ coolant, ω₀ = 2π·1 MHz, ω₀²σ² = 2.
    pub fn ca_mg_default() -> Self {
        Self::from_file_struct(&ConfigFile {
            qubit_mass_u: 40.0,
            coolant_mass_u: 24.0,
            omega0_hz: 1e6,
            ansatz: AnsatzSection {
                kind: AnsatzKind::GaussianBump,
                sigma_scaled: 2f64.sqrt(),
                combine_form: CombineForm::SignFixed,
            },
            phase_tolerance: DEFAULT_PHASE_TOLERANCE,
            sample_dt_scaled: DEFAULT_SAMPLE_DT,
            strict_curvature: false,
            combine: CombineSection {
                sigma_scaled: DEFAULT_COMBINE_SIGMA,
                r_start_l0: DEFAULT_COMBINE_R_START,
            },
        })
        .expect("default configuration is valid")
    }

    /// Coolant mass over qubit mass.
    pub fn mu(&self) -> f64 {
        self.coolant.mass_u / self.qubit.mass_u
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        self.ansatz = AnsatzSpec::new(self.ansatz.kind, sigma)?
            .with_combine_form(self.ansatz.combine_form);
        Ok(self)
    }

    pub fn with_species(mut self, qubit: IonSpecies, coolant: IonSpecies) -> Result<Self> {
        self.units = UnitSystem::new(qubit.mass_kg(), self.units.omega0)?;
        self.qubit = qubit;
        self.coolant = coolant;
        Ok(self)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::config("<file>", format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<syntax>", e.message().to_string()))?;
        let file = parse_table(&table)?;
        Self::from_file_struct(&file)
    }

    pub fn from_file_struct(f: &ConfigFile) -> Result<Self> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::config(key, format!("must be a positive number, got {v}")))
            }
        };
        positive("qubit_mass_u", f.qubit_mass_u)?;
        positive("coolant_mass_u", f.coolant_mass_u)?;
        positive("omega0_hz", f.omega0_hz)?;
        positive("ansatz.sigma_scaled", f.ansatz.sigma_scaled)?;
        positive("phase_tolerance", f.phase_tolerance)?;
        positive("sample_dt_scaled", f.sample_dt_scaled)?;
        positive("combine.sigma_scaled", f.combine.sigma_scaled)?;
        if !(f.combine.r_start_l0 > 1.0) {
            return Err(Error::config("combine.r_start_l0", "must exceed 1 l0"));
        }
        let qubit = IonSpecies::new(species_label(f.qubit_mass_u), f.qubit_mass_u)?;
        let coolant = IonSpecies::new(species_label(f.coolant_mass_u), f.coolant_mass_u)?;
        let units = UnitSystem::new(qubit.mass_kg(), 2.0 * PI * f.omega0_hz)?;
        let ansatz = AnsatzSpec::new(f.ansatz.kind, f.ansatz.sigma_scaled)?
            .with_combine_form(f.ansatz.combine_form);
        Ok(Self {
            qubit,
            coolant,
            units,
            ansatz,
            phase_tolerance: f.phase_tolerance,
            sample_dt: f.sample_dt_scaled,
            strict_curvature: f.strict_curvature,
            combine_sigma: f.combine.sigma_scaled,
            combine_r_start: f.combine.r_start_l0,
        })
    }

    pub fn to_file_struct(&self) -> ConfigFile {
        ConfigFile {
            qubit_mass_u: self.qubit.mass_u,
            coolant_mass_u: self.coolant.mass_u,
            omega0_hz: self.units.omega0 / (2.0 * PI),
            ansatz: AnsatzSection {
                kind: self.ansatz.kind,
                sigma_scaled: self.ansatz.sigma,
                combine_form: self.ansatz.combine_form,
            },
            phase_tolerance: self.phase_tolerance,
            sample_dt_scaled: self.sample_dt,
            strict_curvature: self.strict_curvature,
            combine: CombineSection {
                sigma_scaled: self.combine_sigma,
                r_start_l0: self.combine_r_start,
            },
        }
    }
}

fn species_label(mass_u: f64) -> String {
    match mass_u {
        m if m == 40.0 => "40Ca+".into(),
        m if m == 24.0 => "24Mg+".into(),
        m if m == 9.0 => "9Be+".into(),
        m => format!("m={m}u"),
    }
}

const TOP_KEYS: &[&str] = &[
    "qubit_mass_u",
    "coolant_mass_u",
    "omega0_hz",
    "ansatz",
    "phase_tolerance",
    "sample_dt_scaled",
    "strict_curvature",
    "combine",
];

fn parse_table(t: &Table) -> Result<ConfigFile> {
    for key in t.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            return Err(Error::config(key.as_str(), "unknown key"));
        }
    }
    let ansatz = sub_table(t, "ansatz")?
        .ok_or_else(|| Error::config("ansatz.kind", "missing required key"))?;
    for key in ansatz.keys() {
        if !["kind", "sigma_scaled", "combine_form"].contains(&key.as_str()) {
            return Err(Error::config(format!("ansatz.{key}"), "unknown key"));
        }
    }
    let kind = match get_str(ansatz, "ansatz.kind", "kind")? {
        Some("gaussian_bump") => AnsatzKind::GaussianBump,
        Some("combine_sigmoid") => AnsatzKind::CombineSigmoid,
        Some(other) => {
            return Err(Error::config(
                "ansatz.kind",
                format!("expected gaussian_bump or combine_sigmoid, got `{other}`"),
            ))
        }
        None => return Err(Error::config("ansatz.kind", "missing required key")),
    };
    let combine_form = match get_str(ansatz, "ansatz.combine_form", "combine_form")? {
        None | Some("sign_fixed") => CombineForm::SignFixed,
        Some("centered_logistic") => CombineForm::CenteredLogistic,
        Some("unshifted") => CombineForm::Unshifted,
        Some(other) => {
            return Err(Error::config(
                "ansatz.combine_form",
                format!("unknown form `{other}`"),
            ))
        }
    };
    let combine = sub_table(t, "combine")?;
    if let Some(c) = combine {
        for key in c.keys() {
            if !["sigma_scaled", "r_start_l0"].contains(&key.as_str()) {
                return Err(Error::config(format!("combine.{key}"), "unknown key"));
            }
        }
    }
    let combine_num = |key: &str, full: &str, default: f64| -> Result<f64> {
        match combine {
            Some(c) => Ok(get_f64(c, full, key)?.unwrap_or(default)),
            None => Ok(default),
        }
    };
    Ok(ConfigFile {
        qubit_mass_u: require(get_f64(t, "qubit_mass_u", "qubit_mass_u")?, "qubit_mass_u")?,
        coolant_mass_u: require(
            get_f64(t, "coolant_mass_u", "coolant_mass_u")?,
            "coolant_mass_u",
        )?,
        omega0_hz: require(get_f64(t, "omega0_hz", "omega0_hz")?, "omega0_hz")?,
        ansatz: AnsatzSection {
            kind,
            sigma_scaled: require(
                get_f64(ansatz, "ansatz.sigma_scaled", "sigma_scaled")?,
                "ansatz.sigma_scaled",
            )?,
            combine_form,
        },
        phase_tolerance: get_f64(t, "phase_tolerance", "phase_tolerance")?
            .unwrap_or(DEFAULT_PHASE_TOLERANCE),
        sample_dt_scaled: get_f64(t, "sample_dt_scaled", "sample_dt_scaled")?
            .unwrap_or(DEFAULT_SAMPLE_DT),
        strict_curvature: match t.get("strict_curvature") {
            None => false,
            Some(Value::Boolean(b)) => *b,
            Some(_) => return Err(Error::config("strict_curvature", "expected a boolean")),
        },
        combine: CombineSection {
            sigma_scaled: combine_num("sigma_scaled", "combine.sigma_scaled", DEFAULT_COMBINE_SIGMA)?,
            r_start_l0: combine_num("r_start_l0", "combine.r_start_l0", DEFAULT_COMBINE_R_START)?,
        },
    })
}

fn require(v: Option<f64>, key: &str) -> Result<f64> {
    v.ok_or_else(|| Error::config(key, "missing required key"))
}

fn sub_table<'a>(t: &'a Table, key: &str) -> Result<Option<&'a Table>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Table(s)) => Ok(Some(s)),
        Some(_) => Err(Error::config(key, "expected a table")),
    }
}

fn get_f64(t: &Table, full: &str, key: &str) -> Result<Option<f64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Float(x)) => Ok(Some(*x)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(_) => Err(Error::config(full, "expected a number")),
    }
}

fn get_str<'a>(t: &'a Table, full: &str, key: &str) -> Result<Option<&'a str>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.as_str())),
        Some(_) => Err(Error::config(full, "expected a string")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
qubit_mass_u = 40
coolant_mass_u = 24.0
omega0_hz = 1.0e6
sample_dt_scaled = 0.01
ansatz.kind = "gaussian_bump"
ansatz.sigma_scaled = 1.4142135623730951
"#;

    #[test]
    fn parses_dotted_keys() {
        let c = CollisionConfig::from_toml_str(GOOD).unwrap();
        assert!((c.mu() - 0.6).abs() < 1e-15);
        assert_eq!(c.ansatz.kind, AnsatzKind::GaussianBump);
        assert_eq!(c.phase_tolerance, DEFAULT_PHASE_TOLERANCE);
        assert!(!c.strict_curvature);
        assert_eq!(c, CollisionConfig::ca_mg_default());
    }

    #[test]
    fn snapshot_round_trip() {
        let c = CollisionConfig::ca_mg_default();
        let back = CollisionConfig::from_file_struct(&c.to_file_struct()).unwrap();
        assert_eq!(c, back);
    }

    fn key_of(text: &str) -> String {
        match CollisionConfig::from_toml_str(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(&GOOD.replace("omega0_hz = 1.0e6", "omega0_hz = \"fast\"")), "omega0_hz");
        assert_eq!(key_of(&GOOD.replace("gaussian_bump", "boxcar")), "ansatz.kind");
        assert_eq!(key_of(&format!("{GOOD}\nbogus = 1\n")), "bogus");
        assert_eq!(key_of(&GOOD.replace("coolant_mass_u = 24.0", "coolant_mass_u = -3")), "coolant_mass_u");
        assert_eq!(key_of(&GOOD.replace("qubit_mass_u = 40\n", "")), "qubit_mass_u");
        assert_eq!(key_of(&format!("{GOOD}\nphase_tolerance = 0\n")), "phase_tolerance");
        assert_eq!(key_of("qubit_mass_u = = 3"), "<syntax>");
    }
}
