//! Exit codes and the machine-readable error line.

use std::path::{Path, PathBuf};

use ioncool::config::CollisionConfig;
use ioncool::Error;
use serde_json::json;

pub const CONFIG: u8 = 2;
pub const INPUT: u8 = 3;
pub const PHYSICS: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
    pub key: Option<String>,
    /// Printed on stdout even though the command failed.
    pub summary: Option<serde_json::Value>,
}

impl Failure {
    pub fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
            key: None,
            summary: None,
        }
    }

    /// A result that ran to completion but misses its acceptance bound.
    pub fn rejected(message: impl Into<String>, summary: serde_json::Value) -> Self {
        Self {
            summary: Some(summary),
            ..Self::new(PHYSICS, "rejected", message)
        }
    }

    /// Treats any error as a problem with an input file.
    pub fn input(e: Error) -> Self {
        let mut f = Self::from(e);
        if f.code != CONFIG {
            f.code = INPUT;
        }
        f
    }

    pub fn to_json(&self) -> String {
        let mut v = json!({
            "error": self.kind,
            "message": self.message,
            "exit_code": self.code,
        });
        if let Some(k) = &self.key {
            v["key"] = json!(k);
        }
        v.to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, kind) = match &e {
            Error::Config { .. } | Error::UnknownUnit(_) | Error::SpeciesMismatch(_) => (CONFIG, "config"),
            Error::WaveformFile(_) | Error::Io(_) | Error::Json(_) => (INPUT, "input"),
            Error::Validation(_) => (PHYSICS, "validation"),
            Error::Domain(_) => (CONFIG, "domain"),
            _ => (PHYSICS, "physics"),
        };
        let mut f = Failure::new(code, kind, message);
        if let Error::Config { key, .. } = e {
            f.key = Some(key);
        }
        f
    }
}

pub fn load_config(path: &Path) -> Result<CollisionConfig, Failure> {
    CollisionConfig::from_path(path).map_err(Failure::from)
}

pub fn absolute(path: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(path).map_err(|e| Failure::new(INPUT, "input", format!("{}: {e}", path.display())))
}
