//! Waveform files, traces, run manifests.
//!
//! Waveform CSV columns: `t_scaled, r_l0, xi1_sq, xi2_sq, R1_l0, R2_l0,
//! omega_minus_sq`, one row per sample, `{:.16e}` so that values survive
//! the round trip bit for bit.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{CollisionConfig, ConfigFile};
use crate::error::{Error, Result};
use crate::fock::FockTracePoint;
use crate::gaussian::TracePoint;
use crate::pulse::{
    coulomb_curvature, finite_differences, mode_coupling, mode_frequencies_sq, synthesize_combine, synthesize_sbs,
    ProcessKind, ValidationSummary, Waveform,
};
use crate::units::{Quantity, UnitSystem, COULOMB_K};

pub const WAVEFORM_HEADER: &str = "t_scaled,r_l0,xi1_sq,xi2_sq,R1_l0,R2_l0,omega_minus_sq";
pub const WAVEFORM_SI_HEADER: &str = "t_us,r_um,xi1_sq_N_per_m,xi2_sq_N_per_m,R1_um,R2_um,omega_minus_sq_rad2_per_s2";

/// Relative gap allowed between r̈ recovered from the two centre columns.
pub const RDDOT_CONSISTENCY_TOLERANCE: f64 = 1e-8;
/// Loose check of the recovered r̈ against differences of the r column.
pub const RDDOT_DIFFERENCE_TOLERANCE: f64 = 1e-2;
/// Largest |r(T) − 1| for a file to count as a merge.
const COMBINE_END_TOLERANCE: f64 = 1e-2;

pub fn waveform_csv(wf: &Waveform) -> String {
    let mut out = String::with_capacity(wf.len() * 170);
    out.push_str(WAVEFORM_HEADER);
    out.push('\n');
    for i in 0..wf.len() {
        let row = [
            wf.times[i],
            wf.r[i],
            wf.xi1_sq[i],
            wf.xi2_sq[i],
            wf.center1[i],
            wf.center2[i],
            wf.omega_minus_sq[i],
        ];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Same samples in SI: μs, μm, N/m (ξ² in units of m₁ω₀²) and rad²/s².
pub fn waveform_si_csv(wf: &Waveform, units: &UnitSystem) -> String {
    let um = |x: f64| units.from_scaled(Quantity::Length, x) * 1e6;
    let mut out = String::from(WAVEFORM_SI_HEADER);
    out.push('\n');
    for i in 0..wf.len() {
        let row = [
            units.from_scaled(Quantity::Time, wf.times[i]) * 1e6,
            um(wf.r[i]),
            units.from_scaled(Quantity::Curvature, wf.xi1_sq[i]),
            units.from_scaled(Quantity::Curvature, wf.xi2_sq[i]),
            um(wf.center1[i]),
            um(wf.center2[i]),
            units.from_scaled(Quantity::FrequencySq, wf.omega_minus_sq[i]),
        ];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a waveform file and rebuilds the derived series. The mass ratio
/// follows from decoupling, ξ₂² + 2c = μ(ξ₁² + 2c); r̈ follows exactly from
/// the qubit force balance and is cross-checked against the coolant's.
pub fn parse_waveform_csv(text: &str) -> Result<Waveform> {
    let bad = |m: String| Error::WaveformFile(m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let expected: Vec<&str> = WAVEFORM_HEADER.split(',').collect();
    if names != expected {
        return Err(bad(format!("header must be '{WAVEFORM_HEADER}', got '{header}'")));
    }
    let mut cols: [Vec<f64>; 7] = Default::default();
    for (k, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(bad(format!("row {}: expected 7 columns, got {}", k + 1, cells.len())));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}, column {}: '{cell}' is not a number", k + 1, expected[c])))?;
            if !v.is_finite() {
                return Err(bad(format!("row {}, column {}: non-finite value", k + 1, expected[c])));
            }
            cols[c].push(v);
        }
    }
    let [times, r, xi1_sq, xi2_sq, center1, center2, omega_minus_sq] = cols;
    let n = times.len();
    if n < 6 {
        return Err(bad(format!("need at least 6 samples, got {n}")));
    }
    let h = times[1] - times[0];
    if !(h > 0.0) {
        return Err(bad("time column must increase".into()));
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(bad(format!("time grid is not uniform at row {}", i + 2)));
        }
    }
    if let Some(i) = r.iter().position(|&x| x <= 0.0) {
        return Err(Error::Validation(format!("non-positive separation at row {}", i + 1)));
    }

    let mus: Vec<f64> = (0..n)
        .map(|i| {
            let c2 = 2.0 * coulomb_curvature(r[i]);
            (xi2_sq[i] + c2) / (xi1_sq[i] + c2)
        })
        .collect();
    let mu = mus[0];
    if !(mu > 0.0) {
        return Err(Error::Validation(format!("inferred mass ratio {mu} is not positive")));
    }
    if let Some(m) = mus.iter().find(|m| (*m - mu).abs() > 1e-9 * mu) {
        return Err(Error::Validation(format!(
            "mass ratio is not constant along the file ({mu} vs {m}); the modes are coupled"
        )));
    }

    let mut r_ddot = Vec::with_capacity(n);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let k = COULOMB_K / (r[i] * r[i]);
        let from1 = 2.0 * (xi1_sq[i] * (center1[i] - 0.5 * r[i]) + k);
        let from2 = 2.0 * (k - xi2_sq[i] * (center2[i] + 0.5 * r[i])) / mu;
        worst = worst.max((from1 - from2).abs() / (1.0 + from1.abs()));
        r_ddot.push(from1);
    }
    if worst > RDDOT_CONSISTENCY_TOLERANCE {
        return Err(Error::Validation(format!(
            "centre columns imply different accelerations (relative gap {worst:.3e})"
        )));
    }
    let (r_dot, r_dd_fd) = finite_differences(&r, h);
    let fd_gap = (2..n - 2)
        .map(|i| (r_dd_fd[i] - r_ddot[i]).abs())
        .fold(0.0_f64, f64::max);
    if fd_gap > RDDOT_DIFFERENCE_TOLERANCE {
        return Err(Error::Validation(format!(
            "centre columns disagree with the curvature of r(t) (gap {fd_gap:.3e})"
        )));
    }

    let kind = if (r[n - 1] - 1.0).abs() <= COMBINE_END_TOLERANCE {
        ProcessKind::Combine
    } else {
        ProcessKind::Sbs
    };
    let mut omega_plus_sq = Vec::with_capacity(n);
    let mut coupling = Vec::with_capacity(n);
    for i in 0..n {
        omega_plus_sq.push(mode_frequencies_sq(xi1_sq[i], xi2_sq[i], r[i], mu).0);
        coupling.push(mode_coupling(xi1_sq[i], xi2_sq[i], r[i], mu));
    }
    Ok(Waveform {
        kind,
        mu,
        process_time: times[n - 1] - times[0],
        times,
        r,
        r_dot,
        r_ddot,
        xi1_sq,
        xi2_sq,
        center1,
        center2,
        omega_minus_sq,
        omega_plus_sq,
        coupling,
        aux: None,
        curvature_warning: None,
    })
}

/// Reads and re-validates a waveform file.
pub fn load_waveform(path: impl AsRef<Path>) -> Result<(Waveform, ValidationSummary)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::WaveformFile(format!("{}: {e}", path.display())))?;
    let wf = parse_waveform_csv(&text)?;
    let summary = wf.validate()?;
    Ok((wf, summary))
}

pub fn gaussian_trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("t_scaled,n1,n2,n_plus,n_minus\n");
    for p in trace {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            p.t, p.n1, p.n2, p.n_plus, p.n_minus
        ));
    }
    out
}

pub fn fock_trace_csv(trace: &[FockTracePoint]) -> String {
    let mut out = String::from("t_scaled,n1,n2,norm\n");
    for p in trace {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", p.t, p.n1, p.n2, p.norm));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one command run. Only `created_unix` depends on the clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: serde_json::Value,
    pub config: Option<ConfigFile>,
    pub process_time: Option<f64>,
    pub artifacts: Vec<Artifact>,
    pub created_unix: u64,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value, config: Option<&CollisionConfig>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            parameters,
            config: config.map(CollisionConfig::to_file_struct),
            process_time: None,
            artifacts: Vec::new(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::WaveformFile(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::WaveformFile(format!("{}: {e}", path.display())))
    }

    pub fn collision_config(&self) -> Result<CollisionConfig> {
        let file = self
            .config
            .as_ref()
            .ok_or_else(|| Error::config("config", "manifest carries no configuration"))?;
        CollisionConfig::from_file_struct(file)
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

/// Writes artifacts into one directory and records their digests.
pub struct ArtifactWriter {
    dir: PathBuf,
    pub manifest: RunManifest,
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>, manifest: RunManifest) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.manifest.artifacts.retain(|a| a.path != name);
        self.manifest.artifacts.push(Artifact {
            path: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes the manifest itself (not listed among the artifacts).
    pub fn finish(self) -> Result<RunManifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(self.dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(self.manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactCheck {
    pub path: String,
    pub expected: String,
    pub actual: Option<String>,
    pub identical: bool,
}

/// Compares the artifacts of a fresh run with a recorded manifest.
pub fn compare_artifacts(recorded: &RunManifest, fresh: &RunManifest) -> Vec<ArtifactCheck> {
    recorded
        .artifacts
        .iter()
        .map(|a| {
            let actual = fresh.artifact(&a.path).map(|f| f.sha256.clone());
            ArtifactCheck {
                path: a.path.clone(),
                expected: a.sha256.clone(),
                identical: actual.as_deref() == Some(a.sha256.as_str()),
                actual,
            }
        })
        .collect()
}

/// Checks recorded digests against the files currently on disk.
pub fn verify_on_disk(manifest: &RunManifest, dir: impl AsRef<Path>) -> Vec<ArtifactCheck> {
    manifest
        .artifacts
        .iter()
        .map(|a| {
            let actual = fs::read(dir.as_ref().join(&a.path)).ok().map(|b| sha256_hex(&b));
            ArtifactCheck {
                path: a.path.clone(),
                expected: a.sha256.clone(),
                identical: actual.as_deref() == Some(a.sha256.as_str()),
                actual,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Sbs,
    Combine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthOutput {
    pub kind: ProcessKind,
    pub process_time: f64,
    pub process_time_us: f64,
    pub samples: usize,
    pub summary: ValidationSummary,
    pub curvature_warning: Option<crate::pulse::CurvatureWarning>,
}

/// Synthesizes, validates and writes `waveform.csv`, `waveform_si.csv`,
/// `summary.json` and the manifest. `r_start` overrides the configured
/// merge start separation.
pub fn synth_artifacts(
    config: &CollisionConfig,
    kind: SynthKind,
    r_start: Option<f64>,
    dir: impl Into<PathBuf>,
) -> Result<(RunManifest, SynthOutput)> {
    let r_start = r_start.unwrap_or(config.combine_r_start);
    let wf = match kind {
        SynthKind::Sbs => synthesize_sbs(config)?,
        SynthKind::Combine => synthesize_combine(config, r_start)?,
    };
    let summary = wf.validate()?;
    let params = match kind {
        SynthKind::Sbs => serde_json::json!({ "kind": kind }),
        SynthKind::Combine => serde_json::json!({ "kind": kind, "r_start_l0": r_start }),
    };
    let mut manifest = RunManifest::new("synth", params, Some(config));
    manifest.process_time = Some(wf.process_time);
    let out = SynthOutput {
        kind: wf.kind,
        process_time: wf.process_time,
        process_time_us: config.units.from_scaled(Quantity::Time, wf.process_time) * 1e6,
        samples: wf.len(),
        summary,
        curvature_warning: wf.curvature_warning,
    };
    let mut w = ArtifactWriter::new(dir, manifest)?;
    w.write("waveform.csv", waveform_csv(&wf).as_bytes())?;
    w.write("waveform_si.csv", waveform_si_csv(&wf, &config.units).as_bytes())?;
    w.write_json("summary.json", &out)?;
    Ok((w.finish()?, out))
}
