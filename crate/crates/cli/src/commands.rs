use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ioncool::config::CollisionConfig;
use ioncool::fock::{
    convergence_sweep, phase_averaged_excess, propagate_fock, quadratic_reference, suggested_cutoff,
    AnharmonicModel, ConvergenceTable, CubicSign, FockOptions, FockState, PhaseAverage, DEFAULT_STEP,
};
use ioncool::gaussian::{simulate_waveform, PropagationOptions, QuadraticModel};
use ioncool::io::{
    compare_artifacts, fock_trace_csv, gaussian_trace_csv, parse_waveform_csv, sha256_hex, synth_artifacts,
    ArtifactWriter, RunManifest, SynthKind,
};
use ioncool::protocol::{plan_pair_protocol, simulate_protocol, PairProtocolOptions};
use ioncool::pulse::{synthesize_sbs, ProcessKind, Waveform};
use ioncool::state::ModeInput;
use ioncool::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::failure::{Failure, CONFIG, INPUT};

/// Swap quality bound for a successful `sim`.
pub const SWAP_ERROR_LIMIT: f64 = 1e-3;
/// Largest anharmonic qubit excess for a successful cubic `sim`.
pub const EXCESS_LIMIT: f64 = 1e-3;
pub const WORKERS_ENV: &str = "IONCOOL_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Sbs,
    Combine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gaussian,
    Fock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Taylor,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// ω₀σ
    Sigma,
    /// ω₀²σ²
    SigmaSq,
}

/// What a command produced. A set `rejection` turns into exit code 4
/// after the artifacts are written.
pub struct Outcome {
    pub manifest: RunManifest,
    pub summary: Value,
    pub rejection: Option<String>,
}

impl Outcome {
    fn finish(self) -> Result<Value, Failure> {
        match self.rejection {
            None => Ok(self.summary),
            Some(msg) => Err(Failure::rejected(msg, self.summary)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthArgs {
    pub kind: Kind,
    #[serde(rename = "r_start_l0", default)]
    pub r_start: Option<f64>,
}

pub fn synth(cfg: &CollisionConfig, args: &SynthArgs, out: &Path) -> Result<Value, Failure> {
    run_synth(cfg, args, out)?.finish()
}

fn run_synth(cfg: &CollisionConfig, args: &SynthArgs, out: &Path) -> Result<Outcome, Failure> {
    let kind = match args.kind {
        Kind::Sbs => SynthKind::Sbs,
        Kind::Combine => SynthKind::Combine,
    };
    let (manifest, result) = synth_artifacts(cfg, kind, args.r_start, out)?;
    let s = &result.summary;
    let summary = json!({
        "command": "synth",
        "kind": result.kind,
        "process_time_scaled": result.process_time,
        "process_time_us": result.process_time_us,
        "samples": result.samples,
        "max_coupling": s.max_coupling,
        "max_omega_plus_deviation": s.max_omega_plus_deviation,
        "max_ermakov_residual": s.max_ermakov_residual,
        "max_force_residual": s.max_force_residual,
        "r_start_l0": s.r_start,
        "r_end_l0": s.r_end,
        "min_r_l0": s.min_r,
        "curvature_warning": result.curvature_warning,
        "out": out,
    });
    Ok(Outcome {
        manifest,
        summary,
        rejection: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FockArgs {
    pub cubic: Switch,
    pub sign: Sign,
    pub cutoff: Option<usize>,
    pub cutoffs: Vec<usize>,
    pub step: Option<f64>,
    pub phases: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimArgs {
    pub waveform: PathBuf,
    /// Digest of the waveform file; checked when non-empty.
    pub waveform_sha256: String,
    pub method: Method,
    pub input: String,
    pub coolant: String,
    pub fock: FockArgs,
}

pub fn sim(cfg: Option<&CollisionConfig>, args: SimArgs, out: &Path) -> Result<Value, Failure> {
    run_sim(cfg, args, out)?.finish()
}

fn parse_state(flag: &str, text: &str) -> Result<ModeInput, Failure> {
    text.parse::<ModeInput>().map_err(|e| {
        let mut f = Failure::from(e);
        f.key = Some(flag.into());
        f
    })
}

fn run_sim(cfg: Option<&CollisionConfig>, mut args: SimArgs, out: &Path) -> Result<Outcome, Failure> {
    let bytes = std::fs::read(&args.waveform)
        .map_err(|e| Failure::new(INPUT, "input", format!("{}: {e}", args.waveform.display())))?;
    let digest = sha256_hex(&bytes);
    if !args.waveform_sha256.is_empty() && args.waveform_sha256 != digest {
        return Err(Failure::new(
            INPUT,
            "input",
            format!("{} changed since the manifest was written", args.waveform.display()),
        ));
    }
    args.waveform_sha256 = digest;
    let text = String::from_utf8(bytes).map_err(|_| Failure::new(INPUT, "input", "waveform file is not UTF-8"))?;
    let wf = parse_waveform_csv(&text).map_err(Failure::input)?;
    let validation = wf.validate().map_err(Failure::input)?;
    let ion1 = parse_state("input", &args.input)?;
    let ion2 = parse_state("coolant", &args.coolant)?;

    let gauss_opts = PropagationOptions {
        trace: args.method == Method::Gaussian,
        ..Default::default()
    };
    let run = simulate_waveform(&wf, ion1, ion2, gauss_opts)?;
    let quality = transfer_quality(&wf, run.report.swap_error, run.report.eta_minus_abs_final);

    let config = match (args.method, cfg) {
        (Method::Fock, None) => Some(CollisionConfig::ca_mg_default()),
        (_, c) => c.cloned(),
    };
    let params = serde_json::to_value(&args).map_err(Error::from)?;
    let mut manifest = RunManifest::new("sim", params, config.as_ref());
    manifest.process_time = Some(wf.process_time);
    let mut w = ArtifactWriter::new(out, manifest)?;

    let (summary, mut rejection) = match args.method {
        Method::Gaussian => {
            w.write_json("report.json", &run.report)?;
            w.write("trace.csv", gaussian_trace_csv(&run.record.trace).as_bytes())?;
            let r = &run.report;
            let summary = json!({
                "command": "sim",
                "method": "gaussian",
                "kind": wf.kind,
                "process_time_scaled": wf.process_time,
                "n1_initial": ion1.mean_occupation(),
                "n2_initial": ion2.mean_occupation(),
                "n1_final": r.n1_final,
                "n2_final": r.n2_final,
                "swap_error": r.swap_error,
                "eta_minus_abs_final": r.eta_minus_abs_final,
                "theta_diff_minus_pi": r.theta_diff_minus_pi,
                "symplectic_defect": r.symplectic_defect,
                "oracle_deviation": r.oracle_deviation,
                "revalidation": validation,
                "out": out,
            });
            (summary, None)
        }
        Method::Fock => {
            let cfg = config.as_ref().expect("fock runs always carry a config");
            let report = fock_report(&wf, cfg, ion1, ion2, &args.fock)?;
            w.write_json("report.json", &report.body)?;
            w.write("trace.csv", fock_trace_csv(&report.trace).as_bytes())?;
            if let Some(table) = &report.convergence {
                w.write("convergence.csv", convergence_csv(table)?.as_bytes())?;
            }
            let mut summary = report.body.clone();
            summary["command"] = json!("sim");
            summary["method"] = json!("fock");
            summary["swap_error"] = json!(run.report.swap_error);
            summary["out"] = json!(out);
            let rejection = (args.fock.cubic == Switch::On && report.excess > EXCESS_LIMIT)
                .then(|| format!("anharmonic qubit excess {:.3e} exceeds {EXCESS_LIMIT:.0e}", report.excess));
            (summary, rejection)
        }
    };
    if rejection.is_none() {
        rejection = quality;
    }
    Ok(Outcome {
        manifest: w.finish()?,
        summary,
        rejection,
    })
}

/// SBS: swap error; merge: parametric excitation |η⁻|².
fn transfer_quality(wf: &Waveform, swap_error: f64, eta_minus: f64) -> Option<String> {
    match wf.kind {
        ProcessKind::Sbs if swap_error > SWAP_ERROR_LIMIT => {
            Some(format!("swap error {swap_error:.3e} exceeds {SWAP_ERROR_LIMIT:.0e}"))
        }
        ProcessKind::Combine if eta_minus * eta_minus > SWAP_ERROR_LIMIT => Some(format!(
            "stretch-mode excitation {:.3e} exceeds {SWAP_ERROR_LIMIT:.0e}",
            eta_minus * eta_minus
        )),
        _ => None,
    }
}

struct FockReport {
    body: Value,
    trace: Vec<ioncool::fock::FockTracePoint>,
    convergence: Option<ConvergenceTable>,
    excess: f64,
}

fn fock_report(
    wf: &Waveform,
    cfg: &CollisionConfig,
    ion1: ModeInput,
    ion2: ModeInput,
    args: &FockArgs,
) -> Result<FockReport, Failure> {
    let sign = match args.sign {
        Sign::Taylor => CubicSign::Taylor,
        Sign::Positive => CubicSign::Positive,
    };
    let hbar = cfg.units.hbar_scaled();
    let quadratic = QuadraticModel::from_waveform(wf)?;
    let model = AnharmonicModel::new(quadratic.clone(), hbar, args.cubic == Switch::On, sign);
    let cutoff = args
        .cutoff
        .unwrap_or_else(|| suggested_cutoff(ion1.mean_occupation().max(ion2.mean_occupation())));
    let opts = FockOptions {
        step: args.step.unwrap_or(DEFAULT_STEP),
        ..Default::default()
    };
    if !(opts.step > 0.0) {
        return Err(Failure::new(CONFIG, "config", "step must be positive"));
    }
    let init = FockState::product(ion1, ion2, (cutoff, cutoff))?;
    let run = propagate_fock(&model, &init, opts)?;
    let (n1, n2) = run.state.occupations();
    let reference = quadratic_reference(&quadratic, ion1, ion2)?;

    let phase_average: Option<PhaseAverage> = if args.phases > 1 {
        let ModeInput::Coherent(a) = ion1 else {
            return Err(Failure::new(CONFIG, "config", "phase averaging needs a coherent qubit input").keyed("phases"));
        };
        Some(phase_averaged_excess(&model, a.norm_sqr(), args.phases, cutoff, opts)?)
    } else {
        None
    };
    let convergence = if args.cutoffs.is_empty() {
        None
    } else {
        Some(convergence_sweep(&model, ion1, ion2, &args.cutoffs, opts)?)
    };
    let single_excess = n1 - reference.n1;
    let excess = phase_average.as_ref().map_or(single_excess, |p| p.qubit_excess);
    let body = json!({
        "process_time_scaled": wf.process_time,
        "cutoff": cutoff,
        "step": opts.step,
        "include_cubic": args.cubic == Switch::On,
        "cubic_sign": sign,
        "hbar_scaled": hbar,
        "input_ion1": ion1,
        "input_ion2": ion2,
        "n1_final": n1,
        "n2_final": n2,
        "n1_quadratic": reference.n1,
        "n2_quadratic": reference.n2,
        "qubit_excess_single": single_excess,
        "qubit_excess": excess,
        "norm_drift": run.norm_drift,
        "max_leakage": run.max_leakage,
        "steps": run.steps,
        "phase_average": phase_average,
        "convergence": convergence,
    });
    Ok(FockReport {
        body,
        trace: run.trace,
        convergence,
        excess,
    })
}

impl Failure {
    fn keyed(mut self, key: &str) -> Self {
        self.key = Some(key.into());
        self
    }
}

fn convergence_csv(table: &ConvergenceTable) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::new(INPUT, "input", e.to_string());
    w.write_record(["cutoff", "n1_final", "n2_final", "fidelity_to_top", "max_leakage", "norm_drift", "status"])
        .map_err(io)?;
    for r in &table.rows {
        w.write_record([
            r.cutoff.to_string(),
            format!("{:.16e}", r.n1_final),
            format!("{:.16e}", r.n2_final),
            format!("{:.16e}", r.fidelity_to_top),
            format!("{:.6e}", r.max_leakage),
            format!("{:.6e}", r.norm_drift),
            r.status.clone(),
        ])
        .map_err(io)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, Failure> {
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::new(INPUT, "input", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolArgs {
    pub coolants: usize,
    pub transport_heating: f64,
    pub transport_duration: f64,
    pub q1: String,
    pub q2: String,
}

pub fn protocol(cfg: &CollisionConfig, args: &ProtocolArgs, out: &Path) -> Result<Value, Failure> {
    run_protocol(cfg, args, out)?.finish()
}

fn run_protocol(cfg: &CollisionConfig, args: &ProtocolArgs, out: &Path) -> Result<Outcome, Failure> {
    let q1 = parse_state("q1", &args.q1)?;
    let q2 = parse_state("q2", &args.q2)?;
    let opts = PairProtocolOptions {
        coolants: args.coolants,
        transport_heating: args.transport_heating,
        transport_duration: args.transport_duration,
    };
    let plan = plan_pair_protocol(cfg, opts, None)?;
    let ledger = simulate_protocol(&plan, q1, q2)?;
    let params = serde_json::to_value(args).map_err(Error::from)?;
    let mut manifest = RunManifest::new("protocol", params, Some(cfg));
    manifest.process_time = Some(plan.active_duration);
    let mut w = ArtifactWriter::new(out, manifest)?;
    w.write_json("protocol.json", &json!({ "plan": plan, "ledger": ledger }))?;
    w.write("timeline.csv", plan.timeline_csv().as_bytes())?;
    let summary = json!({
        "command": "protocol",
        "active_duration_scaled": plan.active_duration,
        "active_duration_us": plan.active_duration_us(),
        "total_duration_scaled": plan.total_duration,
        "spare_coolants": plan.spare_coolants,
        "final_occupation": ledger.final_occupation,
        "final_pair_excitation": ledger.final_pair_excitation,
        "out": out,
    });
    Ok(Outcome {
        manifest: w.finish()?,
        summary,
        rejection: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepArgs {
    pub param: SweepParam,
    pub values: Vec<String>,
}

/// A number or `sqrt(x)`.
fn parse_value(text: &str) -> Result<f64, Failure> {
    let t = text.trim();
    let v = match t.strip_prefix("sqrt(").and_then(|s| s.strip_suffix(')')) {
        Some(inner) => inner.trim().parse::<f64>().map(f64::sqrt),
        None => t.parse::<f64>(),
    };
    match v {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        _ => Err(Failure::new(CONFIG, "config", format!("cannot use sweep value '{text}'")).keyed("values")),
    }
}

pub fn workers() -> Result<usize, Failure> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Failure::new(CONFIG, "config", format!("{WORKERS_ENV} must be a positive integer, got '{s}'"))
                .keyed(WORKERS_ENV)),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    sigma: f64,
    omega0_t: Option<f64>,
    eta_minus_abs: Option<f64>,
    min_r: Option<f64>,
    min_xi2_sq: Option<f64>,
    status: String,
}

fn sweep_row(cfg: &CollisionConfig, sigma: f64) -> SweepRow {
    let mut row = SweepRow {
        sigma,
        omega0_t: None,
        eta_minus_abs: None,
        min_r: None,
        min_xi2_sq: None,
        status: String::new(),
    };
    let wf = match cfg.clone().with_sigma(sigma).and_then(|c| synthesize_sbs(&c)) {
        Ok(wf) => wf,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    row.omega0_t = Some(wf.process_time);
    row.min_r = Some(wf.r.iter().copied().fold(f64::INFINITY, f64::min));
    row.min_xi2_sq = Some(wf.xi2_sq.iter().copied().fold(f64::INFINITY, f64::min));
    let opts = PropagationOptions {
        trace: false,
        check_halving: false,
        ..Default::default()
    };
    match simulate_waveform(&wf, ModeInput::Vacuum, ModeInput::Vacuum, opts) {
        Ok(run) => row.eta_minus_abs = Some(run.report.eta_minus_abs_final),
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    }
    row.status = match (wf.validate(), wf.curvature_warning) {
        (Err(e), _) => format!("error: {e}"),
        (Ok(_), Some(c)) => format!("warning: negative curvature {:.4e} on ion {} at t = {:.4}", c.value, c.ion, c.t),
        (Ok(_), None) => "ok".into(),
    };
    row
}

pub fn sweep(cfg: &CollisionConfig, args: &SweepArgs, out: &Path) -> Result<Value, Failure> {
    run_sweep(cfg, args, out)?.finish()
}

fn run_sweep(cfg: &CollisionConfig, args: &SweepArgs, out: &Path) -> Result<Outcome, Failure> {
    if args.values.is_empty() {
        return Err(Failure::new(CONFIG, "config", "need at least one sweep value").keyed("values"));
    }
    let sigmas = args
        .values
        .iter()
        .map(|v| {
            parse_value(v).map(|x| match args.param {
                SweepParam::Sigma => x,
                SweepParam::SigmaSq => x.sqrt(),
            })
        })
        .collect::<Result<Vec<f64>, Failure>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers()?)
        .build()
        .map_err(|e| Failure::new(CONFIG, "config", e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| sigmas.par_iter().map(|&s| sweep_row(cfg, s)).collect());

    let mut csv_out = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::new(INPUT, "input", e.to_string());
    csv_out
        .write_record(["sigma_scaled", "omega0_T", "eta_minus_abs", "min_r_l0", "min_xi2_sq", "status"])
        .map_err(io)?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.12e}"));
    for r in &rows {
        csv_out
            .write_record([
                format!("{:.12e}", r.sigma),
                cell(r.omega0_t),
                cell(r.eta_minus_abs),
                cell(r.min_r),
                cell(r.min_xi2_sq),
                r.status.clone(),
            ])
            .map_err(io)?;
    }
    let text = finish_csv(csv_out)?;
    let params = serde_json::to_value(args).map_err(Error::from)?;
    let mut w = ArtifactWriter::new(out, RunManifest::new("sweep", params, Some(cfg)))?;
    w.write("sweep.csv", text.as_bytes())?;
    let summary = json!({ "command": "sweep", "rows": rows, "out": out });
    Ok(Outcome {
        manifest: w.finish()?,
        summary,
        rejection: None,
    })
}

/// Re-runs the command recorded in a manifest and compares every artifact
/// digest with the recorded one.
pub fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<Value, Failure> {
    let recorded = RunManifest::read(manifest_path).map_err(Failure::input)?;
    let tmp;
    let dir: PathBuf = match out {
        Some(p) => p.to_path_buf(),
        None => {
            tmp = tempfile::tempdir().map_err(Error::from)?;
            tmp.path().to_path_buf()
        }
    };
    let params = recorded.parameters.clone();
    let bad_params = |e: serde_json::Error| Failure::input(Error::WaveformFile(format!("manifest parameters: {e}")));
    let config = || recorded.collision_config().map_err(Failure::input);
    let fresh = match recorded.command.as_str() {
        "synth" => run_synth(&config()?, &serde_json::from_value(params).map_err(bad_params)?, &dir)?,
        "sim" => {
            let cfg = recorded.config.as_ref().map(|_| config()).transpose()?;
            run_sim(cfg.as_ref(), serde_json::from_value(params).map_err(bad_params)?, &dir)?
        }
        "protocol" => run_protocol(&config()?, &serde_json::from_value(params).map_err(bad_params)?, &dir)?,
        "sweep" => run_sweep(&config()?, &serde_json::from_value(params).map_err(bad_params)?, &dir)?,
        other => {
            return Err(Failure::input(Error::WaveformFile(format!("unknown manifest command '{other}'"))));
        }
    };
    let checks = compare_artifacts(&recorded, &fresh.manifest);
    let identical = checks.iter().all(|c| c.identical) && !checks.is_empty();
    let summary = json!({
        "command": "replay",
        "replayed": recorded.command,
        "identical": identical,
        "checks": checks,
    });
    if identical {
        Ok(summary)
    } else {
        Err(Failure::rejected("replayed artifacts differ from the manifest", summary))
    }
}
