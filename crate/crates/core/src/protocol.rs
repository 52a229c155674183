//! Ground-state qubit pair: three swapping collisions and one merge,
//! with linear transports in between.
//!
//! Ion roles are Q1, Q2 (qubits, same species) and C1, C2 (coolants,
//! prepared in the ground state). The sequence is
//!
//! | step | kind       | pairs              |
//! |------|------------|--------------------|
//! | T0   | transport  | Q1, Q2 moved in    |
//! | I    | sbs        | Q2–C1              |
//! | T1   | transport  | Q2, C1             |
//! | II   | 2 × sbs    | Q1–Q2 and C1–C2    |
//! | T2   | transport  | Q2, C1             |
//! | III  | sbs        | Q2–C1              |
//! | T3   | transport  | Q2                 |
//! | IV   | combine    | Q1–Q2              |
//!
//! Transports are not simulated: each moved ion keeps its motional state
//! and gains `transport_heating` phonons (added as thermal noise).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::Serialize;

use crate::config::CollisionConfig;
use crate::error::{Error, Result};
use crate::gaussian::{collective_basis, propagate_symplectic, GaussianState, PropagationOptions, QuadraticModel};
use crate::pulse::{synthesize_combine, synthesize_sbs, ProcessKind, Waveform};
use crate::state::ModeInput;
use crate::units::IonSpecies;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum IonRole {
    Q1,
    Q2,
    C1,
    C2,
}

impl IonRole {
    pub const ALL: [IonRole; 4] = [IonRole::Q1, IonRole::Q2, IonRole::C1, IonRole::C2];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for IonRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Transport,
    Sbs,
    SimultaneousSbsPair,
    Combine,
}

/// One two-ion operation. `first` plays ion 1 of the waveform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Operation {
    pub first: IonRole,
    pub second: IonRole,
    pub waveform: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolStep {
    pub label: String,
    pub kind: StepKind,
    pub participants: Vec<IonRole>,
    pub operations: Vec<Operation>,
    pub t_start: f64,
    pub t_end: f64,
    /// Phonons added to each participant (transport only).
    pub heating: f64,
}

impl ProtocolStep {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedWaveform {
    pub name: String,
    pub kind: ProcessKind,
    pub mu: f64,
    pub process_time: f64,
    #[serde(skip)]
    pub waveform: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairProtocolOptions {
    pub coolants: usize,
    pub transport_heating: f64,
    /// Placeholder duration per transport (scaled); excluded from the
    /// active duration.
    pub transport_duration: f64,
}

impl Default for PairProtocolOptions {
    fn default() -> Self {
        Self {
            coolants: 2,
            transport_heating: 0.0,
            transport_duration: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolPlan {
    pub steps: Vec<ProtocolStep>,
    pub waveforms: Vec<PlannedWaveform>,
    pub options: PairProtocolOptions,
    /// Coolants left over for later rounds.
    pub spare_coolants: usize,
    /// Sum of collision and merge times (scaled).
    pub active_duration: f64,
    pub total_duration: f64,
    pub omega0: f64,
}

impl ProtocolPlan {
    pub fn empty() -> Self {
        Self {
            steps: Vec::new(),
            waveforms: Vec::new(),
            options: PairProtocolOptions::default(),
            spare_coolants: 0,
            active_duration: 0.0,
            total_duration: 0.0,
            omega0: 1.0,
        }
    }

    pub fn waveform(&self, name: &str) -> Result<&PlannedWaveform> {
        self.waveforms
            .iter()
            .find(|w| w.name == name)
            .ok_or_else(|| Error::Protocol(format!("plan references unknown waveform '{name}'")))
    }

    pub fn active_duration_us(&self) -> f64 {
        self.active_duration / self.omega0 * 1e6
    }

    /// step, t_start, t_end, participants
    pub fn timeline_csv(&self) -> String {
        let mut out = String::from("step,kind,t_start,t_end,participants\n");
        for s in &self.steps {
            let names: Vec<String> = s.participants.iter().map(|p| p.to_string()).collect();
            let kind = serde_json::to_value(s.kind).unwrap();
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{}\n",
                s.label,
                kind.as_str().unwrap_or_default(),
                s.t_start,
                s.t_end,
                names.join(" ")
            ));
        }
        out
    }
}

/// Builds the pair sequence. `second_qubit` overrides the species of Q2
/// (defaults to the configured qubit species).
pub fn plan_pair_protocol(
    config: &CollisionConfig,
    opts: PairProtocolOptions,
    second_qubit: Option<&IonSpecies>,
) -> Result<ProtocolPlan> {
    if opts.coolants < 2 {
        return Err(Error::config("coolants", format!("the pair sequence needs at least 2 coolants, got {}", opts.coolants)));
    }
    if !(opts.transport_heating >= 0.0 && opts.transport_heating.is_finite()) {
        return Err(Error::config("transport_heating", "must be a non-negative number"));
    }
    if !(opts.transport_duration >= 0.0 && opts.transport_duration.is_finite()) {
        return Err(Error::config("transport_duration", "must be a non-negative number"));
    }
    let q2 = second_qubit.unwrap_or(&config.qubit);
    let pair_cfg = config.clone().with_species(config.qubit.clone(), q2.clone())?;

    let sbs_qc = synthesize_sbs(config)?;
    let sbs_eq = synthesize_sbs(&config.clone().with_species(config.qubit.clone(), config.qubit.clone())?)?;
    let combine = synthesize_combine(&pair_cfg, config.combine_r_start)?;
    for wf in [&sbs_qc, &sbs_eq, &combine] {
        wf.validate()?;
    }
    let planned = |name: &str, wf: Waveform| PlannedWaveform {
        name: name.into(),
        kind: wf.kind,
        mu: wf.mu,
        process_time: wf.process_time,
        waveform: wf,
    };
    let waveforms = vec![
        planned("sbs_qubit_coolant", sbs_qc),
        planned("sbs_equal_mass", sbs_eq),
        planned("combine", combine),
    ];

    use IonRole::*;
    let op = |a, b, w: &str| Operation {
        first: a,
        second: b,
        waveform: w.into(),
    };
    let layout: Vec<(&str, StepKind, Vec<IonRole>, Vec<Operation>)> = vec![
        ("T0", StepKind::Transport, vec![Q1, Q2], vec![]),
        ("I", StepKind::Sbs, vec![Q2, C1], vec![op(Q2, C1, "sbs_qubit_coolant")]),
        ("T1", StepKind::Transport, vec![Q2, C1], vec![]),
        (
            "II",
            StepKind::SimultaneousSbsPair,
            vec![Q1, Q2, C1, C2],
            vec![op(Q1, Q2, "sbs_equal_mass"), op(C1, C2, "sbs_equal_mass")],
        ),
        ("T2", StepKind::Transport, vec![Q2, C1], vec![]),
        ("III", StepKind::Sbs, vec![Q2, C1], vec![op(Q2, C1, "sbs_qubit_coolant")]),
        ("T3", StepKind::Transport, vec![Q2], vec![]),
        ("IV", StepKind::Combine, vec![Q1, Q2], vec![op(Q1, Q2, "combine")]),
    ];

    let mut plan = ProtocolPlan {
        steps: Vec::new(),
        waveforms,
        options: opts,
        spare_coolants: opts.coolants - 2,
        active_duration: 0.0,
        total_duration: 0.0,
        omega0: config.units.omega0,
    };
    let mut t = 0.0;
    for (label, kind, participants, operations) in layout {
        let (duration, heating) = match kind {
            StepKind::Transport => (opts.transport_duration, opts.transport_heating),
            _ => (plan.waveform(&operations[0].waveform)?.process_time, 0.0),
        };
        if kind != StepKind::Transport {
            plan.active_duration += duration;
        }
        plan.steps.push(ProtocolStep {
            label: label.into(),
            kind,
            participants,
            operations,
            t_start: t,
            t_end: t + duration,
            heating,
        });
        t += duration;
    }
    plan.total_duration = t;
    check_plan(&plan)?;
    Ok(plan)
}

fn check_plan(plan: &ProtocolPlan) -> Result<()> {
    for s in &plan.steps {
        let mut seen = Vec::new();
        for o in &s.operations {
            for ion in [o.first, o.second] {
                if seen.contains(&ion) {
                    return Err(Error::Protocol(format!("step {} uses {ion} twice", s.label)));
                }
                seen.push(ion);
            }
            let wf = plan.waveform(&o.waveform)?;
            if s.kind == StepKind::Combine && wf.kind != ProcessKind::Combine {
                return Err(Error::Protocol(format!("step {} needs a combine waveform", s.label)));
            }
        }
    }
    Ok(())
}

/// Motional state of one ion in its own ω₀ frame: fluctuation covariance
/// plus mean displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonMotion {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl IonMotion {
    pub fn from_input(input: ModeInput) -> Self {
        let (mean, cov) = input.moments();
        Self { mean, cov }
    }

    /// ⟨a†a⟩ at unit frequency, displacement included.
    pub fn occupation(&self) -> f64 {
        occupation(&self.mean, &self.cov, 1.0)
    }

    fn heat(&mut self, n: f64) {
        self.cov += Matrix2::identity() * n;
    }
}

fn occupation(mean: &Vector2<f64>, cov: &Matrix2<f64>, w: f64) -> f64 {
    0.5 * (w * (cov[(0, 0)] + mean[0] * mean[0]) + (cov[(1, 1)] + mean[1] * mean[1]) / w) - 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperationDiagnostic {
    pub first: IonRole,
    pub second: IonRole,
    pub symplectic_defect: f64,
    pub halving_deviation: f64,
}

/// Collective occupations of the merged pair in the single-well frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairModes {
    pub n_plus: f64,
    pub n_minus: f64,
    pub omega_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub step: String,
    pub kind: StepKind,
    pub before: BTreeMap<IonRole, f64>,
    pub after: BTreeMap<IonRole, f64>,
    pub change: String,
    pub diagnostics: Vec<OperationDiagnostic>,
    /// Set by a merge; the merged ions are then each credited with half of
    /// n₊ + n₋ in `after`.
    pub pair_modes: Option<PairModes>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhononLedger {
    pub initial: BTreeMap<IonRole, f64>,
    pub entries: Vec<LedgerEntry>,
    pub final_occupation: BTreeMap<IonRole, f64>,
    /// n₊ + n₋ of the merged qubit pair, if the plan merges.
    pub final_pair_excitation: Option<f64>,
}

/// Per-ion occupations of a set of motions.
fn snapshot(ions: &[IonMotion; 4]) -> BTreeMap<IonRole, f64> {
    IonRole::ALL.iter().map(|&r| (r, ions[r.index()].occupation())).collect()
}

struct PairOutcome {
    first: IonMotion,
    second: IonMotion,
    diagnostic: OperationDiagnostic,
    modes: Option<PairModes>,
}

fn run_pair(op: &Operation, wf: &Waveform, a: IonMotion, b: IonMotion) -> Result<PairOutcome> {
    let model = QuadraticModel::from_waveform(wf)?;
    let mut sigma = Matrix4::zeros();
    sigma.fixed_view_mut::<2, 2>(0, 0).copy_from(&a.cov);
    sigma.fixed_view_mut::<2, 2>(2, 2).copy_from(&b.cov);
    let initial = GaussianState {
        mean: Vector4::new(a.mean[0], a.mean[1], b.mean[0], b.mean[1]),
        sigma,
    };
    let opts = PropagationOptions {
        trace: false,
        ..Default::default()
    };
    let rec = propagate_symplectic(&model, &initial, opts)?;
    let st = rec.state;
    let block = |k: usize| IonMotion {
        mean: Vector2::new(st.mean[k], st.mean[k + 1]),
        cov: st.sigma.fixed_view::<2, 2>(k, k).into_owned(),
    };
    let modes = (wf.kind == ProcessKind::Combine).then(|| {
        let c = collective_basis();
        let m = c * st.mean;
        let s = c * st.sigma * c.transpose();
        let w = wf.omega_minus_sq.last().copied().unwrap_or(1.0).sqrt();
        PairModes {
            n_plus: occupation(&Vector2::new(m[0], m[1]), &s.fixed_view::<2, 2>(0, 0).into_owned(), 1.0),
            n_minus: occupation(&Vector2::new(m[2], m[3]), &s.fixed_view::<2, 2>(2, 2).into_owned(), w),
            omega_minus: w,
        }
    });
    Ok(PairOutcome {
        first: block(0),
        second: block(2),
        diagnostic: OperationDiagnostic {
            first: op.first,
            second: op.second,
            symplectic_defect: rec.symplectic_defect,
            halving_deviation: rec.halving_deviation.unwrap_or(0.0),
        },
        modes,
    })
}

/// Runs the plan from the given qubit states; coolants start in the
/// ground state. Simultaneous operations run on separate threads.
pub fn simulate_protocol(plan: &ProtocolPlan, q1: ModeInput, q2: ModeInput) -> Result<PhononLedger> {
    let mut ions = [
        IonMotion::from_input(q1),
        IonMotion::from_input(q2),
        IonMotion::from_input(ModeInput::Vacuum),
        IonMotion::from_input(ModeInput::Vacuum),
    ];
    let initial = snapshot(&ions);
    let mut entries = Vec::with_capacity(plan.steps.len());
    let mut final_pair = None;
    for step in &plan.steps {
        let before = snapshot(&ions);
        let mut diagnostics = Vec::new();
        let mut pair_modes = None;
        let change = match step.kind {
            StepKind::Transport => {
                for &p in &step.participants {
                    ions[p.index()].heat(step.heating);
                }
                format!("transport, +{} phonons per moved ion", step.heating)
            }
            _ => {
                let jobs: Vec<(&Operation, &Waveform)> = step
                    .operations
                    .iter()
                    .map(|o| plan.waveform(&o.waveform).map(|w| (o, &w.waveform)))
                    .collect::<Result<_>>()?;
                let snapshot_ions = ions;
                let outcomes: Vec<Result<PairOutcome>> = std::thread::scope(|scope| {
                    let handles: Vec<_> = jobs
                        .iter()
                        .map(|&(o, w)| {
                            let (a, b) = (snapshot_ions[o.first.index()], snapshot_ions[o.second.index()]);
                            scope.spawn(move || run_pair(o, w, a, b))
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("worker panicked".into()))))
                        .collect()
                });
                let mut names = Vec::new();
                for (out, (o, _)) in outcomes.into_iter().zip(&jobs) {
                    let out = out?;
                    ions[o.first.index()] = out.first;
                    ions[o.second.index()] = out.second;
                    if let Some(m) = out.modes {
                        // one well, shared modes: credit half the pair to each
                        let half = 0.5 * (m.n_plus + m.n_minus);
                        for role in [o.first, o.second] {
                            ions[role.index()] = IonMotion {
                                mean: Vector2::zeros(),
                                cov: Matrix2::identity() * (half + 0.5),
                            };
                        }
                    }
                    diagnostics.push(out.diagnostic);
                    if out.modes.is_some() {
                        pair_modes = out.modes;
                    }
                    names.push(format!("{}-{} via {}", o.first, o.second, o.waveform));
                }
                names.join("; ")
            }
        };
        if let Some(m) = pair_modes {
            final_pair = Some(m.n_plus + m.n_minus);
        }
        entries.push(LedgerEntry {
            step: step.label.clone(),
            kind: step.kind,
            before,
            after: snapshot(&ions),
            change,
            diagnostics,
            pair_modes,
        });
    }
    Ok(PhononLedger {
        initial,
        final_occupation: snapshot(&ions),
        entries,
        final_pair_excitation: final_pair,
    })
}
