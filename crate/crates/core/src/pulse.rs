//! Inverse engineering of the trap waveforms.
//!
//! Given b(t), the stretch-mode frequency follows from the Ermakov equation,
//! the ion separation from ω₋², the two local curvatures from the decoupling
//! and constant-ω₊ constraints, and the well centres from the classical
//! equations of motion with symmetric ion positions x₁ = −x₂ = r/2.
//!
//! All quantities are scaled: m₁ = ω₀ = 1, lengths in l₀, e²/(4πε₀) = 1/2,
//! so the Coulomb curvature e²/(4πε₀r³) is c = 1/(2r³).

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzKind, AnsatzSpec, AuxiliaryTrajectory, BJet};
use crate::config::CollisionConfig;
use crate::error::{Error, Result};
use crate::units::COULOMB_K;

/// Largest T probed when resolving a process time.
pub const T_MAX: f64 = 100.0;

pub const COUPLING_TOLERANCE: f64 = 1e-10;
pub const OMEGA_PLUS_TOLERANCE: f64 = 1e-10;
pub const ERMAKOV_TOLERANCE: f64 = 1e-9;
pub const FORCE_TOLERANCE: f64 = 1e-8;
/// Classical residual tolerance when r̈ has to be recovered from samples.
pub const FORCE_TOLERANCE_SAMPLED: f64 = 1e-6;
pub const RDDOT_AGREEMENT_TOLERANCE: f64 = 1e-6;
/// Below this magnitude a local curvature cannot position a well centre.
pub const MIN_CURVATURE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Sbs,
    Combine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureWarning {
    /// 1 for the qubit, 2 for the coolant.
    pub ion: u8,
    pub value: f64,
    pub t: f64,
}

/// The four control parameters plus the derived separation and mode
/// frequencies, sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub kind: ProcessKind,
    /// m₂/m₁
    pub mu: f64,
    pub process_time: f64,
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub r_dot: Vec<f64>,
    pub r_ddot: Vec<f64>,
    pub xi1_sq: Vec<f64>,
    pub xi2_sq: Vec<f64>,
    pub center1: Vec<f64>,
    pub center2: Vec<f64>,
    pub omega_minus_sq: Vec<f64>,
    pub omega_plus_sq: Vec<f64>,
    pub coupling: Vec<f64>,
    /// Present for synthesized waveforms; absent when loaded from file.
    pub aux: Option<AuxiliaryTrajectory>,
    pub curvature_warning: Option<CurvatureWarning>,
}

/// Classical ion trajectory consistent with the waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub r_ddot: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curvatures {
    pub xi1_sq: Vec<f64>,
    pub xi2_sq: Vec<f64>,
    pub coupling: Vec<f64>,
    pub warning: Option<CurvatureWarning>,
}

/// Coulomb curvature e²/(4πε₀r³).
pub fn coulomb_curvature(r: f64) -> f64 {
    COULOMB_K / (r * r * r)
}

/// Cross-mode coupling ℰ of the collective-mode Hamiltonian.
pub fn mode_coupling(xi1_sq: f64, xi2_sq: f64, r: f64, mu: f64) -> f64 {
    0.5 * xi1_sq - 0.5 * xi2_sq / mu + (1.0 - 1.0 / mu) * coulomb_curvature(r)
}

/// (ω₊², ω₋²) read off the diagonal of the collective-mode Hessian.
pub fn mode_frequencies_sq(xi1_sq: f64, xi2_sq: f64, r: f64, mu: f64) -> (f64, f64) {
    let c = coulomb_curvature(r);
    let s = 1.0 / mu.sqrt();
    let base = 0.5 * xi1_sq + 0.5 * xi2_sq / mu;
    (base + c * (1.0 - s).powi(2), base + c * (1.0 + s).powi(2))
}

/// ω₋² inverted from the Ermakov equation: ω₋² = 1/b⁴ − b̈/b.
pub fn omega_minus_from_b(traj: &AuxiliaryTrajectory) -> Result<Vec<f64>> {
    traj.b
        .iter()
        .zip(&traj.b_ddot)
        .zip(&traj.times)
        .map(|((&b, &bdd), &t)| {
            if !(b > 0.0) {
                return Err(Error::Domain(format!("b({t}) = {b} must be positive")));
            }
            Ok(1.0 / b.powi(4) - bdd / b)
        })
        .collect()
}

/// b̈ + ω₋²b − 1/b³ at every sample.
pub fn ermakov_residuals(traj: &AuxiliaryTrajectory, omega_minus_sq: &[f64]) -> Vec<f64> {
    traj.b
        .iter()
        .zip(&traj.b_ddot)
        .zip(omega_minus_sq)
        .map(|((&b, &bdd), &w)| bdd + w * b - 1.0 / b.powi(3))
        .collect()
}

/// Separation that realizes ω₋²: r = (2/(√μ(ω₋² − 1)))^(1/3).
pub fn separation_from_omega(omega_minus_sq: &[f64], times: &[f64], mu: f64) -> Result<Vec<f64>> {
    omega_minus_sq
        .iter()
        .zip(times)
        .map(|(&w, &t)| {
            if !(w > 1.0) {
                return Err(Error::SeparationDiverges { t, omega_minus_sq: w });
            }
            Ok((2.0 / (mu.sqrt() * (w - 1.0))).cbrt())
        })
        .collect()
}

/// ξ₁² from the constant-ω₊ constraint and ξ₂² from the decoupling
/// constraint, plus ℰ recomputed from its own formula.
pub fn curvatures_from_separation(
    r: &[f64],
    times: &[f64],
    mu: f64,
    strict: bool,
) -> Result<Curvatures> {
    let n = r.len();
    let mut xi1_sq = Vec::with_capacity(n);
    let mut xi2_sq = Vec::with_capacity(n);
    let mut coupling = Vec::with_capacity(n);
    let mut worst: Option<CurvatureWarning> = None;
    for (&ri, &t) in r.iter().zip(times) {
        if !(ri > 0.0) {
            return Err(Error::Domain(format!("separation must be positive, got {ri} at t = {t}")));
        }
        let two_c = 2.0 * coulomb_curvature(ri);
        let x1 = 1.0 + (1.0 / mu.sqrt() - 1.0) * two_c;
        let x2 = mu * x1 + (mu - 1.0) * two_c;
        for (ion, v) in [(1u8, x1), (2u8, x2)] {
            if v < 0.0 && worst.map_or(true, |w| v < w.value) {
                worst = Some(CurvatureWarning { ion, value: v, t });
            }
        }
        xi1_sq.push(x1);
        xi2_sq.push(x2);
        coupling.push(mode_coupling(x1, x2, ri, mu));
    }
    if let (true, Some(w)) = (strict, worst) {
        return Err(Error::AntiConfinement { value: w.value, t: w.t });
    }
    Ok(Curvatures {
        xi1_sq,
        xi2_sq,
        coupling,
        warning: worst,
    })
}

/// Well centres from the classical equations of motion with x₁ = −x₂ = r/2:
/// R₁ = r/2 + (r̈/2 − k/r²)/ξ₁², R₂ = −r/2 − (μr̈/2 − k/r²)/ξ₂².
pub fn centers_from_classical(
    times: &[f64],
    r: &[f64],
    r_dot: &[f64],
    r_ddot: &[f64],
    xi1_sq: &[f64],
    xi2_sq: &[f64],
    mu: f64,
) -> Result<(Vec<f64>, Vec<f64>, ClassicalTrajectory)> {
    let n = r.len();
    let mut c1 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    for i in 0..n {
        for v in [xi1_sq[i], xi2_sq[i]] {
            if v.abs() < MIN_CURVATURE {
                return Err(Error::CenterUndefined { value: v, t: times[i] });
            }
        }
        let force = COULOMB_K / (r[i] * r[i]);
        c1.push(0.5 * r[i] + (0.5 * r_ddot[i] - force) / xi1_sq[i]);
        c2.push(-0.5 * r[i] - (0.5 * mu * r_ddot[i] - force) / xi2_sq[i]);
    }
    let classical = ClassicalTrajectory {
        times: times.to_vec(),
        x1: r.iter().map(|x| 0.5 * x).collect(),
        x2: r.iter().map(|x| -0.5 * x).collect(),
        p1: r_dot.iter().map(|v| 0.5 * v).collect(),
        p2: r_dot.iter().map(|v| -0.5 * mu * v).collect(),
        r_ddot: r_ddot.to_vec(),
    };
    Ok((c1, c2, classical))
}

/// Maximum |𝒱ᵢ| and |ℱᵢ| of the displacement-frame linear Hamiltonian,
/// with ẋᵢ and ṗᵢ taken from r's derivatives.
pub fn classical_residuals(
    cls: &ClassicalTrajectory,
    r_dot: &[f64],
    xi1_sq: &[f64],
    xi2_sq: &[f64],
    center1: &[f64],
    center2: &[f64],
    mu: f64,
) -> (f64, f64) {
    let mut max_v: f64 = 0.0;
    let mut max_f: f64 = 0.0;
    for i in 0..cls.times.len() {
        let r = cls.x1[i] - cls.x2[i];
        let force = COULOMB_K / (r * r);
        let v1 = cls.p1[i] - 0.5 * r_dot[i];
        let v2 = cls.p2[i] / mu + 0.5 * r_dot[i];
        let p1_dot = 0.5 * cls.r_ddot[i];
        let p2_dot = -0.5 * mu * cls.r_ddot[i];
        let f1 = p1_dot + xi1_sq[i] * (cls.x1[i] - center1[i]) - force;
        let f2 = p2_dot + xi2_sq[i] * (cls.x2[i] - center2[i]) + force;
        max_v = max_v.max(v1.abs()).max(v2.abs());
        max_f = max_f.max(f1.abs()).max(f2.abs());
    }
    (max_v, max_f)
}

/// Fourth-order finite differences on a uniform grid. Central stencils in
/// the interior, one-sided fourth-order stencils at the two ends on each
/// side. Returns (first, second) derivatives.
pub fn finite_differences(f: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    assert!(n >= 6, "need at least six samples");
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 2..n - 2 {
        d1[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
        d2[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2])
            / (12.0 * h * h);
    }
    let forward = |g: &dyn Fn(usize) -> f64, sign: f64| -> (f64, f64) {
        let d1 = sign * (-25.0 * g(0) + 48.0 * g(1) - 36.0 * g(2) + 16.0 * g(3) - 3.0 * g(4))
            / (12.0 * h);
        let d2 = (45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4)
            - 10.0 * g(5))
            / (12.0 * h * h);
        (d1, d2)
    };
    for k in 0..2 {
        let (a, b) = forward(&|j| f[k + j], 1.0);
        d1[k] = a;
        d2[k] = b;
        let (a, b) = forward(&|j| f[n - 1 - k - j], -1.0);
        d1[n - 1 - k] = a;
        d2[n - 1 - k] = b;
    }
    (d1, d2)
}

/// b, ω₋² and r as jets at one instant. b̈ is obtained by differentiating
/// the b jet twice, so the ω₋² and r jets are exact to second order.
pub fn stretch_jets(spec: &AnsatzSpec, mu: f64, t: f64) -> Result<(BJet, BJet, BJet)> {
    let (b, d) = spec.b_excess_jets(t)?;
    let b_ddot = d.derivative().derivative();
    // 1/b⁴ − 1 = −d(d + 2)(d² + 2d + 2)/b⁴ with d = b − 1
    let quartic = -(d * (d + 2.0) * (d * d + d * 2.0 + 2.0)) / (b * b * b * b);
    let w = quartic - b_ddot / b;
    let omega_sq = w + 1.0;
    if !(w.value() > 0.0) {
        return Err(Error::SeparationDiverges {
            t,
            omega_minus_sq: omega_sq.value(),
        });
    }
    let r = (w * (mu.sqrt() / 2.0)).powf(-1.0 / 3.0);
    Ok((b, omega_sq, r))
}

/// Phase surplus ∫₀ᵀ ω₀(1/b² − 1) dt of the self-centred ansatz.
pub fn phase_surplus(spec: &AnsatzSpec, big_t: f64, intervals: usize) -> Result<f64> {
    let spec = spec.with_process_time(big_t);
    let n = intervals + intervals % 2;
    let h = big_t / n as f64;
    let f = (0..=n)
        .map(|i| {
            let b = spec.eval_b(i as f64 * h)?.b;
            Ok(1.0 / (b * b) - 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::ansatz::simpson(&f, h))
}

const SURPLUS_INTERVALS: usize = 4000;

/// Smallest T with |θ₋(T) − ω₀T − π| ≤ `tolerance` for the bump centred at
/// T/2. The surplus grows monotonically with T, so the crossing is unique.
pub fn resolve_process_time(spec: &AnsatzSpec, tolerance: f64) -> Result<f64> {
    if spec.kind != AnsatzKind::GaussianBump {
        return Err(Error::Domain("process-time resolution needs a gaussian_bump ansatz".into()));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Domain("phase tolerance must be positive".into()));
    }
    let pi = std::f64::consts::PI;
    let gap = |t: f64| -> Result<f64> {
        Ok(pi - phase_surplus(spec, t, SURPLUS_INTERVALS)? - tolerance)
    };
    if gap(T_MAX)? > 0.0 {
        return Err(Error::NoPhaseBracket { t_max: T_MAX });
    }
    let (mut lo, mut hi) = (0.0, T_MAX);
    // tighten the bracket cheaply before bisecting
    let mut probe = spec.sigma;
    while probe < T_MAX {
        if gap(probe)? <= 0.0 {
            hi = probe;
            break;
        }
        lo = probe;
        probe *= 1.25;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(hi)
}

/// T for which the merging sigmoid, centred at T/2, starts at separation
/// `r_start` at t = 0.
pub fn resolve_combine_time(spec: &AnsatzSpec, r_start: f64) -> Result<f64> {
    if spec.kind != AnsatzKind::CombineSigmoid {
        return Err(Error::Domain("combine timing needs a combine_sigmoid ansatz".into()));
    }
    if !(r_start > 1.0) {
        return Err(Error::Domain(format!("r_start must exceed 1 l0, got {r_start}")));
    }
    let start_sep = |big_t: f64| -> Result<f64> {
        let s = spec.with_process_time(big_t);
        Ok(stretch_jets(&s, 1.0, 0.0)?.2.value())
    };
    let mut lo = 0.0;
    let mut hi = spec.sigma;
    loop {
        if hi > T_MAX {
            return Err(Error::NoTimeBracket(format!(
                "r(0) stays below {r_start} for T up to {T_MAX}"
            )));
        }
        match start_sep(hi) {
            Ok(r) if r >= r_start => break,
            Ok(_) => {
                lo = hi;
                hi *= 1.5;
            }
            Err(Error::SeparationDiverges { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match start_sep(mid) {
            Ok(r) if r < r_start => lo = mid,
            Ok(_) | Err(Error::SeparationDiverges { .. }) => hi = mid,
            Err(e) => return Err(e),
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Builds the waveform for a fully specified ansatz on `steps` intervals.
pub fn synthesize_from_ansatz(
    spec: &AnsatzSpec,
    mu: f64,
    steps: usize,
    kind: ProcessKind,
    strict: bool,
) -> Result<Waveform> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mass ratio must be positive, got {mu}")));
    }
    let aux = AuxiliaryTrajectory::sample(spec, steps)?;
    let times = aux.times.clone();
    let omega_minus_sq = omega_minus_from_b(&aux)?;
    // the closed form loses digits where ω₋² − 1 is tiny; the jets do not
    let mut r = Vec::with_capacity(times.len());
    let mut r_dot = Vec::with_capacity(times.len());
    let mut r_ddot = Vec::with_capacity(times.len());
    for &t in &times {
        let (_, _, rj) = stretch_jets(spec, mu, t)?;
        r.push(rj.value());
        r_dot.push(rj.deriv(1));
        r_ddot.push(rj.deriv(2));
    }
    let curv = curvatures_from_separation(&r, &times, mu, strict)?;
    let (center1, center2, _) =
        centers_from_classical(&times, &r, &r_dot, &r_ddot, &curv.xi1_sq, &curv.xi2_sq, mu)?;
    let omega_plus_sq = curv
        .xi1_sq
        .iter()
        .zip(&curv.xi2_sq)
        .zip(&r)
        .map(|((&a, &b), &ri)| mode_frequencies_sq(a, b, ri, mu).0)
        .collect();
    Ok(Waveform {
        kind,
        mu,
        process_time: *times.last().unwrap(),
        times,
        r,
        r_dot,
        r_ddot,
        xi1_sq: curv.xi1_sq,
        xi2_sq: curv.xi2_sq,
        center1,
        center2,
        omega_minus_sq,
        omega_plus_sq,
        coupling: curv.coupling,
        aux: Some(aux),
        curvature_warning: curv.warning,
    })
}

/// Swapping collision between the configured qubit and coolant.
pub fn synthesize_sbs(config: &CollisionConfig) -> Result<Waveform> {
    if config.ansatz.kind != AnsatzKind::GaussianBump {
        return Err(Error::config("ansatz.kind", "a swapping collision needs gaussian_bump"));
    }
    let t_root = resolve_process_time(&config.ansatz, config.phase_tolerance)?;
    // snap up so the phase tolerance still holds on the grid
    let steps = (t_root / config.sample_dt - 1e-9).ceil().max(2.0) as usize;
    let spec = config
        .ansatz
        .with_process_time(steps as f64 * config.sample_dt);
    synthesize_from_ansatz(&spec, config.mu(), steps, ProcessKind::Sbs, config.strict_curvature)
}

/// Merging of two identical ions, starting at separation `r_start` (l₀).
pub fn synthesize_combine(config: &CollisionConfig, r_start: f64) -> Result<Waveform> {
    if config.qubit.mass_u != config.coolant.mass_u {
        return Err(Error::SpeciesMismatch(format!(
            "combination needs equal masses, got {} u and {} u",
            config.qubit.mass_u, config.coolant.mass_u
        )));
    }
    let spec = if config.ansatz.kind == AnsatzKind::CombineSigmoid {
        config.ansatz
    } else {
        AnsatzSpec::combine_sigmoid(config.combine_sigma)?
            .with_combine_form(config.ansatz.combine_form)
    };
    let t_root = resolve_combine_time(&spec, r_start)?;
    let steps = (t_root / config.sample_dt).round().max(2.0) as usize;
    let spec = spec.with_process_time(steps as f64 * config.sample_dt);
    synthesize_from_ansatz(&spec, 1.0, steps, ProcessKind::Combine, config.strict_curvature)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub max_coupling: f64,
    pub max_omega_plus_deviation: f64,
    /// Only available when b(t) is known.
    pub max_ermakov_residual: Option<f64>,
    pub max_constraint4_residual: f64,
    pub max_velocity_residual: f64,
    pub max_force_residual: f64,
    /// Analytic r̈ against fourth-order differences of r, interior points.
    pub max_rddot_fd_deviation: Option<f64>,
    pub min_r: f64,
    pub min_xi_sq: f64,
    pub r_start: f64,
    pub r_end: f64,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn classical(&self) -> ClassicalTrajectory {
        ClassicalTrajectory {
            times: self.times.clone(),
            x1: self.r.iter().map(|x| 0.5 * x).collect(),
            x2: self.r.iter().map(|x| -0.5 * x).collect(),
            p1: self.r_dot.iter().map(|v| 0.5 * v).collect(),
            p2: self.r_dot.iter().map(|v| -0.5 * self.mu * v).collect(),
            r_ddot: self.r_ddot.clone(),
        }
    }

    /// Recomputes every constraint identity from the stored samples.
    pub fn summary(&self) -> ValidationSummary {
        let mu = self.mu;
        let mut max_coupling: f64 = 0.0;
        let mut max_wp: f64 = 0.0;
        let mut max_c4: f64 = 0.0;
        for i in 0..self.len() {
            let (wp, wm) = mode_frequencies_sq(self.xi1_sq[i], self.xi2_sq[i], self.r[i], mu);
            max_coupling =
                max_coupling.max(mode_coupling(self.xi1_sq[i], self.xi2_sq[i], self.r[i], mu).abs());
            max_wp = max_wp.max((wp - 1.0).abs());
            max_c4 = max_c4.max((wm - self.omega_minus_sq[i]).abs() / self.omega_minus_sq[i]);
        }
        let max_ermakov_residual = self.aux.as_ref().map(|aux| {
            ermakov_residuals(aux, &self.omega_minus_sq)
                .into_iter()
                .fold(0.0_f64, |m, x| m.max(x.abs()))
        });
        let (max_velocity_residual, max_force_residual) = classical_residuals(
            &self.classical(),
            &self.r_dot,
            &self.xi1_sq,
            &self.xi2_sq,
            &self.center1,
            &self.center2,
            mu,
        );
        let max_rddot_fd_deviation = self
            .aux
            .as_ref()
            .filter(|_| self.len() >= 6)
            .and_then(|aux| self.rddot_fd_deviation(&aux.spec).ok());
        ValidationSummary {
            max_coupling,
            max_omega_plus_deviation: max_wp,
            max_ermakov_residual,
            max_constraint4_residual: max_c4,
            max_velocity_residual,
            max_force_residual,
            max_rddot_fd_deviation,
            min_r: self.r.iter().cloned().fold(f64::INFINITY, f64::min),
            min_xi_sq: self
                .xi1_sq
                .iter()
                .chain(&self.xi2_sq)
                .cloned()
                .fold(f64::INFINITY, f64::min),
            r_start: self.r[0],
            r_end: *self.r.last().unwrap(),
        }
    }

    /// Largest gap between the analytic r̈ and a fourth-order central
    /// difference of r(t) on a stencil of spacing step/8 around each
    /// interior sample. The sample grid itself is too coarse near the sharp
    /// turn of a merging waveform.
    fn rddot_fd_deviation(&self, spec: &AnsatzSpec) -> Result<f64> {
        let h = self.step() / 8.0;
        let r_at = |t: f64| stretch_jets(spec, self.mu, t).map(|(_, _, r)| r.value());
        let mut worst: f64 = 0.0;
        for i in 2..self.len() - 2 {
            let t = self.times[i];
            let f = [r_at(t - 2.0 * h)?, r_at(t - h)?, self.r[i], r_at(t + h)?, r_at(t + 2.0 * h)?];
            let d2 = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h);
            worst = worst.max((d2 - self.r_ddot[i]).abs());
        }
        Ok(worst)
    }

    /// Fails if any constraint identity is violated beyond its tolerance.
    pub fn validate(&self) -> Result<ValidationSummary> {
        let s = self.summary();
        let force_tol = if self.aux.is_some() {
            FORCE_TOLERANCE
        } else {
            FORCE_TOLERANCE_SAMPLED
        };
        let mut problems = Vec::new();
        if s.min_r <= 0.0 {
            problems.push(format!("non-positive separation {}", s.min_r));
        }
        if s.max_coupling > COUPLING_TOLERANCE {
            problems.push(format!("mode coupling {:.3e}", s.max_coupling));
        }
        if s.max_omega_plus_deviation > OMEGA_PLUS_TOLERANCE {
            problems.push(format!("omega_plus deviation {:.3e}", s.max_omega_plus_deviation));
        }
        if s.max_constraint4_residual > 1e-10 {
            problems.push(format!("omega_minus/separation mismatch {:.3e}", s.max_constraint4_residual));
        }
        if let Some(e) = s.max_ermakov_residual {
            if e > ERMAKOV_TOLERANCE {
                problems.push(format!("Ermakov residual {e:.3e}"));
            }
        }
        if s.max_force_residual > force_tol || s.max_velocity_residual > force_tol {
            problems.push(format!(
                "classical residual {:.3e}",
                s.max_force_residual.max(s.max_velocity_residual)
            ));
        }
        if let Some(d) = s.max_rddot_fd_deviation {
            if d > RDDOT_AGREEMENT_TOLERANCE {
                problems.push(format!("r_ddot analytic/difference mismatch {d:.3e}"));
            }
        }
        if problems.is_empty() {
            Ok(s)
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bump_traj(sigma: f64, t: f64, steps: usize) -> AuxiliaryTrajectory {
        let s = AnsatzSpec::gaussian_bump(sigma).unwrap().with_process_time(t);
        AuxiliaryTrajectory::sample(&s, steps).unwrap()
    }

    #[test]
    fn constant_b_gives_free_frequency() {
        let aux = AuxiliaryTrajectory::sample(&AnsatzSpec::constant(4.0), 40).unwrap();
        let w = omega_minus_from_b(&aux).unwrap();
        assert!(w.iter().all(|x| (x - 1.0).abs() < 1e-15));
        assert!(matches!(
            separation_from_omega(&w, &aux.times, 1.0),
            Err(Error::SeparationDiverges { .. })
        ));
    }

    #[test]
    fn bump_center_frequency() {
        let aux = bump_traj(2f64.sqrt(), 8.3, 830);
        let w = omega_minus_from_b(&aux).unwrap();
        let mid = w[415];
        // 1/b^4 - b_ddot/b with b = 0.66618, b_ddot = 0.18531
        assert!((mid - 4.799).abs() < 1e-3, "{mid}");
        let res = ermakov_residuals(&aux, &w);
        assert!(res.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn combine_tail_frequency() {
        let s = AnsatzSpec::combine_sigmoid(0.2).unwrap().with_process_time(6.0);
        let (_, w, r) = stretch_jets(&s, 1.0, 40.0).unwrap();
        assert!((w.value() - 3.0).abs() < 1e-12);
        assert!((r.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separation_examples() {
        let r = separation_from_omega(&[3.0, 4.799], &[0.0, 1.0], 1.0).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
        let r = separation_from_omega(&[4.799], &[0.0], 0.6).unwrap();
        assert!((r[0] - 0.879).abs() < 2e-3, "{}", r[0]);
        let far = separation_from_omega(&[1.0 + 1e-9], &[0.0], 1.0).unwrap();
        assert!(far[0] > 1e3);
        assert!(separation_from_omega(&[0.9], &[0.0], 1.0).is_err());
    }

    #[test]
    fn curvature_examples() {
        let c = curvatures_from_separation(&[0.7, 1.0, 3.0], &[0.0; 3], 1.0, true).unwrap();
        for i in 0..3 {
            assert!((c.xi1_sq[i] - 1.0).abs() < 1e-15 && (c.xi2_sq[i] - 1.0).abs() < 1e-15);
            assert!(c.coupling[i].abs() < 1e-15);
        }
        // mu = 0.6, r = 1: xi1 = 1 + (1/sqrt(0.6) - 1), xi2 = 0.6 xi1 - 0.4
        let c = curvatures_from_separation(&[1.0], &[0.0], 0.6, false).unwrap();
        let xi1 = 1.0 + (1.0 / 0.6f64.sqrt() - 1.0);
        assert!((c.xi1_sq[0] - xi1).abs() < 1e-15);
        assert!((c.xi1_sq[0] - 1.290_994).abs() < 1e-6);
        assert!((c.xi2_sq[0] - (0.6 * xi1 - 0.4)).abs() < 1e-15);
        assert!((c.xi2_sq[0] - 0.374_597).abs() < 1e-6);
        let (wp, wm) = mode_frequencies_sq(c.xi1_sq[0], c.xi2_sq[0], 1.0, 0.6);
        assert!((wp - 1.0).abs() < 1e-14);
        assert!((wm - (1.0 + 2.0 / 0.6f64.sqrt())).abs() < 1e-14);
        let c = curvatures_from_separation(&[1e6], &[0.0], 0.6, false).unwrap();
        assert!((c.xi1_sq[0] - 1.0).abs() < 1e-12 && (c.xi2_sq[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn strict_mode_rejects_anti_confinement() {
        // mu = 0.6 needs c > 1.33 for xi2 < 0, i.e. r < 0.72
        let c = curvatures_from_separation(&[0.6], &[2.5], 0.6, false).unwrap();
        let w = c.warning.unwrap();
        assert_eq!(w.ion, 2);
        assert!(w.value < 0.0 && w.t == 2.5);
        assert!(matches!(
            curvatures_from_separation(&[0.6], &[2.5], 0.6, true),
            Err(Error::AntiConfinement { .. })
        ));
    }

    #[test]
    fn static_centres_balance_coulomb() {
        // two equal ions in one unit well: r = 1 and both centres at 0
        let (c1, c2, cls) =
            centers_from_classical(&[0.0], &[1.0], &[0.0], &[0.0], &[1.0], &[1.0], 1.0).unwrap();
        assert!(c1[0].abs() < 1e-15 && c2[0].abs() < 1e-15);
        let (v, f) = classical_residuals(&cls, &[0.0], &[1.0], &[1.0], &c1, &c2, 1.0);
        assert!(v == 0.0 && f < 1e-15);
        assert!(matches!(
            centers_from_classical(&[0.0], &[1.0], &[0.0], &[0.0], &[1e-8], &[1.0], 1.0),
            Err(Error::CenterUndefined { .. })
        ));
    }

    #[test]
    fn centre_corrections_have_opposite_signs() {
        let (c1, c2, _) =
            centers_from_classical(&[0.0], &[2.0], &[0.0], &[0.0], &[1.0], &[0.6], 0.6).unwrap();
        let d1 = c1[0] - 1.0;
        let d2 = c2[0] + 1.0;
        assert!(d1 < 0.0 && d2 > 0.0);
    }

    #[test]
    fn process_time_matches_erfc_crossing() {
        // surplus(T) = pi * erf(T / 2 sigma) for the centred bump
        for (s2, expect) in [(2.0f64, 8.3), (3.0, 10.2)] {
            let spec = AnsatzSpec::gaussian_bump(s2.sqrt()).unwrap();
            let t = resolve_process_time(&spec, 1e-4).unwrap();
            assert!((t - expect).abs() < 0.1, "{t}");
            let erfc_gap = PI * libm::erfc(t / (2.0 * s2.sqrt()));
            assert!((erfc_gap - 1e-4).abs() < 1e-9, "{erfc_gap}");
        }
        let spec = AnsatzSpec::gaussian_bump(2f64.sqrt()).unwrap();
        let tight = resolve_process_time(&spec, 1e-4).unwrap();
        let loose = resolve_process_time(&spec, 1e-2).unwrap();
        assert!(loose < tight);
        let wide = AnsatzSpec::gaussian_bump(60.0).unwrap();
        assert!(matches!(resolve_process_time(&wide, 1e-4), Err(Error::NoPhaseBracket { .. })));
    }

    #[test]
    fn phase_surplus_approaches_pi_from_below() {
        let spec = AnsatzSpec::gaussian_bump(1.3).unwrap();
        let mut last = 0.0;
        for t in [2.0, 4.0, 6.0, 8.0, 12.0] {
            let s = phase_surplus(&spec, t, 2000).unwrap();
            let exact = PI * libm::erf(t / (2.0 * 1.3));
            assert!((s - exact).abs() < 1e-10);
            assert!(s > last && s < PI);
            last = s;
        }
    }

    #[test]
    fn finite_differences_are_fourth_order() {
        let f = |t: f64| (0.7 * t).sin() + t * t * t;
        for h in [0.02, 0.01] {
            let xs: Vec<f64> = (0..50).map(|i| f(i as f64 * h)).collect();
            let (d1, d2) = finite_differences(&xs, h);
            for i in 0..50 {
                let t = i as f64 * h;
                assert!((d1[i] - (0.7 * (0.7 * t).cos() + 3.0 * t * t)).abs() < 1e-7);
                assert!((d2[i] - (-0.49 * (0.7 * t).sin() + 6.0 * t)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn sbs_waveform_invariants() {
        let cfg = CollisionConfig::ca_mg_default();
        let wf = synthesize_sbs(&cfg).unwrap();
        assert!((wf.process_time - 8.32).abs() < 1e-12);
        let s = wf.validate().unwrap();
        assert!(s.max_coupling < 1e-12 && s.max_omega_plus_deviation < 1e-12);
        assert!((s.min_r - 0.879).abs() < 2e-3, "{}", s.min_r);
        assert!(wf.curvature_warning.is_none());
        // wells approach then retreat
        let mid = wf.len() / 2;
        assert!(wf.center1[mid] < wf.center1[0] && wf.center2[mid] > wf.center2[0]);
        assert!((wf.r[0] - wf.r[wf.len() - 1]).abs() < 1e-9);
    }

    #[test]
    fn equal_masses_share_curvature() {
        let cfg = CollisionConfig::ca_mg_default()
            .with_species(crate::units::IonSpecies::calcium40(), crate::units::IonSpecies::calcium40())
            .unwrap();
        let wf = synthesize_sbs(&cfg).unwrap();
        assert!(wf.xi1_sq.iter().zip(&wf.xi2_sq).all(|(a, b)| a == b));
    }

    #[test]
    fn combine_waveform() {
        let cfg = CollisionConfig::ca_mg_default()
            .with_species(crate::units::IonSpecies::calcium40(), crate::units::IonSpecies::calcium40())
            .unwrap();
        let wf = synthesize_combine(&cfg, 100.0).unwrap();
        assert!((wf.process_time - 5.9).abs() < 0.1, "{}", wf.process_time);
        assert!((wf.r[0] - 100.0).abs() < 1.0, "{}", wf.r[0]);
        assert!((wf.r.last().unwrap() - 1.0).abs() < 1e-2);
        let aux = wf.aux.as_ref().unwrap();
        assert!(aux.b_dot.last().unwrap().abs() < 1e-4);
        wf.validate().unwrap();
        let mismatch = synthesize_combine(&CollisionConfig::ca_mg_default(), 100.0);
        assert!(matches!(mismatch, Err(Error::SpeciesMismatch(_))));
    }
}
