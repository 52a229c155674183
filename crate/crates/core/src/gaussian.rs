//! Exact Gaussian dynamics of the quadratic fluctuation Hamiltonian.
//!
//! Coordinates are zero-point quadratures of the two ions in the ω₀ frame,
//! ordered (Q₁, P₁, Q₂, P₂) with Q₁ = q₁, Q₂ = √μ q₂ (ħ = m₁ = ω₀ = 1).
//! In these variables H = ½ΣPᵢ² + ½QᵀKQ with
//!
//!   K₁₁ = ξ₁² + 2c,  K₁₂ = −2c/√μ,  K₂₂ = (ξ₂² + 2c)/μ,
//!
//! and the collective modes are Q± = (Q₁ ± Q₂)/√2. The fundamental matrix S
//! is integrated with classical RK4; the invariant-based transfer matrix of
//! the stretch mode serves as an independent oracle.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::Serialize;

use crate::ansatz::{AnsatzSpec, AuxiliaryTrajectory};
use crate::error::{Error, Result};
use crate::interp::UniformCubic;
use crate::pulse::{coulomb_curvature, stretch_jets, ProcessKind, Waveform};
use crate::state::ModeInput;
use crate::units::COULOMB_K;

pub const SYMPLECTIC_FAILURE: f64 = 1e-6;
pub const ORACLE_TOLERANCE: f64 = 1e-6;
/// Default RK4 steps per waveform sample.
pub const DEFAULT_SUBSTEPS: usize = 4;

/// Instantaneous trap parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub xi1_sq: f64,
    pub xi2_sq: f64,
    /// Coulomb curvature e²/(4πε₀r³); zero when the ions do not interact.
    pub c: f64,
    pub r: f64,
}

impl Coefficients {
    /// Parameters on the constraint manifold for separation `r`.
    pub fn on_constraints(r: f64, mu: f64) -> Self {
        let two_c = 2.0 * coulomb_curvature(r);
        let xi1_sq = 1.0 + (1.0 / mu.sqrt() - 1.0) * two_c;
        Self {
            xi1_sq,
            xi2_sq: mu * xi1_sq + (mu - 1.0) * two_c,
            c: 0.5 * two_c,
            r,
        }
    }

    /// Two uncoupled ions, each at ω₀.
    pub fn free(mu: f64) -> Self {
        Self {
            xi1_sq: 1.0,
            xi2_sq: mu,
            c: 0.0,
            r: f64::INFINITY,
        }
    }

    /// K in zero-point coordinates.
    pub fn stiffness(&self, mu: f64) -> Matrix2<f64> {
        let off = -2.0 * self.c / mu.sqrt();
        Matrix2::new(
            self.xi1_sq + 2.0 * self.c,
            off,
            off,
            (self.xi2_sq + 2.0 * self.c) / mu,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Analytic(AnsatzSpec),
    Sampled {
        r: UniformCubic,
        xi1_sq: UniformCubic,
        xi2_sq: UniformCubic,
    },
    Static(Coefficients),
}

/// H₂ as a function of time over [0, duration].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub mu: f64,
    pub duration: f64,
    /// Number of sample intervals; traces are reported on this grid.
    pub samples: usize,
    source: Source,
}

impl QuadraticModel {
    /// Uses the closed-form ansatz when the waveform carries one, the
    /// sampled columns otherwise.
    pub fn from_waveform(wf: &Waveform) -> Result<Self> {
        match &wf.aux {
            Some(aux) => Ok(Self {
                mu: wf.mu,
                duration: wf.process_time,
                samples: wf.len() - 1,
                source: Source::Analytic(aux.spec),
            }),
            None => Self::sampled(wf),
        }
    }

    /// Interpolates the stored (r, ξ₁², ξ₂²) columns.
    pub fn sampled(wf: &Waveform) -> Result<Self> {
        let h = wf.step();
        Ok(Self {
            mu: wf.mu,
            duration: wf.process_time,
            samples: wf.len() - 1,
            source: Source::Sampled {
                r: UniformCubic::new(0.0, h, wf.r.clone())?,
                xi1_sq: UniformCubic::new(0.0, h, wf.xi1_sq.clone())?,
                xi2_sq: UniformCubic::new(0.0, h, wf.xi2_sq.clone())?,
            },
        })
    }

    pub fn constant(coeffs: Coefficients, mu: f64, duration: f64, sample_dt: f64) -> Self {
        let samples = ((duration / sample_dt).ceil() as usize).max(1);
        Self {
            mu,
            duration,
            samples,
            source: Source::Static(coeffs),
        }
    }

    pub fn coefficients(&self, t: f64) -> Result<Coefficients> {
        match &self.source {
            Source::Analytic(spec) => {
                let (_, _, r) = stretch_jets(spec, self.mu, t)?;
                Ok(Coefficients::on_constraints(r.value(), self.mu))
            }
            Source::Sampled { r, xi1_sq, xi2_sq } => {
                let rv = r.eval(t);
                Ok(Coefficients {
                    xi1_sq: xi1_sq.eval(t),
                    xi2_sq: xi2_sq.eval(t),
                    c: COULOMB_K / (rv * rv * rv),
                    r: rv,
                })
            }
            Source::Static(c) => Ok(*c),
        }
    }

    pub fn stiffness(&self, t: f64) -> Result<Matrix2<f64>> {
        Ok(self.coefficients(t)?.stiffness(self.mu))
    }

    fn generator(&self, t: f64) -> Result<Matrix4<f64>> {
        let k = self.stiffness(t)?;
        Ok(Matrix4::new(
            0.0, 1.0, 0.0, 0.0, //
            -k[(0, 0)], 0.0, -k[(0, 1)], 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            -k[(1, 0)], 0.0, -k[(1, 1)], 0.0,
        ))
    }
}

/// Means and symmetrized covariance in (Q₁, P₁, Q₂, P₂).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    pub mean: Vector4<f64>,
    pub sigma: Matrix4<f64>,
}

impl GaussianState {
    pub fn product(ion1: ModeInput, ion2: ModeInput) -> Self {
        let (m1, c1) = ion1.moments();
        let (m2, c2) = ion2.moments();
        let mut sigma = Matrix4::zeros();
        sigma.fixed_view_mut::<2, 2>(0, 0).copy_from(&c1);
        sigma.fixed_view_mut::<2, 2>(2, 2).copy_from(&c2);
        Self {
            mean: Vector4::new(m1[0], m1[1], m2[0], m2[1]),
            sigma,
        }
    }

    pub fn vacuum() -> Self {
        Self::product(ModeInput::Vacuum, ModeInput::Vacuum)
    }

    pub fn evolve(&self, s: &Matrix4<f64>) -> Self {
        Self {
            mean: s * self.mean,
            sigma: s * self.sigma * s.transpose(),
        }
    }

    /// Smallest eigenvalue of Σ + iΩ/2 (non-negative for a physical state).
    pub fn uncertainty_margin(&self) -> f64 {
        // Σ + iΩ/2 as an 8×8 real symmetric matrix [[Σ, −Ω/2], [Ω/2, Σ]]
        let om = omega();
        let mut big = nalgebra::DMatrix::<f64>::zeros(8, 8);
        for i in 0..4 {
            for j in 0..4 {
                big[(i, j)] = self.sigma[(i, j)];
                big[(i + 4, j + 4)] = self.sigma[(i, j)];
                big[(i, j + 4)] = -0.5 * om[(i, j)];
                big[(i + 4, j)] = 0.5 * om[(i, j)];
            }
        }
        big.symmetric_eigenvalues().min()
    }
}

/// Canonical form for (Q₁, P₁, Q₂, P₂).
pub fn omega() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    )
}

/// max |SᵀΩS − Ω|
pub fn symplectic_defect(s: &Matrix4<f64>) -> f64 {
    let om = omega();
    (s.transpose() * om * s - om).abs().max()
}

/// Orthogonal map (Q₁, P₁, Q₂, P₂) → (Q₊, P₊, Q₋, P₋).
pub fn collective_basis() -> Matrix4<f64> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    Matrix4::new(
        a, 0.0, a, 0.0, //
        0.0, a, 0.0, a, //
        a, 0.0, -a, 0.0, //
        0.0, a, 0.0, -a,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub n1: f64,
    pub n2: f64,
    pub n_plus: f64,
    pub n_minus: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticRecord {
    pub t: f64,
    pub s: Matrix4<f64>,
    pub initial: GaussianState,
    pub state: GaussianState,
    pub symplectic_defect: f64,
    /// Max entry difference against a run with half the step.
    pub halving_deviation: Option<f64>,
    /// Occupations on the sample grid in the ω₀ frame.
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub substeps: usize,
    pub check_halving: bool,
    pub trace: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            substeps: DEFAULT_SUBSTEPS,
            check_halving: true,
            trace: true,
        }
    }
}

fn integrate(model: &QuadraticModel, steps: usize, mut on_sample: impl FnMut(usize, &Matrix4<f64>)) -> Result<Matrix4<f64>> {
    let mut s = Matrix4::identity();
    on_sample(0, &s);
    if model.duration == 0.0 {
        return Ok(s);
    }
    let per_sample = steps / model.samples;
    let h = model.duration / steps as f64;
    let mut a0 = model.generator(0.0)?;
    for k in 0..steps {
        let t = k as f64 * h;
        let am = model.generator(t + 0.5 * h)?;
        let a1 = model.generator(t + h)?;
        let k1 = a0 * s;
        let k2 = am * (s + k1 * (0.5 * h));
        let k3 = am * (s + k2 * (0.5 * h));
        let k4 = a1 * (s + k3 * h);
        s += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        a0 = a1;
        if (k + 1) % per_sample == 0 {
            on_sample((k + 1) / per_sample, &s);
        }
    }
    if !s.iter().all(|x| x.is_finite()) {
        return Err(Error::Integration("fundamental matrix diverged".into()));
    }
    Ok(s)
}

/// Integrates Ṡ = A(t)S from S(0) = I and pushes `initial` through it.
pub fn propagate_symplectic(
    model: &QuadraticModel,
    initial: &GaussianState,
    opts: PropagationOptions,
) -> Result<SymplecticRecord> {
    if opts.substeps == 0 {
        return Err(Error::Domain("substeps must be at least 1".into()));
    }
    let steps = model.samples * opts.substeps;
    let dt = model.duration / model.samples as f64;
    let frame = QuadratureFrame::reference();
    let mut trace = Vec::new();
    let s = integrate(model, steps, |i, s| {
        if opts.trace {
            let st = initial.evolve(s);
            trace.push(TracePoint {
                t: i as f64 * dt,
                n1: mean_phonon(&st, &frame, Mode::Ion1),
                n2: mean_phonon(&st, &frame, Mode::Ion2),
                n_plus: mean_phonon(&st, &frame, Mode::Plus),
                n_minus: mean_phonon(&st, &frame, Mode::Minus),
            });
        }
    })?;
    let defect = symplectic_defect(&s);
    if defect > SYMPLECTIC_FAILURE {
        return Err(Error::Integration(format!(
            "symplectic defect {defect:.3e} exceeds {SYMPLECTIC_FAILURE:e}; reduce the step"
        )));
    }
    let halving_deviation = if opts.check_halving && model.duration > 0.0 {
        let fine = integrate(model, 2 * steps, |_, _| {})?;
        Some((fine - s).abs().max())
    } else {
        None
    };
    Ok(SymplecticRecord {
        t: model.duration,
        s,
        initial: *initial,
        state: initial.evolve(&s),
        symplectic_defect: defect,
        halving_deviation,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ion1,
    Ion2,
    Plus,
    Minus,
}

/// Reference frequencies (units of ω₀) that define the phonon operators of
/// each ion and each collective mode at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureFrame {
    pub ion1: f64,
    pub ion2: f64,
    pub plus: f64,
    pub minus: f64,
}

impl QuadratureFrame {
    pub fn reference() -> Self {
        Self {
            ion1: 1.0,
            ion2: 1.0,
            plus: 1.0,
            minus: 1.0,
        }
    }

    /// Frames before and after a waveform. Swaps start and end in the ω₀
    /// frame; a merge ends with the stretch mode at ω₋(T).
    pub fn endpoints(wf: &Waveform) -> (Self, Self) {
        match wf.kind {
            ProcessKind::Sbs => (Self::reference(), Self::reference()),
            ProcessKind::Combine => {
                let mut end = Self::reference();
                end.minus = wf.omega_minus_sq.last().unwrap().sqrt();
                (Self::reference(), end)
            }
        }
    }

    fn of(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Ion1 => self.ion1,
            Mode::Ion2 => self.ion2,
            Mode::Plus => self.plus,
            Mode::Minus => self.minus,
        }
    }
}

/// Fluctuation phonons of one mode: (w⟨ΔQ²⟩ + ⟨ΔP²⟩/w)/2 − 1/2. The mean
/// displacement is excluded.
pub fn mean_phonon(state: &GaussianState, frame: &QuadratureFrame, mode: Mode) -> f64 {
    let (sigma, off) = match mode {
        Mode::Ion1 => (state.sigma, 0),
        Mode::Ion2 => (state.sigma, 2),
        Mode::Plus | Mode::Minus => {
            let c = collective_basis();
            (c * state.sigma * c.transpose(), if mode == Mode::Plus { 0 } else { 2 })
        }
    };
    let w = frame.of(mode);
    0.5 * (w * sigma[(off, off)] + sigma[(off + 1, off + 1)] / w) - 0.5
}

/// Phonons carried by the mean displacement of one ion, |⟨a⟩|².
pub fn coherent_phonon(state: &GaussianState, mode: Mode) -> f64 {
    let m = match mode {
        Mode::Ion1 => Vector2::new(state.mean[0], state.mean[1]),
        Mode::Ion2 => Vector2::new(state.mean[2], state.mean[3]),
        Mode::Plus | Mode::Minus => {
            let v = collective_basis() * state.mean;
            if mode == Mode::Plus {
                Vector2::new(v[0], v[1])
            } else {
                Vector2::new(v[2], v[3])
            }
        }
    };
    0.5 * m.norm_squared()
}

/// (α, β) of a_f = α a_i + β a_i† for a single-mode transfer matrix M on
/// (x, p), with phonons defined at frequency w_i before and w_f after.
pub fn bogoliubov(m: &Matrix2<f64>, w_i: f64, w_f: f64) -> (Complex64, Complex64) {
    let r = (w_f / w_i).sqrt();
    let g = (w_i * w_f).sqrt();
    let alpha = Complex64::new(
        0.5 * (m[(0, 0)] * r + m[(1, 1)] / r),
        0.5 * (m[(1, 0)] / g - m[(0, 1)] * g),
    );
    let beta = Complex64::new(
        0.5 * (m[(0, 0)] * r - m[(1, 1)] / r),
        0.5 * (m[(1, 0)] / g + m[(0, 1)] * g),
    );
    (alpha, beta)
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeTransfer {
    /// Coefficient of a in the evolved annihilation operator.
    pub alpha: Complex64,
    /// Coefficient of a†; its modulus is the parametric excitation |η⁽⁻⁾|.
    pub beta: Complex64,
    /// Accumulated phase, −arg α.
    pub theta: f64,
    /// |α|² − |β|²
    pub normalization: f64,
    pub frame_initial: f64,
    pub frame_final: f64,
}

impl ModeTransfer {
    pub fn from_matrix(m: &Matrix2<f64>, w_i: f64, w_f: f64) -> Self {
        let (alpha, beta) = bogoliubov(m, w_i, w_f);
        Self {
            alpha,
            beta,
            theta: -alpha.arg(),
            normalization: alpha.norm_sqr() - beta.norm_sqr(),
            frame_initial: w_i,
            frame_final: w_f,
        }
    }

    /// The invariant-formalism pair η⁽⁺⁾ = α e^{iθ}, η⁽⁻⁾ = β e^{−iθ} for a
    /// given dynamical phase θ.
    pub fn eta(&self, theta: f64) -> (Complex64, Complex64) {
        let e = Complex64::from_polar(1.0, theta);
        (self.alpha * e, self.beta / e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeTransferReport {
    pub plus: ModeTransfer,
    pub minus: ModeTransfer,
    /// θ₊(T) = ω₀T
    pub theta_plus: f64,
    /// θ₋(T) = ∫ω₀/b² dt
    pub theta_minus: f64,
    /// (b ± 1/b + iḃ)/2 at T, valid when b(0) = 1 and ḃ(0) = 0.
    pub eta_closed_form: (Complex64, Complex64),
    /// max(|β₋|, |θ₋ − θ₊ − π| mod 2π)
    pub swap_error: f64,
    #[serde(skip)]
    pub transfer_plus: Matrix2<f64>,
    #[serde(skip)]
    pub transfer_minus: Matrix2<f64>,
}

/// θ(T) = ∫₀ᵀ 1/b² by composite Simpson on the closed form.
pub fn phase_integral(spec: &AnsatzSpec, intervals: usize) -> Result<f64> {
    let big_t = spec.process_time()?;
    let n = intervals.max(2) + intervals % 2;
    let h = big_t / n as f64;
    let f = (0..=n)
        .map(|i| spec.eval_b(i as f64 * h).map(|s| 1.0 / (s.b * s.b)))
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::ansatz::simpson(&f, h))
}

/// Transfer matrix of ẍ + ω²(t)x = 0 built from the Ermakov solution:
/// with u = b e^{iθ}, the Wronskian-normalized pair (u, ū) spans the
/// solutions, which fixes M from the values at 0 and T.
pub fn ermakov_transfer(spec: &AnsatzSpec, theta: f64) -> Result<Matrix2<f64>> {
    let big_t = spec.process_time()?;
    let s0 = spec.eval_b(0.0)?;
    let s1 = spec.eval_b(big_t)?;
    let u0 = Complex64::new(s0.b, 0.0);
    let ud0 = Complex64::new(s0.b_dot, 1.0 / s0.b);
    let e = Complex64::from_polar(1.0, theta);
    let u = e * s1.b;
    let ud = e * Complex64::new(s1.b_dot, 1.0 / s1.b);
    Ok(Matrix2::new(
        -(u * ud0.conj()).im,
        (u * u0.conj()).im,
        -(ud * ud0.conj()).im,
        (ud * u0.conj()).im,
    ))
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Invariant-formalism prediction: the centre-of-mass mode rotates freely
/// at ω₀, the stretch mode follows from b(t).
pub fn invariant_prediction(traj: &AuxiliaryTrajectory, start: &QuadratureFrame, end: &QuadratureFrame) -> Result<ModeTransferReport> {
    let spec = &traj.spec;
    let big_t = spec.process_time()?;
    let intervals = 16 * (traj.len() - 1).max(64);
    let theta_minus = phase_integral(spec, intervals)?;
    let transfer_minus = ermakov_transfer(spec, theta_minus)?;
    let transfer_plus = rotation(big_t);
    let plus = ModeTransfer::from_matrix(&transfer_plus, start.plus, end.plus);
    let minus = ModeTransfer::from_matrix(&transfer_minus, start.minus, end.minus);
    let b = spec.eval_b(big_t)?;
    let eta_closed_form = (
        Complex64::new(0.5 * (b.b + 1.0 / b.b), 0.5 * b.b_dot),
        Complex64::new(0.5 * (b.b - 1.0 / b.b), 0.5 * b.b_dot),
    );
    let swap_error = minus
        .beta
        .norm()
        .max(wrap_angle(minus.theta - plus.theta - PI).abs());
    Ok(ModeTransferReport {
        plus,
        minus,
        theta_plus: big_t,
        theta_minus,
        eta_closed_form,
        swap_error,
        transfer_plus,
        transfer_minus,
    })
}

/// Collective-mode blocks of S and the largest cross-block entry.
pub fn mode_blocks(s: &Matrix4<f64>) -> (Matrix2<f64>, Matrix2<f64>, f64) {
    let c = collective_basis();
    let sm = c * s * c.transpose();
    let plus = sm.fixed_view::<2, 2>(0, 0).into_owned();
    let minus = sm.fixed_view::<2, 2>(2, 2).into_owned();
    let cross = sm
        .fixed_view::<2, 2>(0, 2)
        .abs()
        .max()
        .max(sm.fixed_view::<2, 2>(2, 0).abs().max());
    (plus, minus, cross)
}

/// The ODE's collective-mode transfer in the same frames as `report`.
pub fn ode_transfer(record: &SymplecticRecord, report: &ModeTransferReport) -> (ModeTransfer, ModeTransfer) {
    let (p, m, _) = mode_blocks(&record.s);
    (
        ModeTransfer::from_matrix(&p, report.plus.frame_initial, report.plus.frame_final),
        ModeTransfer::from_matrix(&m, report.minus.frame_initial, report.minus.frame_final),
    )
}

/// Largest componentwise difference between the two methods over α, β and
/// the phase of each collective mode.
pub fn oracle_deviation(record: &SymplecticRecord, report: &ModeTransferReport) -> f64 {
    let (p, m) = ode_transfer(record, report);
    let mut worst: f64 = 0.0;
    for (a, b) in [(p, report.plus), (m, report.minus)] {
        worst = worst
            .max((a.alpha.re - b.alpha.re).abs())
            .max((a.alpha.im - b.alpha.im).abs())
            .max((a.beta.re - b.beta.re).abs())
            .max((a.beta.im - b.beta.im).abs())
            .max(wrap_angle(a.theta - b.theta).abs());
    }
    worst
}

/// Fails when the ODE and the invariant prediction disagree beyond 1e-6.
pub fn crosscheck_oracle(record: &SymplecticRecord, report: &ModeTransferReport) -> Result<f64> {
    let d = oracle_deviation(record, report);
    if d > ORACLE_TOLERANCE {
        return Err(Error::Inconsistency {
            deviation: d,
            tolerance: ORACLE_TOLERANCE,
        });
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapReport {
    /// min over θ of the spectral norm ‖S − S_swap(θ)‖.
    pub deviation: f64,
    pub theta: f64,
    /// Phases of the two transfer blocks fitted separately.
    pub theta_coolant_to_qubit: f64,
    pub theta_qubit_to_coolant: f64,
    /// Largest singular value squared of the qubit → qubit block; the share
    /// of qubit excitation that stays behind.
    pub qubit_retention: f64,
    /// Final qubit phonons for the record's own input.
    pub qubit_residual_n: f64,
    pub coolant_final_n: f64,
}

fn swap_matrix(theta: f64) -> Matrix4<f64> {
    let r = rotation(theta);
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&r);
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(&r);
    m
}

fn block_phase(b: &Matrix2<f64>) -> f64 {
    (b[(0, 1)] - b[(1, 0)]).atan2(b[(0, 0)] + b[(1, 1)])
}

fn spectral_norm4(m: &Matrix4<f64>) -> f64 {
    m.singular_values().max()
}

/// Compares S with the swap â₁ ↔ â₂ up to a common phase.
pub fn verify_swap(record: &SymplecticRecord, frame: &QuadratureFrame) -> SwapReport {
    let s = record.s;
    let b12 = s.fixed_view::<2, 2>(0, 2).into_owned();
    let b21 = s.fixed_view::<2, 2>(2, 0).into_owned();
    let dist = |th: f64| spectral_norm4(&(s - swap_matrix(th)));
    // coarse scan seeded with the Frobenius optimum, then golden section
    let mut th = block_phase(&(b12 + b21));
    for k in 0..64 {
        let c = -PI + 2.0 * PI * k as f64 / 64.0;
        if dist(c) < dist(th) {
            th = c;
        }
    }
    let (mut lo, mut hi) = (th - 0.1, th + 0.1);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if dist(a) < dist(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let refined = 0.5 * (lo + hi);
    if dist(refined) < dist(th) {
        th = refined;
    }
    let b11 = s.fixed_view::<2, 2>(0, 0).into_owned();
    let retention = b11.singular_values().max().powi(2);
    SwapReport {
        deviation: dist(th),
        theta: wrap_angle(th),
        theta_coolant_to_qubit: block_phase(&b12),
        theta_qubit_to_coolant: block_phase(&b21),
        qubit_retention: retention,
        qubit_residual_n: mean_phonon(&record.state, frame, Mode::Ion1),
        coolant_final_n: mean_phonon(&record.state, frame, Mode::Ion2),
    }
}

/// The JSON report of one Gaussian simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianReport {
    pub process_time: f64,
    pub eta_minus_abs_final: f64,
    pub theta_diff_minus_pi: f64,
    pub swap_error: f64,
    pub n1_final: f64,
    pub n2_final: f64,
    pub n_plus_final: f64,
    pub n_minus_final: f64,
    pub symplectic_defect: f64,
    pub halving_deviation: Option<f64>,
    pub mode_cross_coupling: f64,
    pub oracle_deviation: Option<f64>,
    pub swap: SwapReport,
    pub input_ion1: ModeInput,
    pub input_ion2: ModeInput,
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct GaussianRun {
    pub record: SymplecticRecord,
    pub prediction: Option<ModeTransferReport>,
    pub report: GaussianReport,
}

/// Propagates `wf` with the given per-ion inputs and assembles the report.
/// When the waveform carries its ansatz the invariant oracle is checked too.
pub fn simulate_waveform(wf: &Waveform, ion1: ModeInput, ion2: ModeInput, opts: PropagationOptions) -> Result<GaussianRun> {
    let model = QuadraticModel::from_waveform(wf)?;
    let initial = GaussianState::product(ion1, ion2);
    let record = propagate_symplectic(&model, &initial, opts)?;
    let (start, end) = QuadratureFrame::endpoints(wf);
    let prediction = match &wf.aux {
        Some(aux) => Some(invariant_prediction(aux, &start, &end)?),
        None => None,
    };
    let (p, m, cross) = mode_blocks(&record.s);
    let plus = ModeTransfer::from_matrix(&p, start.plus, end.plus);
    let minus = ModeTransfer::from_matrix(&m, start.minus, end.minus);
    let theta_diff = wrap_angle(minus.theta - plus.theta - PI);
    let oracle = prediction.as_ref().map(|pr| oracle_deviation(&record, pr));
    let report = GaussianReport {
        process_time: wf.process_time,
        eta_minus_abs_final: minus.beta.norm(),
        theta_diff_minus_pi: theta_diff,
        swap_error: minus.beta.norm().max(theta_diff.abs()),
        n1_final: mean_phonon(&record.state, &end, Mode::Ion1),
        n2_final: mean_phonon(&record.state, &end, Mode::Ion2),
        n_plus_final: mean_phonon(&record.state, &end, Mode::Plus),
        n_minus_final: mean_phonon(&record.state, &end, Mode::Minus),
        symplectic_defect: record.symplectic_defect,
        halving_deviation: record.halving_deviation,
        mode_cross_coupling: cross,
        oracle_deviation: oracle,
        swap: verify_swap(&record, &end),
        input_ion1: ion1,
        input_ion2: ion2,
    };
    Ok(GaussianRun {
        record,
        prediction,
        report,
    })
}
