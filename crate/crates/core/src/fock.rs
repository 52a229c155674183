//! Two-mode Schrödinger evolution in a truncated number basis, including
//! the cubic term of the Coulomb expansion.
//!
//! The basis is |n₁, n₂⟩ of the two ions' ω₀ oscillators. In units of ħω₀
//!
//!   H = ½(P₁² + P₂²) + ½K₁₁Q₁² + K₁₂Q₁Q₂ + ½K₂₂Q₂² + g X³,
//!   X = Q₁ − Q₂/√μ,  g = −√ħ·(e²/4πε₀)/r⁴,
//!
//! with ħ the scaled Planck constant. H is real symmetric and is assembled
//! from five fixed sparse terms whose weights follow the waveform. Time
//! stepping uses a fourth-order commutator-free Magnus scheme with two
//! exponentials per step, each evaluated by a Lanczos Krylov projection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianState, QuadraticModel};
use crate::state::ModeInput;
use crate::units::COULOMB_K;

pub const LEAKAGE_LIMIT: f64 = 1e-8;
pub const NORM_FAILURE: f64 = 1e-6;
/// Halving this step changes final occupations by a few 1e-8 at N ≈ 110.
pub const DEFAULT_STEP: f64 = 0.025;
const KRYLOV_TOL: f64 = 1e-12;
const KRYLOV_MAX: usize = 64;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubicSign {
    /// −e²/(4πε₀r⁴)(q₁ − q₂)³, the Taylor coefficient.
    #[default]
    Taylor,
    /// The same magnitude with a positive sign.
    Positive,
}

/// Quadratic model plus the cubic Coulomb correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AnharmonicModel {
    pub quadratic: QuadraticModel,
    /// ħ/(m₁ω₀l₀²)
    pub hbar: f64,
    pub include_cubic: bool,
    pub sign: CubicSign,
}

impl AnharmonicModel {
    pub fn new(quadratic: QuadraticModel, hbar: f64, include_cubic: bool, sign: CubicSign) -> Self {
        Self {
            quadratic,
            hbar,
            include_cubic,
            sign,
        }
    }

    /// Cubic coefficient g₃ in ħω₀ per zero-point length cubed.
    pub fn cubic_coefficient(&self, r: f64) -> f64 {
        if !self.include_cubic || !r.is_finite() {
            return 0.0;
        }
        let g = self.hbar.sqrt() * COULOMB_K / r.powi(4);
        match self.sign {
            CubicSign::Taylor => -g,
            CubicSign::Positive => g,
        }
    }

    /// Weights of the five Hamiltonian terms at time t.
    pub fn weights(&self, t: f64) -> Result<[f64; 5]> {
        let c = self.quadratic.coefficients(t)?;
        let k = c.stiffness(self.quadratic.mu);
        Ok([1.0, k[(0, 0)], k[(0, 1)], k[(1, 1)], self.cubic_coefficient(c.r)])
    }
}

/// Q, Q², Q³ and P² of one oscillator truncated to n levels. Products are
/// formed in a larger space first so that every kept element is exact.
#[derive(Debug, Clone)]
struct LadderOps {
    q: DMatrix<f64>,
    q2: DMatrix<f64>,
    q3: DMatrix<f64>,
    p2: DMatrix<f64>,
}

impl LadderOps {
    fn new(n: usize) -> Self {
        let big = n + 3;
        let mut a = DMatrix::<f64>::zeros(big, big);
        for k in 1..big {
            a[(k - 1, k)] = (k as f64).sqrt();
        }
        let ad = a.transpose();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let q = (&a + &ad) * s;
        // P = −i(a − a†)/√2, so P² = −(a − a†)²/2
        let d = &a - &ad;
        let p2 = -(&d * &d) * 0.5;
        let q2 = &q * &q;
        let q3 = &q2 * &q;
        let cut = |m: &DMatrix<f64>| m.view((0, 0), (n, n)).into_owned();
        Self {
            q: cut(&q),
            q2: cut(&q2),
            q3: cut(&q3),
            p2: cut(&p2),
        }
    }
}

/// Symmetric sparse matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn apply(&self, x: &[C], y: &mut [C]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = C::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += x[self.cols[k]] * self.vals[k];
            }
            *yi = acc;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// max |H − Hᵀ|
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                worst = worst.max((self.vals[k] - self.get(self.cols[k], i)).abs());
            }
        }
        worst
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// The five fixed terms of H on a shared sparsity pattern:
/// ½(P₁² + P₂²), ½Q₁², Q₁Q₂, ½Q₂², X³.
#[derive(Debug, Clone)]
pub struct HamiltonianTerms {
    pub cutoffs: (usize, usize),
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    terms: [Vec<f64>; 5],
}

impl HamiltonianTerms {
    pub fn build(cutoffs: (usize, usize), mu: f64) -> Result<Self> {
        let (n1, n2) = cutoffs;
        if n1 < 4 || n2 < 4 {
            return Err(Error::Domain(format!("cutoffs must be at least 4, got {n1}×{n2}")));
        }
        let a = LadderOps::new(n1);
        let b = LadderOps::new(n2);
        let s = 1.0 / mu.sqrt();
        let dim = n1 * n2;
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut terms: [Vec<f64>; 5] = Default::default();
        row_ptr.push(0);
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                for j1 in i1.saturating_sub(3)..(i1 + 4).min(n1) {
                    for j2 in i2.saturating_sub(3)..(i2 + 4).min(n2) {
                        let e1 = if i1 == j1 { 1.0 } else { 0.0 };
                        let e2 = if i2 == j2 { 1.0 } else { 0.0 };
                        let v = [
                            0.5 * (a.p2[(i1, j1)] * e2 + e1 * b.p2[(i2, j2)]),
                            0.5 * a.q2[(i1, j1)] * e2,
                            a.q[(i1, j1)] * b.q[(i2, j2)],
                            0.5 * e1 * b.q2[(i2, j2)],
                            a.q3[(i1, j1)] * e2 - 3.0 * s * a.q2[(i1, j1)] * b.q[(i2, j2)]
                                + 3.0 * s * s * a.q[(i1, j1)] * b.q2[(i2, j2)]
                                - s * s * s * e1 * b.q3[(i2, j2)],
                        ];
                        if v.iter().any(|x| *x != 0.0) {
                            cols.push(j1 * n2 + j2);
                            for (t, x) in terms.iter_mut().zip(v) {
                                t.push(x);
                            }
                        }
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        Ok(Self {
            cutoffs,
            row_ptr,
            cols,
            terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.0 * self.cutoffs.1
    }

    pub fn assemble(&self, w: &[f64; 5]) -> SparseMatrix {
        let vals = (0..self.cols.len())
            .map(|k| (0..5).map(|t| w[t] * self.terms[t][k]).sum())
            .collect();
        SparseMatrix {
            dim: self.dim(),
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals,
        }
    }

    fn assemble_into(&self, w: &[f64; 5], m: &mut SparseMatrix) {
        for (k, v) in m.vals.iter_mut().enumerate() {
            *v = w[0] * self.terms[0][k]
                + w[1] * self.terms[1][k]
                + w[2] * self.terms[2][k]
                + w[3] * self.terms[3][k]
                + w[4] * self.terms[4][k];
        }
    }
}

/// H(t) on the truncated basis.
pub fn build_hamiltonian(model: &AnharmonicModel, t: f64, cutoffs: (usize, usize)) -> Result<SparseMatrix> {
    let terms = HamiltonianTerms::build(cutoffs, model.quadratic.mu)?;
    Ok(terms.assemble(&model.weights(t)?))
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// exp(−iτH)v by Lanczos. Returns None if `KRYLOV_MAX` iterations do not
/// reach the tolerance.
fn krylov_exp(h: &SparseMatrix, v: &[C], tau: f64) -> Option<Vec<C>> {
    let beta0 = norm(v);
    if beta0 == 0.0 {
        return Some(v.to_vec());
    }
    let n = v.len();
    let mut basis: Vec<Vec<C>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C::new(0.0, 0.0); n];
    let small = |a: &[f64], b: &[f64]| -> DVector<C> {
        let m = a.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = a[i];
            if i + 1 < m {
                t[(i, i + 1)] = b[i];
                t[(i + 1, i)] = b[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        // y = U exp(−iτΛ) Uᵀ e₁
        DVector::from_fn(m, |i, _| {
            (0..m)
                .map(|k| {
                    C::from_polar(1.0, -tau * eig.eigenvalues[k])
                        * eig.eigenvectors[(i, k)]
                        * eig.eigenvectors[(0, k)]
                })
                .sum()
        })
    };
    for j in 0..KRYLOV_MAX {
        h.apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= vi * a;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= vi * b;
            }
        }
        alpha.push(a);
        let b = norm(&w);
        let m = j + 1;
        let done = b < 1e-14 * beta0.max(1.0);
        if done || (m >= 6 && m % 2 == 0) || m == KRYLOV_MAX {
            let y = small(&alpha, &beta);
            let err = b * y[m - 1].norm();
            if done || err < KRYLOV_TOL {
                let mut out = vec![C::new(0.0, 0.0); n];
                for (k, vk) in basis.iter().enumerate() {
                    let c = y[k] * beta0;
                    for (o, x) in out.iter_mut().zip(vk) {
                        *o += x * c;
                    }
                }
                return Some(out);
            }
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    None
}

/// exp(−iτH)v, halving τ until the Krylov projection converges.
fn expmv(h: &SparseMatrix, v: &[C], tau: f64, depth: u32) -> Result<Vec<C>> {
    if let Some(out) = krylov_exp(h, v, tau) {
        return Ok(out);
    }
    if depth > 12 {
        return Err(Error::Integration("Krylov exponential did not converge".into()));
    }
    let half = expmv(h, v, 0.5 * tau, depth + 1)?;
    expmv(h, &half, 0.5 * tau, depth + 1)
}

/// Pure state on the truncated two-mode basis, index n₁·N₂ + n₂.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub cutoffs: (usize, usize),
    pub amplitudes: Vec<C>,
}

/// Amplitudes of a single-mode pure state on n levels.
pub fn single_mode_amplitudes(input: ModeInput, n: usize) -> Result<Vec<C>> {
    let mut c = vec![C::new(0.0, 0.0); n];
    match input {
        ModeInput::Vacuum => c[0] = C::new(1.0, 0.0),
        ModeInput::Fock(k) => {
            if k >= n {
                return Err(Error::Leakage {
                    population: 1.0,
                    mode: 1,
                    cutoff: n,
                });
            }
            c[k] = C::new(1.0, 0.0);
        }
        ModeInput::Coherent(alpha) => {
            c[0] = C::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
            for k in 1..n {
                c[k] = c[k - 1] * alpha / (k as f64).sqrt();
            }
        }
        ModeInput::Squeezed(db) => {
            let r = crate::state::squeeze_parameter(db);
            c[0] = C::new(1.0 / r.cosh().sqrt(), 0.0);
            let mut k = 2;
            while k < n {
                let ratio = -r.tanh() * (((k - 1) as f64) / k as f64).sqrt();
                c[k] = c[k - 2] * ratio;
                k += 2;
            }
        }
        ModeInput::Thermal(_) => {
            return Err(Error::config(
                "input",
                "thermal states are mixed; use a coherent proxy for the number-basis solver",
            ))
        }
    }
    Ok(c)
}

impl FockState {
    pub fn product(ion1: ModeInput, ion2: ModeInput, cutoffs: (usize, usize)) -> Result<Self> {
        let a = single_mode_amplitudes(ion1, cutoffs.0)?;
        let b = single_mode_amplitudes(ion2, cutoffs.1)?;
        let mut amplitudes = Vec::with_capacity(a.len() * b.len());
        for x in &a {
            for y in &b {
                amplitudes.push(x * y);
            }
        }
        let mut st = Self { cutoffs, amplitudes };
        let nrm = st.norm();
        st.amplitudes.iter_mut().for_each(|x| *x /= nrm);
        Ok(st)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn populations(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n2 = self.cutoffs.1;
        self.amplitudes
            .iter()
            .enumerate()
            .map(move |(k, a)| (k / n2, k % n2, a.norm_sqr()))
    }

    /// (⟨n₁⟩, ⟨n₂⟩)
    pub fn occupations(&self) -> (f64, f64) {
        self.populations().fold((0.0, 0.0), |(a, b), (i, j, p)| {
            (a + i as f64 * p, b + j as f64 * p)
        })
    }

    /// Population of the highest kept level of each mode.
    pub fn top_populations(&self) -> (f64, f64) {
        let (n1, n2) = self.cutoffs;
        self.populations().fold((0.0, 0.0), |(a, b), (i, j, p)| {
            (
                a + if i == n1 - 1 { p } else { 0.0 },
                b + if j == n2 - 1 { p } else { 0.0 },
            )
        })
    }

    pub fn check_leakage(&self) -> Result<()> {
        let (a, b) = self.top_populations();
        for (mode, p, n) in [(1usize, a, self.cutoffs.0), (2, b, self.cutoffs.1)] {
            if p > LEAKAGE_LIMIT {
                return Err(Error::Leakage {
                    population: p,
                    mode,
                    cutoff: n,
                });
            }
        }
        Ok(())
    }

    /// |⟨n₁, n₂|ψ⟩|²
    pub fn population(&self, n1: usize, n2: usize) -> f64 {
        self.amplitudes[n1 * self.cutoffs.1 + n2].norm_sqr()
    }

    /// ⟨Q₁²⟩-style moments, for comparison with the Gaussian solver.
    pub fn moments(&self) -> GaussianState {
        let ops = [
            quadrature(self, 0, false),
            quadrature(self, 0, true),
            quadrature(self, 1, false),
            quadrature(self, 1, true),
        ];
        let mut mean = nalgebra::Vector4::zeros();
        let mut sigma = nalgebra::Matrix4::zeros();
        for i in 0..4 {
            mean[i] = dot(&self.amplitudes, &ops[i]).re;
        }
        for i in 0..4 {
            for j in 0..4 {
                sigma[(i, j)] = dot(&ops[i], &ops[j]).re - mean[i] * mean[j];
            }
        }
        GaussianState { mean, sigma }
    }

    /// Embeds into larger cutoffs (zero padding).
    pub fn embed(&self, cutoffs: (usize, usize)) -> Self {
        let mut amplitudes = vec![C::new(0.0, 0.0); cutoffs.0 * cutoffs.1];
        for (i, j, _) in self.populations() {
            if i < cutoffs.0 && j < cutoffs.1 {
                amplitudes[i * cutoffs.1 + j] = self.amplitudes[i * self.cutoffs.1 + j];
            }
        }
        Self { cutoffs, amplitudes }
    }

    /// |⟨self|other⟩|² after embedding both in the larger basis.
    pub fn fidelity(&self, other: &Self) -> f64 {
        let big = (self.cutoffs.0.max(other.cutoffs.0), self.cutoffs.1.max(other.cutoffs.1));
        dot(&self.embed(big).amplitudes, &other.embed(big).amplitudes).norm_sqr()
    }
}

/// Q or P of one mode applied to the state.
fn quadrature(st: &FockState, mode: usize, momentum: bool) -> Vec<C> {
    let (n1, n2) = st.cutoffs;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = vec![C::new(0.0, 0.0); st.amplitudes.len()];
    for i in 0..n1 {
        for j in 0..n2 {
            let k = if mode == 0 { i } else { j };
            let n = if mode == 0 { n1 } else { n2 };
            let stride = if mode == 0 { n2 } else { 1 };
            let idx = i * n2 + j;
            // (Q ψ)_k = (√k ψ_{k−1} + √(k+1) ψ_{k+1})/√2
            // (P ψ)_k = i(√k ψ_{k−1} − √(k+1) ψ_{k+1})/√2
            let lo = if k > 0 { st.amplitudes[idx - stride] * (k as f64).sqrt() } else { C::new(0.0, 0.0) };
            let hi = if k + 1 < n { st.amplitudes[idx + stride] * ((k + 1) as f64).sqrt() } else { C::new(0.0, 0.0) };
            out[idx] = if momentum { C::new(0.0, s) * (lo - hi) } else { (lo + hi) * s };
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FockTracePoint {
    pub t: f64,
    pub n1: f64,
    pub n2: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockOptions {
    /// Magnus step in 1/ω₀.
    pub step: f64,
    /// Raise on top-level population above the leakage limit.
    pub check_leakage: bool,
    /// Record a trace point every this many steps (0 disables).
    pub trace_every: usize,
}

impl Default for FockOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            check_leakage: true,
            trace_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockRun {
    pub state: FockState,
    pub norm_drift: f64,
    /// Largest top-level population seen at any step.
    pub max_leakage: f64,
    pub trace: Vec<FockTracePoint>,
    pub steps: usize,
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Integrates iψ̇ = H(t)ψ over the model's duration.
pub fn propagate_fock(model: &AnharmonicModel, initial: &FockState, opts: FockOptions) -> Result<FockRun> {
    let duration = model.quadratic.duration;
    let terms = HamiltonianTerms::build(initial.cutoffs, model.quadratic.mu)?;
    let norm0 = initial.norm();
    if (norm0 - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("initial state norm {norm0} is not 1")));
    }
    let steps = if duration > 0.0 {
        (duration / opts.step).ceil().max(1.0) as usize
    } else {
        0
    };
    let h = if steps > 0 { duration / steps as f64 } else { 0.0 };
    let (c1, c2) = (0.5 - SQRT3 / 6.0, 0.5 + SQRT3 / 6.0);
    let (a1, a2) = ((3.0 - 2.0 * SQRT3) / 12.0, (3.0 + 2.0 * SQRT3) / 12.0);
    let mut psi = initial.amplitudes.clone();
    let mut scratch = terms.assemble(&[0.0; 5]);
    let mut trace = Vec::new();
    let mut max_leakage: f64 = 0.0;
    let record = |t: f64, psi: &[C], trace: &mut Vec<FockTracePoint>| {
        let st = FockState {
            cutoffs: initial.cutoffs,
            amplitudes: psi.to_vec(),
        };
        let (n1, n2) = st.occupations();
        trace.push(FockTracePoint { t, n1, n2, norm: st.norm() });
    };
    if opts.trace_every > 0 {
        record(0.0, &psi, &mut trace);
    }
    for k in 0..steps {
        let t = k as f64 * h;
        let w1 = model.weights(t + c1 * h)?;
        let w2 = model.weights(t + c2 * h)?;
        let mix = |x: f64, y: f64| -> [f64; 5] {
            let mut w = [0.0; 5];
            for i in 0..5 {
                w[i] = x * w1[i] + y * w2[i];
            }
            w
        };
        // the right-hand factor, weighted towards the earlier node, acts first
        for w in [mix(a2, a1), mix(a1, a2)] {
            terms.assemble_into(&w, &mut scratch);
            psi = expmv(&scratch, &psi, h, 0)?;
        }
        let st = FockState {
            cutoffs: initial.cutoffs,
            amplitudes: psi,
        };
        let (ta, tb) = st.top_populations();
        max_leakage = max_leakage.max(ta).max(tb);
        psi = st.amplitudes;
        if opts.trace_every > 0 && ((k + 1) % opts.trace_every == 0 || k + 1 == steps) {
            record(t + h, &psi, &mut trace);
        }
    }
    let state = FockState {
        cutoffs: initial.cutoffs,
        amplitudes: psi,
    };
    let norm_drift = (state.norm() - norm0).abs();
    if norm_drift > NORM_FAILURE {
        return Err(Error::Integration(format!("norm drift {norm_drift:.3e}")));
    }
    if opts.check_leakage {
        if max_leakage > LEAKAGE_LIMIT {
            let (a, b) = state.top_populations();
            let (mode, cutoff) = if a >= b { (1, initial.cutoffs.0) } else { (2, initial.cutoffs.1) };
            return Err(Error::Leakage {
                population: max_leakage,
                mode,
                cutoff,
            });
        }
    }
    Ok(FockRun {
        state,
        norm_drift,
        max_leakage,
        trace,
        steps,
    })
}

/// ⟨ψ|H(t)|ψ⟩ in ħω₀.
pub fn energy(model: &AnharmonicModel, state: &FockState, t: f64) -> Result<f64> {
    let h = build_hamiltonian(model, t, state.cutoffs)?;
    let mut y = vec![C::new(0.0, 0.0); state.amplitudes.len()];
    h.apply(&state.amplitudes, &mut y);
    Ok(dot(&state.amplitudes, &y).re)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffRow {
    pub cutoff: usize,
    pub n1_final: f64,
    pub n2_final: f64,
    /// Overlap with the final state of the largest cutoff.
    pub fidelity_to_top: f64,
    pub max_leakage: f64,
    pub norm_drift: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<CutoffRow>,
    /// |Δn₁| between the two largest cutoffs.
    pub top_change: f64,
    pub converged: bool,
    /// Successive changes did not shrink monotonically.
    pub non_monotone: bool,
}

/// Final observables against a ladder of equal per-mode cutoffs.
pub fn convergence_sweep(
    model: &AnharmonicModel,
    ion1: ModeInput,
    ion2: ModeInput,
    ladder: &[usize],
    opts: FockOptions,
) -> Result<ConvergenceTable> {
    if ladder.len() < 3 {
        return Err(Error::Domain("a convergence sweep needs at least three cutoffs".into()));
    }
    let mut ladder = ladder.to_vec();
    ladder.sort_unstable();
    let opts = FockOptions {
        check_leakage: false,
        ..opts
    };
    let mut finals = Vec::new();
    let mut rows = Vec::new();
    for &n in &ladder {
        let init = FockState::product(ion1, ion2, (n, n))?;
        let run = propagate_fock(model, &init, opts)?;
        let (n1, n2) = run.state.occupations();
        rows.push(CutoffRow {
            cutoff: n,
            n1_final: n1,
            n2_final: n2,
            fidelity_to_top: f64::NAN,
            max_leakage: run.max_leakage,
            norm_drift: run.norm_drift,
            status: if run.max_leakage > LEAKAGE_LIMIT { "leakage".into() } else { "ok".into() },
        });
        finals.push(run.state);
    }
    let top = finals.last().unwrap().clone();
    for (row, st) in rows.iter_mut().zip(&finals) {
        row.fidelity_to_top = st.fidelity(&top);
    }
    let changes: Vec<f64> = rows.windows(2).map(|w| (w[1].n1_final - w[0].n1_final).abs()).collect();
    let top_change = *changes.last().unwrap();
    let non_monotone = changes.windows(2).any(|w| w[1] > w[0] * 1.5 && w[1] > 1e-12);
    Ok(ConvergenceTable {
        converged: top_change <= 1e-4 && rows.last().unwrap().status == "ok",
        rows,
        top_change,
        non_monotone,
    })
}

/// Per-mode cutoff that holds a state of mean occupation `n` through a
/// collision: n + 10√n + 8 (110 for n = 40).
pub fn suggested_cutoff(n: f64) -> usize {
    ((n + 10.0 * n.sqrt()).ceil() as usize + 8).max(12)
}

/// Final qubit and coolant occupations, displacement included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinalOccupation {
    pub n1: f64,
    pub n2: f64,
}

/// Exact quadratic-model occupations for the same input, from the
/// symplectic solver.
pub fn quadratic_reference(model: &QuadraticModel, ion1: ModeInput, ion2: ModeInput) -> Result<FinalOccupation> {
    use crate::gaussian::{coherent_phonon, mean_phonon, propagate_symplectic, Mode, PropagationOptions, QuadratureFrame};
    let opts = PropagationOptions {
        trace: false,
        check_halving: false,
        ..Default::default()
    };
    let rec = propagate_symplectic(model, &GaussianState::product(ion1, ion2), opts)?;
    let f = QuadratureFrame::reference();
    Ok(FinalOccupation {
        n1: mean_phonon(&rec.state, &f, Mode::Ion1) + coherent_phonon(&rec.state, Mode::Ion1),
        n2: mean_phonon(&rec.state, &f, Mode::Ion2) + coherent_phonon(&rec.state, Mode::Ion2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSample {
    pub phase: f64,
    pub n1_quadratic: f64,
    pub n1_anharmonic: f64,
    pub n2_anharmonic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseAverage {
    pub mean_occupation: f64,
    pub cutoff: usize,
    pub samples: Vec<PhaseSample>,
    /// Mean over phases of the qubit excess above the quadratic model.
    pub qubit_excess: f64,
    pub max_leakage: f64,
}

/// Qubit excess for a coherent qubit state |√n e^{iφ}⟩ averaged over
/// `phases` equally spaced φ, coolant in its ground state. The average is
/// the phase-randomized (Poissonian) proxy of an n-phonon qubit.
pub fn phase_averaged_excess(
    model: &AnharmonicModel,
    mean_occupation: f64,
    phases: usize,
    cutoff: usize,
    opts: FockOptions,
) -> Result<PhaseAverage> {
    if phases == 0 {
        return Err(Error::Domain("need at least one phase sample".into()));
    }
    let opts = FockOptions {
        check_leakage: false,
        trace_every: 0,
        ..opts
    };
    let mut samples = Vec::with_capacity(phases);
    let mut max_leakage: f64 = 0.0;
    for k in 0..phases {
        let phase = 2.0 * std::f64::consts::PI * k as f64 / phases as f64;
        let input = ModeInput::Coherent(C::from_polar(mean_occupation.sqrt(), phase));
        let reference = quadratic_reference(&model.quadratic, input, ModeInput::Vacuum)?;
        let init = FockState::product(input, ModeInput::Vacuum, (cutoff, cutoff))?;
        let run = propagate_fock(model, &init, opts)?;
        max_leakage = max_leakage.max(run.max_leakage);
        let (n1, n2) = run.state.occupations();
        samples.push(PhaseSample {
            phase,
            n1_quadratic: reference.n1,
            n1_anharmonic: n1,
            n2_anharmonic: n2,
        });
    }
    let qubit_excess = samples
        .iter()
        .map(|s| s.n1_anharmonic - s.n1_quadratic)
        .sum::<f64>()
        / phases as f64;
    Ok(PhaseAverage {
        mean_occupation,
        cutoff,
        samples,
        qubit_excess,
        max_leakage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{Coefficients, QuadraticModel};

    fn free(duration: f64, mu: f64) -> AnharmonicModel {
        AnharmonicModel::new(QuadraticModel::constant(Coefficients::free(mu), mu, duration, 0.01), 8e-6, true, CubicSign::Taylor)
    }

    #[test]
    fn free_hamiltonian_is_diagonal() {
        let h = build_hamiltonian(&free(1.0, 0.6), 0.0, (6, 5)).unwrap();
        for i in 0..6 {
            for j in 0..5 {
                let k = i * 5 + j;
                for l in 0..30 {
                    let expect = if l == k { (i + j + 1) as f64 } else { 0.0 };
                    // the last level of each mode misses its ladder partner
                    if i < 4 && j < 3 {
                        assert!((h.get(k, l) - expect).abs() < 1e-12, "({k},{l})");
                    }
                }
            }
        }
    }

    #[test]
    fn ladder_matrix_elements() {
        let ops = LadderOps::new(12);
        // <0|Q²|0> = 1/2, so <0,0|(Q1 − Q2)²|0,0> = 1
        assert!((ops.q2[(0, 0)] - 0.5).abs() < 1e-15);
        // <n+3|Q³|n> = sqrt((n+1)(n+2)(n+3))/2^(3/2)
        for n in 0..8 {
            let expect = (((n + 1) * (n + 2) * (n + 3)) as f64).sqrt() / 8f64.sqrt();
            assert!((ops.q3[(n + 3, n)] - expect).abs() < 1e-12);
            // <n+1|Q³|n> = 3 (n+1)^(3/2) / 2^(3/2)
            let expect = 3.0 * ((n + 1) as f64).powf(1.5) / 8f64.sqrt();
            assert!((ops.q3[(n + 1, n)] - expect).abs() < 1e-12);
        }
        // exactness at the top kept level
        assert!((ops.q2[(11, 11)] - 11.5).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_is_symmetric() {
        let mut m = free(1.0, 0.6);
        m.quadratic = QuadraticModel::constant(Coefficients::on_constraints(0.9, 0.6), 0.6, 1.0, 0.01);
        let h = build_hamiltonian(&m, 0.0, (10, 9)).unwrap();
        assert!(h.asymmetry() < 1e-12);
        assert!(h.nnz() > 0);
    }

    #[test]
    fn zero_duration_is_identity() {
        let init = FockState::product(ModeInput::coherent_with_mean(2.0), ModeInput::Fock(1), (12, 8)).unwrap();
        let run = propagate_fock(&free(0.0, 1.0), &init, FockOptions::default()).unwrap();
        assert_eq!(run.state, init);
    }

    #[test]
    fn free_evolution_phases() {
        // |1,2> picks up e^{-i 4 t} for H = n1 + n2 + 1
        let init = FockState::product(ModeInput::Fock(1), ModeInput::Fock(2), (6, 6)).unwrap();
        let t = 1.37;
        let run = propagate_fock(&free(t, 1.0), &init, FockOptions::default()).unwrap();
        let a = run.state.amplitudes[6 + 2];
        assert!((a - C::from_polar(1.0, -4.0 * t)).norm() < 1e-10, "{a}");
    }

    #[test]
    fn squeezed_and_coherent_amplitudes() {
        let sq = FockState::product(ModeInput::Squeezed(5.0), ModeInput::Vacuum, (60, 4)).unwrap();
        let m = sq.moments();
        assert!((m.sigma[(0, 0)] - 0.5 * 10f64.powf(-0.5)).abs() < 1e-10, "{}", m.sigma[(0, 0)]);
        let coh = FockState::product(ModeInput::coherent_with_mean(4.0), ModeInput::Vacuum, (40, 4)).unwrap();
        let (n1, _) = coh.occupations();
        assert!((n1 - 4.0).abs() < 1e-10);
        assert!((coh.moments().mean[0] - 8f64.sqrt()).abs() < 1e-10);
        assert!(FockState::product(ModeInput::Thermal(1.0), ModeInput::Vacuum, (8, 8)).is_err());
    }

    #[test]
    fn leakage_is_detected() {
        let init = FockState::product(ModeInput::coherent_with_mean(6.0), ModeInput::Vacuum, (10, 6)).unwrap();
        assert!(matches!(init.check_leakage(), Err(Error::Leakage { mode: 1, .. })));
        let run = propagate_fock(&free(0.5, 1.0), &init, FockOptions::default());
        assert!(matches!(run, Err(Error::Leakage { .. })));
    }

    fn sbs_model(hbar: f64, cubic: bool, mu_coolant: f64) -> AnharmonicModel {
        use crate::config::CollisionConfig;
        use crate::units::IonSpecies;
        let cfg = CollisionConfig::ca_mg_default()
            .with_species(IonSpecies::calcium40(), IonSpecies::new("c", mu_coolant * 40.0).unwrap())
            .unwrap();
        let wf = crate::pulse::synthesize_sbs(&cfg).unwrap();
        AnharmonicModel::new(QuadraticModel::from_waveform(&wf).unwrap(), hbar, cubic, CubicSign::Taylor)
    }

    #[test]
    fn single_phonon_is_swapped() {
        let m = sbs_model(8e-6, false, 0.6);
        let init = FockState::product(ModeInput::Fock(1), ModeInput::Vacuum, (16, 16)).unwrap();
        let run = propagate_fock(&m, &init, FockOptions::default()).unwrap();
        assert!(run.state.population(0, 1) > 1.0 - 1e-5);
        assert!(run.norm_drift < 1e-8);
        // second moments agree with the symplectic solver
        let g = crate::gaussian::propagate_symplectic(
            &m.quadratic,
            &GaussianState::product(ModeInput::Fock(1), ModeInput::Vacuum),
            Default::default(),
        )
        .unwrap();
        let f = run.state.moments();
        assert!((f.sigma - g.state.sigma).abs().max() < 1e-6);
        assert!((f.mean - g.state.mean).abs().max() < 1e-9);
    }

    #[test]
    fn step_halving_reproduces_observables() {
        let m = sbs_model(1e-3, true, 0.6);
        let init = FockState::product(ModeInput::coherent_with_mean(2.0), ModeInput::Vacuum, (24, 24)).unwrap();
        let a = propagate_fock(&m, &init, FockOptions { step: 0.05, ..Default::default() }).unwrap();
        let b = propagate_fock(&m, &init, FockOptions { step: 0.025, ..Default::default() }).unwrap();
        let (x1, x2) = a.state.occupations();
        let (y1, y2) = b.state.occupations();
        assert!((x1 - y1).abs() < 1e-7 && (x2 - y2).abs() < 1e-7);
    }

    #[test]
    fn energy_is_conserved_for_frozen_coefficients() {
        let c = Coefficients::on_constraints(10.5, 0.6);
        let q = QuadraticModel::constant(c, 0.6, 2.0 * std::f64::consts::PI, 0.01);
        let m = AnharmonicModel::new(q, 1e-3, true, CubicSign::Taylor);
        let init = FockState::product(ModeInput::coherent_with_mean(3.0), ModeInput::Fock(1), (30, 20)).unwrap();
        let run = propagate_fock(&m, &init, FockOptions::default()).unwrap();
        let e0 = energy(&m, &init, 0.0).unwrap();
        let e1 = energy(&m, &run.state, 0.0).unwrap();
        assert!((e0 - e1).abs() < 1e-8, "{e0} {e1}");
    }

    #[test]
    fn cubic_term_leaves_centre_of_mass_alone_for_equal_masses() {
        use crate::gaussian::{coherent_phonon, mean_phonon, Mode, QuadratureFrame};
        // large hbar so the cubic term visibly changes the stretch mode
        let n_plus = |cubic: bool| {
            let m = sbs_model(2e-3, cubic, 1.0);
            let init = FockState::product(ModeInput::Fock(2), ModeInput::Vacuum, (30, 30)).unwrap();
            let st = propagate_fock(&m, &init, FockOptions::default()).unwrap().state;
            let g = st.moments();
            let f = QuadratureFrame::reference();
            (
                mean_phonon(&g, &f, Mode::Plus) + coherent_phonon(&g, Mode::Plus),
                mean_phonon(&g, &f, Mode::Minus) + coherent_phonon(&g, Mode::Minus),
            )
        };
        let (p0, m0) = n_plus(false);
        let (p1, m1) = n_plus(true);
        assert!((m1 - m0).abs() > 1e-5, "{m0} {m1}");
        assert!((p1 - p0).abs() < 1e-8, "{p0} {p1}");
    }

    #[test]
    fn sweep_flags_low_cutoffs() {
        let m = sbs_model(8e-6, false, 0.6);
        let t = convergence_sweep(&m, ModeInput::Fock(1), ModeInput::Vacuum, &[6, 8, 16, 18], FockOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[0].status, "leakage");
        assert!(t.rows[3].status == "ok" && t.converged, "{t:?}");
        assert!((t.rows[3].fidelity_to_top - 1.0).abs() < 1e-12);
    }
}
