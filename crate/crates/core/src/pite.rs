//! Probabilistic imaginary-time evolution (PITE).
//!
//! A non-unitary `f(H)` is applied with one ancilla: the ancilla-`|0⟩` block
//! of a unitary on `n + 1` qubits equals `f(H)`, and reading the ancilla as
//! `|0⟩` leaves the system in `f(H)|ψ⟩ / ‖f(H)|ψ⟩‖`. Multi-step PITE chains
//! `K` such steps with the first-order factors
//! `f_k(λ) = sin(φ_k − (λ − E_k) Δτ_k s_k)`.
//!
//! Steps can be applied exactly (a uniformly controlled rotation in the
//! eigenbasis) or as circuits built from controlled Trotterized real-time
//! evolutions. Ancillas are either kept until a final joint post-selection
//! or measured and reset after each step; both give the same `P_K` and
//! `δ_K`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::kak::lowered_depth;
use crate::linalg::{c64, cis, hadamard, phase_gate, CMat, Mat2, C64, ZERO};
use crate::spin_model::{ModelInstance, Spectrum, TermSplit};
use crate::statevector::{Circuit, Control, GateOp, StateVector};
use crate::trotter::{push_controlled_evolution, CRTE_COUNTER};

pub const DEFAULT_GAMMA: f64 = 0.8;
/// Longest Trotter sub-step used by circuit-mode steps.
pub const DEFAULT_MAX_TROTTER_STEP: f64 = 0.1;
/// Distance from `1/√2` below which `γ` (or `‖f‖`) counts as singular.
pub const SINGULAR_TOL: f64 = 1e-9;

/// `W = (1/√2) [[1, -i], [1, i]]`.
pub fn w_gate() -> Mat2 {
    let h = FRAC_1_SQRT_2;
    Mat2::new(c64(h, 0.0), c64(0.0, -h), c64(h, 0.0), c64(0.0, h))
}

/// Scalar function encoded by an exact block encoding.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockFunction {
    /// `Γ e^{-τλ}`.
    Ite { gamma: f64, tau: f64 },
    /// `cos((λ - E) t)`.
    Cosine { energy: f64, t: f64 },
    /// One value per eigenvalue, in ascending eigenvalue order.
    Values(Vec<f64>),
}

impl BlockFunction {
    fn values(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        Ok(match self {
            BlockFunction::Ite { gamma, tau } => spectrum
                .eigenvalues
                .iter()
                .map(|l| gamma * (-tau * l).exp())
                .collect(),
            BlockFunction::Cosine { energy, t } => spectrum
                .eigenvalues
                .iter()
                .map(|l| ((l - energy) * t).cos())
                .collect(),
            BlockFunction::Values(v) => {
                if v.len() != spectrum.dim() {
                    return domain(format!(
                        "{} values for dimension {}",
                        v.len(),
                        spectrum.dim()
                    ));
                }
                v.clone()
            }
        })
    }
}

/// Exact one-ancilla embedding of `f(H)`.
#[derive(Clone, Debug)]
pub struct ExactBlockEncoding {
    pub f_values: Vec<f64>,
    /// `Θ_i = arccos((f_i + √(1 - f_i²)) / √2)`.
    pub theta: Vec<f64>,
    /// Generator eigenvalues `κΘ_i = π/4 − arccos f_i`; the sign is resolved
    /// per eigenvalue so the identity also holds when `f` straddles `1/√2`.
    pub kappa_theta: Vec<f64>,
    /// `sgn(‖f(H)‖ − 1/√2)`.
    pub kappa_sign: f64,
    /// `2^{n+1}`-dimensional unitary, ancilla as the most significant qubit;
    /// its top-left block is `f(H)`.
    pub unitary: CMat,
}

pub fn exact_block_encoding(f: &BlockFunction, spectrum: &Spectrum) -> Result<ExactBlockEncoding> {
    let mut f_values = f.values(spectrum)?;
    for v in &mut f_values {
        if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
            return Err(Error::Range(format!("|f(λ)| = {} exceeds 1", v.abs())));
        }
        *v = v.clamp(-1.0, 1.0);
    }
    let norm = f_values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if (norm - FRAC_1_SQRT_2).abs() < SINGULAR_TOL {
        return Err(Error::Singularity("‖f(H)‖ = 1/√2".into()));
    }
    let theta: Vec<f64> = f_values
        .iter()
        .map(|v| {
            ((v + (1.0 - v * v).sqrt()) * FRAC_1_SQRT_2)
                .clamp(-1.0, 1.0)
                .acos()
        })
        .collect();
    let kappa_theta: Vec<f64> = f_values.iter().map(|v| FRAC_PI_4 - v.acos()).collect();
    let dim = spectrum.dim();
    let w = w_gate();
    let v = &spectrum.eigenvectors;
    let mut unitary = CMat::zeros(2 * dim, 2 * dim);
    for (i, kt) in kappa_theta.iter().enumerate() {
        // e^{iπ/4} W diag(e^{-iκΘ}, e^{iκΘ}) W for this eigenvalue
        let s = Mat2::new(cis(-kt), ZERO, ZERO, cis(*kt));
        let m = w * s * w * cis(FRAC_PI_4);
        let proj = v.column(i) * v.column(i).adjoint();
        for a in 0..2 {
            for b in 0..2 {
                let mut blk = unitary.view_mut((a * dim, b * dim), (dim, dim));
                blk += &proj * m[(a, b)];
            }
        }
    }
    Ok(ExactBlockEncoding {
        f_values,
        theta,
        kappa_theta,
        kappa_sign: if norm > FRAC_1_SQRT_2 { 1.0 } else { -1.0 },
        unitary,
    })
}

/// Gate-level form of an exact block encoding on `n + 1` qubits (ancilla
/// `n`): `W`, controlled `e^{∓iκΘ}` on the two ancilla values, `W`.
pub fn block_encoding_circuit(enc: &ExactBlockEncoding, spectrum: &Spectrum) -> Result<Circuit> {
    let n = spectrum.num_qubits();
    let system: Vec<usize> = (0..n).rev().collect();
    let minus = spectrum.operator(|_| ZERO);
    let mut plus = minus.clone();
    let mut minus = minus;
    for (i, kt) in enc.kappa_theta.iter().enumerate() {
        let proj = spectrum.eigenvectors.column(i) * spectrum.eigenvectors.column(i).adjoint();
        minus += &proj * cis(-kt);
        plus += &proj * cis(*kt);
    }
    let mut c = Circuit::new(n + 1);
    c.push(GateOp::single(n, w_gate(), "w")?)?;
    c.push(GateOp::dense(system.clone(), minus, "select")?.with_control(Control::on_zero(n)))?;
    c.push(GateOp::dense(system, plus, "select")?.with_control(Control::on_one(n)))?;
    c.push(GateOp::single(n, w_gate(), "w")?)?;
    c.add_global_phase(FRAC_PI_4);
    Ok(c)
}

/// Parameters of one first-order PITE factor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiteStepParams {
    pub gamma: f64,
    pub dtau: f64,
    /// `φ = arcsin γ`.
    pub phi: f64,
    /// `s = tan φ = γ / √(1 − γ²)`.
    pub s: f64,
    /// Taylor coefficients of `κΘ ≈ a₀ + a₁ H`.
    pub a0: f64,
    pub a1: f64,
    /// `E = λ₁ − (atan s − (π/2)(2n+1)) / (Δτ s)`.
    pub energy_shift: f64,
    pub branch: i64,
    /// Ancilla phase-gate angle with the shift included.
    pub theta: f64,
}

impl PiteStepParams {
    /// Real-time evolution length `Δτ s` of each select branch.
    pub fn rte_time(&self) -> f64 {
        self.dtau * self.s
    }

    fn shift_value(&self, shift: bool) -> f64 {
        if shift {
            self.energy_shift
        } else {
            0.0
        }
    }

    /// Angle of the ancilla phase gate `diag(1, e^{iθ})`:
    /// `2φ − π + 2 E s Δτ` (shift term only when enabled).
    pub fn phase_angle(&self, shift: bool) -> f64 {
        2.0 * self.phi - PI + 2.0 * self.shift_value(shift) * self.rte_time()
    }

    /// `f(λ) = sin(φ − (λ − E) Δτ s)`.
    pub fn f(&self, lambda: f64, shift: bool) -> f64 {
        (self.phi - (lambda - self.shift_value(shift)) * self.rte_time()).sin()
    }
}

/// Energy shift for branch `n`.
pub fn energy_shift(lambda1: f64, s: f64, dtau: f64, branch: i64) -> f64 {
    lambda1 - (s.atan() - FRAC_PI_2 * (2 * branch + 1) as f64) / (dtau * s)
}

/// Parameters for one step. `branch: None` picks the branch with the
/// smallest `|E|` (lower branch on ties).
pub fn step_params(
    gamma: f64,
    dtau: f64,
    lambda1: f64,
    branch: Option<i64>,
) -> Result<PiteStepParams> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("γ = {gamma} outside (0, 1)"));
    }
    if (gamma - FRAC_1_SQRT_2).abs() < SINGULAR_TOL {
        return Err(Error::Singularity("γ = 1/√2".into()));
    }
    if !(dtau > 0.0) || !dtau.is_finite() {
        return domain(format!("Δτ = {dtau} must be positive"));
    }
    let phi = gamma.asin();
    let s = gamma / (1.0 - gamma * gamma).sqrt();
    let kappa = if gamma > FRAC_1_SQRT_2 { 1.0 } else { -1.0 };
    let a0 = kappa * ((gamma + (1.0 - gamma * gamma).sqrt()) * FRAC_1_SQRT_2).acos();
    let branch = match branch {
        Some(b) => b,
        None => {
            // E(b) is affine in b with slope π/(Δτ s); round the zero crossing.
            let e0 = energy_shift(lambda1, s, dtau, 0);
            let b0 = (-e0 * dtau * s / PI).round() as i64;
            (b0 - 1..=b0 + 1)
                .min_by(|x, y| {
                    let ex = energy_shift(lambda1, s, dtau, *x).abs();
                    let ey = energy_shift(lambda1, s, dtau, *y).abs();
                    ex.total_cmp(&ey).then(x.cmp(y))
                })
                .expect("non-empty range")
        }
    };
    let e = energy_shift(lambda1, s, dtau, branch);
    let mut p = PiteStepParams {
        gamma,
        dtau,
        phi,
        s,
        a0,
        a1: s,
        energy_shift: e,
        branch,
        theta: 0.0,
    };
    p.theta = p.phase_angle(true);
    Ok(p)
}

/// Imaginary-time step schedule
/// `Δτ_k = (1 − e^{−(k−1)/(κ̄K)}) (Δτ_max − Δτ_min) + Δτ_min`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauSchedule {
    pub dtau_min: f64,
    pub dtau_max: f64,
    pub kappa_bar: f64,
    pub values: Vec<f64>,
}

pub fn build_tau_schedule(
    k: usize,
    dtau_min: f64,
    dtau_max: f64,
    kappa_bar: f64,
) -> Result<TauSchedule> {
    if k == 0 {
        return domain("schedule needs at least one step");
    }
    if !(dtau_min > 0.0 && dtau_min <= dtau_max && dtau_max.is_finite()) {
        return domain(format!(
            "need 0 < Δτ_min ≤ Δτ_max (got {dtau_min}, {dtau_max})"
        ));
    }
    if !(kappa_bar > 0.0) {
        return domain(format!("schedule rate κ̄ = {kappa_bar} must be positive"));
    }
    let kappa_sched = kappa_bar * k as f64;
    let values = (1..=k)
        .map(|j| (1.0 - (-((j - 1) as f64) / kappa_sched).exp()) * (dtau_max - dtau_min) + dtau_min)
        .collect();
    Ok(TauSchedule {
        dtau_min,
        dtau_max,
        kappa_bar,
        values,
    })
}

/// `Δτ_min = π / (2 s (λ_N − λ₁))`, `Δτ_max = π / (s (λ₂ − λ₁))`.
pub fn default_tau_bounds(spectrum: &Spectrum, s: f64) -> Result<(f64, f64)> {
    let gap = spectrum.gap();
    if gap < crate::spin_model::DEGENERACY_TOL {
        return Err(Error::Singularity(format!(
            "ground state is degenerate (gap {gap:e})"
        )));
    }
    Ok((PI / (2.0 * s * spectrum.spread()), PI / (s * gap)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    /// Uniformly controlled rotation in the exact eigenbasis.
    Exact,
    /// Select-RTE circuit with product-formula branches of the given order.
    Circuit { order: usize },
}

impl StepMode {
    pub fn label(&self) -> &'static str {
        match self {
            StepMode::Exact => "exact",
            StepMode::Circuit { .. } => "circuit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AncillaMode {
    /// One fresh ancilla per step, all post-selected at the end.
    Retained,
    /// A single ancilla measured and reset after every step.
    Reuse,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiteConfig {
    /// One `γ_k` per step.
    pub gammas: Vec<f64>,
    pub schedule: TauSchedule,
    pub shift: bool,
    pub branch: Option<i64>,
    /// Error added to `λ₁` before computing the shift.
    pub ground_energy_error: f64,
    pub mode: StepMode,
    pub ancillas: AncillaMode,
    pub max_trotter_step: f64,
}

impl PiteConfig {
    /// Constant `γ = 0.8`, default bounds, `κ̄ = 1`, shift on, exact steps.
    pub fn standard(spectrum: &Spectrum, k: usize) -> Result<Self> {
        let s = DEFAULT_GAMMA / (1.0 - DEFAULT_GAMMA * DEFAULT_GAMMA).sqrt();
        let (lo, hi) = default_tau_bounds(spectrum, s)?;
        Ok(Self {
            gammas: vec![DEFAULT_GAMMA; k],
            schedule: build_tau_schedule(k, lo, hi, 1.0)?,
            shift: true,
            branch: None,
            ground_energy_error: 0.0,
            mode: StepMode::Exact,
            ancillas: AncillaMode::Retained,
            max_trotter_step: DEFAULT_MAX_TROTTER_STEP,
        })
    }

    pub fn steps(&self) -> usize {
        self.schedule.values.len()
    }

    pub fn step_params(&self, spectrum: &Spectrum) -> Result<Vec<PiteStepParams>> {
        if self.gammas.len() != self.steps() {
            return domain(format!(
                "{} γ values for {} steps",
                self.gammas.len(),
                self.steps()
            ));
        }
        let l1 = spectrum.ground_energy() + self.ground_energy_error;
        self.gammas
            .iter()
            .zip(&self.schedule.values)
            .map(|(g, dt)| step_params(*g, *dt, l1, self.branch))
            .collect()
    }

    /// Trotter repetitions used by circuit-mode step `k`.
    pub fn trotter_steps(&self, p: &PiteStepParams) -> usize {
        ((p.rte_time() / self.max_trotter_step).ceil() as usize).max(1)
    }
}

/// `P_K`, `δ_K` and `F_K(λ₁)` from the spectral formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralPite {
    pub p_k: f64,
    pub delta_k: f64,
    pub f_ground: f64,
}

pub fn spectral_pite(
    spectrum: &Spectrum,
    coeffs: &[C64],
    params: &[PiteStepParams],
    shift: bool,
) -> SpectralPite {
    let big_f = |l: f64| params.iter().map(|p| p.f(l, shift)).product::<f64>();
    let weights: Vec<f64> = spectrum
        .eigenvalues
        .iter()
        .zip(coeffs)
        .map(|(l, c)| c.norm_sqr() * big_f(*l).powi(2))
        .collect();
    let p_k: f64 = weights.iter().sum();
    SpectralPite {
        p_k,
        delta_k: 1.0 - weights[0] / p_k,
        f_ground: big_f(spectrum.ground_energy()),
    }
}

fn exact_step_blocks(spectrum: &Spectrum, p: &PiteStepParams, shift: bool) -> Vec<Mat2> {
    spectrum
        .eigenvalues
        .iter()
        .map(|l| {
            let f = p.f(*l, shift);
            let g = (1.0 - f * f).max(0.0).sqrt();
            Mat2::new(c64(f, 0.0), c64(g, 0.0), c64(g, 0.0), c64(-f, 0.0))
        })
        .collect()
}

fn system_targets(n: usize) -> Vec<usize> {
    (0..n).rev().collect()
}

/// Exact multi-step block on `n + K` qubits (ancilla of step `k` is qubit
/// `n + k`): rotate to the eigenbasis, one uniformly controlled rotation
/// per step, rotate back.
pub fn exact_pite_circuit(
    spectrum: &Spectrum,
    params: &[PiteStepParams],
    shift: bool,
) -> Result<Circuit> {
    let n = spectrum.num_qubits();
    let selectors: Vec<usize> = (0..n).collect();
    let v = spectrum.eigenvectors.clone();
    let mut c = Circuit::new(n + params.len());
    c.push(GateOp::dense(system_targets(n), v.adjoint(), "eigenbasis")?)?;
    for (k, p) in params.iter().enumerate() {
        c.push(GateOp::uniformly_controlled(
            n + k,
            &selectors,
            exact_step_blocks(spectrum, p, shift),
            "pite-step",
        )?)?;
    }
    c.push(GateOp::dense(system_targets(n), v, "eigenbasis")?)?;
    Ok(c)
}

fn step_prologue(c: &mut Circuit, ancilla: usize) -> Result<()> {
    c.push(GateOp::single(ancilla, w_gate(), "w")?)
}

fn step_epilogue(c: &mut Circuit, ancilla: usize, theta: f64) -> Result<()> {
    c.push(GateOp::single(ancilla, phase_gate(theta), "z")?)?;
    c.push(GateOp::single(ancilla, w_gate().adjoint(), "w")?)?;
    // The select layout leaves e^{iθ/2} on the |0⟩ block.
    c.add_global_phase(-theta / 2.0);
    Ok(())
}

/// One step as a circuit on `num_qubits` qubits: `W`, ancilla-|0⟩ branch
/// `e^{+iHt}`, ancilla-|1⟩ branch `e^{−iHt}` (`t = Δτ s`, each branch `r`
/// controlled Trotter sub-steps of the given order), phase gate, `W†`.
/// The ancilla-|0⟩ block equals `sin(φ − (H − E)Δτ s)` up to Trotter error.
pub fn build_step_circuit(
    split: &TermSplit,
    p: &PiteStepParams,
    ancilla: usize,
    num_qubits: usize,
    order: usize,
    r: usize,
    shift: bool,
) -> Result<Circuit> {
    let map: Vec<usize> = (0..split.n).collect();
    let t = p.rte_time();
    let mut c = Circuit::new(num_qubits);
    step_prologue(&mut c, ancilla)?;
    let dt = t / r as f64;
    push_controlled_evolution(
        &mut c,
        split,
        order,
        dt,
        r,
        &map,
        &[Control::on_zero(ancilla)],
        true,
    )?;
    push_controlled_evolution(
        &mut c,
        split,
        order,
        -dt,
        r,
        &map,
        &[Control::on_one(ancilla)],
        true,
    )?;
    step_epilogue(&mut c, ancilla, p.phase_angle(shift))?;
    Ok(c)
}

/// Same layout with exact dense branches `e^{±iHt}`.
pub fn exact_rte_step_circuit(
    spectrum: &Spectrum,
    p: &PiteStepParams,
    ancilla: usize,
    num_qubits: usize,
    shift: bool,
) -> Result<Circuit> {
    let n = spectrum.num_qubits();
    let t = p.rte_time();
    let mut c = Circuit::new(num_qubits);
    step_prologue(&mut c, ancilla)?;
    let fwd = spectrum.operator(|l| cis(l * t));
    let bwd = spectrum.operator(|l| cis(-l * t));
    c.push(GateOp::dense(system_targets(n), fwd, "rte")?.with_control(Control::on_zero(ancilla)))?;
    c.push(GateOp::dense(system_targets(n), bwd, "rte")?.with_control(Control::on_one(ancilla)))?;
    c.bump(CRTE_COUNTER, 2);
    step_epilogue(&mut c, ancilla, p.phase_angle(shift))?;
    Ok(c)
}

/// `K`-step circuit under the linear query schedule: step `k` issues
/// `k − 1` CRTE blocks of length `unit_time` per branch, so the whole
/// circuit holds `K(K − 1)` blocks. Used for depth and query accounting.
pub fn linear_query_circuit(
    split: &TermSplit,
    k_steps: usize,
    order: usize,
    unit_time: f64,
) -> Result<Circuit> {
    let n = split.n;
    let map: Vec<usize> = (0..n).collect();
    let phi = DEFAULT_GAMMA.asin();
    let mut c = Circuit::new(n + k_steps);
    for k in 0..k_steps {
        let anc = n + k;
        step_prologue(&mut c, anc)?;
        push_controlled_evolution(
            &mut c,
            split,
            order,
            unit_time,
            k,
            &map,
            &[Control::on_zero(anc)],
            false,
        )?;
        push_controlled_evolution(
            &mut c,
            split,
            order,
            -unit_time,
            k,
            &map,
            &[Control::on_one(anc)],
            false,
        )?;
        step_epilogue(&mut c, anc, 2.0 * phi - PI)?;
    }
    Ok(c)
}

/// Depth of one CRTE block (a controlled order-`p` sub-step) after lowering
/// to CNOTs and single-qubit gates.
pub fn crte_depth(split: &TermSplit, order: usize) -> Result<usize> {
    let map: Vec<usize> = (0..split.n).collect();
    let mut c = Circuit::new(split.n + 1);
    push_controlled_evolution(
        &mut c,
        split,
        order,
        0.1,
        1,
        &map,
        &[Control::on_one(split.n)],
        false,
    )?;
    Ok(lowered_depth(&c)?.0)
}

/// Lowered depth of the linear-query-schedule circuit.
pub fn measured_pite_depth(split: &TermSplit, k_steps: usize, order: usize) -> Result<usize> {
    let c = linear_query_circuit(split, k_steps, order, DEFAULT_MAX_TROTTER_STEP)?;
    Ok(lowered_depth(&c)?.0)
}

#[derive(Clone, Debug)]
pub struct PiteRunResult {
    pub p_k: f64,
    pub delta_k: f64,
    /// `F_K(λ₁) = Π_k f_k(λ₁)`.
    pub f_ground: f64,
    /// `δ_K / (1 − δ_K)`.
    pub eps_tilde: f64,
    pub final_state: StateVector,
    pub mode: StepMode,
    /// Per-step success probabilities (reuse mode); empty when retained.
    pub step_probabilities: Vec<f64>,
    /// Trotter repetitions per step (circuit mode).
    pub trotter_steps: Vec<usize>,
    pub crte_blocks: u64,
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &ModelInstance,
    state: StateVector,
    p_k: f64,
    params: &[PiteStepParams],
    cfg: &PiteConfig,
    step_probabilities: Vec<f64>,
    trotter_steps: Vec<usize>,
    crte_blocks: u64,
) -> Result<PiteRunResult> {
    let fid = state.fidelity(&model.spectrum.ground_state())?;
    let delta_k = (1.0 - fid).max(0.0);
    let l1 = model.spectrum.ground_energy();
    Ok(PiteRunResult {
        p_k,
        delta_k,
        f_ground: params.iter().map(|p| p.f(l1, cfg.shift)).product(),
        eps_tilde: delta_k / (1.0 - delta_k),
        final_state: state,
        mode: cfg.mode,
        step_probabilities,
        trotter_steps,
        crte_blocks,
    })
}

fn single_step_circuit(
    model: &ModelInstance,
    cfg: &PiteConfig,
    p: &PiteStepParams,
    r: usize,
    anc: usize,
    width: usize,
) -> Result<Circuit> {
    match cfg.mode {
        StepMode::Exact => exact_pite_circuit(&model.spectrum, std::slice::from_ref(p), cfg.shift)
            .map(|c| relabel_single_ancilla(c, width, anc)),
        StepMode::Circuit { order } => {
            build_step_circuit(&model.split, p, anc, width, order, r, cfg.shift)
        }
    }
}

/// The whole `K`-step block on `n + K` qubits, ancilla of step `k` at
/// qubit `n + k`.
pub fn pite_block_circuit(model: &ModelInstance, cfg: &PiteConfig) -> Result<Circuit> {
    let params = cfg.step_params(&model.spectrum)?;
    let n = model.n();
    let k = params.len();
    match cfg.mode {
        StepMode::Exact => exact_pite_circuit(&model.spectrum, &params, cfg.shift),
        StepMode::Circuit { .. } => {
            let mut c = Circuit::new(n + k);
            for (i, p) in params.iter().enumerate() {
                c.append(&single_step_circuit(
                    model,
                    cfg,
                    p,
                    cfg.trotter_steps(p),
                    n + i,
                    n + k,
                )?)?;
            }
            Ok(c)
        }
    }
}

/// Runs `K` PITE steps on `initial` and post-selects every ancilla on `|0⟩`.
pub fn run_pite(
    model: &ModelInstance,
    initial: &StateVector,
    cfg: &PiteConfig,
) -> Result<PiteRunResult> {
    let n = model.n();
    if initial.num_qubits() != n {
        return domain(format!(
            "initial state has {} qubits, chain has {n}",
            initial.num_qubits()
        ));
    }
    let params = cfg.step_params(&model.spectrum)?;
    let k = params.len();
    let trotter_steps: Vec<usize> = match cfg.mode {
        StepMode::Exact => Vec::new(),
        StepMode::Circuit { .. } => params.iter().map(|p| cfg.trotter_steps(p)).collect(),
    };
    let step = |p: &PiteStepParams, idx: usize, anc: usize, width: usize| {
        single_step_circuit(
            model,
            cfg,
            p,
            trotter_steps.get(idx).copied().unwrap_or(1),
            anc,
            width,
        )
    };
    match cfg.ancillas {
        AncillaMode::Retained => {
            let mut state = initial.with_ancillas(k);
            let circuit = pite_block_circuit(model, cfg)?;
            state.apply_circuit(&circuit)?;
            let ancillas: Vec<usize> = (n..n + k).collect();
            let (out, p_k) = state.post_select_zero(&ancillas)?;
            finish(
                model,
                out,
                p_k,
                &params,
                cfg,
                Vec::new(),
                trotter_steps,
                circuit.counter(CRTE_COUNTER),
            )
        }
        AncillaMode::Reuse => {
            let mut state = initial.clone();
            let mut probs = Vec::with_capacity(k);
            let mut crte = 0;
            for (i, p) in params.iter().enumerate() {
                let c = step(p, i, n, n + 1)?;
                crte += c.counter(CRTE_COUNTER);
                let mut ext = state.with_ancillas(1);
                ext.apply_circuit(&c)?;
                let (out, prob) = ext.post_select_zero(&[n])?;
                probs.push(prob);
                state = out;
            }
            let p_k = probs.iter().product();
            finish(model, state, p_k, &params, cfg, probs, trotter_steps, crte)
        }
    }
}

/// The single-step exact circuit is built with its ancilla at qubit `n`;
/// this widens it to `width` qubits and moves the ancilla to `anc`.
fn relabel_single_ancilla(c: Circuit, width: usize, anc: usize) -> Circuit {
    let n = c.num_qubits() - 1;
    let mut out = Circuit::new(width);
    for op in c.ops() {
        let mut op = op.clone();
        for t in &mut op.targets {
            if *t == n {
                *t = anc;
            }
        }
        out.push(op).expect("relabelled gate stays valid");
    }
    out.add_global_phase(c.global_phase());
    out
}

/// `Γ e^{−τH}|ψ⟩`, normalised, with its squared norm
/// `Σ_i |c_i|² Γ² e^{−2τλ_i}`.
pub fn exact_ite_oracle(
    initial: &StateVector,
    spectrum: &Spectrum,
    tau: f64,
    gamma: f64,
) -> Result<(StateVector, f64)> {
    if !(tau >= 0.0) {
        return domain(format!("imaginary time τ = {tau} must be nonnegative"));
    }
    let c = spectrum.coefficients(initial)?;
    // Scale by e^{-τλ₁} inside the sum to avoid overflow; restore in the norm.
    let l1 = spectrum.ground_energy();
    let scaled: Vec<C64> = c
        .iter()
        .zip(&spectrum.eigenvalues)
        .map(|(ci, l)| ci * (gamma * (-tau * (l - l1)).exp()))
        .collect();
    let mut state = spectrum.state_from_coefficients(&scaled)?;
    let norm2 = state.normalize()?;
    Ok((state, norm2 * (-2.0 * tau * l1).exp()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CosineVariant {
    /// `cos((H − E)t)` from two CRTE branches.
    Cos,
    /// `e^{−i(H − E)t} cos((H − E)t)` from a single CRTE.
    PhaseDressed,
}

/// Cosine step on `n + 1` qubits (ancilla `n`) with exact dense evolutions.
pub fn cosine_step_circuit(
    spectrum: &Spectrum,
    energy: f64,
    t: f64,
    variant: CosineVariant,
) -> Result<Circuit> {
    let n = spectrum.num_qubits();
    let mut c = Circuit::new(n + 1);
    c.push(GateOp::single(n, hadamard(), "h")?)?;
    match variant {
        CosineVariant::Cos => {
            let fwd = spectrum.operator(|l| cis((l - energy) * t));
            let bwd = spectrum.operator(|l| cis(-(l - energy) * t));
            c.push(
                GateOp::dense(system_targets(n), fwd, "rte")?.with_control(Control::on_zero(n)),
            )?;
            c.push(GateOp::dense(system_targets(n), bwd, "rte")?.with_control(Control::on_one(n)))?;
            c.bump(CRTE_COUNTER, 2);
        }
        CosineVariant::PhaseDressed => {
            let u = spectrum.operator(|l| cis(-2.0 * (l - energy) * t));
            c.push(GateOp::dense(system_targets(n), u, "rte")?.with_control(Control::on_one(n)))?;
            c.bump(CRTE_COUNTER, 1);
        }
    }
    c.push(GateOp::single(n, hadamard(), "h")?)?;
    Ok(c)
}

/// Applies cosine steps with the given times, measuring the ancilla after
/// each; returns the final state and the total success probability.
pub fn run_cosine(
    spectrum: &Spectrum,
    initial: &StateVector,
    energy: f64,
    times: &[f64],
    variant: CosineVariant,
) -> Result<(StateVector, f64)> {
    let n = spectrum.num_qubits();
    let mut state = initial.clone();
    let mut p = 1.0;
    for &t in times {
        let mut ext = state.with_ancillas(1);
        ext.apply_circuit(&cosine_step_circuit(spectrum, energy, t, variant)?)?;
        let (out, prob) = ext.post_select_zero(&[n])?;
        p *= prob;
        state = out;
    }
    Ok((state, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::spin_model::{HeisenbergChain, InitialStateSpec};

    fn model(n: usize, seed: u64) -> ModelInstance {
        ModelInstance::new(HeisenbergChain::build(n, seed, true).unwrap()).unwrap()
    }

    fn top_left(m: &CMat, dim: usize) -> CMat {
        m.view((0, 0), (dim, dim)).into_owned()
    }

    #[test]
    fn w_gate_is_unitary() {
        let w = crate::linalg::to_dyn2(&w_gate());
        assert!(crate::linalg::unitarity_error(&w) < 1e-15);
    }

    #[test]
    fn block_encoding_of_ite() {
        let m = model(4, 5);
        // Γ chosen so that Γ e^{-τλ₁} = 0.8
        let gamma = 0.8 * (0.1 * m.spectrum.ground_energy()).exp();
        let enc =
            exact_block_encoding(&BlockFunction::Ite { gamma, tau: 0.1 }, &m.spectrum).unwrap();
        assert!(crate::linalg::unitarity_error(&enc.unitary) < 1e-10);
        let oracle = m.spectrum.operator(|l| c64(gamma * (-0.1 * l).exp(), 0.0));
        assert!(max_abs_diff(&top_left(&enc.unitary, 16), &oracle) < 1e-10);
        let circ = block_encoding_circuit(&enc, &m.spectrum)
            .unwrap()
            .dense_matrix()
            .unwrap();
        assert!(max_abs_diff(&circ, &enc.unitary) < 1e-10);
        // cos Θ and sin κΘ identities, per eigenvalue
        for ((f, th), kt) in enc.f_values.iter().zip(&enc.theta).zip(&enc.kappa_theta) {
            let g = (1.0 - f * f).sqrt();
            assert!((th.cos() - (f + g) * FRAC_1_SQRT_2).abs() < 1e-12);
            assert!((kt.sin() - (f - g) * FRAC_1_SQRT_2).abs() < 1e-12);
            assert!((kt.abs() - th).abs() < 1e-12);
        }
    }

    #[test]
    fn block_encoding_edge_cases() {
        let m = model(3, 1);
        let enc = exact_block_encoding(
            &BlockFunction::Ite {
                gamma: 1.0,
                tau: 0.0,
            },
            &m.spectrum,
        )
        .unwrap();
        assert!(max_abs_diff(&top_left(&enc.unitary, 8), &CMat::identity(8, 8)) < 1e-12);
        let l1 = m.spectrum.ground_energy();
        let enc = exact_block_encoding(&BlockFunction::Cosine { energy: l1, t: 0.7 }, &m.spectrum)
            .unwrap();
        assert!((enc.f_values[0] - 1.0).abs() < 1e-15);
        let big = BlockFunction::Ite {
            gamma: 0.9,
            tau: -1.0,
        };
        assert!(matches!(
            exact_block_encoding(&big, &m.spectrum),
            Err(Error::Range(_))
        ));
        let half = BlockFunction::Values(vec![FRAC_1_SQRT_2; 8]);
        assert!(matches!(
            exact_block_encoding(&half, &m.spectrum),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn step_params_examples() {
        let p = step_params(0.8, 0.3, -2.0, None).unwrap();
        assert!((p.phi - 0.8f64.asin()).abs() < 1e-15);
        assert!((p.s - 4.0 / 3.0).abs() < 1e-12);
        assert!((p.a1 - p.s).abs() < 1e-12);
        assert!((p.a0 - (p.phi - FRAC_PI_4)).abs() < 1e-12);
        assert!((p.f(-2.0, true).abs() - 1.0).abs() < 1e-12);
        let p0 = step_params(0.8, 0.3, -2.0, Some(0)).unwrap();
        let p1 = step_params(0.8, 0.3, -2.0, Some(1)).unwrap();
        assert!((p1.energy_shift - p0.energy_shift - PI / (0.3 * p0.s)).abs() < 1e-12);
        assert!(matches!(
            step_params(FRAC_1_SQRT_2, 0.3, 0.0, None),
            Err(Error::Singularity(_))
        ));
        assert!(step_params(0.8, 0.0, 0.0, None).is_err());
        // the automatic branch minimises |E|
        for b in -3..=3 {
            let q = step_params(0.8, 0.3, -2.0, Some(b)).unwrap();
            assert!(q.energy_shift.abs() + 1e-12 >= p.energy_shift.abs());
        }
    }

    #[test]
    fn shift_pins_ground_state_for_many_inputs() {
        for (g, dt, l1) in [(0.3, 0.05, 4.0), (0.8, 1.7, -11.2), (0.95, 0.2, 0.0)] {
            for b in [None, Some(-2), Some(3)] {
                let p = step_params(g, dt, l1, b).unwrap();
                assert!((p.f(l1, true).abs() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn schedule_examples() {
        let s = build_tau_schedule(1, 0.1, 1.0, 1.0).unwrap();
        assert_eq!(s.values, vec![0.1]);
        let s = build_tau_schedule(6, 0.1, 1.0, 1.0).unwrap();
        for (k, v) in s.values.iter().enumerate() {
            let expect = 0.1 + 0.9 * (1.0 - (-(k as f64) / 6.0).exp());
            assert!((v - expect).abs() < 1e-15);
        }
        assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
        let frozen = build_tau_schedule(5, 0.1, 1.0, 1e9).unwrap();
        assert!(frozen.values.iter().all(|v| (v - 0.1).abs() < 1e-8));
        assert!(build_tau_schedule(3, 1.0, 0.5, 1.0).is_err());
        assert!(build_tau_schedule(0, 0.1, 0.5, 1.0).is_err());
    }

    #[test]
    fn exact_rte_step_block_matches_oracle() {
        let m = model(4, 3);
        let p = step_params(0.8, 0.4, m.spectrum.ground_energy(), None).unwrap();
        for shift in [true, false] {
            let c = exact_rte_step_circuit(&m.spectrum, &p, 4, 5, shift).unwrap();
            let blk = top_left(&c.dense_matrix().unwrap(), 16);
            let oracle = m.spectrum.operator(|l| c64(p.f(l, shift), 0.0));
            assert!(max_abs_diff(&blk, &oracle) < 1e-9);
        }
    }

    #[test]
    fn trotter_step_block_close_to_oracle() {
        let m = model(4, 3);
        let p = step_params(0.8, 0.1, m.spectrum.ground_energy(), None).unwrap();
        let oracle = m.spectrum.operator(|l| c64(p.f(l, true), 0.0));
        let err = |r: usize| {
            let c = build_step_circuit(&m.split, &p, 4, 5, 4, r, true).unwrap();
            max_abs_diff(&top_left(&c.dense_matrix().unwrap(), 16), &oracle)
        };
        let (e1, e2) = (err(1), err(2));
        assert!(e1 < 1e-3);
        // fourth-order formula: halving the sub-step cuts the error ~16x
        assert!((10.0..24.0).contains(&(e1 / e2)), "ratio {}", e1 / e2);
    }

    #[test]
    fn scalar_hamiltonian_block() {
        let p = step_params(0.8, 0.2, 0.0, Some(0)).unwrap();
        let zero = Spectrum::from_real_symmetric(&nalgebra::DMatrix::zeros(4, 4));
        let c = exact_rte_step_circuit(&zero, &p, 2, 3, true).unwrap();
        let blk = top_left(&c.dense_matrix().unwrap(), 4);
        let expect = (p.phi + p.energy_shift * p.rte_time()).sin();
        assert!(max_abs_diff(&blk, &(CMat::identity(4, 4) * c64(expect, 0.0))) < 1e-12);
    }

    #[test]
    fn ground_state_is_fixed_point() {
        let m = model(4, 9);
        let cfg = PiteConfig::standard(&m.spectrum, 5).unwrap();
        let r = run_pite(&m, &m.spectrum.ground_state(), &cfg).unwrap();
        assert!(r.delta_k.abs() < 1e-10);
        assert!((r.p_k - 1.0).abs() < 1e-10);
    }

    #[test]
    fn retained_and_reuse_agree() {
        let m = model(4, 2);
        let psi = crate::spin_model::prepare_initial_state(&InitialStateSpec::Uniform, &m.spectrum)
            .unwrap();
        let mut cfg = PiteConfig::standard(&m.spectrum, 4).unwrap();
        let a = run_pite(&m, &psi, &cfg).unwrap();
        cfg.ancillas = AncillaMode::Reuse;
        let b = run_pite(&m, &psi, &cfg).unwrap();
        assert!((a.p_k - b.p_k).abs() < 1e-12);
        assert!((a.delta_k - b.delta_k).abs() < 1e-12);
        cfg.mode = StepMode::Circuit { order: 2 };
        let c = run_pite(&m, &psi, &cfg).unwrap();
        cfg.ancillas = AncillaMode::Retained;
        let d = run_pite(&m, &psi, &cfg).unwrap();
        assert!((c.p_k - d.p_k).abs() < 1e-10);
        assert!((c.delta_k - d.delta_k).abs() < 1e-10);
        assert_eq!(c.crte_blocks, d.crte_blocks);
    }

    #[test]
    fn linear_schedule_counts() {
        let m = model(4, 2);
        for k in 1..6 {
            let c = linear_query_circuit(&m.split, k, 2, 0.25).unwrap();
            assert_eq!(c.counter(CRTE_COUNTER), (k * (k - 1)) as u64);
        }
    }

    #[test]
    fn ite_oracle_examples() {
        let m = model(4, 4);
        let psi = crate::spin_model::prepare_initial_state(&InitialStateSpec::Uniform, &m.spectrum)
            .unwrap();
        let (s, n2) = exact_ite_oracle(&psi, &m.spectrum, 0.0, 1.0).unwrap();
        assert!((n2 - 1.0).abs() < 1e-12);
        assert!((s.fidelity(&psi).unwrap() - 1.0).abs() < 1e-12);
        let (s, _) = exact_ite_oracle(&psi, &m.spectrum, 50.0, 1.0).unwrap();
        assert!(s.fidelity(&m.spectrum.ground_state()).unwrap() > 1.0 - 1e-8);
        let tau = 0.3;
        let (_, n2) = exact_ite_oracle(&psi, &m.spectrum, tau, 0.7).unwrap();
        let expect: f64 = m
            .spectrum
            .eigenvalues
            .iter()
            .map(|l| 0.49 * (-2.0 * tau * l).exp() / 16.0)
            .sum();
        assert!((n2 - expect).abs() < 1e-10 * expect);
        assert!(exact_ite_oracle(&psi, &m.spectrum, -1.0, 1.0).is_err());
    }

    #[test]
    fn cosine_steps() {
        let m = model(4, 6);
        let psi = crate::spin_model::prepare_initial_state(&InitialStateSpec::Uniform, &m.spectrum)
            .unwrap();
        let (_, p) = run_cosine(&m.spectrum, &psi, 0.3, &[0.0], CosineVariant::Cos).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let l1 = m.spectrum.ground_energy();
        for i in [0, 5, 15] {
            let e = m.spectrum.eigenvector(i);
            let (_, pa) = run_cosine(&m.spectrum, &e, l1, &[0.4], CosineVariant::Cos).unwrap();
            let (_, pb) =
                run_cosine(&m.spectrum, &e, l1, &[0.4], CosineVariant::PhaseDressed).unwrap();
            let expect = ((m.spectrum.eigenvalues[i] - l1) * 0.4).cos().powi(2);
            assert!((pa - pb).abs() < 1e-12 && (pa - expect).abs() < 1e-12);
        }
        let gs = m.spectrum.ground_state();
        let mut last = 1.0;
        for k in 1..6 {
            let times: Vec<f64> = (0..k).map(|j| 0.3 + 0.1 * j as f64).collect();
            let (s, _) = run_cosine(&m.spectrum, &psi, l1, &times, CosineVariant::Cos).unwrap();
            let d = 1.0 - s.fidelity(&gs).unwrap();
            assert!(d < last);
            last = d;
        }
    }
}
