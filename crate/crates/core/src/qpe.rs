//! QFT-based quantum phase estimation with post-selection on the
//! ground-energy outcome.
//!
//! `K` ancillas (qubits `n..n+K`, ancilla `j` holding bit `j` of the
//! outcome) control `U^{2^j}` with `U = e^{2πi(H − offset)t₀/T}`. After the
//! inverse QFT the outcome `k` has amplitude `α_{ik}` on eigenstate `i`.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::linalg::{c64, cis, hadamard, phase_gate, CMat, C64};
use crate::spin_model::{ModelInstance, Spectrum};
use crate::statevector::{Circuit, Control, GateOp, StateVector};
use crate::trotter::{push_controlled_evolution, CRTE_COUNTER};

/// Default sub-division of every controlled-`U` application.
pub const DEFAULT_QPE_R: usize = 4;

/// `α = (1/T) Σ_τ e^{2πiτ(x − k)/T}` for register value `x = λt₀`.
pub fn alpha(x: f64, k: usize, t_reg: usize) -> C64 {
    let t = t_reg as f64;
    let d = x - k as f64;
    let ratio = d / t;
    if (ratio - ratio.round()).abs() < 1e-9 {
        // Near the removable singularity the geometric form loses digits.
        let sum: C64 = (0..t_reg).map(|tau| cis(TAU * tau as f64 * ratio)).sum();
        return sum / t;
    }
    (C64::new(1.0, 0.0) - cis(TAU * d)) / (C64::new(1.0, 0.0) - cis(TAU * ratio)) / t
}

/// Distance between `x/T` and `k/T` on the unit circle, in `[0, 1/2]`.
pub fn wrapped_distance(x: f64, k: usize, t_reg: usize) -> f64 {
    let f = (x - k as f64) / t_reg as f64;
    (f - f.round()).abs()
}

/// `(π / (4|c₁| T Δ))²`.
pub fn infidelity_bound(c1_abs: f64, t_reg: usize, delta_gap: f64) -> f64 {
    (PI / (4.0 * c1_abs * t_reg as f64 * delta_gap)).powi(2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QpeConfig {
    pub k: usize,
    pub t0: f64,
    pub n_c: i32,
    pub r: usize,
    /// Subtracted from `H` so the ground phase sits at zero.
    pub offset: f64,
    /// Product-formula order for the controlled powers; `None` is exact.
    pub order: Option<usize>,
}

impl QpeConfig {
    /// `offset = λ₁`, `N_C = floor(log₂(λ_N − λ₁)) + 1`, `t₀ = 2^{K − N_C}`.
    pub fn auto(spectrum: &Spectrum, k: usize, r: usize, order: Option<usize>) -> Result<Self> {
        if k == 0 {
            return domain("QPE needs at least one ancilla");
        }
        if r == 0 {
            return domain("QPE sub-division r must be at least 1");
        }
        let spread = spectrum.spread();
        if !(spread > 0.0) {
            return domain("spectrum has zero width");
        }
        let n_c = spread.log2().floor() as i32 + 1;
        Ok(Self {
            k,
            t0: 2f64.powi(k as i32 - n_c),
            n_c,
            r,
            offset: spectrum.ground_energy(),
            order,
        })
    }

    pub fn t_reg(&self) -> usize {
        1usize << self.k
    }

    /// Register value `x_i = (λ_i − offset) t₀`.
    pub fn register_value(&self, lambda: f64) -> f64 {
        (lambda - self.offset) * self.t0
    }

    /// Nearest integer to the ground register value, ties down, mod `T`.
    pub fn ground_outcome(&self, lambda1: f64) -> usize {
        let x = self.register_value(lambda1);
        let k = (x - 0.5).ceil();
        k.rem_euclid(self.t_reg() as f64) as usize
    }

    /// Evolution time of one `U`.
    pub fn unit_time(&self) -> f64 {
        TAU * self.t0 / self.t_reg() as f64
    }
}

/// Gate-level QFT on `qubits` (`qubits[0]` least significant):
/// `|x⟩ ↦ T^{-1/2} Σ_k e^{2πikx/T} |k⟩`.
pub fn qft_circuit(num_qubits: usize, qubits: &[usize]) -> Result<Circuit> {
    let k = qubits.len();
    let mut c = Circuit::new(num_qubits);
    for j in (0..k).rev() {
        c.push(GateOp::single(qubits[j], hadamard(), "h")?)?;
        for m in (0..j).rev() {
            let angle = PI / (1u64 << (j - m)) as f64;
            c.push(
                GateOp::single(qubits[j], phase_gate(angle), "cp")?
                    .with_control(Control::on_one(qubits[m])),
            )?;
        }
    }
    for i in 0..k / 2 {
        let (a, b) = (qubits[i], qubits[k - 1 - i]);
        c.push(GateOp::cnot(a, b))?;
        c.push(GateOp::cnot(b, a))?;
        c.push(GateOp::cnot(a, b))?;
    }
    Ok(c)
}

/// Full QPE circuit on `n + K` qubits.
pub fn qpe_circuit(model: &ModelInstance, cfg: &QpeConfig) -> Result<Circuit> {
    let n = model.n();
    let k = cfg.k;
    let anc: Vec<usize> = (n..n + k).collect();
    let mut c = Circuit::new(n + k);
    for &a in &anc {
        c.push(GateOp::single(a, hadamard(), "h")?)?;
    }
    let t = cfg.unit_time();
    let map: Vec<usize> = (0..n).collect();
    let system: Vec<usize> = (0..n).rev().collect();
    for (j, &a) in anc.iter().enumerate() {
        let power = (1u64 << j) as f64;
        let ctrl = Control::on_one(a);
        match cfg.order {
            None => {
                let off = cfg.offset;
                let u = model.spectrum.operator(|l| cis((l - off) * t * power));
                c.push(GateOp::dense(system.clone(), u, "c-u")?.with_control(ctrl))?;
                c.bump(CRTE_COUNTER, (1u64 << j) * cfg.r as u64);
            }
            Some(order) => {
                let reps = (1usize << j) * cfg.r;
                push_controlled_evolution(
                    &mut c,
                    &model.split,
                    order,
                    t / cfg.r as f64,
                    reps,
                    &map,
                    &[ctrl],
                    true,
                )?;
                // e^{-i offset t 2^j} kicked back onto the control
                c.push(GateOp::single(
                    a,
                    phase_gate(-cfg.offset * t * power),
                    "offset",
                )?)?;
            }
        }
    }
    c.append(&qft_circuit(n + k, &anc)?.inverse())?;
    Ok(c)
}

#[derive(Clone, Debug)]
pub struct QpeOutcome {
    pub k_selected: usize,
    pub p_k: f64,
    pub delta: f64,
    /// Ancilla distribution over all `T` outcomes.
    pub distribution: Vec<f64>,
    /// Smallest wrapped distance from an excited phase to `k/T`.
    pub delta_gap: f64,
    pub crte_blocks: u64,
    pub final_state: StateVector,
}

/// Smallest wrapped distance from an excited phase to `k/T`.
pub fn excited_phase_gap(spectrum: &Spectrum, cfg: &QpeConfig, k: usize) -> f64 {
    spectrum.eigenvalues[1..]
        .iter()
        .map(|l| wrapped_distance(cfg.register_value(*l), k, cfg.t_reg()))
        .fold(f64::INFINITY, f64::min)
}

/// Simulates the circuit and post-selects the ground outcome.
pub fn qpe_run(
    model: &ModelInstance,
    initial: &StateVector,
    cfg: &QpeConfig,
) -> Result<QpeOutcome> {
    let n = model.n();
    if initial.num_qubits() != n {
        return domain(format!(
            "initial state has {} qubits, chain has {n}",
            initial.num_qubits()
        ));
    }
    let circuit = qpe_circuit(model, cfg)?;
    let mut state = initial.with_ancillas(cfg.k);
    state.apply_circuit(&circuit)?;
    let anc: Vec<usize> = (n..n + cfg.k).collect();
    let distribution = state.marginal_distribution(&anc);
    let k_sel = cfg.ground_outcome(model.spectrum.ground_energy());
    if distribution[k_sel] <= 0.0 {
        return Err(Error::ImpossibleOutcome(format!(
            "QPE outcome {k_sel} has zero probability"
        )));
    }
    let (post, p_k) = state.post_select_value(&anc, k_sel)?;
    let delta = (1.0 - post.fidelity(&model.spectrum.ground_state())?).max(0.0);
    Ok(QpeOutcome {
        k_selected: k_sel,
        p_k,
        delta,
        distribution,
        delta_gap: excited_phase_gap(&model.spectrum, cfg, k_sel),
        crte_blocks: circuit.counter(CRTE_COUNTER),
        final_state: post,
    })
}

/// Closed-form counterpart of [`qpe_run`] in exact mode.
#[derive(Clone, Debug, PartialEq)]
pub struct QpeAnalytic {
    pub k_selected: usize,
    pub distribution: Vec<f64>,
    pub p_k: f64,
    pub delta: f64,
    pub delta_gap: f64,
    pub alpha_ground: C64,
}

pub fn qpe_analytic(spectrum: &Spectrum, coeffs: &[C64], cfg: &QpeConfig) -> QpeAnalytic {
    let t_reg = cfg.t_reg();
    let xs: Vec<f64> = spectrum
        .eigenvalues
        .iter()
        .map(|l| cfg.register_value(*l))
        .collect();
    let distribution: Vec<f64> = (0..t_reg)
        .map(|k| {
            xs.iter()
                .zip(coeffs)
                .map(|(x, c)| c.norm_sqr() * alpha(*x, k, t_reg).norm_sqr())
                .sum()
        })
        .collect();
    let k_sel = cfg.ground_outcome(spectrum.ground_energy());
    let a1 = alpha(xs[0], k_sel, t_reg);
    let p_k = distribution[k_sel];
    QpeAnalytic {
        k_selected: k_sel,
        p_k,
        delta: 1.0 - coeffs[0].norm_sqr() * a1.norm_sqr() / p_k,
        delta_gap: excited_phase_gap(spectrum, cfg, k_sel),
        distribution,
        alpha_ground: a1,
    }
}

/// Dense DFT matrix `F[k][x] = e^{2πikx/T}/√T`, used as a test oracle.
pub fn dft_matrix(t_reg: usize) -> CMat {
    let s = 1.0 / (t_reg as f64).sqrt();
    CMat::from_fn(t_reg, t_reg, |k, x| {
        cis(TAU * (k * x) as f64 / t_reg as f64) * c64(s, 0.0)
    })
}
