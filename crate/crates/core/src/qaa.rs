//! Amplitude amplification of the multi-step PITE good branch.
//!
//! `U_REF = (PITE block)(U_ref ⊗ I)` maps `|0⟩^{n+K}` to
//! `|Ψ̃⟩ = a|good⟩ + √(1 − a²)|bad⟩`, where the good subspace is "all `K`
//! ancillas read `|0⟩`". The operator `Q = −U_REF S₀ U_REF† S_χ` rotates
//! by `2θ_a` (`sin θ_a = a`) inside the plane spanned by the two branches,
//! so the normalised good-branch system state never changes.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::linalg::{CMat, C64, ONE};
use crate::pite::{pite_block_circuit, spectral_pite, PiteConfig};
use crate::spin_model::ModelInstance;
use crate::statevector::{Circuit, GateOp, StateVector};

/// Slack on the floor in `m*` so that exact boundary cases such as
/// `P = 1/2` land on the intended integer.
const FLOOR_SLACK: f64 = 1e-9;

/// `m* = floor((2n+1)π / (4 arcsin √P))`.
pub fn optimal_repetitions(p: f64, branch: u32) -> Result<usize> {
    // Rounding can push a simulated probability of one slightly above it.
    if !(p > 0.0 && p <= 1.0 + 1e-9) {
        return domain(format!("success probability {p} outside (0, 1]"));
    }
    let theta = p.min(1.0).sqrt().asin();
    Ok(((2 * branch + 1) as f64 * PI / (4.0 * theta) + FLOOR_SLACK).floor() as usize)
}

/// `sin(π/(4(m+1))) < √P ≤ sin(π/(4m))`, the window that `m*` lands in.
pub fn bracket_holds(p: f64, m: usize) -> bool {
    let a = p.sqrt();
    let upper = if m == 0 {
        1.0
    } else {
        (PI / (4.0 * m as f64)).sin()
    };
    (PI / (4.0 * (m + 1) as f64)).sin() < a && a <= upper + 1e-15
}

/// Good-branch probability after `m` rotations, `sin²((2m+1)θ_a)`.
pub fn rotated_probability(p: f64, m: usize) -> f64 {
    ((2 * m + 1) as f64 * p.sqrt().asin()).sin().powi(2)
}

/// Probability-maximising repetition count in `[m − 1, m + 1]`.
pub fn best_nearby_repetitions(p: f64, m: usize) -> usize {
    let lo = m.saturating_sub(1);
    (lo..=m + 1)
        .max_by(|a, b| {
            rotated_probability(p, *a)
                .total_cmp(&rotated_probability(p, *b))
                .then(b.cmp(a))
        })
        .expect("non-empty range")
}

/// Householder unitary whose first column is `psi`.
pub fn householder_preparation(psi: &StateVector) -> Result<CMat> {
    let dim = psi.dim();
    let amps = psi.amplitudes();
    if (psi.norm_sqr() - 1.0).abs() > 1e-10 {
        return domain("state to prepare is not normalised");
    }
    let alpha = if amps[0].norm() > 0.0 {
        amps[0] / amps[0].norm()
    } else {
        ONE
    };
    // u = α e₀ − ψ, R = I − 2uu†/‖u‖², then R(α e₀) = ψ.
    let mut u = CMat::from_fn(dim, 1, |i, _| -amps[i]);
    u[(0, 0)] += alpha;
    let norm2: f64 = u.iter().map(|x| x.norm_sqr()).sum();
    let mut r = CMat::identity(dim, dim);
    if norm2 > 1e-28 {
        r -= &u * u.adjoint() * C64::new(2.0 / norm2, 0.0);
    }
    Ok(r * alpha)
}

/// `U_REF` on `n + K` qubits: initializer on the system, then the PITE block.
pub fn reference_circuit(
    model: &ModelInstance,
    initial: &StateVector,
    cfg: &PiteConfig,
) -> Result<Circuit> {
    let n = model.n();
    let k = cfg.steps();
    let mut c = Circuit::new(n + k);
    c.push(GateOp::dense(
        (0..n).rev().collect(),
        householder_preparation(initial)?,
        "u-ref",
    )?)?;
    c.append(&pite_block_circuit(model, cfg)?)?;
    Ok(c)
}

/// `Q(φ_odd, φ_even) = −U_REF S₀(φ_odd) U_REF† S_χ(φ_even)` with
/// `S(φ) = e^{iφ|0⟩⟨0|}`; `S_χ` acts on the ancillas `n..n+K` only.
pub fn build_q(
    u_ref: &Circuit,
    n: usize,
    k: usize,
    phi_odd: f64,
    phi_even: f64,
) -> Result<Circuit> {
    if u_ref.num_qubits() != n + k {
        return domain(format!(
            "reference circuit has {} qubits, expected {}",
            u_ref.num_qubits(),
            n + k
        ));
    }
    let mut q = Circuit::new(n + k);
    q.push(GateOp::zero_phase((n..n + k).collect(), phi_even, "s-chi"))?;
    q.append(&u_ref.inverse())?;
    q.push(GateOp::zero_phase((0..n + k).collect(), phi_odd, "s-zero"))?;
    q.append(u_ref)?;
    q.add_global_phase(PI);
    Ok(q)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QaaConfig {
    /// Repetitions; `None` uses `m*`.
    pub m: Option<usize>,
    /// `(φ_odd, φ_even)` for each repetition; `None` uses `±π`.
    pub phases: Option<Vec<(f64, f64)>>,
    /// Branch `n` in the `(2n+1)` numerator.
    pub branch: u32,
    /// User-supplied `P_K` for `m*`; otherwise the spectral value is used.
    pub p_estimate: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct QaaRunResult {
    pub p_before: f64,
    pub theta_a: f64,
    pub m_star: usize,
    /// Probability-maximising `m` in `[m* − 1, m* + 1]`.
    pub m_best: usize,
    pub m_used: usize,
    pub p_after: f64,
    /// Good-branch probability after `0, 1, …, m_used` rotations.
    pub good_probabilities: Vec<f64>,
    pub delta_before: f64,
    pub delta_post: f64,
    /// Fidelity between the post-selected states with and without QAA.
    pub state_fidelity: f64,
    pub final_state: StateVector,
}

/// PITE once, then `m` applications of `Q`, then post-selection.
pub fn run_multistep_pite_qaa(
    model: &ModelInstance,
    initial: &StateVector,
    cfg: &PiteConfig,
    qaa: &QaaConfig,
) -> Result<QaaRunResult> {
    let n = model.n();
    let k = cfg.steps();
    let u_ref = reference_circuit(model, initial, cfg)?;
    let ancillas: Vec<usize> = (n..n + k).collect();
    let mut state = StateVector::zero_state(n + k);
    state.apply_circuit(&u_ref)?;
    let (before, p_before) = state.post_select_zero(&ancillas)?;

    let p_for_m = match qaa.p_estimate {
        Some(p) => p,
        None => {
            let params = cfg.step_params(&model.spectrum)?;
            let coeffs = model.spectrum.coefficients(initial)?;
            spectral_pite(&model.spectrum, &coeffs, &params, cfg.shift).p_k
        }
    };
    let m_star = optimal_repetitions(p_for_m, qaa.branch)?;
    let m_used = qaa.m.unwrap_or(m_star);
    let phases = match &qaa.phases {
        Some(ph) => {
            if ph.len() < m_used {
                return domain(format!("{} phase pairs for {m_used} repetitions", ph.len()));
            }
            ph.clone()
        }
        None => vec![(PI, PI); m_used],
    };

    let mut good = vec![p_before];
    let mut cache: Option<((f64, f64), Circuit)> = None;
    for &(po, pe) in phases.iter().take(m_used) {
        let reuse = matches!(&cache, Some((key, _)) if *key == (po, pe));
        if !reuse {
            cache = Some(((po, pe), build_q(&u_ref, n, k, po, pe)?));
        }
        let q = &cache.as_ref().expect("just filled").1;
        state.apply_circuit(q)?;
        good.push(state.zero_branch_probability(&ancillas)?);
    }
    let (after, p_after) = state.post_select_zero(&ancillas)?;
    let gs = model.spectrum.ground_state();
    let delta_before = (1.0 - before.fidelity(&gs)?).max(0.0);
    let delta_post = (1.0 - after.fidelity(&gs)?).max(0.0);
    Ok(QaaRunResult {
        p_before,
        theta_a: p_before.sqrt().asin(),
        m_star,
        m_best: best_nearby_repetitions(p_for_m, m_star),
        m_used,
        p_after,
        good_probabilities: good,
        delta_before,
        delta_post,
        state_fidelity: after.fidelity(&before)?,
        final_state: after,
    })
}

/// Dense `Q` restricted to a small register, for unitarity checks.
pub fn dense_q(u_ref: &Circuit, n: usize, k: usize, phi_odd: f64, phi_even: f64) -> Result<CMat> {
    build_q(u_ref, n, k, phi_odd, phi_even)?.dense_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_error;
    use crate::spin_model::{prepare_initial_state, HeisenbergChain, InitialStateSpec};

    #[test]
    fn repetition_examples() {
        assert_eq!(optimal_repetitions(1.0, 0).unwrap(), 0);
        assert_eq!(optimal_repetitions(0.5, 0).unwrap(), 1);
        assert_eq!(optimal_repetitions(0.25, 0).unwrap(), 1);
        assert_eq!(optimal_repetitions(0.25, 1).unwrap(), 4);
        assert!(optimal_repetitions(0.0, 0).is_err());
        assert!(optimal_repetitions(1.5, 0).is_err());
        for p in [3e-3, 1e-3, 1e-4, 1e-6] {
            let m = optimal_repetitions(p, 0).unwrap() as f64;
            let approx = PI / (4.0 * p.sqrt());
            assert!((m - approx).abs() / approx < 0.05);
        }
        // At P = 0.01 the floor alone costs 0.85 of 7.85.
        assert_eq!(optimal_repetitions(1e-2, 0).unwrap(), 7);
    }

    #[test]
    fn bracketing_on_a_grid() {
        for i in 1..=500 {
            let p = 0.5 * i as f64 / 500.0;
            let m = optimal_repetitions(p, 0).unwrap();
            assert!(m >= 1 && bracket_holds(p, m), "P = {p}, m* = {m}");
        }
    }

    #[test]
    fn rotation_closed_form() {
        // iterate the 2x2 rotation by 2θ on (bad, good) directly
        let a = 0.2f64.sqrt();
        let (mut bad, mut good) = ((1.0 - a * a).sqrt(), a);
        let (c, s) = (1.0 - 2.0 * a * a, 2.0 * a * (1.0 - a * a).sqrt());
        for m in 1..6 {
            (bad, good) = (c * bad - s * good, s * bad + c * good);
            assert!((rotated_probability(0.2, m) - good * good).abs() < 1e-12);
        }
        assert!((rotated_probability(0.2, 1) - 0.968).abs() < 1e-3);
        assert!((rotated_probability(0.2, 0) - 0.2).abs() < 1e-15);
        assert_eq!(best_nearby_repetitions(0.25, 1), 1);
    }

    #[test]
    fn householder_prepares_state() {
        let amps: Vec<C64> = (0..8)
            .map(|i| C64::new(i as f64 - 2.5, 0.3 * i as f64))
            .collect();
        let mut psi = StateVector::from_amplitudes(amps).unwrap();
        psi.normalize().unwrap();
        let u = householder_preparation(&psi).unwrap();
        assert!(unitarity_error(&u) < 1e-12);
        for i in 0..8 {
            assert!((u[(i, 0)] - psi.amplitudes()[i]).norm() < 1e-12);
        }
        let e0 = StateVector::zero_state(3);
        let u = householder_preparation(&e0).unwrap();
        assert!((u - CMat::identity(8, 8)).iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn q_is_unitary_and_rotates() {
        let m = ModelInstance::new(HeisenbergChain::build(3, 11, true).unwrap()).unwrap();
        let psi = prepare_initial_state(&InitialStateSpec::Uniform, &m.spectrum).unwrap();
        let cfg = PiteConfig::standard(&m.spectrum, 2).unwrap();
        let u_ref = reference_circuit(&m, &psi, &cfg).unwrap();
        let q = dense_q(&u_ref, 3, 2, PI, PI).unwrap();
        assert!(unitarity_error(&q) < 1e-9);
        let r = run_multistep_pite_qaa(
            &m,
            &psi,
            &cfg,
            &QaaConfig {
                m: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        for (j, p) in r.good_probabilities.iter().enumerate() {
            assert!((p - rotated_probability(r.p_before, j)).abs() < 1e-9);
        }
        assert!(r.state_fidelity > 1.0 - 1e-9);
        assert!(build_q(&u_ref, 3, 1, PI, PI).is_err());
    }

    #[test]
    fn trivial_instance() {
        let m = ModelInstance::new(HeisenbergChain::build(3, 2, true).unwrap()).unwrap();
        let gs = m.spectrum.ground_state();
        let cfg = PiteConfig::standard(&m.spectrum, 2).unwrap();
        let r = run_multistep_pite_qaa(&m, &gs, &cfg, &QaaConfig::default()).unwrap();
        assert_eq!(r.m_used, 0);
        assert!((r.p_before - 1.0).abs() < 1e-10 && (r.p_after - 1.0).abs() < 1e-10);
    }
}
