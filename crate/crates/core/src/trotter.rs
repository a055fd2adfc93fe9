//! Bond propagators and Suzuki–Trotter product formulas.
//!
//! All sequences target `e^{+itH}`; forward real-time evolution `e^{-iHt}`
//! is obtained by passing a negative time.

use crate::error::{domain, Error, Result};
use crate::linalg::{expm_i_hermitian, spectral_norm, to_dyn4, to_mat4, CMat, Mat4};
use crate::spin_model::{TermSplit, TwoQubitTerm};
use crate::statevector::{Circuit, Control, GateOp};

/// Label attached to every bond propagator emitted by this module.
pub const BOND_LABEL: &str = "bond";
/// Dense commutator norms are only computed up to this many spins.
pub const COMMUTATOR_SPIN_LIMIT: usize = 10;

/// `exp(i t G)` for the bond generator `G`.
pub fn term_unitary(term: &TwoQubitTerm, t: f64) -> Mat4 {
    to_mat4(&expm_i_hermitian(&to_dyn4(&term.generator()), t))
}

/// One exponential `e^{i coeff·t H_group}` of a product formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage {
    pub group: usize,
    pub coeff: f64,
}

/// `u_k = 1 / (4 - 4^{1/(2k-1)})`.
pub fn suzuki_u(k: usize) -> f64 {
    1.0 / (4.0 - 4f64.powf(1.0 / (2.0 * k as f64 - 1.0)))
}

/// The five block coefficients `[u, u, 1-4u, u, u]` of recursion level `k`.
pub fn level_coefficients(k: usize) -> [f64; 5] {
    let u = suzuki_u(k);
    [u, u, 1.0 - 4.0 * u, u, u]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrotterPlan {
    pub order: usize,
    pub t: f64,
    pub r: usize,
    pub epsilon: Option<f64>,
}

impl TrotterPlan {
    pub fn new(order: usize, t: f64, r: usize) -> Result<Self> {
        if order == 0 || (order > 1 && order % 2 == 1) {
            return Err(Error::Unsupported(format!(
                "product-formula order {order} (use 1 or an even order)"
            )));
        }
        if r == 0 {
            return domain("Trotter number must be at least 1");
        }
        if !t.is_finite() {
            return domain(format!("evolution time {t} is not finite"));
        }
        Ok(Self {
            order,
            t,
            r,
            epsilon: None,
        })
    }

    /// Plan whose sub-step length does not exceed `max_step`.
    pub fn with_max_step(order: usize, t: f64, max_step: f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return domain(format!("maximum sub-step {max_step} must be positive"));
        }
        let r = ((t.abs() / max_step).ceil() as usize).max(1);
        Self::new(order, t, r)
    }

    /// Recursion levels `k = 2..=order/2` with their block coefficients.
    pub fn levels(&self) -> Vec<(usize, [f64; 5])> {
        if self.order < 4 {
            return Vec::new();
        }
        (2..=self.order / 2)
            .map(|k| (k, level_coefficients(k)))
            .collect()
    }

    /// Full stage list for `S_p(t/r)^r` with absolute times, optionally with
    /// adjacent same-group stages merged.
    pub fn sequence(&self, num_groups: usize, merge: bool) -> Vec<Stage> {
        let step = base_stages(self.order, num_groups);
        let dt = self.t / self.r as f64;
        let mut out = Vec::with_capacity(step.len() * self.r);
        for _ in 0..self.r {
            for s in &step {
                out.push(Stage {
                    group: s.group,
                    coeff: s.coeff * dt,
                });
            }
        }
        if merge {
            merge_stages(&out)
        } else {
            out
        }
    }
}

/// Stages of one sub-step `S_p(1)` before any merging.
pub fn base_stages(order: usize, num_groups: usize) -> Vec<Stage> {
    if num_groups == 0 {
        return Vec::new();
    }
    if num_groups == 1 {
        return vec![Stage {
            group: 0,
            coeff: 1.0,
        }];
    }
    match order {
        1 => (0..num_groups)
            .map(|g| Stage {
                group: g,
                coeff: 1.0,
            })
            .collect(),
        2 => {
            let last = num_groups - 1;
            let mut v: Vec<Stage> = (0..last)
                .map(|g| Stage {
                    group: g,
                    coeff: 0.5,
                })
                .collect();
            v.push(Stage {
                group: last,
                coeff: 1.0,
            });
            v.extend((0..last).rev().map(|g| Stage {
                group: g,
                coeff: 0.5,
            }));
            v
        }
        p => {
            let inner = base_stages(p - 2, num_groups);
            let mut v = Vec::with_capacity(5 * inner.len());
            for c in level_coefficients(p / 2) {
                v.extend(inner.iter().map(|s| Stage {
                    group: s.group,
                    coeff: c * s.coeff,
                }));
            }
            v
        }
    }
}

/// Fuses neighbouring stages acting on the same group (their exponentials
/// commute exactly).
pub fn merge_stages(stages: &[Stage]) -> Vec<Stage> {
    let mut out: Vec<Stage> = Vec::with_capacity(stages.len());
    for s in stages {
        match out.last_mut() {
            Some(last) if last.group == s.group => last.coeff += s.coeff,
            _ => out.push(*s),
        }
    }
    out
}

/// Emits the bond propagators of `stages` into `circuit`. `qubit_map[s]` is
/// the register qubit hosting spin `s`; every gate receives `controls`.
/// Returns the number of gates emitted.
pub fn emit_stages(
    circuit: &mut Circuit,
    stages: &[Stage],
    split: &TermSplit,
    qubit_map: &[usize],
    controls: &[Control],
) -> Result<usize> {
    let mut count = 0;
    for s in stages {
        for term in &split.groups[s.group] {
            let u = term_unitary(term, s.coeff);
            let (i, j) = term.sites;
            let op =
                GateOp::two(qubit_map[i], qubit_map[j], u, BOND_LABEL)?.with_controls(controls);
            circuit.push(op)?;
            count += 1;
        }
    }
    Ok(count)
}

/// Circuit for a product formula, with its stage counts before and after
/// seam merging.
#[derive(Clone, Debug)]
pub struct TrotterCircuit {
    pub circuit: Circuit,
    pub stages_premerge: usize,
    pub stages_merged: usize,
    pub depth_premerge: usize,
}

/// Builds `S_p(t/r)^r` on an `n`-qubit register (spin `s` on qubit `s`).
pub fn suzuki_sequence(plan: &TrotterPlan, split: &TermSplit) -> Result<TrotterCircuit> {
    let g = split.groups.len();
    let map: Vec<usize> = (0..split.n).collect();
    let pre = plan.sequence(g, false);
    let merged = merge_stages(&pre);
    let mut pre_circuit = Circuit::new(split.n);
    emit_stages(&mut pre_circuit, &pre, split, &map, &[])?;
    let mut circuit = Circuit::new(split.n);
    emit_stages(&mut circuit, &merged, split, &map, &[])?;
    Ok(TrotterCircuit {
        circuit,
        stages_premerge: pre.len(),
        stages_merged: merged.len(),
        depth_premerge: pre_circuit.depth(),
    })
}

/// Counter bumped once per controlled real-time-evolution block.
pub const CRTE_COUNTER: &str = "crte";

/// Appends `reps` sub-steps `S_p(dt)` controlled by `controls`, each counted
/// as one CRTE block. Adjacent sub-steps share their seam stage when
/// `merge_seams` is set; otherwise every block is emitted separately so
/// block boundaries stay visible in the gate list.
#[allow(clippy::too_many_arguments)]
pub fn push_controlled_evolution(
    circuit: &mut Circuit,
    split: &TermSplit,
    order: usize,
    dt: f64,
    reps: usize,
    qubit_map: &[usize],
    controls: &[Control],
    merge_seams: bool,
) -> Result<()> {
    if reps == 0 {
        return Ok(());
    }
    let g = split.groups.len();
    if merge_seams {
        let plan = TrotterPlan::new(order, dt * reps as f64, reps)?;
        emit_stages(circuit, &plan.sequence(g, true), split, qubit_map, controls)?;
    } else {
        let one = TrotterPlan::new(order, dt, 1)?.sequence(g, true);
        for _ in 0..reps {
            emit_stages(circuit, &one, split, qubit_map, controls)?;
        }
    }
    circuit.bump(CRTE_COUNTER, reps as u64);
    Ok(())
}

/// `r = ceil(comm^{1/p} t^{1+1/p} / ε^{1/p})`, at least 1.
pub fn trotter_number(t: f64, epsilon: f64, order: usize, comm_norm: f64) -> Result<usize> {
    if !(t > 0.0) || !(epsilon > 0.0) || !(comm_norm >= 0.0) || order == 0 {
        return domain(format!(
            "trotter number needs t > 0, ε > 0, comm ≥ 0 (got t={t}, ε={epsilon}, comm={comm_norm})"
        ));
    }
    let p = order as f64;
    let r = (comm_norm.powf(1.0 / p) * t.powf(1.0 + 1.0 / p) / epsilon.powf(1.0 / p)).ceil();
    Ok((r as usize).max(1))
}

/// Largest spectral norm of the nested commutators
/// `[H_{γ_{p+1}}, …, [H_{γ_2}, H_{γ_1}]…]` over all group assignments γ.
pub fn commutator_norm(split: &TermSplit, order: usize) -> Result<f64> {
    if split.n > COMMUTATOR_SPIN_LIMIT {
        return Err(Error::Resource(format!(
            "dense commutators for {} spins (limit {COMMUTATOR_SPIN_LIMIT})",
            split.n
        )));
    }
    let g = split.groups.len();
    if g < 2 {
        return Ok(0.0);
    }
    let dense: Vec<CMat> = (0..g).map(|k| split.group_dense(k)).collect();
    let depth = order + 1;
    let total = g.pow(depth as u32);
    let mut best = 0.0f64;
    for code in 0..total {
        let mut idx = code;
        let mut acc = dense[idx % g].clone();
        idx /= g;
        for _ in 1..depth {
            let h = &dense[idx % g];
            idx /= g;
            acc = h * &acc - &acc * h;
        }
        best = best.max(spectral_norm(&acc));
    }
    Ok(best)
}
