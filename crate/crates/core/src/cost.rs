//! Circuit-depth formulas and repetition-weighted total costs.
//!
//! Depths count layers of CNOT plus single-qubit gates. `d_CRTE` is the
//! depth of one controlled product-formula sub-step and is measured from
//! lowered circuits (see [`crate::pite::crte_depth`]); everything else here
//! is closed-form arithmetic.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::qaa::{optimal_repetitions, rotated_probability};
use crate::qpe::infidelity_bound;

/// Depth model parameters shared by the formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthParams {
    pub d_crte: u64,
    /// `d_S0(q) = s0_slope · q + s0_intercept`.
    pub s0_slope: u64,
    pub s0_intercept: u64,
    pub d_uref: u64,
}

impl DepthParams {
    pub fn new(d_crte: u64) -> Self {
        Self {
            d_crte,
            s0_slope: 4,
            s0_intercept: 2,
            d_uref: 0,
        }
    }

    /// Zero reflection on `q` qubits.
    pub fn d_s0(&self, q: u64) -> u64 {
        self.s0_slope * q + self.s0_intercept
    }

    /// `d_S0(K) + d_S0(n + K)`.
    pub fn reflection_sum(&self, n: u64, k: u64) -> u64 {
        self.d_s0(k) + self.d_s0(n + k)
    }
}

/// `4 + K(K − 1) d_CRTE` under the linear query schedule.
pub fn depth_pite(k: u64, d_crte: u64) -> u64 {
    4 + k * k.saturating_sub(1) * d_crte
}

/// `K(K + 1)/2`: `K` Hadamards and `K(K − 1)/2` controlled phases.
pub fn depth_qft(k: u64) -> u64 {
    k * (k + 1) / 2
}

/// `1 + (2^K − 1) r d_CRTE + d_QFT`.
pub fn depth_qpe(k: u64, r: u64, d_crte: u64, d_qft: u64) -> u64 {
    1 + ((1u64 << k) - 1) * r * d_crte + d_qft
}

/// `m(2 d_PITE + d_S0(K) + d_S0(n+K) + 2 d_Uref) + d_PITE`.
pub fn depth_pite_qaa(m: u64, k: u64, n: u64, d_pite: u64, params: &DepthParams) -> u64 {
    m * (2 * d_pite + params.reflection_sum(n, k) + 2 * params.d_uref) + d_pite
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QaaBenefit {
    pub benefit: bool,
    /// `(π|c₁| / (4(1 − |c₁|²))) (reflection sum + 2 d_Uref)`; zero when the
    /// early `P_K > 1/2` exit fires.
    pub threshold: f64,
}

/// Break-even test `d_PITE ≥ threshold`. With `p_k > 1/2` amplification
/// never pays and the answer is `false` regardless of depths.
pub fn qaa_benefit(
    d_pite: u64,
    c1_abs: f64,
    reflection_sum: u64,
    d_uref: u64,
    p_k: Option<f64>,
) -> Result<QaaBenefit> {
    if !(c1_abs > 0.0 && c1_abs < 1.0) {
        return domain(format!("|c1| = {c1_abs} outside (0, 1)"));
    }
    if p_k.is_some_and(|p| p > 0.5) {
        return Ok(QaaBenefit {
            benefit: false,
            threshold: 0.0,
        });
    }
    let threshold =
        PI * c1_abs / (4.0 * (1.0 - c1_abs * c1_abs)) * (reflection_sum + 2 * d_uref) as f64;
    Ok(QaaBenefit {
        benefit: d_pite as f64 >= threshold,
        threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "pite")]
    Pite,
    #[serde(rename = "pite+qaa")]
    PiteQaa,
    #[serde(rename = "qpe")]
    Qpe,
    #[serde(rename = "qpe+aa")]
    QpeAa,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pite, Method::PiteQaa, Method::Qpe, Method::QpeAa];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Pite => "pite",
            Method::PiteQaa => "pite+qaa",
            Method::Qpe => "qpe",
            Method::QpeAa => "qpe+aa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s).map_or_else(
            || {
                domain(format!(
                    "unknown method {s:?} (pite, pite+qaa, qpe, qpe+aa)"
                ))
            },
            Ok,
        )
    }
}

/// Inputs of the leading-order cost model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostInputs {
    pub c1_abs: f64,
    pub delta_target: f64,
    pub n: u64,
    pub r: u64,
    /// Distance of the nearest excited phase from the ground outcome, in
    /// units of a full phase turn.
    pub qpe_gap: f64,
    pub depth: DepthParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostPoint {
    pub method: Method,
    pub c1_abs: f64,
    pub delta_target: f64,
    #[serde(rename = "K_needed")]
    pub k_needed: u64,
    pub depth_total: u64,
    pub expected_repetitions: f64,
    pub cost: f64,
}

/// `ln((1 − δ)(1 − |c₁|²) / (δ|c₁|²))`, the step-count scale of PITE.
pub fn pite_log_factor(c1_abs: f64, delta: f64) -> f64 {
    let c2 = c1_abs * c1_abs;
    ((1.0 - delta) * (1.0 - c2) / (delta * c2)).ln()
}

/// Steps for target `δ` at one unit of log-factor per step, at least one.
pub fn pite_steps_needed(c1_abs: f64, delta: f64) -> u64 {
    pite_log_factor(c1_abs, delta).ceil().max(1.0) as u64
}

/// Smallest `K` whose bound `(π/(4|c₁|TΔ))²` reaches `δ`.
pub fn qpe_ancillas_needed(c1_abs: f64, delta: f64, gap: f64) -> u64 {
    (1..63u64)
        .find(|&k| infidelity_bound(c1_abs, 1usize << k, gap) <= delta)
        .unwrap_or(63)
}

fn check_inputs(i: &CostInputs) -> Result<()> {
    if !(i.c1_abs > 0.0 && i.c1_abs < 1.0) {
        return domain(format!("|c1| = {} outside (0, 1)", i.c1_abs));
    }
    if !(i.delta_target > 0.0 && i.delta_target < 1.0) {
        return domain(format!(
            "target infidelity {} outside (0, 1)",
            i.delta_target
        ));
    }
    if !(i.qpe_gap > 0.0 && i.qpe_gap <= 0.5) {
        return domain(format!("QPE phase gap {} outside (0, 1/2]", i.qpe_gap));
    }
    if i.r == 0 || i.depth.d_crte == 0 {
        return domain("r and d_CRTE must be positive");
    }
    Ok(())
}

/// Repetition-weighted cost of reaching `δ` from weight `|c₁|`.
///
/// PITE uses the leading-order query depth `K d_CRTE` with
/// `P_K = |c₁|²/(1 − δ)` (the shifted step pins `F_K(λ₁) = 1`). QPE uses
/// the ancilla count from its infidelity bound and `P_k = |c₁|²/(1 − δ)`
/// (the ground phase is exactly representable). The amplified variants
/// repeat the block `2m* + 1` times and succeed with `sin²((2m*+1)θ_a)`.
pub fn total_cost(method: Method, inputs: &CostInputs) -> Result<CostPoint> {
    check_inputs(inputs)?;
    let c1 = inputs.c1_abs;
    let delta = inputs.delta_target;
    let p = (c1 * c1 / (1.0 - delta)).min(1.0);
    let d = &inputs.depth;
    let (k_needed, depth_total, p_success) = match method {
        Method::Pite | Method::PiteQaa => {
            let k = pite_steps_needed(c1, delta);
            let d_pite = k * d.d_crte;
            if method == Method::Pite {
                (k, d_pite, p)
            } else {
                let m = optimal_repetitions(p, 0)? as u64;
                (
                    k,
                    depth_pite_qaa(m, k, inputs.n, d_pite, d),
                    rotated_probability(p, m as usize),
                )
            }
        }
        Method::Qpe | Method::QpeAa => {
            let k = qpe_ancillas_needed(c1, delta, inputs.qpe_gap);
            let d_qpe = depth_qpe(k, inputs.r, d.d_crte, depth_qft(k));
            if method == Method::Qpe {
                (k, d_qpe, p)
            } else {
                let m = optimal_repetitions(p, 0)? as u64;
                let depth = m * (2 * d_qpe + d.reflection_sum(inputs.n, k) + 2 * d.d_uref) + d_qpe;
                (k, depth, rotated_probability(p, m as usize))
            }
        }
    };
    let expected_repetitions = 1.0 / p_success;
    Ok(CostPoint {
        method,
        c1_abs: c1,
        delta_target: delta,
        k_needed,
        depth_total,
        expected_repetitions,
        cost: depth_total as f64 * expected_repetitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::linear_fit;

    #[test]
    fn formula_examples() {
        assert_eq!(depth_pite(1, 10), 4);
        assert_eq!(depth_pite(3, 10), 64);
        assert_eq!(depth_qpe(1, 4, 10, 1), 42);
        assert_eq!(depth_qft(1), 1);
        let p = DepthParams::new(10);
        assert_eq!(p.d_s0(2), 10);
        assert_eq!(depth_pite_qaa(0, 2, 4, 24, &p), 24);
        assert_eq!(depth_pite_qaa(1, 2, 4, depth_pite(2, 10), &p), 108);
        let slope = depth_pite_qaa(5, 2, 4, 24, &p) - depth_pite_qaa(4, 2, 4, 24, &p);
        assert_eq!(slope, 2 * 24 + 10 + 26);
    }

    #[test]
    fn benefit_examples() {
        let b = qaa_benefit(64, 0.1, 40, 0, None).unwrap();
        assert!(b.benefit);
        assert!((b.threshold - 0.1 * PI / 3.96 * 40.0).abs() < 1e-12);
        assert!((b.threshold - 3.17).abs() < 0.01);
        assert!(
            !qaa_benefit(1_000_000, 0.8, 40, 0, Some(0.64))
                .unwrap()
                .benefit
        );
        assert!(qaa_benefit(1, 1e-6, 40, 0, None).unwrap().benefit);
        assert!(qaa_benefit(64, 1.0, 40, 0, None).is_err());
    }

    #[test]
    fn balanced_log_point() {
        assert!(pite_log_factor(std::f64::consts::FRAC_1_SQRT_2, 0.5).abs() < 1e-12);
    }

    #[test]
    fn qpe_ancillas_meet_bound() {
        for c in [0.5, 0.1, 0.01] {
            let k = qpe_ancillas_needed(c, 1e-4, 0.1);
            assert!(infidelity_bound(c, 1 << k, 0.1) <= 1e-4);
            assert!(infidelity_bound(c, 1 << (k - 1), 0.1) > 1e-4);
        }
    }

    #[test]
    fn scaling_slopes() {
        let cs: Vec<f64> = (1..=8).map(|j| 0.5f64.powi(j)).collect();
        let x: Vec<f64> = cs.iter().map(|c| (1.0 / c).ln()).collect();
        let slope = |m: Method| {
            let y: Vec<f64> = cs
                .iter()
                .map(|&c| {
                    let i = CostInputs {
                        c1_abs: c,
                        delta_target: 1e-4,
                        n: 8,
                        r: 4,
                        qpe_gap: 0.1,
                        depth: DepthParams::new(100),
                    };
                    total_cost(m, &i).unwrap().cost.ln()
                })
                .collect();
            linear_fit(&x, &y).0
        };
        assert!((slope(Method::Pite) - 2.0).abs() < 0.2);
        assert!((slope(Method::PiteQaa) - 1.0).abs() < 0.2);
        assert!((slope(Method::Qpe) - 3.0).abs() < 0.3);
        assert!((slope(Method::QpeAa) - 2.0).abs() < 0.3);
    }

    #[test]
    fn method_labels_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.label()).unwrap(), m);
        }
        assert!(Method::parse("vqe").is_err());
    }
}
