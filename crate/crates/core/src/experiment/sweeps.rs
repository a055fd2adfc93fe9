//! Row producers for each experiment. Sweep points are evaluated in
//! parallel and collected in input order, so the rows come out sorted.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{
    depth_pite, depth_pite_qaa, depth_qft, depth_qpe, total_cost, CostInputs, DepthParams, Method,
};
use crate::error::Result;
use crate::linalg::{cis, linear_fit, spectral_norm};
use crate::pite::{
    build_tau_schedule, crte_depth, measured_pite_depth, run_pite, spectral_pite, AncillaMode,
    PiteConfig, StepMode,
};
use crate::qaa::{best_nearby_repetitions, optimal_repetitions, run_multistep_pite_qaa, QaaConfig};
use crate::qpe::{excited_phase_gap, qpe_run, QpeConfig};
use crate::spin_model::{prepare_initial_state, InitialStateSpec, ModelInstance};
use crate::trotter::{suzuki_sequence, TrotterPlan};

use super::{tau_bounds, ResolvedConfig};

/// Order whose `d_CRTE` prices exact-mode rows and the cost model.
const REFERENCE_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiteRow {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: &'static str,
    pub trotter_order: Option<usize>,
    pub r: usize,
    pub gamma: f64,
    pub shift: bool,
    #[serde(rename = "P_K")]
    pub p_k: f64,
    #[serde(rename = "delta_K")]
    pub delta_k: f64,
    pub depth_measured: Option<usize>,
    pub depth_formula: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QpeRow {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: &'static str,
    pub trotter_order: Option<usize>,
    pub r: usize,
    pub t0: f64,
    pub k_selected: usize,
    #[serde(rename = "P_k")]
    pub p_k: f64,
    pub delta: f64,
    pub depth_formula: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QaaRow {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub c1_abs: f64,
    #[serde(rename = "P_before")]
    pub p_before: f64,
    pub m_star: usize,
    pub m_used: usize,
    #[serde(rename = "P_after")]
    pub p_after: f64,
    pub delta_post: f64,
    pub depth_formula: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightRow {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub method: &'static str,
    pub sigma: f64,
    pub c1_abs: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub delta: f64,
}

pub type CostRow = crate::cost::CostPoint;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrotterRow {
    pub seed: u64,
    pub n: usize,
    pub trotter_order: usize,
    pub t: f64,
    pub r: usize,
    pub error: f64,
    pub depth_premerge: usize,
    pub depth_merged: usize,
}

pub(super) fn crte_depths(
    cfg: &ResolvedConfig,
    model: &ModelInstance,
) -> Result<BTreeMap<usize, u64>> {
    let mut orders = cfg.trotter_orders.clone();
    orders.push(REFERENCE_ORDER);
    orders.sort_unstable();
    orders.dedup();
    orders
        .into_par_iter()
        .map(|o| Ok((o, crte_depth(&model.split, o)? as u64)))
        .collect()
}

fn pite_config(
    cfg: &ResolvedConfig,
    model: &ModelInstance,
    k: usize,
    mode: StepMode,
) -> Result<PiteConfig> {
    let (lo, hi) = tau_bounds(cfg, model)?;
    Ok(PiteConfig {
        gammas: vec![cfg.gamma; k],
        schedule: build_tau_schedule(k, lo, hi, cfg.kappa_bar)?,
        shift: cfg.shift,
        branch: cfg.branch,
        ground_energy_error: 0.0,
        mode,
        ancillas: AncillaMode::Reuse,
        max_trotter_step: cfg.max_trotter_step,
    })
}

fn modes(cfg: &ResolvedConfig) -> Vec<Option<usize>> {
    let mut m: Vec<Option<usize>> = cfg.trotter_orders.iter().map(|o| Some(*o)).collect();
    if cfg.include_exact {
        m.push(None);
    }
    m
}

pub fn pite_rows(
    cfg: &ResolvedConfig,
    model: &ModelInstance,
    d_crte: &BTreeMap<usize, u64>,
) -> Result<Vec<PiteRow>> {
    let initial = prepare_initial_state(&InitialStateSpec::Uniform, &model.spectrum)?;
    let points: Vec<(usize, Option<usize>)> = cfg
        .k_values()
        .flat_map(|k| modes(cfg).into_iter().map(move |m| (k, m)))
        .collect();
    points
        .into_par_iter()
        .map(|(k, order)| {
            let mode = order.map_or(StepMode::Exact, |order| StepMode::Circuit { order });
            let pc = pite_config(cfg, model, k, mode)?;
            let res = run_pite(model, &initial, &pc)?;
            let depth_measured = match order {
                Some(o) => Some(measured_pite_depth(&model.split, k, o)?),
                None => None,
            };
            Ok(PiteRow {
                seed: cfg.seed,
                n: cfg.n,
                k,
                mode: mode.label(),
                trotter_order: order,
                r: res.trotter_steps.iter().copied().max().unwrap_or(0),
                gamma: cfg.gamma,
                shift: cfg.shift,
                p_k: res.p_k,
                delta_k: res.delta_k,
                depth_measured,
                depth_formula: depth_pite(k as u64, d_crte[&order.unwrap_or(REFERENCE_ORDER)]),
            })
        })
        .collect()
}

pub fn qpe_rows(
    cfg: &ResolvedConfig,
    model: &ModelInstance,
    d_crte: &BTreeMap<usize, u64>,
) -> Result<Vec<QpeRow>> {
    let initial = prepare_initial_state(&InitialStateSpec::Uniform, &model.spectrum)?;
    let points: Vec<(usize, Option<usize>)> = cfg
        .k_values()
        .flat_map(|k| modes(cfg).into_iter().map(move |m| (k, m)))
        .collect();
    points
        .into_par_iter()
        .map(|(k, order)| {
            let qc = QpeConfig::auto(&model.spectrum, k, cfg.r, order)?;
            let out = qpe_run(model, &initial, &qc)?;
            let d = d_crte[&order.unwrap_or(REFERENCE_ORDER)];
            Ok(QpeRow {
                seed: cfg.seed,
                n: cfg.n,
                k,
                mode: if order.is_some() { "circuit" } else { "exact" },
                trotter_order: order,
                r: qc.r,
                t0: qc.t0,
                k_selected: out.k_selected,
                p_k: out.p_k,
                delta: out.delta,
                depth_formula: depth_qpe(k as u64, qc.r as u64, d, depth_qft(k as u64)),
            })
        })
        .collect()
}

fn depth_params(cfg: &ResolvedConfig, d_crte: u64) -> DepthParams {
    DepthParams {
        d_crte,
        s0_slope: cfg.s0_slope,
        s0_intercept: cfg.s0_intercept,
        d_uref: cfg.d_uref,
    }
}

/// Exact-mode PITE followed by `m_best` amplitude-amplification rounds,
/// for every `(K, |c₁|)` pair.
pub fn qaa_rows(
    cfg: &ResolvedConfig,
    model: &ModelInstance,
    d_crte: &BTreeMap<usize, u64>,
) -> Result<Vec<QaaRow>> {
    let dp = depth_params(cfg, d_crte[&REFERENCE_ORDER]);
    let points: Vec<(usize, f64)> = cfg
        .k_values()
        .flat_map(|k| cfg.c1_values.iter().map(move |c| (k, *c)))
        .collect();
    points
        .into_par_iter()
        .map(|(k, c1)| {
            let pc = PiteConfig {
                ancillas: AncillaMode::Retained,
                ..pite_config(cfg, model, k, StepMode::Exact)?
            };
            let spec = InitialStateSpec::with_ground_weight(c1, model.spectrum.dim())?;
            let initial = prepare_initial_state(&spec, &model.spectrum)?;
            let p = match cfg.p_estimate {
                Some(p) => p,
                None => {
                    let params = pc.step_params(&model.spectrum)?;
                    spectral_pite(
                        &model.spectrum,
                        &spec.coefficients(&model.spectrum)?,
                        &params,
                        pc.shift,
                    )
                    .p_k
                }
            };
            let m_star = optimal_repetitions(p, 0)?;
            let qaa = QaaConfig {
                m: Some(best_nearby_repetitions(p, m_star)),
                p_estimate: Some(p),
                ..Default::default()
            };
            let res = run_multistep_pite_qaa(model, &initial, &pc, &qaa)?;
            let d_pite = depth_pite(k as u64, dp.d_crte);
            Ok(QaaRow {
                seed: cfg.seed,
                n: cfg.n,
                k,
                c1_abs: c1,
                p_before: res.p_before,
                m_star: res.m_star,
                m_used: res.m_used,
                p_after: res.p_after,
                delta_post: res.delta_post,
                depth_formula: depth_pite_qaa(
                    res.m_used as u64,
                    k as u64,
                    cfg.n as u64,
                    d_pite,
                    &dp,
                ),
            })
        })
        .collect()
}

/// Slope of `ln m*` against `ln(1/|c₁|)` over the rows at the largest `K`.
pub fn qaa_m_star_slope(rows: &[QaaRow]) -> f64 {
    let k_max = rows.iter().map(|r| r.k).max().unwrap_or(0);
    let rows: Vec<&QaaRow> = rows.iter().filter(|r| r.k == k_max).collect();
    let x: Vec<f64> = rows.iter().map(|r| -r.c1_abs.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| (r.m_star.max(1) as f64).ln()).collect();
    if rows.len() < 2 {
        return f64::NAN;
    }
    linear_fit(&x, &y).0
}

/// Gaussian inputs `σ = 30/i` run through exact PITE and exact QPE.
pub fn weight_rows(cfg: &ResolvedConfig, model: &ModelInstance) -> Result<Vec<WeightRow>> {
    let k = cfg.k_max;
    let pc = pite_config(cfg, model, k, StepMode::Exact)?;
    let qc = QpeConfig::auto(&model.spectrum, k, cfg.r, None)?;
    let points: Vec<(&'static str, u32)> = ["pite", "qpe"]
        .into_iter()
        .flat_map(|m| cfg.sigma_indices.iter().map(move |i| (m, *i)))
        .collect();
    points
        .into_par_iter()
        .map(|(method, i)| {
            let sigma = 30.0 / i as f64;
            let spec = InitialStateSpec::Gaussian { sigma };
            let initial = prepare_initial_state(&spec, &model.spectrum)?;
            let c1_abs = spec.coefficients(&model.spectrum)?[0].norm();
            let (p, delta) = if method == "pite" {
                let r = run_pite(model, &initial, &pc)?;
                (r.p_k, r.delta_k)
            } else {
                let r = qpe_run(model, &initial, &qc)?;
                (r.p_k, r.delta)
            };
            Ok(WeightRow {
                seed: cfg.seed,
                n: cfg.n,
                k,
                method,
                sigma,
                c1_abs,
                p,
                delta,
            })
        })
        .collect()
}

/// Phase gap of the excited states in units of a full turn; independent of `K`.
pub fn qpe_phase_gap(model: &ModelInstance, r: usize) -> Result<f64> {
    let qc = QpeConfig::auto(&model.spectrum, 1, r, None)?;
    Ok(excited_phase_gap(&model.spectrum, &qc, 0))
}

pub fn cost_rows(
    cfg: &ResolvedConfig,
    model: &ModelInstance,
    d_crte: &BTreeMap<usize, u64>,
) -> Result<Vec<CostRow>> {
    let gap = qpe_phase_gap(model, cfg.r)?;
    let depth = depth_params(cfg, d_crte[&REFERENCE_ORDER]);
    let points: Vec<(Method, f64)> = Method::ALL
        .into_iter()
        .flat_map(|m| cfg.c1_values.iter().map(move |c| (m, *c)))
        .collect();
    points
        .into_par_iter()
        .map(|(method, c1_abs)| {
            let inputs = CostInputs {
                c1_abs,
                delta_target: cfg.delta_target,
                n: cfg.n as u64,
                r: cfg.r as u64,
                qpe_gap: gap,
                depth,
            };
            total_cost(method, &inputs)
        })
        .collect()
}

/// `d ln cost / d ln |c₁|` per method label.
pub fn cost_slopes(rows: &[CostRow]) -> BTreeMap<&'static str, f64> {
    Method::ALL
        .iter()
        .filter_map(|m| {
            let pts: Vec<&CostRow> = rows.iter().filter(|r| r.method == *m).collect();
            if pts.len() < 2 {
                return None;
            }
            let x: Vec<f64> = pts.iter().map(|r| r.c1_abs.ln()).collect();
            let y: Vec<f64> = pts.iter().map(|r| r.cost.ln()).collect();
            Some((m.label(), linear_fit(&x, &y).0))
        })
        .collect()
}

/// One product-formula step `S_p(t)` against `e^{iHt}` in spectral norm.
pub fn trotter_rows(cfg: &ResolvedConfig, model: &ModelInstance) -> Result<Vec<TrotterRow>> {
    let points: Vec<(usize, f64)> = cfg
        .trotter_orders
        .iter()
        .flat_map(|o| cfg.times.iter().map(move |t| (*o, *t)))
        .collect();
    points
        .into_par_iter()
        .map(|(order, t)| {
            let tc = suzuki_sequence(&TrotterPlan::new(order, t, 1)?, &model.split)?;
            let exact = model.spectrum.operator(|l| cis(l * t));
            let error = spectral_norm(&(tc.circuit.dense_matrix()? - exact));
            Ok(TrotterRow {
                seed: cfg.seed,
                n: cfg.n,
                trotter_order: order,
                t,
                r: 1,
                error,
                depth_premerge: tc.depth_premerge,
                depth_merged: tc.circuit.depth(),
            })
        })
        .collect()
}

/// Fitted exponent of `error ∝ t^q` per order.
pub fn trotter_exponents(rows: &[TrotterRow]) -> BTreeMap<usize, f64> {
    let mut by_order: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = by_order.entry(r.trotter_order).or_default();
        e.0.push(r.t.ln());
        e.1.push(r.error.ln());
    }
    by_order
        .into_iter()
        .filter(|(_, (x, _))| x.len() >= 2)
        .map(|(o, (x, y))| (o, linear_fit(&x, &y).0))
        .collect()
}
