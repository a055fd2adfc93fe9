//! Experiment configuration, validation and the runner that writes CSV
//! tables plus a JSON manifest.
//!
//! A config names one experiment and may leave any numeric field out; the
//! missing ones are filled with per-experiment defaults. The filled-in
//! [`ResolvedConfig`] is what gets hashed and echoed, so two configs that
//! resolve identically produce identical bytes.

mod sweeps;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pite::{default_tau_bounds, DEFAULT_GAMMA, DEFAULT_MAX_TROTTER_STEP, SINGULAR_TOL};
use crate::qpe::{QpeConfig, DEFAULT_QPE_R};
use crate::spin_model::{HeisenbergChain, ModelInstance, SpectrumSummary};

pub use sweeps::{
    cost_rows, pite_rows, qaa_rows, qpe_rows, trotter_rows, weight_rows, CostRow, PiteRow, QaaRow,
    QpeRow, TrotterRow, WeightRow,
};

/// Largest chain the runner diagonalises densely.
pub const MAX_CHAIN_SPINS: usize = 12;
/// Largest register (system plus ancillas) the runner simulates.
pub const MAX_REGISTER_QUBITS: usize = 22;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PiteSweep,
    QpeSweep,
    QaaSweep,
    WeightSweep,
    CostSweep,
    TrotterOrderStudy,
}

impl ExperimentKind {
    pub fn output_file(&self) -> &'static str {
        match self {
            ExperimentKind::PiteSweep => "pite_sweep.csv",
            ExperimentKind::QpeSweep => "qpe_sweep.csv",
            ExperimentKind::QaaSweep => "qaa_sweep.csv",
            ExperimentKind::WeightSweep => "weight_sweep.csv",
            ExperimentKind::CostSweep => "cost.csv",
            ExperimentKind::TrotterOrderStudy => "trotter_study.csv",
        }
    }
}

/// Config document as written by the user. Every field but `experiment`
/// is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub periodic: Option<bool>,
    #[serde(default)]
    pub k_min: Option<usize>,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub trotter_orders: Option<Vec<usize>>,
    #[serde(default)]
    pub include_exact: Option<bool>,
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub kappa_bar: Option<f64>,
    #[serde(default)]
    pub dtau_min: Option<f64>,
    #[serde(default)]
    pub dtau_max: Option<f64>,
    #[serde(default)]
    pub shift: Option<bool>,
    #[serde(default)]
    pub branch: Option<i64>,
    #[serde(default)]
    pub max_trotter_step: Option<f64>,
    #[serde(default)]
    pub c1_values: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma_indices: Option<Vec<u32>>,
    #[serde(default)]
    pub delta_target: Option<f64>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub s0_slope: Option<u64>,
    #[serde(default)]
    pub s0_intercept: Option<u64>,
    #[serde(default)]
    pub d_uref: Option<u64>,
    #[serde(default)]
    pub p_estimate: Option<f64>,
    /// Worker threads; does not affect results.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Output directory; does not affect results.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            n: None,
            seed: None,
            periodic: None,
            k_min: None,
            k_max: None,
            trotter_orders: None,
            include_exact: None,
            r: None,
            gamma: None,
            kappa_bar: None,
            dtau_min: None,
            dtau_max: None,
            shift: None,
            branch: None,
            max_trotter_step: None,
            c1_values: None,
            sigma_indices: None,
            delta_target: None,
            times: None,
            s0_slope: None,
            s0_intercept: None,
            d_uref: None,
            p_estimate: None,
            threads: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills unset fields with the defaults of the chosen experiment.
    pub fn resolve(&self) -> ResolvedConfig {
        use ExperimentKind::*;
        let kind = self.experiment;
        let (n, k_min, k_max) = match kind {
            PiteSweep => (8, 1, 10),
            QpeSweep => (6, 1, 8),
            QaaSweep => (6, 10, 10),
            WeightSweep => (8, 6, 6),
            CostSweep => (8, 1, 1),
            TrotterOrderStudy => (4, 1, 1),
        };
        let orders = match kind {
            QpeSweep | QaaSweep | WeightSweep | CostSweep => vec![4],
            _ => vec![1, 2, 4],
        };
        let c1 = match kind {
            CostSweep => (1..=8).map(|j| 0.5f64.powi(j)).collect(),
            _ => (1..=5).map(|j| 0.5f64.powi(j)).collect(),
        };
        ResolvedConfig {
            experiment: kind,
            n: self.n.unwrap_or(n),
            seed: self.seed.unwrap_or(1),
            periodic: self.periodic.unwrap_or(true),
            k_min: self.k_min.unwrap_or(k_min),
            k_max: self.k_max.unwrap_or(k_max),
            trotter_orders: self.trotter_orders.clone().unwrap_or(orders),
            include_exact: self.include_exact.unwrap_or(true),
            r: self.r.unwrap_or(DEFAULT_QPE_R),
            gamma: self.gamma.unwrap_or(DEFAULT_GAMMA),
            kappa_bar: self.kappa_bar.unwrap_or(1.0),
            dtau_min: self.dtau_min,
            dtau_max: self.dtau_max,
            shift: self.shift.unwrap_or(true),
            branch: self.branch,
            max_trotter_step: self.max_trotter_step.unwrap_or(DEFAULT_MAX_TROTTER_STEP),
            c1_values: self.c1_values.clone().unwrap_or(c1),
            sigma_indices: self
                .sigma_indices
                .clone()
                .unwrap_or_else(|| (1..=29).step_by(2).collect()),
            delta_target: self.delta_target.unwrap_or(1e-4),
            times: self
                .times
                .clone()
                .unwrap_or_else(|| vec![0.1, 0.05, 0.025, 0.0125]),
            s0_slope: self.s0_slope.unwrap_or(4),
            s0_intercept: self.s0_intercept.unwrap_or(2),
            d_uref: self.d_uref.unwrap_or(0),
            p_estimate: self.p_estimate,
        }
    }
}

/// Fully specified experiment parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub seed: u64,
    pub periodic: bool,
    pub k_min: usize,
    pub k_max: usize,
    pub trotter_orders: Vec<usize>,
    pub include_exact: bool,
    pub r: usize,
    pub gamma: f64,
    pub kappa_bar: f64,
    pub dtau_min: Option<f64>,
    pub dtau_max: Option<f64>,
    pub shift: bool,
    pub branch: Option<i64>,
    pub max_trotter_step: f64,
    pub c1_values: Vec<f64>,
    pub sigma_indices: Vec<u32>,
    pub delta_target: f64,
    pub times: Vec<f64>,
    pub s0_slope: u64,
    pub s0_intercept: u64,
    pub d_uref: u64,
    pub p_estimate: Option<f64>,
}

impl ResolvedConfig {
    pub fn k_values(&self) -> impl Iterator<Item = usize> {
        self.k_min..=self.k_max
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Register width of the largest simulation this config asks for.
    pub fn max_register(&self) -> usize {
        use ExperimentKind::*;
        match self.experiment {
            PiteSweep | QpeSweep | QaaSweep | WeightSweep => self.n + self.k_max,
            CostSweep | TrotterOrderStudy => self.n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Singularity,
    Resource,
    Domain,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub field: String,
    pub message: String,
}

fn diag(out: &mut Vec<Diagnostic>, kind: DiagnosticKind, field: &str, message: String) {
    out.push(Diagnostic {
        kind,
        field: field.into(),
        message,
    });
}

/// Static checks; an empty list means the config can run.
pub fn validate(cfg: &ResolvedConfig) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut d = Vec::new();
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        diag(
            &mut d,
            Domain,
            "gamma",
            format!("γ = {} must lie in (0, 1)", cfg.gamma),
        );
    } else if (cfg.gamma - FRAC_1_SQRT_2).abs() < SINGULAR_TOL {
        diag(
            &mut d,
            Singularity,
            "gamma",
            "γ = 1/√2 makes the step generator singular".into(),
        );
    }
    if cfg.n < 2 {
        diag(
            &mut d,
            Domain,
            "n",
            format!("a chain needs at least 2 spins, got {}", cfg.n),
        );
    }
    if cfg.n > MAX_CHAIN_SPINS {
        diag(
            &mut d,
            Resource,
            "n",
            format!(
                "n = {} exceeds the dense limit of {MAX_CHAIN_SPINS} spins",
                cfg.n
            ),
        );
    }
    if cfg.k_min < 1 {
        diag(&mut d, Domain, "k_min", "K must be at least 1".into());
    }
    if cfg.k_min > cfg.k_max {
        diag(
            &mut d,
            Domain,
            "k_max",
            format!("k_min = {} exceeds k_max = {}", cfg.k_min, cfg.k_max),
        );
    }
    if cfg.max_register() > MAX_REGISTER_QUBITS {
        diag(
            &mut d,
            Resource,
            "k_max",
            format!(
                "{} qubits exceed the simulation limit of {MAX_REGISTER_QUBITS}",
                cfg.max_register()
            ),
        );
    }
    for &o in &cfg.trotter_orders {
        if o == 0 || (o > 1 && o % 2 == 1) {
            diag(
                &mut d,
                Domain,
                "trotter_orders",
                format!("order {o} is not 1 or even"),
            );
        }
    }
    if cfg.r == 0 {
        diag(&mut d, Domain, "r", "r must be at least 1".into());
    }
    if !(cfg.kappa_bar > 0.0) {
        diag(
            &mut d,
            Domain,
            "kappa_bar",
            format!("κ̄ = {} must be positive", cfg.kappa_bar),
        );
    }
    if !(cfg.max_trotter_step > 0.0) {
        diag(
            &mut d,
            Domain,
            "max_trotter_step",
            "must be positive".into(),
        );
    }
    for (field, v) in [("dtau_min", cfg.dtau_min), ("dtau_max", cfg.dtau_max)] {
        if v.is_some_and(|x| !(x > 0.0)) {
            diag(&mut d, Domain, field, "must be positive".into());
        }
    }
    if let (Some(lo), Some(hi)) = (cfg.dtau_min, cfg.dtau_max) {
        if lo > hi {
            diag(
                &mut d,
                Domain,
                "dtau_max",
                format!("Δτ_min = {lo} exceeds Δτ_max = {hi}"),
            );
        }
    }
    if cfg.c1_values.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
        diag(
            &mut d,
            Domain,
            "c1_values",
            "every |c1| must lie in (0, 1)".into(),
        );
    }
    if cfg.sigma_indices.contains(&0) {
        diag(
            &mut d,
            Domain,
            "sigma_indices",
            "σ = 30/i needs i ≥ 1".into(),
        );
    }
    if !(cfg.delta_target > 0.0 && cfg.delta_target < 1.0) {
        diag(&mut d, Domain, "delta_target", "must lie in (0, 1)".into());
    }
    if cfg.times.iter().any(|t| !(*t > 0.0)) {
        diag(
            &mut d,
            Domain,
            "times",
            "evolution times must be positive".into(),
        );
    }
    if cfg.p_estimate.is_some_and(|p| !(p > 0.0 && p <= 1.0)) {
        diag(&mut d, Domain, "p_estimate", "must lie in (0, 1]".into());
    }
    d
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainInfo {
    pub n: usize,
    pub periodic: bool,
    pub seed: u64,
    pub fields: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
}

/// Defaults that shape the numbers, recorded explicitly.
#[derive(Clone, Debug, Serialize)]
pub struct ManifestDefaults {
    pub gamma: f64,
    /// `null` means the branch minimising `|E|` is chosen per step.
    pub branch: Option<i64>,
    pub s0_slope: u64,
    pub s0_intercept: u64,
    pub d_uref: u64,
    pub qpe_offset: f64,
    pub qpe_n_c: i32,
    pub r: usize,
    pub max_trotter_step: f64,
    pub kappa_bar: f64,
    pub dtau_min: f64,
    pub dtau_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputInfo {
    pub file: String,
    pub rows: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub config: ResolvedConfig,
    pub chain: ChainInfo,
    pub spectrum: SpectrumSummary,
    pub defaults: ManifestDefaults,
    /// Lowered depth of one controlled sub-step, per Trotter order.
    pub d_crte: BTreeMap<usize, u64>,
    pub outputs: Vec<OutputInfo>,
    /// Experiment-specific summaries (fitted exponents and the like).
    pub summary: BTreeMap<String, serde_json::Value>,
}

pub fn build_model(cfg: &ResolvedConfig) -> Result<ModelInstance> {
    ModelInstance::new(HeisenbergChain::build(cfg.n, cfg.seed, cfg.periodic)?)
}

/// Schedule bounds actually used: overrides where given, defaults otherwise.
pub fn tau_bounds(cfg: &ResolvedConfig, model: &ModelInstance) -> Result<(f64, f64)> {
    let s = cfg.gamma / (1.0 - cfg.gamma * cfg.gamma).sqrt();
    let (lo, hi) = default_tau_bounds(&model.spectrum, s)?;
    Ok((cfg.dtau_min.unwrap_or(lo), cfg.dtau_max.unwrap_or(hi)))
}

/// Everything an experiment produced, before it is written out.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub file: &'static str,
    pub csv: Vec<u8>,
    pub rows: usize,
    pub manifest: Manifest,
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Runs the experiment in memory. `threads = None` uses rayon's default pool.
pub fn execute(cfg: &ResolvedConfig, threads: Option<usize>) -> Result<ExperimentOutput> {
    let diagnostics = validate(cfg);
    if let Some(first) = diagnostics.first() {
        let msg = format!("{}: {}", first.field, first.message);
        return Err(match first.kind {
            DiagnosticKind::Resource => Error::Resource(msg),
            _ => Error::Config(msg),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute_inner(cfg))
}

fn execute_inner(cfg: &ResolvedConfig) -> Result<ExperimentOutput> {
    let model = build_model(cfg)?;
    let mut summary = BTreeMap::new();
    let d_crte = sweeps::crte_depths(cfg, &model)?;
    let (csv, rows) = match cfg.experiment {
        ExperimentKind::PiteSweep => {
            let rows = pite_rows(cfg, &model, &d_crte)?;
            (to_csv(&rows)?, rows.len())
        }
        ExperimentKind::QpeSweep => {
            let rows = qpe_rows(cfg, &model, &d_crte)?;
            (to_csv(&rows)?, rows.len())
        }
        ExperimentKind::QaaSweep => {
            let rows = qaa_rows(cfg, &model, &d_crte)?;
            summary.insert(
                "m_star_slope".into(),
                serde_json::json!(sweeps::qaa_m_star_slope(&rows)),
            );
            (to_csv(&rows)?, rows.len())
        }
        ExperimentKind::WeightSweep => {
            let rows = weight_rows(cfg, &model)?;
            (to_csv(&rows)?, rows.len())
        }
        ExperimentKind::CostSweep => {
            let rows = cost_rows(cfg, &model, &d_crte)?;
            summary.insert(
                "cost_slopes".into(),
                serde_json::json!(sweeps::cost_slopes(&rows)),
            );
            (to_csv(&rows)?, rows.len())
        }
        ExperimentKind::TrotterOrderStudy => {
            let rows = trotter_rows(cfg, &model)?;
            summary.insert(
                "error_exponents".into(),
                serde_json::json!(sweeps::trotter_exponents(&rows)),
            );
            (to_csv(&rows)?, rows.len())
        }
    };
    let (dtau_min, dtau_max) = tau_bounds(cfg, &model)?;
    let qpe = QpeConfig::auto(&model.spectrum, cfg.k_max.max(1), cfg.r.max(1), None)?;
    let file = cfg.experiment.output_file();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        chain: ChainInfo {
            n: model.chain.n,
            periodic: model.chain.periodic,
            seed: model.chain.seed,
            fields: model.chain.fields.clone(),
            edges: model.chain.edges(),
        },
        spectrum: model.spectrum.summary(),
        defaults: ManifestDefaults {
            gamma: cfg.gamma,
            branch: cfg.branch,
            s0_slope: cfg.s0_slope,
            s0_intercept: cfg.s0_intercept,
            d_uref: cfg.d_uref,
            qpe_offset: qpe.offset,
            qpe_n_c: qpe.n_c,
            r: cfg.r,
            max_trotter_step: cfg.max_trotter_step,
            kappa_bar: cfg.kappa_bar,
            dtau_min,
            dtau_max,
        },
        d_crte,
        outputs: vec![OutputInfo {
            file: file.into(),
            rows,
        }],
        summary,
    };
    Ok(ExperimentOutput {
        file,
        csv,
        rows,
        manifest,
    })
}

/// One cost-model point on the chain described by `cfg`.
pub fn single_cost(
    cfg: &ResolvedConfig,
    method: crate::cost::Method,
    c1_abs: f64,
    delta: f64,
) -> Result<CostRow> {
    let cfg = ResolvedConfig {
        c1_values: vec![c1_abs],
        delta_target: delta,
        ..cfg.clone()
    };
    if let Some(d) = validate(&cfg).first() {
        return Err(Error::Config(format!("{}: {}", d.field, d.message)));
    }
    let model = build_model(&cfg)?;
    let d_crte = sweeps::crte_depths(&cfg, &model)?;
    let rows = cost_rows(&cfg, &model, &d_crte)?;
    Ok(rows
        .into_iter()
        .find(|r| r.method == method)
        .expect("every method is swept"))
}

/// Runs the experiment and writes the CSV and `manifest.json` into `out`.
pub fn run(cfg: &ResolvedConfig, out: &Path, threads: Option<usize>) -> Result<ExperimentOutput> {
    let result = execute(cfg, threads)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(result.file), &result.csv)?;
    let mut json = serde_json::to_vec_pretty(&result.manifest)?;
    json.push(b'\n');
    fs::write(out.join(MANIFEST_FILE), json)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_experiment() {
        let p = ExperimentConfig::new(ExperimentKind::PiteSweep).resolve();
        assert_eq!((p.n, p.k_min, p.k_max), (8, 1, 10));
        assert_eq!(p.trotter_orders, vec![1, 2, 4]);
        let w = ExperimentConfig::new(ExperimentKind::WeightSweep).resolve();
        assert_eq!(w.sigma_indices.len(), 15);
        let q = ExperimentConfig::new(ExperimentKind::QpeSweep).resolve();
        assert_eq!(q.r, 4);
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn diagnostics() {
        let mut c = ExperimentConfig::new(ExperimentKind::PiteSweep);
        c.gamma = Some(FRAC_1_SQRT_2);
        let d = validate(&c.resolve());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::Singularity);
        let mut c = ExperimentConfig::new(ExperimentKind::PiteSweep);
        c.n = Some(20);
        assert!(validate(&c.resolve())
            .iter()
            .any(|d| d.kind == DiagnosticKind::Resource));
        let mut c = ExperimentConfig::new(ExperimentKind::PiteSweep);
        c.k_min = Some(0);
        assert!(validate(&c.resolve()).iter().any(|d| d.field == "k_min"));
    }

    #[test]
    fn parse_rejects_unknown_keys() {
        assert!(ExperimentConfig::from_json(r#"{"experiment":"pite-sweep","bogus":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment":"nope"}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"experiment":"qpe-sweep","n":4}"#).unwrap();
        assert_eq!(c.resolve().n, 4);
    }

    #[test]
    fn hash_ignores_threads_and_output() {
        let mut a = ExperimentConfig::new(ExperimentKind::CostSweep);
        let h = a.resolve().hash();
        a.threads = Some(3);
        a.output = Some("elsewhere".into());
        assert_eq!(a.resolve().hash(), h);
        a.seed = Some(2);
        assert_ne!(a.resolve().hash(), h);
        assert_eq!(h.len(), 64);
    }
}
