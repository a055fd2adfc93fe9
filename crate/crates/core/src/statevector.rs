//! Dense statevector simulator.
//!
//! Qubit 0 is the least-significant bit of the amplitude index. For gates
//! acting on several qubits the first listed target is the most significant
//! bit of the gate's local index, so a two-qubit matrix `A ⊗ B` placed on
//! targets `[a, b]` applies `A` to qubit `a` and `B` to qubit `b`.

use std::collections::BTreeMap;

use crate::error::{domain, Error, Result};
use crate::linalg::{cis, unitarity_error, CMat, Mat2, Mat4, C64, ONE, ZERO};

/// Maximum register width for which [`Circuit::dense_matrix`] is allowed.
pub const DENSE_CIRCUIT_LIMIT: usize = 12;
/// Unitarity tolerance enforced on every stored gate matrix.
pub const UNITARY_TOL: f64 = 1e-10;
/// Label reserved for CNOT gates; `Circuit::cnot_count` counts it.
pub const CNOT_LABEL: &str = "cx";

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

/// A control qubit together with the basis value that activates the gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Control {
    pub qubit: usize,
    pub on_one: bool,
}

impl Control {
    pub fn on_one(qubit: usize) -> Self {
        Self {
            qubit,
            on_one: true,
        }
    }

    pub fn on_zero(qubit: usize) -> Self {
        Self {
            qubit,
            on_one: false,
        }
    }
}

#[derive(Clone, Debug)]
pub enum GateKind {
    Single(Mat2),
    Two(Mat4),
    /// Arbitrary `2^m × 2^m` unitary on `m` targets.
    Dense(CMat),
    /// Multiplies by `e^{i phi}` the basis states whose targets are all `|0⟩`.
    ZeroPhase(f64),
    /// `targets[0]` is rotated by `blocks[s]`, where `s` is the integer read
    /// from `targets[1..]` (`targets[1]` is the least significant bit).
    UniformlyControlled(Vec<Mat2>),
}

#[derive(Clone, Debug)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub controls: Vec<Control>,
    pub label: String,
}

fn check_unitary(m: &CMat, what: &str) -> Result<()> {
    let err = unitarity_error(m);
    if err > UNITARY_TOL {
        return Err(Error::Validation(format!(
            "{what} is not unitary (max |U†U - I| = {err:e})"
        )));
    }
    Ok(())
}

impl GateOp {
    pub fn single(target: usize, m: Mat2, label: impl Into<String>) -> Result<Self> {
        check_unitary(&crate::linalg::to_dyn2(&m), "single-qubit gate")?;
        Ok(Self {
            kind: GateKind::Single(m),
            targets: vec![target],
            controls: Vec::new(),
            label: label.into(),
        })
    }

    pub fn two(a: usize, b: usize, m: Mat4, label: impl Into<String>) -> Result<Self> {
        check_unitary(&crate::linalg::to_dyn4(&m), "two-qubit gate")?;
        Ok(Self {
            kind: GateKind::Two(m),
            targets: vec![a, b],
            controls: Vec::new(),
            label: label.into(),
        })
    }

    pub fn dense(targets: Vec<usize>, m: CMat, label: impl Into<String>) -> Result<Self> {
        let d = 1usize << targets.len();
        if m.shape() != (d, d) {
            return domain(format!(
                "dense gate on {} qubits needs a {d}×{d} matrix, got {:?}",
                targets.len(),
                m.shape()
            ));
        }
        check_unitary(&m, "dense gate")?;
        Ok(Self {
            kind: GateKind::Dense(m),
            targets,
            controls: Vec::new(),
            label: label.into(),
        })
    }

    pub fn zero_phase(targets: Vec<usize>, phi: f64, label: impl Into<String>) -> Self {
        Self {
            kind: GateKind::ZeroPhase(phi),
            targets,
            controls: Vec::new(),
            label: label.into(),
        }
    }

    pub fn uniformly_controlled(
        target: usize,
        selectors: &[usize],
        blocks: Vec<Mat2>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if blocks.len() != 1usize << selectors.len() {
            return domain(format!(
                "{} selectors need {} blocks, got {}",
                selectors.len(),
                1usize << selectors.len(),
                blocks.len()
            ));
        }
        for b in &blocks {
            check_unitary(&crate::linalg::to_dyn2(b), "uniformly-controlled block")?;
        }
        let mut targets = vec![target];
        targets.extend_from_slice(selectors);
        Ok(Self {
            kind: GateKind::UniformlyControlled(blocks),
            targets,
            controls: Vec::new(),
            label: label.into(),
        })
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Single(crate::linalg::pauli_x()),
            targets: vec![target],
            controls: vec![Control::on_one(control)],
            label: CNOT_LABEL.to_string(),
        }
    }

    pub fn with_control(mut self, c: Control) -> Self {
        self.controls.push(c);
        self
    }

    pub fn with_controls(mut self, cs: &[Control]) -> Self {
        self.controls.extend_from_slice(cs);
        self
    }

    /// All qubits touched by the gate, targets first.
    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.targets
            .iter()
            .copied()
            .chain(self.controls.iter().map(|c| c.qubit))
    }

    pub fn is_cnot(&self) -> bool {
        self.label == CNOT_LABEL
    }

    pub fn inverse(&self) -> Self {
        let kind = match &self.kind {
            GateKind::Single(m) => GateKind::Single(m.adjoint()),
            GateKind::Two(m) => GateKind::Two(m.adjoint()),
            GateKind::Dense(m) => GateKind::Dense(m.adjoint()),
            GateKind::ZeroPhase(phi) => GateKind::ZeroPhase(-phi),
            GateKind::UniformlyControlled(bs) => {
                GateKind::UniformlyControlled(bs.iter().map(|b| b.adjoint()).collect())
            }
        };
        Self {
            kind,
            targets: self.targets.clone(),
            controls: self.controls.clone(),
            label: self.label.clone(),
        }
    }

    /// Checks index validity against a register of `num_qubits` qubits.
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        let mut seen = 0u64;
        for q in self.qubits() {
            if q >= num_qubits {
                return domain(format!(
                    "gate '{}' touches qubit {q} on a {num_qubits}-qubit register",
                    self.label
                ));
            }
            if seen & (1 << q) != 0 {
                return Err(Error::Validation(format!(
                    "gate '{}' lists qubit {q} more than once",
                    self.label
                )));
            }
            seen |= 1 << q;
        }
        if self.targets.is_empty() {
            return Err(Error::Validation(format!(
                "gate '{}' has no targets",
                self.label
            )));
        }
        Ok(())
    }
}

fn control_masks(controls: &[Control]) -> (usize, usize) {
    let mut mask = 0usize;
    let mut value = 0usize;
    for c in controls {
        mask |= 1 << c.qubit;
        if c.on_one {
            value |= 1 << c.qubit;
        }
    }
    (mask, value)
}

/// Offsets of the local basis states: local index `l` has bit `m-1-p`
/// mapped to qubit `targets[p]`.
fn local_offsets(targets: &[usize]) -> Vec<usize> {
    let m = targets.len();
    (0..1usize << m)
        .map(|l| {
            targets
                .iter()
                .enumerate()
                .filter(|(p, _)| (l >> (m - 1 - p)) & 1 == 1)
                .map(|(_, q)| 1usize << q)
                .sum()
        })
        .collect()
}

impl StateVector {
    pub fn new_basis_state(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits >= usize::BITS as usize - 1 {
            return Err(Error::Resource(format!("{num_qubits} qubits")));
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return domain(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            ));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn zero_state(num_qubits: usize) -> Self {
        Self::new_basis_state(num_qubits, 0).expect("index 0 always valid")
    }

    /// Wraps an amplitude vector whose length must be a power of two. The
    /// vector is used as given (no normalisation).
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return domain(format!("amplitude count {len} is not a power of two"));
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_sqr();
        if n2 < 1e-300 {
            return Err(Error::ImpossibleOutcome(
                "cannot normalise a zero vector".into(),
            ));
        }
        let s = 1.0 / n2.sqrt();
        for a in &mut self.amplitudes {
            *a *= s;
        }
        Ok(n2)
    }

    pub fn scale(&mut self, factor: C64) {
        for a in &mut self.amplitudes {
            *a *= factor;
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.num_qubits != other.num_qubits {
            return domain(format!(
                "register mismatch: {} vs {} qubits",
                self.num_qubits, other.num_qubits
            ));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|⟨reference|self⟩|²`.
    pub fn fidelity(&self, reference: &StateVector) -> Result<f64> {
        Ok(reference.inner(self)?.norm_sqr())
    }

    /// Appends `k` fresh qubits in `|0⟩` above the existing register.
    pub fn with_ancillas(&self, k: usize) -> Self {
        let mut amplitudes = vec![ZERO; self.dim() << k];
        amplitudes[..self.dim()].copy_from_slice(&self.amplitudes);
        Self {
            num_qubits: self.num_qubits + k,
            amplitudes,
        }
    }

    pub fn apply_gate(&mut self, op: &GateOp) -> Result<()> {
        op.validate(self.num_qubits)?;
        let (cmask, cval) = control_masks(&op.controls);
        match &op.kind {
            GateKind::Single(m) => self.kernel_single(op.targets[0], m, cmask, cval),
            GateKind::Two(m) => {
                let offs = local_offsets(&op.targets);
                let tmask = (1 << op.targets[0]) | (1 << op.targets[1]);
                self.kernel_generic(tmask, &offs, |i, j| m[(i, j)], cmask, cval);
            }
            GateKind::Dense(m) => {
                let offs = local_offsets(&op.targets);
                let tmask = op.targets.iter().fold(0, |acc, q| acc | (1 << q));
                self.kernel_generic(tmask, &offs, |i, j| m[(i, j)], cmask, cval);
            }
            GateKind::ZeroPhase(phi) => {
                let tmask = op.targets.iter().fold(0, |acc, q| acc | (1 << q));
                let ph = cis(*phi);
                for (i, a) in self.amplitudes.iter_mut().enumerate() {
                    if i & tmask == 0 && i & cmask == cval {
                        *a *= ph;
                    }
                }
            }
            GateKind::UniformlyControlled(blocks) => {
                let t = op.targets[0];
                let sel = &op.targets[1..];
                let bit = 1usize << t;
                for i in 0..self.amplitudes.len() {
                    if i & bit != 0 || i & cmask != cval {
                        continue;
                    }
                    let s = sel
                        .iter()
                        .enumerate()
                        .fold(0usize, |acc, (p, q)| acc | (((i >> q) & 1) << p));
                    let b = &blocks[s];
                    let a0 = self.amplitudes[i];
                    let a1 = self.amplitudes[i | bit];
                    self.amplitudes[i] = b[(0, 0)] * a0 + b[(0, 1)] * a1;
                    self.amplitudes[i | bit] = b[(1, 0)] * a0 + b[(1, 1)] * a1;
                }
            }
        }
        Ok(())
    }

    fn kernel_single(&mut self, t: usize, m: &Mat2, cmask: usize, cval: usize) {
        let bit = 1usize << t;
        let (m00, m01, m10, m11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        for i in 0..self.amplitudes.len() {
            if i & bit != 0 || i & cmask != cval {
                continue;
            }
            let a0 = self.amplitudes[i];
            let a1 = self.amplitudes[i | bit];
            self.amplitudes[i] = m00 * a0 + m01 * a1;
            self.amplitudes[i | bit] = m10 * a0 + m11 * a1;
        }
    }

    fn kernel_generic(
        &mut self,
        tmask: usize,
        offs: &[usize],
        m: impl Fn(usize, usize) -> C64,
        cmask: usize,
        cval: usize,
    ) {
        let d = offs.len();
        let mut buf = vec![ZERO; d];
        // Row-major copy so the inner loop does not go through the closure.
        let mat: Vec<C64> = (0..d * d).map(|k| m(k / d, k % d)).collect();
        for base in 0..self.amplitudes.len() {
            if base & tmask != 0 || base & cmask != cval {
                continue;
            }
            for (l, off) in offs.iter().enumerate() {
                buf[l] = self.amplitudes[base | off];
            }
            for (r, off) in offs.iter().enumerate() {
                let row = &mat[r * d..(r + 1) * d];
                let mut acc = ZERO;
                for (x, y) in row.iter().zip(&buf) {
                    acc += x * y;
                }
                self.amplitudes[base | off] = acc;
            }
        }
    }

    /// Applies a unitary matrix to the listed qubits (first listed qubit is
    /// the most significant bit of the matrix index).
    pub fn apply_dense(&mut self, operator: &CMat, qubits: &[usize]) -> Result<()> {
        let op = GateOp::dense(qubits.to_vec(), operator.clone(), "dense")?;
        self.apply_gate(&op)
    }

    /// Oracle path for non-unitary operators: applies the matrix, returns the
    /// squared norm before renormalisation and leaves the state normalised.
    pub fn apply_dense_nonunitary(&mut self, operator: &CMat, qubits: &[usize]) -> Result<f64> {
        let d = 1usize << qubits.len();
        if operator.shape() != (d, d) {
            return domain(format!(
                "operator of shape {:?} does not act on {} qubits",
                operator.shape(),
                qubits.len()
            ));
        }
        let op = GateOp {
            kind: GateKind::Dense(operator.clone()),
            targets: qubits.to_vec(),
            controls: Vec::new(),
            label: "dense-nonunitary".into(),
        };
        self.apply_gate(&op)?;
        self.normalize()
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.num_qubits() != self.num_qubits {
            return domain(format!(
                "circuit on {} qubits applied to {}-qubit state",
                circuit.num_qubits(),
                self.num_qubits
            ));
        }
        for op in circuit.ops() {
            self.apply_gate(op)?;
        }
        if circuit.global_phase() != 0.0 {
            self.scale(cis(circuit.global_phase()));
        }
        Ok(())
    }

    /// Squared norm of the component with all `ancillas` in `|0⟩`.
    pub fn zero_branch_probability(&self, ancillas: &[usize]) -> Result<f64> {
        let mask = self.ancilla_mask(ancillas)?;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    fn ancilla_mask(&self, ancillas: &[usize]) -> Result<usize> {
        if ancillas.is_empty() {
            return domain("post-selection needs at least one ancilla");
        }
        let mut mask = 0usize;
        for &q in ancillas {
            if q >= self.num_qubits {
                return domain(format!(
                    "ancilla {q} out of range for {} qubits",
                    self.num_qubits
                ));
            }
            if mask & (1 << q) != 0 {
                return domain(format!("ancilla {q} listed twice"));
            }
            mask |= 1 << q;
        }
        if mask.count_ones() as usize == self.num_qubits {
            return domain("post-selection would leave an empty register");
        }
        Ok(mask)
    }

    /// Projects the ancillas onto `|0…0⟩`, drops them, and returns the
    /// normalised remaining state with the projection probability. The
    /// surviving qubits keep their relative order.
    pub fn post_select_zero(&self, ancillas: &[usize]) -> Result<(StateVector, f64)> {
        let mask = self.ancilla_mask(ancillas)?;
        let keep: Vec<usize> = (0..self.num_qubits)
            .filter(|q| mask & (1 << q) == 0)
            .collect();
        let mut out = vec![ZERO; 1 << keep.len()];
        let mut p = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if i & mask != 0 {
                continue;
            }
            let j = keep
                .iter()
                .enumerate()
                .fold(0usize, |acc, (pos, q)| acc | (((i >> q) & 1) << pos));
            out[j] = *a;
            p += a.norm_sqr();
        }
        if p < 1e-300 {
            return Err(Error::ImpossibleOutcome(format!(
                "ancillas {ancillas:?} have zero probability of reading |0⟩"
            )));
        }
        let s = 1.0 / p.sqrt();
        for a in &mut out {
            *a *= s;
        }
        Ok((
            StateVector {
                num_qubits: keep.len(),
                amplitudes: out,
            },
            p,
        ))
    }

    /// Probability of each value of the listed qubits (`qubits[0]` is the
    /// least significant bit of the outcome index).
    pub fn marginal_distribution(&self, qubits: &[usize]) -> Vec<f64> {
        let mut dist = vec![0.0; 1 << qubits.len()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let k = qubits
                .iter()
                .enumerate()
                .fold(0usize, |acc, (pos, q)| acc | (((i >> q) & 1) << pos));
            dist[k] += a.norm_sqr();
        }
        dist
    }

    /// Projects the listed qubits onto the value `outcome` (same bit order
    /// as [`marginal_distribution`](Self::marginal_distribution)), drops them
    /// and returns the normalised remainder with its probability.
    pub fn post_select_value(
        &self,
        qubits: &[usize],
        outcome: usize,
    ) -> Result<(StateVector, f64)> {
        let mut flipped = self.clone();
        for (pos, &q) in qubits.iter().enumerate() {
            if (outcome >> pos) & 1 == 1 {
                flipped.apply_gate(&GateOp::single(q, crate::linalg::pauli_x(), "x")?)?;
            }
        }
        flipped.post_select_zero(qubits)
    }
}

/// Greedy ASAP layering: each gate lands one layer after the latest layer
/// used by any of its qubits.
#[derive(Clone, Debug)]
pub struct DepthCounter {
    frontier: Vec<usize>,
    depth: usize,
    ops: u64,
    cnots: u64,
}

impl DepthCounter {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            frontier: vec![0; num_qubits],
            depth: 0,
            ops: 0,
            cnots: 0,
        }
    }

    pub fn add_qubits(&mut self, qubits: impl IntoIterator<Item = usize> + Clone) {
        let layer = qubits
            .clone()
            .into_iter()
            .map(|q| self.frontier[q])
            .max()
            .unwrap_or(0)
            + 1;
        for q in qubits {
            self.frontier[q] = layer;
        }
        self.depth = self.depth.max(layer);
        self.ops += 1;
    }

    pub fn add_op(&mut self, op: &GateOp) {
        let qs: Vec<usize> = op.qubits().collect();
        self.add_qubits(qs.iter().copied());
        if op.is_cnot() {
            self.cnots += 1;
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn op_count(&self) -> u64 {
        self.ops
    }

    pub fn cnot_count(&self) -> u64 {
        self.cnots
    }
}

/// Ordered gate list with a tracked global phase and named event counters
/// (used to instrument query counts such as controlled-evolution blocks).
#[derive(Clone, Debug)]
pub struct Circuit {
    num_qubits: usize,
    ops: Vec<GateOp>,
    global_phase: f64,
    counters: BTreeMap<String, u64>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            ops: Vec::new(),
            global_phase: 0.0,
            counters: BTreeMap::new(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn global_phase(&self) -> f64 {
        self.global_phase
    }

    pub fn add_global_phase(&mut self, phi: f64) {
        self.global_phase += phi;
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        op.validate(self.num_qubits)?;
        self.ops.push(op);
        Ok(())
    }

    /// Appends every gate of `other`, its global phase and its counters.
    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.num_qubits > self.num_qubits {
            return domain(format!(
                "cannot append a {}-qubit circuit to a {}-qubit one",
                other.num_qubits, self.num_qubits
            ));
        }
        self.ops.extend(other.ops.iter().cloned());
        self.global_phase += other.global_phase;
        for (k, v) in &other.counters {
            *self.counters.entry(k.clone()).or_insert(0) += v;
        }
        Ok(())
    }

    pub fn bump(&mut self, counter: &str, by: u64) {
        *self.counters.entry(counter.to_string()).or_insert(0) += by;
    }

    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub fn counters(&self) -> &BTreeMap<String, u64> {
        &self.counters
    }

    pub fn depth(&self) -> usize {
        let mut dc = DepthCounter::new(self.num_qubits);
        for op in &self.ops {
            dc.add_op(op);
        }
        dc.depth()
    }

    pub fn cnot_count(&self) -> usize {
        self.ops.iter().filter(|op| op.is_cnot()).count()
    }

    pub fn count_label(&self, label: &str) -> usize {
        self.ops.iter().filter(|op| op.label == label).count()
    }

    pub fn inverse(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            ops: self.ops.iter().rev().map(GateOp::inverse).collect(),
            global_phase: -self.global_phase,
            counters: self.counters.clone(),
        }
    }

    /// Dense unitary of the whole circuit (including the global phase).
    pub fn dense_matrix(&self) -> Result<CMat> {
        if self.num_qubits > DENSE_CIRCUIT_LIMIT {
            return Err(Error::Resource(format!(
                "dense matrix of a {}-qubit circuit (limit {DENSE_CIRCUIT_LIMIT})",
                self.num_qubits
            )));
        }
        let dim = 1usize << self.num_qubits;
        let mut m = CMat::zeros(dim, dim);
        for col in 0..dim {
            let mut s = StateVector::new_basis_state(self.num_qubits, col)?;
            s.apply_circuit(self)?;
            for (row, a) in s.amplitudes().iter().enumerate() {
                m[(row, col)] = *a;
            }
        }
        Ok(m)
    }
}
