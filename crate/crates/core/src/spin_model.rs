//! Closed one-dimensional Heisenberg chain with random longitudinal fields,
//! its even/odd bond split, exact spectrum, and initial-state preparation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::linalg::{c64, CMat, Mat4, C64, ONE, ZERO};
use crate::statevector::StateVector;

/// Largest chain for which dense matrices are built.
pub const DENSE_SPIN_LIMIT: usize = 14;
/// Consecutive eigenvalues closer than this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Counter-based splitmix64 stream.
///
/// Each call advances the counter by the golden-ratio increment and returns
/// the finalised (mixed) counter value. The stream depends only on the seed,
/// so it is bit-identical on every platform.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` from the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform draw in `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeisenbergChain {
    pub n: usize,
    pub fields: Vec<f64>,
    pub periodic: bool,
    pub seed: u64,
}

impl HeisenbergChain {
    /// Draws one field per site, in site order, from the seeded stream.
    pub fn build(n: usize, seed: u64, periodic: bool) -> Result<Self> {
        if n < 2 {
            return domain(format!("a chain needs at least 2 spins, got {n}"));
        }
        let mut rng = SplitMix64::new(seed);
        let fields = (0..n).map(|_| rng.next_symmetric()).collect();
        Ok(Self {
            n,
            fields,
            periodic,
            seed,
        })
    }

    pub fn with_fields(fields: Vec<f64>, periodic: bool) -> Result<Self> {
        let n = fields.len();
        if n < 2 {
            return domain(format!("a chain needs at least 2 spins, got {n}"));
        }
        if let Some(h) = fields.iter().find(|h| !h.is_finite() || h.abs() > 1.0) {
            return domain(format!("field {h} outside [-1, 1]"));
        }
        Ok(Self {
            n,
            fields,
            periodic,
            seed: 0,
        })
    }

    /// Nearest-neighbour bonds `(j, j+1)` plus the closing bond `(n-1, 0)`
    /// for periodic chains with at least three sites (0-based sites).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = (0..self.n - 1).map(|j| (j, j + 1)).collect();
        if self.periodic && self.n >= 3 {
            e.push((self.n - 1, 0));
        }
        e
    }

    fn guard(&self) -> Result<()> {
        if self.n > DENSE_SPIN_LIMIT {
            return Err(Error::Resource(format!(
                "dense Hamiltonian for {} spins (limit {DENSE_SPIN_LIMIT})",
                self.n
            )));
        }
        Ok(())
    }

    /// `H = Σ_bonds (XX + YY + ZZ) + Σ_j h_j Z_j` as a real symmetric matrix
    /// (the Hamiltonian has real entries in the computational basis).
    pub fn hamiltonian_real(&self) -> Result<DMatrix<f64>> {
        self.guard()?;
        let dim = 1usize << self.n;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let edges = self.edges();
        for b in 0..dim {
            for &(i, j) in &edges {
                let (bi, bj) = ((b >> i) & 1, (b >> j) & 1);
                if bi == bj {
                    h[(b, b)] += 1.0;
                } else {
                    h[(b, b)] -= 1.0;
                    h[(b ^ (1 << i) ^ (1 << j), b)] += 2.0;
                }
            }
            for (j, hj) in self.fields.iter().enumerate() {
                h[(b, b)] += if (b >> j) & 1 == 0 { *hj } else { -*hj };
            }
        }
        Ok(h)
    }

    pub fn hamiltonian_dense(&self) -> Result<CMat> {
        Ok(self.hamiltonian_real()?.map(|x| c64(x, 0.0)))
    }
}

/// A bond Heisenberg coupling together with the field terms it owns.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitTerm {
    /// `(i, j)`: `i` is the more significant qubit of the 4×4 generator.
    pub sites: (usize, usize),
    pub field_i: f64,
    pub field_j: f64,
}

impl TwoQubitTerm {
    /// `XX + YY + ZZ + h_i Z⊗I + h_j I⊗Z`.
    pub fn generator(&self) -> Mat4 {
        let mut g = Mat4::zeros();
        // Local basis |ab⟩ with a = bit of site i (index 2a + b).
        for a in 0..2 {
            for b in 0..2 {
                let k = 2 * a + b;
                let zi = if a == 0 { 1.0 } else { -1.0 };
                let zj = if b == 0 { 1.0 } else { -1.0 };
                g[(k, k)] = c64(zi * zj + self.field_i * zi + self.field_j * zj, 0.0);
            }
        }
        g[(1, 2)] = c64(2.0, 0.0);
        g[(2, 1)] = c64(2.0, 0.0);
        g
    }

    /// The term embedded in an `n`-qubit register.
    pub fn dense(&self, n: usize) -> CMat {
        embed_two_qubit(&self.generator(), self.sites.0, self.sites.1, n)
    }
}

/// Embeds a 4×4 operator acting on qubits `(i, j)` (`i` most significant)
/// into the full `2^n` space.
pub fn embed_two_qubit(m: &Mat4, i: usize, j: usize, n: usize) -> CMat {
    let dim = 1usize << n;
    let mut out = CMat::zeros(dim, dim);
    for col in 0..dim {
        let lc = 2 * ((col >> i) & 1) + ((col >> j) & 1);
        let rest = col & !(1 << i) & !(1 << j);
        for lr in 0..4 {
            let v = m[(lr, lc)];
            if v == ZERO {
                continue;
            }
            let row = rest | ((lr >> 1) << i) | ((lr & 1) << j);
            out[(row, col)] += v;
        }
    }
    out
}

/// Bond terms partitioned into groups of pairwise-disjoint bonds.
///
/// `groups[0]` holds the bonds starting on even sites, `groups[1]` those
/// starting on odd sites (plus the closing bond for even periodic chains).
/// For odd periodic chains the closing bond overlaps both groups and is
/// placed in a third group of its own.
#[derive(Clone, Debug)]
pub struct TermSplit {
    pub n: usize,
    pub groups: Vec<Vec<TwoQubitTerm>>,
}

impl TermSplit {
    pub fn h1(&self) -> &[TwoQubitTerm] {
        &self.groups[0]
    }

    pub fn h2(&self) -> &[TwoQubitTerm] {
        self.groups.get(1).map(|g| g.as_slice()).unwrap_or(&[])
    }

    pub fn group_dense(&self, g: usize) -> CMat {
        dense_from_terms(self.n, &self.groups[g])
    }

    pub fn all_terms(&self) -> impl Iterator<Item = &TwoQubitTerm> {
        self.groups.iter().flatten()
    }
}

pub fn dense_from_terms(n: usize, terms: &[TwoQubitTerm]) -> CMat {
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    for t in terms {
        m += t.dense(n);
    }
    m
}

pub fn even_odd_split(chain: &HeisenbergChain) -> TermSplit {
    let edges = chain.edges();
    // Each site's field goes to the first bond (in edge order) that touches it.
    let mut owner = vec![usize::MAX; chain.n];
    for (e, &(i, j)) in edges.iter().enumerate() {
        for s in [i, j] {
            if owner[s] == usize::MAX {
                owner[s] = e;
            }
        }
    }
    let mut groups: Vec<Vec<TwoQubitTerm>> = vec![Vec::new(), Vec::new()];
    for (e, &(i, j)) in edges.iter().enumerate() {
        let term = TwoQubitTerm {
            sites: (i, j),
            field_i: if owner[i] == e { chain.fields[i] } else { 0.0 },
            field_j: if owner[j] == e { chain.fields[j] } else { 0.0 },
        };
        let closing = j == 0 && i == chain.n - 1;
        if closing && chain.n % 2 == 1 {
            groups.push(vec![term]);
        } else {
            groups[i % 2].push(term);
        }
    }
    if groups[1].is_empty() && groups.len() == 2 {
        groups.truncate(1);
    }
    TermSplit { n: chain.n, groups }
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: CMat,
    pub gap_min: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub dimension: usize,
    pub ground_energy: f64,
    pub first_excited: f64,
    pub max_energy: f64,
    pub gap: f64,
    pub gap_min: f64,
    pub degenerate: bool,
}

impl Spectrum {
    /// Full eigendecomposition of a real symmetric matrix, ascending.
    pub fn from_real_symmetric(h: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..h.nrows()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let dim = h.nrows();
        let eigenvectors =
            CMat::from_fn(dim, dim, |r, c| c64(eig.eigenvectors[(r, order[c])], 0.0));
        let gap_min = eigenvalues
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        Self {
            eigenvalues,
            eigenvectors,
            gap_min,
            degenerate: gap_min < DEGENERACY_TOL,
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_energy(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// `λ₂ - λ₁`.
    pub fn gap(&self) -> f64 {
        self.eigenvalues[1] - self.eigenvalues[0]
    }

    pub fn spread(&self) -> f64 {
        self.max_energy() - self.ground_energy()
    }

    pub fn eigenvector(&self, i: usize) -> StateVector {
        StateVector::from_amplitudes(self.eigenvectors.column(i).iter().copied().collect())
            .expect("power-of-two dimension")
    }

    pub fn ground_state(&self) -> StateVector {
        self.eigenvector(0)
    }

    /// Expansion coefficients `c_i = ⟨λ_i|ψ⟩`.
    pub fn coefficients(&self, state: &StateVector) -> Result<Vec<C64>> {
        if state.dim() != self.dim() {
            return domain(format!(
                "state of dimension {} against spectrum of dimension {}",
                state.dim(),
                self.dim()
            ));
        }
        let amps = state.amplitudes();
        Ok((0..self.dim())
            .map(|i| {
                self.eigenvectors
                    .column(i)
                    .iter()
                    .zip(amps)
                    .map(|(v, a)| v.conj() * a)
                    .sum()
            })
            .collect())
    }

    /// `Σ_i c_i |λ_i⟩`.
    pub fn state_from_coefficients(&self, c: &[C64]) -> Result<StateVector> {
        if c.len() != self.dim() {
            return domain(format!(
                "{} coefficients for a spectrum of dimension {}",
                c.len(),
                self.dim()
            ));
        }
        let v = &self.eigenvectors * nalgebra::DVector::from_column_slice(c);
        StateVector::from_amplitudes(v.iter().copied().collect())
    }

    /// `Σ_i f(λ_i) |λ_i⟩⟨λ_i|`.
    pub fn operator(&self, f: impl Fn(f64) -> C64) -> CMat {
        let mut scaled = self.eigenvectors.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            let fj = f(*lam);
            for x in scaled.column_mut(j).iter_mut() {
                *x *= fj;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            dimension: self.dim(),
            ground_energy: self.ground_energy(),
            first_excited: self.eigenvalues[1],
            max_energy: self.max_energy(),
            gap: self.gap(),
            gap_min: self.gap_min,
            degenerate: self.degenerate,
        }
    }
}

pub fn diagonalize(chain: &HeisenbergChain) -> Result<Spectrum> {
    Ok(Spectrum::from_real_symmetric(&chain.hamiltonian_real()?))
}

/// Requested eigenstate weights of an input state.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialStateSpec {
    Uniform,
    /// `c_i ∝ exp(-(λ_i - λ₁)² / (2σ²))`.
    Gaussian {
        sigma: f64,
    },
    /// Explicit eigenbasis coefficients (normalised on use).
    Explicit(Vec<C64>),
}

impl InitialStateSpec {
    /// Normalised eigenbasis coefficients.
    pub fn coefficients(&self, spectrum: &Spectrum) -> Result<Vec<C64>> {
        let dim = spectrum.dim();
        let raw: Vec<C64> = match self {
            InitialStateSpec::Uniform => vec![ONE; dim],
            InitialStateSpec::Gaussian { sigma } => {
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return domain(format!("gaussian width must be positive, got {sigma}"));
                }
                let l1 = spectrum.ground_energy();
                spectrum
                    .eigenvalues
                    .iter()
                    .map(|l| c64((-(l - l1).powi(2) / (2.0 * sigma * sigma)).exp(), 0.0))
                    .collect()
            }
            InitialStateSpec::Explicit(c) => {
                if c.len() != dim {
                    return domain(format!("{} coefficients for dimension {dim}", c.len()));
                }
                c.clone()
            }
        };
        let norm2: f64 = raw.iter().map(|x| x.norm_sqr()).sum();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return domain("initial-state weights have zero norm");
        }
        let s = 1.0 / norm2.sqrt();
        Ok(raw.into_iter().map(|x| x * s).collect())
    }

    /// Coefficients with `|c₁| = c1_abs` on the ground state and the
    /// remaining weight spread uniformly over the excited states.
    pub fn with_ground_weight(c1_abs: f64, dim: usize) -> Result<Self> {
        if !(c1_abs > 0.0 && c1_abs <= 1.0) || dim < 2 {
            return domain(format!("ground amplitude {c1_abs} outside (0, 1]"));
        }
        let rest = ((1.0 - c1_abs * c1_abs) / (dim - 1) as f64).sqrt();
        let mut c = vec![c64(rest, 0.0); dim];
        c[0] = c64(c1_abs, 0.0);
        Ok(InitialStateSpec::Explicit(c))
    }
}

pub fn prepare_initial_state(spec: &InitialStateSpec, spectrum: &Spectrum) -> Result<StateVector> {
    spectrum.state_from_coefficients(&spec.coefficients(spectrum)?)
}

/// A chain with its split and spectrum, shared read-only by the engines.
#[derive(Clone, Debug)]
pub struct ModelInstance {
    pub chain: HeisenbergChain,
    pub split: TermSplit,
    pub spectrum: Spectrum,
}

impl ModelInstance {
    pub fn new(chain: HeisenbergChain) -> Result<Self> {
        let spectrum = diagonalize(&chain)?;
        let split = even_odd_split(&chain);
        Ok(Self {
            chain,
            split,
            spectrum,
        })
    }

    pub fn n(&self) -> usize {
        self.chain.n
    }
}
