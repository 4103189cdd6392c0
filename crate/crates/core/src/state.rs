//! N-photon two-mode states as permutation-invariant density matrices.
//!
//! Each photon carries a two-dimensional waveguide label, so an
//! N-photon state lives on the 2^N tensor space. Click detectors never
//! reveal which photon fired, so only the permutation-invariant part
//! of the density matrix is observable; that sector has exactly
//! S = (N+3)!/(N!·3!) real parameters. This module fixes a concrete
//! orthonormal operator basis for it (symmetrized Pauli strings),
//! provides the parameter-vector round trip, reference states, the
//! bridge to the (N+1)-dimensional two-mode Fock space, and the
//! Uhlmann fidelity used to score reconstructions.

use std::collections::BTreeSet;

use itertools::Itertools;
use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64 as C64;
use num_integer::binomial;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper limit on the photon number.
pub const DEFAULT_MAX_PHOTONS: usize = 4;

/// Hard ceiling beyond which the dense-tensor representation is
/// impractical (dimensions grow as 2^N, basis construction as 16^N).
pub const HARD_MAX_PHOTONS: usize = 6;

/// Validated photon number N ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "usize", try_from = "usize")]
pub struct PhotonNumber(usize);

impl PhotonNumber {
    /// Photon number within the default limit of 4.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_limit(n, DEFAULT_MAX_PHOTONS)
    }

    /// Photon number with a caller-chosen limit (capped at 6, where the
    /// dense representation stops being sensible).
    pub fn with_limit(n: usize, n_max: usize) -> Result<Self> {
        let cap = n_max.min(HARD_MAX_PHOTONS);
        if n == 0 || n > cap {
            return Err(Error::InvalidParameter(format!(
                "photon number must be in 1..={cap}, got {n}"
            )));
        }
        Ok(PhotonNumber(n))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Dimension 2^N of the tensor space.
    pub fn dim(self) -> usize {
        1 << self.0
    }

    /// Dimension N+1 of the two-mode Fock space at fixed total N.
    pub fn fock_dim(self) -> usize {
        self.0 + 1
    }
}

impl From<PhotonNumber> for usize {
    fn from(n: PhotonNumber) -> usize {
        n.0
    }
}

impl TryFrom<usize> for PhotonNumber {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        PhotonNumber::with_limit(n, HARD_MAX_PHOTONS)
    }
}

impl std::fmt::Display for PhotonNumber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of real parameters S = (N+3)!/(N!·3!) of a permutation-
/// invariant N-photon density matrix.
pub fn dim_params(n: PhotonNumber) -> usize {
    binomial(n.get() + 3, 3)
}

fn pauli(letter: u8) -> Matrix2<C64> {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    match letter {
        0 => Matrix2::new(one, zero, zero, one),
        1 => Matrix2::new(zero, one, one, zero),
        2 => Matrix2::new(zero, -C64::i(), C64::i(), zero),
        3 => Matrix2::new(one, zero, zero, -one),
        _ => unreachable!("Pauli letters are 0..=3"),
    }
}

fn pauli_dyn(letter: u8) -> DMatrix<C64> {
    let p = pauli(letter);
    DMatrix::from_fn(2, 2, |i, j| p[(i, j)])
}

fn kron_string(letters: &[u8]) -> DMatrix<C64> {
    let mut m = DMatrix::<C64>::identity(1, 1);
    for &l in letters {
        m = m.kronecker(&pauli_dyn(l));
    }
    m
}

/// Orthonormal basis of the permutation-invariant Hermitian operators:
/// one operator per multiset of N Pauli letters, each the sum over
/// distinct letter orderings divided by √(k_s·2^N).
#[derive(Debug, Clone)]
pub struct SymPauliBasis {
    n: PhotonNumber,
    ops: Vec<DMatrix<C64>>,
    strings: Vec<Vec<Vec<u8>>>,
    norms: Vec<f64>,
}

impl SymPauliBasis {
    pub fn new(n: PhotonNumber) -> Self {
        let len = n.get();
        let mut ops = Vec::new();
        let mut strings = Vec::new();
        let mut norms = Vec::new();
        for multiset in (0u8..4).combinations_with_replacement(len) {
            // Distinct orderings of the multiset, in a deterministic order.
            let distinct: BTreeSet<Vec<u8>> =
                multiset.iter().copied().permutations(len).map(|p| p.to_vec()).collect();
            let norm = ((distinct.len() * n.dim()) as f64).sqrt();
            let mut op = DMatrix::<C64>::zeros(n.dim(), n.dim());
            for word in &distinct {
                op += kron_string(word);
            }
            op /= C64::new(norm, 0.0);
            ops.push(op);
            strings.push(distinct.into_iter().collect());
            norms.push(norm);
        }
        SymPauliBasis { n, ops, strings, norms }
    }

    pub fn photons(&self) -> PhotonNumber {
        self.n
    }

    /// Number of basis operators, S.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ops(&self) -> &[DMatrix<C64>] {
        &self.ops
    }

    pub fn op(&self, s: usize) -> &DMatrix<C64> {
        &self.ops[s]
    }

    /// Distinct Pauli-letter orderings making up E_s (letters 0..=3 for
    /// I, σx, σy, σz).
    pub fn strings(&self, s: usize) -> &[Vec<u8>] {
        &self.strings[s]
    }

    /// Normalization √(k_s·2^N) dividing the string sum in E_s.
    pub fn norm(&self, s: usize) -> f64 {
        self.norms[s]
    }
}

/// Real expansion coefficients r_s = Tr(E_s ρ) of a permutation-
/// invariant operator in the symmetrized-Pauli basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    n: PhotonNumber,
    r: DVector<f64>,
}

impl ParamVector {
    pub fn new(n: PhotonNumber, r: DVector<f64>) -> Result<Self> {
        let s = dim_params(n);
        if r.len() != s {
            return Err(Error::DimensionMismatch { expected: s, got: r.len() });
        }
        Ok(ParamVector { n, r })
    }

    pub fn photons(&self) -> PhotonNumber {
        self.n
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Write rows `s,r_s` (with header) to a CSV writer.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "r_s"])?;
        for (s, v) in self.r.iter().enumerate() {
            w.write_record([s.to_string(), format!("{v:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a `s,r_s` CSV produced by [`ParamVector::write_csv`].
    pub fn read_csv<R: std::io::Read>(n: PhotonNumber, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut vals = vec![f64::NAN; dim_params(n)];
        let mut seen = vec![false; vals.len()];
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!(
                    "parameter CSV rows must be `s,r_s`, got {} fields",
                    rec.len()
                )));
            }
            let s: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad parameter index {:?}", &rec[0])))?;
            if s >= vals.len() {
                return Err(Error::Parse(format!(
                    "parameter index {s} out of range for N={n} (S={})",
                    vals.len()
                )));
            }
            vals[s] = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad parameter value {:?}", &rec[1])))?;
            seen[s] = true;
        }
        if let Some(s) = seen.iter().position(|v| !v) {
            return Err(Error::Parse(format!("parameter CSV is missing index {s}")));
        }
        ParamVector::new(n, DVector::from_vec(vals))
    }
}

/// Tensor index with photon j's waveguide bit replaced by that of
/// photon perm[j]; photon 0 sits in the most significant bit.
fn permuted_index(i: usize, perm: &[usize]) -> usize {
    let n = perm.len();
    let mut out = 0;
    for (j, &p) in perm.iter().enumerate() {
        let bit = (i >> (n - 1 - p)) & 1;
        out |= bit << (n - 1 - j);
    }
    out
}

/// Project a Hermitian operator onto its permutation-invariant part:
/// (1/N!) Σ_P P·X·P†. Idempotent; preserves trace and positivity.
pub fn twirl(n: PhotonNumber, x: &DMatrix<C64>) -> DMatrix<C64> {
    let dim = n.dim();
    assert_eq!(x.nrows(), dim, "operator size must match photon number");
    assert_eq!(x.ncols(), dim, "operator size must match photon number");
    let mut acc = DMatrix::<C64>::zeros(dim, dim);
    let mut count = 0usize;
    for perm in (0..n.get()).permutations(n.get()) {
        for i in 0..dim {
            let pi = permuted_index(i, &perm);
            for j in 0..dim {
                acc[(i, j)] += x[(pi, permuted_index(j, &perm))];
            }
        }
        count += 1;
    }
    acc / C64::new(count as f64, 0.0)
}

/// Permutation-invariant N-photon density matrix with trace μ ∈ (0,1]
/// (μ < 1 models overall transmission loss).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DensityMatrixJson", try_from = "DensityMatrixJson")]
pub struct DensityMatrix {
    n: PhotonNumber,
    rho: DMatrix<C64>,
    mu: f64,
}

impl DensityMatrix {
    /// Wrap and fully validate a candidate density matrix: Hermitian,
    /// positive semidefinite (to −1e-9), trace in (0,1], and invariant
    /// under every photon permutation.
    pub fn new(n: PhotonNumber, rho: DMatrix<C64>) -> Result<Self> {
        let dim = n.dim();
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: rho.nrows() });
        }
        let herm_dev = (&rho - rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm_dev > 1e-10 {
            return Err(Error::InvalidState(format!(
                "density matrix is not Hermitian (deviation {herm_dev:.2e})"
            )));
        }
        let trace = rho.trace();
        if trace.im.abs() > 1e-10 {
            return Err(Error::InvalidState("density matrix trace is not real".into()));
        }
        let mu = trace.re;
        if !(mu > 0.0 && mu <= 1.0 + 1e-9) {
            return Err(Error::InvalidState(format!(
                "density matrix trace must lie in (0, 1], got {mu}"
            )));
        }
        let herm = (&rho + rho.adjoint()) / C64::new(2.0, 0.0);
        let min_eig =
            SymmetricEigen::new(herm).eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < -1e-9 {
            return Err(Error::InvalidState(format!(
                "density matrix has negative eigenvalue {min_eig:.2e}"
            )));
        }
        let twirl_dev = (twirl(n, &rho) - &rho).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if twirl_dev > 1e-10 {
            return Err(Error::InvalidState(format!(
                "density matrix is not permutation-invariant (deviation {twirl_dev:.2e})"
            )));
        }
        Ok(DensityMatrix { n, rho, mu: mu.min(1.0) })
    }

    /// Wrap a matrix that is known-valid by construction (crate-internal
    /// fast path; still derives μ from the trace).
    pub(crate) fn from_invariant_parts(n: PhotonNumber, rho: DMatrix<C64>) -> Self {
        let mu = rho.trace().re;
        DensityMatrix { n, rho, mu }
    }

    pub fn photons(&self) -> PhotonNumber {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    /// Overall trace μ (1 for lossless states).
    pub fn trace_scale(&self) -> f64 {
        self.mu
    }

    /// Copy rescaled to trace μ (models overall transmission loss).
    pub fn with_trace_scale(&self, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "trace scale must lie in (0, 1], got {mu}"
            )));
        }
        let scale = C64::new(mu / self.mu, 0.0);
        Ok(DensityMatrix { n: self.n, rho: &self.rho * scale, mu })
    }

    /// Trace-normalized copy.
    pub fn normalized(&self) -> Self {
        DensityMatrix { n: self.n, rho: &self.rho / C64::new(self.mu, 0.0), mu: 1.0 }
    }

    /// Purity Tr(ρ²)/μ² of the trace-normalized state.
    pub fn purity(&self) -> f64 {
        let norm = self.rho.iter().map(|c| c.norm_sqr()).sum::<f64>();
        norm / (self.mu * self.mu)
    }

    /// Random permutation-invariant mixed state (Wishart then twirl).
    pub fn random<R: rand::Rng + ?Sized>(n: PhotonNumber, rng: &mut R) -> Self {
        let dim = n.dim();
        let g = DMatrix::<C64>::from_fn(dim, dim, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let w = &g * g.adjoint();
        let t = twirl(n, &w);
        let trace = t.trace().re;
        DensityMatrix::from_invariant_parts(n, t / C64::new(trace, 0.0))
    }
}

#[derive(Serialize, Deserialize, Clone)]
struct DensityMatrixJson {
    #[serde(rename = "N")]
    n: usize,
    mu: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<DensityMatrix> for DensityMatrixJson {
    fn from(d: DensityMatrix) -> Self {
        let dim = d.n.dim();
        let mut re = Vec::with_capacity(dim * dim);
        let mut im = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                re.push(d.rho[(i, j)].re);
                im.push(d.rho[(i, j)].im);
            }
        }
        DensityMatrixJson { n: d.n.get(), mu: d.mu, re, im }
    }
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = Error;

    fn try_from(j: DensityMatrixJson) -> Result<Self> {
        let n = PhotonNumber::with_limit(j.n, HARD_MAX_PHOTONS)?;
        let dim = n.dim();
        if j.re.len() != dim * dim || j.im.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: j.re.len() });
        }
        let rho = DMatrix::from_fn(dim, dim, |i, k| C64::new(j.re[i * dim + k], j.im[i * dim + k]));
        let d = DensityMatrix::new(n, rho)?;
        if (d.mu - j.mu).abs() > 1e-9 {
            return Err(Error::InvalidState(format!(
                "stored trace scale {} disagrees with the matrix trace {}",
                j.mu, d.mu
            )));
        }
        Ok(d)
    }
}

impl DensityMatrix {
    /// Write the state as JSON: photon number, trace scale, and the
    /// dense matrix split into row-major real/imaginary parts.
    pub fn write_json<W: std::io::Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &DensityMatrixJson::from(self.clone()))?;
        Ok(())
    }

    /// Read a state written by [`DensityMatrix::write_json`].
    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self> {
        let j: DensityMatrixJson = serde_json::from_reader(input)?;
        j.try_into()
    }
}

/// Expand a parameter vector: ρ = Σ_s r_s E_s. Linear only — the
/// result is Hermitian and permutation-invariant by construction but
/// positivity is NOT enforced here; wrap with [`DensityMatrix::new`]
/// to validate.
pub fn params_to_matrix(r: &ParamVector, basis: &SymPauliBasis) -> Result<DMatrix<C64>> {
    if r.photons() != basis.photons() {
        return Err(Error::DimensionMismatch {
            expected: dim_params(basis.photons()),
            got: r.len(),
        });
    }
    let dim = basis.photons().dim();
    let mut rho = DMatrix::<C64>::zeros(dim, dim);
    for (s, op) in basis.ops().iter().enumerate() {
        rho += op * C64::new(r.values()[s], 0.0);
    }
    Ok(rho)
}

/// Parameter expansion wrapped as a validated density matrix.
pub fn params_to_density(r: &ParamVector, basis: &SymPauliBasis) -> Result<DensityMatrix> {
    DensityMatrix::new(basis.photons(), params_to_matrix(r, basis)?)
}

/// Project onto the basis: r_s = Tr(E_s ρ). Exact inverse of
/// [`params_to_density`] for permutation-invariant input.
pub fn density_to_params(rho: &DensityMatrix, basis: &SymPauliBasis) -> Result<ParamVector> {
    if rho.photons() != basis.photons() {
        return Err(Error::DimensionMismatch {
            expected: basis.photons().dim(),
            got: rho.photons().dim(),
        });
    }
    let r = DVector::from_iterator(
        basis.len(),
        basis.ops().iter().map(|op| (op * rho.matrix()).trace().re),
    );
    ParamVector::new(rho.photons(), r)
}

fn embed_pure(n: PhotonNumber, psi: DVector<C64>) -> DensityMatrix {
    let rho = &psi * psi.adjoint();
    DensityMatrix::from_invariant_parts(n, rho)
}

/// Single-photon pure state c1|wg1⟩ + c2|wg2⟩.
pub fn make_single(c1: C64, c2: C64) -> Result<DensityMatrix> {
    let norm = c1.norm_sqr() + c2.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "amplitudes must satisfy |c1|^2 + |c2|^2 = 1, got {norm}"
        )));
    }
    let n = PhotonNumber::new(1)?;
    Ok(embed_pure(n, DVector::from_vec(vec![c1, c2])))
}

/// N00N state (|N,0⟩ + |0,N⟩)/√2 embedded in the tensor space.
pub fn make_noon(n: PhotonNumber) -> DensityMatrix {
    let dim = n.dim();
    let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut psi = DVector::<C64>::zeros(dim);
    psi[0] = amp;
    psi[dim - 1] = amp;
    embed_pure(n, psi)
}

/// Product state (c1|wg1⟩ + c2|wg2⟩)^⊗N: all N photons in the same
/// single-photon state.
pub fn make_product(c1: C64, c2: C64, n: PhotonNumber) -> Result<DensityMatrix> {
    let norm = c1.norm_sqr() + c2.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "amplitudes must satisfy |c1|^2 + |c2|^2 = 1, got {norm}"
        )));
    }
    let len = n.get();
    let psi = DVector::from_fn(n.dim(), |i, _| {
        let mut a = C64::new(1.0, 0.0);
        for j in 0..len {
            a *= if (i >> (len - 1 - j)) & 1 == 0 { c1 } else { c2 };
        }
        a
    });
    Ok(embed_pure(n, psi))
}

/// Isometry V from the two-mode Fock space span{|N,0⟩, |N−1,1⟩, …,
/// |0,N⟩} (column k ↔ k photons in waveguide 2) into the symmetric
/// subspace of the tensor space: V†V = I_{N+1}.
pub fn fock_bridge(n: PhotonNumber) -> DMatrix<C64> {
    let dim = n.dim();
    let cols = n.fock_dim();
    DMatrix::from_fn(dim, cols, |i, k| {
        if (i as u32).count_ones() as usize == k {
            C64::new(1.0 / (binomial(n.get(), k) as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub(crate) fn psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let herm = (m + m.adjoint()) / C64::new(2.0, 0.0);
    let eig = SymmetricEigen::new(herm);
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::new(l.max(0.0).sqrt(), 0.0)),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity F = (Tr √(√ρ₁ ρ₂ √ρ₁))² between trace-normalized
/// copies of the two states. Symmetric, in [0,1], and equal to
/// |⟨ψ₁|ψ₂⟩|² for pure states.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.photons() != b.photons() {
        return Err(Error::DimensionMismatch {
            expected: a.photons().dim(),
            got: b.photons().dim(),
        });
    }
    let ra = a.normalized();
    let rb = b.normalized();
    let s = psd_sqrt(ra.matrix());
    let m = &s * rb.matrix() * &s;
    let herm = (&m + m.adjoint()) / C64::new(2.0, 0.0);
    let root_sum: f64 =
        SymmetricEigen::new(herm).eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}
