//! Detector layouts, coincidence operators, and measurement frames.
//!
//! Each in-line click detector m sits on waveguide q_m at position z_m
//! and effectively projects a single photon onto its analysis state
//! π_m = |ψ_m⟩⟨ψ_m|. An N-fold coincidence across a subset of N
//! distinct detectors measures the symmetrized operator Π_p, and the
//! exact rate is Γ_p = Tr(ρ·Π_p). Stacking Γ over all P = C(M,N)
//! subsets is linear in the state's parameter vector, Γ = B·r; the
//! geometry of B decides whether reconstruction is possible and how
//! noise amplifies. Two independent evaluation routes are kept side by
//! side on purpose: the explicit tensor-space contraction and a
//! second-quantized Fock-space oracle.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use num_integer::binomial;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::coupler::{CouplerParams, Waveguide};
use crate::error::{Error, Result};
use crate::state::{DensityMatrix, PhotonNumber, SymPauliBasis};

/// One in-line detector: a waveguide choice and a position in [0, L).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detector {
    pub waveguide: Waveguide,
    pub z: f64,
}

/// An ordered set of in-line detectors on a fixed coupler.
///
/// Detector indices are stable: m = 0..M in the order given at
/// construction. Positions are wrapped into the fundamental cell
/// [0, L) — the coupler revives after one beat length, so a detector
/// at z + L is physically the detector at z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LayoutJson", try_from = "LayoutJson")]
pub struct DetectorLayout {
    coupler: CouplerParams,
    detectors: Vec<Detector>,
}

impl DetectorLayout {
    /// Layout from an explicit detector list (positions wrap mod L).
    pub fn new(coupler: CouplerParams, detectors: Vec<Detector>) -> Result<Self> {
        if detectors.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one detector".into()));
        }
        let detectors = detectors
            .into_iter()
            .map(|d| {
                if !d.z.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "detector position must be finite, got {}",
                        d.z
                    )));
                }
                Ok(Detector { waveguide: d.waveguide, z: coupler.wrap(d.z) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DetectorLayout { coupler, detectors })
    }

    /// The standard arrangement: M/2 equidistant cross-sections
    /// starting at z1, each carrying one detector per waveguide.
    ///
    /// The transfer matrix hits −identity at L/2, so every analysis
    /// projector repeats with period L/2; the cross-sections are
    /// therefore spread evenly over one observable period, at spacing
    /// (L/2)/(M/2) = L/M. Any other span would duplicate or skip
    /// measurement directions.
    pub fn symmetric(coupler: CouplerParams, m: usize, z1: f64) -> Result<Self> {
        if m < 2 || !m.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "symmetric layout needs an even detector count >= 2, got {m}"
            )));
        }
        let spacing = coupler.revival_length() / m as f64;
        let mut detectors = Vec::with_capacity(m);
        for k in 0..m / 2 {
            let z = z1 + k as f64 * spacing;
            detectors.push(Detector { waveguide: Waveguide::One, z });
            detectors.push(Detector { waveguide: Waveguide::Two, z });
        }
        DetectorLayout::new(coupler, detectors)
    }

    /// Symmetric arrangement with all waveguide-2 detectors shifted
    /// downstream by `dz`; for odd M the last waveguide-2 detector is
    /// dropped. `dz` must lie in [0, spacing) with spacing = L/M̃
    /// (M̃ = M rounded up to even; see [`DetectorLayout::symmetric`]
    /// for why the spacing refers to the observable period L/2).
    pub fn shifted(coupler: CouplerParams, m: usize, dz: f64) -> Result<Self> {
        if m < 4 {
            return Err(Error::InvalidParameter(format!(
                "shifted layout needs at least 4 detectors, got {m}"
            )));
        }
        let m_even = if m.is_multiple_of(2) { m } else { m + 1 };
        let spacing = coupler.revival_length() / m_even as f64;
        if !(0.0..spacing).contains(&dz) {
            return Err(Error::InvalidParameter(format!(
                "shift must lie in [0, {spacing:.6}), got {dz}"
            )));
        }
        let mut detectors = Vec::with_capacity(m);
        for k in 0..m_even / 2 {
            let z = k as f64 * spacing;
            detectors.push(Detector { waveguide: Waveguide::One, z });
            detectors.push(Detector { waveguide: Waveguide::Two, z: z + dz });
        }
        if !m.is_multiple_of(2) {
            // Drop the trailing waveguide-2 detector.
            detectors.remove(detectors.len() - 1);
        }
        DetectorLayout::new(coupler, detectors)
    }

    pub fn coupler(&self) -> &CouplerParams {
        &self.coupler
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    /// Number of detectors M.
    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    /// Rank-1 analysis projector π_m of detector m.
    pub fn projector(&self, m: usize) -> Result<DMatrix<C64>> {
        let d = self.detector(m)?;
        let state = self.coupler.analysis_state(d.waveguide, d.z)?;
        let p = state.projector();
        Ok(DMatrix::from_fn(2, 2, |i, j| p[(i, j)]))
    }

    pub fn detector(&self, m: usize) -> Result<Detector> {
        self.detectors.get(m).copied().ok_or_else(|| {
            Error::InvalidParameter(format!(
                "detector index {m} out of range for M={}",
                self.detectors.len()
            ))
        })
    }

    /// Pauli overlaps t_m = (Tr π_m, Tr(σ_x π_m), Tr(σ_y π_m),
    /// Tr(σ_z π_m)) = (1, n̂_m) of every detector's analysis projector.
    fn pauli_overlaps(&self) -> Result<Vec<[f64; 4]>> {
        self.detectors
            .iter()
            .map(|d| {
                let b = self.coupler.analysis_state(d.waveguide, d.z)?.bloch();
                Ok([1.0, b.x, b.y, b.z])
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize, Clone)]
struct DetectorJson {
    wg: Waveguide,
    z_mm: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct LayoutJson {
    #[serde(rename = "C")]
    c: f64,
    beta: f64,
    detectors: Vec<DetectorJson>,
}

impl From<DetectorLayout> for LayoutJson {
    fn from(l: DetectorLayout) -> Self {
        LayoutJson {
            c: l.coupler.coupling(),
            beta: l.coupler.detuning(),
            detectors: l
                .detectors
                .iter()
                .map(|d| DetectorJson { wg: d.waveguide, z_mm: d.z })
                .collect(),
        }
    }
}

impl TryFrom<LayoutJson> for DetectorLayout {
    type Error = Error;

    fn try_from(j: LayoutJson) -> Result<Self> {
        let coupler = CouplerParams::new(j.c, j.beta)?;
        DetectorLayout::new(
            coupler,
            j.detectors.into_iter().map(|d| Detector { waveguide: d.wg, z: d.z_mm }).collect(),
        )
    }
}

impl DetectorLayout {
    /// Write the layout (coupler constants plus detector list) as JSON.
    pub fn write_json<W: std::io::Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &LayoutJson::from(self.clone()))?;
        Ok(())
    }

    /// Read a layout written by [`DetectorLayout::write_json`].
    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self> {
        let j: LayoutJson = serde_json::from_reader(input)?;
        j.try_into()
    }
}

/// One N-subset of detectors, in the lexicographic enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Combination {
    /// 0-based position p in the enumeration.
    pub index: usize,
    /// Strictly increasing 0-based detector indices.
    pub detectors: Vec<usize>,
}

impl Combination {
    /// Human-facing label with 1-based detector indices, e.g. "1+3+4".
    pub fn label(&self) -> String {
        self.detectors.iter().map(|m| (m + 1).to_string()).join("+")
    }

    fn parse_label(index: usize, label: &str) -> Result<Self> {
        let detectors = label
            .split('+')
            .map(|tok| {
                let v: usize = tok
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad combination label {label:?}")))?;
                if v == 0 {
                    return Err(Error::Parse(format!(
                        "combination labels are 1-based, got 0 in {label:?}"
                    )));
                }
                Ok(v - 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Combination { index, detectors })
    }
}

/// All C(M,N) strictly increasing N-subsets of {0..M}, lexicographic.
pub fn enumerate_combinations(m: usize, n: PhotonNumber) -> Result<Vec<Combination>> {
    let nv = n.get();
    if m < nv {
        return Err(Error::InvalidParameter(format!(
            "need at least N={nv} detectors for N-fold coincidences, got M={m}"
        )));
    }
    Ok((0..m)
        .combinations(nv)
        .enumerate()
        .map(|(index, detectors)| Combination { index, detectors })
        .collect())
}

/// Number of N-fold coincidence channels P = C(M,N).
pub fn combination_count(m: usize, n: PhotonNumber) -> usize {
    binomial(m, n.get())
}

fn factorial(n: usize) -> f64 {
    (1..=n).product::<usize>() as f64
}

/// Symmetrized N-fold coincidence operator of one detector subset:
/// Π_p = Σ over all N! detector-to-slot assignments of ⊗_j π_{m_σ(j)}.
/// Hermitian, positive, permutation-invariant.
pub fn coincidence_operator(
    layout: &DetectorLayout,
    detectors: &[usize],
    n: PhotonNumber,
) -> Result<DMatrix<C64>> {
    if detectors.len() != n.get() {
        return Err(Error::DimensionMismatch { expected: n.get(), got: detectors.len() });
    }
    if !detectors.iter().all_unique() {
        return Err(Error::InvalidParameter(
            "coincidence subsets need distinct detectors (click detectors cannot multi-count)"
                .into(),
        ));
    }
    let projectors = detectors.iter().map(|&m| layout.projector(m)).collect::<Result<Vec<_>>>()?;
    let dim = n.dim();
    let mut op = DMatrix::<C64>::zeros(dim, dim);
    for assignment in (0..projectors.len()).permutations(projectors.len()) {
        let mut term = DMatrix::<C64>::identity(1, 1);
        for &slot in &assignment {
            term = term.kronecker(&projectors[slot]);
        }
        op += term;
    }
    Ok(op)
}

/// Exact or sampled N-fold coincidence data over all P channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVector {
    n: PhotonNumber,
    combos: Vec<Combination>,
    values: CorrelationValues,
}

/// Exact rates or Poisson-sampled counts.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationValues {
    Rates(Vec<f64>),
    Counts(Vec<u64>),
}

impl CorrelationVector {
    pub fn photons(&self) -> PhotonNumber {
        self.n
    }

    pub fn combinations(&self) -> &[Combination] {
        &self.combos
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn values(&self) -> &CorrelationValues {
        &self.values
    }

    pub fn rates(&self) -> Option<&[f64]> {
        match &self.values {
            CorrelationValues::Rates(r) => Some(r),
            CorrelationValues::Counts(_) => None,
        }
    }

    pub fn counts(&self) -> Option<&[u64]> {
        match &self.values {
            CorrelationValues::Counts(c) => Some(c),
            CorrelationValues::Rates(_) => None,
        }
    }

    /// Values as f64 regardless of kind.
    pub fn as_f64(&self) -> Vec<f64> {
        match &self.values {
            CorrelationValues::Rates(r) => r.clone(),
            CorrelationValues::Counts(c) => c.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn from_rates(n: PhotonNumber, combos: Vec<Combination>, rates: Vec<f64>) -> Result<Self> {
        if combos.len() != rates.len() {
            return Err(Error::DimensionMismatch { expected: combos.len(), got: rates.len() });
        }
        Ok(CorrelationVector { n, combos, values: CorrelationValues::Rates(rates) })
    }

    /// Write CSV rows `p,combo,gamma` (1-based p, combos like "1+3").
    /// Exact rates are normalized to ΣΓ = 1 on export; counts are
    /// written verbatim under a `count` header.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match &self.values {
            CorrelationValues::Rates(r) => {
                let total: f64 = r.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Numerical(
                        "cannot normalize an all-zero correlation vector".into(),
                    ));
                }
                w.write_record(["p", "combo", "gamma"])?;
                for (combo, v) in self.combos.iter().zip(r) {
                    w.write_record([
                        (combo.index + 1).to_string(),
                        combo.label(),
                        format!("{:.17e}", v / total),
                    ])?;
                }
            }
            CorrelationValues::Counts(c) => {
                w.write_record(["p", "combo", "count"])?;
                for (combo, v) in self.combos.iter().zip(c) {
                    w.write_record([(combo.index + 1).to_string(), combo.label(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read correlation CSV written by [`CorrelationVector::write_csv`];
    /// the value header decides whether rates or counts come back.
    pub fn read_csv<R: std::io::Read>(n: PhotonNumber, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let kind = headers
            .get(2)
            .ok_or_else(|| Error::Parse("correlation CSV needs 3 columns".into()))?
            .to_string();
        let mut combos = Vec::new();
        let mut rates = Vec::new();
        let mut counts = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse(format!(
                    "correlation CSV rows must be `p,combo,value`, got {} fields",
                    rec.len()
                )));
            }
            let combo = Combination::parse_label(combos.len(), &rec[1])?;
            if combo.detectors.len() != n.get() {
                return Err(Error::Parse(format!(
                    "combination {:?} has {} detectors, expected N={}",
                    &rec[1],
                    combo.detectors.len(),
                    n
                )));
            }
            combos.push(combo);
            match kind.as_str() {
                "gamma" => {
                    rates.push(rec[2].trim().parse().map_err(|_| {
                        Error::Parse(format!("bad correlation value {:?}", &rec[2]))
                    })?)
                }
                "count" => counts.push(
                    rec[2]
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad count value {:?}", &rec[2])))?,
                ),
                other => {
                    return Err(Error::Parse(format!(
                        "correlation CSV value column must be `gamma` or `count`, got {other:?}"
                    )))
                }
            }
        }
        if combos.is_empty() {
            return Err(Error::Parse("correlation CSV has no data rows".into()));
        }
        let values = if kind == "gamma" {
            CorrelationValues::Rates(rates)
        } else {
            CorrelationValues::Counts(counts)
        };
        Ok(CorrelationVector { n, combos, values })
    }
}

/// Exact coincidence rates Γ_p = Tr(ρ·Π_p) for every N-subset of
/// detectors, via the explicit tensor-space contraction.
pub fn gamma_tensor(rho: &DensityMatrix, layout: &DetectorLayout) -> Result<CorrelationVector> {
    let n = rho.photons();
    let combos = enumerate_combinations(layout.len(), n)?;
    let mut rates = Vec::with_capacity(combos.len());
    for combo in &combos {
        let op = coincidence_operator(layout, &combo.detectors, n)?;
        let g = (rho.matrix() * op).trace();
        if g.im.abs() > 1e-10 {
            return Err(Error::Numerical(format!(
                "coincidence rate came out complex ({:.2e} imaginary)",
                g.im
            )));
        }
        if g.re < -1e-10 {
            return Err(Error::Numerical(format!(
                "coincidence rate came out negative ({:.2e})",
                g.re
            )));
        }
        rates.push(g.re);
    }
    CorrelationVector::from_rates(n, combos, rates)
}

/// Annihilator of waveguide `wg` restricted to the k-photon sector,
/// as a k×(k+1) map between the bases {|k−i, i⟩} and {|k−1−i, i⟩}
/// (index i = photons in waveguide 2).
fn sector_annihilator(k: usize, wg: Waveguide) -> DMatrix<C64> {
    DMatrix::from_fn(k, k + 1, |row, col| match wg {
        Waveguide::One if row == col => C64::new(((k - col) as f64).sqrt(), 0.0),
        Waveguide::Two if col == row + 1 => C64::new((col as f64).sqrt(), 0.0),
        _ => C64::new(0.0, 0.0),
    })
}

/// Brute-force second-quantized oracle for one coincidence channel.
///
/// Works directly in the (N+1)-dimensional two-mode Fock basis
/// {|N,0⟩, …, |0,N⟩}: each detector contributes the mode operator
/// b_m = Σ_q conj(T_{q_m,q}(z_m))·â_q, and the normally ordered rate
/// is Tr(ρ·b†_{m₁}⋯b†_{m_N} b_{m_N}⋯b_{m₁}). Entirely independent of
/// the tensor-space route; used to cross-check it.
pub fn gamma_fock_oracle(
    rho_fock: &DMatrix<C64>,
    layout: &DetectorLayout,
    detectors: &[usize],
) -> Result<f64> {
    let nv = detectors.len();
    if nv == 0 {
        return Err(Error::InvalidParameter("need at least one detector index".into()));
    }
    if rho_fock.nrows() != nv + 1 || rho_fock.ncols() != nv + 1 {
        return Err(Error::DimensionMismatch { expected: nv + 1, got: rho_fock.nrows() });
    }
    // Apply b_{m_1} first (sector N -> N-1), then b_{m_2}, ...
    let mut chain = DMatrix::<C64>::identity(nv + 1, nv + 1);
    for (step, &m) in detectors.iter().enumerate() {
        let k = nv - step;
        let d = layout.detector(m)?;
        let t = layout.coupler().transfer_matrix(d.z)?;
        let q = d.waveguide.index();
        let b = sector_annihilator(k, Waveguide::One) * t[(q, 0)].conj()
            + sector_annihilator(k, Waveguide::Two) * t[(q, 1)].conj();
        chain = b * chain;
    }
    let g = (&chain * rho_fock * chain.adjoint())[(0, 0)];
    if g.im.abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "Fock oracle rate came out complex ({:.2e} imaginary)",
            g.im
        )));
    }
    Ok(g.re)
}

/// The measurement frame Γ = B·r: row p holds B_{p,s} = Tr(E_s·Π_p).
#[derive(Debug, Clone)]
pub struct BMatrix {
    matrix: DMatrix<f64>,
    layout: DetectorLayout,
    n: PhotonNumber,
    basis_id: String,
}

impl BMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn layout(&self) -> &DetectorLayout {
        &self.layout
    }

    pub fn photons(&self) -> PhotonNumber {
        self.n
    }

    /// Identifier of the operator basis the columns refer to.
    pub fn basis_id(&self) -> &str {
        &self.basis_id
    }

    /// Number of coincidence channels P (rows).
    pub fn channels(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of state parameters S (columns).
    pub fn params(&self) -> usize {
        self.matrix.ncols()
    }

    /// Singular values, sorted descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> =
            self.matrix.clone().svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Predicted rates B·r for a parameter vector.
    pub fn predict(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != self.params() {
            return Err(Error::DimensionMismatch { expected: self.params(), got: r.len() });
        }
        Ok(&self.matrix * r)
    }
}

/// Assemble B_{p,s} = Tr(E_s·Π_p) for all channels and basis operators.
///
/// Uses the factorized form: every Pauli string in E_s traces against
/// the product state ⊗_j π_{m_j} letter by letter, and the N!
/// assignments in Π_p collapse onto the string sum (the string set of
/// E_s is permutation-closed). Equivalent to contracting the explicit
/// operators — `gamma_tensor` keeps that route alive as a cross-check —
/// but cheap enough to sit inside optimizer loops.
pub fn build_b(layout: &DetectorLayout, n: PhotonNumber, basis: &SymPauliBasis) -> Result<BMatrix> {
    if basis.photons() != n {
        return Err(Error::DimensionMismatch { expected: n.get(), got: basis.photons().get() });
    }
    let combos = enumerate_combinations(layout.len(), n)?;
    let overlaps = layout.pauli_overlaps()?;
    let n_fact = factorial(n.get());
    let mut b = DMatrix::<f64>::zeros(combos.len(), basis.len());
    for combo in &combos {
        for s in 0..basis.len() {
            let mut acc = 0.0;
            for word in basis.strings(s) {
                let mut prod = 1.0;
                for (j, &letter) in word.iter().enumerate() {
                    prod *= overlaps[combo.detectors[j]][letter as usize];
                }
                acc += prod;
            }
            b[(combo.index, s)] = n_fact * acc / basis.norm(s);
        }
    }
    Ok(BMatrix {
        matrix: b,
        layout: layout.clone(),
        n,
        basis_id: format!("sym-pauli-n{}-s{}", n.get(), basis.len()),
    })
}

/// Poisson shot-noise sampler: independent draws with means
/// total_events·Γ_p/ΣΓ. Negative rates are clipped to zero first;
/// fully deterministic under a fixed seed.
pub fn sample_counts(
    gamma: &CorrelationVector,
    total_events: u64,
    seed: u64,
) -> Result<CorrelationVector> {
    let rates = gamma.rates().ok_or_else(|| {
        Error::InvalidParameter("sampling needs exact rates, not already-sampled counts".into())
    })?;
    if total_events == 0 {
        return Err(Error::InvalidParameter("total_events must be positive".into()));
    }
    let clipped: Vec<f64> = rates.iter().map(|&g| g.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter(
            "cannot sample from an all-zero correlation vector".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = clipped
        .iter()
        .map(|&g| {
            let mean = total_events as f64 * g / total;
            if mean <= 0.0 {
                return Ok(0);
            }
            let draw = Poisson::new(mean)
                .map_err(|e| {
                    Error::Numerical(format!("Poisson sampler rejected mean {mean}: {e}"))
                })?
                .sample(&mut rng);
            Ok(draw.round() as u64)
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(CorrelationVector {
        n: gamma.photons(),
        combos: gamma.combinations().to_vec(),
        values: CorrelationValues::Counts(counts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{density_to_params, fock_bridge, make_noon, make_single, twirl};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn n(v: usize) -> PhotonNumber {
        PhotonNumber::new(v).unwrap()
    }

    fn unit_coupler() -> CouplerParams {
        CouplerParams::new(1.0, 0.0).unwrap()
    }

    fn magic_coupler() -> CouplerParams {
        CouplerParams::from_ratio(FRAC_1_SQRT_2).unwrap()
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn symmetric_layout_cross_sections() {
        let p = unit_coupler(); // L = 2*pi, observable period pi
        let layout = DetectorLayout::symmetric(p, 6, 0.0).unwrap();
        assert_eq!(layout.len(), 6);
        let zs: Vec<f64> = layout.detectors().iter().map(|d| d.z).collect();
        let step = std::f64::consts::PI / 3.0;
        let want = [0.0, 0.0, step, step, 2.0 * step, 2.0 * step];
        for (z, w) in zs.iter().zip(want) {
            assert_abs_diff_eq!(*z, w, epsilon = 1e-12);
        }
        for (i, d) in layout.detectors().iter().enumerate() {
            let expect = if i % 2 == 0 { Waveguide::One } else { Waveguide::Two };
            assert_eq!(d.waveguide, expect);
        }
    }

    #[test]
    fn symmetric_cross_sections_tile_the_observable_period() {
        // The M/2 sections sample M/2 distinct, equally spaced analysis
        // directions; going past the projector period would duplicate
        // directions and degrade the frame.
        let p = magic_coupler();
        for m in [6usize, 8, 10, 12] {
            let layout = DetectorLayout::symmetric(p, m, 0.0).unwrap();
            let mut blochs = Vec::new();
            for d in layout.detectors().iter().filter(|d| d.waveguide == Waveguide::One) {
                let b = p.analysis_state(d.waveguide, d.z).unwrap().bloch();
                blochs.push(b);
            }
            for i in 0..blochs.len() {
                for j in 0..i {
                    let dot = blochs[i].x * blochs[j].x
                        + blochs[i].y * blochs[j].y
                        + blochs[i].z * blochs[j].z;
                    assert!(dot < 1.0 - 1e-6, "M={m}: directions {i} and {j} coincide");
                }
            }
        }
    }

    #[test]
    fn minimal_symmetric_layout() {
        let layout = DetectorLayout::symmetric(unit_coupler(), 2, 0.0).unwrap();
        assert_eq!(layout.len(), 2);
        assert!(layout.detectors().iter().all(|d| d.z == 0.0));
    }

    #[test]
    fn symmetric_layout_with_offset() {
        let p = unit_coupler();
        let l = p.revival_length();
        let layout = DetectorLayout::symmetric(p, 4, 0.1 * l).unwrap();
        let zs: Vec<f64> = layout.detectors().iter().map(|d| d.z).collect();
        assert_abs_diff_eq!(zs[0], 0.1 * l, epsilon = 1e-12);
        assert_abs_diff_eq!(zs[2], 0.35 * l, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_layout_rejects_odd_count() {
        assert!(DetectorLayout::symmetric(unit_coupler(), 5, 0.0).is_err());
        assert!(DetectorLayout::symmetric(unit_coupler(), 0, 0.0).is_err());
    }

    #[test]
    fn shifted_layout_zig_zag() {
        let p = unit_coupler();
        let l = p.revival_length();
        let spacing = l / 4.0;
        let layout = DetectorLayout::shifted(p, 4, 0.5 * spacing).unwrap();
        let mut wg1: Vec<f64> = Vec::new();
        let mut wg2: Vec<f64> = Vec::new();
        for d in layout.detectors() {
            match d.waveguide {
                Waveguide::One => wg1.push(d.z),
                Waveguide::Two => wg2.push(d.z),
            }
        }
        assert_abs_diff_eq!(wg1[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wg1[1], 0.25 * l, epsilon = 1e-12);
        assert_abs_diff_eq!(wg2[0], 0.125 * l, epsilon = 1e-12);
        assert_abs_diff_eq!(wg2[1], 0.375 * l, epsilon = 1e-12);
    }

    #[test]
    fn shifted_layout_with_zero_shift_matches_symmetric() {
        let p = magic_coupler();
        let a = DetectorLayout::shifted(p, 6, 0.0).unwrap();
        let b = DetectorLayout::symmetric(p, 6, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn odd_shifted_layout_drops_last_detector() {
        let p = unit_coupler();
        let layout = DetectorLayout::shifted(p, 5, 0.3).unwrap();
        assert_eq!(layout.len(), 5);
        let on_wg1 = layout.detectors().iter().filter(|d| d.waveguide == Waveguide::One).count();
        assert_eq!(on_wg1, 3);
        assert_eq!(layout.len() - on_wg1, 2);
    }

    #[test]
    fn shifted_layout_rejects_bad_shift() {
        let p = unit_coupler();
        let spacing = p.revival_length() / 4.0;
        assert!(DetectorLayout::shifted(p, 4, spacing).is_err());
        assert!(DetectorLayout::shifted(p, 4, -0.1).is_err());
        assert!(DetectorLayout::shifted(p, 3, 0.0).is_err());
    }

    #[test]
    fn combination_enumeration() {
        assert_eq!(enumerate_combinations(6, n(2)).unwrap().len(), 15);
        assert_eq!(combination_count(6, n(2)), 15);
        assert_eq!(enumerate_combinations(8, n(3)).unwrap().len(), 56);
        let singles = enumerate_combinations(4, n(1)).unwrap();
        let flat: Vec<usize> = singles.iter().map(|c| c.detectors[0]).collect();
        assert_eq!(flat, vec![0, 1, 2, 3]);
        assert!(enumerate_combinations(1, n(2)).is_err());
        // Lexicographic order.
        let pairs = enumerate_combinations(4, n(2)).unwrap();
        assert_eq!(pairs[0].detectors, vec![0, 1]);
        assert_eq!(pairs[1].detectors, vec![0, 2]);
        assert_eq!(pairs[5].detectors, vec![2, 3]);
    }

    #[test]
    fn projector_at_origin_selects_waveguide() {
        let layout = DetectorLayout::symmetric(unit_coupler(), 2, 0.0).unwrap();
        let p1 = layout.projector(0).unwrap();
        assert_abs_diff_eq!(p1[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert!(p1[(1, 1)].norm() < 1e-14);
        let p2 = layout.projector(1).unwrap();
        assert!(max_abs(&(&p1 * &p2)) < 1e-14, "opposite-waveguide projectors are orthogonal");
    }

    #[test]
    fn projectors_are_rank_one_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let p = CouplerParams::new(rng.random_range(0.1..2.0), rng.random_range(-1.5..1.5))
                .unwrap();
            let z = rng.random_range(0.0..p.revival_length());
            let wg = if rng.random::<bool>() { Waveguide::One } else { Waveguide::Two };
            let layout = DetectorLayout::new(p, vec![Detector { waveguide: wg, z }]).unwrap();
            let pi = layout.projector(0).unwrap();
            assert_abs_diff_eq!(pi.trace().re, 1.0, epsilon = 1e-12);
            assert!(max_abs(&(&pi * &pi - &pi)) < 1e-12);
        }
    }

    #[test]
    fn coincidence_operator_single_photon_is_projector() {
        let layout = DetectorLayout::symmetric(magic_coupler(), 6, 0.0).unwrap();
        let op = coincidence_operator(&layout, &[3], n(1)).unwrap();
        assert!(max_abs(&(op - layout.projector(3).unwrap())) < 1e-14);
    }

    #[test]
    fn coincidence_operator_two_photons_symmetrizes() {
        let layout = DetectorLayout::symmetric(magic_coupler(), 6, 0.0).unwrap();
        let pa = layout.projector(0).unwrap();
        let pb = layout.projector(3).unwrap();
        let want = pa.kronecker(&pb) + pb.kronecker(&pa);
        let got = coincidence_operator(&layout, &[0, 3], n(2)).unwrap();
        assert!(max_abs(&(got - want)) < 1e-13);
    }

    #[test]
    fn coincidence_operator_properties() {
        let layout = DetectorLayout::symmetric(magic_coupler(), 8, 0.1).unwrap();
        for nv in 1..=3usize {
            let pn = n(nv);
            let op = coincidence_operator(&layout, &(0..nv).collect::<Vec<_>>(), pn).unwrap();
            assert!(max_abs(&(&op - op.adjoint())) < 1e-12, "Hermitian");
            assert!(max_abs(&(twirl(pn, &op) - &op)) < 1e-12, "permutation-invariant");
            // Trace two ways: sum over assignments of rank-1 tensor
            // products, versus N! times the single product's trace.
            assert_abs_diff_eq!(op.trace().re, factorial(nv), epsilon = 1e-10);
        }
    }

    #[test]
    fn coincidence_operator_rejects_repeats() {
        let layout = DetectorLayout::symmetric(magic_coupler(), 6, 0.0).unwrap();
        assert!(coincidence_operator(&layout, &[2, 2], n(2)).is_err());
        assert!(coincidence_operator(&layout, &[0], n(2)).is_err());
    }

    #[test]
    fn gamma_for_single_photon_is_projector_overlap() {
        let half = C64::new(FRAC_1_SQRT_2, 0.0);
        let rho = make_single(half, half).unwrap();
        let layout = DetectorLayout::new(
            unit_coupler(),
            vec![Detector { waveguide: Waveguide::One, z: 0.0 }],
        )
        .unwrap();
        let g = gamma_tensor(&rho, &layout).unwrap();
        assert_abs_diff_eq!(g.rates().unwrap()[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gamma_for_distinguishable_pair_at_origin() {
        // One photon per waveguide, detectors on both waveguides at z=0:
        // the cross-coincidence fires with certainty.
        let pn = n(2);
        let mut raw = DMatrix::<C64>::zeros(4, 4);
        raw[(1, 1)] = C64::new(1.0, 0.0);
        let rho = DensityMatrix::new(pn, twirl(pn, &raw)).unwrap();
        let layout = DetectorLayout::symmetric(unit_coupler(), 2, 0.0).unwrap();
        let g = gamma_tensor(&rho, &layout).unwrap();
        assert_abs_diff_eq!(g.rates().unwrap()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noon_state_has_no_cross_coincidence_at_origin() {
        let rho = make_noon(n(2));
        let layout = DetectorLayout::symmetric(unit_coupler(), 2, 0.0).unwrap();
        let g = gamma_tensor(&rho, &layout).unwrap();
        assert!(g.rates().unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn fock_oracle_single_photon_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let p = CouplerParams::new(rng.random_range(0.1..2.0), rng.random_range(-1.5..1.5))
                .unwrap();
            let z = rng.random_range(0.0..p.revival_length());
            let layout =
                DetectorLayout::new(p, vec![Detector { waveguide: Waveguide::Two, z }]).unwrap();
            // Random pure single-photon state.
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let c1 = C64::new((theta / 2.0).cos(), 0.0);
            let c2 = C64::from_polar((theta / 2.0).sin(), phi);
            let psi = DVector::from_vec(vec![c1, c2]);
            let rho_fock = &psi * psi.adjoint();
            let got = gamma_fock_oracle(&rho_fock, &layout, &[0]).unwrap();

            let a = p.analysis_state(Waveguide::Two, z).unwrap();
            let want = a.amplitudes().dotc(&psi).norm_sqr();
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn fock_oracle_counts_balanced_pair() {
        let layout = DetectorLayout::symmetric(unit_coupler(), 2, 0.0).unwrap();
        let mut rho = DMatrix::<C64>::zeros(3, 3);
        rho[(1, 1)] = C64::new(1.0, 0.0); // |1,1>
        let g = gamma_fock_oracle(&rho, &layout, &[0, 1]).unwrap();
        assert_abs_diff_eq!(g, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_equivalence_on_symmetric_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for nv in 1..=3usize {
            let pn = n(nv);
            let bridge = fock_bridge(pn);
            for trial in 0..30 {
                let c = CouplerParams::new(rng.random_range(0.2..1.5), rng.random_range(-1.0..1.0))
                    .unwrap();
                let m = nv + 3 + (trial % 3);
                let layout = if m % 2 == 0 {
                    DetectorLayout::symmetric(c, m, rng.random_range(0.0..c.revival_length()))
                        .unwrap()
                } else {
                    DetectorLayout::shifted(c, m, rng.random_range(0.0..1e-3)).unwrap()
                };
                // Random density matrix on the (N+1)-dim Fock sector.
                let dim = pn.fock_dim();
                let g = DMatrix::<C64>::from_fn(dim, dim, |_, _| {
                    C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                });
                let w = &g * g.adjoint();
                let rho_fock = &w / C64::new(w.trace().re, 0.0);
                let rho_tensor =
                    DensityMatrix::new(pn, &bridge * &rho_fock * bridge.adjoint()).unwrap();

                let via_tensor = gamma_tensor(&rho_tensor, &layout).unwrap();
                for combo in via_tensor.combinations() {
                    let via_fock = gamma_fock_oracle(&rho_fock, &layout, &combo.detectors).unwrap();
                    assert_abs_diff_eq!(
                        via_tensor.rates().unwrap()[combo.index],
                        via_fock,
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn b_matrix_shape_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let layout = DetectorLayout::symmetric(magic_coupler(), 6, 0.0).unwrap();
        let basis = SymPauliBasis::new(n(2));
        let b = build_b(&layout, n(2), &basis).unwrap();
        assert_eq!(b.channels(), 15);
        assert_eq!(b.params(), 10);
        for _ in 0..20 {
            let rho = DensityMatrix::random(n(2), &mut rng);
            let r = density_to_params(&rho, &basis).unwrap();
            let via_b = b.predict(r.values()).unwrap();
            let direct = gamma_tensor(&rho, &layout).unwrap();
            for (p, &g) in direct.rates().unwrap().iter().enumerate() {
                assert_abs_diff_eq!(via_b[p], g, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn b_matrix_linearity_across_photon_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for nv in 1..=3usize {
            let pn = n(nv);
            let basis = SymPauliBasis::new(pn);
            let layout = DetectorLayout::symmetric(
                CouplerParams::new(1.0, 0.3).unwrap(),
                2 * (nv + 2),
                0.07,
            )
            .unwrap();
            let b = build_b(&layout, pn, &basis).unwrap();
            for _ in 0..10 {
                let rho = DensityMatrix::random(pn, &mut rng);
                let r = density_to_params(&rho, &basis).unwrap();
                let via_b = b.predict(r.values()).unwrap();
                let direct = gamma_tensor(&rho, &layout).unwrap();
                for (p, &g) in direct.rates().unwrap().iter().enumerate() {
                    assert_abs_diff_eq!(via_b[p], g, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn magic_ratio_single_photon_frame_is_tight() {
        let layout = DetectorLayout::symmetric(magic_coupler(), 6, 0.0).unwrap();
        let basis = SymPauliBasis::new(n(1));
        let b = build_b(&layout, n(1), &basis).unwrap();
        let sv = b.singular_values();
        assert_eq!(sv.len(), 4);
        assert_abs_diff_eq!(sv[0], 3f64.sqrt(), epsilon = 1e-10);
        for &s in &sv[1..] {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn resonant_frame_is_rank_deficient() {
        // With beta = 0 the analysis states stay on a great circle and
        // one Bloch direction is never probed.
        let layout =
            DetectorLayout::symmetric(CouplerParams::new(1.0, 0.0).unwrap(), 10, 0.0).unwrap();
        let basis = SymPauliBasis::new(n(1));
        let b = build_b(&layout, n(1), &basis).unwrap();
        let sv = b.singular_values();
        assert!(sv[3] < 1e-12 * sv[0]);
    }

    #[test]
    fn near_minimal_layout_is_degenerate() {
        // M = N+3 symmetric layouts cannot resolve all parameters.
        for (nv, m) in [(1usize, 4usize), (3, 6)] {
            let pn = n(nv);
            let layout = DetectorLayout::symmetric(magic_coupler(), m, 0.0).unwrap();
            let basis = SymPauliBasis::new(pn);
            let b = build_b(&layout, pn, &basis).unwrap();
            let sv = b.singular_values();
            assert!(sv.last().unwrap() / sv[0] < 1e-10, "N={nv}, M={m} should be singular");
        }
    }

    #[test]
    fn positions_wrap_at_revival_length() {
        let p = magic_coupler();
        let l = p.revival_length();
        let a = DetectorLayout::new(
            p,
            vec![
                Detector { waveguide: Waveguide::One, z: 0.3 * l },
                Detector { waveguide: Waveguide::Two, z: 0.3 * l + l },
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(a.detectors()[0].z, a.detectors()[1].z, epsilon = 1e-9);
        let pi0 = a.projector(0).unwrap();
        let pi1 = a.projector(1).unwrap();
        assert!(max_abs(&(&pi0 * &pi1)) < 1e-9, "same z, opposite waveguides");
    }

    #[test]
    fn sampling_is_deterministic_and_respects_zeros() {
        let rho = make_noon(n(2));
        let layout = DetectorLayout::symmetric(magic_coupler(), 6, 0.0).unwrap();
        let gamma = gamma_tensor(&rho, &layout).unwrap();
        let a = sample_counts(&gamma, 100_000, 42).unwrap();
        let b = sample_counts(&gamma, 100_000, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_counts(&gamma, 100_000, 43).unwrap();
        assert_ne!(a, c);

        // A channel with exactly zero rate never fires.
        let z0 = DetectorLayout::symmetric(unit_coupler(), 2, 0.0).unwrap();
        let g0 = gamma_tensor(&rho, &z0).unwrap();
        assert!(g0.rates().unwrap()[0].abs() < 1e-14);
        let counts = sample_counts(&g0, 1_000_000, 7);
        // Single all-zero channel: sampling has nothing to draw.
        assert!(counts.is_err());
    }

    #[test]
    fn sampling_matches_rates_in_the_large_count_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = DensityMatrix::random(n(2), &mut rng);
        let layout = DetectorLayout::symmetric(magic_coupler(), 8, 0.2).unwrap();
        let gamma = gamma_tensor(&rho, &layout).unwrap();
        let total: f64 = gamma.rates().unwrap().iter().sum();
        let counts = sample_counts(&gamma, 10_000_000, 99).unwrap();
        let sum: u64 = counts.counts().unwrap().iter().sum();
        for (p, &c) in counts.counts().unwrap().iter().enumerate() {
            let expected = gamma.rates().unwrap()[p] / total;
            let observed = c as f64 / sum as f64;
            if expected > 1e-3 {
                assert!(
                    (observed - expected).abs() / expected < 1e-2,
                    "channel {p}: observed {observed}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn layout_json_round_trip() {
        let layout =
            DetectorLayout::symmetric(CouplerParams::new(0.0885, 0.0240).unwrap(), 6, 1.0).unwrap();
        let text = serde_json::to_string(&layout).unwrap();
        assert!(text.contains("\"C\":0.0885"));
        assert!(text.contains("\"beta\":0.024"));
        assert!(text.contains("\"wg\":1"));
        assert!(text.contains("\"z_mm\""));
        let back: DetectorLayout = serde_json::from_str(&text).unwrap();
        assert_eq!(back, layout);
    }

    #[test]
    fn correlation_csv_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = DensityMatrix::random(n(2), &mut rng);
        let layout = DetectorLayout::symmetric(magic_coupler(), 6, 0.0).unwrap();
        let gamma = gamma_tensor(&rho, &layout).unwrap();

        let mut buf = Vec::new();
        gamma.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("p,combo,gamma"));
        assert!(text.contains("1+2"));
        let back = CorrelationVector::read_csv(n(2), buf.as_slice()).unwrap();
        // Export normalizes to sum 1; shape and proportions survive.
        let total: f64 = gamma.rates().unwrap().iter().sum();
        for (p, &g) in back.rates().unwrap().iter().enumerate() {
            assert_abs_diff_eq!(g, gamma.rates().unwrap()[p] / total, epsilon = 1e-12);
        }

        let counts = sample_counts(&gamma, 50_000, 5).unwrap();
        let mut buf = Vec::new();
        counts.write_csv(&mut buf).unwrap();
        let back = CorrelationVector::read_csv(n(2), buf.as_slice()).unwrap();
        assert_eq!(back.counts().unwrap(), counts.counts().unwrap());

        assert!(CorrelationVector::read_csv(n(3), buf.as_slice()).is_err());
    }
}
