//! Conditioning of measurement frames and detector-placement design.
//!
//! The linear map Γ = B·r is invertible in principle whenever B has
//! full column rank, but noise amplification is governed by the
//! inverse condition number κ⁻¹ = σ_min/σ_max. This module scores
//! frames, sweeps the design space (detuning, detector count), and
//! searches for good detector positions at the minimal count M = N+3 —
//! a 1-D shift scan for the structured zig-zag family and a
//! multi-start derivative-free search over fully free positions.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupler::{CouplerParams, Waveguide};
use crate::error::{Error, Result};
use crate::measurement::{build_b, combination_count, BMatrix, Detector, DetectorLayout};
use crate::state::{dim_params, PhotonNumber, SymPauliBasis};

/// Detuning-to-coupling ratio β/C = 1/√2 at which symmetric layouts
/// reach the single-photon optimum κ⁻¹ = 1/√3.
pub const OPTIMAL_DETUNING_RATIO: f64 = FRAC_1_SQRT_2;

/// Relative singular-value floor below which a frame counts as
/// rank-deficient (double-precision SVD noise).
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Conditioning of one measurement frame.
#[derive(Debug, Clone, Serialize)]
pub struct ConditioningReport {
    #[serde(rename = "N")]
    pub n: PhotonNumber,
    pub layout: DetectorLayout,
    /// Singular values of B, descending.
    pub singular_values: Vec<f64>,
    /// σ_min/σ_max, with 0 for rank-deficient frames.
    pub kappa_inv: f64,
    /// σ_max/σ_min; `None` when the frame is rank-deficient (κ = ∞).
    pub kappa: Option<f64>,
    pub rank_deficient: bool,
}

/// Singular spectrum of a P×S frame matrix: (descending values,
/// κ⁻¹, rank-deficient flag). Deficiency covers both σ_min below the
/// relative tolerance and the structurally unsolvable case P < S.
pub(crate) fn frame_conditioning(matrix: &DMatrix<f64>) -> Result<(Vec<f64>, f64, bool)> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("frame matrix has non-finite entries".into()));
    }
    let mut sv: Vec<f64> =
        matrix.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let sigma_max = sv[0];
    let sigma_min = *sv.last().expect("non-empty matrix has singular values");
    let deficient = matrix.nrows() < matrix.ncols()
        || sigma_max <= 0.0
        || sigma_min < RANK_TOLERANCE * sigma_max;
    let kappa_inv = if deficient { 0.0 } else { sigma_min / sigma_max };
    Ok((sv, kappa_inv, deficient))
}

/// Score a measurement frame: full SVD, κ⁻¹ = σ_min/σ_max, flagged
/// rank-deficient when σ_min < 1e-12·σ_max or when P < S.
pub fn condition_number(b: &BMatrix) -> Result<ConditioningReport> {
    let (singular_values, kappa_inv, rank_deficient) = frame_conditioning(b.matrix())?;
    Ok(ConditioningReport {
        n: b.photons(),
        layout: b.layout().clone(),
        singular_values,
        kappa_inv,
        kappa: if rank_deficient { None } else { Some(1.0 / kappa_inv) },
        rank_deficient,
    })
}

/// One point of a conditioning sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    /// Swept quantity: β/C for detuning sweeps, M for detector sweeps.
    pub x: f64,
    pub kappa_inv: f64,
    pub singular_values: Vec<f64>,
}

fn score_layout(
    layout: &DetectorLayout,
    n: PhotonNumber,
    basis: &SymPauliBasis,
) -> Result<(f64, Vec<f64>)> {
    let b = build_b(layout, n, basis)?;
    let (sv, kappa_inv, _) = frame_conditioning(b.matrix())?;
    Ok((kappa_inv, sv))
}

/// κ⁻¹ of the symmetric M-detector layout as the detuning ratio β/C
/// scans a grid; z1 is given as a fraction of the revival length
/// (which itself changes with β).
pub fn sweep_beta(
    n: PhotonNumber,
    m: usize,
    ratios: &[f64],
    z1_frac: f64,
) -> Result<Vec<SweepPoint>> {
    let basis = SymPauliBasis::new(n);
    ratios
        .par_iter()
        .map(|&ratio| {
            let coupler = CouplerParams::from_ratio(ratio)?;
            let layout = DetectorLayout::symmetric(coupler, m, z1_frac * coupler.revival_length())?;
            let (kappa_inv, singular_values) = score_layout(&layout, n, &basis)?;
            Ok(SweepPoint { x: ratio, kappa_inv, singular_values })
        })
        .collect()
}

/// κ⁻¹ of symmetric layouts versus detector count at fixed β/C.
pub fn sweep_detectors(
    n: PhotonNumber,
    counts: &[usize],
    beta_over_c: f64,
) -> Result<Vec<SweepPoint>> {
    let basis = SymPauliBasis::new(n);
    let coupler = CouplerParams::from_ratio(beta_over_c)?;
    counts
        .par_iter()
        .map(|&m| {
            let layout = DetectorLayout::symmetric(coupler, m, 0.0)?;
            let (kappa_inv, singular_values) = score_layout(&layout, n, &basis)?;
            Ok(SweepPoint { x: m as f64, kappa_inv, singular_values })
        })
        .collect()
}

/// Result of the 1-D shift optimization at minimal detector count.
#[derive(Debug, Clone, Serialize)]
pub struct DzOptimum {
    /// Detector count M = N+3.
    pub m: usize,
    /// Optimal shift in length units.
    pub dz: f64,
    /// dz normalized to the actual section spacing L/M̃.
    pub frac_spacing: f64,
    /// dz normalized to L/M instead; differs from `frac_spacing` only
    /// for odd M, where both normalizations circulate.
    pub frac_nominal: f64,
    pub kappa_inv: f64,
    pub report: ConditioningReport,
}

/// Golden-section refinement of a unimodal maximum on [a, b].
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Best waveguide-2 shift for the minimal layout M = N+3: a ≥400-point
/// grid scan over [0, spacing) followed by golden-section refinement.
/// Supported for N ∈ {1, 2, 3}; larger N admits no feasible M = N+3
/// frame (see [`optimize_free_positions`]).
pub fn optimize_dz(n: PhotonNumber, beta_over_c: f64) -> Result<DzOptimum> {
    let nv = n.get();
    if nv > 3 {
        return Err(Error::InvalidParameter(format!(
            "shift optimization covers N in 1..=3 (M = N+3 is infeasible beyond), got N={nv}"
        )));
    }
    let m = nv + 3;
    let m_even = if m.is_multiple_of(2) { m } else { m + 1 };
    let coupler = CouplerParams::from_ratio(beta_over_c)?;
    let spacing = coupler.revival_length() / m_even as f64;
    let basis = SymPauliBasis::new(n);
    let score = |dz: f64| -> f64 {
        // Positions inside [0, spacing) by construction; failures
        // cannot occur for valid dz, so map them to a worst score.
        DetectorLayout::shifted(coupler, m, dz)
            .and_then(|layout| score_layout(&layout, n, &basis))
            .map(|(k, _)| k)
            .unwrap_or(0.0)
    };

    const GRID: usize = 512;
    let scores: Vec<(usize, f64)> =
        (0..GRID).into_par_iter().map(|i| (i, score(i as f64 / GRID as f64 * spacing))).collect();
    let (best_i, _) = scores.iter().fold((0usize, f64::NEG_INFINITY), |(bi, bk), &(i, k)| {
        // Ties break toward smaller dz via strict inequality.
        if k > bk {
            (i, k)
        } else {
            (bi, bk)
        }
    });
    let step = spacing / GRID as f64;
    let lo = (best_i as f64 - 1.0).max(0.0) * step;
    let hi = ((best_i + 1) as f64 * step).min(spacing * (1.0 - 1e-12));
    let (dz, kappa_inv) = golden_max(score, lo, hi, 80);

    let layout = DetectorLayout::shifted(coupler, m, dz)?;
    let b = build_b(&layout, n, &basis)?;
    let report = condition_number(&b)?;
    Ok(DzOptimum {
        m,
        dz,
        frac_spacing: dz / spacing,
        frac_nominal: dz * m as f64 / coupler.revival_length(),
        kappa_inv,
        report,
    })
}

/// Result of the free-position multi-start search.
#[derive(Debug, Clone, Serialize)]
pub struct FreeOptimum {
    pub beta_over_c: f64,
    pub restarts: usize,
    /// Index of the restart that produced the winner.
    pub best_restart: usize,
    pub kappa_inv: f64,
    pub report: ConditioningReport,
}

/// SplitMix-style mix of a base seed with a stream index, so parallel
/// substreams stay decorrelated yet fully reproducible.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Downhill-simplex (Nelder–Mead) minimizer; reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5, stopping on function-value spread.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    step: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[dim].1 - simplex[0].1).abs() < 1e-13 {
            break;
        }
        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let reflect: Vec<f64> = centroid.iter().zip(&worst.0).map(|(c, w)| 2.0 * c - w).collect();
        let f_reflect = f(&reflect);
        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> =
                centroid.iter().zip(&worst.0).map(|(c, w)| 3.0 * c - 2.0 * w).collect();
            let f_expand = f(&expand);
            simplex[dim] =
                if f_expand < f_reflect { (expand, f_expand) } else { (reflect, f_reflect) };
        } else if f_reflect < simplex[dim - 1].1 {
            simplex[dim] = (reflect, f_reflect);
        } else {
            let contract: Vec<f64> =
                centroid.iter().zip(&worst.0).map(|(c, w)| 0.5 * (c + w)).collect();
            let f_contract = f(&contract);
            if f_contract < worst.1 {
                simplex[dim] = (contract, f_contract);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> =
                        best.iter().zip(&entry.0).map(|(b, x)| 0.5 * (b + x)).collect();
                    entry.1 = f(&shrunk);
                    entry.0 = shrunk;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx)
}

fn layout_from_params(
    ratio: f64,
    fracs: &[f64],
    waveguides: &[Waveguide],
) -> Result<DetectorLayout> {
    let coupler = CouplerParams::from_ratio(ratio)?;
    let period = coupler.projector_period();
    let detectors = fracs
        .iter()
        .zip(waveguides)
        .map(|(&f, &wg)| Detector { waveguide: wg, z: f.rem_euclid(1.0) * period })
        .collect();
    DetectorLayout::new(coupler, detectors)
}

/// Multi-start derivative-free search over the detuning ratio and all
/// M detector positions (waveguide assignments are re-randomized per
/// restart; restart 0 starts from the structured zig-zag layout).
/// Deterministic under a fixed seed; restarts run in parallel and the
/// best result wins, ties going to the smaller restart index.
pub fn optimize_free_positions(
    n: PhotonNumber,
    m: usize,
    restarts: usize,
    seed: u64,
) -> Result<FreeOptimum> {
    if m < n.get() + 3 {
        return Err(Error::InvalidParameter(format!(
            "free-position search needs M >= N+3 = {} (P >= S is impossible below), got M={m}",
            n.get() + 3
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("need at least one restart".into()));
    }
    let basis = SymPauliBasis::new(n);

    let run_restart = |idx: usize| -> (f64, usize, Vec<f64>, Vec<Waveguide>) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, idx as u64));
        let (ratio0, fracs0, waveguides) = if idx == 0 {
            // Structured start: alternating waveguides in a zig-zag.
            let m_even = if m.is_multiple_of(2) { m } else { m + 1 };
            let fracs: Vec<f64> = (0..m)
                .map(|i| (i / 2) as f64 / (m_even / 2) as f64 + (i % 2) as f64 / m_even as f64)
                .collect();
            let wgs: Vec<Waveguide> =
                (0..m).map(|i| if i % 2 == 0 { Waveguide::One } else { Waveguide::Two }).collect();
            (OPTIMAL_DETUNING_RATIO, fracs, wgs)
        } else {
            let ratio = rng.random_range(0.05..2.0);
            let fracs: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let wgs: Vec<Waveguide> = (0..m)
                .map(|_| if rng.random::<bool>() { Waveguide::One } else { Waveguide::Two })
                .collect();
            (ratio, fracs, wgs)
        };

        let objective = |x: &[f64]| -> f64 {
            layout_from_params(x[0], &x[1..], &waveguides)
                .and_then(|layout| score_layout(&layout, n, &basis))
                .map(|(k, _)| -k)
                .unwrap_or(0.0)
        };
        let mut x0 = Vec::with_capacity(1 + m);
        x0.push(ratio0);
        x0.extend_from_slice(&fracs0);
        let (x, fx) = nelder_mead(&objective, &x0, 0.07, 400 * (1 + m));
        (-fx, idx, x, waveguides)
    };

    let results: Vec<_> = (0..restarts).into_par_iter().map(run_restart).collect();
    let best = results
        .into_iter()
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
        .expect("at least one restart");
    let (kappa_inv, best_restart, x, waveguides) = best;

    let layout = layout_from_params(x[0], &x[1..], &waveguides)?;
    let b = build_b(&layout, n, &basis)?;
    let report = condition_number(&b)?;
    Ok(FreeOptimum { beta_over_c: x[0], restarts, best_restart, kappa_inv, report })
}

/// Smallest even detector count whose symmetric layout offers strictly
/// more coincidence channels than state parameters. Counts with an
/// exact channel/parameter match produce degenerate frames, so this is
/// where detector-count sweeps usefully start.
pub fn minimal_even_detectors(n: PhotonNumber) -> usize {
    let s = dim_params(n);
    let mut m = 4;
    while combination_count(m, n) <= s {
        m += 2;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn n(v: usize) -> PhotonNumber {
        PhotonNumber::new(v).unwrap()
    }

    fn magic_symmetric(nv: usize, m: usize) -> ConditioningReport {
        let coupler = CouplerParams::from_ratio(OPTIMAL_DETUNING_RATIO).unwrap();
        let layout = DetectorLayout::symmetric(coupler, m, 0.0).unwrap();
        let basis = SymPauliBasis::new(n(nv));
        condition_number(&build_b(&layout, n(nv), &basis).unwrap()).unwrap()
    }

    #[test]
    fn identity_frame_has_unit_condition() {
        let (sv, kappa_inv, deficient) = frame_conditioning(&DMatrix::identity(4, 4)).unwrap();
        assert!(!deficient);
        assert_abs_diff_eq!(kappa_inv, 1.0, epsilon = 1e-14);
        assert!(sv.iter().all(|&s| (s - 1.0).abs() < 1e-14));
    }

    #[test]
    fn conditioning_is_scale_invariant() {
        let report = magic_symmetric(2, 8);
        let coupler = CouplerParams::from_ratio(OPTIMAL_DETUNING_RATIO).unwrap();
        let layout = DetectorLayout::symmetric(coupler, 8, 0.0).unwrap();
        let basis = SymPauliBasis::new(n(2));
        let b = build_b(&layout, n(2), &basis).unwrap();
        let scaled = b.matrix() * 2.5;
        let (_, kappa_inv, _) = frame_conditioning(&scaled).unwrap();
        assert_abs_diff_eq!(report.kappa_inv, kappa_inv, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite_frames() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 0)] = f64::NAN;
        assert!(frame_conditioning(&m).is_err());
    }

    #[test]
    fn optimal_single_photon_frame() {
        let report = magic_symmetric(1, 6);
        assert!(!report.rank_deficient);
        assert_abs_diff_eq!(report.kappa_inv, 1.0 / 3f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(report.kappa.unwrap(), 3f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn resonant_frame_is_flagged_infinite() {
        let coupler = CouplerParams::new(1.0, 0.0).unwrap();
        let layout = DetectorLayout::symmetric(coupler, 6, 0.0).unwrap();
        let basis = SymPauliBasis::new(n(1));
        let report = condition_number(&build_b(&layout, n(1), &basis).unwrap()).unwrap();
        assert!(report.rank_deficient);
        assert_eq!(report.kappa_inv, 0.0);
        assert!(report.kappa.is_none());
    }

    #[test]
    fn undersampled_frame_is_flagged() {
        // M=4, N=2: P = 6 < S = 10, structurally unsolvable.
        let report = magic_symmetric(2, 4);
        assert!(report.rank_deficient);
        assert_eq!(report.kappa_inv, 0.0);
        assert_eq!(report.singular_values.len(), 6);
    }

    #[test]
    fn beta_sweep_single_photon() {
        let ratios: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
        let curve = sweep_beta(n(1), 6, &ratios, 0.0).unwrap();
        assert_eq!(curve.len(), ratios.len());
        assert!(curve[0].kappa_inv < 1e-10, "no detuning, no frame");
        let best = curve.iter().max_by(|a, b| a.kappa_inv.total_cmp(&b.kappa_inv)).unwrap();
        assert_abs_diff_eq!(best.x, FRAC_1_SQRT_2, epsilon = 0.051);
        // The 0.05-step grid misses the peak by up to half a step.
        assert_abs_diff_eq!(best.kappa_inv, 1.0 / 3f64.sqrt(), epsilon = 5e-3);
    }

    #[test]
    fn beta_sweep_is_symmetric_in_sign() {
        let pos: Vec<f64> = (1..=10).map(|i| i as f64 * 0.2).collect();
        let neg: Vec<f64> = pos.iter().map(|r| -r).collect();
        for nv in 1..=2usize {
            let a = sweep_beta(n(nv), 6, &pos, 0.13).unwrap();
            let b = sweep_beta(n(nv), 6, &neg, 0.13).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                assert_abs_diff_eq!(pa.kappa_inv, pb.kappa_inv, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn multi_photon_sweeps_share_the_shape() {
        for (nv, m) in [(2usize, 6usize), (3, 8)] {
            let ratios = [0.0, 0.4, FRAC_1_SQRT_2, 1.2, 2.0];
            let curve = sweep_beta(n(nv), m, &ratios, 0.0).unwrap();
            assert!(curve[0].kappa_inv < 1e-10, "N={nv}: zero detuning is degenerate");
            assert!(
                curve[2].kappa_inv > curve[1].kappa_inv && curve[2].kappa_inv > curve[3].kappa_inv,
                "N={nv}: near-optimal ratio beats the flanks"
            );
        }
    }

    #[test]
    fn detector_sweep_plateau_for_single_photon() {
        let curve = sweep_detectors(n(1), &[6, 8, 10, 12], OPTIMAL_DETUNING_RATIO).unwrap();
        for point in &curve {
            assert_abs_diff_eq!(point.kappa_inv, 1.0 / 3f64.sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn detector_sweep_monotone_for_multi_photon() {
        for nv in 2..=3usize {
            let start = (nv + 5) + (nv + 5) % 2;
            let ms: Vec<usize> = (0..5).map(|k| start + 2 * k).collect();
            let curve = sweep_detectors(n(nv), &ms, OPTIMAL_DETUNING_RATIO).unwrap();
            for pair in curve.windows(2) {
                assert!(
                    pair[1].kappa_inv >= pair[0].kappa_inv - 1e-9,
                    "N={nv}: kappa_inv dropped from {} to {}",
                    pair[0].kappa_inv,
                    pair[1].kappa_inv
                );
            }
        }
    }

    #[test]
    fn minimal_symmetric_layouts_are_degenerate() {
        for (nv, m) in [(1usize, 4usize), (3, 6)] {
            let report = magic_symmetric(nv, m);
            assert!(report.rank_deficient, "N={nv}, M={m}");
            assert_eq!(report.kappa_inv, 0.0);
        }
    }

    #[test]
    fn zig_zag_shift_recovers_the_optimum() {
        let opt = optimize_dz(n(1), OPTIMAL_DETUNING_RATIO).unwrap();
        assert_eq!(opt.m, 4);
        assert_abs_diff_eq!(opt.frac_spacing, 0.5, epsilon = 2e-3);
        assert_abs_diff_eq!(opt.frac_nominal, 0.5, epsilon = 2e-3);
        assert_abs_diff_eq!(opt.kappa_inv, 1.0 / 3f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn unshifted_minimal_layouts_are_degenerate() {
        for nv in 1..=3usize {
            let m = nv + 3;
            let coupler = CouplerParams::from_ratio(OPTIMAL_DETUNING_RATIO).unwrap();
            let layout = if m % 2 == 0 {
                DetectorLayout::symmetric(coupler, m, 0.0).unwrap()
            } else {
                DetectorLayout::shifted(coupler, m, 0.0).unwrap()
            };
            let basis = SymPauliBasis::new(n(nv));
            let report = condition_number(&build_b(&layout, n(nv), &basis).unwrap()).unwrap();
            assert_eq!(report.kappa_inv, 0.0, "N={nv}: dz=0 pairs are orthogonal");
        }
    }

    #[test]
    fn shifted_minimal_layouts_are_feasible_but_worse() {
        for nv in 2..=3usize {
            let opt = optimize_dz(n(nv), OPTIMAL_DETUNING_RATIO).unwrap();
            assert!(opt.kappa_inv > 1e-3, "N={nv}: best shift is usable");
            let large_m = magic_symmetric(nv, 8);
            assert!(
                opt.kappa_inv < large_m.kappa_inv,
                "N={nv}: minimal-M optimum {} should lag M=8 value {}",
                opt.kappa_inv,
                large_m.kappa_inv
            );
        }
    }

    #[test]
    fn free_position_search_matches_zig_zag() {
        let opt = optimize_free_positions(n(1), 4, 4, 7).unwrap();
        assert!(opt.kappa_inv > 1.0 / 3f64.sqrt() - 1e-3);
        assert!(opt.kappa_inv <= 1.0 / 3f64.sqrt() + 1e-9, "tight-frame bound");
    }

    #[test]
    fn free_position_search_is_deterministic_and_monotone() {
        let a = optimize_free_positions(n(2), 5, 3, 11).unwrap();
        let b = optimize_free_positions(n(2), 5, 3, 11).unwrap();
        assert_eq!(a.kappa_inv, b.kappa_inv);
        assert_eq!(a.best_restart, b.best_restart);
        let c = optimize_free_positions(n(2), 5, 6, 11).unwrap();
        assert!(c.kappa_inv >= a.kappa_inv);
    }

    #[test]
    fn free_position_search_rejects_undersampling() {
        assert!(optimize_free_positions(n(2), 4, 2, 1).is_err());
        assert!(optimize_dz(n(4), OPTIMAL_DETUNING_RATIO).is_err());
    }

    #[test]
    fn minimal_even_detector_helper() {
        assert_eq!(minimal_even_detectors(n(1)), 6);
        assert_eq!(minimal_even_detectors(n(2)), 6);
        assert_eq!(minimal_even_detectors(n(3)), 8);
        assert_eq!(minimal_even_detectors(n(4)), 8);
    }
}
