//! Classical-light emulation of the in-line scheme from fluorescence
//! intensity traces.
//!
//! A single-photon (or coherent classical) input makes the per-
//! waveguide powers p_q(z) directly observable along the whole coupler.
//! Every sampled position then acts as a pair of weak detectors, so a
//! window of one observable period supplies a dense measurement frame
//! for the 2×2 state at the window input. This module simulates or
//! ingests such traces, reconstructs ρ(z₀) window by window with a
//! Gaussian-likelihood fit (intensity units are arbitrary), and scores
//! the results against coupled-mode theory.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coupler::{bloch_coords, BlochVector, CouplerParams, Waveguide};
use crate::error::{Error, Result};
use crate::measurement::{build_b, CorrelationVector, Detector, DetectorLayout};
use crate::reconstruction::{ml_reconstruct, Likelihood, MlOptions};
use crate::state::{fidelity, make_single, DensityMatrix, PhotonNumber, SymPauliBasis};

/// Coupling constant of the reference device, mm⁻¹.
pub const DEVICE_COUPLING: f64 = 0.0885;
/// Detuning of the reference device, mm⁻¹.
pub const DEVICE_DETUNING: f64 = 0.0240;
/// Length of the reference device, mm.
pub const DEVICE_LENGTH_MM: f64 = 80.0;
/// Default trace sampling step, mm (camera-resolution scale).
pub const DEFAULT_SAMPLE_SPACING_MM: f64 = 0.5;

/// Parameters of the reference device.
pub fn device_coupler() -> CouplerParams {
    CouplerParams::new(DEVICE_COUPLING, DEVICE_DETUNING)
        .expect("reference device constants are valid")
}

/// Per-waveguide power samples along the coupler, in arbitrary units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityTrace {
    z: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    /// Negative ingested samples clipped to zero.
    clipped: usize,
}

impl IntensityTrace {
    /// Validate and ingest raw samples: z strictly increasing with at
    /// least two points, finite powers, negatives clipped to zero (the
    /// count is kept for reporting).
    pub fn new(z: Vec<f64>, p1: Vec<f64>, p2: Vec<f64>) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a trace needs at least two samples, got {}",
                z.len()
            )));
        }
        if p1.len() != z.len() || p2.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: z.len(),
                got: p1.len().min(p2.len()),
            });
        }
        if z.iter().any(|v| !v.is_finite())
            || p1.iter().any(|v| !v.is_finite())
            || p2.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter("trace samples must be finite".into()));
        }
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "trace positions must be strictly increasing".into(),
            ));
        }
        let mut clipped = 0usize;
        let clip = |v: &mut Vec<f64>, clipped: &mut usize| {
            for p in v.iter_mut() {
                if *p < 0.0 {
                    *p = 0.0;
                    *clipped += 1;
                }
            }
        };
        let (mut p1, mut p2) = (p1, p2);
        clip(&mut p1, &mut clipped);
        clip(&mut p2, &mut clipped);
        Ok(IntensityTrace { z, p1, p2, clipped })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn z_samples(&self) -> &[f64] {
        &self.z
    }

    pub fn p1(&self) -> &[f64] {
        &self.p1
    }

    pub fn p2(&self) -> &[f64] {
        &self.p2
    }

    /// How many ingested power samples were negative and got clipped.
    pub fn clipped_samples(&self) -> usize {
        self.clipped
    }

    /// First and last sampled position.
    pub fn span(&self) -> (f64, f64) {
        (self.z[0], *self.z.last().expect("non-empty by construction"))
    }

    /// Copy with each sample rescaled to p1 + p2 = 1.
    pub fn normalized(&self) -> Result<Self> {
        let mut p1 = self.p1.clone();
        let mut p2 = self.p2.clone();
        for k in 0..self.z.len() {
            let total = p1[k] + p2[k];
            if total <= 0.0 {
                return Err(Error::InvalidState(format!(
                    "sample at z={} mm has zero total power and cannot be normalized",
                    self.z[k]
                )));
            }
            p1[k] /= total;
            p2[k] /= total;
        }
        Ok(IntensityTrace { z: self.z.clone(), p1, p2, clipped: self.clipped })
    }
}

/// Synthesize the power evolution p_q(z) = |(U(z)·c0)_q|² on the given
/// grid, optionally corrupted by relative Gaussian noise of width
/// `noise_sigma` (clipped at zero, like a real intensity readout).
pub fn simulate_trace(
    coupler: CouplerParams,
    c1: C64,
    c2: C64,
    z_grid: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<IntensityTrace> {
    if z_grid.is_empty() {
        return Err(Error::InvalidParameter("trace grid is empty".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise width must be a finite non-negative number, got {noise_sigma}"
        )));
    }
    let norm = c1.norm_sqr() + c2.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "input amplitudes must satisfy |c1|^2 + |c2|^2 = 1, got {norm}"
        )));
    }
    let c0 = Vector2::new(c1, c2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p1 = Vec::with_capacity(z_grid.len());
    let mut p2 = Vec::with_capacity(z_grid.len());
    for &z in z_grid {
        let psi = coupler.propagator(z)? * c0;
        let mut powers = [psi[0].norm_sqr(), psi[1].norm_sqr()];
        if noise_sigma > 0.0 {
            for p in &mut powers {
                let g: f64 = StandardNormal.sample(&mut rng);
                *p *= 1.0 + noise_sigma * g;
            }
        }
        p1.push(powers[0]);
        p2.push(powers[1]);
    }
    IntensityTrace::new(z_grid.to_vec(), p1, p2)
}

/// Write a trace as CSV rows `z_mm,p1,p2`.
pub fn save_trace<W: std::io::Write>(trace: &IntensityTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["z_mm", "p1", "p2"])?;
    for k in 0..trace.len() {
        w.write_record([
            format!("{:.17e}", trace.z[k]),
            format!("{:.17e}", trace.p1[k]),
            format!("{:.17e}", trace.p2[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a `z_mm,p1,p2` CSV; `normalize` rescales each sample to
/// p1 + p2 = 1 after ingestion.
pub fn load_trace<R: std::io::Read>(input: R, normalize: bool) -> Result<IntensityTrace> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    for (idx, name) in ["z_mm", "p1", "p2"].iter().enumerate() {
        match headers.get(idx) {
            Some(h) if h.trim() == *name => {}
            _ => {
                return Err(Error::Parse(format!(
                    "trace CSV is missing the `{name}` column at position {idx}"
                )))
            }
        }
    }
    let mut z = Vec::new();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!(
                "trace CSV rows must be `z_mm,p1,p2`, got {} fields",
                rec.len()
            )));
        }
        let parse = |field: &str, name: &str| -> Result<f64> {
            field.trim().parse().map_err(|_| Error::Parse(format!("bad {name} value {field:?}")))
        };
        z.push(parse(&rec[0], "z_mm")?);
        p1.push(parse(&rec[1], "p1")?);
        p2.push(parse(&rec[2], "p2")?);
    }
    let trace = IntensityTrace::new(z, p1, p2)?;
    if normalize {
        trace.normalized()
    } else {
        Ok(trace)
    }
}

/// Theoretical propagated state ρ(z) = U(z)·|c0⟩⟨c0|·U(z)†.
pub fn theory_state(coupler: CouplerParams, c1: C64, c2: C64, z: f64) -> Result<DensityMatrix> {
    let psi = coupler.propagator(z)? * Vector2::new(c1, c2);
    make_single(psi[0], psi[1])
}

/// One reconstructed window.
#[derive(Debug, Clone, Serialize)]
pub struct WindowReport {
    /// Window start, mm.
    pub z0: f64,
    /// Reconstructed state at the window input.
    pub rho_hat: DensityMatrix,
    pub bloch: BlochVector,
    /// Uhlmann fidelity against the propagated theory state; set when
    /// a reference input is supplied.
    pub fidelity: Option<f64>,
    /// ‖fitted model − samples‖₂ in trace units.
    pub residual: f64,
}

/// Reconstruct the 2×2 state at `z0` from the trace samples in the
/// window [z0, z0 + L/2]: each sample acts as a detector pair (one per
/// waveguide) re-based to the window start, and the resulting 2K×4
/// frame is fitted by Gaussian-likelihood ML with a free overall scale.
///
/// One observable period L/2 suffices — the analysis directions sweep
/// the full circle once per half revival. Windows reaching past the
/// trace and degenerate frames (β = 0 makes the directions coplanar)
/// are rejected.
pub fn window_reconstruct(
    trace: &IntensityTrace,
    z0: f64,
    coupler: CouplerParams,
) -> Result<WindowReport> {
    let period = coupler.projector_period();
    let (lo, hi) = trace.span();
    let tol = 1e-9 * period;
    if z0 < lo - tol || z0 + period > hi + tol {
        return Err(Error::InvalidParameter(format!(
            "window [{z0}, {:.3}] mm is not covered by the trace span [{lo}, {hi}] mm",
            z0 + period
        )));
    }
    let mut detectors = Vec::new();
    let mut values = Vec::new();
    for k in 0..trace.len() {
        let z = trace.z[k];
        if z < z0 - tol || z > z0 + period + tol {
            continue;
        }
        let rebased = (z - z0).max(0.0);
        detectors.push(Detector { waveguide: Waveguide::One, z: rebased });
        detectors.push(Detector { waveguide: Waveguide::Two, z: rebased });
        values.push(trace.p1[k]);
        values.push(trace.p2[k]);
    }
    if detectors.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "window at z0={z0} mm contains only {} samples; need at least 2",
            detectors.len() / 2
        )));
    }
    let n = PhotonNumber::new(1)?;
    let layout = DetectorLayout::new(coupler, detectors)?;
    let basis = SymPauliBasis::new(n);
    let b = build_b(&layout, n, &basis)?;
    let combos = crate::measurement::enumerate_combinations(layout.len(), n)?;
    let data = CorrelationVector::from_rates(n, combos, values)?;
    let options = MlOptions { likelihood: Likelihood::Gaussian, ..MlOptions::default() };
    let estimate = ml_reconstruct(&data, &b, &options)?;
    let m = estimate.rho_hat.matrix();
    let bloch = bloch_coords(&Matrix2::from_fn(|i, j| m[(i, j)]))?;
    Ok(WindowReport {
        z0,
        rho_hat: estimate.rho_hat,
        bloch,
        fidelity: None,
        residual: estimate.residual,
    })
}

/// A window sweep with its aggregate score.
#[derive(Debug, Clone, Serialize)]
pub struct WindowSweep {
    pub reports: Vec<WindowReport>,
    /// Mean fidelity against theory; present when a reference was
    /// supplied.
    pub mean_fidelity: Option<f64>,
}

/// Reconstruct every requested window (in parallel) and, when the true
/// input amplitudes are known, score each window against the
/// propagated theory state.
pub fn sweep_windows(
    trace: &IntensityTrace,
    starts: &[f64],
    coupler: CouplerParams,
    reference: Option<(C64, C64)>,
) -> Result<WindowSweep> {
    if starts.is_empty() {
        return Err(Error::InvalidParameter("no window starts given".into()));
    }
    let reports: Vec<WindowReport> = starts
        .par_iter()
        .map(|&z0| {
            let mut report = window_reconstruct(trace, z0, coupler)?;
            if let Some((c1, c2)) = reference {
                let theory = theory_state(coupler, c1, c2, z0)?;
                report.fidelity = Some(fidelity(&report.rho_hat, &theory)?);
            }
            Ok(report)
        })
        .collect::<Result<_>>()?;
    let mean_fidelity = if reference.is_some() {
        Some(reports.iter().filter_map(|r| r.fidelity).sum::<f64>() / reports.len() as f64)
    } else {
        None
    };
    Ok(WindowSweep { reports, mean_fidelity })
}

/// Write the reconstructed Bloch trajectory as CSV rows
/// `z0_mm,sx,sy,sz,fidelity` (fidelity left blank without a reference).
pub fn write_trajectory_csv<W: std::io::Write>(sweep: &WindowSweep, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["z0_mm", "sx", "sy", "sz", "fidelity"])?;
    for r in &sweep.reports {
        w.write_record([
            format!("{:.17e}", r.z0),
            format!("{:.17e}", r.bloch.x),
            format!("{:.17e}", r.bloch.y),
            format!("{:.17e}", r.bloch.z),
            r.fidelity.map(|f| format!("{f:.17e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
