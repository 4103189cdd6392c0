//! Closed-form propagation in a detuned two-waveguide coupler.
//!
//! Two evanescently coupled waveguides with coupling constant `C` and
//! propagation-constant detuning `±β` exchange power at the beat rate
//! `η = √(C² + β²)`; the field returns to its input after one revival
//! length `L = 2π/η`. Everything downstream (detector projectors,
//! coincidence operators, measurement frames) is built from the 2×2
//! transfer matrix computed here.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Label of one of the two waveguides.
///
/// Waveguide 1 maps to the +z pole of the Bloch sphere, waveguide 2 to
/// the −z pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Waveguide {
    One,
    Two,
}

impl Waveguide {
    /// 0-based row/column index into 2×2 matrices.
    pub fn index(self) -> usize {
        match self {
            Waveguide::One => 0,
            Waveguide::Two => 1,
        }
    }

    pub fn other(self) -> Waveguide {
        match self {
            Waveguide::One => Waveguide::Two,
            Waveguide::Two => Waveguide::One,
        }
    }
}

impl From<Waveguide> for u8 {
    fn from(q: Waveguide) -> u8 {
        q.index() as u8 + 1
    }
}

impl TryFrom<u8> for Waveguide {
    type Error = Error;

    fn try_from(q: u8) -> Result<Self> {
        match q {
            1 => Ok(Waveguide::One),
            2 => Ok(Waveguide::Two),
            _ => Err(Error::InvalidParameter(format!("waveguide index must be 1 or 2, got {q}"))),
        }
    }
}

/// Static parameters of a directional coupler, with the derived beat
/// rate and revival length.
///
/// Rates are in 1/mm and lengths in mm at the I/O boundary; internally
/// only products like `η·z` matter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerParams {
    coupling: f64,
    detuning: f64,
    beat_rate: f64,
    revival_length: f64,
}

impl CouplerParams {
    /// Build coupler parameters from the coupling constant `C > 0` and
    /// detuning `β` (either sign, zero allowed).
    pub fn new(coupling: f64, detuning: f64) -> Result<Self> {
        if !coupling.is_finite() || coupling <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "coupling constant must be finite and positive, got {coupling}"
            )));
        }
        if !detuning.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "detuning must be finite, got {detuning}"
            )));
        }
        let beat_rate = coupling.hypot(detuning);
        Ok(CouplerParams { coupling, detuning, beat_rate, revival_length: TAU / beat_rate })
    }

    /// Coupler with unit coupling and the given detuning-to-coupling
    /// ratio; convenient for design studies where only `β/C` matters.
    pub fn from_ratio(beta_over_c: f64) -> Result<Self> {
        CouplerParams::new(1.0, beta_over_c)
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    /// Beat rate η = √(C² + β²).
    pub fn beat_rate(&self) -> f64 {
        self.beat_rate
    }

    /// Revival length L = 2π/η after which the coupler acts as identity.
    pub fn revival_length(&self) -> f64 {
        self.revival_length
    }

    /// Observable period L/2 = π/η: T(L/2) = −identity, so every
    /// projector, power reading, and density matrix repeats at half
    /// the amplitude revival length.
    pub fn projector_period(&self) -> f64 {
        self.revival_length / 2.0
    }

    /// Wrap a position into the fundamental cell [0, L).
    pub fn wrap(&self, z: f64) -> f64 {
        let l = self.revival_length;
        let w = z.rem_euclid(l);
        // rem_euclid can return exactly l for tiny negative inputs
        if w >= l {
            0.0
        } else {
            w
        }
    }

    /// Heisenberg-picture transfer matrix T(z) of the coupler.
    ///
    /// `T[q][q] = cos(ηz) + i(−1)^q (β/η) sin(ηz)` and
    /// `T[q][3−q] = −i(C/η) sin(ηz)` with waveguides numbered 1, 2.
    /// Unitary for all z; T(0) = T(L) = identity.
    pub fn transfer_matrix(&self, z: f64) -> Result<Matrix2<C64>> {
        if !z.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "propagation distance must be finite, got {z}"
            )));
        }
        let phase = self.beat_rate * z;
        let (sin, cos) = phase.sin_cos();
        let diag = self.detuning / self.beat_rate * sin;
        let off = -self.coupling / self.beat_rate * sin;
        Ok(Matrix2::new(
            C64::new(cos, -diag),
            C64::new(0.0, off),
            C64::new(0.0, off),
            C64::new(cos, diag),
        ))
    }

    /// Schrödinger-picture amplitude propagator U(z) = conj(T(z)):
    /// modal amplitudes evolve as c(z) = U(z)·c(0), so that detector
    /// count rates |(U(z)c)_q|² match the Heisenberg expectations.
    pub fn propagator(&self, z: f64) -> Result<Matrix2<C64>> {
        Ok(self.transfer_matrix(z)?.map(|t| t.conj()))
    }

    /// State a detector on waveguide `q` at position `z` projects onto
    /// when referred back to the coupler input: |ψ⟩ = U(z)†|q⟩, which
    /// works out to the q-th row of T(z).
    pub fn analysis_state(&self, waveguide: Waveguide, z: f64) -> Result<AnalysisState> {
        let t = self.transfer_matrix(z)?;
        let q = waveguide.index();
        Ok(AnalysisState { amplitudes: Vector2::new(t[(q, 0)], t[(q, 1)]), waveguide, z })
    }
}

/// Single-photon state that a given detector effectively measures,
/// referred back to the coupler input.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisState {
    amplitudes: Vector2<C64>,
    waveguide: Waveguide,
    z: f64,
}

impl AnalysisState {
    pub fn amplitudes(&self) -> &Vector2<C64> {
        &self.amplitudes
    }

    pub fn waveguide(&self) -> Waveguide {
        self.waveguide
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Rank-1 projector |ψ⟩⟨ψ| onto this state.
    pub fn projector(&self) -> Matrix2<C64> {
        let v = &self.amplitudes;
        Matrix2::new(v[0] * v[0].conj(), v[0] * v[1].conj(), v[1] * v[0].conj(), v[1] * v[1].conj())
    }

    /// Bloch-sphere coordinates of the projector.
    pub fn bloch(&self) -> BlochVector {
        let v = &self.amplitudes;
        let cross = v[0].conj() * v[1];
        BlochVector { x: 2.0 * cross.re, y: 2.0 * cross.im, z: v[0].norm_sqr() - v[1].norm_sqr() }
    }
}

/// Pauli expectation values (S_x, S_y, S_z) of a 2×2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Decompose a 2×2 density matrix into Pauli expectations
/// S_i = Tr(σ_i ρ).
///
/// The input must be Hermitian with unit trace (tolerance 1e-9).
pub fn bloch_coords(rho: &Matrix2<C64>) -> Result<BlochVector> {
    let herm = (rho[(0, 1)] - rho[(1, 0)].conj()).norm();
    if herm > 1e-9 || rho[(0, 0)].im.abs() > 1e-9 || rho[(1, 1)].im.abs() > 1e-9 {
        return Err(Error::InvalidState(
            "Bloch decomposition requires a Hermitian 2x2 matrix".into(),
        ));
    }
    let trace = rho[(0, 0)].re + rho[(1, 1)].re;
    if (trace - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidState(format!(
            "Bloch decomposition requires unit trace, got {trace}"
        )));
    }
    Ok(BlochVector {
        x: 2.0 * rho[(0, 1)].re,
        y: -2.0 * rho[(0, 1)].im,
        z: rho[(0, 0)].re - rho[(1, 1)].re,
    })
}
