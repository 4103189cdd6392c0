//! Simulated click statistics: single-photon rates and two-photon
//! N00N-state coincidences across an in-line detector array, plus
//! Poisson-sampled counts.
//!
//! Run with:
//!
//! ```bash
//! cargo run --example correlations
//! ```

use inline_tomo::{
    gamma_tensor, make_noon, make_single, sample_counts, CouplerParams, DetectorLayout,
    PhotonNumber, Result,
};
use num_complex::Complex64 as C64;

fn main() -> Result<()> {
    let coupler = CouplerParams::from_ratio(std::f64::consts::FRAC_1_SQRT_2)?;
    let layout = DetectorLayout::symmetric(coupler, 6, 0.0)?;

    // Single photon in an equal superposition of the two waveguides:
    // six per-detector click rates.
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let single = make_single(a, a)?;
    let rates = gamma_tensor(&single, &layout)?;
    println!("single-photon click rates (M = 6, z1 = 0, beta/C = 1/sqrt2):");
    for (combo, &g) in rates.combinations().iter().zip(rates.rates().unwrap()) {
        println!("  detector {:>3}: {g:.6}", combo.label());
    }

    // Two-photon N00N state: C(6,2) = 15 coincidence channels.
    let n2 = PhotonNumber::new(2)?;
    let noon = make_noon(n2);
    let coincidences = gamma_tensor(&noon, &layout)?;
    println!("\ntwo-photon N00N coincidences ({} channels):", coincidences.len());
    for (combo, &g) in coincidences.combinations().iter().zip(coincidences.rates().unwrap()) {
        println!("  pair {:>5}: {g:.6}", combo.label());
    }

    // Finite statistics: Poisson counts at 10^5 events, reproducible
    // under the seed.
    let counts = sample_counts(&coincidences, 100_000, 42)?;
    println!("\nsampled counts at 1e5 events (seed 42):");
    for (combo, &c) in counts.combinations().iter().zip(counts.counts().unwrap()) {
        println!("  pair {:>5}: {c}", combo.label());
    }
    let total: u64 = counts.counts().unwrap().iter().sum();
    println!("  total: {total}");
    Ok(())
}
