//! Frame-quality curves: how the inverse condition number κ⁻¹ of the
//! measurement depends on the detuning ratio and on the number of
//! detectors.
//!
//! Run with:
//!
//! ```bash
//! cargo run --release --example conditioning_sweeps
//! ```

use inline_tomo::{minimal_even_detectors, sweep_beta, sweep_detectors, PhotonNumber, Result};

fn main() -> Result<()> {
    let n1 = PhotonNumber::new(1)?;

    // κ⁻¹ versus β/C for six symmetric detectors. The curve vanishes
    // on resonance and peaks at β/C = 1/√2 with κ⁻¹ = 1/√3.
    let ratios: Vec<f64> = (0..=120).map(|k| k as f64 * 0.0125).collect();
    let curve = sweep_beta(n1, 6, &ratios, 0.0)?;
    println!("N=1, M=6 symmetric: kappa_inv vs beta/C");
    for point in curve.iter().step_by(8) {
        let bar = "#".repeat((60.0 * point.kappa_inv) as usize);
        println!("  {:5.3}  {:8.5}  {bar}", point.x, point.kappa_inv);
    }
    let best = curve.iter().max_by(|a, b| a.kappa_inv.total_cmp(&b.kappa_inv)).unwrap();
    println!(
        "  peak: kappa_inv = {:.6} at beta/C = {:.4}  (1/sqrt3 = {:.6}, 1/sqrt2 = {:.4})",
        best.kappa_inv,
        best.x,
        1.0 / 3f64.sqrt(),
        std::f64::consts::FRAC_1_SQRT_2
    );

    // κ⁻¹ versus detector count at the optimal ratio. For one photon
    // the curve is exactly flat at 1/√3 from M = 6 on; more detectors
    // buy redundancy, not conditioning.
    let counts: Vec<usize> = (3..=8).map(|k| 2 * k).collect();
    let flat = sweep_detectors(n1, &counts, std::f64::consts::FRAC_1_SQRT_2)?;
    println!("\nN=1 symmetric at beta/C = 1/sqrt2: kappa_inv vs M");
    for point in &flat {
        println!("  M = {:2}: kappa_inv = {:.12}", point.x as usize, point.kappa_inv);
    }

    // For more photons the minimal useful count grows and the curve
    // climbs gently with M instead of being flat.
    for n in [2usize, 3] {
        let nv = PhotonNumber::new(n)?;
        let start = minimal_even_detectors(nv);
        let counts: Vec<usize> = (0..5).map(|k| start + 2 * k).collect();
        let curve = sweep_detectors(nv, &counts, std::f64::consts::FRAC_1_SQRT_2)?;
        println!("\nN={n} symmetric at beta/C = 1/sqrt2:");
        for point in &curve {
            println!("  M = {:2}: kappa_inv = {:.6}", point.x as usize, point.kappa_inv);
        }
    }
    Ok(())
}
