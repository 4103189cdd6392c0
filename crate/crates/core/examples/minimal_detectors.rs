//! How few detectors can identify an N-photon state? Symmetric
//! layouts at the information-theoretic minimum M = N+3 are always
//! degenerate; breaking the symmetry with a pairwise shift rescues
//! N ≤ 3, and a free-position search shows that N = 4 at M = 7 stays
//! infeasible no matter where the detectors go.
//!
//! Run with:
//!
//! ```bash
//! cargo run --release --example minimal_detectors
//! ```

use inline_tomo::{
    build_b, condition_number, minimal_even_detectors, optimize_dz, optimize_free_positions,
    CouplerParams, DetectorLayout, PhotonNumber, Result, SymPauliBasis,
};

fn main() -> Result<()> {
    let coupler = CouplerParams::from_ratio(std::f64::consts::FRAC_1_SQRT_2)?;

    // Minimal symmetric layouts: P = C(M, N) channels only just cover
    // the S = C(N+3, 3) parameters at M = N+3, and the frame is
    // singular there for every N.
    println!("symmetric layouts at the counting bound M = N+3:");
    for n in 1..=3usize {
        let nv = PhotonNumber::new(n)?;
        let m = n + 3;
        let m_even = m + m % 2;
        let layout = DetectorLayout::symmetric(coupler, m_even, 0.0)?;
        let report = condition_number(&build_b(&layout, nv, &SymPauliBasis::new(nv))?)?;
        let smin = report.singular_values.last().unwrap();
        let smax = report.singular_values.first().unwrap();
        println!(
            "  N={n}, M={m_even}: sigma_min/sigma_max = {:.2e}, rank deficient: {}",
            smin / smax,
            report.rank_deficient
        );
    }
    println!("  (smallest even M that is overcomplete, per N:");
    for n in 1..=4usize {
        let nv = PhotonNumber::new(n)?;
        println!("     N={n}: M = {}", minimal_even_detectors(nv));
    }
    println!("  )");

    // A zig-zag shift of the waveguide-2 detectors breaks the
    // degeneracy. For N=2 (M=5) and N=3 (M=6) the best shift gives a
    // usable — if mediocre — frame.
    println!("\nbest pairwise shift at minimal M:");
    for n in 2..=3usize {
        let nv = PhotonNumber::new(n)?;
        let best = optimize_dz(nv, std::f64::consts::FRAC_1_SQRT_2)?;
        println!(
            "  N={n}, M={}: dz = {:.3} ({:.3} of the pair spacing) -> kappa_inv = {:.5}",
            best.m, best.dz, best.frac_spacing, best.kappa_inv
        );
    }

    // For N=4 even unconstrained positions cannot rescue M = 7: the
    // multi-restart search never finds a frame above numerical zero.
    let n4 = PhotonNumber::new(4)?;
    let search = optimize_free_positions(n4, 7, 40, 2024)?;
    println!(
        "\nfree-position search, N=4, M=7, {} restarts: best kappa_inv = {:.2e}",
        search.restarts, search.kappa_inv
    );
    println!("  -> below 1e-6: reconstruction at M = N+3 is impossible for N = 4");
    Ok(())
}
