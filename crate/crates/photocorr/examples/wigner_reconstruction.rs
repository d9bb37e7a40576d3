//! Reconstruct phase-space quasi-probabilities of a single photon from
//! the normalized moments of displaced statistics, and show how series
//! truncation distorts the result: the same grid evaluated at m_max = 21
//! (trustworthy) and m_max = 6 (flagged divergent away from the origin).
//!
//! Run with `cargo run --example wigner_reconstruction`.

use photocorr::fock::{DisplacementAmplitude, FockAmplitudeVector};
use photocorr::phasespace::reconstruct_grid;

fn main() -> photocorr::Result<()> {
    let fock1 = FockAmplitudeVector::fock(1, 40)?;
    let alphas: Vec<DisplacementAmplitude> =
        (0..=8).map(|i| DisplacementAmplitude::new(0.25 * i as f64, 0.0)).collect();
    let grid = reconstruct_grid(&fock1, 1, &alphas, &[6, 21])?;

    println!("single photon |1>, displaced along the real axis");
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>10} | {:>12} {:>10}",
        "alpha", "W (m=21)", "Q (m=21)", "|chi|^2", "converged", "W (m=6)", "converged"
    );
    for alpha in &alphas {
        let full = grid
            .points
            .iter()
            .find(|p| p.alpha == *alpha && p.m_max == 21)
            .unwrap();
        let short = grid
            .points
            .iter()
            .find(|p| p.alpha == *alpha && p.m_max == 6)
            .unwrap();
        println!(
            "{:>6.2} {:>12.5} {:>12.5} {:>12.5} {:>10} | {:>12.5} {:>10}",
            alpha.re,
            full.wigner.value,
            full.q.value,
            full.chi_squared.value,
            full.wigner.converged,
            short.wigner.value,
            short.wigner.converged,
        );
    }
    println!("\nW(0) = -2/pi = {:.5}: the negativity that certifies the single photon.", -2.0 / std::f64::consts::PI);
    println!("at m_max = 6 the series blows up beyond |alpha| ~ 1 and the flag says so.");
    Ok(())
}
