//! Phase-averaged homodyne route to the normalized moments: simulate
//! quadrature samples in blocks, convert even quadrature moments to
//! normally-ordered photon moments through the exact transfer matrix, and
//! report block-spread error bars.
//!
//! This is a reduced-size version of the 20 x 18e6-sample simulation;
//! pass `--full` for the original size (takes minutes).
//!
//! Run with `cargo run --release --example homodyne_moments [-- --full]`.

use photocorr::homodyne::{simulate_moments, HomodyneState};

fn main() -> photocorr::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let (blocks, samples) = if full { (20, 18_000_000) } else { (10, 500_000) };
    println!("{blocks} blocks of {samples} samples each\n");

    for (label, state, seed, expected) in [
        ("coherent <n> = 1", HomodyneState::Coherent { mean: 1.0 }, 31, [1.0, 1.0, 1.0, 1.0]),
        ("thermal <n> = 1", HomodyneState::Thermal { mean: 1.0 }, 37, [2.0, 6.0, 24.0, 120.0]),
    ] {
        let report = simulate_moments(state, blocks, samples, 5, seed)?;
        println!("{label}: reconstructed <n> = {:.4}", report.mean_photon_number());
        for (m, e) in (2..=5).zip(expected) {
            println!(
                "  g^({m}) = {:>9.4} +- {:<9.4} (exact {e})",
                report.g(m).unwrap(),
                report.sigma(m).unwrap()
            );
        }
    }
    Ok(())
}
