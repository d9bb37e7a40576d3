//! Simulate coincidence counting: an HBT pair of detectors at two very
//! different splitter/efficiency settings, then a symmetric 8-detector
//! tree with the pooled m-fold estimators.
//!
//! The point is the invariance of the normalized estimates: the g^(2)
//! ratio cancels both the splitting ratio and the optical losses.
//!
//! Run with `cargo run --example hbt_and_multiplexing`.

use photocorr::detection::{
    estimate_g2_hbt, estimate_gm_pooled, simulate_network, DetectorModel, NetworkSpec,
};
use photocorr::fock::{make_state, StateKind};

fn main() -> photocorr::Result<()> {
    let input = make_state(StateKind::Thermal { mean: 0.05 }, 60)?;
    let trials = 2_000_000;

    println!("thermal <n> = 0.05, {trials} trials, exact g^(2) = 2");
    for (label, t, eta1, eta2, seed) in
        [("balanced, eta 0.3/0.3", 0.5, 0.3, 0.3, 11), ("skewed, eta 0.1/0.9", 0.7, 0.1, 0.9, 13)]
    {
        let spec = NetworkSpec::hbt(t, eta1, eta2)?;
        let record = simulate_network(&input, &spec, trials, seed)?;
        let g2 = estimate_g2_hbt(&record)?;
        println!("  {label:<24} g^(2) = {:.4} +- {:.4}", g2.value, g2.std_error);
    }

    println!("\n8-detector tree, click detectors at eta = 0.8:");
    let tree = NetworkSpec::symmetric(2, DetectorModel::click(0.8)?)?;
    for (label, kind, expected) in [
        ("thermal <n> = 0.05", StateKind::Thermal { mean: 0.05 }, [2.0, 6.0, 24.0]),
        ("coherent <n> = 0.05", StateKind::Poisson { mean: 0.05 }, [1.0, 1.0, 1.0]),
    ] {
        let input = make_state(kind, 40)?;
        let record = simulate_network(&input, &tree, 4_000_000, 17)?;
        println!("  {label}");
        for (m, e) in (2..=4).zip(expected) {
            let g = estimate_gm_pooled(&record, m)?;
            println!(
                "    g^({m}) = {:>7.3} +- {:<7.3} (exact {e})",
                g.value, g.std_error
            );
        }
    }
    Ok(())
}
