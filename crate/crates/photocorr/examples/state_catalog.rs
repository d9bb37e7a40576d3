//! Build the photon-statistics catalog and print each state's normalized
//! factorial moments next to the nonclassicality verdicts they trigger.
//!
//! Run with `cargo run --example state_catalog`.

use photocorr::fock::{make_state, DisplacementAmplitude, StateKind};
use photocorr::moments::{
    moment_matrix_test, moments_from_statistics, monotonicity_test, parity_from_statistics,
};

fn main() -> photocorr::Result<()> {
    let catalog = [
        ("thermal <n>=1", StateKind::Thermal { mean: 1.0 }, 80),
        ("coherent <n>=1", StateKind::Poisson { mean: 1.0 }, 40),
        ("fock k=1", StateKind::Fock { k: 1 }, 8),
        ("fock k=4", StateKind::Fock { k: 4 }, 8),
        (
            "displaced fock k=1, alpha=1",
            StateKind::DisplacedFock { k: 1, alpha: DisplacementAmplitude::new(1.0, 0.0) },
            40,
        ),
    ];

    println!(
        "{:<28} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9}  verdicts",
        "state", "<n>", "g2", "g3", "g4", "g5", "parity"
    );
    for (label, kind, n_max) in catalog {
        let stats = make_state(kind, n_max)?;
        let report = moments_from_statistics(&stats, 5)?;
        let matrix = moment_matrix_test(&report, 2)?;
        let monotone = monotonicity_test(&report)?;
        let mut verdicts = Vec::new();
        if matrix.nonclassical {
            verdicts.push("moment-matrix");
        }
        if monotone.nonclassical {
            verdicts.push("monotonicity");
        }
        println!(
            "{:<28} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9.4}  {}",
            label,
            report.mean_photon_number(),
            report.g(2).unwrap(),
            report.g(3).unwrap(),
            report.g(4).unwrap(),
            report.g(5).unwrap(),
            parity_from_statistics(&stats),
            if verdicts.is_empty() { "classical-compatible".into() } else { verdicts.join(", ") },
        );
    }
    Ok(())
}
