//! Full photon-number-resolving pipeline on synthetic sensor data: draw
//! traces, integrate pulse areas, histogram them, fit a Gaussian mixture,
//! extract photon statistics with uncertainties, and propagate them into
//! normalized moments by Monte Carlo.
//!
//! Run with `cargo run --example tes_pipeline`.

use photocorr::fock::{make_state, StateKind};
use photocorr::tes;

fn main() -> photocorr::Result<()> {
    let stats = make_state(StateKind::Poisson { mean: 2.7 }, 40)?;
    let template = vec![1.0; 32];
    // Noise sized for dE/E ~ 0.4, the regime of a realistic sensor.
    let noise_sigma = 0.4 * 32.0 / (2.355 * 32.0f64.sqrt());

    let traces = tes::synthesize_traces(&stats, &template, noise_sigma, 20_000, 99)?;
    println!("synthesized {} traces of {} samples", traces.traces().len(), traces.trace_len());

    let areas = tes::integrate_areas(&traces, 0, 32)?;
    let hist = tes::AreaHistogram::from_areas(&areas, Some(160))?;
    println!("histogrammed into {} bins over [{:.1}, {:.1}]",
        hist.counts().len(),
        hist.edges().first().unwrap(),
        hist.edges().last().unwrap()
    );

    let fit = tes::fit_mixture(&hist, 11)?;
    println!("mixture fit: {} peaks, rms residual {:.2}, dE/E = {:.3}",
        fit.peaks.len(), fit.residual, fit.energy_resolution);
    for (n, peak) in fit.peaks.iter().enumerate() {
        println!("  peak {n}: center {:>6.2}, amplitude {:>8.1}", peak.center, peak.amplitude);
    }

    let extracted = tes::extract_statistics(&fit)?;
    println!("\nphoton statistics (truncated at n = {}):", extracted.statistics.n_max());
    for (n, (&p, &dev)) in
        extracted.statistics.probs().iter().zip(&extracted.deviations).enumerate()
    {
        println!("  rho_{n:<2} = {p:.4} +- {dev:.4}  (generator: {:.4})", stats.prob(n));
    }

    let report = tes::moments_with_mc_errors(&extracted, 4, 10_000, 7)?;
    println!("\nnormalized moments with Monte-Carlo errors (Poissonian reference: 1):");
    for m in 2..=4 {
        println!("  g^({m}) = {:.3} +- {:.3}", report.g(m).unwrap(), report.sigma(m).unwrap());
    }
    println!("note the growing error bar with the order m.");
    Ok(())
}
