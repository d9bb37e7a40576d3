//! Phase-randomized homodyne detection: simulate shot-noise-normalized
//! quadrature samples for coherent and thermal light and invert
//! phase-averaged even quadrature moments into normalized factorial
//! photon-number moments.
//!
//! The quadrature q is normalized so the vacuum has unit variance. Under
//! phase averaging, every even moment is a lower-triangular combination of
//! the normal-ordered photon-number moments; the triangular system inverts
//! by forward substitution.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};

use crate::fock::falling_factorial;
use crate::moments::{MomentReport, MomentSource};
use crate::seeding::{batches, stream_rng};
use crate::{Error, Result};

/// States with a closed-form phase-randomized quadrature distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HomodyneState {
    /// Coherent state of mean photon number |alpha|^2, measured at a
    /// uniformly random phase per sample.
    Coherent { mean: f64 },
    /// Thermal state: zero-mean Gaussian quadrature of variance 2 n + 1.
    Thermal { mean: f64 },
}

impl HomodyneState {
    pub fn mean_photon_number(&self) -> f64 {
        match *self {
            HomodyneState::Coherent { mean } | HomodyneState::Thermal { mean } => mean,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mean_photon_number() < 0.0 {
            return Err(Error::invalid("mean", "mean photon number must be nonnegative"));
        }
        Ok(())
    }

    fn label(&self) -> String {
        match *self {
            HomodyneState::Coherent { mean } => format!("coherent:{mean}"),
            HomodyneState::Thermal { mean } => format!("thermal:{mean}"),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let noise: f64 = StandardNormal.sample(rng);
        match *self {
            HomodyneState::Coherent { mean } => {
                let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                2.0 * mean.sqrt() * theta.cos() + noise
            }
            HomodyneState::Thermal { mean } => (2.0 * mean + 1.0).sqrt() * noise,
        }
    }
}

/// A batch of shot-noise-normalized quadrature samples.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureBatch {
    samples: Vec<f64>,
    label: String,
    seed: u64,
}

impl QuadratureBatch {
    pub fn new(samples: Vec<f64>, label: impl Into<String>, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("samples", "need at least one sample"));
        }
        if samples.iter().any(|q| !q.is_finite()) {
            return Err(Error::invalid("samples", "samples must be finite"));
        }
        Ok(Self { samples, label: label.into(), seed })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One value per line after a `# label seed` header.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# {} {}", self.label, self.seed)?;
        for q in &self.samples {
            writeln!(w, "{q}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidDistribution("empty quadrature file".into()))??;
        let mut fields = header.trim_start_matches('#').split_whitespace();
        let label = fields
            .next()
            .ok_or_else(|| Error::InvalidDistribution("missing state label".into()))?
            .to_string();
        let seed: u64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidDistribution("missing seed in header".into()))?;
        let samples: std::result::Result<Vec<f64>, _> =
            lines.map(|l| l.and_then(|s| s.trim().parse().map_err(std::io::Error::other))).collect();
        Self::new(samples?, label, seed)
    }
}

/// Draw `count` phase-randomized quadrature samples. Deterministic per
/// seed and independent of the worker count.
pub fn sample_quadratures(state: HomodyneState, count: usize, seed: u64) -> Result<QuadratureBatch> {
    state.validate()?;
    if count == 0 {
        return Err(Error::invalid("count", "need at least one sample"));
    }
    let samples: Vec<f64> = batches(count as u64)
        .into_par_iter()
        .flat_map_iter(|(batch, len)| {
            let mut rng = stream_rng(seed, batch);
            (0..len).map(move |_| state.draw(&mut rng)).collect::<Vec<f64>>()
        })
        .collect();
    QuadratureBatch::new(samples, state.label(), seed)
}

/// Lower-triangular map from normal-ordered photon-number moments to
/// phase-averaged even quadrature moments:
/// <q^{2k}> = sum_{m <= k} c[k][m] <:N^m:>.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransferMatrix {
    pub fn k_max(&self) -> usize {
        self.rows.len()
    }

    /// c[k][m] for 1 <= k <= k_max, 0 <= m <= k.
    pub fn coeff(&self, k: usize, m: usize) -> f64 {
        self.rows[k - 1][m]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k - 1]
    }

    /// Forward-substitute measured even moments <q^2>, <q^4>, ... into
    /// normal-ordered moments <:N:>, <:N^2:>, ...
    pub fn invert_even_moments(&self, even: &[f64]) -> Result<Vec<f64>> {
        if even.is_empty() || even.len() > self.k_max() {
            return Err(Error::invalid("even", "order outside the transfer matrix range"));
        }
        let mut normal = Vec::with_capacity(even.len());
        for (k, &q2k) in even.iter().enumerate() {
            let k = k + 1;
            let mut rest = self.coeff(k, 0);
            for m in 1..k {
                rest += self.coeff(k, m) * normal[m - 1];
            }
            normal.push((q2k - rest) / self.coeff(k, k));
        }
        Ok(normal)
    }
}

/// Exact <n| q^{2k} |n> on a truncated space, via matrix powers of
/// q = a + a-dagger. Phase averaging is trivial for Fock states, whose
/// quadrature distribution is phase independent.
fn fock_even_moment_oracle(n: usize, k: usize) -> f64 {
    let dim = n + 2 * k + 2;
    let mut q = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim - 1 {
        let c = ((i + 1) as f64).sqrt();
        q[(i, i + 1)] = c;
        q[(i + 1, i)] = c;
    }
    let mut power = nalgebra::DMatrix::<f64>::identity(dim, dim);
    for _ in 0..2 * k {
        power = &power * &q;
    }
    power[(n, n)]
}

/// Build the transfer matrix up to order `k_max` and prove it against the
/// Fock-state operator oracle before returning it.
pub fn build_transfer_matrix(k_max: usize) -> Result<TransferMatrix> {
    if k_max == 0 {
        return Err(Error::invalid("k_max", "need at least first order"));
    }
    let factorial = |n: usize| -> f64 { (1..=n).map(|i| i as f64).product() };
    let rows: Vec<Vec<f64>> = (1..=k_max)
        .map(|k| {
            (0..=k)
                .map(|m| {
                    factorial(2 * k)
                        / (factorial(k - m) * factorial(m).powi(2) * 2f64.powi((k - m) as i32))
                })
                .collect()
        })
        .collect();
    let tm = TransferMatrix { rows };
    // Contract: the closed form must reproduce <q^{2k}> for Fock states.
    for k in 1..=k_max.min(5) {
        for n in 0..=10 {
            let oracle = fock_even_moment_oracle(n, k);
            let predicted: f64 =
                (0..=k).map(|m| tm.coeff(k, m) * falling_factorial(n, m)).sum();
            if (predicted - oracle).abs() > 1e-8 * oracle.abs().max(1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "transfer matrix fails the operator oracle at k={k}, n={n}: \
                     {predicted} vs {oracle}"
                )));
            }
        }
    }
    Ok(tm)
}

fn block_moments(sums: &[f64], count: f64, tm: &TransferMatrix, m_max: usize) -> Result<Vec<f64>> {
    let even: Vec<f64> = sums.iter().map(|s| s / count).collect();
    let normal = tm.invert_even_moments(&even)?;
    let n1 = normal[0];
    if n1 <= 0.0 {
        return Err(Error::VacuumOnly);
    }
    Ok((1..=m_max).map(|m| normal[m - 1] / n1.powi(m as i32)).collect())
}

fn reduce_blocks(block_values: Vec<Vec<f64>>, m_max: usize) -> Result<MomentReport> {
    let b = block_values.len() as f64;
    let mut values = Vec::with_capacity(m_max);
    let mut sigmas = Vec::with_capacity(m_max);
    for m in 0..m_max {
        let mean = block_values.iter().map(|g| g[m]).sum::<f64>() / b;
        let var =
            block_values.iter().map(|g| (g[m] - mean).powi(2)).sum::<f64>() / (b - 1.0);
        values.push(mean);
        sigmas.push(var.sqrt());
    }
    // g^(1) is identically 1 in every block; the caller supplies the
    // pooled mean photon number afterwards.
    values[0] = 1.0;
    sigmas[0] = 0.0;
    MomentReport::new(values, sigmas, f64::NAN, MomentSource::Measured)
}

/// Normalized moments from a stored quadrature batch, with error bars from
/// the spread across `block_count` contiguous sub-blocks.
pub fn moments_from_quadratures(
    batch: &QuadratureBatch,
    m_max: usize,
    block_count: usize,
) -> Result<MomentReport> {
    if block_count < 2 {
        return Err(Error::invalid("block_count", "need at least two blocks for error bars"));
    }
    if batch.samples().len() < block_count {
        return Err(Error::invalid("block_count", "more blocks than samples"));
    }
    if m_max == 0 {
        return Err(Error::invalid("m_max", "need at least first order"));
    }
    let tm = build_transfer_matrix(m_max)?;
    let chunk = batch.samples().len() / block_count;
    let blocks: Result<Vec<Vec<f64>>> = batch.samples()[..chunk * block_count]
        .par_chunks(chunk)
        .map(|qs| {
            let mut sums = vec![0.0; m_max];
            for &q in qs {
                let q2 = q * q;
                let mut p = 1.0;
                for s in sums.iter_mut() {
                    p *= q2;
                    *s += p;
                }
            }
            block_moments(&sums, qs.len() as f64, &tm, m_max)
        })
        .collect();
    let mut report = reduce_blocks(blocks?, m_max)?;
    // Recover the mean photon number from the pooled second moment.
    let pooled_q2 =
        batch.samples().iter().map(|q| q * q).sum::<f64>() / batch.samples().len() as f64;
    report = MomentReport::new(
        report.values().to_vec(),
        report.uncertainties().to_vec(),
        (pooled_q2 - 1.0) / 2.0,
        MomentSource::Measured,
    )?;
    Ok(report)
}

/// Simulate `block_count` independent repetitions of `samples_per_block`
/// quadrature samples each and reduce them to normalized moments with
/// block-spread error bars, without materializing the samples.
pub fn simulate_moments(
    state: HomodyneState,
    block_count: usize,
    samples_per_block: usize,
    m_max: usize,
    seed: u64,
) -> Result<MomentReport> {
    state.validate()?;
    if block_count < 2 {
        return Err(Error::invalid("block_count", "need at least two blocks for error bars"));
    }
    if samples_per_block == 0 || m_max == 0 {
        return Err(Error::invalid("samples_per_block", "need samples and a positive order"));
    }
    let tm = build_transfer_matrix(m_max)?;
    let per_block_batches = batches(samples_per_block as u64);
    let results: Result<Vec<(Vec<f64>, f64)>> = (0..block_count)
        .into_par_iter()
        .map(|block| {
            let sums = per_block_batches
                .par_iter()
                .map(|&(batch, len)| {
                    // Stream index globally unique per (block, batch).
                    let stream = block as u64 * per_block_batches.len() as u64 + batch;
                    let mut rng = stream_rng(seed, stream);
                    let mut sums = vec![0.0; m_max];
                    for _ in 0..len {
                        let q2 = state.draw(&mut rng).powi(2);
                        let mut p = 1.0;
                        for s in sums.iter_mut() {
                            p *= q2;
                            *s += p;
                        }
                    }
                    sums
                })
                .reduce(
                    || vec![0.0; m_max],
                    |mut a, b| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                        a
                    },
                );
            let g = block_moments(&sums, samples_per_block as f64, &tm, m_max)?;
            Ok((g, sums[0] / samples_per_block as f64))
        })
        .collect();
    let results = results?;
    let pooled_q2 =
        results.iter().map(|(_, q2)| q2).sum::<f64>() / block_count as f64;
    let report = reduce_blocks(results.into_iter().map(|(g, _)| g).collect(), m_max)?;
    MomentReport::new(
        report.values().to_vec(),
        report.uncertainties().to_vec(),
        (pooled_q2 - 1.0) / 2.0,
        MomentSource::Measured,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn transfer_matrix_pinned_rows() {
        let tm = build_transfer_matrix(2).unwrap();
        assert_eq!(tm.row(1), &[1.0, 2.0]);
        assert_eq!(tm.row(2), &[3.0, 12.0, 6.0]);
    }

    #[test]
    fn vacuum_column_is_double_factorial() {
        let tm = build_transfer_matrix(4).unwrap();
        assert_relative_eq!(tm.coeff(2, 0), 3.0);
        assert_relative_eq!(tm.coeff(3, 0), 15.0);
        assert_relative_eq!(tm.coeff(4, 0), 105.0);
    }

    #[test]
    fn oracle_holds_to_fifth_order() {
        // The constructor itself enforces the Fock-state operator oracle
        // for k <= 5, n <= 10 at 1e-8.
        build_transfer_matrix(5).unwrap();
    }

    #[test]
    fn g2_inversion_matches_quoted_form() {
        // Inverting rows 1-2 must reduce to
        // g2 = 4 (<q^4> - 6 <q^2> + 3) / (6 (<q^2> - 1)^2).
        let tm = build_transfer_matrix(2).unwrap();
        let (q2, q4) = (3.7, 41.2);
        let normal = tm.invert_even_moments(&[q2, q4]).unwrap();
        let g2 = normal[1] / normal[0].powi(2);
        let quoted = 4.0 * (q4 - 6.0 * q2 + 3.0) / (6.0 * (q2 - 1.0).powi(2));
        assert_relative_eq!(g2, quoted, epsilon = 1e-12);
    }

    #[test]
    fn vacuum_variance_is_shot_noise() {
        let batch =
            sample_quadratures(HomodyneState::Coherent { mean: 0.0 }, 400_000, 3).unwrap();
        let var = batch.samples().iter().map(|q| q * q).sum::<f64>()
            / batch.samples().len() as f64;
        assert!((var - 1.0).abs() < 0.01, "vacuum variance {var}");
    }

    #[test]
    fn thermal_second_moment() {
        let batch = sample_quadratures(HomodyneState::Thermal { mean: 1.0 }, 400_000, 5).unwrap();
        let q2 = batch.samples().iter().map(|q| q * q).sum::<f64>()
            / batch.samples().len() as f64;
        assert!((q2 - 3.0).abs() < 0.05, "<q^2> = {q2}");
    }

    #[test]
    fn coherent_fourth_moment() {
        let batch =
            sample_quadratures(HomodyneState::Coherent { mean: 1.0 }, 2_000_000, 7).unwrap();
        let q4 = batch.samples().iter().map(|q| q.powi(4)).sum::<f64>()
            / batch.samples().len() as f64;
        // 6 <:N^2:> + 12 <:N:> + 3 = 21 at |alpha|^2 = 1.
        assert!((q4 - 21.0).abs() < 0.3, "<q^4> = {q4}");
    }

    #[test]
    fn exact_thermal_moments_through_inversion() {
        // Thermal quadratures are Gaussian with variance 2 n + 1, so
        // <q^{2k}> = (2k-1)!! (2 n + 1)^k exactly; the inverted moments
        // must give g^(m) = m!.
        let tm = build_transfer_matrix(5).unwrap();
        let n_bar = 1.0f64;
        let sigma2 = 2.0 * n_bar + 1.0;
        let double_fact = [1.0, 3.0, 15.0, 105.0, 945.0];
        let even: Vec<f64> =
            (1..=5).map(|k| double_fact[k - 1] * sigma2.powi(k as i32)).collect();
        let normal = tm.invert_even_moments(&even).unwrap();
        for (m, &nm) in normal.iter().enumerate() {
            let m = m + 1;
            let expect: f64 = (1..=m).map(|i| i as f64).product::<f64>() * n_bar.powi(m as i32);
            assert_relative_eq!(nm, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_coherent_moments_through_inversion() {
        // Phase-averaged coherent even moments by numerical theta
        // integration of the unit-variance Gaussian about 2 |alpha| cos
        // theta.
        let tm = build_transfer_matrix(5).unwrap();
        let mean = 1.3f64;
        let amp = 2.0 * mean.sqrt();
        let gauss_even = |mu: f64, k: usize| -> f64 {
            // E[(mu + Z)^{2k}] with Z standard normal.
            let binom = |n: usize, r: usize| -> f64 {
                (1..=r).map(|i| (n - r + i) as f64 / i as f64).product()
            };
            let double_fact = [1.0, 1.0, 3.0, 15.0, 105.0, 945.0];
            (0..=k).map(|j| binom(2 * k, 2 * j) * mu.powi((2 * k - 2 * j) as i32) * double_fact[j]).sum()
        };
        let steps = 4096;
        let even: Vec<f64> = (1..=5)
            .map(|k| {
                (0..steps)
                    .map(|i| {
                        let theta = std::f64::consts::TAU * i as f64 / steps as f64;
                        gauss_even(amp * theta.cos(), k)
                    })
                    .sum::<f64>()
                    / steps as f64
            })
            .collect();
        let normal = tm.invert_even_moments(&even).unwrap();
        for (m, &nm) in normal.iter().enumerate() {
            let expect = mean.powi(m as i32 + 1);
            assert_relative_eq!(nm, expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn simulated_coherent_moments_near_one() {
        let report =
            simulate_moments(HomodyneState::Coherent { mean: 1.0 }, 10, 200_000, 3, 11).unwrap();
        for m in 2..=3 {
            let g = report.g(m).unwrap();
            let s = report.sigma(m).unwrap();
            assert!((g - 1.0).abs() < 5.0 * s.max(1e-3), "g({m}) = {g} +- {s}");
        }
        assert!((report.mean_photon_number() - 1.0).abs() < 0.05);
    }

    #[test]
    fn simulated_thermal_moments_near_factorial() {
        let report =
            simulate_moments(HomodyneState::Thermal { mean: 1.0 }, 10, 200_000, 3, 13).unwrap();
        assert!((report.g(2).unwrap() - 2.0).abs() < 5.0 * report.sigma(2).unwrap().max(5e-3));
        assert!((report.g(3).unwrap() - 6.0).abs() < 5.0 * report.sigma(3).unwrap().max(5e-2));
    }

    #[test]
    fn batch_and_streaming_paths_agree() {
        let state = HomodyneState::Thermal { mean: 0.5 };
        let batch = sample_quadratures(state, 100_000, 21).unwrap();
        let from_batch = moments_from_quadratures(&batch, 2, 4).unwrap();
        assert!((from_batch.g(2).unwrap() - 2.0).abs() < 0.2);
    }

    #[test]
    fn determinism_per_seed() {
        let state = HomodyneState::Coherent { mean: 0.7 };
        let a = simulate_moments(state, 4, 50_000, 3, 9).unwrap();
        let b = simulate_moments(state, 4, 50_000, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vacuum_signal_rejected() {
        let batch = QuadratureBatch::new(vec![0.0; 1000], "degenerate", 0).unwrap();
        assert!(matches!(
            moments_from_quadratures(&batch, 2, 4),
            Err(Error::VacuumOnly)
        ));
    }

    #[test]
    fn negative_mean_rejected() {
        assert!(sample_quadratures(HomodyneState::Thermal { mean: -0.1 }, 10, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let batch = sample_quadratures(HomodyneState::Thermal { mean: 0.3 }, 200, 17).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf).unwrap();
        let back = QuadratureBatch::read_csv(buf.as_slice()).unwrap();
        assert_eq!(batch, back);
    }
}
