//! Normalized factorial moments, the moment generating function, parity,
//! and moment-based nonclassicality criteria.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::fock::{normal_ordered_moment_oracle, PhotonStatistics};
use crate::{Error, Result};

/// Absolute slack tolerance for criteria evaluated on analytic inputs.
const ANALYTIC_TOLERANCE: f64 = 1e-9;

/// A criterion fires only when the slack is negative by more than this many
/// propagated standard deviations.
const SIGNIFICANCE_SIGMAS: f64 = 3.0;

/// How a set of moments was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    Analytic,
    MonteCarlo,
    Measured,
}

/// Normalized factorial moments g^(m) for m = 1..=m_max with one-sigma
/// uncertainties (zero when analytic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    values: Vec<f64>,
    uncertainties: Vec<f64>,
    mean_photon_number: f64,
    source: MomentSource,
}

impl MomentReport {
    pub fn new(
        values: Vec<f64>,
        uncertainties: Vec<f64>,
        mean_photon_number: f64,
        source: MomentSource,
    ) -> Result<Self> {
        if values.is_empty() || values.len() != uncertainties.len() {
            return Err(Error::invalid("values", "empty or mismatched uncertainty length"));
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("values", "g^(1) must be 1 by construction"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("values", "moments must be finite and nonnegative"));
        }
        if uncertainties.iter().any(|u| !u.is_finite() || *u < 0.0) {
            return Err(Error::invalid("uncertainties", "must be finite and nonnegative"));
        }
        Ok(Self { values, uncertainties, mean_photon_number, source })
    }

    pub fn order_max(&self) -> usize {
        self.values.len()
    }

    /// g^(m); g^(0) is 1 by the normalized-moment convention.
    pub fn g(&self, m: usize) -> Option<f64> {
        if m == 0 {
            Some(1.0)
        } else {
            self.values.get(m - 1).copied()
        }
    }

    /// Uncertainty of g^(m); orders 0 and 1 are exact.
    pub fn sigma(&self, m: usize) -> Option<f64> {
        if m == 0 {
            Some(0.0)
        } else {
            self.uncertainties.get(m - 1).copied()
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn uncertainties(&self) -> &[f64] {
        &self.uncertainties
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.mean_photon_number
    }

    pub fn source(&self) -> MomentSource {
        self.source
    }
}

/// Outcome of a single nonclassicality criterion.
///
/// `statistic` is a signed slack: negative values point toward
/// nonclassicality. The flag is set only when the slack is negative beyond
/// the significance threshold (3 sigma with uncertainties, 1e-9 absolute on
/// analytic input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonclassicalityVerdict {
    pub criterion: String,
    pub statistic: f64,
    /// Determinant of the moment matrix, for the matrix criterion.
    pub determinant: Option<f64>,
    pub nonclassical: bool,
    /// |slack| / sigma, when uncertainties were supplied.
    pub significance: Option<f64>,
}

fn decide(criterion: &str, slack: f64, sigma: f64, determinant: Option<f64>) -> NonclassicalityVerdict {
    let (nonclassical, significance) = if sigma > 0.0 {
        (slack < -SIGNIFICANCE_SIGMAS * sigma, Some(-slack / sigma))
    } else {
        (slack < -ANALYTIC_TOLERANCE, None)
    };
    NonclassicalityVerdict {
        criterion: criterion.to_string(),
        statistic: slack,
        determinant,
        nonclassical,
        significance,
    }
}

/// Exact normalized factorial moments of a photon-number distribution,
/// g^(m) = sum_n n!/(n-m)! rho_n / (sum_n n rho_n)^m.
pub fn moments_from_statistics(stats: &PhotonStatistics, m_max: usize) -> Result<MomentReport> {
    let mean = stats.mean();
    if mean <= 0.0 {
        return Err(Error::VacuumOnly);
    }
    if m_max > stats.n_max() {
        return Err(Error::OrderExceedsTruncation { order: m_max, n_max: stats.n_max() });
    }
    let mut values = Vec::with_capacity(m_max);
    values.push(1.0);
    for m in 2..=m_max {
        values.push(normal_ordered_moment_oracle(stats, m)? / mean.powi(m as i32));
    }
    MomentReport::new(values, vec![0.0; m_max], mean, MomentSource::Analytic)
}

/// M(mu) = sum_n (1 - mu)^n rho_n, evaluated directly from the statistics.
pub fn mgf_from_statistics(stats: &PhotonStatistics, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    let base = 1.0 - mu;
    let mut power = 1.0;
    let mut sum = 0.0;
    for &p in stats.probs() {
        sum += power * p;
        power *= base;
    }
    Ok(sum)
}

/// M(mu) from a moment report via the series sum_m (g^(m)/m!) (-mu <n>)^m.
///
/// Returns the partial sum and the magnitude of the last term as a
/// truncation bound. Fails with [`Error::SeriesDivergence`] when the terms
/// grow for two consecutive orders.
pub fn mgf_from_moments(report: &MomentReport, mu: f64) -> Result<(f64, f64)> {
    check_mu(mu)?;
    let x = -mu * report.mean_photon_number();
    let mut sum = 1.0; // m = 0 term
    let mut last = f64::INFINITY;
    let mut growing = 0;
    let mut factorial = 1.0;
    let mut power = 1.0;
    let mut bound = 0.0;
    for m in 1..=report.order_max() {
        factorial *= m as f64;
        power *= x;
        let term = report.g(m).unwrap() / factorial * power;
        if term.abs() > last {
            growing += 1;
            if growing >= 2 {
                return Err(Error::SeriesDivergence { order: m, partial: sum });
            }
        } else {
            growing = 0;
        }
        last = term.abs();
        sum += term;
        bound = term.abs();
    }
    Ok((sum, bound))
}

fn check_mu(mu: f64) -> Result<()> {
    if (0.0..=2.0).contains(&mu) {
        Ok(())
    } else {
        Err(Error::invalid("mu", "must lie in [0, 2]"))
    }
}

/// Photon-number parity <(-1)^n> = M(2).
pub fn parity_from_statistics(stats: &PhotonStatistics) -> f64 {
    mgf_from_statistics(stats, 2.0).expect("mu = 2 is always valid")
}

/// Parity via the moment series; same divergence contract as
/// [`mgf_from_moments`].
pub fn parity_from_moments(report: &MomentReport) -> Result<(f64, f64)> {
    mgf_from_moments(report, 2.0)
}

/// Hankel moment-matrix criterion: the `size x size` matrix with entries
/// g^(i+j) has only nonnegative eigenvalues for classical light; a negative
/// eigenvalue (equivalently negative determinant) signals nonclassicality.
pub fn moment_matrix_test(report: &MomentReport, size: usize) -> Result<NonclassicalityVerdict> {
    if size < 2 {
        return Err(Error::invalid("size", "matrix must be at least 2x2"));
    }
    let highest = 2 * size - 2;
    if report.order_max() < highest {
        return Err(Error::invalid(
            "report",
            format!("needs orders up to {highest}, has {}", report.order_max()),
        ));
    }
    let matrix = DMatrix::from_fn(size, size, |i, j| report.g(i + j).unwrap());
    let eigen = matrix.clone().symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let det: f64 = eigen.eigenvalues.iter().product();

    // First-order sensitivity of the smallest eigenvalue to each moment.
    let idx = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let v = eigen.eigenvectors.column(idx);
    let mut sigma_sq = 0.0;
    for k in 2..=highest {
        let sens: f64 = (0..size)
            .flat_map(|i| (0..size).map(move |j| (i, j)))
            .filter(|&(i, j)| i + j == k)
            .map(|(i, j)| v[i] * v[j])
            .sum();
        sigma_sq += (sens * report.sigma(k).unwrap()).powi(2);
    }
    Ok(decide("moment-matrix", min_eig, sigma_sq.sqrt(), Some(det)))
}

/// Classical moments are non-decreasing in the order; any adjacent pair with
/// g^(m+1) < g^(m) is a nonclassicality witness.
pub fn monotonicity_test(report: &MomentReport) -> Result<NonclassicalityVerdict> {
    if report.order_max() < 2 {
        return Err(Error::invalid("report", "needs at least two orders"));
    }
    let mut worst_slack = f64::INFINITY;
    let mut worst_sigma = 0.0f64;
    for m in 1..report.order_max() {
        let slack = report.g(m + 1).unwrap() - report.g(m).unwrap();
        let sigma =
            (report.sigma(m + 1).unwrap().powi(2) + report.sigma(m).unwrap().powi(2)).sqrt();
        // Compare pairs by their standardized violation.
        let better = if worst_sigma > 0.0 || sigma > 0.0 {
            slack / sigma.max(f64::MIN_POSITIVE) < worst_slack / worst_sigma.max(f64::MIN_POSITIVE)
        } else {
            slack < worst_slack
        };
        if better {
            worst_slack = slack;
            worst_sigma = sigma;
        }
    }
    Ok(decide("monotonicity", worst_slack, worst_sigma, None))
}

/// Schwarz-inequality criterion g^(h-m) g^(h+m) >= [g^(h)]^2.
pub fn schwarz_test(report: &MomentReport, h: usize, m: usize) -> Result<NonclassicalityVerdict> {
    if m > h {
        return Err(Error::invalid("m", "requires h - m >= 0"));
    }
    if report.order_max() < h + m {
        return Err(Error::invalid(
            "report",
            format!("needs order {}, has {}", h + m, report.order_max()),
        ));
    }
    let lo = report.g(h - m).unwrap();
    let hi = report.g(h + m).unwrap();
    let mid = report.g(h).unwrap();
    let slack = lo * hi - mid * mid;
    let sigma = ((hi * report.sigma(h - m).unwrap()).powi(2)
        + (lo * report.sigma(h + m).unwrap()).powi(2)
        + (2.0 * mid * report.sigma(h).unwrap()).powi(2))
    .sqrt();
    Ok(decide("schwarz", slack, sigma, None))
}
