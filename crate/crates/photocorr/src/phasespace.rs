//! Moment-based phase-space reconstruction: Wigner function, Husimi
//! Q-function, and Fock-state characteristic-function magnitude, each
//! evaluated as a truncated alternating series in the normalized factorial
//! moments of the displaced state.
//!
//! Truncation is the central theme: every value carries the magnitude of
//! its last term as a residual proxy and a convergence flag, so the
//! distortion caused by cutting the series too early is visible rather
//! than silent.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::fock::{
    displacement_element, DisplacementAmplitude, FockAmplitudeVector, PhotonStatistics,
};
use crate::moments::{moments_from_statistics, MomentReport};
use crate::{Error, Result};

/// Convergence threshold on the final series term, relative to the Wigner
/// bound 2/pi.
const CONVERGENCE_FLOOR: f64 = 1e-3 * (2.0 / std::f64::consts::PI);

/// A truncated alternating series with its quality indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSum {
    pub value: f64,
    /// Magnitude of the last term kept, a proxy for the truncation error.
    pub residual: f64,
    /// Set when the last three term magnitudes decrease strictly and the
    /// final one is negligible against 2/pi.
    pub converged: bool,
}

fn truncated_sum(terms: impl Iterator<Item = f64>, scale: f64) -> TruncatedSum {
    let mut value = 0.0;
    let mut tail = [f64::INFINITY; 3];
    for t in terms {
        value += t;
        tail = [tail[1], tail[2], t.abs()];
    }
    let converged = tail[0] > tail[1] && tail[1] > tail[2] && tail[2] < CONVERGENCE_FLOOR;
    TruncatedSum { value: scale * value, residual: scale * tail[2], converged }
}

/// Photon statistics of a pure state viewed from the displaced frame:
/// rho_n(alpha) = |<n| D(-alpha) |psi>|^2.
pub fn displaced_pure_statistics(
    state: &FockAmplitudeVector,
    alpha: DisplacementAmplitude,
) -> Result<PhotonStatistics> {
    let n_max = state.n_max();
    let amps: Vec<num_complex::Complex64> = (0..=n_max)
        .map(|n| {
            // <n|D†(alpha)|k> = conj(<k|D(alpha)|n>)
            (0..=n_max)
                .map(|k| displacement_element(k, n, alpha).conj() * state.amps()[k])
                .sum()
        })
        .collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let deficit = (1.0 - norm).max(0.0) + state.tail_bound();
    if deficit > 1e-8 {
        return Err(Error::TruncationInsufficient { tail: deficit, tol: 1e-8, n_max });
    }
    let probs = amps.iter().map(|a| a.norm_sqr().min(1.0)).collect();
    PhotonStatistics::new(probs, deficit)
}

/// Displaced-frame statistics of a Fock-diagonal mixed state:
/// rho_n(alpha) = sum_k rho_k |<k| D(alpha) |n>|^2.
pub fn displaced_diagonal_statistics(
    state: &PhotonStatistics,
    alpha: DisplacementAmplitude,
) -> Result<PhotonStatistics> {
    let n_max = state.n_max();
    let mut probs = vec![0.0; n_max + 1];
    let mut norm_deficit = 0.0f64;
    for (k, &rho_k) in state.probs().iter().enumerate() {
        if rho_k == 0.0 {
            continue;
        }
        let row: Vec<f64> =
            (0..=n_max).map(|n| displacement_element(k, n, alpha).norm_sqr()).collect();
        let row_sum: f64 = row.iter().sum();
        // Mass that this Fock component pushes beyond the truncation.
        norm_deficit += rho_k * (1.0 - row_sum).max(0.0);
        for (p, r) in probs.iter_mut().zip(row) {
            *p += rho_k * r;
        }
    }
    let deficit = norm_deficit + state.tail_bound();
    if deficit > 1e-8 {
        return Err(Error::TruncationInsufficient { tail: deficit, tol: 1e-8, n_max });
    }
    PhotonStatistics::new(probs, deficit)
}

fn check_orders(report: &MomentReport, needed: usize) -> Result<()> {
    if needed > report.order_max() {
        return Err(Error::OrderExceedsTruncation {
            order: needed,
            n_max: report.order_max(),
        });
    }
    Ok(())
}

/// Wigner value at the displacement underlying `report`:
/// W = (2/pi) sum_m ((-2)^m / m!) g^(m) <n>^m.
pub fn wigner_from_moments(report: &MomentReport, m_max: usize) -> Result<TruncatedSum> {
    check_orders(report, m_max)?;
    let mean = report.mean_photon_number();
    let mut factorial = 1.0;
    Ok(truncated_sum(
        (0..=m_max).map(|m| {
            if m > 0 {
                factorial *= m as f64;
            }
            (-2.0 * mean).powi(m as i32) / factorial * report.g(m).unwrap()
        }),
        2.0 / std::f64::consts::PI,
    ))
}

/// Husimi Q value: Q = (1/pi) sum_m ((-1)^m / m!) g^(m) <n>^m, the vacuum
/// contribution of the displaced state.
pub fn q_from_moments(report: &MomentReport, m_max: usize) -> Result<TruncatedSum> {
    check_orders(report, m_max)?;
    let mean = report.mean_photon_number();
    let mut factorial = 1.0;
    Ok(truncated_sum(
        (0..=m_max).map(|m| {
            if m > 0 {
                factorial *= m as f64;
            }
            (-mean).powi(m as i32) / factorial * report.g(m).unwrap()
        }),
        1.0 / std::f64::consts::PI,
    ))
}

/// |chi(alpha)|^2 for the Fock state |n>: the n-th photon-number
/// contribution of the displaced state,
/// sum_m ((-1)^m / (n! m!)) g^(m+n) <n>^{m+n}.
pub fn chi_squared_fock(n: usize, report: &MomentReport, m_max: usize) -> Result<TruncatedSum> {
    check_orders(report, m_max + n)?;
    let mean = report.mean_photon_number();
    let n_factorial: f64 = (1..=n).map(|i| i as f64).product();
    let mut factorial = 1.0;
    Ok(truncated_sum(
        (0..=m_max).map(|m| {
            if m > 0 {
                factorial *= m as f64;
            }
            (-1.0f64).powi(m as i32) * mean.powi((m + n) as i32)
                / (n_factorial * factorial)
                * report.g(m + n).unwrap()
        }),
        1.0,
    ))
}

/// One evaluated grid point of a reconstruction sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: DisplacementAmplitude,
    pub m_max: usize,
    pub wigner: TruncatedSum,
    pub q: TruncatedSum,
    pub chi_squared: TruncatedSum,
}

/// Reconstruction values across displacements and truncation orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionGrid {
    /// Fock index used for the characteristic-function channel.
    pub chi_index: usize,
    pub points: Vec<GridPoint>,
}

impl ReconstructionGrid {
    /// CSV export: re_alpha, im_alpha, m_max, wigner, q, chi2, residual,
    /// converged. The residual is the worst of the three channels and the
    /// flag requires all three to converge.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["re_alpha", "im_alpha", "m_max", "wigner", "q", "chi2", "residual", "converged"])?;
        for p in &self.points {
            let residual = p.wigner.residual.max(p.q.residual).max(p.chi_squared.residual);
            let converged = p.wigner.converged && p.q.converged && p.chi_squared.converged;
            w.write_record([
                p.alpha.re.to_string(),
                p.alpha.im.to_string(),
                p.m_max.to_string(),
                p.wigner.value.to_string(),
                p.q.value.to_string(),
                p.chi_squared.value.to_string(),
                residual.to_string(),
                converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluate all three reconstructions for a pure state over a displacement
/// grid and a list of truncation orders.
///
/// The moments consumed are exact: computed from the displaced statistics
/// of `state` at every grid point.
pub fn reconstruct_grid(
    state: &FockAmplitudeVector,
    chi_index: usize,
    alphas: &[DisplacementAmplitude],
    m_maxes: &[usize],
) -> Result<ReconstructionGrid> {
    if alphas.is_empty() || m_maxes.is_empty() {
        return Err(Error::invalid("grid", "need displacements and truncation orders"));
    }
    let order_needed = m_maxes.iter().max().unwrap() + chi_index;
    if order_needed > state.n_max() {
        return Err(Error::OrderExceedsTruncation { order: order_needed, n_max: state.n_max() });
    }
    let mut points = Vec::with_capacity(alphas.len() * m_maxes.len());
    for &alpha in alphas {
        let displaced = displaced_pure_statistics(state, alpha)?;
        if displaced.mean() <= 0.0 {
            // Pure vacuum in the displaced frame: every series is a single
            // m = 0 term.
            let exact = |v: f64| TruncatedSum { value: v, residual: 0.0, converged: true };
            for &m_max in m_maxes {
                points.push(GridPoint {
                    alpha,
                    m_max,
                    wigner: exact(2.0 / std::f64::consts::PI),
                    q: exact(1.0 / std::f64::consts::PI),
                    chi_squared: exact(if chi_index == 0 { 1.0 } else { 0.0 }),
                });
            }
            continue;
        }
        let report = moments_from_statistics(&displaced, order_needed)?;
        for &m_max in m_maxes {
            points.push(GridPoint {
                alpha,
                m_max,
                wigner: wigner_from_moments(&report, m_max)?,
                q: q_from_moments(&report, m_max)?,
                chi_squared: chi_squared_fock(chi_index, &report, m_max)?,
            });
        }
    }
    Ok(ReconstructionGrid { chi_index, points })
}
