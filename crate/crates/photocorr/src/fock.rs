//! Truncated Fock-space numerics: the state catalog, displacement-operator
//! matrix elements, two-mode squeezed joint statistics and the brute-force
//! normal-ordering oracle the other modules validate against.
//!
//! Every constructor here computes a rigorous bound on the probability mass
//! lost to truncation and refuses to hand out a silently wrong state:
//! [`make_state`] fails unless the tail bound is at or below
//! [`TAIL_TOLERANCE`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tail-mass tolerance enforced by the state catalog.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Normalization slack tolerated by validating constructors.
const NORM_SLACK: f64 = 1e-9;

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// n (n-1) ... (n-m+1) as f64; zero when m > n.
pub(crate) fn falling_factorial(n: usize, m: usize) -> f64 {
    if m > n {
        return 0.0;
    }
    ((n - m + 1)..=n).map(|k| k as f64).product()
}

/// A phase-space displacement amplitude in the dimensionless units of the
/// Wigner-function normalization used by [`crate::phasespace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementAmplitude {
    pub re: f64,
    pub im: f64,
}

impl DisplacementAmplitude {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar(magnitude: f64, phase: f64) -> Self {
        Self { re: magnitude * phase.cos(), im: magnitude * phase.sin() }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// A truncated photon-number distribution with an explicit upper bound on
/// the probability mass above the truncation.
///
/// This is the universal currency between modules: detector simulations
/// consume it, analysis pipelines produce it, and the moment machinery in
/// [`crate::moments`] evaluates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonStatistics {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl PhotonStatistics {
    /// Validating constructor. `probs[n]` is the probability of `n` photons
    /// for `n = 0..=n_max`; `tail_bound` bounds the mass above `n_max`.
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if !(0.0..=1.0).contains(&tail_bound) {
            return Err(Error::InvalidDistribution(format!(
                "tail bound {tail_bound} outside [0, 1]"
            )));
        }
        for (n, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(-NORM_SLACK..=1.0 + NORM_SLACK).contains(&p) {
                return Err(Error::InvalidDistribution(format!(
                    "probability {p} at n = {n} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if sum > 1.0 + NORM_SLACK || sum < 1.0 - tail_bound - NORM_SLACK {
            return Err(Error::InvalidDistribution(format!(
                "total mass {sum} inconsistent with tail bound {tail_bound}"
            )));
        }
        Ok(Self { probs, tail_bound })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, &p)| n as f64 * p).sum()
    }

    /// Inverse-CDF sample of a photon number; mass above the truncation is
    /// assigned to `n_max`.
    pub fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (n, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return n;
            }
        }
        self.n_max()
    }
}

/// Pure-state carrier: complex amplitude per photon number.
#[derive(Debug, Clone, PartialEq)]
pub struct FockAmplitudeVector {
    amps: Vec<Complex64>,
    tail_bound: f64,
}

impl FockAmplitudeVector {
    pub fn new(amps: Vec<Complex64>, tail_bound: f64) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidDistribution("empty amplitude vector".into()));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if norm > 1.0 + NORM_SLACK || norm < 1.0 - tail_bound - NORM_SLACK {
            return Err(Error::InvalidDistribution(format!(
                "squared norm {norm} inconsistent with tail bound {tail_bound}"
            )));
        }
        Ok(Self { amps, tail_bound })
    }

    /// Fock state |k> on a space truncated at `n_max`.
    pub fn fock(k: usize, n_max: usize) -> Result<Self> {
        if k > n_max {
            return Err(Error::TruncationInsufficient { tail: 1.0, tol: TAIL_TOLERANCE, n_max });
        }
        let mut amps = vec![Complex64::ZERO; n_max + 1];
        amps[k] = Complex64::ONE;
        Self::new(amps, 0.0)
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn n_max(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn statistics(&self) -> Result<PhotonStatistics> {
        PhotonStatistics::new(self.amps.iter().map(|a| a.norm_sqr()).collect(), self.tail_bound)
    }
}

/// Joint distribution of total signal vs total idler photon number for a
/// photon-number correlated source, stored as a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPhotonStatistics {
    /// Row-major `p[ns][ni]`.
    probs: Vec<Vec<f64>>,
    tail_bound: f64,
}

impl JointPhotonStatistics {
    pub fn new(probs: Vec<Vec<f64>>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() || probs[0].is_empty() {
            return Err(Error::InvalidDistribution("empty joint distribution".into()));
        }
        let cols = probs[0].len();
        let mut sum = 0.0;
        for row in &probs {
            if row.len() != cols {
                return Err(Error::InvalidDistribution("ragged joint distribution".into()));
            }
            for &p in row {
                if !p.is_finite() || p < -NORM_SLACK {
                    return Err(Error::InvalidDistribution(format!("negative entry {p}")));
                }
                sum += p;
            }
        }
        if sum > 1.0 + NORM_SLACK || sum < 1.0 - tail_bound - NORM_SLACK {
            return Err(Error::InvalidDistribution(format!(
                "total mass {sum} inconsistent with tail bound {tail_bound}"
            )));
        }
        Ok(Self { probs, tail_bound })
    }

    /// Strictly number-correlated state from its diagonal p(n, n).
    pub fn from_diagonal(diag: Vec<f64>, tail_bound: f64) -> Result<Self> {
        let n = diag.len();
        let mut probs = vec![vec![0.0; n]; n];
        for (i, &p) in diag.iter().enumerate() {
            probs[i][i] = p;
        }
        Self::new(probs, tail_bound)
    }

    pub fn prob(&self, n_s: usize, n_i: usize) -> f64 {
        self.probs.get(n_s).and_then(|r| r.get(n_i)).copied().unwrap_or(0.0)
    }

    pub fn n_max_signal(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn n_max_idler(&self) -> usize {
        self.probs[0].len() - 1
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Marginal photon statistics of the signal beam.
    pub fn marginal_signal(&self) -> Result<PhotonStatistics> {
        let probs = self.probs.iter().map(|row| row.iter().sum()).collect();
        PhotonStatistics::new(probs, self.tail_bound)
    }

    pub fn mean_signal(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(ns, row)| ns as f64 * row.iter().sum::<f64>())
            .sum()
    }

    /// Joint factorial moment <:N_s^w N_i^v:> by direct summation.
    pub fn joint_factorial_moment(&self, w: usize, v: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(ns, row)| {
                let fs = falling_factorial(ns, w);
                if fs == 0.0 {
                    return 0.0;
                }
                fs * row
                    .iter()
                    .enumerate()
                    .map(|(ni, &p)| falling_factorial(ni, v) * p)
                    .sum::<f64>()
            })
            .sum()
    }
}

/// States the catalog can produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateKind {
    Fock { k: usize },
    Poisson { mean: f64 },
    Thermal { mean: f64 },
    DisplacedFock { k: usize, alpha: DisplacementAmplitude },
}

/// Construct the photon statistics of a catalog state on a space truncated
/// at `n_max`, refusing truncations whose tail bound exceeds
/// [`TAIL_TOLERANCE`].
pub fn make_state(kind: StateKind, n_max: usize) -> Result<PhotonStatistics> {
    match kind {
        StateKind::Fock { k } => {
            if k > n_max {
                return Err(Error::TruncationInsufficient {
                    tail: 1.0,
                    tol: TAIL_TOLERANCE,
                    n_max,
                });
            }
            let mut probs = vec![0.0; n_max + 1];
            probs[k] = 1.0;
            PhotonStatistics::new(probs, 0.0)
        }
        StateKind::Poisson { mean } => {
            if mean < 0.0 {
                return Err(Error::invalid("mean", "negative mean photon number"));
            }
            let mut probs = vec![0.0; n_max + 1];
            probs[0] = (-mean).exp();
            for n in 1..=n_max {
                probs[n] = probs[n - 1] * mean / n as f64;
            }
            // Geometric domination: p(n+1) ratios are <= mean/(n_max + 2)
            // above the truncation.
            let next = probs[n_max] * mean / (n_max as f64 + 1.0);
            let ratio = mean / (n_max as f64 + 2.0);
            let tail = if ratio < 1.0 { next / (1.0 - ratio) } else { 1.0 };
            check_tail(tail, n_max)?;
            PhotonStatistics::new(probs, tail)
        }
        StateKind::Thermal { mean } => {
            if mean < 0.0 {
                return Err(Error::invalid("mean", "negative mean photon number"));
            }
            let strength = mean / (1.0 + mean);
            let mut probs = vec![0.0; n_max + 1];
            probs[0] = 1.0 - strength;
            for n in 1..=n_max {
                probs[n] = probs[n - 1] * strength;
            }
            // Exact geometric tail.
            let tail = strength.powi(n_max as i32 + 1);
            check_tail(tail, n_max)?;
            PhotonStatistics::new(probs, tail)
        }
        StateKind::DisplacedFock { k, alpha } => {
            displaced_fock_amplitudes(k, alpha, n_max)?.statistics()
        }
    }
}

fn check_tail(tail: f64, n_max: usize) -> Result<()> {
    if tail > TAIL_TOLERANCE {
        Err(Error::TruncationInsufficient { tail, tol: TAIL_TOLERANCE, n_max })
    } else {
        Ok(())
    }
}

/// Amplitudes <n|D(alpha)|k> for n = 0..=n_max, with the unitarity deficit
/// as tail bound.
pub fn displaced_fock_amplitudes(
    k: usize,
    alpha: DisplacementAmplitude,
    n_max: usize,
) -> Result<FockAmplitudeVector> {
    if k > n_max {
        return Err(Error::TruncationInsufficient { tail: 1.0, tol: TAIL_TOLERANCE, n_max });
    }
    let amps: Vec<Complex64> =
        (0..=n_max).map(|m| displacement_element(m, k, alpha)).collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let tail = (1.0 - norm).max(0.0);
    check_tail(tail, n_max)?;
    FockAmplitudeVector::new(amps, tail)
}

/// Single matrix element <m|D(alpha)|n> via the associated-Laguerre closed
/// form with a logarithmic factorial prefactor. Stable to n_max ~ 200 for
/// moderate displacements.
pub fn displacement_element(m: usize, n: usize, alpha: DisplacementAmplitude) -> Complex64 {
    let a = alpha.as_complex();
    let x = alpha.norm_sqr();
    let (lo, hi) = (m.min(n), m.max(n));
    let d = hi - lo;
    if x == 0.0 {
        return if d == 0 { Complex64::ONE } else { Complex64::ZERO };
    }
    let laguerre = associated_laguerre(lo, d as f64, x);
    // ln of sqrt(lo!/hi!) |alpha|^d e^{-x/2}
    let ln_mag =
        0.5 * (ln_factorial(lo) - ln_factorial(hi)) + 0.5 * d as f64 * x.ln() - 0.5 * x;
    let unit = a / x.sqrt();
    // <m|D|n> carries alpha^{m-n} above the diagonal and (-conj(alpha))^{n-m}
    // below it.
    let phase = if m >= n { unit.powu(d as u32) } else { (-unit.conj()).powu(d as u32) };
    ln_mag.exp() * laguerre * phase
}

/// Associated Laguerre polynomial L_k^{(a)}(x) by upward recurrence.
fn associated_laguerre(k: usize, a: f64, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + a - x;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + a - x) * cur - (jf + a) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Full displacement matrix <m|D(alpha)|n> on the truncated space, row-major
/// `(n_max + 1) x (n_max + 1)`.
pub fn displacement_matrix(
    alpha: DisplacementAmplitude,
    n_max: usize,
) -> nalgebra::DMatrix<Complex64> {
    nalgebra::DMatrix::from_fn(n_max + 1, n_max + 1, |m, n| displacement_element(m, n, alpha))
}

/// Joint signal-idler photon statistics of the multimode two-mode squeezed
/// state with per-mode squeezing r_q = B * lambda_q.
///
/// Each Schmidt mode contributes an independent geometric pair-number
/// distribution with strength tanh^2(r_q); the total pair number is their
/// convolution and signal and idler numbers are strictly equal.
pub fn two_mode_squeezed_joint(
    mode_weights: &[f64],
    strength: f64,
    n_max: usize,
) -> Result<JointPhotonStatistics> {
    if mode_weights.is_empty() {
        return Err(Error::invalid("mode_weights", "no modes"));
    }
    if strength < 0.0 {
        return Err(Error::invalid("strength", "negative process strength"));
    }
    let norm: f64 = mode_weights.iter().map(|w| w * w).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "mode_weights",
            format!("sum of squared weights is {norm}, expected 1"),
        ));
    }
    // Convolve the truncated per-mode geometric distributions.
    let mut total = vec![0.0; n_max + 1];
    total[0] = 1.0;
    for &w in mode_weights {
        let r = strength * w;
        let xi2 = r.tanh().powi(2);
        let mut mode = vec![0.0; n_max + 1];
        mode[0] = 1.0 - xi2;
        for n in 1..=n_max {
            mode[n] = mode[n - 1] * xi2;
        }
        let mut next = vec![0.0; n_max + 1];
        for (i, &t) in total.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            for (j, &m) in mode.iter().take(n_max + 1 - i).enumerate() {
                next[i + j] += t * m;
            }
        }
        total = next;
    }
    let sum: f64 = total.iter().sum();
    let tail = (1.0 - sum).max(0.0);
    check_tail(tail, n_max)?;
    JointPhotonStatistics::from_diagonal(total, tail)
}

/// Mean photon number of the multimode two-mode squeezed state,
/// sum_q sinh^2(B lambda_q).
pub fn two_mode_squeezed_mean(mode_weights: &[f64], strength: f64) -> f64 {
    mode_weights.iter().map(|&w| (strength * w).sinh().powi(2)).sum()
}

/// Brute-force m-th factorial moment <:N^m:> = sum_n n!/(n-m)! rho_n.
///
/// This direct summation is the cross-module oracle: every other route to a
/// factorial moment in the crate is validated against it.
pub fn normal_ordered_moment_oracle(stats: &PhotonStatistics, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("m", "order must be at least 1"));
    }
    if m > stats.n_max() {
        return Err(Error::OrderExceedsTruncation { order: m, n_max: stats.n_max() });
    }
    Ok(stats
        .probs()
        .iter()
        .enumerate()
        .map(|(n, &p)| falling_factorial(n, m) * p)
        .sum())
}
