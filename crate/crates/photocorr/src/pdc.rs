//! Twin beams from parametric down-conversion: Schmidt decomposition of a
//! joint spectral amplitude, effective mode number, joint normalized
//! moments with their weak-pump closed forms, heralded-state statistics
//! under click and photon-number-resolving heralds, and heralded-g2 versus
//! CAR curves.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::detection::{DetectorKind, DetectorModel};
use crate::fock::{
    falling_factorial, two_mode_squeezed_joint, two_mode_squeezed_mean, JointPhotonStatistics,
    PhotonStatistics,
};
use crate::moments::NonclassicalityVerdict;
use crate::{Error, Result};

/// Complex joint spectral amplitude sampled on a rectangular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectralAmplitude {
    omega_signal: Vec<f64>,
    omega_idler: Vec<f64>,
    /// Row index follows the signal axis.
    amplitude: DMatrix<Complex64>,
}

impl JointSpectralAmplitude {
    pub fn new(
        omega_signal: Vec<f64>,
        omega_idler: Vec<f64>,
        amplitude: DMatrix<Complex64>,
    ) -> Result<Self> {
        if omega_signal.len() != amplitude.nrows() || omega_idler.len() != amplitude.ncols() {
            return Err(Error::invalid("amplitude", "grid and matrix dimensions disagree"));
        }
        if omega_signal.windows(2).any(|w| w[1] <= w[0])
            || omega_idler.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid("grid", "frequency axes must be strictly increasing"));
        }
        if amplitude.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::invalid("amplitude", "non-finite amplitude entry"));
        }
        if amplitude.norm() == 0.0 {
            return Err(Error::invalid("amplitude", "zero amplitude"));
        }
        Ok(Self { omega_signal, omega_idler, amplitude })
    }

    /// Double-Gaussian model amplitude: a product of Gaussians in the sum
    /// and difference frequencies with widths `sigma_plus` and
    /// `sigma_minus`, sampled on a `points`-per-axis grid spanning `span`
    /// around zero detuning.
    pub fn double_gaussian(
        sigma_plus: f64,
        sigma_minus: f64,
        points: usize,
        span: f64,
    ) -> Result<Self> {
        if sigma_plus <= 0.0 || sigma_minus <= 0.0 || span <= 0.0 || points < 2 {
            return Err(Error::invalid("sigma", "widths, span, and points must be positive"));
        }
        let axis: Vec<f64> = (0..points)
            .map(|i| -span + 2.0 * span * i as f64 / (points - 1) as f64)
            .collect();
        let amplitude = DMatrix::from_fn(points, points, |r, c| {
            let (ws, wi) = (axis[r], axis[c]);
            let plus = (ws + wi) / (2.0 * sigma_plus);
            let minus = (ws - wi) / (2.0 * sigma_minus);
            Complex64::new((-plus * plus - minus * minus).exp(), 0.0)
        });
        Self::new(axis.clone(), axis, amplitude)
    }

    pub fn amplitude(&self) -> &DMatrix<Complex64> {
        &self.amplitude
    }

    /// CSV layout: one row per grid point, columns omega_s, omega_i, Re f,
    /// Im f, in row-major order.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["omega_s", "omega_i", "re", "im"])?;
        for (r, &ws) in self.omega_signal.iter().enumerate() {
            for (c, &wi) in self.omega_idler.iter().enumerate() {
                let a = self.amplitude[(r, c)];
                w.write_record([
                    ws.to_string(),
                    wi.to_string(),
                    a.re.to_string(),
                    a.im.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut rows: Vec<(f64, f64, Complex64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::InvalidDistribution(format!("bad column {i}")))
            };
            rows.push((field(0)?, field(1)?, Complex64::new(field(2)?, field(3)?)));
        }
        let mut omega_signal: Vec<f64> = rows.iter().map(|r| r.0).collect();
        omega_signal.dedup();
        let mut omega_idler: Vec<f64> = rows.iter().take_while(|r| r.0 == rows[0].0).map(|r| r.1).collect();
        omega_idler.dedup();
        let (nr, nc) = (omega_signal.len(), omega_idler.len());
        if nr * nc != rows.len() {
            return Err(Error::InvalidDistribution("grid is not rectangular row-major".into()));
        }
        let amplitude = DMatrix::from_fn(nr, nc, |r, c| rows[r * nc + c].2);
        Self::new(omega_signal, omega_idler, amplitude)
    }
}

/// Schmidt weights of a twin-beam state together with the pump strength B.
///
/// Weights are normalized to sum lambda^2 = 1 and stored descending; the
/// per-mode squeezing parameter is B * lambda_q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    weights: Vec<f64>,
    strength: f64,
    /// Squared-weight mass dropped by the rank cutoff.
    residual: f64,
}

impl SchmidtSpectrum {
    pub fn new(weights: Vec<f64>, strength: f64) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights", "need nonnegative finite weights"));
        }
        if weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("weights", "must be sorted descending"));
        }
        let norm: f64 = weights.iter().map(|w| w * w).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("weights", format!("sum of squares {norm} != 1")));
        }
        if strength < 0.0 {
            return Err(Error::invalid("strength", "must be nonnegative"));
        }
        Ok(Self { weights, strength, residual: 0.0 })
    }

    /// `count` equally weighted Schmidt modes.
    pub fn equal_modes(count: usize, strength: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("count", "need at least one mode"));
        }
        Self::new(vec![1.0 / (count as f64).sqrt(); count], strength)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn with_strength(&self, strength: f64) -> Result<Self> {
        if strength < 0.0 {
            return Err(Error::invalid("strength", "must be nonnegative"));
        }
        Ok(Self { strength, ..self.clone() })
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Effective mode number K = 1 / sum lambda^4.
    pub fn schmidt_number(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w.powi(4)).sum::<f64>()
    }

    /// Mean photon number per beam, sum sinh^2(B lambda_q).
    pub fn mean_photon_number(&self) -> f64 {
        two_mode_squeezed_mean(&self.weights, self.strength)
    }

    /// Pump strength reaching the requested mean photon number, by
    /// monotone bisection of sum sinh^2(B lambda_q).
    pub fn strength_for_mean(&self, mean: f64) -> Result<f64> {
        if mean <= 0.0 {
            return Err(Error::invalid("mean", "must be positive"));
        }
        let mut hi = 1.0;
        while two_mode_squeezed_mean(&self.weights, hi) < mean {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::invalid("mean", "out of reach"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if two_mode_squeezed_mean(&self.weights, mid) < mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Exact joint photon statistics at the current strength, growing the
    /// truncation until the tail fits the crate tolerance.
    pub fn joint_statistics(&self) -> Result<JointPhotonStatistics> {
        let mut last = None;
        for n_max in [16usize, 24, 32, 48, 64, 96] {
            match two_mode_squeezed_joint(&self.weights, self.strength, n_max) {
                Ok(joint) => return Ok(joint),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::invalid("strength", "no truncation attempted")))
    }
}

/// Decompose a sampled joint spectral amplitude into Schmidt weights.
///
/// Singular values are normalized to sum lambda^2 = 1; modes below
/// `epsilon * lambda_max` are dropped with their squared mass folded into
/// the reported residual. The pump strength starts at zero; set it with
/// [`SchmidtSpectrum::with_strength`].
pub fn schmidt_decompose(jsa: &JointSpectralAmplitude, epsilon: f64) -> Result<SchmidtSpectrum> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid("epsilon", "cutoff must lie in [0, 1)"));
    }
    let svd = jsa.amplitude.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let norm: f64 = sv.iter().map(|s| s * s).sum();
    let lambda_max = sv[0];
    let mut weights = Vec::new();
    let mut residual = 0.0;
    for s in sv {
        if s >= epsilon * lambda_max && s > 0.0 {
            weights.push(s);
        } else {
            residual += s * s / norm;
        }
    }
    if residual > 0.1 {
        return Err(Error::InvalidDistribution(format!(
            "rank cutoff discards {residual:.3} of the spectral mass; refine the grid"
        )));
    }
    let kept: f64 = weights.iter().map(|w| w * w).sum::<f64>() / norm;
    for w in &mut weights {
        *w /= (norm * kept).sqrt();
    }
    let mut spectrum = SchmidtSpectrum::new(weights, 0.0)?;
    spectrum.residual = residual;
    Ok(spectrum)
}

/// Exact and weak-pump values of a joint normalized moment g^(w,v).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMomentValue {
    /// From the truncated multimode twin-beam state.
    pub exact: f64,
    /// The low-pump-power closed form, where one exists for (w, v).
    pub approximate: Option<f64>,
}

/// g^(w,v) = <: N_s^w N_i^v :> / (<N_s>^w <N_i>^v) for the twin-beam state
/// of `spectrum`, alongside its weak-pump closed form.
pub fn joint_moment(spectrum: &SchmidtSpectrum, w: usize, v: usize) -> Result<JointMomentValue> {
    if w + v == 0 {
        return Err(Error::invalid("order", "need w + v >= 1"));
    }
    let joint = spectrum.joint_statistics()?;
    let mean = joint.mean_signal();
    if mean <= 0.0 {
        return Err(Error::VacuumOnly);
    }
    let exact = joint.joint_factorial_moment(w, v) / mean.powi((w + v) as i32);

    let k = spectrum.schmidt_number();
    let lambda6: f64 = spectrum.weights.iter().map(|l| l.powi(6)).sum();
    let approximate = match (w.min(v), w.max(v)) {
        (0, 1) => Some(1.0),
        (1, 1) => Some(1.0 / mean + 1.0 / k + 1.0),
        (0, 2) => Some(1.0 + 1.0 / k),
        (1, 2) => Some((1.0 + 2.0 / mean) * (1.0 + 1.0 / k) + 2.0 * (1.0 / k + lambda6)),
        _ => None,
    };
    Ok(JointMomentValue { exact, approximate })
}

/// Heralding detector outcome on the idler beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum HeraldOutcome {
    /// The binary detector fired.
    Click,
    /// A photon-number-resolving detector reported exactly `k` photons.
    Pnr { k: usize },
}

/// Heralding arm: detector model plus the accepted outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldSetup {
    pub detector: DetectorModel,
    pub outcome: HeraldOutcome,
}

impl HeraldSetup {
    pub fn click(efficiency: f64) -> Result<Self> {
        Ok(Self {
            detector: DetectorModel::click(efficiency)?,
            outcome: HeraldOutcome::Click,
        })
    }

    pub fn pnr(efficiency: f64, k: usize) -> Result<Self> {
        Ok(Self {
            detector: DetectorModel::pnr(efficiency)?,
            outcome: HeraldOutcome::Pnr { k },
        })
    }

    /// POVM weight of the accepted outcome given `n` idler photons.
    fn weight(&self, n: usize) -> f64 {
        let eta = self.detector.efficiency;
        match self.outcome {
            HeraldOutcome::Click => 1.0 - (1.0 - eta).powi(n as i32),
            HeraldOutcome::Pnr { k } => {
                if n < k {
                    0.0
                } else {
                    let binom: f64 = (1..=k).map(|i| (n - k + i) as f64 / i as f64).product();
                    binom * eta.powi(k as i32) * (1.0 - eta).powi((n - k) as i32)
                }
            }
        }
    }
}

/// Signal statistics conditioned on the herald outcome:
/// rho_h(n_s) = sum_{n_i} p(n_s, n_i) Pi(n_i) / Upsilon.
pub fn herald_state(
    joint: &JointPhotonStatistics,
    setup: &HeraldSetup,
) -> Result<PhotonStatistics> {
    if matches!(setup.detector.kind, DetectorKind::Click)
        && matches!(setup.outcome, HeraldOutcome::Pnr { .. })
    {
        return Err(Error::invalid("setup", "click detector cannot resolve photon number"));
    }
    let mut probs = vec![0.0; joint.n_max_signal() + 1];
    for (ns, p) in probs.iter_mut().enumerate() {
        *p = (0..=joint.n_max_idler())
            .map(|ni| joint.prob(ns, ni) * setup.weight(ni))
            .sum();
    }
    let upsilon: f64 = probs.iter().sum();
    if upsilon <= 0.0 {
        return Err(Error::ZeroHeraldProbability);
    }
    for p in &mut probs {
        *p /= upsilon;
    }
    let tail = (joint.tail_bound() / upsilon).min(1.0);
    PhotonStatistics::new(probs, tail)
}

/// Heralded g^(2) of the signal beam.
pub fn heralded_g2(joint: &JointPhotonStatistics, setup: &HeraldSetup) -> Result<f64> {
    let heralded = herald_state(joint, setup)?;
    let mean = heralded.mean();
    if mean <= 0.0 {
        return Err(Error::VacuumOnly);
    }
    let second: f64 = heralded
        .probs()
        .iter()
        .enumerate()
        .map(|(n, &p)| falling_factorial(n, 2) * p)
        .sum();
    Ok(second / (mean * mean))
}

/// One point of a heralded-g2 versus CAR sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub car: f64,
    pub mean_photon_number: f64,
    pub g2_heralded: f64,
}

/// Heralded g^(2) at each requested coincidences-to-accidentals ratio.
///
/// For each CAR the pump strength is solved from the weak-pump relation
/// CAR = 1/<n> + 1/K + 1, the exact joint state built, and the heralded
/// signal evaluated.
pub fn g2h_curve(
    spectrum: &SchmidtSpectrum,
    car_values: &[f64],
    setup: &HeraldSetup,
) -> Result<Vec<CurvePoint>> {
    let k = spectrum.schmidt_number();
    let floor = 1.0 + 1.0 / k;
    car_values
        .par_iter()
        .map(|&car| {
            if car <= floor {
                return Err(Error::UnattainableCar { car, min: floor });
            }
            let mean = 1.0 / (car - floor);
            let strength = spectrum.strength_for_mean(mean)?;
            let joint = spectrum.with_strength(strength)?.joint_statistics()?;
            Ok(CurvePoint {
                car,
                mean_photon_number: mean,
                g2_heralded: heralded_g2(&joint, setup)?,
            })
        })
        .collect()
}

/// Write a g2h sweep as CSV for plotting.
pub fn write_curve_csv(points: &[CurvePoint], w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["car", "mean_photon_number", "g2_heralded"])?;
    for p in points {
        w.write_record([
            p.car.to_string(),
            p.mean_photon_number.to_string(),
            p.g2_heralded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Twin-beam Cauchy-Schwarz criterion: classical fields obey
/// g^(1,1) <= sqrt(g^(2,0) g^(0,2)); for symmetric beams this is the
/// CAR > 2 threshold. The slack is sqrt(g20 g02) - g11, negative when
/// nonclassical; `sigma` enables the 3-sigma significance rule.
pub fn twin_beam_nonclassicality(
    g11: f64,
    g20: f64,
    g02: f64,
    sigma: Option<f64>,
) -> NonclassicalityVerdict {
    let slack = (g20 * g02).sqrt() - g11;
    let (nonclassical, significance) = match sigma {
        Some(s) if s > 0.0 => (slack < -3.0 * s, Some(-slack / s)),
        _ => (slack < -1e-9, None),
    };
    NonclassicalityVerdict {
        criterion: "twin-beam Cauchy-Schwarz (CAR)".into(),
        statistic: slack,
        determinant: None,
        nonclassical,
        significance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_mode_with_mean(mean: f64) -> SchmidtSpectrum {
        let sm = SchmidtSpectrum::new(vec![1.0], 0.0).unwrap();
        let b = sm.strength_for_mean(mean).unwrap();
        sm.with_strength(b).unwrap()
    }

    #[test]
    fn separable_jsa_is_single_mode() {
        let jsa = JointSpectralAmplitude::double_gaussian(1.0, 1.0, 101, 4.0).unwrap();
        let spectrum = schmidt_decompose(&jsa, 1e-7).unwrap();
        assert!((spectrum.schmidt_number() - 1.0).abs() < 1e-9, "K = {}", spectrum.schmidt_number());
    }

    #[test]
    fn double_gaussian_matches_closed_form() {
        // Mehler-kernel oracle: lambda_q proportional to rho^q with
        // rho = (s+ - s-)/(s+ + s-), so K = (s+^2 + s-^2)/(2 s+ s-).
        let (sp, sm) = (1.0, 0.1);
        let jsa = JointSpectralAmplitude::double_gaussian(sp, sm, 301, 3.5).unwrap();
        let spectrum = schmidt_decompose(&jsa, 1e-9).unwrap();
        let k_oracle = (sp * sp + sm * sm) / (2.0 * sp * sm);
        assert_relative_eq!(spectrum.schmidt_number(), k_oracle, max_relative = 1e-3);
        let rho = (sp - sm) / (sp + sm);
        for q in 0..4 {
            let ratio = spectrum.weights()[q + 1] / spectrum.weights()[q];
            assert_relative_eq!(ratio, rho, max_relative = 1e-3);
        }
    }

    #[test]
    fn two_equal_modes_reconstructed() {
        // Synthesize a rank-2 amplitude from two orthonormal grid vectors.
        let n = 40;
        let mut v1 = DMatrix::zeros(n, 1);
        let mut v2 = DMatrix::zeros(n, 1);
        for i in 0..n {
            let x = i as f64 / n as f64;
            v1[(i, 0)] = Complex64::new((std::f64::consts::TAU * x).sin(), 0.0);
            v2[(i, 0)] = Complex64::new((2.0 * std::f64::consts::TAU * x).sin(), 0.0);
        }
        let amplitude = &v1 * v1.transpose() + &v2 * v2.transpose();
        let axis: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let jsa = JointSpectralAmplitude::new(axis.clone(), axis, amplitude).unwrap();
        let spectrum = schmidt_decompose(&jsa, 1e-9).unwrap();
        assert_relative_eq!(spectrum.schmidt_number(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn car_single_mode_weak_pump() {
        let spectrum = single_mode_with_mean(0.01);
        let jm = joint_moment(&spectrum, 1, 1).unwrap();
        assert_relative_eq!(jm.approximate.unwrap(), 102.0, max_relative = 1e-6);
        let gap = (jm.exact - jm.approximate.unwrap()).abs() / jm.exact;
        assert!(gap <= 5.0 * 0.01, "relative gap {gap}");
    }

    #[test]
    fn g20_limits() {
        let sm = single_mode_with_mean(0.01);
        let jm = joint_moment(&sm, 2, 0).unwrap();
        assert_relative_eq!(jm.exact, 2.0, max_relative = 0.01);
        assert_relative_eq!(jm.approximate.unwrap(), 2.0, epsilon = 1e-12);

        let mm = SchmidtSpectrum::equal_modes(200, 0.0).unwrap();
        let b = mm.strength_for_mean(0.01).unwrap();
        let jm = joint_moment(&mm.with_strength(b).unwrap(), 2, 0).unwrap();
        assert_relative_eq!(jm.exact, 1.0 + 1.0 / 200.0, max_relative = 0.01);
    }

    #[test]
    fn g21_many_mode_limit() {
        let mm = SchmidtSpectrum::equal_modes(200, 0.0).unwrap();
        let b = mm.strength_for_mean(0.1).unwrap();
        let jm = joint_moment(&mm.with_strength(b).unwrap(), 2, 1).unwrap();
        // K -> infinity at <n> = 0.1: (1 + 2/0.1) * 1 + 0 = 21.
        assert_relative_eq!(jm.exact, 21.0, max_relative = 0.01);
    }

    #[test]
    fn closed_forms_track_exact_at_low_power() {
        for modes in [1usize, 2, 10, 200] {
            let spectrum = SchmidtSpectrum::equal_modes(modes, 0.0).unwrap();
            for mean in [0.01, 0.05] {
                let b = spectrum.strength_for_mean(mean).unwrap();
                let s = spectrum.with_strength(b).unwrap();
                for (w, v) in [(1, 1), (2, 0), (2, 1)] {
                    let jm = joint_moment(&s, w, v).unwrap();
                    let approx = jm.approximate.unwrap();
                    let gap = (jm.exact - approx).abs() / jm.exact;
                    assert!(
                        gap <= 5.0 * mean,
                        "K={modes} mean={mean} g({w},{v}): exact {} vs {approx}",
                        jm.exact
                    );
                }
            }
        }
    }

    #[test]
    fn car_inverse_proportionality() {
        for modes in [1usize, 10] {
            let spectrum = SchmidtSpectrum::equal_modes(modes, 0.0).unwrap();
            let k = spectrum.schmidt_number();
            for mean in [0.005, 0.02] {
                let b = spectrum.strength_for_mean(mean).unwrap();
                let jm = joint_moment(&spectrum.with_strength(b).unwrap(), 1, 1).unwrap();
                let product = (jm.exact - (1.0 + 1.0 / k)) * mean;
                assert_relative_eq!(product, 1.0, max_relative = 0.01);
            }
        }
    }

    #[test]
    fn g20_independent_of_pump_in_weak_regime() {
        let spectrum = SchmidtSpectrum::equal_modes(3, 0.0).unwrap();
        let g_at = |mean: f64| {
            let b = spectrum.strength_for_mean(mean).unwrap();
            joint_moment(&spectrum.with_strength(b).unwrap(), 2, 0).unwrap().exact
        };
        let (a, b) = (g_at(0.005), g_at(0.05));
        assert!((a - b).abs() / a < 0.01, "drift {a} vs {b}");
    }

    #[test]
    fn perfect_pnr_herald_gives_fock() {
        let joint = single_mode_with_mean(0.05).joint_statistics().unwrap();
        let setup = HeraldSetup::pnr(1.0, 1).unwrap();
        let heralded = herald_state(&joint, &setup).unwrap();
        assert_relative_eq!(heralded.prob(1), 1.0, epsilon = 1e-12);
        assert_eq!(heralded_g2(&joint, &setup).unwrap(), 0.0);

        let setup2 = HeraldSetup::pnr(1.0, 2).unwrap();
        let heralded2 = herald_state(&joint, &setup2).unwrap();
        assert_relative_eq!(heralded2.prob(2), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn click_herald_on_weak_thermal() {
        // Single-mode squeezing with |xi|^2 = 0.01; a perfect click herald
        // removes only the vacuum, so rho_h(n) is geometric for n >= 1 and
        // g2_h follows from geometric sums.
        let xi2: f64 = 0.01;
        let b = (xi2.sqrt()).atanh();
        let spectrum = SchmidtSpectrum::new(vec![1.0], b).unwrap();
        let joint = spectrum.joint_statistics().unwrap();
        let g2h = heralded_g2(&joint, &HeraldSetup::click(1.0).unwrap()).unwrap();
        // Geometric-sum oracle: with the vacuum removed, <n(n-1)> / <n>^2
        // collapses to exactly 2 xi^2.
        assert_relative_eq!(g2h, 2.0 * xi2, max_relative = 1e-6);
        assert!((g2h - 0.019).abs() <= 0.001 + 1e-9, "g2_h = {g2h}");
    }

    #[test]
    fn weak_herald_click_and_pnr_converge() {
        let joint = single_mode_with_mean(0.05).joint_statistics().unwrap();
        let eta = 1e-3;
        let click = heralded_g2(&joint, &HeraldSetup::click(eta).unwrap()).unwrap();
        let pnr = heralded_g2(&joint, &HeraldSetup::pnr(eta, 1).unwrap()).unwrap();
        assert_relative_eq!(click, pnr, max_relative = 1e-2);
    }

    #[test]
    fn zero_herald_probability_detected() {
        let joint = single_mode_with_mean(0.05).joint_statistics().unwrap();
        let setup = HeraldSetup::pnr(1.0, 40).unwrap();
        assert!(matches!(herald_state(&joint, &setup), Err(Error::ZeroHeraldProbability)));
    }

    #[test]
    fn curve_pnr_perfect_is_zero_line() {
        let spectrum = SchmidtSpectrum::new(vec![1.0], 0.0).unwrap();
        let cars = [5.0, 10.0, 50.0, 200.0];
        let points = g2h_curve(&spectrum, &cars, &HeraldSetup::pnr(1.0, 1).unwrap()).unwrap();
        for p in points {
            assert!(p.g2_heralded.abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn curve_click_decreases_with_car() {
        let spectrum = SchmidtSpectrum::new(vec![1.0], 0.0).unwrap();
        let cars = [3.0, 5.0, 10.0, 30.0, 100.0, 300.0];
        let points = g2h_curve(&spectrum, &cars, &HeraldSetup::click(1.0).unwrap()).unwrap();
        for w in points.windows(2) {
            assert!(w[1].g2_heralded <= w[0].g2_heralded + 1e-12, "{w:?}");
        }
        assert!(points.last().unwrap().g2_heralded < 0.01);
    }

    #[test]
    fn lossier_herald_never_improves_g2h() {
        let spectrum = SchmidtSpectrum::new(vec![1.0], 0.0).unwrap();
        let car = [20.0];
        let mut last = -1.0;
        for eta in [1.0, 0.5, 0.1, 1e-2] {
            let p = g2h_curve(&spectrum, &car, &HeraldSetup::click(eta).unwrap()).unwrap();
            assert!(p[0].g2_heralded >= last - 1e-12, "eta {eta}: {p:?}");
            last = p[0].g2_heralded;
        }
    }

    #[test]
    fn unattainable_car_rejected() {
        let spectrum = SchmidtSpectrum::new(vec![1.0], 0.0).unwrap();
        let result = g2h_curve(&spectrum, &[1.5], &HeraldSetup::click(1.0).unwrap());
        assert!(matches!(result, Err(Error::UnattainableCar { .. })));
    }

    #[test]
    fn nonclassicality_cases() {
        // Strongly pair-correlated twin beams.
        assert!(twin_beam_nonclassicality(102.0, 2.0, 2.0, None).nonclassical);
        // Independent coherent beams sit exactly on the boundary.
        assert!(!twin_beam_nonclassicality(1.0, 1.0, 1.0, None).nonclassical);
        // Marginally above CAR = 2 for thermal marginals.
        assert!(twin_beam_nonclassicality(2.001, 2.0, 2.0, None).nonclassical);
        assert!(!twin_beam_nonclassicality(2.0, 2.0, 2.0, None).nonclassical);
        // Marginal excess within noise is not significant.
        assert!(!twin_beam_nonclassicality(2.001, 2.0, 2.0, Some(0.01)).nonclassical);
    }

    #[test]
    fn jsa_csv_round_trip() {
        let jsa = JointSpectralAmplitude::double_gaussian(1.0, 0.5, 21, 3.0).unwrap();
        let mut buf = Vec::new();
        jsa.write_csv(&mut buf).unwrap();
        let back = JointSpectralAmplitude::read_csv(buf.as_slice()).unwrap();
        assert_eq!(jsa, back);
    }
}
