//! Trace-analysis chain for photon-number-resolving transition-edge
//! sensors: integrate trace areas in an acceptance window, histogram them,
//! fit a Gaussian mixture with one peak per photon number, convert peak
//! areas into photon statistics, and propagate the fit uncertainties into
//! the normalized moments by Monte-Carlo resampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::fock::{falling_factorial, PhotonStatistics};
use crate::moments::{MomentReport, MomentSource};
use crate::seeding::{batches, stream_rng};
use crate::{Error, Result};

/// A set of equal-length detector traces with their sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TesTraceSet {
    sample_rate: f64,
    traces: Vec<Vec<f64>>,
    label: String,
}

impl TesTraceSet {
    pub fn new(sample_rate: f64, traces: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        if sample_rate <= 0.0 {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        if traces.is_empty() {
            return Err(Error::invalid("traces", "need at least one trace"));
        }
        let len = traces[0].len();
        if len == 0 || traces.iter().any(|t| t.len() != len) {
            return Err(Error::invalid("traces", "all traces must share a nonzero length"));
        }
        Ok(Self { sample_rate, traces, label: label.into() })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn traces(&self) -> &[Vec<f64>] {
        &self.traces
    }

    pub fn trace_len(&self) -> usize {
        self.traces[0].len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// CSV layout: one metadata record, then one trace per row. Floats are
    /// written in shortest round-trip decimal form, so read(write(x)) == x.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(w);
        w.write_record(["sample_rate", &self.sample_rate.to_string(), "label", &self.label])?;
        for trace in &self.traces {
            w.write_record(trace.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut reader =
            csv::ReaderBuilder::new().flexible(true).has_headers(false).from_reader(r);
        let mut records = reader.records();
        let meta = records
            .next()
            .ok_or_else(|| Error::InvalidDistribution("empty trace file".into()))??;
        let sample_rate: f64 = meta
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidDistribution("bad sample_rate field".into()))?;
        let label = meta.get(3).unwrap_or("").to_string();
        let mut traces = Vec::new();
        for record in records {
            let record = record?;
            let trace: std::result::Result<Vec<f64>, _> =
                record.iter().map(|s| s.parse()).collect();
            traces.push(
                trace.map_err(|_| Error::InvalidDistribution("bad sample value".into()))?,
            );
        }
        Self::new(sample_rate, traces, label)
    }

    /// Binary container: little-endian header {magic "TES1", u32 count,
    /// u32 length, f64 sample_rate} followed by f32 samples row-major.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"TES1")?;
        w.write_all(&(self.traces.len() as u32).to_le_bytes())?;
        w.write_all(&(self.trace_len() as u32).to_le_bytes())?;
        w.write_all(&self.sample_rate.to_le_bytes())?;
        for trace in &self.traces {
            for &x in trace {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TES1" {
            return Err(Error::InvalidDistribution("bad magic in binary trace file".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let len = u32::from_le_bytes(u32buf) as usize;
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let sample_rate = f64::from_le_bytes(f64buf);
        let mut traces = Vec::with_capacity(count);
        for _ in 0..count {
            let mut trace = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut u32buf)?;
                trace.push(f32::from_le_bytes(u32buf) as f64);
            }
            traces.push(trace);
        }
        Self::new(sample_rate, traces, "")
    }
}

/// Histogram of trace areas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaHistogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
}

impl AreaHistogram {
    pub fn new(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(Error::invalid("edges", "need counts.len() + 1 edges"));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("edges", "must be strictly increasing"));
        }
        Ok(Self { edges, counts })
    }

    /// Histogram `areas` with Freedman-Diaconis binning, or a fixed bin
    /// count when given.
    pub fn from_areas(areas: &[f64], bin_count: Option<usize>) -> Result<Self> {
        if areas.is_empty() {
            return Err(Error::invalid("areas", "need at least one area"));
        }
        let mut sorted = areas.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let bins = match bin_count {
            Some(b) if b > 0 => b,
            Some(_) => return Err(Error::invalid("bin_count", "must be positive")),
            None => {
                let n = sorted.len();
                let iqr = sorted[(3 * n) / 4] - sorted[n / 4];
                let width = 2.0 * iqr / (n as f64).cbrt();
                if width > 0.0 {
                    ((span / width).ceil() as usize).clamp(1, 4096)
                } else {
                    (n as f64).sqrt().ceil() as usize
                }
            }
        };
        let width = span / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for &a in areas {
            let idx = (((a - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Self::new(edges, counts)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// One Gaussian component gamma * exp(-alpha (A - beta)^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPeak {
    pub amplitude: f64,
    pub inverse_width: f64,
    pub center: f64,
}

/// Log-domain uncertainties of one peak, from the fit covariance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakUncertainty {
    pub var_ln_amplitude: f64,
    pub var_ln_inverse_width: f64,
    pub cov_ln_amp_ln_inv_width: f64,
}

/// Result of the Gaussian-mixture histogram fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub peaks: Vec<GaussianPeak>,
    pub uncertainties: Vec<PeakUncertainty>,
    /// Root-mean-square misfit over the histogram bins.
    pub residual: f64,
    /// FWHM of the one-photon peak divided by the mean peak spacing; 0 for
    /// a single-peak fit.
    pub energy_resolution: f64,
}

/// Photon statistics with a per-bin standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticsWithErrors {
    pub statistics: PhotonStatistics,
    pub deviations: Vec<f64>,
}

impl StatisticsWithErrors {
    pub fn new(statistics: PhotonStatistics, deviations: Vec<f64>) -> Result<Self> {
        if deviations.len() != statistics.probs().len() {
            return Err(Error::invalid("deviations", "length mismatch with statistics"));
        }
        if deviations.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("deviations", "must be finite and nonnegative"));
        }
        Ok(Self { statistics, deviations })
    }

    /// Exact statistics carried with zero uncertainty.
    pub fn exact(statistics: PhotonStatistics) -> Self {
        let deviations = vec![0.0; statistics.probs().len()];
        Self { statistics, deviations }
    }
}

/// Integrate each trace over `[window_start, window_end)`, subtracting a
/// per-trace baseline estimated as the mean of the samples before the
/// window (zero when the window starts at sample 0).
pub fn integrate_areas(
    traces: &TesTraceSet,
    window_start: usize,
    window_end: usize,
) -> Result<Vec<f64>> {
    if window_start >= window_end || window_end > traces.trace_len() {
        return Err(Error::invalid("window", "empty or outside the trace length"));
    }
    Ok(traces
        .traces()
        .par_iter()
        .map(|trace| {
            let baseline = if window_start > 0 {
                trace[..window_start].iter().sum::<f64>() / window_start as f64
            } else {
                0.0
            };
            trace[window_start..window_end].iter().map(|x| x - baseline).sum::<f64>()
        })
        .collect())
}

/// Generate synthetic detector traces: per trace a photon number n drawn
/// from `stats`, an n-scaled copy of `template`, and white Gaussian noise
/// of standard deviation `noise_sigma`. Deterministic per seed.
pub fn synthesize_traces(
    stats: &PhotonStatistics,
    template: &[f64],
    noise_sigma: f64,
    count: usize,
    seed: u64,
) -> Result<TesTraceSet> {
    if template.is_empty() {
        return Err(Error::invalid("template", "must be nonempty"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::invalid("noise_sigma", "must be nonnegative"));
    }
    if count == 0 {
        return Err(Error::invalid("count", "need at least one trace"));
    }
    let traces: Vec<Vec<f64>> = batches(count as u64)
        .into_par_iter()
        .flat_map_iter(|(batch, len)| {
            let mut rng = stream_rng(seed, batch);
            let mut out = Vec::with_capacity(len as usize);
            for _ in 0..len {
                let n = stats.sample(rng.random()) as f64;
                let trace: Vec<f64> = template
                    .iter()
                    .map(|&t| {
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        n * t + noise_sigma * noise
                    })
                    .collect();
                out.push(trace);
            }
            out
        })
        .collect();
    TesTraceSet::new(77_500.0, traces, "synthetic")
}

const LM_MAX_ITERATIONS: usize = 400;

/// Fit `n_peaks` Gaussians to the histogram by damped least squares.
///
/// Peaks are parametrized in the log domain for amplitude and inverse
/// width, which keeps both positive without constraints. Initial centers
/// come from histogram local maxima, extended at the observed spacing when
/// fewer maxima than peaks are visible.
pub fn fit_mixture(hist: &AreaHistogram, n_peaks: usize) -> Result<MixtureFit> {
    if n_peaks == 0 {
        return Err(Error::invalid("n_peaks", "need at least one peak"));
    }
    if hist.total() == 0 {
        return Err(Error::invalid("hist", "histogram is empty"));
    }
    let centers = hist.centers();
    let y: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    if 3 * n_peaks > y.len() {
        return Err(Error::FitDegenerate(format!(
            "{} parameters against {} bins",
            3 * n_peaks,
            y.len()
        )));
    }

    let mut params = initial_parameters(&centers, &y, n_peaks);
    let mut lambda = 1e-3;
    let mut cost = mixture_cost(&params, &centers, &y);
    let mut converged = false;
    let mut jtj = DMatrix::zeros(3 * n_peaks, 3 * n_peaks);
    for _ in 0..LM_MAX_ITERATIONS {
        let (j, r) = mixture_jacobian(&params, &centers, &y);
        jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let mut improved = false;
        for _ in 0..12 {
            let mut damped = jtj.clone();
            for d in 0..damped.nrows() {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&jtr)) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let trial_cost = mixture_cost(&trial, &centers, &y);
            if trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost.max(1e-300);
                params = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_drop < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged {
            break;
        }
        if !improved {
            // Stuck in a damping deadlock at what is numerically a minimum.
            converged = true;
            break;
        }
    }
    let residual = (2.0 * cost / y.len() as f64).sqrt();
    if !converged {
        return Err(Error::FitDidNotConverge { iterations: LM_MAX_ITERATIONS, residual });
    }

    let mut peaks: Vec<GaussianPeak> = params
        .chunks(3)
        .map(|p| GaussianPeak {
            amplitude: p[0].exp(),
            inverse_width: p[1].exp(),
            center: p[2],
        })
        .collect();
    // Photon-number assignment needs the peaks in area order.
    let mut order: Vec<usize> = (0..n_peaks).collect();
    order.sort_by(|&a, &b| peaks[a].center.total_cmp(&peaks[b].center));
    let sorted: Vec<GaussianPeak> = order.iter().map(|&i| peaks[i]).collect();
    if sorted.windows(2).any(|w| w[1].center <= w[0].center) {
        return Err(Error::FitDegenerate("coincident peak centers".into()));
    }
    peaks = sorted;

    // Covariance of the transformed parameters from the final J^T J, scaled
    // by the residual variance estimate.
    let dof = (y.len() - 3 * n_peaks).max(1) as f64;
    let sigma2 = 2.0 * cost / dof;
    let cov = jtj
        .clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .map(|m| m * sigma2)
        .unwrap_or_else(|_| DMatrix::zeros(3 * n_peaks, 3 * n_peaks));
    let uncertainties: Vec<PeakUncertainty> = order
        .iter()
        .map(|&i| PeakUncertainty {
            var_ln_amplitude: cov[(3 * i, 3 * i)].max(0.0),
            var_ln_inverse_width: cov[(3 * i + 1, 3 * i + 1)].max(0.0),
            cov_ln_amp_ln_inv_width: cov[(3 * i, 3 * i + 1)],
        })
        .collect();

    let energy_resolution = if n_peaks >= 2 {
        let spacing: f64 = peaks
            .windows(2)
            .map(|w| w[1].center - w[0].center)
            .sum::<f64>()
            / (n_peaks - 1) as f64;
        let one_photon = peaks.get(1).unwrap_or(&peaks[0]);
        let fwhm = 2.0 * (std::f64::consts::LN_2 / one_photon.inverse_width).sqrt();
        fwhm / spacing
    } else {
        0.0
    };

    Ok(MixtureFit { peaks, uncertainties, residual, energy_resolution })
}

fn initial_parameters(centers: &[f64], y: &[f64], n_peaks: usize) -> Vec<f64> {
    let mut maxima: Vec<usize> = (1..y.len() - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > 0.0)
        .collect();
    if !y.is_empty() && y[0] > *y.get(1).unwrap_or(&0.0) {
        maxima.insert(0, 0);
    }
    maxima.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    maxima.truncate(n_peaks);
    maxima.sort_unstable();
    let mut peak_centers: Vec<f64> = maxima.iter().map(|&i| centers[i]).collect();

    let span = centers[centers.len() - 1] - centers[0];
    let spacing = if peak_centers.len() >= 2 {
        (peak_centers[peak_centers.len() - 1] - peak_centers[0]) / (peak_centers.len() - 1) as f64
    } else {
        span / n_peaks.max(1) as f64
    };
    let spacing = if spacing > 0.0 { spacing } else { span.max(1.0) / n_peaks as f64 };
    if peak_centers.is_empty() {
        peak_centers.push(centers[0]);
    }
    while peak_centers.len() < n_peaks {
        peak_centers.push(peak_centers[peak_centers.len() - 1] + spacing);
    }

    let y_max = y.iter().cloned().fold(1.0, f64::max);
    let alpha0 = 1.0 / (2.0 * (spacing / 3.0).powi(2));
    let mut params = Vec::with_capacity(3 * n_peaks);
    for &c in &peak_centers {
        let idx = centers
            .iter()
            .position(|&x| x >= c)
            .unwrap_or(centers.len() - 1)
            .min(centers.len() - 1);
        let amp = y[idx].max(1e-3 * y_max);
        params.extend_from_slice(&[amp.ln(), alpha0.ln(), c]);
    }
    params
}

fn mixture_model(params: &[f64], a: f64) -> f64 {
    params
        .chunks(3)
        .map(|p| p[0].exp() * (-p[1].exp() * (a - p[2]).powi(2)).exp())
        .sum()
}

fn mixture_cost(params: &[f64], centers: &[f64], y: &[f64]) -> f64 {
    0.5 * centers
        .iter()
        .zip(y)
        .map(|(&a, &yi)| (mixture_model(params, a) - yi).powi(2))
        .sum::<f64>()
}

fn mixture_jacobian(params: &[f64], centers: &[f64], y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let mut j = DMatrix::zeros(centers.len(), params.len());
    let mut r = DVector::zeros(centers.len());
    for (row, (&a, &yi)) in centers.iter().zip(y).enumerate() {
        let mut model = 0.0;
        for (p, chunk) in params.chunks(3).enumerate() {
            let (gamma, alpha, beta) = (chunk[0].exp(), chunk[1].exp(), chunk[2]);
            let d = a - beta;
            let term = gamma * (-alpha * d * d).exp();
            model += term;
            j[(row, 3 * p)] = term;
            j[(row, 3 * p + 1)] = -term * alpha * d * d;
            j[(row, 3 * p + 2)] = 2.0 * term * alpha * d;
        }
        r[row] = model - yi;
    }
    (j, r)
}

/// Convert fitted peaks to photon statistics: the n-th probability is the
/// n-th peak area gamma_n sqrt(pi / alpha_n) over the total, with per-bin
/// errors from the fit covariance by the delta method.
pub fn extract_statistics(fit: &MixtureFit) -> Result<StatisticsWithErrors> {
    let areas: Vec<f64> =
        fit.peaks.iter().map(|p| p.amplitude * (std::f64::consts::PI / p.inverse_width).sqrt()).collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidDistribution("all peak weights vanish".into()));
    }
    let probs: Vec<f64> = areas.iter().map(|&a| a / total).collect();
    // ln A = ln gamma - ln alpha / 2, so the log-area variance follows
    // directly from the stored log-domain covariance entries.
    let var_area: Vec<f64> = areas
        .iter()
        .zip(&fit.uncertainties)
        .map(|(&a, u)| {
            let var_ln = (u.var_ln_amplitude + 0.25 * u.var_ln_inverse_width
                - u.cov_ln_amp_ln_inv_width)
                .max(0.0);
            a * a * var_ln
        })
        .collect();
    let deviations: Vec<f64> = (0..areas.len())
        .map(|n| {
            let var: f64 = (0..areas.len())
                .map(|k| {
                    let d = (if n == k { total } else { 0.0 } - areas[n]) / (total * total);
                    d * d * var_area[k]
                })
                .sum();
            var.sqrt()
        })
        .collect();
    let stats = PhotonStatistics::new(probs, 0.0)?;
    StatisticsWithErrors::new(stats, deviations)
}

/// Uncertainty propagation into the normalized moments: resample the
/// statistics many times with each bin perturbed by its Gaussian error,
/// clipped at zero and renormalized, and report the ensemble mean and
/// standard deviation of every g^(m).
pub fn moments_with_mc_errors(
    stats: &StatisticsWithErrors,
    m_max: usize,
    trials: usize,
    seed: u64,
) -> Result<MomentReport> {
    if trials < 100 {
        return Err(Error::invalid("trials", "need at least 100 trials"));
    }
    if m_max == 0 {
        return Err(Error::invalid("m_max", "need at least first order"));
    }
    let bins = stats.statistics.probs().len();
    let (sum, sumsq, mean_sum, ok, discarded) = batches(trials as u64)
        .into_par_iter()
        .map(|(batch, len)| {
            let mut rng = stream_rng(seed, batch);
            let mut sum = vec![0.0; m_max];
            let mut sumsq = vec![0.0; m_max];
            let mut mean_sum = 0.0;
            let mut ok = 0usize;
            let mut discarded = 0usize;
            let mut perturbed = vec![0.0; bins];
            for _ in 0..len {
                let mut total = 0.0;
                for (p, (&p0, &dev)) in perturbed
                    .iter_mut()
                    .zip(stats.statistics.probs().iter().zip(&stats.deviations))
                {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    *p = (p0 + dev * noise).max(0.0);
                    total += *p;
                }
                if total <= 0.0 {
                    discarded += 1;
                    continue;
                }
                let mean: f64 =
                    perturbed.iter().enumerate().map(|(n, &p)| n as f64 * p).sum::<f64>() / total;
                if mean <= 0.0 {
                    discarded += 1;
                    continue;
                }
                ok += 1;
                mean_sum += mean;
                for m in 1..=m_max {
                    let fact: f64 = perturbed
                        .iter()
                        .enumerate()
                        .map(|(n, &p)| falling_factorial(n, m) * p)
                        .sum::<f64>()
                        / total;
                    let g = fact / mean.powi(m as i32);
                    sum[m - 1] += g;
                    sumsq[m - 1] += g * g;
                }
            }
            (sum, sumsq, mean_sum, ok, discarded)
        })
        .reduce(
            || (vec![0.0; m_max], vec![0.0; m_max], 0.0, 0, 0),
            |mut a, b| {
                for (x, y) in a.0.iter_mut().zip(b.0) {
                    *x += y;
                }
                for (x, y) in a.1.iter_mut().zip(b.1) {
                    *x += y;
                }
                (a.0, a.1, a.2 + b.2, a.3 + b.3, a.4 + b.4)
            },
        );
    if discarded * 100 > trials {
        return Err(Error::DegenerateEnsemble { discarded, trials });
    }
    let n = ok as f64;
    let mut values = Vec::with_capacity(m_max);
    let mut sigmas = Vec::with_capacity(m_max);
    for m in 0..m_max {
        let mean = sum[m] / n;
        let var = (sumsq[m] / n - mean * mean).max(0.0);
        values.push(mean);
        sigmas.push(var.sqrt());
    }
    // First order is identically 1 trial by trial; pin it against rounding.
    values[0] = 1.0;
    sigmas[0] = 0.0;
    MomentReport::new(values, sigmas, mean_sum / n, MomentSource::MonteCarlo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_state, StateKind};
    use crate::moments::moments_from_statistics;
    use approx::assert_relative_eq;

    fn rect_template(len: usize) -> Vec<f64> {
        vec![1.0; len]
    }

    #[test]
    fn all_zero_trace_has_zero_area() {
        let set = TesTraceSet::new(1.0, vec![vec![0.0; 16]], "z").unwrap();
        let areas = integrate_areas(&set, 4, 12).unwrap();
        assert_eq!(areas, vec![0.0]);
    }

    #[test]
    fn rectangular_pulse_area_scales_with_photon_number() {
        let traces: Vec<Vec<f64>> = (0..4)
            .map(|k| {
                let mut t = vec![0.0; 24];
                for x in t[8..16].iter_mut() {
                    *x = k as f64;
                }
                t
            })
            .collect();
        let set = TesTraceSet::new(1.0, traces, "ramp").unwrap();
        let areas = integrate_areas(&set, 8, 16).unwrap();
        for (k, &a) in areas.iter().enumerate() {
            assert_relative_eq!(a, 8.0 * k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn baseline_is_subtracted() {
        let mut trace = vec![2.0; 20];
        for x in trace[10..15].iter_mut() {
            *x = 5.0;
        }
        let set = TesTraceSet::new(1.0, vec![trace], "offset").unwrap();
        let areas = integrate_areas(&set, 10, 15).unwrap();
        assert_relative_eq!(areas[0], 15.0, epsilon = 1e-12);
    }

    #[test]
    fn window_validation() {
        let set = TesTraceSet::new(1.0, vec![vec![0.0; 8]], "w").unwrap();
        assert!(integrate_areas(&set, 4, 4).is_err());
        assert!(integrate_areas(&set, 2, 9).is_err());
    }

    #[test]
    fn synthesize_vacuum_is_pure_noise() {
        let stats = make_state(StateKind::Fock { k: 0 }, 2).unwrap();
        let set = synthesize_traces(&stats, &rect_template(32), 0.5, 2000, 3).unwrap();
        let areas = integrate_areas(&set, 0, 32).unwrap();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        // Noise-only areas have mean 0 and std sqrt(32)*0.5 ~ 2.8.
        assert!(mean.abs() < 0.2, "mean {mean}");
    }

    #[test]
    fn synthesize_is_deterministic_per_seed() {
        let stats = make_state(StateKind::Poisson { mean: 1.0 }, 40).unwrap();
        let a = synthesize_traces(&stats, &rect_template(8), 0.3, 500, 7).unwrap();
        let b = synthesize_traces(&stats, &rect_template(8), 0.3, 500, 7).unwrap();
        assert_eq!(a, b);
        let c = synthesize_traces(&stats, &rect_template(8), 0.3, 500, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let stats = make_state(StateKind::Poisson { mean: 1.5 }, 40).unwrap();
        let set = synthesize_traces(&stats, &rect_template(8), 0.3, 50, 2).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = TesTraceSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let stats = make_state(StateKind::Poisson { mean: 1.5 }, 40).unwrap();
        let set = synthesize_traces(&stats, &rect_template(8), 0.3, 50, 2).unwrap();
        let mut first = Vec::new();
        set.write_binary(&mut first).unwrap();
        let back = TesTraceSet::read_binary(first.as_slice()).unwrap();
        let mut second = Vec::new();
        back.write_binary(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn single_gaussian_fit_is_exact() {
        let edges: Vec<f64> = (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect();
        let counts: Vec<u64> = edges
            .windows(2)
            .map(|w| {
                let c = 0.5 * (w[0] + w[1]);
                (1000.0 * (-2.0 * (c - 0.3f64).powi(2)).exp()).round() as u64
            })
            .collect();
        let hist = AreaHistogram::new(edges, counts).unwrap();
        let fit = fit_mixture(&hist, 1).unwrap();
        assert_relative_eq!(fit.peaks[0].amplitude, 1000.0, max_relative = 1e-2);
        assert_relative_eq!(fit.peaks[0].inverse_width, 2.0, max_relative = 1e-2);
        assert_relative_eq!(fit.peaks[0].center, 0.3, epsilon = 1e-3);
        assert!(fit.residual < 1.0, "residual {}", fit.residual);
    }

    #[test]
    fn two_peak_parameters_recovered() {
        let edges: Vec<f64> = (0..=160).map(|i| -2.0 + 0.05 * i as f64).collect();
        let truth = [(800.0, 3.0, 0.0), (400.0, 2.5, 2.0)];
        let counts: Vec<u64> = edges
            .windows(2)
            .map(|w| {
                let c = 0.5 * (w[0] + w[1]);
                let v: f64 = truth
                    .iter()
                    .map(|&(g, a, b)| g * (-a * (c - b as f64).powi(2)).exp())
                    .sum();
                v.round() as u64
            })
            .collect();
        let hist = AreaHistogram::new(edges, counts).unwrap();
        let fit = fit_mixture(&hist, 2).unwrap();
        for (peak, &(g, a, b)) in fit.peaks.iter().zip(&truth) {
            assert_relative_eq!(peak.amplitude, g, max_relative = 0.01);
            assert_relative_eq!(peak.inverse_width, a, max_relative = 0.01);
            assert_relative_eq!(peak.center, b, epsilon = 0.01);
        }
    }

    #[test]
    fn extract_statistics_equal_peaks() {
        let fit = MixtureFit {
            peaks: vec![
                GaussianPeak { amplitude: 10.0, inverse_width: 4.0, center: 0.0 },
                GaussianPeak { amplitude: 10.0, inverse_width: 4.0, center: 1.0 },
            ],
            uncertainties: vec![PeakUncertainty::default(); 2],
            residual: 0.0,
            energy_resolution: 0.3,
        };
        let swe = extract_statistics(&fit).unwrap();
        assert_relative_eq!(swe.statistics.prob(0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(swe.statistics.prob(1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn extract_statistics_single_peak() {
        let fit = MixtureFit {
            peaks: vec![GaussianPeak { amplitude: 5.0, inverse_width: 1.0, center: 0.0 }],
            uncertainties: vec![PeakUncertainty::default()],
            residual: 0.0,
            energy_resolution: 0.0,
        };
        let swe = extract_statistics(&fit).unwrap();
        assert_eq!(swe.statistics.probs(), &[1.0]);
    }

    #[test]
    fn zero_errors_give_zero_spread() {
        let stats = make_state(StateKind::Poisson { mean: 1.2 }, 40).unwrap();
        let exact = StatisticsWithErrors::exact(stats);
        let report = moments_with_mc_errors(&exact, 4, 500, 1).unwrap();
        for m in 2..=4 {
            assert_relative_eq!(report.g(m).unwrap(), 1.0, epsilon = 1e-9);
            assert!(report.sigma(m).unwrap() < 1e-12);
        }
    }

    #[test]
    fn truncated_poisson_moments_biased_low() {
        // Hard truncation at n = 10 clips the upper tail, dragging every
        // normalized moment below 1, more strongly with order.
        let mut probs = vec![0.0; 11];
        probs[0] = (-2.7f64).exp();
        for n in 1..11 {
            probs[n] = probs[n - 1] * 2.7 / n as f64;
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let stats = PhotonStatistics::new(probs, 0.0).unwrap();
        let report = moments_from_statistics(&stats, 4).unwrap();
        let g2 = report.g(2).unwrap();
        let g3 = report.g(3).unwrap();
        let g4 = report.g(4).unwrap();
        assert!(g2 < 1.0 && g3 < g2 && g4 < g3, "{g2} {g3} {g4}");
    }

    #[test]
    fn mc_determinism_per_seed() {
        let stats = make_state(StateKind::Poisson { mean: 1.2 }, 40).unwrap();
        let mut swe = StatisticsWithErrors::exact(stats);
        for d in swe.deviations.iter_mut() {
            *d = 0.01;
        }
        let a = moments_with_mc_errors(&swe, 4, 2000, 5).unwrap();
        let b = moments_with_mc_errors(&swe, 4, 2000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn end_to_end_coherent_pipeline() {
        // Poisson light at the energy-resolution regime of a realistic
        // sensor: DeltaE/E ~ 0.4 with 2e4 traces, truncation at n = 10.
        let n_bar = 2.7;
        let stats = make_state(StateKind::Poisson { mean: n_bar }, 40).unwrap();
        let template = rect_template(32);
        let window = 32.0f64;
        // FWHM of the noise-broadened area peak over the unit peak spacing.
        let sigma = 0.4 * 32.0 / (2.355 * window.sqrt());
        let set = synthesize_traces(&stats, &template, sigma, 20_000, 42).unwrap();
        let areas = integrate_areas(&set, 0, 32).unwrap();
        let hist = AreaHistogram::from_areas(&areas, Some(160)).unwrap();
        let fit = fit_mixture(&hist, 11).unwrap();
        assert!((fit.energy_resolution - 0.4).abs() < 0.08, "dE/E {}", fit.energy_resolution);
        let swe = extract_statistics(&fit).unwrap();
        let report = moments_with_mc_errors(&swe, 4, 10_000, 7).unwrap();

        // Reference: the generator's statistics truncated at n = 10.
        let mut probs: Vec<f64> = stats.probs()[..11].to_vec();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let reference =
            moments_from_statistics(&PhotonStatistics::new(probs, 0.0).unwrap(), 4).unwrap();
        for m in 2..=4 {
            let g = report.g(m).unwrap();
            let sigma_g = report.sigma(m).unwrap();
            let expect = reference.g(m).unwrap();
            assert!(
                (g - expect).abs() < 3.0 * sigma_g.max(1e-4),
                "g({m}) = {g} +- {sigma_g}, expected {expect}"
            );
        }
        let s2 = report.sigma(2).unwrap();
        let s3 = report.sigma(3).unwrap();
        let s4 = report.sigma(4).unwrap();
        assert!(s2 < s3 && s3 < s4, "sigma ordering {s2} {s3} {s4}");
    }

    #[test]
    fn degenerate_ensemble_detected() {
        let stats = PhotonStatistics::new(vec![0.999, 0.001], 0.0).unwrap();
        let swe = StatisticsWithErrors::new(stats, vec![0.5, 0.1]).unwrap();
        // Huge vacuum error and a tiny one-photon bin: many trials lose all
        // signal mass.
        let result = moments_with_mc_errors(&swe, 2, 1000, 3);
        assert!(matches!(result, Err(Error::DegenerateEnsemble { .. })));
    }
}
