//! Monte-Carlo simulation of multiplexed beam-splitter networks with lossy
//! click detectors, the coincidence estimators recovering g^(m), and the
//! click-convolution machinery turning click statistics back into photon
//! statistics.
//!
//! Routing is multinomial: each photon drawn from the input statistics takes
//! an independent path through the splitter tree. This is exact for inputs
//! diagonal in the Fock basis, which covers every state this crate emits
//! into networks, and avoids exponential multimode state space.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::fock::PhotonStatistics;
use crate::seeding::{batches, stream_rng};
use crate::{Error, Result};

/// Largest supported network depth; patterns are stored densely as bitmasks
/// over 2^{M+1} outputs.
pub const MAX_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    /// Binary detector distinguishing vacuum from one-or-more photons.
    Click,
    /// Photon-number-resolving detector.
    Pnr,
}

/// A detector with its efficiency and dark-count probability per window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectorModelRaw")]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub efficiency: f64,
    pub dark_count_prob: f64,
}

#[derive(Deserialize)]
struct DetectorModelRaw {
    kind: DetectorKind,
    efficiency: f64,
    #[serde(default)]
    dark_count_prob: f64,
}

impl TryFrom<DetectorModelRaw> for DetectorModel {
    type Error = Error;
    fn try_from(raw: DetectorModelRaw) -> Result<Self> {
        DetectorModel::new(raw.kind, raw.efficiency, raw.dark_count_prob)
    }
}

impl DetectorModel {
    pub fn click(efficiency: f64) -> Result<Self> {
        Self::new(DetectorKind::Click, efficiency, 0.0)
    }

    pub fn pnr(efficiency: f64) -> Result<Self> {
        Self::new(DetectorKind::Pnr, efficiency, 0.0)
    }

    pub fn new(kind: DetectorKind, efficiency: f64, dark_count_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::invalid("efficiency", format!("{efficiency} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&dark_count_prob) {
            return Err(Error::invalid(
                "dark_count_prob",
                format!("{dark_count_prob} outside [0, 1)"),
            ));
        }
        Ok(Self { kind, efficiency, dark_count_prob })
    }
}

/// A binary beam-splitter tree of depth M with per-splitter transmissions
/// and one detector on each of the 2^{M+1} outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkSpecRaw")]
pub struct NetworkSpec {
    depth: usize,
    transmissions: Vec<Vec<f64>>,
    detectors: Vec<DetectorModel>,
}

#[derive(Deserialize, Serialize)]
struct NetworkSpecRaw {
    depth: usize,
    transmissions: Vec<Vec<f64>>,
    detectors: Vec<DetectorModel>,
}

impl TryFrom<NetworkSpecRaw> for NetworkSpec {
    type Error = Error;
    fn try_from(raw: NetworkSpecRaw) -> Result<Self> {
        NetworkSpec::new(raw.depth, raw.transmissions, raw.detectors)
    }
}

impl NetworkSpec {
    /// `transmissions[s]` holds the 2^s splitter transmissions of stage s;
    /// `detectors` one model per output, in tree order.
    pub fn new(
        depth: usize,
        transmissions: Vec<Vec<f64>>,
        detectors: Vec<DetectorModel>,
    ) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::invalid("depth", format!("must be <= {MAX_DEPTH}")));
        }
        if transmissions.len() != depth + 1 {
            return Err(Error::invalid("transmissions", "need one stage per depth level"));
        }
        for (s, stage) in transmissions.iter().enumerate() {
            if stage.len() != 1 << s {
                return Err(Error::invalid(
                    "transmissions",
                    format!("stage {s} must have {} splitters", 1usize << s),
                ));
            }
            for &t in stage {
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::invalid(
                        "transmissions",
                        format!("transmission {t} outside the open interval (0, 1)"),
                    ));
                }
            }
        }
        let outputs = 1 << (depth + 1);
        if detectors.len() != outputs {
            return Err(Error::invalid("detectors", format!("need {outputs} detectors")));
        }
        Ok(Self { depth, transmissions, detectors })
    }

    /// Two-detector HBT arrangement: one splitter with transmission `t` and
    /// detector efficiencies `eta1`, `eta2`.
    pub fn hbt(t: f64, eta1: f64, eta2: f64) -> Result<Self> {
        Self::new(
            0,
            vec![vec![t]],
            vec![DetectorModel::click(eta1)?, DetectorModel::click(eta2)?],
        )
    }

    /// Balanced tree with identical detectors on every output.
    pub fn symmetric(depth: usize, detector: DetectorModel) -> Result<Self> {
        let transmissions = (0..=depth).map(|s| vec![0.5; 1 << s]).collect();
        Self::new(depth, transmissions, vec![detector; 1 << (depth + 1)])
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn output_count(&self) -> usize {
        1 << (self.depth + 1)
    }

    pub fn detectors(&self) -> &[DetectorModel] {
        &self.detectors
    }

    /// Probability that a photon entering the network reaches each output.
    pub fn path_probabilities(&self) -> Vec<f64> {
        let mut probs = vec![1.0];
        for stage in &self.transmissions {
            let mut next = Vec::with_capacity(probs.len() * 2);
            for (l, &p) in probs.iter().enumerate() {
                let t = stage[l];
                next.push(p * t);
                next.push(p * (1.0 - t));
            }
            probs = next;
        }
        probs
    }

    pub fn from_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Click-pattern counts over the 2^{#detectors} outcomes of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    counts: Vec<u64>,
    trials: u64,
}

impl ClickRecord {
    pub fn new(counts: Vec<u64>, trials: u64) -> Result<Self> {
        if !counts.len().is_power_of_two() {
            return Err(Error::invalid("counts", "pattern space must be a power of two"));
        }
        let total: u64 = counts.iter().sum();
        if total != trials {
            return Err(Error::invalid("counts", format!("sum {total} != trials {trials}")));
        }
        Ok(Self { counts, trials })
    }

    pub fn detector_count(&self) -> usize {
        self.counts.len().trailing_zeros() as usize
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Probability that every detector in `mask` clicked (jointly).
    pub fn joint_click_probability(&self, mask: usize) -> f64 {
        let hits: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|&(pattern, _)| pattern & mask == mask)
            .map(|(_, &c)| c)
            .sum();
        hits as f64 / self.trials as f64
    }

    /// Distribution of the number of clicked detectors.
    pub fn click_number_distribution(&self) -> Vec<f64> {
        let mut dist = vec![0.0; self.detector_count() + 1];
        for (pattern, &c) in self.counts.iter().enumerate() {
            dist[pattern.count_ones() as usize] += c as f64;
        }
        for d in &mut dist {
            *d /= self.trials as f64;
        }
        dist
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["pattern", "count"])?;
        for (pattern, &count) in self.counts.iter().enumerate() {
            w.write_record([pattern.to_string(), count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl std::io::Read) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut counts = Vec::new();
        for record in reader.records() {
            let record = record?;
            let pattern: usize = record
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidDistribution("bad pattern column".into()))?;
            let count: u64 = record
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidDistribution("bad count column".into()))?;
            if pattern != counts.len() {
                return Err(Error::InvalidDistribution("patterns out of order".into()));
            }
            counts.push(count);
        }
        let trials = counts.iter().sum();
        Self::new(counts, trials)
    }
}

/// A scalar estimate with its statistical standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl CountEstimate {
    /// |value - other| in units of the combined standard error.
    pub fn distance_sigmas(&self, other: f64) -> f64 {
        (self.value - other).abs() / self.std_error
    }
}

/// Simulate `trials` detection windows of `input` light through the network.
///
/// Per window: a photon number is drawn from the input statistics, each
/// photon routed independently down the tree, thinned by the output
/// detector's efficiency, and dark counts OR-ed in. Deterministic for a
/// given seed regardless of thread count.
pub fn simulate_network(
    input: &PhotonStatistics,
    spec: &NetworkSpec,
    trials: u64,
    seed: u64,
) -> Result<ClickRecord> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    let paths = spec.path_probabilities();
    let outputs = spec.output_count();
    let has_dark = spec.detectors.iter().any(|d| d.dark_count_prob > 0.0);

    let counts = batches(trials)
        .into_par_iter()
        .map(|(batch, len)| {
            let mut rng = stream_rng(seed, batch);
            let mut counts = vec![0u64; 1 << outputs];
            for _ in 0..len {
                let n = input.sample(rng.random());
                let mut pattern = 0usize;
                for _ in 0..n {
                    let mut u: f64 = rng.random();
                    let mut out = outputs - 1;
                    for (o, &p) in paths.iter().enumerate() {
                        if u < p {
                            out = o;
                            break;
                        }
                        u -= p;
                    }
                    if rng.random::<f64>() < spec.detectors[out].efficiency {
                        pattern |= 1 << out;
                    }
                }
                if has_dark {
                    for (o, det) in spec.detectors.iter().enumerate() {
                        if det.dark_count_prob > 0.0 && rng.random::<f64>() < det.dark_count_prob
                        {
                            pattern |= 1 << o;
                        }
                    }
                }
                counts[pattern] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; 1 << outputs],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    ClickRecord::new(counts, trials)
}

/// HBT estimate g^(2) ~ P_c / (P_D1 P_D2) with multinomial error
/// propagation.
///
/// Valid as g^(2) only for faint light: the relative bias of the click
/// approximation vanishes as the marginal click probabilities go to zero.
pub fn estimate_g2_hbt(record: &ClickRecord) -> Result<CountEstimate> {
    if record.detector_count() != 2 {
        return Err(Error::invalid("record", "HBT estimator needs exactly two detectors"));
    }
    estimate_gm_mfold(record, &[0, 1])
}

/// m-fold coincidence estimate g^(m) ~ P(all m click) / prod P(single
/// clicks) over the chosen detectors.
pub fn estimate_gm_mfold(record: &ClickRecord, chosen: &[usize]) -> Result<CountEstimate> {
    let d = record.detector_count();
    if chosen.is_empty() || chosen.len() > d {
        return Err(Error::invalid("chosen", format!("need between 1 and {d} detectors")));
    }
    let mut mask = 0usize;
    for &o in chosen {
        if o >= d {
            return Err(Error::invalid("chosen", format!("detector {o} out of range")));
        }
        mask |= 1 << o;
    }
    let n = record.trials() as f64;
    let p_all = record.joint_click_probability(mask);
    if p_all == 0.0 {
        // A zero m-fold count with nonzero singles is a legitimate estimate
        // of zero (e.g. Fock inputs); only zero singles are an error.
        for &o in chosen {
            if record.joint_click_probability(1 << o) == 0.0 {
                return Err(Error::ZeroMarginal(format!("detector {o} never clicked")));
            }
        }
        return Ok(CountEstimate { value: 0.0, std_error: 0.0, trials: record.trials() });
    }
    let singles: Vec<f64> =
        chosen.iter().map(|&o| record.joint_click_probability(1 << o)).collect();
    if singles.iter().any(|&p| p == 0.0) {
        return Err(Error::ZeroMarginal("zero single-click probability".into()));
    }
    let value = p_all / singles.iter().product::<f64>();

    // Delta method over the multinomial pattern counts. All joint click
    // probabilities needed for the covariances are available from the
    // record.
    let mut rel_var = p_all * (1.0 - p_all) / n / (p_all * p_all);
    for (i, &oi) in chosen.iter().enumerate() {
        let pi = singles[i];
        rel_var += pi * (1.0 - pi) / n / (pi * pi);
        // cov(P_all, P_i) = P_all (1 - P_i) / n since the m-fold event
        // implies the single click.
        rel_var -= 2.0 * p_all * (1.0 - pi) / n / (p_all * pi);
        for (j, &oj) in chosen.iter().enumerate().skip(i + 1) {
            let pj = singles[j];
            let pij = record.joint_click_probability((1 << oi) | (1 << oj));
            rel_var += 2.0 * (pij - pi * pj) / n / (pi * pj);
        }
    }
    let std_error = value * rel_var.max(0.0).sqrt();
    Ok(CountEstimate { value, std_error, trials: record.trials() })
}

/// m-fold estimate pooled over every m-detector subset of the network.
///
/// At very faint rates a single detector subset may see no coincidences at
/// all; summing counts over all C(d, m) subsets multiplies the statistics
/// without changing the estimator's expectation on a symmetric network.
/// The error is Poisson-dominated: the coincidence count is treated as
/// Poisson with at least one count's worth of variance, so a zero-count
/// estimate reports the one-count scale as its uncertainty instead of a
/// meaningless zero.
pub fn estimate_gm_pooled(record: &ClickRecord, m: usize) -> Result<CountEstimate> {
    let d = record.detector_count();
    if m == 0 || m > d {
        return Err(Error::invalid("m", format!("need between 1 and {d} detectors")));
    }
    let n = record.trials() as f64;
    let singles: Vec<f64> = (0..d).map(|o| record.joint_click_probability(1 << o)).collect();
    if singles.iter().any(|&p| p == 0.0) {
        return Err(Error::ZeroMarginal("a detector never clicked".into()));
    }
    // Sum coincidence counts and accidental products over all subsets.
    let mut coincidences = 0.0;
    let mut accidentals = 0.0;
    let mut subset: Vec<usize> = (0..m).collect();
    loop {
        let mask: usize = subset.iter().map(|&o| 1 << o).sum();
        coincidences += record.joint_click_probability(mask) * n;
        accidentals += subset.iter().map(|&o| singles[o]).product::<f64>();
        if !next_combination(&mut subset, d) {
            break;
        }
    }
    let value = coincidences / n / accidentals;
    let std_error = coincidences.max(1.0).sqrt() / n / accidentals;
    Ok(CountEstimate { value, std_error, trials: record.trials() })
}

/// Advance to the next lexicographic m-combination of 0..d; false at the end.
fn next_combination(subset: &mut [usize], d: usize) -> bool {
    let m = subset.len();
    for i in (0..m).rev() {
        if subset[i] < d - (m - i) {
            subset[i] += 1;
            for j in i + 1..m {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Column-stochastic matrix C with C[k][n] = probability that n input
/// photons produce k clicked bins under uniform splitting over `bins` bins
/// and per-photon survival `eta`. Rows k = 0..=bins, columns n = 0..=n_max.
pub fn convolution_matrix(bins: usize, eta: f64, n_max: usize) -> Result<nalgebra::DMatrix<f64>> {
    if bins == 0 {
        return Err(Error::invalid("bins", "need at least one bin"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta", "efficiency outside [0, 1]"));
    }
    let rows = bins + 1;
    let mut matrix = nalgebra::DMatrix::zeros(rows, n_max + 1);
    // Occupied-bin count evolves as a Markov chain over photons: a photon is
    // lost with probability 1 - eta or lands uniformly in one of the bins.
    let mut occ = vec![0.0; rows];
    occ[0] = 1.0;
    for (k, &p) in occ.iter().enumerate() {
        matrix[(k, 0)] = p;
    }
    let nb = bins as f64;
    for n in 1..=n_max {
        let mut next = vec![0.0; rows];
        for (k, &p) in occ.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let stay = (1.0 - eta) + eta * k as f64 / nb;
            next[k] += p * stay;
            if k + 1 < rows {
                next[k + 1] += p * eta * (nb - k as f64) / nb;
            }
        }
        occ = next;
        for (k, &p) in occ.iter().enumerate() {
            matrix[(k, n)] = p;
        }
    }
    Ok(matrix)
}

/// Diagnostics from a deconvolution solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeconvolutionReport {
    /// L2 norm of C rho - clicks after clipping and renormalization.
    pub residual: f64,
    pub condition_number: f64,
    /// Negative mass removed by the clipping step.
    pub clipped_mass: f64,
}

const CONDITION_LIMIT: f64 = 1e12;

/// Invert the click convolution: recover loss-inverted photon statistics
/// from a measured click-number distribution.
///
/// Solves the truncated least-squares system via SVD, clips negative
/// entries to zero and renormalizes, reporting the residual.
pub fn deconvolve_statistics(
    clicks: &[f64],
    bins: usize,
    eta: f64,
    n_max: usize,
) -> Result<(PhotonStatistics, DeconvolutionReport)> {
    if eta <= 0.0 {
        return Err(Error::invalid("eta", "deconvolution requires eta > 0"));
    }
    if clicks.len() != bins + 1 {
        return Err(Error::invalid("clicks", format!("need {} entries", bins + 1)));
    }
    if n_max > bins {
        return Err(Error::invalid("n_max", "system underdetermined beyond the bin count"));
    }
    let c = convolution_matrix(bins, eta, n_max)?;
    let rhs = nalgebra::DVector::from_column_slice(clicks);
    let svd = c.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond, limit: CONDITION_LIMIT });
    }
    let solution = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::InvalidDistribution(format!("svd solve failed: {e}")))?;

    let mut clipped_mass = 0.0;
    let mut probs: Vec<f64> = solution
        .iter()
        .map(|&p| {
            if p < 0.0 {
                clipped_mass -= p;
                0.0
            } else {
                p
            }
        })
        .collect();
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidDistribution("deconvolution produced zero mass".into()));
    }
    for p in &mut probs {
        *p /= total;
    }
    let residual = (&c * nalgebra::DVector::from_column_slice(&probs) - &rhs).norm();
    let stats = PhotonStatistics::new(probs, 0.0)?;
    Ok((stats, DeconvolutionReport { residual, condition_number: cond, clipped_mass }))
}

/// Raw-click g^(2) evaluated directly on a click-number distribution,
/// without loss inversion. Biased low for finite bin count; provided to
/// demonstrate that bias.
pub fn raw_click_g2(click_dist: &[f64]) -> Result<f64> {
    let mean: f64 = click_dist.iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
    if mean <= 0.0 {
        return Err(Error::VacuumOnly);
    }
    let second: f64 =
        click_dist.iter().enumerate().map(|(k, &p)| (k * k.saturating_sub(1)) as f64 * p).sum();
    Ok(second / (mean * mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_state, StateKind};
    use approx::assert_relative_eq;

    #[test]
    fn path_probabilities_sum_to_one() {
        let spec = NetworkSpec::symmetric(2, DetectorModel::click(1.0).unwrap()).unwrap();
        let paths = spec.path_probabilities();
        assert_eq!(paths.len(), 8);
        assert_relative_eq!(paths.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        for p in paths {
            assert_relative_eq!(p, 0.125, epsilon = 1e-14);
        }
    }

    #[test]
    fn single_photon_cannot_coincide() {
        let input = make_state(StateKind::Fock { k: 1 }, 4).unwrap();
        let spec = NetworkSpec::hbt(0.5, 1.0, 1.0).unwrap();
        let record = simulate_network(&input, &spec, 200_000, 7).unwrap();
        assert_eq!(record.joint_click_probability(0b11), 0.0);
        let est = estimate_g2_hbt(&record).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn vacuum_gives_all_zero_pattern() {
        let input = make_state(StateKind::Fock { k: 0 }, 2).unwrap();
        let spec = NetworkSpec::symmetric(1, DetectorModel::click(0.8).unwrap()).unwrap();
        let record = simulate_network(&input, &spec, 10_000, 1).unwrap();
        assert_eq!(record.counts()[0], 10_000);
    }

    #[test]
    fn dark_counts_fire_on_vacuum() {
        let input = make_state(StateKind::Fock { k: 0 }, 2).unwrap();
        let det = DetectorModel::new(DetectorKind::Click, 1.0, 0.1).unwrap();
        let spec = NetworkSpec::symmetric(0, det).unwrap();
        let record = simulate_network(&input, &spec, 100_000, 3).unwrap();
        let p0 = record.joint_click_probability(0b01);
        assert!((p0 - 0.1).abs() < 0.005, "dark rate {p0}");
    }

    #[test]
    fn two_photons_on_eight_outputs() {
        // Brute force over the 64 equally likely routings: both photons
        // land apart with probability 7/8.
        let input = make_state(StateKind::Fock { k: 2 }, 4).unwrap();
        let spec = NetworkSpec::symmetric(2, DetectorModel::click(1.0).unwrap()).unwrap();
        let record = simulate_network(&input, &spec, 400_000, 11).unwrap();
        let dist = record.click_number_distribution();
        assert!((dist[2] - 7.0 / 8.0).abs() < 0.005, "p2 = {}", dist[2]);
        assert!((dist[1] - 1.0 / 8.0).abs() < 0.005, "p1 = {}", dist[1]);
    }

    #[test]
    fn determinism_per_seed() {
        let input = make_state(StateKind::Thermal { mean: 0.2 }, 60).unwrap();
        let spec = NetworkSpec::hbt(0.6, 0.4, 0.9).unwrap();
        let a = simulate_network(&input, &spec, 123_456, 99).unwrap();
        let b = simulate_network(&input, &spec, 123_456, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_network(&input, &spec, 123_456, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hbt_thermal_recovers_two() {
        let input = make_state(StateKind::Thermal { mean: 0.05 }, 60).unwrap();
        let spec = NetworkSpec::hbt(0.5, 0.3, 0.3).unwrap();
        let record = simulate_network(&input, &spec, 2_000_000, 5).unwrap();
        let est = estimate_g2_hbt(&record).unwrap();
        assert!(est.distance_sigmas(2.0) < 4.0, "{est:?}");
    }

    #[test]
    fn hbt_poisson_recovers_one() {
        let input = make_state(StateKind::Poisson { mean: 0.05 }, 60).unwrap();
        let spec = NetworkSpec::hbt(0.5, 0.5, 0.5).unwrap();
        let record = simulate_network(&input, &spec, 2_000_000, 17).unwrap();
        let est = estimate_g2_hbt(&record).unwrap();
        assert!(est.distance_sigmas(1.0) < 4.0, "{est:?}");
    }

    #[test]
    fn mfold_fock2_triple_is_zero() {
        let input = make_state(StateKind::Fock { k: 2 }, 4).unwrap();
        let spec = NetworkSpec::symmetric(2, DetectorModel::click(1.0).unwrap()).unwrap();
        let record = simulate_network(&input, &spec, 300_000, 23).unwrap();
        let est = estimate_gm_mfold(&record, &[0, 3, 5]).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn zero_marginal_is_error() {
        let input = make_state(StateKind::Fock { k: 0 }, 2).unwrap();
        let spec = NetworkSpec::hbt(0.5, 1.0, 1.0).unwrap();
        let record = simulate_network(&input, &spec, 1000, 29).unwrap();
        assert!(matches!(estimate_g2_hbt(&record), Err(Error::ZeroMarginal(_))));
    }

    #[test]
    fn pooled_estimate_matches_single_subset_on_thermal() {
        let input = make_state(StateKind::Thermal { mean: 0.05 }, 40).unwrap();
        let spec = NetworkSpec::symmetric(2, DetectorModel::click(0.8).unwrap()).unwrap();
        let record = simulate_network(&input, &spec, 1_500_000, 61).unwrap();
        let pooled = estimate_gm_pooled(&record, 2).unwrap();
        assert!((pooled.value - 2.0).abs() < 4.0 * pooled.std_error, "{pooled:?}");
        let triple = estimate_gm_pooled(&record, 3).unwrap();
        assert!((triple.value - 6.0).abs() < 4.0 * triple.std_error, "{triple:?}");
    }

    #[test]
    fn pooled_estimate_reports_one_count_scale_when_starved() {
        // So faint that no coincidence occurs: value 0 but a usable error bar.
        let input = make_state(StateKind::Poisson { mean: 1e-3 }, 12).unwrap();
        let spec = NetworkSpec::symmetric(2, DetectorModel::click(1.0).unwrap()).unwrap();
        let record = simulate_network(&input, &spec, 200_000, 67).unwrap();
        let est = estimate_gm_pooled(&record, 4).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(est.std_error > 0.0);
    }

    #[test]
    fn convolution_matrix_columns_are_distributions() {
        for (bins, eta) in [(8usize, 1.0), (8, 0.6), (4, 0.25), (1, 0.5)] {
            let c = convolution_matrix(bins, eta, 12).unwrap();
            for n in 0..=12 {
                let col_sum: f64 = (0..=bins).map(|k| c[(k, n)]).sum();
                assert_relative_eq!(col_sum, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn convolution_matrix_known_values() {
        // One photon, unit efficiency: exactly one click.
        let c = convolution_matrix(8, 1.0, 4).unwrap();
        assert_relative_eq!(c[(1, 1)], 1.0, epsilon = 1e-14);
        // Two photons in eight bins: C[2,2] = 7/8, C[1,2] = 1/8.
        assert_relative_eq!(c[(2, 2)], 7.0 / 8.0, epsilon = 1e-14);
        assert_relative_eq!(c[(1, 2)], 1.0 / 8.0, epsilon = 1e-14);
        // Zero efficiency: everything maps to zero clicks.
        let c0 = convolution_matrix(8, 0.0, 4).unwrap();
        for n in 0..=4 {
            assert_relative_eq!(c0[(0, n)], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn deconvolution_round_trip_poisson() {
        let stats = make_state(StateKind::Poisson { mean: 0.5 }, 8).unwrap_or_else(|_| {
            // Poisson 0.5 at n_max = 8 has tail ~ 1e-7 > tolerance; build
            // unchecked from the exact formula for the forward model.
            let mut probs = vec![0.0; 9];
            probs[0] = (-0.5f64).exp();
            for n in 1..9 {
                probs[n] = probs[n - 1] * 0.5 / n as f64;
            }
            let tail = 1.0 - probs.iter().sum::<f64>();
            PhotonStatistics::new(probs, tail).unwrap()
        });
        let c = convolution_matrix(8, 0.6, 8).unwrap();
        let clicks = &c * nalgebra::DVector::from_column_slice(stats.probs());
        let (recovered, report) =
            deconvolve_statistics(clicks.as_slice(), 8, 0.6, 8).unwrap();
        let tv: f64 = recovered
            .probs()
            .iter()
            .zip(stats.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 1e-6, "total variation {tv}, report {report:?}");
    }

    #[test]
    fn deconvolution_identity_case_fock1() {
        // Large bin count and unit efficiency approximate a true PNR
        // detector.
        let mut clicks = vec![0.0; 65];
        clicks[1] = 1.0;
        let (recovered, _) = deconvolve_statistics(&clicks, 64, 1.0, 6).unwrap();
        assert_relative_eq!(recovered.prob(1), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn deconvolution_rejects_zero_eta() {
        assert!(deconvolve_statistics(&[1.0, 0.0], 1, 0.0, 1).is_err());
    }

    #[test]
    fn click_record_csv_round_trip() {
        let record = ClickRecord::new(vec![5, 3, 2, 0], 10).unwrap();
        let mut buf = Vec::new();
        record.write_csv(&mut buf).unwrap();
        let back = ClickRecord::read_csv(buf.as_slice()).unwrap();
        assert_eq!(record, back);
    }

    #[test]
    fn network_spec_json_round_trip() {
        let spec = NetworkSpec::hbt(0.7, 0.1, 0.9).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn network_spec_validation() {
        assert!(NetworkSpec::hbt(0.0, 1.0, 1.0).is_err());
        assert!(NetworkSpec::hbt(1.0, 1.0, 1.0).is_err());
        assert!(DetectorModel::click(1.2).is_err());
        assert!(NetworkSpec::symmetric(MAX_DEPTH + 1, DetectorModel::click(1.0).unwrap()).is_err());
    }
}
