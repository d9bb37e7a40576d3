//! Configuration-driven experiment runner: parse a strict JSON config,
//! execute one of the canned experiment kinds, and write reproducible CSV
//! results plus a JSON summary echoing the inputs, the seed, and the crate
//! version.
//!
//! Identical configs produce byte-identical CSV output for a fixed worker
//! count contract (all simulations use the splittable seeding scheme, so
//! the worker count does not matter either).

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::detection::{estimate_gm_mfold, simulate_network, NetworkSpec};
use crate::fock::{FockAmplitudeVector, DisplacementAmplitude, StateKind, make_state};
use crate::homodyne::{simulate_moments, HomodyneState};
use crate::moments::{
    moment_matrix_test, moments_from_statistics, monotonicity_test, schwarz_test, MomentReport,
};
use crate::pdc::{g2h_curve, write_curve_csv, HeraldSetup, SchmidtSpectrum};
use crate::phasespace::reconstruct_grid;
use crate::tes::{
    extract_statistics, fit_mixture, integrate_areas, moments_with_mc_errors, synthesize_traces,
    AreaHistogram,
};
use crate::{Error, Result};

/// Which herald detector a PDC sweep uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum HeraldConfig {
    Click,
    Pnr { photons: usize },
}

/// A validated experiment description.
///
/// The JSON schema is strict: unknown keys are rejected rather than
/// silently ignored, and every stochastic experiment carries a mandatory
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    /// Send a catalog state through a beam-splitter network and estimate
    /// normalized moments from coincidences.
    NetworkSim {
        state: StateKind,
        n_max: usize,
        network: NetworkSpec,
        trials: u64,
        seed: u64,
        /// Coincidence orders to estimate; order m uses detectors 0..m.
        orders: Vec<usize>,
    },
    /// Full synthetic trace pipeline: synthesize, integrate, fit, extract,
    /// and propagate errors into moments.
    TesAnalysis {
        state: StateKind,
        n_max: usize,
        traces: usize,
        template_samples: usize,
        noise_sigma: f64,
        histogram_bins: usize,
        n_peaks: usize,
        m_max: usize,
        mc_trials: usize,
        seed: u64,
    },
    /// Phase-randomized homodyne moment table for a list of states.
    Homodyne {
        states: Vec<HomodyneState>,
        blocks: usize,
        samples_per_block: usize,
        m_max: usize,
        seed: u64,
    },
    /// Heralded-g2 versus CAR sweep for an equal-mode twin-beam source.
    Pdc {
        modes: usize,
        car_values: Vec<f64>,
        herald_efficiency: f64,
        herald: HeraldConfig,
    },
    /// Phase-space reconstruction of a Fock state over a radial grid.
    Phasespace {
        fock: usize,
        n_max: usize,
        alpha_max: f64,
        alpha_steps: usize,
        m_maxes: Vec<usize>,
    },
    /// Run every nonclassicality criterion on one catalog state.
    Nonclassicality {
        state: StateKind,
        n_max: usize,
        m_max: usize,
        matrix_size: usize,
    },
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// Short name used in output files and listings.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::NetworkSim { .. } => "network-sim",
            ExperimentConfig::TesAnalysis { .. } => "tes-analysis",
            ExperimentConfig::Homodyne { .. } => "homodyne",
            ExperimentConfig::Pdc { .. } => "pdc",
            ExperimentConfig::Phasespace { .. } => "phasespace",
            ExperimentConfig::Nonclassicality { .. } => "nonclassicality",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match *self {
            ExperimentConfig::NetworkSim { seed, .. }
            | ExperimentConfig::TesAnalysis { seed, .. }
            | ExperimentConfig::Homodyne { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Replace the seed on stochastic experiments; no-op otherwise.
    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self {
            ExperimentConfig::NetworkSim { seed, .. }
            | ExperimentConfig::TesAnalysis { seed, .. }
            | ExperimentConfig::Homodyne { seed, .. } => *seed = new_seed,
            _ => {}
        }
        self
    }
}

/// Everything a finished run reports back.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub kind: String,
    pub seed: Option<u64>,
    pub version: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<PathBuf>,
}

/// Descriptions of the available experiment kinds for `list-experiments`.
pub const EXPERIMENT_KINDS: &[(&str, &str)] = &[
    ("network-sim", "beam-splitter network simulation with coincidence moment estimators"),
    ("tes-analysis", "synthetic trace pipeline: areas, histogram, mixture fit, Monte-Carlo errors"),
    ("homodyne", "phase-randomized quadrature moments for coherent and thermal states"),
    ("pdc", "twin-beam heralded-g2 versus coincidences-to-accidentals ratio"),
    ("phasespace", "Wigner / Q / characteristic-function reconstruction from moments"),
    ("nonclassicality", "moment-matrix, monotonicity, and Schwarz criteria on a catalog state"),
];

fn write_moment_csv(report: &MomentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["order", "value", "sigma"])?;
    for m in 1..=report.order_max() {
        w.write_record([
            m.to_string(),
            report.g(m).unwrap().to_string(),
            report.sigma(m).unwrap().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Execute the experiment, writing all outputs under `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    match config {
        ExperimentConfig::NetworkSim { state, n_max, network, trials, seed, orders } => {
            let input = make_state(*state, *n_max)?;
            let record = simulate_network(&input, network, *trials, *seed)?;
            let clicks = out_dir.join("clicks.csv");
            record.write_csv(fs::File::create(&clicks)?)?;
            outputs.push(clicks);

            let path = out_dir.join("moments.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["order", "value", "std_error"])?;
            for &m in orders {
                let chosen: Vec<usize> = (0..m).collect();
                let est = estimate_gm_mfold(&record, &chosen)?;
                w.write_record([
                    m.to_string(),
                    est.value.to_string(),
                    est.std_error.to_string(),
                ])?;
            }
            w.flush()?;
            outputs.push(path);
        }
        ExperimentConfig::TesAnalysis {
            state,
            n_max,
            traces,
            template_samples,
            noise_sigma,
            histogram_bins,
            n_peaks,
            m_max,
            mc_trials,
            seed,
        } => {
            let input = make_state(*state, *n_max)?;
            let template = vec![1.0; *template_samples];
            let set = synthesize_traces(&input, &template, *noise_sigma, *traces, *seed)?;
            let areas = integrate_areas(&set, 0, *template_samples)?;
            let hist = AreaHistogram::from_areas(&areas, Some(*histogram_bins))?;
            let fit = fit_mixture(&hist, *n_peaks)?;
            let stats = extract_statistics(&fit)?;

            let stats_path = out_dir.join("statistics.csv");
            let mut w = csv::Writer::from_path(&stats_path)?;
            w.write_record(["n", "probability", "sigma"])?;
            for (n, (&p, &s)) in
                stats.statistics.probs().iter().zip(&stats.deviations).enumerate()
            {
                w.write_record([n.to_string(), p.to_string(), s.to_string()])?;
            }
            w.flush()?;
            outputs.push(stats_path);

            let report = moments_with_mc_errors(&stats, *m_max, *mc_trials, seed ^ 0x5ee)?;
            let path = out_dir.join("moments.csv");
            write_moment_csv(&report, &path)?;
            outputs.push(path);
        }
        ExperimentConfig::Homodyne { states, blocks, samples_per_block, m_max, seed } => {
            let path = out_dir.join("table.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["state", "order", "value", "sigma"])?;
            for (i, &state) in states.iter().enumerate() {
                let report = simulate_moments(
                    state,
                    *blocks,
                    *samples_per_block,
                    *m_max,
                    seed.wrapping_add(i as u64),
                )?;
                let label = match state {
                    HomodyneState::Coherent { mean } => format!("coherent({mean})"),
                    HomodyneState::Thermal { mean } => format!("thermal({mean})"),
                };
                for m in 2..=*m_max {
                    w.write_record([
                        label.clone(),
                        m.to_string(),
                        report.g(m).unwrap().to_string(),
                        report.sigma(m).unwrap().to_string(),
                    ])?;
                }
            }
            w.flush()?;
            outputs.push(path);
        }
        ExperimentConfig::Pdc { modes, car_values, herald_efficiency, herald } => {
            let spectrum = SchmidtSpectrum::equal_modes(*modes, 0.0)?;
            let setup = match herald {
                HeraldConfig::Click => HeraldSetup::click(*herald_efficiency)?,
                HeraldConfig::Pnr { photons } => {
                    HeraldSetup::pnr(*herald_efficiency, *photons)?
                }
            };
            let points = g2h_curve(&spectrum, car_values, &setup)?;
            let path = out_dir.join("curve.csv");
            write_curve_csv(&points, fs::File::create(&path)?)?;
            outputs.push(path);
        }
        ExperimentConfig::Phasespace { fock, n_max, alpha_max, alpha_steps, m_maxes } => {
            if *alpha_steps < 2 || *alpha_max <= 0.0 {
                return Err(Error::invalid("alpha_steps", "need a positive radial grid"));
            }
            let state = FockAmplitudeVector::fock(*fock, *n_max)?;
            let alphas: Vec<DisplacementAmplitude> = (0..*alpha_steps)
                .map(|i| {
                    DisplacementAmplitude::new(
                        alpha_max * i as f64 / (*alpha_steps - 1) as f64,
                        0.0,
                    )
                })
                .collect();
            let grid = reconstruct_grid(&state, *fock, &alphas, m_maxes)?;
            let path = out_dir.join("grid.csv");
            grid.write_csv(fs::File::create(&path)?)?;
            outputs.push(path);
        }
        ExperimentConfig::Nonclassicality { state, n_max, m_max, matrix_size } => {
            let stats = make_state(*state, *n_max)?;
            let report = moments_from_statistics(&stats, *m_max)?;
            let mut verdicts = vec![
                moment_matrix_test(&report, *matrix_size)?,
                monotonicity_test(&report)?,
            ];
            if *m_max >= 3 {
                verdicts.push(schwarz_test(&report, 2, 1)?);
            }
            let path = out_dir.join("verdicts.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["criterion", "statistic", "determinant", "nonclassical", "significance"])?;
            for v in &verdicts {
                w.write_record([
                    v.criterion.clone(),
                    v.statistic.to_string(),
                    v.determinant.map(|d| d.to_string()).unwrap_or_default(),
                    v.nonclassical.to_string(),
                    v.significance.map(|s| s.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
            outputs.push(path);
        }
    }

    let summary = RunSummary {
        kind: config.kind().to_string(),
        seed: config.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        outputs: outputs.clone(),
    };
    let summary_path = out_dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn hbt_config(seed: u64) -> ExperimentConfig {
        ExperimentConfig::NetworkSim {
            state: StateKind::Thermal { mean: 0.05 },
            n_max: 60,
            network: NetworkSpec::hbt(0.5, 0.4, 0.4).unwrap(),
            trials: 100_000,
            seed,
            orders: vec![2],
        }
    }

    #[test]
    fn strict_schema_rejects_unknown_keys() {
        let json = r#"{"experiment":"pdc","modes":1,"car_values":[10.0],
                       "herald_efficiency":0.5,"herald":{"kind":"click"},"bogus":1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn invalid_efficiency_fails_validation() {
        let json = r#"{"experiment":"network_sim","state":{"kind":"fock","k":1},"n_max":4,
            "network":{"depth":0,"transmissions":[[0.5]],
                "detectors":[{"kind":"click","efficiency":1.2},{"kind":"click","efficiency":0.5}]},
            "trials":10,"seed":1,"orders":[2]}"#;
        let err = serde_json::from_str::<ExperimentConfig>(json).unwrap_err();
        assert!(err.to_string().contains("efficiency"), "{err}");
    }

    #[test]
    fn identical_configs_give_byte_identical_outputs() {
        let dir_a = TempDir::new().unwrap();
        let dir_b = TempDir::new().unwrap();
        run(&hbt_config(9), dir_a.path()).unwrap();
        run(&hbt_config(9), dir_b.path()).unwrap();
        for file in ["clicks.csv", "moments.csv"] {
            let a = fs::read(dir_a.path().join(file)).unwrap();
            let b = fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
        }
    }

    #[test]
    fn summary_echoes_config_and_seed() {
        let dir = TempDir::new().unwrap();
        let summary = run(&hbt_config(3), dir.path()).unwrap();
        assert_eq!(summary.seed, Some(3));
        assert_eq!(summary.kind, "network-sim");
        let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
        assert!(text.contains("\"seed\": 3"));
        assert!(text.contains("network_sim"));
    }

    #[test]
    fn seed_override_applies_only_to_stochastic_runs() {
        let config = hbt_config(1).with_seed(7);
        assert_eq!(config.seed(), Some(7));
        let pdc = ExperimentConfig::Pdc {
            modes: 1,
            car_values: vec![10.0],
            herald_efficiency: 1.0,
            herald: HeraldConfig::Click,
        };
        assert_eq!(pdc.clone().with_seed(7).seed(), None);
    }

    #[test]
    fn phasespace_run_writes_grid() {
        let dir = TempDir::new().unwrap();
        let config = ExperimentConfig::Phasespace {
            fock: 1,
            n_max: 60,
            alpha_max: 1.0,
            alpha_steps: 5,
            m_maxes: vec![6, 11],
        };
        let summary = run(&config, dir.path()).unwrap();
        assert!(summary.outputs[0].ends_with("grid.csv"));
        let text = fs::read_to_string(&summary.outputs[0]).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 2);
    }

    #[test]
    fn nonclassicality_run_flags_fock_state() {
        let dir = TempDir::new().unwrap();
        let config = ExperimentConfig::Nonclassicality {
            state: StateKind::Fock { k: 1 },
            n_max: 8,
            m_max: 4,
            matrix_size: 2,
        };
        run(&config, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("verdicts.csv")).unwrap();
        assert!(text.contains("true"), "{text}");
    }
}
