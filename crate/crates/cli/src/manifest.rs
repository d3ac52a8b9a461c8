//! Experiment manifest: every physical constant, excitation, model grid and
//! seed of a study in one TOML file. Field names carry their units.

use std::path::PathBuf;

use hystid::boucwen::{AcquisitionConfig, BoucWenParameters, NewmarkConfig};
use hystid::lm::LmConfig;
use hystid::pnlss::PnlssConfig;
use hystid::signals::{ExcitationSpec, GridKind, SweepSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub schema_version: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub system: SystemSection,
    pub integration: IntegrationSection,
    pub acquisition: AcquisitionSection,
    pub estimation: EstimationSection,
    pub validation: ValidationSection,
    pub distortion: DistortionSection,
    pub linear: LinearSection,
    pub pnlss: PnlssSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub mass_kg: f64,
    pub damping_n_s_per_m: f64,
    pub stiffness_n_per_m: f64,
    pub alpha_n_per_m: f64,
    pub beta_per_m: f64,
    pub gamma: f64,
    pub delta: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub step_hz: f64,
    pub newmark_a: f64,
    pub newmark_b: f64,
    pub newmark_c: f64,
    pub nr_tolerance_n: f64,
    pub nr_max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSection {
    pub sample_rate_hz: f64,
    /// Omit for noiseless output.
    #[serde(default)]
    pub snr_db: Option<f64>,
    pub filter_order: usize,
    /// Anti-alias cutoff as a fraction of the acquisition rate.
    pub cutoff_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    pub samples_per_period: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub rms_n: f64,
    /// Steady-state periods kept per experiment.
    pub periods: usize,
    pub discard_periods: usize,
    /// One experiment per entry.
    pub phase_seeds: Vec<u64>,
    pub noise_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    pub phase_seed: u64,
    pub noise_seed: u64,
    pub steady_max_periods: usize,
    pub steady_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSection {
    pub samples_per_period: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub amplitudes_rms_n: Vec<f64>,
    pub group_size: usize,
    /// Seeds both the detection-line draw and the phases.
    pub design_seed: u64,
    pub noise_seed: u64,
    pub periods: usize,
    pub discard_periods: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_decrease: f64,
    pub damping_increase: f64,
}

impl OptimizerSection {
    pub fn lm(&self) -> LmConfig {
        LmConfig {
            max_iterations: self.max_iterations,
            initial_damping: self.initial_damping,
            decrease: self.damping_decrease,
            increase: self.damping_increase,
            ..LmConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSection {
    pub orders: Vec<usize>,
    pub dimensions: Vec<usize>,
    /// Order carried into the nonlinear stage. When absent, the order with the
    /// lowest multisine validation error wins.
    #[serde(default)]
    pub selected_order: Option<usize>,
    pub optimizer: OptimizerSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PnlssSection {
    pub degree_sets: Vec<Vec<u32>>,
    #[serde(default)]
    pub include_input: bool,
    /// Degrees of the output-equation polynomial; empty for none.
    #[serde(default)]
    pub output_degrees: Vec<u32>,
    pub normalize_states: bool,
    pub divergence_factor: f64,
    pub optimizer: OptimizerSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub rate_hz_per_min: f64,
    pub amplitudes_n: Vec<f64>,
    /// Models to sweep; each must appear in `pnlss.degree_sets`.
    pub degree_sets: Vec<Vec<u32>>,
    /// Amplitude at which error spectra are written.
    pub spectrum_amplitude_n: f64,
    pub spectrum_low_hz: f64,
    pub spectrum_high_hz: f64,
}

/// File-name label of a degree set, e.g. `d2-3`.
pub fn degree_label(degrees: &[u32]) -> String {
    let parts: Vec<String> = degrees.iter().map(u32::to_string).collect();
    format!("d{}", parts.join("-"))
}

fn bad<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl ExperimentManifest {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        // read the version first so a newer file fails on its version, not on a field
        #[derive(Deserialize)]
        struct Version {
            schema_version: Option<toml::Value>,
        }
        let v: Version = toml::from_str(text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        match v.schema_version {
            Some(toml::Value::Integer(n)) if n == SCHEMA_VERSION as i64 => {}
            Some(toml::Value::Integer(n)) if n > SCHEMA_VERSION as i64 => {
                return bad(format!(
                    "manifest schema_version {n} is newer than the supported version {SCHEMA_VERSION}"
                ))
            }
            Some(other) => return bad(format!("unsupported manifest schema_version {other}")),
            None => return bad("manifest is missing schema_version"),
        }
        let m: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported manifest schema_version {}", self.schema_version));
        }
        self.params().validate().map_err(|e| CliError::Config(e.to_string()))?;
        let i = &self.integration;
        if !positive(i.step_hz) || !positive(i.nr_tolerance_n) || i.nr_max_iterations == 0 {
            return bad("integration: step_hz, nr_tolerance_n and nr_max_iterations must be positive");
        }
        let a = &self.acquisition;
        if !positive(a.sample_rate_hz) || a.filter_order == 0 || !(a.cutoff_ratio > 0.0 && a.cutoff_ratio < 0.5) {
            return bad("acquisition: need a positive rate, a filter order and 0 < cutoff_ratio < 0.5");
        }
        let ratio = i.step_hz / a.sample_rate_hz;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio < 1.0 {
            return bad("integration.step_hz must be an integer multiple of acquisition.sample_rate_hz");
        }
        if a.snr_db.is_some_and(|s| !s.is_finite()) {
            return bad("acquisition.snr_db must be finite");
        }

        let e = &self.estimation;
        self.estimation_spec(0).validate().map_err(|e| CliError::Config(format!("estimation: {e}")))?;
        if e.phase_seeds.len() < 2 {
            return bad("estimation: at least two experiments (phase_seeds) are needed for the BLA variance");
        }
        if e.noise_seeds.len() != e.phase_seeds.len() {
            return bad("estimation: noise_seeds and phase_seeds must have the same length");
        }
        if e.periods < 2 {
            return bad("estimation: at least two periods are needed for the noise variance");
        }
        let v = &self.validation;
        if v.steady_max_periods == 0 || !positive(v.steady_tolerance) {
            return bad("validation: steady_max_periods and steady_tolerance must be positive");
        }

        let d = &self.distortion;
        self.distortion_spec().validate().map_err(|e| CliError::Config(format!("distortion: {e}")))?;
        if d.periods < 2 {
            return bad("distortion: at least two periods are needed for the noise level");
        }
        if d.amplitudes_rms_n.iter().any(|x| !positive(*x)) {
            return bad("distortion: amplitudes must be positive");
        }

        let l = &self.linear;
        if l.orders.is_empty() || l.orders.contains(&0) {
            return bad("linear: orders must be a non-empty list of positive integers");
        }
        if l.dimensions.is_empty() || l.dimensions.iter().any(|&i| i < 2) {
            return bad("linear: dimensions must be a non-empty list of integers >= 2");
        }
        if !l.orders.iter().any(|&n| l.dimensions.iter().any(|&i| i > n)) {
            return bad("linear: every model needs a dimension larger than its order");
        }
        if let Some(n) = l.selected_order {
            if !l.orders.contains(&n) {
                return bad(format!("linear: selected_order {n} is not in orders"));
            }
        }
        check_optimizer("linear", &l.optimizer)?;

        let p = &self.pnlss;
        for set in &p.degree_sets {
            if set.is_empty() || set.iter().any(|&d| !(2..=32).contains(&d)) {
                return bad("pnlss: each degree set must be non-empty with degrees in 2..=32");
            }
        }
        let labels: std::collections::BTreeSet<String> = p.degree_sets.iter().map(|s| degree_label(&normalized(s))).collect();
        if labels.len() != p.degree_sets.len() {
            return bad("pnlss: duplicate degree sets");
        }
        if p.output_degrees.iter().any(|&d| !(2..=32).contains(&d)) {
            return bad("pnlss: output degrees must lie in 2..=32");
        }
        if !positive(p.divergence_factor) {
            return bad("pnlss: divergence_factor must be positive");
        }
        check_optimizer("pnlss", &p.optimizer)?;

        let s = &self.sweep;
        self.sweep_spec(1.0).validate().map_err(|e| CliError::Config(format!("sweep: {e}")))?;
        if s.amplitudes_n.iter().any(|x| !positive(*x)) {
            return bad("sweep: amplitudes must be positive");
        }
        for set in &s.degree_sets {
            if !labels.contains(&degree_label(&normalized(set))) {
                return bad(format!("sweep: degree set {set:?} is not fitted in pnlss.degree_sets"));
            }
        }
        if !positive(s.spectrum_amplitude_n) || !(s.spectrum_low_hz >= 0.0 && s.spectrum_low_hz < s.spectrum_high_hz) {
            return bad("sweep: spectrum amplitude must be positive and the spectrum band ordered");
        }
        Ok(())
    }

    pub fn params(&self) -> BoucWenParameters {
        let s = &self.system;
        BoucWenParameters {
            m_l: s.mass_kg,
            c_l: s.damping_n_s_per_m,
            k_l: s.stiffness_n_per_m,
            alpha: s.alpha_n_per_m,
            beta: s.beta_per_m,
            gamma: s.gamma,
            delta: s.delta,
            nu: s.nu,
        }
    }

    pub fn newmark(&self) -> NewmarkConfig {
        let i = &self.integration;
        NewmarkConfig {
            a: i.newmark_a,
            b: i.newmark_b,
            c: i.newmark_c,
            step_hz: i.step_hz,
            nr_tolerance: i.nr_tolerance_n,
            nr_max_iter: i.nr_max_iterations,
        }
    }

    pub fn acquisition(&self, noise_seed: u64) -> AcquisitionConfig {
        let a = &self.acquisition;
        AcquisitionConfig {
            target_rate_hz: a.sample_rate_hz,
            snr_db: a.snr_db,
            noise_seed,
            filter_order: a.filter_order,
            cutoff_ratio: a.cutoff_ratio,
        }
    }

    /// Full-grid spec shared by estimation and validation experiments.
    pub fn estimation_spec(&self, rng_seed: u64) -> ExcitationSpec {
        let e = &self.estimation;
        ExcitationSpec {
            sample_rate_hz: self.acquisition.sample_rate_hz,
            num_samples_per_period: e.samples_per_period,
            band_low_hz: e.band_low_hz,
            band_high_hz: e.band_high_hz,
            target_rms: e.rms_n,
            grid_kind: GridKind::Full,
            group_size: 3,
            rng_seed,
        }
    }

    /// Unit-RMS odd design; the amplitude grid scales it.
    pub fn distortion_spec(&self) -> ExcitationSpec {
        let d = &self.distortion;
        ExcitationSpec {
            sample_rate_hz: self.acquisition.sample_rate_hz,
            num_samples_per_period: d.samples_per_period,
            band_low_hz: d.band_low_hz,
            band_high_hz: d.band_high_hz,
            target_rms: 1.0,
            grid_kind: GridKind::OddWithDetection,
            group_size: d.group_size,
            rng_seed: d.design_seed,
        }
    }

    pub fn sweep_spec(&self, amplitude_n: f64) -> SweepSpec {
        let s = &self.sweep;
        SweepSpec {
            f_start_hz: s.f_start_hz,
            f_end_hz: s.f_end_hz,
            rate_hz_per_min: s.rate_hz_per_min,
            amplitude_n,
            sample_rate_hz: self.acquisition.sample_rate_hz,
        }
    }

    pub fn pnlss_config(&self) -> PnlssConfig {
        PnlssConfig {
            lm: self.pnlss.optimizer.lm(),
            steady_tolerance: self.validation.steady_tolerance,
            max_periods: self.validation.steady_max_periods,
            divergence_factor: self.pnlss.divergence_factor,
            normalize_states: self.pnlss.normalize_states,
        }
    }
}

/// Sorted, deduplicated copy of a degree set.
pub fn normalized(degrees: &[u32]) -> Vec<u32> {
    let mut d = degrees.to_vec();
    d.sort_unstable();
    d.dedup();
    d
}

fn check_optimizer(section: &str, o: &OptimizerSection) -> CliResult<()> {
    if !positive(o.initial_damping) || !(o.damping_decrease > 0.0 && o.damping_decrease < 1.0) || !(o.damping_increase > 1.0) {
        return bad(format!(
            "{section}.optimizer: need initial_damping > 0, 0 < damping_decrease < 1 and damping_increase > 1"
        ));
    }
    Ok(())
}
