//! Random-phase multisines on a full or odd/detection frequency grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dft::Dft;
use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Full,
    OddWithDetection,
}

fn default_group_size() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub sample_rate_hz: f64,
    pub num_samples_per_period: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub target_rms: f64,
    pub grid_kind: GridKind,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    pub rng_seed: u64,
}

impl ExcitationSpec {
    pub fn f0_hz(&self) -> f64 {
        self.sample_rate_hz / self.num_samples_per_period as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return config("sample_rate_hz must be positive");
        }
        if self.num_samples_per_period < 2 {
            return config("num_samples_per_period must be at least 2");
        }
        if !(self.band_low_hz > 0.0
            && self.band_low_hz < self.band_high_hz
            && self.band_high_hz < self.sample_rate_hz / 2.0)
        {
            return config(format!(
                "band must satisfy 0 < low < high < fs/2 (got {}..{} Hz at fs = {} Hz)",
                self.band_low_hz, self.band_high_hz, self.sample_rate_hz
            ));
        }
        if !(self.target_rms > 0.0) || !self.target_rms.is_finite() {
            return config("target_rms must be positive");
        }
        if self.grid_kind == GridKind::OddWithDetection && self.group_size < 2 {
            return config("group_size must be at least 2");
        }
        Ok(())
    }

    /// Bins `k` with `band_low <= k f0 <= band_high`, both edges inclusive.
    pub fn band_lines(&self) -> Vec<usize> {
        let f0 = self.f0_hz();
        let eps = 1e-9;
        let lo = (self.band_low_hz / f0 - eps).ceil().max(1.0) as usize;
        let hi = (self.band_high_hz / f0 + eps).floor() as usize;
        let hi = hi.min((self.num_samples_per_period - 1) / 2);
        if hi < lo {
            return Vec::new();
        }
        (lo..=hi).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineClass {
    OddExcited,
    OddDetection,
    EvenDetection,
    OutOfBand,
}

impl LineClass {
    pub fn as_str(self) -> &'static str {
        match self {
            LineClass::OddExcited => "odd_excited",
            LineClass::OddDetection => "odd_detection",
            LineClass::EvenDetection => "even_detection",
            LineClass::OutOfBand => "out_of_band",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "odd_excited" => LineClass::OddExcited,
            "odd_detection" => LineClass::OddDetection,
            "even_detection" => LineClass::EvenDetection,
            "out_of_band" => LineClass::OutOfBand,
            _ => return None,
        })
    }
}

/// One period of a multisine together with its line design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multisine {
    pub sample_rate_hz: f64,
    pub num_samples_per_period: usize,
    /// Excited DFT bins, ascending.
    pub lines: Vec<usize>,
    /// Cosine amplitude shared by every excited line.
    pub amplitude: f64,
    pub phases: Vec<f64>,
    pub phase_seed: u64,
    pub period: Vec<f64>,
}

impl Multisine {
    /// Builds `sum_k amplitude * cos(2 pi k t / N + phase_k)` without any RMS calibration.
    pub fn from_lines(
        sample_rate_hz: f64,
        num_samples_per_period: usize,
        lines: Vec<usize>,
        amplitude: f64,
        phases: Vec<f64>,
    ) -> Result<Self> {
        if lines.is_empty() {
            return config("multisine has no excited lines");
        }
        if lines.len() != phases.len() {
            return config("one phase per excited line is required");
        }
        if lines.iter().any(|&k| k == 0 || 2 * k >= num_samples_per_period) {
            return config("excited lines must lie strictly between DC and Nyquist");
        }
        let mut ms = Self {
            sample_rate_hz,
            num_samples_per_period,
            lines,
            amplitude,
            phases,
            phase_seed: 0,
            period: Vec::new(),
        };
        ms.period = ms.synthesize(num_samples_per_period);
        Ok(ms)
    }

    /// Evaluates the same multisine on a grid of `samples_per_period` points per period.
    /// Exact for any grid fine enough to hold the highest excited line.
    pub fn synthesize(&self, samples_per_period: usize) -> Vec<f64> {
        let m = samples_per_period;
        let mut spec = vec![Complex64::new(0.0, 0.0); m];
        let half = 0.5 * self.amplitude * (m as f64).sqrt();
        for (&k, &phi) in self.lines.iter().zip(&self.phases) {
            let v = Complex64::from_polar(half, phi);
            spec[k] += v;
            spec[m - k] += v.conj();
        }
        Dft::new(m).inverse_real(&spec)
    }

    pub fn rms(&self) -> f64 {
        rms(&self.period)
    }

    /// `reps` back-to-back copies of the period.
    pub fn repeat(&self, reps: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.period.len() * reps);
        for _ in 0..reps {
            out.extend_from_slice(&self.period);
        }
        out
    }

    /// Same lines and phases with every amplitude multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        let mut out = self.clone();
        out.amplitude *= gain;
        out.period.iter_mut().for_each(|v| *v *= gain);
        out
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn draw_phases(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
}

fn calibrated(spec: &ExcitationSpec, lines: Vec<usize>, phase_seed: u64) -> Result<Multisine> {
    let phases = draw_phases(lines.len(), phase_seed);
    let mut ms = Multisine::from_lines(
        spec.sample_rate_hz,
        spec.num_samples_per_period,
        lines,
        1.0,
        phases,
    )?;
    ms.phase_seed = phase_seed;
    let gain = spec.target_rms / ms.rms();
    Ok(ms.scaled(gain))
}

/// Flat-amplitude random-phase multisine exciting every line of the band
/// (or the odd/detection design when `spec.grid_kind` asks for it).
pub fn generate_multisine(spec: &ExcitationSpec, phase_seed: u64) -> Result<Multisine> {
    spec.validate()?;
    let lines = match spec.grid_kind {
        GridKind::Full => spec.band_lines(),
        GridKind::OddWithDetection => {
            let labels = detection_design(spec)?;
            excited_from_labels(&labels)
        }
    };
    if lines.is_empty() {
        return config("no excited line falls inside the band");
    }
    calibrated(spec, lines, phase_seed)
}

fn excited_from_labels(labels: &[LineClass]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == LineClass::OddExcited)
        .map(|(k, _)| k)
        .collect()
}

/// Per-bin labels for bins `0..=N/2` of an odd multisine with one randomly
/// rejected line per group of `group_size` consecutive odd lines.
///
/// A trailing group shorter than `group_size` stays fully excited.
pub fn detection_design(spec: &ExcitationSpec) -> Result<Vec<LineClass>> {
    spec.validate()?;
    let n = spec.num_samples_per_period;
    let mut labels = vec![LineClass::OutOfBand; n / 2 + 1];
    let band = spec.band_lines();
    let odd: Vec<usize> = band.iter().copied().filter(|k| k % 2 == 1).collect();
    if odd.len() < spec.group_size {
        return config(format!(
            "only {} odd lines in band, need at least group_size = {}",
            odd.len(),
            spec.group_size
        ));
    }
    for &k in &band {
        labels[k] = if k % 2 == 0 {
            LineClass::EvenDetection
        } else {
            LineClass::OddExcited
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(1);
    for group in odd.chunks_exact(spec.group_size) {
        let pick = rng.random_range(0..spec.group_size);
        labels[group[pick]] = LineClass::OddDetection;
    }
    Ok(labels)
}

/// Odd random-phase multisine with detection lines; phases are drawn from `spec.rng_seed`.
pub fn generate_odd_detection_multisine(
    spec: &ExcitationSpec,
) -> Result<(Multisine, Vec<LineClass>)> {
    if spec.grid_kind != GridKind::OddWithDetection {
        return config("grid_kind must be odd_with_detection");
    }
    let labels = detection_design(spec)?;
    let lines = excited_from_labels(&labels);
    let ms = calibrated(spec, lines, spec.rng_seed)?;
    Ok((ms, labels))
}
