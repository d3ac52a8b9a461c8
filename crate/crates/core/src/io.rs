//! Plain-text interchange formats: time records as CSV plus a JSON sidecar,
//! signals and spectra as CSV, FRF tables as CSV.
//!
//! Floats are written with the shortest representation that parses back to
//! the same `f64`, so every writer here round-trips bit for bit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::boucwen::{BoucWenParameters, TimeRecord};
use crate::error::{Error, Result};
use crate::linear_id::FrfEstimate;
use crate::signals::{Scaling, SpectrumRecord};

pub const TIME_RECORD_HEADER: &str = "time_s,input_n,output_m";
pub const SIGNAL_HEADER: &str = "index,value";
pub const SPECTRUM_HEADER: &str = "index,frequency_hz,re,im";
pub const FRF_HEADER: &str = "frequency_hz,re,im,total_variance,noise_variance";

/// Everything about a time record that is not a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordSidecar {
    pub sample_rate_hz: f64,
    pub samples_per_period: usize,
    pub periods: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_seed: Option<u64>,
    #[serde(default)]
    pub transient_db: Option<f64>,
    #[serde(default)]
    pub phase_seed: Option<u64>,
    #[serde(default)]
    pub integration_rate_hz: Option<f64>,
    #[serde(default)]
    pub rms_input_n: Option<f64>,
    #[serde(default)]
    pub params: Option<BoucWenParameters>,
}

impl RecordSidecar {
    pub fn from_record(record: &TimeRecord) -> Self {
        Self {
            sample_rate_hz: record.sample_rate_hz,
            samples_per_period: record.samples_per_period,
            periods: record.periods,
            noise_sigma: record.noise_sigma,
            noise_seed: record.noise_seed,
            transient_db: record.transient_db,
            phase_seed: None,
            integration_rate_hz: None,
            rms_input_n: None,
            params: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if !(s.sample_rate_hz > 0.0 && s.sample_rate_hz.is_finite()) {
            return Err(Error::Parse("sidecar sample_rate_hz must be positive".into()));
        }
        if s.samples_per_period == 0 || s.periods == 0 {
            return Err(Error::Parse("sidecar periods and samples_per_period must be positive".into()));
        }
        if s.samples_per_period.checked_mul(s.periods).is_none() {
            return Err(Error::Parse("sidecar record length overflows".into()));
        }
        Ok(s)
    }
}

fn check_header(first: Option<&str>, expected: &str) -> Result<()> {
    match first {
        Some(h) if h.trim_end() == expected => Ok(()),
        Some(h) => Err(Error::Parse(format!("expected header `{expected}`, found `{}`", h.trim_end()))),
        None => Err(Error::Parse(format!("empty file, expected header `{expected}`"))),
    }
}

/// Splits one data row into exactly `width` fields.
fn fields<'a>(line: &'a str, width: usize, row: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.trim_end().split(',').map(str::trim).collect();
    if parts.len() != width {
        return Err(Error::Parse(format!("line {row}: expected {width} fields, found {}", parts.len())));
    }
    Ok(parts)
}

fn float(s: &str, row: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {row}: `{s}` is not a number")))
}

fn index(s: &str, row: usize) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::Parse(format!("line {row}: `{s}` is not an index")))
}

/// Data rows, 1-based line numbers, blank lines skipped.
fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn time_record_to_csv(record: &TimeRecord) -> String {
    let mut out = String::with_capacity(record.input.len() * 48);
    out.push_str(TIME_RECORD_HEADER);
    out.push('\n');
    for (i, (u, y)) in record.input.iter().zip(&record.output).enumerate() {
        let t = i as f64 / record.sample_rate_hz;
        out.push_str(&format!("{t},{u},{y}\n"));
    }
    out
}

/// Rebuilds a record from its CSV body and sidecar. The time column must
/// match the sidecar's sample rate.
pub fn time_record_from_csv(csv: &str, sidecar: &RecordSidecar) -> Result<TimeRecord> {
    check_header(csv.lines().next(), TIME_RECORD_HEADER)?;
    let expected = sidecar.samples_per_period * sidecar.periods;
    let mut input = Vec::with_capacity(expected.min(1 << 24));
    let mut output = Vec::with_capacity(expected.min(1 << 24));
    for (row, line) in rows(csv) {
        let f = fields(line, 3, row)?;
        let t = float(f[0], row)?;
        let nominal = input.len() as f64 / sidecar.sample_rate_hz;
        if !((t - nominal).abs() <= 1e-9 * nominal.abs().max(1.0)) {
            return Err(Error::Parse(format!("line {row}: time {t} does not match sample {}", input.len())));
        }
        input.push(float(f[1], row)?);
        output.push(float(f[2], row)?);
    }
    if input.len() != expected {
        return Err(Error::Parse(format!("record has {} samples, sidecar declares {expected}", input.len())));
    }
    Ok(TimeRecord {
        input,
        output,
        sample_rate_hz: sidecar.sample_rate_hz,
        periods: sidecar.periods,
        samples_per_period: sidecar.samples_per_period,
        noise_sigma: sidecar.noise_sigma,
        noise_seed: sidecar.noise_seed,
        transient_db: sidecar.transient_db,
    })
}

pub fn signal_to_csv(signal: &[f64]) -> String {
    let mut out = format!("{SIGNAL_HEADER}\n");
    for (i, v) in signal.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

pub fn signal_from_csv(csv: &str) -> Result<Vec<f64>> {
    check_header(csv.lines().next(), SIGNAL_HEADER)?;
    let mut out = Vec::new();
    for (row, line) in rows(csv) {
        let f = fields(line, 2, row)?;
        if index(f[0], row)? != out.len() {
            return Err(Error::Parse(format!("line {row}: indices must be consecutive from 0")));
        }
        out.push(float(f[1], row)?);
    }
    Ok(out)
}

pub fn spectrum_to_csv(spectrum: &SpectrumRecord) -> String {
    let mut out = format!("{SPECTRUM_HEADER}\n");
    for (k, v) in spectrum.values.iter().enumerate() {
        out.push_str(&format!("{k},{},{},{}\n", spectrum.frequency_hz(k), v.re, v.im));
    }
    out
}

/// The bin spacing is taken from bin 1; a one-bin spectrum needs `f0_hz`.
pub fn spectrum_from_csv(csv: &str, f0_hz: Option<f64>) -> Result<SpectrumRecord> {
    check_header(csv.lines().next(), SPECTRUM_HEADER)?;
    let mut values = Vec::new();
    let mut f0 = f0_hz;
    for (row, line) in rows(csv) {
        let f = fields(line, 4, row)?;
        let k = index(f[0], row)?;
        if k != values.len() {
            return Err(Error::Parse(format!("line {row}: bins must be consecutive from 0")));
        }
        let freq = float(f[1], row)?;
        if k == 1 && f0.is_none() {
            f0 = Some(freq);
        }
        if let Some(f0) = f0 {
            let nominal = k as f64 * f0;
            if !((freq - nominal).abs() <= 1e-9 * nominal.abs().max(1.0)) {
                return Err(Error::Parse(format!("line {row}: frequency {freq} is off the {f0} Hz grid")));
            }
        }
        values.push(Complex64::new(float(f[2], row)?, float(f[3], row)?));
    }
    let f0_hz = f0.ok_or_else(|| Error::Parse("bin spacing unknown for a spectrum shorter than two bins".into()))?;
    if !(f0_hz > 0.0 && f0_hz.is_finite()) {
        return Err(Error::Parse("bin spacing must be positive".into()));
    }
    Ok(SpectrumRecord { values, f0_hz, scaling: Scaling::SymmetricSqrtN })
}

pub fn frf_to_csv(frf: &FrfEstimate) -> String {
    let mut out = format!("{FRF_HEADER}\n");
    for (i, f) in frf.frequencies_hz().iter().enumerate() {
        let g = frf.g_bla[i];
        out.push_str(&format!("{f},{},{},{},{}\n", g.re, g.im, frf.total_variance[i], frf.noise_variance[i]));
    }
    out
}
