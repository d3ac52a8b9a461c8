//! Model validation on held-out multisine data and under sine sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boucwen::{acquire_output, simulate_displacement, AcquisitionConfig, BoucWenParameters, NewmarkConfig, TimeRecord};
use crate::boucwen::filter::Padding;
use crate::distortion::db;
use crate::error::{config, Error, Result};
use crate::pnlss::{pnlss_simulate, steady_state_simulate, PnlssModel, SimStatus};
use crate::signals::{generate_sweep, rms, Dft, SweepSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLine {
    pub bin: usize,
    pub frequency_hz: f64,
    pub error_db: f64,
    pub reference_db: f64,
}

/// Error fields are `None` when the model diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model_id: String,
    pub metadata: BTreeMap<String, String>,
    pub diverged: bool,
    pub divergence_sample: Option<usize>,
    pub divergence_time_s: Option<f64>,
    pub rms_error_m: Option<f64>,
    pub rms_error_db: Option<f64>,
    pub relative_error_pct: Option<f64>,
    pub output_rms_m: f64,
    pub error_spectrum: Vec<SpectrumLine>,
}

impl ValidationReport {
    fn diverged(model_id: &str, sample: Option<usize>, rate: f64, output_rms_m: f64) -> Self {
        Self {
            model_id: model_id.to_string(),
            metadata: BTreeMap::new(),
            diverged: true,
            divergence_sample: sample,
            divergence_time_s: sample.map(|s| s as f64 / rate),
            rms_error_m: None,
            rms_error_db: None,
            relative_error_pct: None,
            output_rms_m,
            error_spectrum: Vec::new(),
        }
    }

    fn from_error(model_id: &str, error: &[f64], reference: &[f64], spectrum: Vec<SpectrumLine>) -> Self {
        let e = rms(error);
        let r = rms(reference);
        Self {
            model_id: model_id.to_string(),
            metadata: BTreeMap::new(),
            diverged: false,
            divergence_sample: None,
            divergence_time_s: None,
            rms_error_m: Some(e),
            rms_error_db: Some(db(e)),
            relative_error_pct: Some(100.0 * e / r),
            output_rms_m: r,
            error_spectrum: spectrum,
        }
    }
}

/// Per-bin DFT magnitudes (dB re 1 m, unitary scaling) of `model - exact`
/// and of `exact`, for bins whose frequency lies in `[lo_hz, hi_hz]`.
pub fn error_spectrum(model: &[f64], exact: &[f64], sample_rate_hz: f64, lo_hz: f64, hi_hz: f64) -> Result<Vec<SpectrumLine>> {
    if model.len() != exact.len() {
        return config("error spectrum needs equal-length records");
    }
    if model.is_empty() {
        return Ok(Vec::new());
    }
    let n = model.len();
    let dft = Dft::new(n);
    let err: Vec<f64> = model.iter().zip(exact).map(|(a, b)| a - b).collect();
    let e = dft.forward_real(&err);
    let x = dft.forward_real(exact);
    let f0 = sample_rate_hz / n as f64;
    Ok((0..=n / 2)
        .filter(|&k| {
            let f = k as f64 * f0;
            f >= lo_hz && f <= hi_hz
        })
        .map(|k| SpectrumLine {
            bin: k,
            frequency_hz: k as f64 * f0,
            error_db: db(e[k].norm()),
            reference_db: db(x[k].norm()),
        })
        .collect())
}

/// Steady-state model output against the period-averaged validation output.
pub fn validate_multisine(
    model: &PnlssModel,
    model_id: &str,
    record: &TimeRecord,
    max_periods: usize,
    tolerance: f64,
) -> Result<ValidationReport> {
    record.validate()?;
    let (u, y) = record.mean_period();
    let rate = record.sample_rate_hz;
    let mut report = match steady_state_simulate(model, &u, max_periods, tolerance) {
        Ok(ss) => {
            let err: Vec<f64> = ss.output.iter().zip(&y).map(|(a, b)| a - b).collect();
            let spec = error_spectrum(&ss.output, &y, rate, 0.0, rate / 2.0)?;
            ValidationReport::from_error(model_id, &err, &y, spec)
        }
        Err(Error::Diverged { sample }) => ValidationReport::diverged(model_id, Some(sample), rate, rms(&y)),
        Err(Error::NotSteady { .. }) => ValidationReport::diverged(model_id, None, rate, rms(&y)),
        Err(e) => return Err(e),
    };
    report.metadata.insert("kind".into(), "multisine".into());
    report.metadata.insert("periods_averaged".into(), record.periods.to_string());
    report.metadata.insert("samples_per_period".into(), record.samples_per_period.to_string());
    Ok(report)
}

/// Reference sweep response: integrated at the step rate, then filtered and
/// decimated to the model rate without noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReference {
    pub amplitude_n: f64,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub sample_rate_hz: f64,
}

pub fn sweep_reference(
    params: &BoucWenParameters,
    newmark: &NewmarkConfig,
    spec: &SweepSpec,
    model_rate_hz: f64,
) -> Result<SweepReference> {
    spec.validate()?;
    let coarse = spec.at_rate(model_rate_hz);
    let fine = spec.at_rate(newmark.step_hz);
    let u_fine = generate_sweep(&fine)?;
    let y_fine = simulate_displacement(params, newmark, &u_fine)?;
    let acq = AcquisitionConfig {
        target_rate_hz: model_rate_hz,
        snr_db: None,
        ..AcquisitionConfig::default()
    };
    let out = acquire_output(&y_fine, newmark.step_hz, &acq, Padding::Reflect)?;
    let input = generate_sweep(&coarse)?;
    let mut output = out.clean;
    output.truncate(input.len());
    if output.len() != input.len() {
        return config("sweep decimation produced too few samples");
    }
    Ok(SweepReference {
        amplitude_n: spec.amplitude_n,
        input,
        output,
        sample_rate_hz: model_rate_hz,
    })
}

/// Fraction of leading samples left out of the sweep comparison.
pub const SWEEP_SKIP_FRACTION: f64 = 0.01;

/// Zero-initial-state simulation of `model` against a reference sweep.
pub fn validate_against_sweep(model: &PnlssModel, model_id: &str, reference: &SweepReference) -> Result<ValidationReport> {
    let x0 = vec![0.0; model.order()];
    let sim = pnlss_simulate(model, &reference.input, &x0)?;
    let skip = (SWEEP_SKIP_FRACTION * reference.output.len() as f64).ceil() as usize;
    let rate = reference.sample_rate_hz;
    let mut report = match sim.status {
        SimStatus::Diverged { sample } => {
            ValidationReport::diverged(model_id, Some(sample), rate, rms(&reference.output[skip..]))
        }
        SimStatus::Completed => {
            let err: Vec<f64> = sim.output[skip..].iter().zip(&reference.output[skip..]).map(|(a, b)| a - b).collect();
            let spec = error_spectrum(&sim.output, &reference.output, rate, 5.0, 200.0)?;
            ValidationReport::from_error(model_id, &err, &reference.output[skip..], spec)
        }
    };
    report.metadata.insert("kind".into(), "sweep".into());
    report.metadata.insert("amplitude_n".into(), reference.amplitude_n.to_string());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub amplitude_n: f64,
    pub relative_error_pct: Option<f64>,
    pub diverged: bool,
    pub divergence_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub model_id: String,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// Amplitude and error of the smallest finite relative error.
    pub fn minimum(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.relative_error_pct.map(|e| (p.amplitude_n, e)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn first_divergence(&self) -> Option<f64> {
        self.points.iter().find(|p| p.diverged).map(|p| p.amplitude_n)
    }
}

/// Relative sweep errors of every model at every amplitude. References are
/// computed once per amplitude and shared by all models.
pub fn validate_sweep(
    models: &[(String, PnlssModel)],
    params: &BoucWenParameters,
    newmark: &NewmarkConfig,
    spec: &SweepSpec,
    amplitudes: &[f64],
) -> Result<(Vec<SweepCurve>, Vec<SweepReference>)> {
    if amplitudes.iter().any(|a| !(*a > 0.0)) {
        return config("sweep amplitudes must be positive");
    }
    let rate = models.first().map_or(spec.sample_rate_hz, |(_, m)| m.linear.sample_rate_hz);
    let refs: Vec<SweepReference> = amplitudes
        .par_iter()
        .map(|&a| {
            let s = SweepSpec { amplitude_n: a, ..*spec };
            sweep_reference(params, newmark, &s, rate)
        })
        .collect::<Result<_>>()?;
    let curves = models
        .iter()
        .map(|(id, m)| {
            let points = refs
                .par_iter()
                .map(|r| {
                    let rep = validate_against_sweep(m, id, r)?;
                    Ok(SweepPoint {
                        amplitude_n: r.amplitude_n,
                        relative_error_pct: rep.relative_error_pct,
                        diverged: rep.diverged,
                        divergence_time_s: rep.divergence_time_s,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepCurve {
                model_id: id.clone(),
                points,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((curves, refs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_id::LinearModel;
    use crate::pnlss::MonomialBasis;
    use nalgebra::{DMatrix, DVector, RowDVector};

    fn linear_model() -> PnlssModel {
        let lin = LinearModel {
            a: DMatrix::from_row_slice(2, 2, &[1.6, -0.8, 1.0, 0.0]),
            b: DVector::from_vec(vec![1.0, 0.0]),
            c: RowDVector::from_vec(vec![0.01, 0.005]),
            d: 0.0,
            sample_rate_hz: 100.0,
        };
        PnlssModel::from_linear(lin, MonomialBasis::empty(2), MonomialBasis::empty(2)).unwrap()
    }

    fn record_of(model: &PnlssModel, period: &[f64], periods: usize) -> TimeRecord {
        let ss = steady_state_simulate(model, period, 100, 1e-13).unwrap();
        TimeRecord {
            input: period.repeat(periods),
            output: ss.output.repeat(periods),
            sample_rate_hz: 100.0,
            periods,
            samples_per_period: period.len(),
            noise_sigma: 0.0,
            noise_seed: None,
            transient_db: None,
        }
    }

    fn period(n: usize) -> Vec<f64> {
        (0..n).map(|t| (0.3 * t as f64).sin() + 0.5 * (0.05 * t as f64 * t as f64).cos()).collect()
    }

    #[test]
    fn own_output_validates_to_round_off() {
        let m = linear_model();
        let rec = record_of(&m, &period(256), 3);
        let r = validate_multisine(&m, "self", &rec, 100, 1e-13).unwrap();
        assert!(!r.diverged);
        assert!(r.rms_error_m.unwrap() < 1e-12 * r.output_rms_m);
    }

    #[test]
    fn db_and_metres_agree() {
        let m = linear_model();
        let mut rec = record_of(&m, &period(256), 2);
        rec.output.iter_mut().enumerate().for_each(|(i, v)| *v += 1e-4 * ((i % 7) as f64 - 3.0));
        let r = validate_multisine(&m, "m", &rec, 100, 1e-12).unwrap();
        let (e, d) = (r.rms_error_m.unwrap(), r.rms_error_db.unwrap());
        assert!((e - 10f64.powf(d / 20.0)).abs() <= 1e-12 * e);
        assert!(r.relative_error_pct.unwrap() >= 0.0);
    }

    #[test]
    fn divergent_model_is_flagged() {
        let mut m = linear_model();
        m.linear.a[(0, 0)] = 2.5;
        m.divergence_bound = 1e3;
        let rec = record_of(&linear_model(), &period(256), 2);
        let r = validate_multisine(&m, "bad", &rec, 100, 1e-10).unwrap();
        assert!(r.diverged);
        assert!(r.rms_error_db.is_none());
        let sweep = SweepReference {
            amplitude_n: 1.0,
            input: period(500),
            output: vec![0.1; 500],
            sample_rate_hz: 100.0,
        };
        let r = validate_against_sweep(&m, "bad", &sweep).unwrap();
        assert!(r.diverged && r.divergence_time_s.is_some());
    }

    #[test]
    fn identical_sweep_has_zero_error() {
        let m = linear_model();
        let input = period(1000);
        let sim = pnlss_simulate(&m, &input, &[0.0, 0.0]).unwrap();
        let sweep = SweepReference {
            amplitude_n: 1.0,
            input,
            output: sim.output,
            sample_rate_hz: 100.0,
        };
        let r = validate_against_sweep(&m, "same", &sweep).unwrap();
        assert_eq!(r.relative_error_pct, Some(0.0));
        assert!(r.error_spectrum.iter().all(|l| l.error_db <= db(0.0) + 1.0));
    }

    #[test]
    fn in_band_error_energy_matches_time_domain_projection() {
        let n = 600;
        let fs = 100.0;
        let a: Vec<f64> = (0..n).map(|t| (0.37 * t as f64).sin() + 0.2 * (1.9 * t as f64).cos()).collect();
        let b: Vec<f64> = (0..n).map(|t| 0.8 * (0.37 * t as f64).sin() + 0.01 * (t as f64).sqrt()).collect();
        let (lo, hi) = (5.0, 20.0);
        let lines = error_spectrum(&a, &b, fs, lo, hi).unwrap();
        let spectral: f64 = lines.iter().map(|l| 2.0 * 10f64.powf(l.error_db / 10.0)).sum();
        // band-filtered time-domain energy from direct sine/cosine projections
        let err: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mut energy = 0.0;
        for l in &lines {
            let (mut c, mut s) = (0.0, 0.0);
            for (t, e) in err.iter().enumerate() {
                let w = std::f64::consts::TAU * (l.bin * t) as f64 / n as f64;
                c += e * w.cos();
                s += e * w.sin();
            }
            energy += 2.0 * (c * c + s * s) / n as f64;
        }
        assert!((spectral - energy).abs() <= 1e-8 * energy, "{spectral} vs {energy}");
    }

    #[test]
    fn report_round_trips_through_json() {
        let m = linear_model();
        let rec = record_of(&m, &period(64), 2);
        let mut r = validate_multisine(&m, "rt", &rec, 100, 1e-12).unwrap();
        r.rms_error_m = Some(0.1 + 0.2);
        let s = serde_json::to_string(&r).unwrap();
        let back: ValidationReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
