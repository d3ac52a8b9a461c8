//! Discrete Fourier transform with the symmetric `1/sqrt(N)` scaling.
//!
//! Forward: `X[k] = N^{-1/2} sum_t x[t] exp(-j 2 pi k t / N)`.
//! Inverse: `x[t] = N^{-1/2} sum_k X[k] exp(+j 2 pi k t / N)`.
//!
//! Under this convention `sum_t |x[t]|^2 = sum_k |X[k]|^2`, so the time-domain
//! mean square equals the total spectral power divided by `N`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `1/sqrt(N)` on both the forward and the inverse transform.
    SymmetricSqrtN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub values: Vec<Complex64>,
    pub f0_hz: f64,
    pub scaling: Scaling,
}

impl SpectrumRecord {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sum of `|X[k]|^2` over all bins.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn frequency_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.f0_hz
    }
}

/// Planned forward/inverse transform pair of a fixed length.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            scale: 1.0 / (n as f64).sqrt(),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward_real(&self, signal: &[f64]) -> Vec<Complex64> {
        assert_eq!(signal.len(), self.n, "signal length does not match the plan");
        let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
        buf
    }

    pub fn forward_complex(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match the plan");
        self.forward.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    pub fn inverse_complex(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match the plan");
        self.inverse.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    /// Inverse transform keeping the real part only.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse_complex(&mut buf);
        buf.into_iter().map(|v| v.re).collect()
    }
}

pub fn dft(signal: &[f64], sample_rate_hz: f64) -> SpectrumRecord {
    let n = signal.len();
    let values = if n == 0 {
        Vec::new()
    } else {
        Dft::new(n).forward_real(signal)
    };
    SpectrumRecord {
        values,
        f0_hz: if n == 0 { 0.0 } else { sample_rate_hz / n as f64 },
        scaling: Scaling::SymmetricSqrtN,
    }
}

/// Real part of the inverse transform.
pub fn idft(spectrum: &SpectrumRecord) -> Vec<f64> {
    if spectrum.values.is_empty() {
        return Vec::new();
    }
    Dft::new(spectrum.values.len()).inverse_real(&spectrum.values)
}

/// Band-limited periodic interpolation: the period is resampled to
/// `factor * len` samples by zero-padding its spectrum.
pub fn upsample_periodic(period: &[f64], factor: usize) -> Vec<f64> {
    let n = period.len();
    if factor <= 1 || n == 0 {
        return period.to_vec();
    }
    let m = n * factor;
    let spec = Dft::new(n).forward_real(period);
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    for k in 0..n {
        if n % 2 == 0 && k == half {
            // split the Nyquist bin symmetrically
            padded[half] += spec[k] * 0.5;
            padded[m - half] += spec[k] * 0.5;
        } else if k <= half {
            padded[k] = spec[k];
        } else {
            padded[m - (n - k)] = spec[k];
        }
    }
    // rescale for the change of length under the 1/sqrt(N) convention
    let gain = (m as f64 / n as f64).sqrt();
    let out = Dft::new(m).inverse_real(&padded);
    out.into_iter().map(|v| v * gain).collect()
}
