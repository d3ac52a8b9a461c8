use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Physical constants of the single-degree-of-freedom Bouc-Wen oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoucWenParameters {
    pub m_l: f64,
    pub c_l: f64,
    pub k_l: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub nu: f64,
}

impl Default for BoucWenParameters {
    fn default() -> Self {
        Self {
            m_l: 2.0,
            c_l: 10.0,
            k_l: 5.0e4,
            alpha: 5.0e4,
            beta: 1.0e3,
            gamma: 0.8,
            delta: -1.1,
            nu: 1.0,
        }
    }
}

impl BoucWenParameters {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.m_l, self.c_l, self.k_l, self.alpha, self.beta, self.gamma, self.delta, self.nu,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return config("Bouc-Wen parameters must be finite");
        }
        if self.m_l <= 0.0 {
            return config("m_l must be positive");
        }
        if self.nu < 1.0 {
            return config("nu must be at least 1");
        }
        Ok(())
    }

    /// Rate of the hysteretic force, `dz/dt`, for velocity `ydot` and force `z`.
    pub fn z_rate(&self, ydot: f64, z: f64) -> f64 {
        let az = z.abs();
        if self.nu == 1.0 {
            return self.alpha * ydot - self.beta * (self.gamma * ydot.abs() * z + self.delta * ydot * az);
        }
        let pow_m1 = az.powf(self.nu - 1.0);
        self.alpha * ydot
            - self.beta * (self.gamma * ydot.abs() * pow_m1 * z + self.delta * ydot * pow_m1 * az)
    }

    /// Partial derivatives of [`Self::z_rate`] with respect to `ydot` and `z`.
    pub(crate) fn z_rate_partials(&self, ydot: f64, z: f64) -> (f64, f64) {
        let az = z.abs();
        let sv = ydot.signum() * (ydot != 0.0) as i32 as f64;
        let sz = z.signum() * (z != 0.0) as i32 as f64;
        let (pz, pzm1) = if self.nu == 1.0 {
            (az, 1.0)
        } else {
            (az.powf(self.nu), az.powf(self.nu - 1.0))
        };
        let d_ydot = self.alpha - self.beta * (self.gamma * sv * pzm1 * z + self.delta * pz);
        let d_z = -self.beta * self.nu * pzm1 * (self.gamma * ydot.abs() + self.delta * ydot * sz);
        (d_ydot, d_z)
    }

    /// Continuous-time state matrix of the linearized oscillator with states `(y, ydot, z)`.
    pub fn linearized_state_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            0.0, 1.0, 0.0,
            -self.k_l / self.m_l, -self.c_l / self.m_l, -1.0 / self.m_l,
            0.0, self.alpha, 0.0,
        )
    }
}

/// Static restoring force `r = k y + c ydot` and hysteretic rate `dz/dt`.
pub fn restoring_force(state: &super::SimState, params: &BoucWenParameters) -> (f64, f64) {
    let r = params.k_l * state.y + params.c_l * state.ydot;
    (r, params.z_rate(state.ydot, state.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LinearizedModal {
    Oscillatory {
        natural_frequency_hz: f64,
        damping_ratio: f64,
        /// The remaining real eigenvalue (rad/s).
        real_pole: f64,
    },
    Overdamped {
        poles: [f64; 3],
    },
}

/// Modal parameters from the eigenvalues of the linearized 3x3 state matrix.
pub fn linearized_modal(params: &BoucWenParameters) -> Result<LinearizedModal> {
    if params.m_l <= 0.0 || params.k_l <= 0.0 {
        return config("linearization needs m_l > 0 and k_l > 0");
    }
    let mut poles = eigenvalues3(&params.linearized_state_matrix()).to_vec();
    poles.sort_by(|a, b| b.im.abs().total_cmp(&a.im.abs()));
    let scale = poles.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
    if poles[0].im.abs() <= 1e-12 * scale {
        let mut re = [poles[0].re, poles[1].re, poles[2].re];
        re.sort_by(f64::total_cmp);
        return Ok(LinearizedModal::Overdamped { poles: re });
    }
    let pair = poles[0];
    let wn = pair.norm();
    Ok(LinearizedModal::Oscillatory {
        natural_frequency_hz: wn / (2.0 * std::f64::consts::PI),
        damping_ratio: -pair.re / wn,
        real_pole: poles[2].re,
    })
}

/// Eigenvalues of a real 3x3 matrix as roots of its characteristic cubic.
pub(crate) fn eigenvalues3(m: &Matrix3<f64>) -> [Complex64; 3] {
    let tr = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
        + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
    cubic_roots(-tr, minors, -m.determinant())
}

/// Roots of `s^3 + a2 s^2 + a1 s + a0`.
pub(crate) fn cubic_roots(a2: f64, a1: f64, a0: f64) -> [Complex64; 3] {
    let f = |s: f64| ((s + a2) * s + a1) * s + a0;
    let df = |s: f64| (3.0 * s + 2.0 * a2) * s + a1;
    // a real root exists inside the Cauchy bound
    let bound = 1.0 + a2.abs().max(a1.abs()).max(a0.abs());
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = df(r);
        if d != 0.0 {
            let next = r - f(r) / d;
            if next.is_finite() && f(next).abs() < f(r).abs() {
                r = next;
            }
        }
    }
    // deflate to s^2 + p s + q
    let p = a2 + r;
    let q = a1 + r * p;
    let disc = p * p - 4.0 * q;
    let (x1, x2) = if disc >= 0.0 {
        let sq = disc.sqrt();
        let t = -0.5 * (p + p.signum() * sq);
        if t == 0.0 {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (Complex64::new(t, 0.0), Complex64::new(q / t, 0.0))
        }
    } else {
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(-0.5 * p, im), Complex64::new(-0.5 * p, -im))
    };
    [Complex64::new(r, 0.0), x1, x2]
}
