//! Best linear approximation, frequency-domain subspace fitting and
//! weighted least-squares refinement of discrete-time linear state-space models.

use nalgebra::{DMatrix, DVector, RowDVector, Schur};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boucwen::TimeRecord;
use crate::distortion::period_stats;
use crate::error::{config, Error, Result};
use crate::lm::{minimize, LeastSquaresProblem, LmConfig, LmIteration};

/// Nonparametric FRF on the excited lines of a periodic experiment design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrfEstimate {
    pub sample_rate_hz: f64,
    pub samples_per_period: usize,
    pub excited_lines: Vec<usize>,
    pub g_bla: Vec<Complex64>,
    /// Variance of `g_bla` over experiments: noise plus stochastic nonlinear distortions.
    pub total_variance: Vec<f64>,
    /// Variance of `g_bla` due to period-to-period noise alone.
    pub noise_variance: Vec<f64>,
    pub experiments: usize,
    pub periods: usize,
}

impl FrfEstimate {
    pub fn f0_hz(&self) -> f64 {
        self.sample_rate_hz / self.samples_per_period as f64
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        let f0 = self.f0_hz();
        self.excited_lines.iter().map(|&k| k as f64 * f0).collect()
    }

    /// `z_k = exp(j 2 pi k / N)` for every excited line.
    pub fn z(&self) -> Vec<Complex64> {
        let n = self.samples_per_period as f64;
        self.excited_lines
            .iter()
            .map(|&k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.excited_lines.len();
        if f == 0 {
            return config("FRF has no lines");
        }
        if self.g_bla.len() != f || self.total_variance.len() != f || self.noise_variance.len() != f {
            return config("FRF arrays are not aligned with the excited lines");
        }
        if self.samples_per_period < 2 || !(self.sample_rate_hz > 0.0) {
            return config("FRF grid is invalid");
        }
        if self.excited_lines.iter().any(|&k| 2 * k > self.samples_per_period) {
            return config("FRF line beyond Nyquist");
        }
        if self.total_variance.iter().chain(&self.noise_variance).any(|v| !(*v >= 0.0)) {
            return config("FRF variances must be non-negative");
        }
        Ok(())
    }

    /// Inverse-variance weights; zero or non-finite weights are capped at the
    /// 99th percentile of the finite ones.
    pub fn weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = self.total_variance.iter().map(|v| 1.0 / v).collect();
        let mut finite: Vec<f64> = raw.iter().copied().filter(|w| w.is_finite() && *w > 0.0).collect();
        let cap = if finite.is_empty() {
            1.0
        } else {
            finite.sort_by(f64::total_cmp);
            let idx = ((finite.len() - 1) as f64 * 0.99).round() as usize;
            finite[idx]
        };
        raw.iter().map(|&w| if w.is_finite() && w > 0.0 { w.min(cap) } else { cap }).collect()
    }
}

/// Averages period spectra per experiment, forms one FRF per experiment and
/// averages those across experiments.
pub fn estimate_bla(records: &[TimeRecord], excited_lines: &[usize]) -> Result<FrfEstimate> {
    let first = records.first().ok_or_else(|| Error::Config("no records for BLA".into()))?;
    if excited_lines.is_empty() {
        return config("no excited lines for BLA");
    }
    let n = first.samples_per_period;
    for r in records {
        r.validate()?;
        if r.samples_per_period != n || r.periods != first.periods || r.sample_rate_hz != first.sample_rate_hz {
            return config("BLA records do not share a grid");
        }
    }
    if first.periods < 2 {
        return config("BLA needs at least two periods per experiment");
    }
    let bins = n / 2 + 1;
    if let Some(&k) = excited_lines.iter().find(|&&k| k == 0 || k >= bins) {
        return config(format!("line {k} outside the DFT half-spectrum"));
    }
    let per_exp: Vec<(Vec<Complex64>, Vec<f64>)> = records
        .par_iter()
        .map(|r| {
            let st = period_stats(r, bins);
            let umax = st.mean_u.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            let mut g = Vec::with_capacity(excited_lines.len());
            let mut nv = Vec::with_capacity(excited_lines.len());
            for &k in excited_lines {
                let u = st.mean_u[k];
                if !(u.norm() > 1e-12 * umax) {
                    return Err(Error::ZeroInputLine { line: k });
                }
                g.push(st.mean_y[k] / u);
                nv.push(st.y_std_of_mean[k].powi(2) / u.norm_sqr());
            }
            Ok((g, nv))
        })
        .collect::<Result<_>>()?;
    let m = records.len() as f64;
    let f = excited_lines.len();
    let mut g_bla = vec![Complex64::new(0.0, 0.0); f];
    let mut noise_variance = vec![0.0; f];
    for (g, nv) in &per_exp {
        for k in 0..f {
            g_bla[k] += g[k] / m;
            noise_variance[k] += nv[k] / (m * m);
        }
    }
    let total_variance = (0..f)
        .map(|k| {
            if records.len() < 2 {
                0.0
            } else {
                per_exp.iter().map(|(g, _)| (g[k] - g_bla[k]).norm_sqr()).sum::<f64>() / (m * (m - 1.0))
            }
        })
        .collect();
    Ok(FrfEstimate {
        sample_rate_hz: first.sample_rate_hz,
        samples_per_period: n,
        excited_lines: excited_lines.to_vec(),
        g_bla,
        total_variance,
        noise_variance,
        experiments: records.len(),
        periods: first.periods,
    })
}

/// Single-input single-output discrete-time model
/// `x(t+1) = A x(t) + B u(t)`, `y(t) = C x(t) + D u(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LinearModelRepr", try_from = "LinearModelRepr")]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
    pub sample_rate_hz: f64,
}

#[derive(Serialize, Deserialize)]
struct LinearModelRepr {
    order: usize,
    sample_rate_hz: f64,
    /// Row-major.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
}

impl From<LinearModel> for LinearModelRepr {
    fn from(m: LinearModel) -> Self {
        Self {
            order: m.order(),
            sample_rate_hz: m.sample_rate_hz,
            a: m.a.row_iter().map(|r| r.iter().copied().collect()).collect(),
            b: m.b.iter().copied().collect(),
            c: m.c.iter().copied().collect(),
            d: m.d,
        }
    }
}

impl TryFrom<LinearModelRepr> for LinearModel {
    type Error = Error;

    fn try_from(r: LinearModelRepr) -> Result<Self> {
        let n = r.order;
        if r.a.len() != n || r.a.iter().any(|row| row.len() != n) || r.b.len() != n || r.c.len() != n {
            return config(format!("linear model matrices do not match order {n}"));
        }
        let m = LinearModel {
            a: DMatrix::from_fn(n, n, |i, j| r.a[i][j]),
            b: DVector::from_vec(r.b),
            c: RowDVector::from_vec(r.c),
            d: r.d,
            sample_rate_hz: r.sample_rate_hz,
        };
        m.validate()?;
        Ok(m)
    }
}

impl LinearModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order();
        if self.a.ncols() != n || self.b.len() != n || self.c.len() != n {
            return config("inconsistent state-space dimensions");
        }
        if !(self.sample_rate_hz > 0.0) {
            return config("model sample rate must be positive");
        }
        let finite = self.a.iter().chain(self.b.iter()).chain(self.c.iter()).all(|v| v.is_finite());
        if !finite || !self.d.is_finite() {
            return config("model parameters must be finite");
        }
        Ok(())
    }

    /// `(C (zI - A)^-1, (zI - A)^-1 B)`, or `None` when `z` is a pole.
    fn resolvents(&self, z: Complex64) -> Option<(Vec<Complex64>, Vec<Complex64>)> {
        let n = self.order();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let v = Complex64::new(-self.a[(i, j)], 0.0);
            if i == j {
                v + z
            } else {
                v
            }
        });
        let lu = m.clone().lu();
        let b = DVector::from_iterator(n, self.b.iter().map(|&v| Complex64::new(v, 0.0)));
        let r = lu.solve(&b)?;
        let ct = DVector::from_iterator(n, self.c.iter().map(|&v| Complex64::new(v, 0.0)));
        let l = m.transpose().lu().solve(&ct)?;
        Some((l.iter().copied().collect(), r.iter().copied().collect()))
    }

    pub fn transfer(&self, z: Complex64) -> Complex64 {
        match self.resolvents(z) {
            Some((_, r)) => {
                self.c.iter().zip(&r).map(|(c, r)| r * *c).sum::<Complex64>() + self.d
            }
            None => Complex64::new(f64::INFINITY, 0.0),
        }
    }

    pub fn frequency_response(&self, z: &[Complex64]) -> Vec<Complex64> {
        z.iter().map(|&z| self.transfer(z)).collect()
    }

    /// Eigenvalues of `A`; `None` if the Schur iteration does not converge.
    pub fn poles(&self) -> Option<Vec<Complex64>> {
        let schur = Schur::try_new(self.a.clone(), f64::EPSILON, 10_000)?;
        Some(schur.complex_eigenvalues().iter().copied().collect())
    }

    pub fn is_stable(&self) -> bool {
        self.poles().is_some_and(|p| p.iter().all(|p| p.norm() < 1.0))
    }

    /// Equivalent continuous-time frequency (Hz) of a discrete pole.
    pub fn pole_frequency_hz(&self, p: Complex64) -> f64 {
        p.ln().norm() * self.sample_rate_hz / (2.0 * std::f64::consts::PI)
    }

    /// Similarity transform `x = T x'`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Result<Self> {
        let ti = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("singular similarity transform".into()))?;
        Ok(Self {
            a: &ti * &self.a * t,
            b: &ti * &self.b,
            c: &self.c * t,
            d: self.d,
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    pub fn num_parameters(&self) -> usize {
        let n = self.order();
        n * n + 2 * n + 1
    }

    /// `[A (row-major), B, C, D]`.
    pub fn to_params(&self) -> DVector<f64> {
        let n = self.order();
        let mut p = DVector::zeros(self.num_parameters());
        for i in 0..n {
            for j in 0..n {
                p[i * n + j] = self.a[(i, j)];
            }
            p[n * n + i] = self.b[i];
            p[n * n + n + i] = self.c[i];
        }
        p[n * n + 2 * n] = self.d;
        p
    }

    pub fn from_params(n: usize, p: &DVector<f64>, sample_rate_hz: f64) -> Self {
        Self {
            a: DMatrix::from_fn(n, n, |i, j| p[i * n + j]),
            b: DVector::from_fn(n, |i, _| p[n * n + i]),
            c: RowDVector::from_fn(n, |_, j| p[n * n + n + j]),
            d: p[n * n + 2 * n],
            sample_rate_hz,
        }
    }
}

/// Frequency-domain subspace identification on the unit circle.
///
/// Data matrices with `i` block rows are built from `z^r G(z_k)` and `z^r`,
/// realified, weighted per line by the square root of the FRF weights, and
/// the input part is projected out through an LQ factorization. The column
/// space of the remaining block gives the extended observability matrix.
pub fn subspace_fit(frf: &FrfEstimate, order: usize, i: usize) -> Result<LinearModel> {
    frf.validate()?;
    if order == 0 {
        return config("model order must be at least 1");
    }
    if i <= order {
        return Err(Error::RankDeficient(format!(
            "dimensioning parameter i = {i} must exceed the order n = {order}"
        )));
    }
    let f = frf.excited_lines.len();
    if 2 * f < 2 * i {
        return Err(Error::RankDeficient(format!(
            "{f} lines cannot fill {i} block rows of the data matrices"
        )));
    }
    let z = frf.z();
    let w: Vec<f64> = frf.weights().iter().map(|w| w.sqrt()).collect();
    // rows: [U (i); Y (i)], columns: real parts then imaginary parts
    let mut data = DMatrix::<f64>::zeros(2 * i, 2 * f);
    for k in 0..f {
        let mut zr = Complex64::new(w[k], 0.0);
        for r in 0..i {
            let y = zr * frf.g_bla[k];
            data[(r, k)] = zr.re;
            data[(r, f + k)] = zr.im;
            data[(i + r, k)] = y.re;
            data[(i + r, f + k)] = y.im;
            zr *= z[k];
        }
    }
    // Z = L Q  <=>  Z^T = Q^T L^T
    let r = data.transpose().qr().r();
    let l = r.transpose();
    let l22 = l.view((i, i), (i, i)).into_owned();
    let svd = l22.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::RankDeficient("SVD failed".into()))?;
    let mut idx: Vec<usize> = (0..i).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s_n = svd.singular_values[idx[order - 1]];
    if !(s_n > svd.singular_values[idx[0]] * 1e-14) {
        return Err(Error::RankDeficient(format!(
            "observability block has rank below the order n = {order}"
        )));
    }
    let obs = DMatrix::from_fn(i, order, |row, col| u[(row, idx[col])]);
    let upper = obs.rows(0, i - 1).into_owned();
    let lower = obs.rows(1, i - 1).into_owned();
    let a = upper
        .svd(true, true)
        .solve(&lower, 1e-14)
        .map_err(|e| Error::RankDeficient(format!("shift-invariance solve: {e}")))?;
    let c = obs.row(0).into_owned();
    let mut model = LinearModel {
        a,
        b: DVector::zeros(order),
        c,
        d: 0.0,
        sample_rate_hz: frf.sample_rate_hz,
    };
    fit_b_d(&mut model, frf, &z, &w)?;
    Ok(model)
}

/// Weighted linear least squares for `B` and `D` with `A` and `C` fixed.
fn fit_b_d(model: &mut LinearModel, frf: &FrfEstimate, z: &[Complex64], w: &[f64]) -> Result<()> {
    let n = model.order();
    let f = z.len();
    let mut lhs = DMatrix::<f64>::zeros(2 * f, n + 1);
    let mut rhs = DVector::<f64>::zeros(2 * f);
    for k in 0..f {
        let (l, _) = model
            .resolvents(z[k])
            .ok_or_else(|| Error::RankDeficient(format!("pole on line {}", frf.excited_lines[k])))?;
        for j in 0..n {
            lhs[(2 * k, j)] = w[k] * l[j].re;
            lhs[(2 * k + 1, j)] = w[k] * l[j].im;
        }
        lhs[(2 * k, n)] = w[k];
        rhs[2 * k] = w[k] * frf.g_bla[k].re;
        rhs[2 * k + 1] = w[k] * frf.g_bla[k].im;
    }
    let sol = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::RankDeficient(format!("B/D solve: {e}")))?;
    model.b = sol.rows(0, n).into_owned();
    model.d = sol[n];
    Ok(())
}

/// `sum_k w_k |G_L(z_k) - G_BLA(k)|^2` with inverse-variance weights.
pub fn linear_cost(model: &LinearModel, frf: &FrfEstimate) -> f64 {
    let z = frf.z();
    frf.weights()
        .iter()
        .zip(&z)
        .zip(&frf.g_bla)
        .map(|((w, &z), g)| w * (model.transfer(z) - g).norm_sqr())
        .sum()
}

#[derive(Debug, Clone)]
pub struct RefinedLinear {
    pub model: LinearModel,
    pub initial_cost: f64,
    pub cost: f64,
    pub trace: Vec<LmIteration>,
}

struct LinearProblem<'a> {
    order: usize,
    sample_rate_hz: f64,
    frf: &'a FrfEstimate,
    z: Vec<Complex64>,
    sqrt_w: Vec<f64>,
}

impl LinearProblem<'_> {
    fn model(&self, p: &DVector<f64>) -> LinearModel {
        LinearModel::from_params(self.order, p, self.sample_rate_hz)
    }
}

impl LeastSquaresProblem for LinearProblem<'_> {
    fn residuals(&mut self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.model(p);
        let f = self.z.len();
        let mut r = DVector::zeros(2 * f);
        for k in 0..f {
            let e = (m.transfer(self.z[k]) - self.frf.g_bla[k]) * self.sqrt_w[k];
            r[2 * k] = e.re;
            r[2 * k + 1] = e.im;
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&mut self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.order;
        let m = self.model(p);
        let f = self.z.len();
        let mut jac = DMatrix::zeros(2 * f, m.num_parameters());
        for k in 0..f {
            let (l, r) = m.resolvents(self.z[k])?;
            let w = self.sqrt_w[k];
            let mut put = |col: usize, v: Complex64| {
                jac[(2 * k, col)] = w * v.re;
                jac[(2 * k + 1, col)] = w * v.im;
            };
            for i in 0..n {
                for j in 0..n {
                    put(i * n + j, l[i] * r[j]);
                }
                put(n * n + i, l[i]);
                put(n * n + n + i, r[i]);
            }
            put(n * n + 2 * n, Complex64::new(1.0, 0.0));
        }
        Some(jac)
    }
}

/// Levenberg-Marquardt minimization of [`linear_cost`] over all of `(A, B, C, D)`.
pub fn refine_linear(model: &LinearModel, frf: &FrfEstimate, cfg: &LmConfig) -> Result<RefinedLinear> {
    frf.validate()?;
    model.validate()?;
    let mut problem = LinearProblem {
        order: model.order(),
        sample_rate_hz: model.sample_rate_hz,
        frf,
        z: frf.z(),
        sqrt_w: frf.weights().iter().map(|w| w.sqrt()).collect(),
    };
    let initial_cost = linear_cost(model, frf);
    let out = minimize(&mut problem, model.to_params(), cfg)?;
    Ok(RefinedLinear {
        model: problem.model(&out.params),
        initial_cost,
        cost: out.cost,
        trace: out.trace,
    })
}

/// Subspace fit followed by refinement for one `(n, i)` pair.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub order: usize,
    pub i: usize,
    pub subspace_cost: f64,
    pub refined: RefinedLinear,
}

pub fn fit_linear(frf: &FrfEstimate, order: usize, i: usize, cfg: &LmConfig) -> Result<LinearFit> {
    let sub = subspace_fit(frf, order, i)?;
    let refined = refine_linear(&sub, frf, cfg)?;
    Ok(LinearFit {
        order,
        i,
        subspace_cost: refined.initial_cost,
        refined,
    })
}

/// All valid `(n, i)` combinations of the grid, fitted in parallel. Pairs
/// with `i <= n` are skipped.
pub fn linear_grid(frf: &FrfEstimate, orders: &[usize], dims: &[usize], cfg: &LmConfig) -> Result<Vec<LinearFit>> {
    let pairs: Vec<(usize, usize)> = orders
        .iter()
        .flat_map(|&n| dims.iter().filter(move |&&i| i > n).map(move |&i| (n, i)))
        .collect();
    pairs.par_iter().map(|&(n, i)| fit_linear(frf, n, i, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{generate_multisine, ExcitationSpec, GridKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn second_order() -> LinearModel {
        // lightly damped resonance near 0.1 fs
        let r: f64 = 0.97;
        let th: f64 = 2.0 * std::f64::consts::PI * 0.1;
        LinearModel {
            a: DMatrix::from_row_slice(2, 2, &[2.0 * r * th.cos(), -r * r, 1.0, 0.0]),
            b: DVector::from_vec(vec![1.0, 0.0]),
            c: RowDVector::from_vec(vec![0.3, -0.1]),
            d: 0.05,
            sample_rate_hz: 100.0,
        }
    }

    fn exact_frf(model: &LinearModel, n: usize, lines: Vec<usize>, var: f64) -> FrfEstimate {
        let mut frf = FrfEstimate {
            sample_rate_hz: model.sample_rate_hz,
            samples_per_period: n,
            excited_lines: lines,
            g_bla: Vec::new(),
            total_variance: Vec::new(),
            noise_variance: Vec::new(),
            experiments: 2,
            periods: 2,
        };
        frf.g_bla = model.frequency_response(&frf.z());
        frf.total_variance = vec![var; frf.g_bla.len()];
        frf.noise_variance = vec![0.0; frf.g_bla.len()];
        frf
    }

    /// Direct time-domain simulation, independent of any library code.
    fn simulate(m: &LinearModel, u: &[f64], x0: &DVector<f64>) -> (Vec<f64>, DVector<f64>) {
        let mut x = x0.clone();
        let mut y = Vec::with_capacity(u.len());
        for &u in u {
            y.push((&m.c * &x)[0] + m.d * u);
            x = &m.a * &x + &m.b * u;
        }
        (y, x)
    }

    fn periodic_record(m: &LinearModel, period: &[f64], periods: usize, noise: f64, seed: u64) -> TimeRecord {
        let mut x = DVector::zeros(m.order());
        // settle to steady state
        for _ in 0..30 {
            x = simulate(m, period, &x).1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input = Vec::new();
        let mut output = Vec::new();
        for _ in 0..periods {
            let (y, xn) = simulate(m, period, &x);
            x = xn;
            input.extend_from_slice(period);
            output.extend(y.iter().map(|v| v + noise * rng.sample::<f64, _>(StandardNormal)));
        }
        TimeRecord {
            input,
            output,
            sample_rate_hz: m.sample_rate_hz,
            periods,
            samples_per_period: period.len(),
            noise_sigma: noise,
            noise_seed: Some(seed),
            transient_db: None,
        }
    }

    fn spec(n: usize) -> ExcitationSpec {
        ExcitationSpec {
            sample_rate_hz: 100.0,
            num_samples_per_period: n,
            band_low_hz: 1.0,
            band_high_hz: 30.0,
            target_rms: 1.0,
            grid_kind: GridKind::Full,
            group_size: 3,
            rng_seed: 0,
        }
    }

    #[test]
    fn noiseless_bla_equals_transfer_function() {
        let m = second_order();
        let s = spec(256);
        let recs: Vec<TimeRecord> = (0..2)
            .map(|seed| periodic_record(&m, &generate_multisine(&s, seed).unwrap().period, 3, 0.0, seed))
            .collect();
        let lines = s.band_lines();
        let frf = estimate_bla(&recs, &lines).unwrap();
        let exact = m.frequency_response(&frf.z());
        for (g, e) in frf.g_bla.iter().zip(&exact) {
            assert!((g - e).norm() <= 1e-10 * e.norm(), "{g} vs {e}");
        }
        assert!(frf.total_variance.iter().all(|v| *v < 1e-20));
    }

    #[test]
    fn zero_input_line_is_reported() {
        let m = second_order();
        let s = spec(256);
        let rec = periodic_record(&m, &generate_multisine(&s, 1).unwrap().period, 2, 0.0, 0);
        let mut lines = s.band_lines()[..2].to_vec();
        lines.push(100);
        let err = estimate_bla(&[rec], &lines).unwrap_err();
        assert!(matches!(err, Error::ZeroInputLine { line: 100 }));
    }

    #[test]
    fn bla_variance_matches_monte_carlo() {
        let m = second_order();
        let s = spec(128);
        let lines = s.band_lines();
        let periods: Vec<Vec<f64>> = (0..4).map(|seed| generate_multisine(&s, seed).unwrap().period).collect();
        let mut blas = Vec::new();
        let mut predicted = vec![0.0; lines.len()];
        let runs = 100;
        for run in 0..runs {
            let recs: Vec<TimeRecord> = periods
                .iter()
                .enumerate()
                .map(|(e, p)| periodic_record(&m, p, 2, 0.05, (run * 10 + e) as u64 + 1000))
                .collect();
            let frf = estimate_bla(&recs, &lines).unwrap();
            for (acc, v) in predicted.iter_mut().zip(&frf.total_variance) {
                *acc += v / runs as f64;
            }
            blas.push(frf.g_bla);
        }
        let mut ratio_sum = 0.0;
        for k in 0..lines.len() {
            let mean: Complex64 = blas.iter().map(|g| g[k]).sum::<Complex64>() / runs as f64;
            let sample = blas.iter().map(|g| (g[k] - mean).norm_sqr()).sum::<f64>() / (runs - 1) as f64;
            ratio_sum += predicted[k] / sample;
        }
        let ratio = ratio_sum / lines.len() as f64;
        assert!((ratio - 1.0).abs() < 0.2, "predicted / Monte-Carlo variance = {ratio}");
    }

    #[test]
    fn subspace_recovers_noiseless_second_order_system() {
        let m = second_order();
        let frf = exact_frf(&m, 512, (3..150).collect(), 1.0);
        for i in [3, 5, 8] {
            let fit = subspace_fit(&frf, 2, i).unwrap();
            let g = fit.frequency_response(&frf.z());
            for (a, b) in g.iter().zip(&frf.g_bla) {
                assert!((a - b).norm() <= 1e-8 * b.norm(), "i = {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn subspace_rejects_small_dimensioning() {
        let m = second_order();
        let frf = exact_frf(&m, 512, (3..150).collect(), 1.0);
        assert!(matches!(subspace_fit(&frf, 2, 2), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn cost_identities() {
        let m = second_order();
        let mut frf = exact_frf(&m, 512, (3..150).collect(), 0.5);
        assert_eq!(linear_cost(&m, &frf), 0.0);
        let mut other = m.clone();
        other.d += 0.01;
        let v1 = linear_cost(&other, &frf);
        frf.total_variance.iter_mut().for_each(|v| *v *= 2.0);
        let v2 = linear_cost(&other, &frf);
        assert!((v1 - 2.0 * v2).abs() <= 1e-14 * v1);
    }

    #[test]
    fn zero_variance_weight_is_capped() {
        let m = second_order();
        let mut frf = exact_frf(&m, 512, (3..203).collect(), 1.0);
        for (k, v) in frf.total_variance.iter_mut().enumerate() {
            *v = 1.0 + k as f64;
        }
        frf.total_variance[0] = 0.0;
        let w = frf.weights();
        assert!(w.iter().all(|w| w.is_finite()));
        assert!(w.iter().all(|x| *x <= w[0]));
        assert!(w[0] < 0.5);
    }

    #[test]
    fn optimal_model_is_left_unchanged() {
        let m = second_order();
        let frf = exact_frf(&m, 512, (3..150).collect(), 1.0);
        let out = refine_linear(&m, &frf, &LmConfig::default()).unwrap();
        assert_eq!(out.cost, 0.0);
        assert_eq!(out.model, m);
    }

    #[test]
    fn refinement_never_increases_the_cost() {
        let m = second_order();
        let mut frf = exact_frf(&m, 512, (3..150).collect(), 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in frf.g_bla.iter_mut() {
            *g += Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * 0.01;
        }
        let sub = subspace_fit(&frf, 2, 4).unwrap();
        let out = refine_linear(&sub, &frf, &LmConfig::default()).unwrap();
        assert!(out.cost <= out.initial_cost);
        let mut last = out.initial_cost;
        for it in out.trace.iter().filter(|t| t.accepted) {
            assert!(it.cost <= last);
            last = it.cost;
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut m = second_order();
        for v in m.a.iter_mut().chain(m.b.iter_mut()).chain(m.c.iter_mut()) {
            *v += 0.02 * rng.sample::<f64, _>(StandardNormal);
        }
        let target = second_order();
        let mut frf = exact_frf(&target, 256, (2..90).collect(), 1.0);
        for (k, v) in frf.total_variance.iter_mut().enumerate() {
            *v = 0.5 + (k % 7) as f64 * 0.1;
        }
        let mut prob = LinearProblem {
            order: 2,
            sample_rate_hz: m.sample_rate_hz,
            frf: &frf,
            z: frf.z(),
            sqrt_w: frf.weights().iter().map(|w| w.sqrt()).collect(),
        };
        let p = m.to_params();
        let r = prob.residuals(&p).unwrap();
        let analytic = 2.0 * prob.jacobian(&p).unwrap().tr_mul(&r);
        for j in 0..p.len() {
            let h = 1e-6 * p[j].abs().max(1e-2);
            let mut pp = p.clone();
            pp[j] += h;
            let vp = LinearModel::from_params(2, &pp, m.sample_rate_hz);
            pp[j] -= 2.0 * h;
            let vm = LinearModel::from_params(2, &pp, m.sample_rate_hz);
            let fd = (linear_cost(&vp, &frf) - linear_cost(&vm, &frf)) / (2.0 * h);
            assert!(
                (fd - analytic[j]).abs() <= 1e-5 * analytic[j].abs().max(1e-8),
                "param {j}: fd {fd} vs analytic {}",
                analytic[j]
            );
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = second_order();
        let s = serde_json::to_string(&m).unwrap();
        let back: LinearModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = s.replace("\"order\":2", "\"order\":3");
        assert!(serde_json::from_str::<LinearModel>(&bad).is_err());
    }
}
