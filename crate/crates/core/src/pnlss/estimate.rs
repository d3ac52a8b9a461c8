//! Frequency-domain output-error estimation of PNLSS models.
//!
//! Residuals are the real and imaginary parts of the modelled minus measured
//! output spectrum at the excited lines of each experiment, with the model in
//! periodic steady state. The Jacobian comes from a sensitivity recursion over
//! one period, made periodic through the monodromy matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::MonomialBasis;
use super::model::{steady_state_simulate, PnlssModel, SteadyState, Stepper};
use crate::boucwen::TimeRecord;
use crate::distortion::db;
use crate::error::{config, Error, Result};
use crate::linear_id::LinearModel;
use crate::lm::{minimize, LeastSquaresProblem, LmConfig};
use crate::signals::{rms, Dft};

/// One steady-state period of an experiment: the input period, the
/// period-averaged output and the lines entering the cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicData {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub lines: Vec<usize>,
    pub sample_rate_hz: f64,
}

impl PeriodicData {
    pub fn from_record(record: &TimeRecord, lines: &[usize]) -> Result<Self> {
        record.validate()?;
        let n = record.samples_per_period;
        if lines.iter().any(|&k| k == 0 || 2 * k >= n) {
            return config("cost lines must lie strictly between DC and Nyquist");
        }
        let (input, output) = record.mean_period();
        Ok(Self {
            input,
            output,
            lines: lines.to_vec(),
            sample_rate_hz: record.sample_rate_hz,
        })
    }

    fn spectrum(&self) -> Vec<Complex64> {
        let y = Dft::new(self.output.len()).forward_real(&self.output);
        self.lines.iter().map(|&k| y[k]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnlssConfig {
    pub lm: LmConfig,
    /// Relative periodicity mismatch accepted as steady state.
    pub steady_tolerance: f64,
    pub max_periods: usize,
    /// Divergence bound as a multiple of the larger of the measured output
    /// RMS and the (unit) normalized state RMS.
    pub divergence_factor: f64,
    /// Whiten the states of the initial linear model before estimation.
    pub normalize_states: bool,
}

impl Default for PnlssConfig {
    fn default() -> Self {
        Self {
            lm: LmConfig::default(),
            steady_tolerance: 1e-10,
            max_periods: 100,
            divergence_factor: 1e6,
            normalize_states: true,
        }
    }
}

/// One optimizer trial; errors are those of the current (accepted) model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnlssIteration {
    pub iteration: usize,
    pub cost: f64,
    pub candidate_cost: f64,
    pub damping: f64,
    pub accepted: bool,
    pub est_error_db: f64,
    pub val_error_db: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PnlssFit {
    /// Lowest validation error along the path when validation data is
    /// given, otherwise the final iterate.
    pub model: PnlssModel,
    pub final_model: PnlssModel,
    pub initial_cost: f64,
    /// Cost of the final iterate.
    pub cost: f64,
    pub best_iteration: usize,
    pub trace: Vec<PnlssIteration>,
    pub diagnostic: Option<String>,
}

/// Two-sided cost: sum over the excited lines and their negative-frequency
/// mirrors of `|Y_model - Y|^2`. Infinite when the model does not reach a
/// bounded periodic steady state.
pub fn nonlinear_cost(model: &PnlssModel, data: &[PeriodicData], cfg: &PnlssConfig) -> f64 {
    let mut total = 0.0;
    for d in data {
        match steady_state_simulate(model, &d.input, cfg.max_periods, cfg.steady_tolerance) {
            Ok(ss) => {
                let y = Dft::new(ss.output.len()).forward_real(&ss.output);
                let meas = d.spectrum();
                total += 2.0 * d.lines.iter().zip(&meas).map(|(&k, m)| (y[k] - m).norm_sqr()).sum::<f64>();
            }
            Err(_) => return f64::INFINITY,
        }
    }
    total
}

/// Stacked real and imaginary parts of `Y_model - Y` on the cost lines of
/// every experiment (the one-sided residual vector of the estimator).
pub fn cost_residuals(model: &PnlssModel, data: &[PeriodicData], cfg: &PnlssConfig) -> Result<DVector<f64>> {
    let mut prob = Problem::new(model.clone(), data, None, *cfg);
    prob.steady_states(model)?;
    prob.residuals(&model.to_params()).ok_or(Error::NonFiniteCost { iterations: 0 })
}

/// Jacobian of [`cost_residuals`] with respect to `model.to_params()`.
pub fn cost_jacobian(model: &PnlssModel, data: &[PeriodicData], cfg: &PnlssConfig) -> Result<DMatrix<f64>> {
    let mut prob = Problem::new(model.clone(), data, None, *cfg);
    prob.steady_states(model)?;
    prob.jacobian(&model.to_params()).ok_or(Error::NonFiniteCost { iterations: 0 })
}

/// RMS of the time-domain steady-state error over every experiment.
fn error_rms(states: &[SteadyState], data: &[PeriodicData]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (ss, d) in states.iter().zip(data) {
        sum += ss.output.iter().zip(&d.output).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += d.output.len();
    }
    (sum / count as f64).sqrt()
}

pub(crate) struct Problem<'a> {
    template: PnlssModel,
    data: &'a [PeriodicData],
    measured: Vec<Vec<Complex64>>,
    validation: Option<&'a [PeriodicData]>,
    cfg: PnlssConfig,
    cache: Option<(DVector<f64>, Vec<SteadyState>)>,
    accepted_errors: Vec<(usize, f64, Option<f64>)>,
    best: Option<(f64, usize, DVector<f64>)>,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(
        template: PnlssModel,
        data: &'a [PeriodicData],
        validation: Option<&'a [PeriodicData]>,
        cfg: PnlssConfig,
    ) -> Self {
        Self {
            measured: data.iter().map(PeriodicData::spectrum).collect(),
            template,
            data,
            validation,
            cfg,
            cache: None,
            accepted_errors: Vec::new(),
            best: None,
        }
    }

    fn steady_states(&self, model: &PnlssModel) -> Result<Vec<SteadyState>> {
        self.data
            .par_iter()
            .map(|d| steady_state_simulate(model, &d.input, self.cfg.max_periods, self.cfg.steady_tolerance))
            .collect()
    }

    fn states_for(&mut self, p: &DVector<f64>) -> Option<Vec<SteadyState>> {
        if let Some((cp, st)) = &self.cache {
            if cp == p {
                return Some(st.clone());
            }
        }
        let st = self.steady_states(&self.template.with_params(p)).ok()?;
        self.cache = Some((p.clone(), st.clone()));
        Some(st)
    }

    fn validation_error(&self, model: &PnlssModel) -> Option<f64> {
        let val = self.validation?;
        let st: Result<Vec<SteadyState>> = val
            .par_iter()
            .map(|d| steady_state_simulate(model, &d.input, self.cfg.max_periods, self.cfg.steady_tolerance))
            .collect();
        Some(st.map_or(f64::INFINITY, |st| error_rms(&st, val)))
    }

    fn record(&mut self, iteration: usize, p: &DVector<f64>) {
        let Some(states) = self.states_for(p) else {
            return;
        };
        let est = error_rms(&states, self.data);
        let val = self.validation_error(&self.template.with_params(p));
        self.accepted_errors.push((iteration, db(est), val.map(db)));
        let score = val.unwrap_or(est);
        if self.best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            self.best = Some((score, iteration, p.clone()));
        }
    }

    /// Residuals of one experiment from its steady state.
    fn experiment_residuals(&self, idx: usize, ss: &SteadyState, out: &mut [f64]) {
        let y = Dft::new(ss.output.len()).forward_real(&ss.output);
        for (j, (&k, m)) in self.data[idx].lines.iter().zip(&self.measured[idx]).enumerate() {
            let e = y[k] - m;
            out[2 * j] = e.re;
            out[2 * j + 1] = e.im;
        }
    }

    fn rows(&self) -> usize {
        self.data.iter().map(|d| 2 * d.lines.len()).sum()
    }
}

/// Output sensitivities `d y(t) / d theta` over one steady-state period,
/// one row per parameter in `[A, B, C, D, E, F]` order.
pub(crate) fn output_sensitivities(model: &PnlssModel, input: &[f64], ss: &SteadyState) -> Option<Vec<Vec<f64>>> {
    let n = model.order();
    let ne = model.state_basis.len();
    let nf = model.output_basis.len();
    let len = input.len();
    // state-equation parameters: A (n^2), B (n), E (n ne)
    let ps = n * n + n + n * ne;
    let mut st = Stepper::new(model);
    let mut next = vec![0.0; n];
    let mut jac = vec![0.0; n * n];
    let mut c_t = vec![0.0; n];
    // S is n x ps, column-major
    let propagate = |st: &mut Stepper, s: &mut Vec<f64>, tmp: &mut Vec<f64>, t: usize, jac: &mut [f64], c_t: &mut [f64], next: &mut [f64]| {
        let x = &ss.states[t * n..(t + 1) * n];
        let u = input[t];
        st.step_with_jacobian(x, u, next, jac, c_t);
        for col in 0..ps {
            let sc = &s[col * n..(col + 1) * n];
            for i in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += jac[i * n + k] * sc[k];
                }
                tmp[col * n + i] = v;
            }
        }
        for i in 0..n {
            for j in 0..n {
                tmp[(i * n + j) * n + i] += x[j];
            }
            tmp[(n * n + i) * n + i] += u;
            for j in 0..ne {
                tmp[(n * n + n + i * ne + j) * n + i] += st.e_val[j];
            }
        }
        std::mem::swap(s, tmp);
    };
    let mut s = vec![0.0; n * ps];
    let mut tmp = vec![0.0; n * ps];
    for t in 0..len {
        propagate(&mut st, &mut s, &mut tmp, t, &mut jac, &mut c_t, &mut next);
    }
    // periodic initial sensitivity: S(0) = (I - Phi)^-1 S_zero(N)
    let lhs = DMatrix::<f64>::identity(n, n) - &ss.monodromy;
    let rhs = DMatrix::from_column_slice(n, ps, &s);
    let s0 = lhs.lu().solve(&rhs)?;
    s.copy_from_slice(s0.as_slice());
    let total = model.num_parameters();
    let nl = n * n + 2 * n + 1;
    let mut out = vec![vec![0.0; len]; total];
    let global = |col: usize| -> usize {
        if col < n * n + n {
            col
        } else {
            nl + (col - n * n - n)
        }
    };
    for t in 0..len {
        let x = &ss.states[t * n..(t + 1) * n];
        let u = input[t];
        st.step_with_jacobian(x, u, &mut next, &mut jac, &mut c_t);
        for col in 0..ps {
            let sc = &s[col * n..(col + 1) * n];
            out[global(col)][t] = c_t.iter().zip(sc).map(|(c, v)| c * v).sum();
        }
        for j in 0..n {
            out[n * n + n + j][t] = x[j];
        }
        out[n * n + 2 * n][t] = u;
        for j in 0..nf {
            out[nl + n * ne + j][t] = st.f_val[j];
        }
        propagate(&mut st, &mut s, &mut tmp, t, &mut jac, &mut c_t, &mut next);
    }
    Some(out)
}

impl LeastSquaresProblem for Problem<'_> {
    fn residuals(&mut self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let states = self.states_for(p)?;
        let mut r = DVector::zeros(self.rows());
        let mut off = 0;
        for (i, ss) in states.iter().enumerate() {
            let len = 2 * self.data[i].lines.len();
            self.experiment_residuals(i, ss, &mut r.as_mut_slice()[off..off + len]);
            off += len;
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&mut self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let states = self.states_for(p)?;
        let model = self.template.with_params(p);
        let np = model.num_parameters();
        let blocks: Vec<Option<Vec<f64>>> = self
            .data
            .par_iter()
            .zip(states.par_iter())
            .map(|(d, ss)| {
                let sens = output_sensitivities(&model, &d.input, ss)?;
                let dft = Dft::new(d.input.len());
                let rows = 2 * d.lines.len();
                // column-major block
                let mut block = vec![0.0; rows * np];
                for (col, series) in sens.iter().enumerate() {
                    let spec = dft.forward_real(series);
                    for (j, &k) in d.lines.iter().enumerate() {
                        block[col * rows + 2 * j] = spec[k].re;
                        block[col * rows + 2 * j + 1] = spec[k].im;
                    }
                }
                Some(block)
            })
            .collect();
        let mut jac = DMatrix::zeros(self.rows(), np);
        let mut off = 0;
        for (d, block) in self.data.iter().zip(blocks) {
            let block = block?;
            let rows = 2 * d.lines.len();
            for col in 0..np {
                jac.view_mut((off, col), (rows, 1)).copy_from_slice(&block[col * rows..(col + 1) * rows]);
            }
            off += rows;
        }
        Some(jac)
    }

    fn accepted(&mut self, iteration: usize, params: &DVector<f64>, _cost: f64) {
        self.record(iteration, params);
    }
}

/// Whitens the steady-state states of a linear model over the estimation data.
fn whitening_transform(model: &PnlssModel, data: &[PeriodicData], cfg: &PnlssConfig) -> Result<DMatrix<f64>> {
    let n = model.order();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut count = 0usize;
    for d in data {
        let ss = steady_state_simulate(model, &d.input, cfg.max_periods, cfg.steady_tolerance)?;
        for x in ss.states.chunks(n) {
            let v = DVector::from_column_slice(x);
            cov += &v * v.transpose();
        }
        count += d.input.len();
    }
    cov /= count as f64;
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("state covariance is not positive definite".into()))?;
    Ok(chol.l())
}

/// Joint estimation of `(A, B, C, D, E, F)` from a linear starting point with
/// zero nonlinear coefficients.
pub fn estimate_pnlss(
    initial: &LinearModel,
    state_basis: &MonomialBasis,
    output_basis: &MonomialBasis,
    estimation: &[PeriodicData],
    validation: Option<&[PeriodicData]>,
    cfg: &PnlssConfig,
) -> Result<PnlssFit> {
    if estimation.is_empty() {
        return config("no estimation data");
    }
    for d in estimation.iter().chain(validation.unwrap_or(&[])) {
        if d.input.len() != d.output.len() || d.input.is_empty() {
            return config("periodic data input and output lengths differ");
        }
    }
    let mut model = PnlssModel::from_linear(initial.clone(), state_basis.clone(), output_basis.clone())?;
    if cfg.normalize_states {
        let t = whitening_transform(&model, estimation, cfg)?;
        model = model.transformed_linear(&t)?;
    }
    let y_rms = rms(&estimation.iter().flat_map(|d| d.output.iter().copied()).collect::<Vec<_>>());
    let state_rms = if cfg.normalize_states { 1.0 } else { 0.0 };
    model.divergence_bound = cfg.divergence_factor * y_rms.max(state_rms).max(f64::MIN_POSITIVE);

    let mut problem = Problem::new(model.clone(), estimation, validation, *cfg);
    let p0 = model.to_params();
    problem.record(0, &p0);
    let initial_cost = problem
        .residuals(&p0)
        .map(|r| r.norm_squared())
        .ok_or(Error::NonFiniteCost { iterations: 0 })?;
    let outcome = minimize(&mut problem, p0, &cfg.lm)?;

    let mut trace = Vec::with_capacity(outcome.trace.len());
    let mut errs = problem.accepted_errors.iter().peekable();
    let (mut est, mut val) = (f64::NAN, None);
    let mut rejected_run = 0usize;
    let mut diagnostic = None;
    for it in &outcome.trace {
        while let Some(&&(i, e, v)) = errs.peek() {
            if i > it.iteration {
                break;
            }
            est = e;
            val = v;
            errs.next();
        }
        rejected_run = if it.accepted { 0 } else { rejected_run + 1 };
        trace.push(PnlssIteration {
            iteration: it.iteration,
            cost: 2.0 * it.cost,
            candidate_cost: 2.0 * it.candidate_cost,
            damping: it.damping,
            accepted: it.accepted,
            est_error_db: est,
            val_error_db: val,
        });
    }
    if rejected_run > 0 && outcome.trace.last().is_some_and(|t| !t.candidate_cost.is_finite()) {
        diagnostic = Some(format!("last {rejected_run} candidate steps were rejected, some for divergence"));
    }
    let final_model = model.with_params(&outcome.params);
    let (best_iteration, best_model) = match (&problem.best, validation) {
        (Some((_, it, p)), Some(_)) => (*it, model.with_params(p)),
        _ => (trace.last().map_or(0, |t| t.iteration), final_model.clone()),
    };
    Ok(PnlssFit {
        model: best_model,
        final_model,
        initial_cost: 2.0 * initial_cost,
        cost: 2.0 * outcome.cost,
        best_iteration,
        trace,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pnlss::basis::build_basis;
    use crate::pnlss::model::pnlss_simulate;
    use nalgebra::RowDVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn linear(seed: u64) -> LinearModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || rng.sample::<f64, _>(StandardNormal);
        LinearModel {
            a: DMatrix::from_row_slice(2, 2, &[0.6 + 0.05 * g(), 0.3, -0.4, 0.5 + 0.05 * g()]),
            b: DVector::from_vec(vec![1.0 + 0.1 * g(), 0.5 * g()]),
            c: RowDVector::from_vec(vec![0.8 + 0.1 * g(), 0.3 * g()]),
            d: 0.1 * g(),
            sample_rate_hz: 64.0,
        }
    }

    fn multisine(n: usize, lines: &[usize], seed: u64, amp: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<f64> = lines.iter().map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
        (0..n)
            .map(|t| {
                lines
                    .iter()
                    .zip(&phases)
                    .map(|(&k, ph)| amp * (std::f64::consts::TAU * (k * t) as f64 / n as f64 + ph).cos())
                    .sum()
            })
            .collect()
    }

    fn truth(seed: u64) -> PnlssModel {
        let basis = build_basis(2, false, &[2, 3]).unwrap();
        let mut m = PnlssModel::from_linear(linear(seed), basis, MonomialBasis::empty(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for v in m.e.iter_mut() {
            *v = 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
        m.divergence_bound = 1e6;
        m
    }

    fn data_from(m: &PnlssModel, n: usize, lines: &[usize], seed: u64) -> PeriodicData {
        let input = multisine(n, lines, seed, 0.3 / (lines.len() as f64).sqrt());
        let ss = steady_state_simulate(m, &input, 100, 1e-13).unwrap();
        PeriodicData {
            input,
            output: ss.output,
            lines: lines.to_vec(),
            sample_rate_hz: 64.0,
        }
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let lines: Vec<usize> = (1..20).collect();
        let target = truth(1);
        let data = vec![data_from(&target, 64, &lines, 2), data_from(&target, 64, &lines, 3)];
        // evaluate away from the optimum with an output-equation term as well
        let mut m = truth(4);
        m.output_basis = build_basis(2, false, &[2]).unwrap();
        m.f = RowDVector::from_vec(vec![0.02, -0.03, 0.01]);
        let cfg = PnlssConfig {
            steady_tolerance: 1e-14,
            ..PnlssConfig::default()
        };
        let mut prob = Problem::new(m.clone(), &data, None, cfg);
        let p = m.to_params();
        let jac = prob.jacobian(&p).unwrap();
        for j in 0..p.len() {
            let h = 1e-6 * p[j].abs().max(1e-2);
            let mut pp = p.clone();
            pp[j] += h;
            let rp = prob.residuals(&pp).unwrap();
            pp[j] -= 2.0 * h;
            let rm = prob.residuals(&pp).unwrap();
            let fd = (rp - rm) / (2.0 * h);
            let col = jac.column(j);
            let err = (&fd - col).norm();
            assert!(err <= 1e-5 * col.norm().max(1e-12), "param {j}: |fd - analytic| = {err:e}, |col| = {:e}", col.norm());
        }
    }

    #[test]
    fn cost_is_in_band_error_energy() {
        let lines: Vec<usize> = (3..25).collect();
        let target = truth(5);
        let data = vec![data_from(&target, 128, &lines, 6)];
        let model = truth(7);
        let cfg = PnlssConfig::default();
        let v = nonlinear_cost(&model, &data, &cfg);
        let ss = steady_state_simulate(&model, &data[0].input, 100, 1e-12).unwrap();
        let err: Vec<f64> = ss.output.iter().zip(&data[0].output).map(|(a, b)| a - b).collect();
        // band-limit the error by projecting onto the in-band sines and cosines
        let n = err.len() as f64;
        let mut energy = 0.0;
        for &k in &lines {
            let (mut c, mut s) = (0.0, 0.0);
            for (t, e) in err.iter().enumerate() {
                let w = std::f64::consts::TAU * (k * t) as f64 / n;
                c += e * w.cos();
                s += e * w.sin();
            }
            energy += 2.0 * (c * c + s * s) / n;
        }
        assert!((v - energy).abs() <= 1e-10 * energy, "{v} vs {energy}");
        assert_eq!(nonlinear_cost(&target, &data, &cfg), 0.0);
    }

    #[test]
    fn estimation_recovers_a_pnlss_system() {
        let lines: Vec<usize> = (1..30).collect();
        let target = truth(8);
        let est = vec![data_from(&target, 128, &lines, 9), data_from(&target, 128, &lines, 10)];
        let val = vec![data_from(&target, 128, &lines, 11)];
        let basis = build_basis(2, false, &[2, 3]).unwrap();
        let cfg = PnlssConfig {
            lm: LmConfig {
                max_iterations: 60,
                ..LmConfig::default()
            },
            ..PnlssConfig::default()
        };
        let fit = estimate_pnlss(&target.linear, &basis, &MonomialBasis::empty(2), &est, Some(&val), &cfg).unwrap();
        assert!(fit.cost < 1e-8 * fit.initial_cost, "{} -> {}", fit.initial_cost, fit.cost);
        let mut last = f64::INFINITY;
        for it in fit.trace.iter().filter(|t| t.accepted) {
            assert!(it.cost <= last);
            last = it.cost;
        }
        let sim = pnlss_simulate(&fit.model, &val[0].input, &[0.0, 0.0]).unwrap();
        assert!(!sim.diverged());
    }

    #[test]
    fn empty_basis_refines_linear_model() {
        let lines: Vec<usize> = (1..30).collect();
        let target = truth(12);
        let est = vec![data_from(&target, 128, &lines, 13)];
        let cfg = PnlssConfig {
            lm: LmConfig {
                max_iterations: 20,
                ..LmConfig::default()
            },
            ..PnlssConfig::default()
        };
        let empty = MonomialBasis::empty(2);
        let fit = estimate_pnlss(&target.linear, &empty, &empty, &est, None, &cfg).unwrap();
        assert!(fit.model.e.is_empty());
        assert!(fit.cost <= fit.initial_cost);
        assert_eq!(fit.model.num_parameters(), 9);
    }

    #[test]
    fn estimation_is_deterministic() {
        let lines: Vec<usize> = (1..30).collect();
        let target = truth(14);
        let est = vec![data_from(&target, 128, &lines, 15)];
        let basis = build_basis(2, false, &[3]).unwrap();
        let cfg = PnlssConfig {
            lm: LmConfig {
                max_iterations: 10,
                ..LmConfig::default()
            },
            ..PnlssConfig::default()
        };
        let run = || estimate_pnlss(&target.linear, &basis, &MonomialBasis::empty(2), &est, None, &cfg).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
    }
}
