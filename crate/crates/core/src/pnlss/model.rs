//! Polynomial nonlinear state-space model, its time-domain simulation and
//! periodic steady state.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use super::basis::{BasisEval, MonomialBasis};
use crate::error::{config, Error, Result};
use crate::linear_id::LinearModel;

/// `x(t+1) = A x + B u + E e(x, u)`, `y(t) = C x + D u + F f(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PnlssRepr", try_from = "PnlssRepr")]
pub struct PnlssModel {
    pub linear: LinearModel,
    pub state_basis: MonomialBasis,
    pub output_basis: MonomialBasis,
    /// `n x n_e`
    pub e: DMatrix<f64>,
    /// `1 x n_f`
    pub f: RowDVector<f64>,
    /// Maps the model states to those of the linear model it was started
    /// from: `x_initial = T x`.
    pub state_transform: DMatrix<f64>,
    /// Simulation stops once any state exceeds this magnitude.
    pub divergence_bound: f64,
}

#[derive(Serialize, Deserialize)]
struct PnlssRepr {
    linear: LinearModel,
    state_basis: MonomialBasis,
    output_basis: MonomialBasis,
    e: Vec<Vec<f64>>,
    f: Vec<f64>,
    state_transform: Vec<Vec<f64>>,
    divergence_bound: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if r.len() != nrows || r.iter().any(|row| row.len() != ncols) {
        return config(format!("{what} must be {nrows} x {ncols}"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| r[i][j]))
}

impl From<PnlssModel> for PnlssRepr {
    fn from(m: PnlssModel) -> Self {
        Self {
            e: rows(&m.e),
            f: m.f.iter().copied().collect(),
            state_transform: rows(&m.state_transform),
            linear: m.linear,
            state_basis: m.state_basis,
            output_basis: m.output_basis,
            divergence_bound: m.divergence_bound,
        }
    }
}

impl TryFrom<PnlssRepr> for PnlssModel {
    type Error = Error;

    fn try_from(r: PnlssRepr) -> Result<Self> {
        let n = r.linear.order();
        let m = PnlssModel {
            e: from_rows(&r.e, n, r.state_basis.len(), "E")?,
            f: RowDVector::from_vec(r.f),
            state_transform: from_rows(&r.state_transform, n, n, "state transform")?,
            linear: r.linear,
            state_basis: r.state_basis,
            output_basis: r.output_basis,
            divergence_bound: r.divergence_bound,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Outcome of a simulation; a divergent run keeps the samples computed so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SimStatus {
    Completed,
    Diverged { sample: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub output: Vec<f64>,
    /// `x(t)` for every simulated sample, row after row of `n` values.
    pub states: Vec<f64>,
    pub status: SimStatus,
}

impl Simulation {
    pub fn diverged(&self) -> bool {
        matches!(self.status, SimStatus::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// One period of output.
    pub output: Vec<f64>,
    /// `x(t)` over the period, row after row.
    pub states: Vec<f64>,
    pub initial_state: Vec<f64>,
    /// `max |x(N) - x(0)|` relative to the largest state magnitude.
    pub residual: f64,
    /// Periods simulated to find the orbit.
    pub periods: usize,
    /// `d x(N) / d x(0)` along the orbit.
    pub monodromy: DMatrix<f64>,
}

impl PnlssModel {
    /// Wraps a linear model with zero nonlinear coefficients.
    pub fn from_linear(linear: LinearModel, state_basis: MonomialBasis, output_basis: MonomialBasis) -> Result<Self> {
        let n = linear.order();
        let m = Self {
            e: DMatrix::zeros(n, state_basis.len()),
            f: RowDVector::zeros(output_basis.len()),
            state_transform: DMatrix::identity(n, n),
            linear,
            state_basis,
            output_basis,
            divergence_bound: f64::MAX,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.linear.order()
    }

    pub fn validate(&self) -> Result<()> {
        self.linear.validate()?;
        let n = self.order();
        for (b, name) in [(&self.state_basis, "state"), (&self.output_basis, "output")] {
            if !b.is_empty() && b.num_states != n {
                return config(format!("{name} basis is built for {} states, model has {n}", b.num_states));
            }
        }
        if self.e.nrows() != n || self.e.ncols() != self.state_basis.len() {
            return config("E does not match the state basis");
        }
        if self.f.len() != self.output_basis.len() {
            return config("F does not match the output basis");
        }
        if self.state_transform.nrows() != n || self.state_transform.ncols() != n {
            return config("state transform must be n x n");
        }
        let finite = self.e.iter().chain(self.f.iter()).chain(self.state_transform.iter()).all(|v| v.is_finite());
        if !finite {
            return config("model coefficients must be finite");
        }
        if !(self.divergence_bound > 0.0) {
            return config("divergence bound must be positive");
        }
        Ok(())
    }

    /// `n^2 + n q + l n + l q + n n_e + l n_f` with `q = l = 1`.
    pub fn num_parameters(&self) -> usize {
        parameter_count(self.order(), self.state_basis.len(), self.output_basis.len())
    }

    /// `[A (row-major), B, C, D, E (row-major), F]`.
    pub fn to_params(&self) -> DVector<f64> {
        let lin = self.linear.to_params();
        let mut p = DVector::zeros(self.num_parameters());
        p.rows_mut(0, lin.len()).copy_from(&lin);
        let mut k = lin.len();
        for i in 0..self.e.nrows() {
            for j in 0..self.e.ncols() {
                p[k] = self.e[(i, j)];
                k += 1;
            }
        }
        for v in self.f.iter() {
            p[k] = *v;
            k += 1;
        }
        p
    }

    pub fn with_params(&self, p: &DVector<f64>) -> Self {
        let n = self.order();
        let nl = self.linear.num_parameters();
        let ne = self.state_basis.len();
        let mut out = self.clone();
        out.linear = LinearModel::from_params(n, &p.rows(0, nl).into_owned(), self.linear.sample_rate_hz);
        out.e = DMatrix::from_fn(n, ne, |i, j| p[nl + i * ne + j]);
        out.f = RowDVector::from_fn(self.output_basis.len(), |_, j| p[nl + n * ne + j]);
        out
    }

    /// Similarity transform `x = T x'`. Only valid without nonlinear terms,
    /// since monomials do not transform linearly.
    pub(crate) fn transformed_linear(&self, t: &DMatrix<f64>) -> Result<Self> {
        if self.e.iter().chain(self.f.iter()).any(|v| *v != 0.0) {
            return config("cannot transform the states of a model with nonlinear terms");
        }
        let mut out = self.clone();
        out.linear = self.linear.transformed(t)?;
        out.state_transform = &self.state_transform * t;
        Ok(out)
    }
}

pub fn parameter_count(n: usize, n_e: usize, n_f: usize) -> usize {
    let (q, l) = (1, 1);
    n * n + n * q + l * n + l * q + n * n_e + l * n_f
}

/// One-step evaluation of the model equations with reusable buffers.
pub(crate) struct Stepper<'a> {
    m: &'a PnlssModel,
    e_eval: BasisEval,
    f_eval: BasisEval,
    pub e_val: Vec<f64>,
    e_grad: Vec<f64>,
    pub f_val: Vec<f64>,
    f_grad: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(m: &'a PnlssModel) -> Self {
        let n = m.order();
        Self {
            m,
            e_eval: m.state_basis.evaluator(),
            f_eval: m.output_basis.evaluator(),
            e_val: vec![0.0; m.state_basis.len()],
            e_grad: vec![0.0; m.state_basis.len() * n],
            f_val: vec![0.0; m.output_basis.len()],
            f_grad: vec![0.0; m.output_basis.len() * n],
        }
    }

    /// Writes `x(t+1)` and returns `y(t)`.
    pub fn step(&mut self, x: &[f64], u: f64, next: &mut [f64]) -> f64 {
        let m = self.m;
        let n = x.len();
        self.e_eval.values(x, u, &mut self.e_val);
        self.f_eval.values(x, u, &mut self.f_val);
        let lin = &m.linear;
        for i in 0..n {
            let mut v = lin.b[i] * u;
            for j in 0..n {
                v += lin.a[(i, j)] * x[j];
            }
            for (j, e) in self.e_val.iter().enumerate() {
                v += m.e[(i, j)] * e;
            }
            next[i] = v;
        }
        let mut y = lin.d * u;
        for j in 0..n {
            y += lin.c[j] * x[j];
        }
        for (j, f) in self.f_val.iter().enumerate() {
            y += m.f[j] * f;
        }
        y
    }

    /// As [`Stepper::step`], also writing `jac = d x(t+1) / d x(t)` (row-major)
    /// and `c_t = d y(t) / d x(t)`.
    pub fn step_with_jacobian(&mut self, x: &[f64], u: f64, next: &mut [f64], jac: &mut [f64], c_t: &mut [f64]) -> f64 {
        let m = self.m;
        let n = x.len();
        self.e_eval.values_and_grad(x, u, &mut self.e_val, &mut self.e_grad);
        self.f_eval.values_and_grad(x, u, &mut self.f_val, &mut self.f_grad);
        let lin = &m.linear;
        for i in 0..n {
            let mut v = lin.b[i] * u;
            for j in 0..n {
                v += lin.a[(i, j)] * x[j];
                jac[i * n + j] = lin.a[(i, j)];
            }
            for (j, e) in self.e_val.iter().enumerate() {
                let coef = m.e[(i, j)];
                v += coef * e;
                if coef != 0.0 {
                    for s in 0..n {
                        jac[i * n + s] += coef * self.e_grad[j * n + s];
                    }
                }
            }
            next[i] = v;
        }
        let mut y = lin.d * u;
        for j in 0..n {
            y += lin.c[j] * x[j];
            c_t[j] = lin.c[j];
        }
        for (j, f) in self.f_val.iter().enumerate() {
            y += m.f[j] * f;
            for s in 0..n {
                c_t[s] += m.f[j] * self.f_grad[j * n + s];
            }
        }
        y
    }
}

fn out_of_bounds(x: &[f64], bound: f64) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > bound)
}

/// Runs the recursion from `x0` over the whole input.
pub fn pnlss_simulate(model: &PnlssModel, input: &[f64], x0: &[f64]) -> Result<Simulation> {
    let n = model.order();
    if x0.len() != n {
        return config(format!("initial state has {} entries, model order is {n}", x0.len()));
    }
    let mut st = Stepper::new(model);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut output = Vec::with_capacity(input.len());
    let mut states = Vec::with_capacity(input.len() * n);
    for (t, &u) in input.iter().enumerate() {
        states.extend_from_slice(&x);
        output.push(st.step(&x, u, &mut next));
        if out_of_bounds(&next, model.divergence_bound) {
            return Ok(Simulation {
                output,
                states,
                status: SimStatus::Diverged { sample: t + 1 },
            });
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(Simulation {
        output,
        states,
        status: SimStatus::Completed,
    })
}

struct PeriodRun {
    output: Vec<f64>,
    states: Vec<f64>,
    end: Vec<f64>,
    monodromy: DMatrix<f64>,
}

fn run_period(model: &PnlssModel, period: &[f64], x0: &[f64]) -> Result<PeriodRun> {
    let n = model.order();
    let mut st = Stepper::new(model);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut jac = vec![0.0; n * n];
    let mut c_t = vec![0.0; n];
    let mut phi = DMatrix::<f64>::identity(n, n);
    let mut tmp = DMatrix::<f64>::zeros(n, n);
    let mut output = Vec::with_capacity(period.len());
    let mut states = Vec::with_capacity(period.len() * n);
    for (t, &u) in period.iter().enumerate() {
        states.extend_from_slice(&x);
        output.push(st.step_with_jacobian(&x, u, &mut next, &mut jac, &mut c_t));
        if out_of_bounds(&next, model.divergence_bound) {
            return Err(Error::Diverged { sample: t + 1 });
        }
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for s in 0..n {
                    v += jac[i * n + s] * phi[(s, j)];
                }
                tmp[(i, j)] = v;
            }
        }
        std::mem::swap(&mut phi, &mut tmp);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(PeriodRun {
        output,
        states,
        end: x,
        monodromy: phi,
    })
}

/// Periodic orbit for a periodic input, found by Newton shooting on
/// `x(N) = x(0)` with plain period repetition as a fallback whenever a
/// Newton update does not reduce the mismatch.
pub fn steady_state_simulate(model: &PnlssModel, period: &[f64], max_periods: usize, tolerance: f64) -> Result<SteadyState> {
    steady_state_from(model, period, &vec![0.0; model.order()], max_periods, tolerance)
}

pub fn steady_state_from(
    model: &PnlssModel,
    period: &[f64],
    start: &[f64],
    max_periods: usize,
    tolerance: f64,
) -> Result<SteadyState> {
    let n = model.order();
    if period.is_empty() {
        return config("empty input period");
    }
    if start.len() != n {
        return config("initial state does not match the model order");
    }
    let mut x0 = start.to_vec();
    let mut last_residual = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=max_periods {
        let run = run_period(model, period, &x0)?;
        let scale = run.states.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mismatch: Vec<f64> = run.end.iter().zip(&x0).map(|(e, s)| e - s).collect();
        residual = mismatch.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
        if residual <= tolerance {
            return Ok(SteadyState {
                output: run.output,
                states: run.states,
                initial_state: x0,
                residual,
                periods: it,
                monodromy: run.monodromy,
            });
        }
        let newton = (residual < last_residual)
            .then(|| {
                let lhs = DMatrix::<f64>::identity(n, n) - &run.monodromy;
                lhs.lu().solve(&DVector::from_vec(mismatch.clone()))
            })
            .flatten()
            .map(|dx| x0.iter().zip(dx.iter()).map(|(a, b)| a + b).collect::<Vec<f64>>())
            .filter(|x| !out_of_bounds(x, model.divergence_bound));
        last_residual = residual;
        x0 = match newton {
            Some(x) => x,
            None => {
                last_residual = f64::INFINITY;
                run.end
            }
        };
    }
    Err(Error::NotSteady {
        periods: max_periods,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pnlss::basis::build_basis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn random_model(seed: u64, degrees: &[u32], scale: f64) -> PnlssModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || rng.sample::<f64, _>(StandardNormal);
        let a = DMatrix::from_row_slice(2, 2, &[0.6 + 0.05 * g(), 0.3, -0.4, 0.5 + 0.05 * g()]);
        let linear = LinearModel {
            a,
            b: DVector::from_vec(vec![1.0 + 0.1 * g(), 0.5 * g()]),
            c: RowDVector::from_vec(vec![0.8 + 0.1 * g(), 0.3 * g()]),
            d: 0.1 * g(),
            sample_rate_hz: 100.0,
        };
        let basis = build_basis(2, false, degrees).unwrap();
        let mut m = PnlssModel::from_linear(linear, basis, MonomialBasis::empty(2)).unwrap();
        for v in m.e.iter_mut() {
            *v = scale * g();
        }
        m
    }

    fn input(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn table_counts() {
        let cases: [(&[u32], usize); 7] = [
            (&[2], 34),
            (&[2, 3], 64),
            (&[2, 3, 4], 109),
            (&[2, 3, 4, 5], 172),
            (&[2, 3, 4, 5, 6], 256),
            (&[2, 3, 4, 5, 6, 7], 364),
            (&[3, 5, 7], 217),
        ];
        for (deg, count) in cases {
            let b = build_basis(3, false, deg).unwrap();
            let n_e = b.len();
            let linear = LinearModel {
                a: DMatrix::zeros(3, 3),
                b: DVector::zeros(3),
                c: RowDVector::zeros(3),
                d: 0.0,
                sample_rate_hz: 750.0,
            };
            let m = PnlssModel::from_linear(linear, b, MonomialBasis::empty(3)).unwrap();
            assert_eq!(m.num_parameters(), count, "{deg:?}");
            assert_eq!(m.to_params().len(), count);
            assert_eq!(parameter_count(3, n_e, 0), count);
        }
    }

    #[test]
    fn zero_nonlinearity_is_linear_simulation() {
        let mut m = random_model(1, &[2, 3], 0.0);
        m.e.fill(0.0);
        let u = input(200, 2);
        let sim = pnlss_simulate(&m, &u, &[0.1, -0.2]).unwrap();
        let mut x = DVector::from_vec(vec![0.1, -0.2]);
        for (t, &u) in u.iter().enumerate() {
            let y = (&m.linear.c * &x)[0] + m.linear.d * u;
            assert!((y - sim.output[t]).abs() <= 1e-13 * y.abs().max(1.0));
            x = &m.linear.a * &x + &m.linear.b * u;
        }
    }

    #[test]
    fn recursion_matches_direct_reevaluation() {
        let m = random_model(3, &[2], 0.05);
        let u = input(300, 4);
        let sim = pnlss_simulate(&m, &u, &[0.0, 0.0]).unwrap();
        assert_eq!(sim.status, SimStatus::Completed);
        let (mut x1, mut x2) = (0.0f64, 0.0f64);
        for (t, &u) in u.iter().enumerate() {
            // exponents [2,0], [1,1], [0,2]
            let mono = [x1 * x1, x1 * x2, x2 * x2];
            let y = m.linear.c[0] * x1 + m.linear.c[1] * x2 + m.linear.d * u;
            assert!((y - sim.output[t]).abs() <= 1e-13 * y.abs().max(1.0), "t = {t}");
            let mut nx = [0.0; 2];
            for (i, v) in nx.iter_mut().enumerate() {
                *v = m.linear.a[(i, 0)] * x1 + m.linear.a[(i, 1)] * x2 + m.linear.b[i] * u;
                for (j, mv) in mono.iter().enumerate() {
                    *v += m.e[(i, j)] * mv;
                }
            }
            x1 = nx[0];
            x2 = nx[1];
        }
    }

    #[test]
    fn divergence_is_reported_with_partial_output() {
        let mut m = random_model(5, &[3], 0.0);
        m.e.fill(2.0);
        m.divergence_bound = 1e6;
        let u = vec![3.0; 100];
        let sim = pnlss_simulate(&m, &u, &[0.0, 0.0]).unwrap();
        let SimStatus::Diverged { sample } = sim.status else {
            panic!("expected divergence");
        };
        assert_eq!(sim.output.len(), sample);
        assert!(sample < 100);
    }

    #[test]
    fn steady_state_of_linear_model() {
        let m = random_model(6, &[], 0.0);
        let period = input(64, 7);
        let ss = steady_state_simulate(&m, &period, 20, 1e-10).unwrap();
        assert!(ss.residual <= 1e-10);
        assert!(ss.periods <= 3);
    }

    #[test]
    fn steady_state_reproduces_itself() {
        let m = random_model(8, &[2, 3], 0.05);
        let period = input(128, 9);
        let ss = steady_state_simulate(&m, &period, 50, 1e-12).unwrap();
        let n = m.order();
        let end = &ss.states[(period.len() - 1) * n..];
        // continue one more period from the last stored state
        let mut x = vec![0.0; n];
        Stepper::new(&m).step(end, period[period.len() - 1], &mut x);
        let again = pnlss_simulate(&m, &period, &x).unwrap();
        for (a, b) in again.output.iter().zip(&ss.output) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn odd_model_is_odd() {
        let m = random_model(10, &[3, 5], 0.05);
        let u = input(400, 11);
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let a = pnlss_simulate(&m, &u, &[0.0, 0.0]).unwrap();
        let b = pnlss_simulate(&m, &neg, &[0.0, 0.0]).unwrap();
        for (p, q) in a.output.iter().zip(&b.output) {
            assert_eq!(*p, -*q);
        }
    }

    #[test]
    fn json_round_trip() {
        let m = random_model(12, &[2, 3], 0.05);
        let s = serde_json::to_string(&m).unwrap();
        let back: PnlssModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
