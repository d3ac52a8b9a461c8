//! Multivariate monomial bases in the states (and optionally the input).

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// Monomials of total degree in `degrees`, graded lexicographic order:
/// ascending degree, then descending exponent of the first variable, and so on.
/// Variables are the `num_states` states followed by the input when
/// `include_input` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr")]
pub struct MonomialBasis {
    pub num_states: usize,
    pub include_input: bool,
    pub degrees: Vec<u32>,
    pub exponents: Vec<Vec<u32>>,
}

#[derive(Deserialize)]
struct BasisRepr {
    num_states: usize,
    include_input: bool,
    degrees: Vec<u32>,
    exponents: Vec<Vec<u32>>,
}

impl TryFrom<BasisRepr> for MonomialBasis {
    type Error = Error;

    fn try_from(r: BasisRepr) -> Result<Self> {
        let b = build_basis(r.num_states, r.include_input, &r.degrees)?;
        if b.degrees != r.degrees || b.exponents != r.exponents {
            return config("exponent table does not match the declared degree set");
        }
        Ok(b)
    }
}

pub fn build_basis(num_states: usize, include_input: bool, degrees: &[u32]) -> Result<MonomialBasis> {
    if num_states == 0 {
        return config("a basis needs at least one state");
    }
    if let Some(d) = degrees.iter().find(|&&d| d < 2) {
        return config(format!("monomial degree {d} is below 2"));
    }
    if let Some(d) = degrees.iter().find(|&&d| d > 32) {
        return config(format!("monomial degree {d} is unreasonably large"));
    }
    let mut degrees = degrees.to_vec();
    degrees.sort_unstable();
    degrees.dedup();
    let vars = num_states + usize::from(include_input);
    let total = degrees
        .iter()
        .try_fold(0u64, |acc, &d| monomial_count(vars as u64, d as u64).and_then(|c| acc.checked_add(c)))
        .filter(|&t| t <= MAX_MONOMIALS);
    let Some(total) = total else {
        return config(format!("basis in {vars} variables with degrees {degrees:?} exceeds {MAX_MONOMIALS} monomials"));
    };
    let mut exponents = Vec::with_capacity(total as usize);
    for &d in &degrees {
        let mut cur = vec![0u32; vars];
        enumerate(d, 0, &mut cur, &mut exponents);
    }
    Ok(MonomialBasis {
        num_states,
        include_input,
        degrees,
        exponents,
    })
}

/// Upper bound on the size of a basis; larger models are not estimable anyway.
pub const MAX_MONOMIALS: u64 = 1 << 20;

/// Number of monomials of total degree exactly `d` in `vars` variables, `None` on overflow.
fn monomial_count(vars: u64, d: u64) -> Option<u64> {
    if vars == 0 {
        return Some(0);
    }
    // C(vars + d - 1, d), built incrementally so every partial product is an exact binomial
    let n = vars.checked_add(d)?.checked_sub(1)?;
    let k = d.min(n - d);
    (1..=k).try_fold(1u64, |acc, i| acc.checked_mul(n + 1 - i).map(|v| v / i))
}

fn enumerate(left: u32, var: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if var + 1 == cur.len() {
        cur[var] = left;
        out.push(cur.clone());
        cur[var] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[var] = e;
        enumerate(left - e, var + 1, cur, out);
    }
    cur[var] = 0;
}

/// Binomial coefficient, exact for the small arguments used here.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (1..=k).fold(1u64, |acc, i| acc * (n + 1 - i) / i)
}

/// Number of nonlinear coefficients of a full model whose `e` and `f` hold
/// every monomial of degree 1 to `d` in `n` states and `q` inputs.
pub fn full_term_count(n: usize, q: usize, l: usize, d: usize) -> usize {
    ((binomial((n + q + d) as u64, d as u64) - 1) as usize) * (n + l)
}

impl MonomialBasis {
    pub fn empty(num_states: usize) -> Self {
        Self {
            num_states,
            include_input: false,
            degrees: Vec::new(),
            exponents: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.num_states + usize::from(self.include_input)
    }

    pub fn max_degree(&self) -> u32 {
        self.degrees.last().copied().unwrap_or(0)
    }

    /// Whether every monomial is odd, so that `e(-x, -u) = -e(x, u)`.
    pub fn is_odd(&self) -> bool {
        self.degrees.iter().all(|d| d % 2 == 1)
    }

    pub(crate) fn evaluator(&self) -> BasisEval {
        BasisEval::new(self)
    }
}

/// Evaluates a basis and its state gradient with a table of powers.
#[derive(Debug, Clone)]
pub(crate) struct BasisEval {
    vars: usize,
    states: usize,
    max_deg: usize,
    /// Per monomial, nonzero `(variable, exponent)` pairs.
    terms: Vec<Vec<(usize, u32)>>,
    powers: Vec<f64>,
}

impl BasisEval {
    fn new(b: &MonomialBasis) -> Self {
        let terms = b
            .exponents
            .iter()
            .map(|e| e.iter().enumerate().filter(|(_, &p)| p > 0).map(|(v, &p)| (v, p)).collect())
            .collect();
        let max_deg = b.max_degree() as usize;
        Self {
            vars: b.num_vars(),
            states: b.num_states,
            max_deg,
            terms,
            powers: vec![1.0; b.num_vars() * (max_deg + 1)],
        }
    }

    fn fill_powers(&mut self, x: &[f64], u: f64) {
        let stride = self.max_deg + 1;
        for v in 0..self.vars {
            let base = if v < self.states { x[v] } else { u };
            let row = &mut self.powers[v * stride..(v + 1) * stride];
            row[0] = 1.0;
            for p in 1..stride {
                row[p] = row[p - 1] * base;
            }
        }
    }

    pub fn values(&mut self, x: &[f64], u: f64, out: &mut [f64]) {
        if self.terms.is_empty() {
            return;
        }
        self.fill_powers(x, u);
        let stride = self.max_deg + 1;
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.iter().map(|&(v, p)| self.powers[v * stride + p as usize]).product();
        }
    }

    /// Values plus `grad[j * states + i] = d e_j / d x_i`.
    pub fn values_and_grad(&mut self, x: &[f64], u: f64, out: &mut [f64], grad: &mut [f64]) {
        if self.terms.is_empty() {
            return;
        }
        self.fill_powers(x, u);
        let stride = self.max_deg + 1;
        let s = self.states;
        for (j, t) in self.terms.iter().enumerate() {
            out[j] = t.iter().map(|&(v, p)| self.powers[v * stride + p as usize]).product();
            let g = &mut grad[j * s..(j + 1) * s];
            g.iter_mut().for_each(|v| *v = 0.0);
            for (a, &(va, pa)) in t.iter().enumerate() {
                if va >= s {
                    continue;
                }
                let mut d = pa as f64 * self.powers[va * stride + pa as usize - 1];
                for (b, &(vb, pb)) in t.iter().enumerate() {
                    if a != b {
                        d *= self.powers[vb * stride + pb as usize];
                    }
                }
                g[va] = d;
            }
        }
    }
}
