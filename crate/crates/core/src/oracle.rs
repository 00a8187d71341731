//! Brute-force reference by enumeration of all 2^p states.
//!
//! The table is built from the Σ-block determinant of each state rather than
//! from principal minors of `Λ − I`, so it is a second computational route
//! to the same joint distribution. Everything else is literal summation.

use crate::error::{Error, Result};
use crate::matrix::{determinant, IndexSet, Matrix};
use crate::model::{GrassmannBinary, Observation, PROB_TOL};

/// Joint probabilities over `dim` variables, indexed by state bitmask with
/// variable 1 in the least significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    dim: usize,
    probs: Vec<f64>,
}

/// Σ-block matrix for a state: columns of variables observed as 0 are
/// negated, with `1 − Σ_jj` on their diagonal.
fn state_block(sigma: &Matrix, ones_mask: u64) -> Matrix {
    let p = sigma.rows();
    let mut out = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let zero_j = ones_mask >> j & 1 == 0;
            out[(i, j)] = match (zero_j, i == j) {
                (false, _) => sigma[(i, j)],
                (true, true) => 1.0 - sigma[(j, j)],
                (true, false) => -sigma[(i, j)],
            };
        }
    }
    out
}

pub fn oracle_table(d: &GrassmannBinary) -> Result<Table> {
    let p = d.dim();
    let cap = d.options().max_p;
    if p > cap || p >= 64 {
        return Err(Error::DimensionTooLarge { p, cap });
    }
    let probs = (0u64..1 << p)
        .map(|mask| determinant(&state_block(d.sigma(), mask)))
        .collect();
    Ok(Table { dim: p, probs })
}

impl Table {
    pub fn new(dim: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << dim {
            return Err(Error::DimensionMismatch {
                expected: 1 << dim,
                actual: probs.len(),
            });
        }
        Ok(Self { dim, probs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, mask: u64) -> f64 {
        self.probs[mask as usize]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Sums out every variable not in `keep`.
    pub fn marginal(&self, keep: &IndexSet) -> Table {
        let k = keep.as_slice();
        let mut out = vec![0.0; 1 << k.len()];
        for (state, &pr) in self.probs.iter().enumerate() {
            out[compress(state as u64, k) as usize] += pr;
        }
        Table {
            dim: k.len(),
            probs: out,
        }
    }

    /// Bayes' rule: restrict to states agreeing with `obs`, renormalize.
    /// Returns the table over the unobserved variables and `p(obs)`.
    pub fn conditional(&self, obs: &Observation) -> Result<(Table, f64)> {
        let remaining = obs.remaining(self.dim);
        let r = remaining.as_slice();
        let mut out = vec![0.0; 1 << r.len()];
        let mut evidence = 0.0;
        for (state, &pr) in self.probs.iter().enumerate() {
            let state = state as u64;
            if obs.iter().all(|(i, v)| (state >> i & 1 == 1) == v) {
                out[compress(state, r) as usize] += pr;
                evidence += pr;
            }
        }
        if evidence.abs() <= PROB_TOL {
            return Err(Error::ZeroEvidence { evidence });
        }
        out.iter_mut().for_each(|v| *v /= evidence);
        Ok((
            Table {
                dim: r.len(),
                probs: out,
            },
            evidence,
        ))
    }

    /// `Σ_δ f(δ) π_δ`.
    pub fn moment<F: Fn(u64) -> f64>(&self, f: F) -> f64 {
        self.probs.iter().enumerate().map(|(s, &pr)| f(s as u64) * pr).sum()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.moment(|s| bit(s, i))
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let (mi, mj) = (self.mean(i), self.mean(j));
        self.moment(|s| (bit(s, i) - mi) * (bit(s, j) - mj))
    }

    pub fn pearson(&self, i: usize, j: usize) -> f64 {
        self.covariance(i, j) / (self.covariance(i, i) * self.covariance(j, j)).sqrt()
    }

    /// `E[∏_{i∈r} (x_i − μ_i)]`.
    pub fn central_moment(&self, r: &IndexSet) -> f64 {
        let means: Vec<(usize, f64)> = r.iter().map(|i| (i, self.mean(i))).collect();
        self.moment(|s| means.iter().map(|&(i, m)| bit(s, i) - m).product())
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        if other.len() != self.probs.len() {
            return f64::INFINITY;
        }
        self.probs
            .iter()
            .zip(other)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

fn bit(state: u64, i: usize) -> f64 {
    (state >> i & 1) as f64
}

/// Re-indexes the bits of `state` at positions `idx` into a dense mask.
fn compress(state: u64, idx: &[usize]) -> u64 {
    idx.iter().enumerate().fold(0, |m, (k, &i)| m | (state >> i & 1) << k)
}
