//! Sample statistics, their theoretical sampling moments, max-entropy
//! parameter selection and MAP estimation of Σ.
//!
//! Σ is only identified up to two symmetries that leave every joint
//! probability unchanged: scaling row i by c and column i by 1/c, and
//! transposition. Fits pin `Σ_i1 = −1` for every `i ≠ 1`; the transposition
//! ambiguity is left to the caller.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{determinant, IndexSet, Lu, Matrix, DEFAULT_ENUMERATION_CAP};
use crate::model::{GrassmannBinary, ModelOptions, SigmaMatrix, PROB_TOL};
use crate::sampler::{seeded_rng, Dataset};

/// Sample statistics of a dataset.
#[derive(Clone, Debug)]
pub struct StatSummary {
    pub n: usize,
    pub means: Vec<f64>,
    /// Unbiased sample covariances; `None` when `n < 2`.
    pub covariances: Option<Matrix>,
    /// Empirical joint distribution `q_δ = n_δ / N` over observed states.
    pub empirical: BTreeMap<u64, f64>,
}

impl StatSummary {
    pub fn q(&self, mask: u64) -> f64 {
        self.empirical.get(&mask).copied().unwrap_or(0.0)
    }

    pub fn covariance(&self, i: usize, j: usize) -> Option<f64> {
        self.covariances.as_ref().map(|c| c[(i, j)])
    }
}

pub fn summarize(data: &Dataset) -> Result<StatSummary> {
    let n = data.len();
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let p = data.dim();
    let nf = n as f64;
    let mut means = vec![0.0; p];
    for (&mask, &c) in data.counts() {
        for (i, m) in means.iter_mut().enumerate() {
            if mask >> i & 1 == 1 {
                *m += c as f64;
            }
        }
    }
    means.iter_mut().for_each(|m| *m /= nf);

    let covariances = (n >= 2).then(|| {
        let mut cov = Matrix::zeros(p, p);
        for (&mask, &c) in data.counts() {
            let dev: Vec<f64> = (0..p).map(|i| (mask >> i & 1) as f64 - means[i]).collect();
            for i in 0..p {
                for j in 0..p {
                    cov[(i, j)] += c as f64 * dev[i] * dev[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] /= nf - 1.0;
            }
        }
        cov
    });

    let empirical = data.counts().iter().map(|(&mask, &c)| (mask, c as f64 / nf)).collect();
    Ok(StatSummary {
        n,
        means,
        covariances,
        empirical,
    })
}

/// Expected values and variances of the sample statistics for samples of
/// size `n` drawn from a model.
#[derive(Clone, Debug)]
pub struct StatMoments {
    pub n: usize,
    pub mean_of_means: Vec<f64>,
    pub var_of_means: Vec<f64>,
    /// `E[s_ij] = σ_ij`.
    pub mean_of_covariances: Matrix,
    /// `Var[s_ij]`; the diagonal is left at zero.
    pub var_of_covariances: Matrix,
    pub mean_of_q: Vec<f64>,
    pub var_of_q: Vec<f64>,
}

pub fn theoretical_stat_moments(d: &GrassmannBinary, n: usize) -> Result<StatMoments> {
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let p = d.dim();
    let nf = n as f64;
    let means = d.means();
    let var_of_means = means.iter().map(|m| m * (1.0 - m) / nf).collect();
    let cov = d.covariance_matrix();
    let mut var_cov = Matrix::zeros(p, p);
    for i in 0..p {
        for j in (0..p).filter(|&j| j != i) {
            let m4 = d.fourth_central_moment(i, j)?;
            let m2 = cov[(i, j)];
            let (vi, vj) = (cov[(i, i)], cov[(j, j)]);
            var_cov[(i, j)] = m4 / nf - (nf - 2.0) / (nf * (nf - 1.0)) * m2 * m2 + vi * vj / (nf * (nf - 1.0));
        }
    }
    let table = d.joint_table()?;
    let var_of_q = table.iter().map(|pi| pi * (1.0 - pi) / nf).collect();
    Ok(StatMoments {
        n,
        mean_of_means: means,
        var_of_means,
        mean_of_covariances: cov,
        var_of_covariances: var_cov,
        mean_of_q: table,
        var_of_q,
    })
}

/// Target means and covariances for max-entropy parameter selection.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTarget {
    means: Vec<f64>,
    covariances: Matrix,
}

impl MomentTarget {
    /// `covariances` must be symmetric; its diagonal is ignored.
    pub fn new(means: Vec<f64>, covariances: Matrix) -> Result<Self> {
        let p = means.len();
        if covariances.rows() != p || covariances.cols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: covariances.rows(),
            });
        }
        for (i, &m) in means.iter().enumerate() {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::MeanOutOfRange { index: i, value: m });
            }
        }
        let mut cov = covariances;
        for i in 0..p {
            cov[(i, i)] = means[i] * (1.0 - means[i]);
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-15 {
                    return Err(Error::InvalidTarget(format!(
                        "covariance ({}, {}) is not symmetric",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let t = Self {
            means,
            covariances: cov,
        };
        for i in 0..p {
            for j in 0..i {
                if t.correlation(i, j).abs() > 1.0 {
                    return Err(Error::InvalidTarget(format!("|rho_{}{}| exceeds 1", j + 1, i + 1)));
                }
            }
        }
        Ok(t)
    }

    /// Builds covariances `ρ_ij sqrt(μ_i(1−μ_i) μ_j(1−μ_j))` from Pearson
    /// correlations; only the strict upper triangle of `correlations` is read.
    pub fn from_correlations(means: Vec<f64>, correlations: &Matrix) -> Result<Self> {
        let p = means.len();
        if correlations.rows() != p || correlations.cols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: correlations.rows(),
            });
        }
        let mut cov = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i + 1..p {
                let rho = correlations[(i, j)];
                if rho.abs() > 1.0 {
                    return Err(Error::InvalidTarget(format!("|rho_{}{}| exceeds 1", i + 1, j + 1)));
                }
                let s = rho * (means[i] * (1.0 - means[i]) * means[j] * (1.0 - means[j])).sqrt();
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Self::new(means, cov)
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.covariances[(i, j)]
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let v = |k: usize| self.means[k] * (1.0 - self.means[k]);
        self.covariances[(i, j)] / (v(i) * v(j)).sqrt()
    }
}

/// Σ matching a moment target, with one sign and one log-ratio per pair
/// `(i, j)`, `2 ≤ i < j`, of nonzero covariance:
/// `Σ_ij = s·e^r·sqrt|σ_ij|`, `Σ_ji = ∓s·e^{−r}·sqrt|σ_ij|` with the sign
/// chosen so that `−Σ_ij Σ_ji = σ_ij`.
#[derive(Clone, Debug)]
pub struct RatioParameterization {
    target: MomentTarget,
    pairs: Vec<(usize, usize)>,
}

impl RatioParameterization {
    pub fn new(target: MomentTarget) -> Self {
        let p = target.dim();
        let pairs = (1..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .filter(|&(i, j)| target.covariance(i, j) != 0.0)
            .collect();
        Self { target, pairs }
    }

    pub fn target(&self) -> &MomentTarget {
        &self.target
    }

    /// Free pairs, 0-based.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn sigma(&self, negate: &[bool], ratios: &[f64]) -> Matrix {
        let t = &self.target;
        let p = t.dim();
        let mut s = Matrix::from_diagonal(&t.means);
        for j in 1..p {
            s[(j, 0)] = -1.0;
            s[(0, j)] = t.covariance(0, j);
        }
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let cov = t.covariance(i, j);
            let a = cov.abs().sqrt();
            let sign = if negate[k] { -1.0 } else { 1.0 };
            let r = ratios[k];
            s[(i, j)] = sign * r.exp() * a;
            s[(j, i)] = -cov.signum() * sign * (-r).exp() * a;
        }
        s
    }
}

/// Entropy of the joint table of `sigma` (Σ-block route), or `None` if some
/// state has probability below `PROB_TOL` or Σ is singular.
pub fn entropy_of_sigma(sigma: &Matrix) -> Option<f64> {
    let p = sigma.rows();
    let mut h = 0.0;
    let mut block = sigma.clone();
    for mask in 0u64..1 << p {
        fill_state_block(sigma, mask, &mut block);
        let pi = determinant(&block);
        if !(pi > PROB_TOL) {
            return None;
        }
        h -= pi * pi.ln();
    }
    Some(h)
}

#[derive(Clone, Debug)]
pub struct MaxEntConfig {
    /// Coordinate-ascent sweeps per sign pattern.
    pub max_sweeps: usize,
    /// Half-width of the golden-section bracket around each coordinate.
    pub bracket: f64,
    pub ratio_bound: f64,
    /// Patterns beyond this many are sampled rather than enumerated.
    pub max_sign_patterns: usize,
    pub seed: u64,
    pub max_p: usize,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            bracket: 2.0,
            ratio_bound: 8.0,
            max_sign_patterns: 1024,
            seed: 0,
            max_p: DEFAULT_ENUMERATION_CAP,
        }
    }
}

pub fn fit_max_entropy(target: &MomentTarget) -> Result<GrassmannBinary> {
    fit_max_entropy_with(target, &MaxEntConfig::default())
}

/// Picks the free sign/ratio parameters maximizing the joint entropy by
/// coordinate ascent with golden-section line searches, over every sign
/// pattern.
pub fn fit_max_entropy_with(target: &MomentTarget, cfg: &MaxEntConfig) -> Result<GrassmannBinary> {
    let p = target.dim();
    if p > cfg.max_p {
        return Err(Error::DimensionTooLarge { p, cap: cfg.max_p });
    }
    let param = RatioParameterization::new(target.clone());
    let k = param.pairs().len();
    let mut rng = seeded_rng(cfg.seed);

    let patterns: Vec<Vec<bool>> = if k < 63 && (1u64 << k) as usize <= cfg.max_sign_patterns {
        (0u64..1 << k)
            .map(|bits| (0..k).map(|b| bits >> b & 1 == 1).collect())
            .collect()
    } else {
        (0..cfg.max_sign_patterns)
            .map(|_| (0..k).map(|_| rng.random::<bool>()).collect())
            .collect()
    };

    let mut best: Option<(f64, Matrix, bool)> = None;
    for negate in &patterns {
        let eval = |r: &[f64]| entropy_of_sigma(&param.sigma(negate, r));
        let mut start = None;
        for attempt in 0..8 {
            let r: Vec<f64> = if attempt == 0 {
                vec![0.0; k]
            } else {
                (0..k).map(|_| rng.random_range(-2.0..2.0)).collect()
            };
            if let Some(h) = eval(&r) {
                start = Some((r, h));
                break;
            }
        }
        let Some((mut r, mut h)) = start else {
            continue;
        };
        let mut converged = k == 0;
        for _ in 0..cfg.max_sweeps {
            if k == 0 {
                break;
            }
            let before = h;
            for c in 0..k {
                let lo = (r[c] - cfg.bracket).max(-cfg.ratio_bound);
                let hi = (r[c] + cfg.bracket).min(cfg.ratio_bound);
                let mut trial = r.clone();
                let (x, fx) = golden_section_max(lo, hi, 1e-9, |x| {
                    trial[c] = x;
                    eval(&trial).unwrap_or(f64::NEG_INFINITY)
                });
                if fx > h {
                    r[c] = x;
                    h = fx;
                }
            }
            if h - before < 1e-13 {
                converged = true;
                break;
            }
        }
        if best.as_ref().is_none_or(|(bh, _, _)| h > *bh) {
            best = Some((h, param.sigma(negate, &r), converged));
        }
    }

    let Some((_, sigma, converged)) = best else {
        return Err(Error::InfeasibleTarget);
    };
    if !converged {
        return Err(Error::NonConvergence {
            iterations: cfg.max_sweeps,
            report: Box::new(FitReport::empty(sigma)),
        });
    }
    let options = ModelOptions {
        max_p: cfg.max_p,
        ..ModelOptions::default()
    };
    GrassmannBinary::from_sigma(SigmaMatrix::new(sigma)?, &options)
}

/// Maximizes `f` on `[lo, hi]`; returns the best point seen and its value.
fn golden_section_max<F: FnMut(f64) -> f64>(mut lo: f64, mut hi: f64, tol: f64, mut f: F) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Σ-block matrix of the state `mask` written into `out`.
fn fill_state_block(sigma: &Matrix, ones_mask: u64, out: &mut Matrix) {
    let p = sigma.rows();
    for j in 0..p {
        let zero = ones_mask >> j & 1 == 0;
        for i in 0..p {
            out[(i, j)] = match (zero, i == j) {
                (false, _) => sigma[(i, j)],
                (true, true) => 1.0 - sigma[(j, j)],
                (true, false) => -sigma[(i, j)],
            };
        }
    }
}

/// `Σ_δ (n_δ + γ) log π_δ(Σ)` over all 2^p states, dropping the Dirichlet
/// normalizer.
pub fn log_posterior(sigma: &Matrix, counts: &BTreeMap<u64, u64>, gamma: f64) -> Result<f64> {
    let p = sigma.require_square()?;
    if p >= 64 || p > DEFAULT_ENUMERATION_CAP {
        return Err(Error::DimensionTooLarge {
            p,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let mut block = sigma.clone();
    let mut total = 0.0;
    for mask in 0u64..1 << p {
        fill_state_block(sigma, mask, &mut block);
        let pi = determinant(&block);
        if !(pi > 0.0) {
            return Err(Error::NonPositiveProbability { state: mask, value: pi });
        }
        let w = counts.get(&mask).copied().unwrap_or(0) as f64 + gamma;
        total += w * pi.ln();
    }
    Ok(total)
}

/// Scales row i by `c_i` and column i by `1/c_i` so that `Σ_i1 = −1` for
/// `i ≠ 1`. Rows with `Σ_i1 = 0` are left as they are, since no scaling can
/// reach −1 and pinning would change the distribution.
pub fn canonicalize_gauge(sigma: &Matrix) -> Matrix {
    let p = sigma.rows();
    let mut out = sigma.clone();
    for i in 1..p {
        let a = out[(i, 0)];
        if a == 0.0 {
            continue;
        }
        let c = -1.0 / a;
        for k in 0..p {
            if k != i {
                out[(i, k)] *= c;
                out[(k, i)] /= c;
            }
        }
        out[(i, 0)] = -1.0;
    }
    out
}

/// The other gauge representative of the same distribution.
pub fn transposed_representative(sigma: &Matrix) -> Matrix {
    canonicalize_gauge(&sigma.transpose())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// Diagonal from sample means, first row from `s_1j`, symmetric splits
    /// for the remaining pairs; shrunk toward independence until feasible.
    MomentMatching,
    Independent,
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    /// Dirichlet pseudo-count added to every state.
    pub gamma: f64,
    pub max_newton_iters: usize,
    /// Stop when `max |∇| / (N + γ·2^p)` falls below this.
    pub gradient_tolerance: f64,
    pub max_step_halvings: usize,
    pub init: InitMode,
    pub max_p: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            max_newton_iters: 200,
            gradient_tolerance: 1e-9,
            max_step_halvings: 40,
            init: InitMode::MomentMatching,
            max_p: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig("gamma must be positive".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidConfig("gradient tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    /// Gauge-canonical estimate (`Σ_i1 = −1` for `i ≠ 1`).
    pub sigma: Matrix,
    /// Log posterior after each accepted iterate, starting at the initial point.
    pub log_posterior_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final `max |∇| / (N + γ·2^p)`.
    pub gradient_norm: f64,
}

impl FitReport {
    fn empty(sigma: Matrix) -> Self {
        Self {
            sigma,
            log_posterior_trace: Vec::new(),
            iterations: 0,
            converged: false,
            gradient_norm: f64::NAN,
        }
    }

    pub fn model(&self, options: &ModelOptions) -> Result<GrassmannBinary> {
        GrassmannBinary::from_sigma(SigmaMatrix::new(self.sigma.clone())?, options)
    }
}

/// Newton parameters: logits of the diagonal, then every off-diagonal
/// entry. The objective is flat along the row/column scaling directions;
/// iterates are kept balanced instead of pinning entries.
struct Layout {
    p: usize,
    offdiag: Vec<(usize, usize)>,
}

impl Layout {
    fn new(p: usize) -> Self {
        let offdiag = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .collect();
        Self { p, offdiag }
    }

    #[cfg(test)]
    fn len(&self) -> usize {
        self.p + self.offdiag.len()
    }

    fn sigma(&self, theta: &[f64]) -> Matrix {
        let p = self.p;
        let mut s = Matrix::zeros(p, p);
        for i in 0..p {
            s[(i, i)] = sigmoid(theta[i]);
        }
        for (k, &(i, j)) in self.offdiag.iter().enumerate() {
            s[(i, j)] = theta[p + k];
        }
        s
    }

    fn theta(&self, sigma: &Matrix) -> Vec<f64> {
        let p = self.p;
        let mut t: Vec<f64> = (0..p).map(|i| logit(sigma[(i, i)])).collect();
        t.extend(self.offdiag.iter().map(|&(i, j)| sigma[(i, j)]));
        t
    }

    fn balanced(&self, theta: &[f64]) -> Vec<f64> {
        self.theta(&balance_gauge(&self.sigma(theta)))
    }
}

/// Gauge representative whose off-diagonal row i and column i have equal
/// Euclidean norms for every i (Osborne iteration). Rows or columns that are
/// entirely zero are left alone.
fn balance_gauge(sigma: &Matrix) -> Matrix {
    let p = sigma.rows();
    let mut s = sigma.clone();
    for _ in 0..50 {
        let mut worst = 0.0f64;
        for i in 0..p {
            let (mut r, mut c) = (0.0, 0.0);
            for k in (0..p).filter(|&k| k != i) {
                r += s[(i, k)] * s[(i, k)];
                c += s[(k, i)] * s[(k, i)];
            }
            if r == 0.0 || c == 0.0 {
                continue;
            }
            let f = (c / r).sqrt().sqrt();
            worst = worst.max((f - 1.0).abs());
            for k in (0..p).filter(|&k| k != i) {
                s[(i, k)] *= f;
                s[(k, i)] /= f;
            }
        }
        if worst < 1e-6 {
            break;
        }
    }
    s
}

/// Solves `a x = b` for symmetric positive definite `a`; `None` otherwise.
fn cholesky_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    Some(y)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(m: f64) -> f64 {
    (m / (1.0 - m)).ln()
}

/// Dense weights `n_δ + γ` over all states.
struct Objective<'a> {
    layout: &'a Layout,
    weights: Vec<f64>,
    total_weight: f64,
}

impl Objective<'_> {
    fn value(&self, theta: &[f64]) -> Option<f64> {
        let sigma = self.layout.sigma(theta);
        let mut block = sigma.clone();
        let mut total = 0.0;
        for (mask, &w) in self.weights.iter().enumerate() {
            fill_state_block(&sigma, mask as u64, &mut block);
            let pi = determinant(&block);
            if !(pi > 0.0) {
                return None;
            }
            total += w * pi.ln();
        }
        Some(total)
    }

    /// Analytic gradient: `∂ log det S_δ / ∂Σ_ab = ±(S_δ⁻¹)_ba`, negative
    /// when column b is flipped in state δ, then chained through the logit.
    fn gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let p = self.layout.p;
        let sigma = self.layout.sigma(theta);
        let mut block = sigma.clone();
        let mut d_sigma = Matrix::zeros(p, p);
        for (mask, &w) in self.weights.iter().enumerate() {
            fill_state_block(&sigma, mask as u64, &mut block);
            let inv = Lu::new(&block).inverse().ok()?;
            for a in 0..p {
                for b in 0..p {
                    let sign = if mask >> b & 1 == 0 { -1.0 } else { 1.0 };
                    d_sigma[(a, b)] += w * sign * inv[(b, a)];
                }
            }
        }
        let mut g: Vec<f64> = (0..p)
            .map(|i| {
                let s = sigma[(i, i)];
                d_sigma[(i, i)] * s * (1.0 - s)
            })
            .collect();
        g.extend(self.layout.offdiag.iter().map(|&(i, j)| d_sigma[(i, j)]));
        Some(g)
    }

    /// Central differences of the analytic gradient, symmetrized.
    fn hessian(&self, theta: &[f64]) -> Option<Matrix> {
        let n = theta.len();
        let mut h = Matrix::zeros(n, n);
        let mut t = theta.to_vec();
        for k in 0..n {
            let step = 1e-5 * theta[k].abs().max(1.0);
            t[k] = theta[k] + step;
            let gp = self.gradient(&t)?;
            t[k] = theta[k] - step;
            let gm = self.gradient(&t)?;
            t[k] = theta[k];
            for i in 0..n {
                h[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = avg;
                h[(j, i)] = avg;
            }
        }
        Some(h)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn initial_sigma(data: &Dataset, layout: &Layout, objective: &Objective) -> Matrix {
    let p = data.dim();
    let n = data.len() as f64;
    let ones: Vec<f64> = (0..p)
        .map(|i| {
            data.counts()
                .iter()
                .filter(|(&m, _)| m >> i & 1 == 1)
                .map(|(_, &c)| c as f64)
                .sum()
        })
        .collect();
    let means: Vec<f64> = ones.iter().map(|c| (c + 0.5) / (n + 1.0)).collect();
    let independent = {
        let mut s = Matrix::from_diagonal(&means);
        for i in 1..p {
            s[(i, 0)] = -1.0;
        }
        s
    };
    let cov = summarize(data).ok().and_then(|s| s.covariances);
    let (InitMode::MomentMatching, Some(cov)) = (InitMode::MomentMatching, cov) else {
        return independent;
    };
    let mut full = independent.clone();
    for j in 1..p {
        full[(0, j)] = cov[(0, j)];
    }
    for i in 1..p {
        for j in i + 1..p {
            let s = cov[(i, j)];
            let a = s.abs().sqrt();
            full[(i, j)] = a;
            full[(j, i)] = if s > 0.0 { -a } else { a };
        }
    }
    let mut scale = 1.0;
    for _ in 0..40 {
        let mut s = independent.clone();
        for &(i, j) in &layout.offdiag {
            s[(i, j)] = scale * full[(i, j)];
        }
        if objective.value(&layout.theta(&s)).is_some() {
            return s;
        }
        scale *= 0.5;
    }
    independent
}

/// MAP estimate of Σ under a symmetric Dirichlet prior on the joint table,
/// by Newton's method over the gauge-fixed parameters.
///
/// Hessians are central differences of the analytic gradient. A step is
/// halved until every state keeps positive probability and the objective
/// does not decrease; if the Newton direction is singular or not an ascent
/// direction, the gradient is used instead.
pub fn fit_map(data: &Dataset, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let p = data.dim();
    if p > config.max_p || p >= 64 {
        return Err(Error::DimensionTooLarge { p, cap: config.max_p });
    }
    if p == 0 {
        return Err(Error::EmptyIndexSet);
    }
    let layout = Layout::new(p);
    let weights: Vec<f64> = (0u64..1 << p).map(|m| data.count(m) as f64 + config.gamma).collect();
    let total_weight = weights.iter().sum();
    let objective = Objective {
        layout: &layout,
        weights,
        total_weight,
    };
    let init = match config.init {
        InitMode::MomentMatching => initial_sigma(data, &layout, &objective),
        InitMode::Independent => {
            let mut s = initial_sigma(&Dataset::new(p), &layout, &objective);
            let n = data.len() as f64;
            for i in 0..p {
                let c: f64 = data
                    .counts()
                    .iter()
                    .filter(|(&m, _)| m >> i & 1 == 1)
                    .map(|(_, &c)| c as f64)
                    .sum();
                s[(i, i)] = (c + 0.5) / (n + 1.0);
            }
            s
        }
    };
    newton(&objective, layout.theta(&init), config)
}

fn newton(objective: &Objective, theta: Vec<f64>, config: &FitConfig) -> Result<FitReport> {
    let layout = objective.layout;
    let norm = objective.total_weight;
    let mut theta = layout.balanced(&theta);
    let mut value = objective.value(&theta).ok_or(Error::InfeasibleTarget)?;
    let mut trace = vec![value];
    let mut grad = objective.gradient(&theta).ok_or(Error::SingularSigma)?;
    let mut gnorm = max_abs(&grad) / norm;
    let mut iterations = 0;
    let mut converged = gnorm < config.gradient_tolerance;

    while !converged && iterations < config.max_newton_iters {
        iterations += 1;
        let mut candidates = Vec::with_capacity(2);
        if let Some(h) = objective.hessian(&theta) {
            if let Some(d) = damped_newton_direction(&h, &grad) {
                candidates.push(d);
            }
        }
        candidates.push(gradient_direction(&grad));

        let mut accepted = None;
        'dirs: for dir in candidates {
            let mut alpha = 1.0;
            for _ in 0..=config.max_step_halvings {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + alpha * d).collect();
                if let Some(v) = objective.value(&cand) {
                    if v >= value - 1e-14 * value.abs() {
                        let cand = layout.balanced(&cand);
                        if let (Some(v), Some(g)) = (objective.value(&cand), objective.gradient(&cand)) {
                            accepted = Some((cand, v, g));
                            break 'dirs;
                        }
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some((t, v, g)) = accepted else {
            break;
        };
        theta = t;
        value = v;
        grad = g;
        trace.push(value);
        gnorm = max_abs(&grad) / norm;
        converged = gnorm < config.gradient_tolerance;
    }

    let report = FitReport {
        sigma: canonicalize_gauge(&layout.sigma(&theta)),
        log_posterior_trace: trace,
        iterations,
        converged,
        gradient_norm: gnorm,
    };
    if converged {
        Ok(report)
    } else {
        Err(Error::NonConvergence {
            iterations,
            report: Box::new(report),
        })
    }
}

/// Solves `(−H + λI) d = g` with the smallest `λ` on the grid
/// `1e-10·s, 1e-9·s, …` (`s` the largest diagonal magnitude) that makes the
/// system positive definite. The small floor absorbs the gauge null space.
fn damped_newton_direction(h: &Matrix, grad: &[f64]) -> Option<Vec<f64>> {
    let n = h.rows();
    let scale = (0..n).fold(0.0f64, |a, i| a.max(h[(i, i)].abs())).max(1e-300);
    let mut lambda = 1e-10 * scale;
    while lambda <= 1e6 * scale {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = -h[(i, j)];
            }
            a[(i, i)] += lambda;
        }
        if let Some(d) = cholesky_solve(&a, grad) {
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        lambda *= 10.0;
    }
    None
}

/// Gradient scaled so the largest coordinate change is 0.5.
fn gradient_direction(grad: &[f64]) -> Vec<f64> {
    let m = max_abs(grad);
    if m == 0.0 {
        return grad.to_vec();
    }
    grad.iter().map(|g| 0.5 * g / m).collect()
}

/// Outcome of fitting from several starting points.
#[derive(Clone, Debug)]
pub struct MultistartReport {
    /// Converged fit with the highest log posterior.
    pub best: FitReport,
    pub converged_runs: usize,
    /// Largest difference between the best joint table and that of any other
    /// converged run. Nonzero values indicate distinct local maxima.
    pub max_table_disagreement: f64,
}

/// Runs [`fit_map`] from the configured start and from `extra_starts`
/// random perturbations of it.
pub fn fit_map_multistart(
    data: &Dataset,
    config: &FitConfig,
    extra_starts: usize,
    seed: u64,
) -> Result<MultistartReport> {
    config.validate()?;
    let p = data.dim();
    let layout = Layout::new(p);
    let weights: Vec<f64> = (0u64..1 << p).map(|m| data.count(m) as f64 + config.gamma).collect();
    let total_weight = weights.iter().sum();
    let objective = Objective {
        layout: &layout,
        weights,
        total_weight,
    };
    let mut rng = seeded_rng(seed);
    let mut fits = vec![fit_map(data, config)];
    let base = match &fits[0] {
        Ok(r) => layout.theta(&r.sigma),
        Err(Error::NonConvergence { report, .. }) => layout.theta(&report.sigma),
        Err(_) => layout.theta(&initial_sigma(data, &layout, &objective)),
    };
    for _ in 0..extra_starts {
        let mut start = None;
        for _ in 0..50 {
            let t: Vec<f64> = base.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            if objective.value(&t).is_some() {
                start = Some(t);
                break;
            }
        }
        if let Some(t) = start {
            fits.push(newton(&objective, t, config));
        }
    }
    let converged: Vec<FitReport> = fits.into_iter().filter_map(|r| r.ok()).collect();
    let best = converged
        .iter()
        .max_by(|a, b| {
            let fa = a.log_posterior_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
            let fb = b.log_posterior_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
            fa.total_cmp(&fb)
        })
        .cloned()
        .ok_or(Error::NonConvergence {
            iterations: config.max_newton_iters,
            report: Box::new(FitReport::empty(Matrix::zeros(p, p))),
        })?;
    let table = |s: &Matrix| -> Vec<f64> {
        let mut block = s.clone();
        (0u64..1 << p)
            .map(|m| {
                fill_state_block(s, m, &mut block);
                determinant(&block)
            })
            .collect()
    };
    let best_table = table(&best.sigma);
    let max_table_disagreement = converged
        .iter()
        .map(|r| {
            table(&r.sigma)
                .iter()
                .zip(&best_table)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
        })
        .fold(0.0, f64::max);
    Ok(MultistartReport {
        best,
        converged_runs: converged.len(),
        max_table_disagreement,
    })
}

/// Indices whose `Σ_i1` is zero, for which the gauge cannot be pinned.
pub fn unpinnable_rows(sigma: &Matrix) -> IndexSet {
    IndexSet::from_sorted((1..sigma.rows()).filter(|&i| sigma[(i, 0)] == 0.0))
}
