//! The binary distribution parameterized by a p×p matrix Σ.
//!
//! Joint probabilities are principal minors of `Λ − I` divided by `det Λ`
//! where `Λ = Σ⁻¹`. Marginals keep a principal submatrix of Σ, conditionals
//! take a Schur complement of the coding-flipped matrix Σ̃.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::{
    determinant, inverse, is_p0_matrix_with, schur_complement, IndexSet, Lu, Matrix, P0Verdict, DEFAULT_ENUMERATION_CAP,
};

/// Absolute tolerance for probability comparisons.
pub const PROB_TOL: f64 = 1e-10;

/// Largest dimension validated by [`CheckPolicy::Auto`].
pub const AUTO_CHECK_MAX_P: usize = 12;

/// Entropy terms with probability below this are treated as zero.
const ENTROPY_FLOOR: f64 = 1e-300;

/// Σ with diagonal strictly inside (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaMatrix(Matrix);

impl SigmaMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        m.require_square()?;
        for (i, d) in m.diagonal().into_iter().enumerate() {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::MeanOutOfRange { index: i, value: d });
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CheckPolicy {
    /// Exhaustive P₀ check when `p <= AUTO_CHECK_MAX_P`, otherwise unchecked.
    #[default]
    Auto,
    /// Always check; fails with `DimensionTooLarge` above the enumeration cap.
    Always,
    Never,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelOptions {
    pub check: CheckPolicy,
    /// Reject models whose check fails instead of flagging them.
    pub strict: bool,
    /// Enumeration cap for routines that visit all 2^p states.
    pub max_p: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            check: CheckPolicy::Auto,
            strict: false,
            max_p: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl ModelOptions {
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }

    pub fn unchecked() -> Self {
        Self {
            check: CheckPolicy::Never,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Validity {
    Valid,
    /// `witness` is a subset B whose minor of `Λ − I` is negative, i.e. the
    /// state with zeros exactly on B has negative probability.
    Invalid {
        witness: IndexSet,
    },
    Unchecked,
}

/// A 0/1 vector of length p.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryVector(Vec<bool>);

impl BinaryVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Parse(format!("bit value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    /// Variable `i` (0-based) is bit `i` of `mask`.
    pub fn from_mask(mask: u64, p: usize) -> Self {
        Self((0..p).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |m, (i, &b)| if b { m | 1 << i } else { m })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

/// Partial assignment of variables to 0/1.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Observation(BTreeMap<usize, bool>);

impl Observation {
    pub fn new<I: IntoIterator<Item = (usize, bool)>>(pairs: I, p: usize) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, v) in pairs {
            if i >= p {
                return Err(Error::IndexOutOfRange { index: i, dim: p });
            }
            if map.insert(i, v).is_some() {
                return Err(Error::DuplicateIndex(i));
            }
        }
        Ok(Self(map))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Indices observed as 1.
    pub fn ones(&self) -> IndexSet {
        IndexSet::from_sorted(self.0.iter().filter(|(_, &v)| v).map(|(&i, _)| i))
    }

    /// Indices observed as 0.
    pub fn zeros(&self) -> IndexSet {
        IndexSet::from_sorted(self.0.iter().filter(|(_, &v)| !v).map(|(&i, _)| i))
    }

    pub fn observed(&self) -> IndexSet {
        IndexSet::from_sorted(self.0.keys().copied())
    }

    pub fn remaining(&self, p: usize) -> IndexSet {
        self.observed().complement(p)
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.0.get(&i).copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains_key(&i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.0.iter().map(|(&i, &v)| (i, v))
    }

    pub fn insert(&mut self, i: usize, v: bool) {
        self.0.insert(i, v);
    }
}

impl IndexSet {
    pub(crate) fn from_sorted<I: IntoIterator<Item = usize>>(it: I) -> Self {
        let v: Vec<usize> = it.into_iter().collect();
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]));
        IndexSet::new(v, usize::MAX).expect("sorted distinct indices")
    }
}

/// Σ with the coding of every variable in `flip` inverted: the diagonal entry
/// becomes `1 − Σ_jj` and the off-diagonal entries of column j change sign.
pub fn flipped_sigma(sigma: &Matrix, flip: u64) -> Matrix {
    let n = sigma.rows();
    let mut out = sigma.clone();
    for j in (0..n).filter(|j| flip >> j & 1 == 1) {
        for i in 0..n {
            out[(i, j)] = if i == j { 1.0 - sigma[(j, j)] } else { -sigma[(i, j)] };
        }
    }
    out
}

/// Result of conditioning on an observation.
#[derive(Clone, Debug)]
pub struct Conditioned {
    /// Distribution of the unobserved variables, in increasing index order.
    pub model: GrassmannBinary,
    /// Marginal probability of the observation.
    pub evidence: f64,
    /// Original indices of the variables of `model`.
    pub remaining: IndexSet,
}

#[derive(Clone, Debug)]
pub struct GrassmannBinary {
    sigma: Matrix,
    lambda: Matrix,
    det_lambda: f64,
    validity: Validity,
    options: ModelOptions,
}

impl GrassmannBinary {
    pub fn from_sigma(sigma: SigmaMatrix, options: &ModelOptions) -> Result<Self> {
        let sigma = sigma.into_matrix();
        let lu = Lu::new(&sigma);
        let lambda = lu.inverse().map_err(|_| Error::SingularSigma)?;
        let det_lambda = 1.0 / lu.determinant();
        Self::assemble(sigma, lambda, det_lambda, *options, None)
    }

    pub fn from_lambda(lambda: Matrix, options: &ModelOptions) -> Result<Self> {
        lambda.require_square()?;
        let sigma = inverse(&lambda).map_err(|_| Error::SingularSigma)?;
        let sigma = SigmaMatrix::new(sigma)?.into_matrix();
        let det_lambda = determinant(&lambda);
        Self::assemble(sigma, lambda, det_lambda, *options, None)
    }

    /// Product-Bernoulli model with the given means.
    pub fn independent(means: &[f64]) -> Result<Self> {
        Self::from_sigma(
            SigmaMatrix::new(Matrix::from_diagonal(means))?,
            &ModelOptions::default(),
        )
    }

    fn assemble(
        sigma: Matrix,
        lambda: Matrix,
        det_lambda: f64,
        options: ModelOptions,
        inherited: Option<Validity>,
    ) -> Result<Self> {
        let mut model = Self {
            sigma,
            lambda,
            det_lambda,
            validity: Validity::Unchecked,
            options,
        };
        model.validity = match inherited {
            Some(Validity::Valid) => Validity::Valid,
            _ => model.run_check()?,
        };
        if options.strict {
            if let Validity::Invalid { witness } = &model.validity {
                return Err(Error::InvalidModel {
                    witness: witness.clone(),
                });
            }
        }
        Ok(model)
    }

    fn run_check(&self) -> Result<Validity> {
        let p = self.dim();
        let run = match self.options.check {
            CheckPolicy::Never => false,
            CheckPolicy::Auto => p <= AUTO_CHECK_MAX_P.min(self.options.max_p),
            CheckPolicy::Always => true,
        };
        if !run {
            return Ok(Validity::Unchecked);
        }
        // With det Λ < 0 every minor has the opposite sign of its state's
        // probability; the all-ones state (B = ∅) has probability 1/det Λ.
        if self.det_lambda < 0.0 {
            if p > self.options.max_p {
                return Err(Error::DimensionTooLarge {
                    p,
                    cap: self.options.max_p,
                });
            }
            return Ok(Validity::Invalid {
                witness: IndexSet::empty(),
            });
        }
        let shifted = &self.lambda - &Matrix::identity(p);
        let tol = PROB_TOL * self.det_lambda.abs();
        Ok(match is_p0_matrix_with(&shifted, tol, self.options.max_p)? {
            P0Verdict::Holds => Validity::Valid,
            P0Verdict::Violated { witness, .. } => Validity::Invalid { witness },
        })
    }

    /// Re-runs the P₀ check regardless of the construction policy.
    pub fn check_validity(&self) -> Result<Validity> {
        let forced = Self {
            options: ModelOptions {
                check: CheckPolicy::Always,
                ..self.options
            },
            ..self.clone()
        };
        forced.run_check()
    }

    fn derived(&self, sigma: Matrix, inherit: bool) -> Result<Self> {
        let sigma = SigmaMatrix::new(sigma)?.into_matrix();
        let lu = Lu::new(&sigma);
        let lambda = lu.inverse().map_err(|_| Error::SingularSigma)?;
        let det_lambda = 1.0 / lu.determinant();
        let options = ModelOptions {
            strict: false,
            ..self.options
        };
        let inherited = inherit.then(|| self.validity.clone());
        Self::assemble(sigma, lambda, det_lambda, options, inherited)
    }

    pub fn dim(&self) -> usize {
        self.sigma.rows()
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    /// The partition function `det Λ`.
    pub fn det_lambda(&self) -> f64 {
        self.det_lambda
    }

    pub fn log_abs_det_lambda(&self) -> f64 {
        self.det_lambda.abs().ln()
    }

    pub fn validity(&self) -> &Validity {
        &self.validity
    }

    pub fn options(&self) -> &ModelOptions {
        &self.options
    }

    pub fn is_valid(&self) -> bool {
        matches!(self.validity, Validity::Valid)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.dim() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                dim: self.dim(),
            })
        }
    }

    fn check_enumerable(&self) -> Result<()> {
        let p = self.dim();
        if p > self.options.max_p || p >= 64 {
            Err(Error::DimensionTooLarge {
                p,
                cap: self.options.max_p,
            })
        } else {
            Ok(())
        }
    }

    pub fn joint_prob(&self, x: &BinaryVector) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.joint_prob_mask(x.mask()))
    }

    /// Probability of the state whose ones are the set bits of `mask`.
    /// Signed: invalid models can yield negative values.
    pub fn joint_prob_mask(&self, mask: u64) -> f64 {
        let p = self.dim();
        let zeros: Vec<usize> = (0..p).filter(|i| mask >> i & 1 == 0).collect();
        let mut block = self.lambda.select(&zeros, &zeros);
        for k in 0..zeros.len() {
            block[(k, k)] -= 1.0;
        }
        determinant(&block) / self.det_lambda
    }

    /// All 2^p probabilities indexed by state bitmask (variable 1 is bit 0).
    pub fn joint_table(&self) -> Result<Vec<f64>> {
        self.check_enumerable()?;
        Ok((0u64..1 << self.dim()).map(|mask| self.joint_prob_mask(mask)).collect())
    }

    pub fn marginal(&self, keep: &IndexSet) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if keep.bound() > self.dim() {
            return Err(Error::IndexOutOfRange {
                index: keep.bound() - 1,
                dim: self.dim(),
            });
        }
        let sub = self.sigma.select(keep.as_slice(), keep.as_slice());
        self.derived(sub, true)
    }

    /// Conditional parameters `(Σ̃_{R|C}, p(x_C))` without building a model.
    pub fn conditional_sigma(&self, obs: &Observation) -> Result<(Matrix, f64)> {
        if let Some(i) = obs.iter().map(|(i, _)| i).find(|&i| i >= self.dim()) {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.dim(),
            });
        }
        let tilde = flipped_sigma(&self.sigma, obs.zeros().mask());
        let c = obs.observed();
        let r = obs.remaining(self.dim());
        let evidence = determinant(&tilde.select(c.as_slice(), c.as_slice()));
        if evidence.abs() <= PROB_TOL {
            return Err(Error::ZeroEvidence { evidence });
        }
        let cond = schur_complement(&tilde, &r, &c)?;
        Ok((cond, evidence))
    }

    pub fn conditional(&self, obs: &Observation) -> Result<Conditioned> {
        let (cond, evidence) = self.conditional_sigma(obs)?;
        let remaining = obs.remaining(self.dim());
        let model = self.derived(cond, true)?;
        Ok(Conditioned {
            model,
            evidence,
            remaining,
        })
    }

    /// `p(x_k = 1 | obs)` via the scalar Schur complement of Σ̃.
    pub fn conditional_mean(&self, k: usize, obs: &Observation) -> Result<f64> {
        self.check_index(k)?;
        if obs.contains(k) {
            return Err(Error::ObservedIndex(k));
        }
        let tilde = flipped_sigma(&self.sigma, obs.zeros().mask());
        let c = obs.observed();
        let c = c.as_slice();
        let mut m = self.sigma[(k, k)];
        if !c.is_empty() {
            let lu = Lu::new(&tilde.select(c, c));
            if lu.is_singular() {
                return Err(Error::ZeroEvidence {
                    evidence: lu.determinant(),
                });
            }
            let mut col: Vec<f64> = c.iter().map(|&j| tilde[(j, k)]).collect();
            lu.solve_in_place(&mut col);
            m -= c.iter().zip(&col).map(|(&j, v)| tilde[(k, j)] * v).sum::<f64>();
        }
        Ok(m)
    }

    /// Model over the recoded variables `x̃_i = 1 − x_i` for `i ∈ flip`.
    pub fn flip_coding(&self, flip: &IndexSet) -> Result<Self> {
        if flip.bound() > self.dim() {
            return Err(Error::IndexOutOfRange {
                index: flip.bound() - 1,
                dim: self.dim(),
            });
        }
        let tilde = flipped_sigma(&self.sigma, flip.mask());
        self.derived(tilde, true)
    }

    pub fn mean(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.sigma[(i, i)])
    }

    pub fn means(&self) -> Vec<f64> {
        self.sigma.diagonal()
    }

    pub fn covariance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(if i == j {
            let m = self.sigma[(i, i)];
            m * (1.0 - m)
        } else {
            -self.sigma[(i, j)] * self.sigma[(j, i)]
        })
    }

    pub fn covariance_matrix(&self) -> Matrix {
        let p = self.dim();
        let mut c = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                c[(i, j)] = self.covariance(i, j).expect("indices in range");
            }
        }
        c
    }

    pub fn pearson(&self, i: usize, j: usize) -> Result<f64> {
        let cov = self.covariance(i, j)?;
        let vi = self.covariance(i, i)?;
        let vj = self.covariance(j, j)?;
        Ok(cov / (vi * vj).sqrt())
    }

    /// `E[∏_{i∈r} (x_i − μ_i)] = det(Σ_rr − diag(μ_r))`.
    pub fn central_moment(&self, r: &IndexSet) -> Result<f64> {
        if r.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        if r.bound() > self.dim() {
            return Err(Error::IndexOutOfRange {
                index: r.bound() - 1,
                dim: self.dim(),
            });
        }
        let mut block = self.sigma.select(r.as_slice(), r.as_slice());
        for k in 0..r.len() {
            block[(k, k)] = 0.0;
        }
        Ok(determinant(&block))
    }

    /// `E[(x_i − μ_i)² (x_j − μ_j)²]` for `i ≠ j`.
    pub fn fourth_central_moment(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(Error::SameIndex(i));
        }
        let (mi, mj) = (self.sigma[(i, i)], self.sigma[(j, j)]);
        let cov = -self.sigma[(i, j)] * self.sigma[(j, i)];
        Ok((1.0 - 2.0 * mi) * (1.0 - 2.0 * mj) * cov + mi * (1.0 - mi) * mj * (1.0 - mj))
    }

    /// Correlation of `x_i, x_j` given `obs`, with every other unobserved
    /// variable set to 1. Computed from the 2×2 block of `Λ̃ = Σ̃⁻¹`.
    pub fn partial_correlation(&self, i: usize, j: usize, obs: &Observation) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(Error::SameIndex(i));
        }
        for k in [i, j] {
            if obs.contains(k) {
                return Err(Error::ObservedIndex(k));
            }
        }
        let tilde = flipped_sigma(&self.sigma, obs.zeros().mask());
        let lt = inverse(&tilde).map_err(|_| Error::SingularSigma)?;
        let (l11, l12, l21, l22) = (lt[(i, i)], lt[(i, j)], lt[(j, i)], lt[(j, j)]);
        let det = l11 * l22 - l12 * l21;
        Ok(-l12 * l21 / (l22 * (det - l22) * l11 * (det - l11)).sqrt())
    }

    /// Observation extended with every variable outside `obs ∪ {i, j}` set to 1.
    pub fn partial_correlation_condition(&self, i: usize, j: usize, obs: &Observation) -> Observation {
        let mut full = obs.clone();
        for k in (0..self.dim()).filter(|&k| k != i && k != j && !obs.contains(k)) {
            full.insert(k, true);
        }
        full
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> Result<f64> {
        let table = self.joint_table()?;
        let mut h = 0.0;
        for (state, &pi) in table.iter().enumerate() {
            if pi < -PROB_TOL {
                return Err(Error::NegativeProbability {
                    state: state as u64,
                    value: pi,
                });
            }
            if pi > ENTROPY_FLOOR {
                h -= pi * pi.ln();
            }
        }
        Ok(h)
    }

    /// States whose probability is within `PROB_TOL` of zero.
    pub fn boundary_states(&self) -> Result<Vec<u64>> {
        Ok(self
            .joint_table()?
            .iter()
            .enumerate()
            .filter(|(_, p)| p.abs() <= PROB_TOL)
            .map(|(s, _)| s as u64)
            .collect())
    }
}
