//! Small dense linear algebra: LU determinants and inverses, principal
//! submatrices, Schur complements, principal-minor sums and P₀ tests.
//!
//! Everything here is sized for desk-scale problems (p up to about 20).
//! Index sets are 0-based.

use std::fmt;
use std::ops::{Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};

/// Default cap on dimensions for routines that enumerate all 2^p subsets.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Relative pivot threshold below which a matrix is treated as singular.
pub const SINGULAR_RELATIVE_TOL: f64 = 1e-12;

/// Default tolerance for the sign test on principal minors.
pub const DEFAULT_P0_TOL: f64 = 1e-10;

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major storage, rejecting non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. All rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(n, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Maximum absolute entrywise difference; infinite if shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    /// Rows `rows` and columns `cols` of `self`, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        assert!(self.rows == rhs.rows && self.cols == rhs.cols, "shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.to_rows())
    }
}

/// Sorted set of distinct 0-based indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Validates that every index is below `dim` and none repeats.
    pub fn new<I: IntoIterator<Item = usize>>(indices: I, dim: usize) -> Result<Self> {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        for w in v.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateIndex(w[0]));
            }
        }
        if let Some(&last) = v.last() {
            if last >= dim {
                return Err(Error::IndexOutOfRange { index: last, dim });
            }
        }
        Ok(Self(v))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn full(dim: usize) -> Self {
        Self((0..dim).collect())
    }

    /// Bit `i` of `mask` set means index `i` is in the set.
    pub fn from_mask(mask: u64) -> Self {
        Self((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0, |m, &i| m | 1 << i)
    }

    pub fn complement(&self, dim: usize) -> Self {
        Self((0..dim).filter(|i| !self.contains(*i)).collect())
    }

    pub fn union(&self, other: &IndexSet) -> Self {
        let mut v: Vec<usize> = self.0.iter().chain(&other.0).copied().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|&i| !other.contains(i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Largest index plus one, or zero for the empty set.
    pub fn bound(&self) -> usize {
        self.0.last().map_or(0, |&i| i + 1)
    }
}

/// Displays with 1-based labels, e.g. `{1,3}`.
impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

/// LU factorization with partial pivoting, `P·A = L·U` packed in one buffer.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    min_pivot: f64,
    scale: f64,
}

impl Lu {
    pub fn new(m: &Matrix) -> Self {
        let n = m.rows;
        assert!(m.is_square(), "LU of a non-square matrix");
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            min_pivot = min_pivot.min(pmax);
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Self {
            n,
            lu,
            perm,
            sign,
            min_pivot,
            scale: m.max_abs(),
        }
    }

    pub fn determinant(&self) -> f64 {
        (0..self.n).fold(self.sign, |d, k| d * self.lu[k * self.n + k])
    }

    pub fn is_singular(&self) -> bool {
        self.n > 0 && (self.scale == 0.0 || self.min_pivot < SINGULAR_RELATIVE_TOL * self.scale)
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        b.copy_from_slice(&x);
    }

    pub fn inverse(&self) -> Result<Matrix> {
        if self.is_singular() {
            return Err(Error::SingularMatrix);
        }
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

/// Determinant by LU with partial pivoting. The 0×0 determinant is 1.
///
/// Panics if `m` is not square.
pub fn determinant(m: &Matrix) -> f64 {
    Lu::new(m).determinant()
}

/// Inverse by LU. Fails when a pivot is below `1e-12 · max|m_ij|`.
pub fn inverse(m: &Matrix) -> Result<Matrix> {
    m.require_square()?;
    Lu::new(m).inverse()
}

pub fn principal_submatrix(m: &Matrix, s: &IndexSet) -> Result<Matrix> {
    let n = m.require_square()?;
    if s.bound() > n {
        return Err(Error::IndexOutOfRange {
            index: s.bound() - 1,
            dim: n,
        });
    }
    Ok(m.select(s.as_slice(), s.as_slice()))
}

/// `m[keep] − m[keep,elim] · m[elim]⁻¹ · m[elim,keep]`.
pub fn schur_complement(m: &Matrix, keep: &IndexSet, eliminate: &IndexSet) -> Result<Matrix> {
    let n = m.require_square()?;
    for s in [keep, eliminate] {
        if s.bound() > n {
            return Err(Error::IndexOutOfRange {
                index: s.bound() - 1,
                dim: n,
            });
        }
    }
    if !keep.is_disjoint(eliminate) {
        return Err(Error::DuplicateIndex(
            keep.iter().find(|&i| eliminate.contains(i)).unwrap_or_default(),
        ));
    }
    let k = keep.as_slice();
    let e = eliminate.as_slice();
    let base = m.select(k, k);
    if e.is_empty() {
        return Ok(base);
    }
    let block_inv = Lu::new(&m.select(e, e)).inverse().map_err(|_| Error::SingularBlock)?;
    let correction = &(&m.select(k, e) * &block_inv) * &m.select(e, k);
    Ok(&base - &correction)
}

/// Subsets of `{0..n}` ordered by cardinality, lexicographic within each size.
pub fn subsets_by_cardinality(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..=n).flat_map(move |k| Combinations::new(n, k))
}

struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap || n >= 64 {
        Err(Error::DimensionTooLarge { p: n, cap })
    } else {
        Ok(())
    }
}

/// Sum of all principal minors of `m`, including the empty minor 1.
pub fn sum_principal_minors(m: &Matrix) -> Result<f64> {
    sum_principal_minors_capped(m, DEFAULT_ENUMERATION_CAP)
}

pub fn sum_principal_minors_capped(m: &Matrix, cap: usize) -> Result<f64> {
    let n = m.require_square()?;
    check_cap(n, cap)?;
    Ok((0u64..1 << n)
        .map(|mask| {
            let idx = IndexSet::from_mask(mask);
            determinant(&m.select(idx.as_slice(), idx.as_slice()))
        })
        .sum())
}

/// Outcome of a P₀ test.
#[derive(Clone, Debug, PartialEq)]
pub enum P0Verdict {
    Holds,
    /// First subset (by cardinality, then lexicographic) with a negative minor.
    Violated {
        witness: IndexSet,
        minor: f64,
    },
}

impl P0Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, P0Verdict::Holds)
    }

    pub fn witness(&self) -> Option<&IndexSet> {
        match self {
            P0Verdict::Holds => None,
            P0Verdict::Violated { witness, .. } => Some(witness),
        }
    }
}

/// True iff every principal minor is at least `-DEFAULT_P0_TOL`.
pub fn is_p0_matrix(m: &Matrix) -> Result<P0Verdict> {
    is_p0_matrix_with(m, DEFAULT_P0_TOL, DEFAULT_ENUMERATION_CAP)
}

pub fn is_p0_matrix_with(m: &Matrix, tol: f64, cap: usize) -> Result<P0Verdict> {
    let n = m.require_square()?;
    check_cap(n, cap)?;
    for s in subsets_by_cardinality(n).skip(1) {
        let minor = determinant(&m.select(&s, &s));
        if minor < -tol {
            return Ok(P0Verdict::Violated {
                witness: IndexSet(s),
                minor,
            });
        }
    }
    Ok(P0Verdict::Holds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    /// Cofactor expansion along the first row.
    fn laplace_det(a: &Matrix) -> f64 {
        let n = a.rows();
        if n == 0 {
            return 1.0;
        }
        (0..n)
            .map(|j| {
                let rest: Vec<usize> = (1..n).collect();
                let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, j)] * laplace_det(&a.select(&rest, &cols))
            })
            .sum()
    }

    fn arb_matrix(max_n: usize) -> impl Strategy<Value = Matrix> {
        (1..=max_n).prop_flat_map(|n| {
            prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |d| Matrix::from_row_major(n, n, d).unwrap())
        })
    }

    /// Diagonally dominant, hence well conditioned.
    fn arb_well_conditioned(max_n: usize) -> impl Strategy<Value = Matrix> {
        arb_matrix(max_n).prop_map(|mut a| {
            let n = a.rows();
            for i in 0..n {
                a[(i, i)] += if a[(i, i)] >= 0.0 { n as f64 } else { -(n as f64) };
            }
            a
        })
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(determinant(&Matrix::zeros(0, 0)), 1.0);
        let a = m(&[&[0.5, 0.2], &[-0.2, 0.5]]);
        assert!((determinant(&a) - 0.29).abs() < 1e-15);
        assert_eq!(determinant(&Matrix::identity(5)), 1.0);
    }

    #[test]
    fn determinant_of_singular_is_zero() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(determinant(&a).abs() < 1e-15);
        assert!(determinant(&Matrix::zeros(3, 3)) == 0.0);
    }

    #[test]
    fn inverse_examples() {
        let inv = inverse(&m(&[&[0.5]])).unwrap();
        assert!((inv[(0, 0)] - 2.0).abs() < 1e-15);

        let inv = inverse(&Matrix::from_diagonal(&[0.5, 0.25])).unwrap();
        assert!(inv.max_abs_diff(&Matrix::from_diagonal(&[2.0, 4.0])) < 1e-15);

        let inv = inverse(&m(&[&[0.5, 0.2], &[-0.2, 0.5]])).unwrap();
        let s = 1.0 / 0.29;
        let expected = m(&[&[0.5 * s, -0.2 * s], &[0.2 * s, 0.5 * s]]);
        assert!(inv.max_abs_diff(&expected) < 1e-14);

        assert_eq!(inverse(&Matrix::zeros(0, 0)).unwrap().rows(), 0);
    }

    #[test]
    fn inverse_rejects_singular() {
        assert!(matches!(
            inverse(&m(&[&[1.0, 2.0], &[2.0, 4.0]])),
            Err(Error::SingularMatrix)
        ));
        assert!(matches!(inverse(&Matrix::zeros(2, 2)), Err(Error::SingularMatrix)));
        // scale-invariant threshold
        let tiny = m(&[&[1e-20, 0.0], &[0.0, 1e-20]]);
        assert!(inverse(&tiny).is_ok());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            Matrix::from_rows(&[[1.0, f64::NAN]]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn principal_submatrix_examples() {
        let a = m(&[&[1., 2., 3.], &[4., 5., 6.], &[7., 8., 9.]]);
        assert_eq!(principal_submatrix(&a, &IndexSet::full(3)).unwrap(), a);
        assert_eq!(principal_submatrix(&a, &IndexSet::empty()).unwrap().rows(), 0);
        let s = IndexSet::new([0, 2], 3).unwrap();
        assert_eq!(principal_submatrix(&a, &s).unwrap(), m(&[&[1., 3.], &[7., 9.]]));
        let bad = IndexSet::new([0, 3], 4).unwrap();
        assert!(matches!(
            principal_submatrix(&a, &bad),
            Err(Error::IndexOutOfRange { index: 3, dim: 3 })
        ));
    }

    #[test]
    fn index_set_validation() {
        assert!(matches!(IndexSet::new([1, 1], 3), Err(Error::DuplicateIndex(1))));
        let s = IndexSet::new([2, 0], 3).unwrap();
        assert_eq!(s.as_slice(), &[0, 2]);
        assert_eq!(s.complement(3).as_slice(), &[1]);
        assert_eq!(s.mask(), 0b101);
        assert_eq!(IndexSet::from_mask(0b101), s);
        assert_eq!(s.to_string(), "{1,3}");
    }

    #[test]
    fn schur_examples() {
        let a = m(&[&[0.5, 0.2], &[-0.2, 0.5]]);
        let keep = IndexSet::new([0], 2).unwrap();
        let elim = IndexSet::new([1], 2).unwrap();
        let s = schur_complement(&a, &keep, &elim).unwrap();
        assert!((s[(0, 0)] - 0.58).abs() < 1e-15);

        let block = m(&[&[2., 1., 0.], &[1., 3., 0.], &[0., 0., 4.]]);
        let keep = IndexSet::new([0, 1], 3).unwrap();
        let elim = IndexSet::new([2], 3).unwrap();
        assert_eq!(
            schur_complement(&block, &keep, &elim).unwrap(),
            principal_submatrix(&block, &keep).unwrap()
        );

        let sing = m(&[&[1., 1.], &[1., 0.]]);
        assert!(matches!(
            schur_complement(&sing, &IndexSet::new([0], 2).unwrap(), &IndexSet::new([1], 2).unwrap()),
            Err(Error::SingularBlock)
        ));
    }

    #[test]
    fn sum_principal_minors_examples() {
        // Λ = [[2]]: (2 - 1) + 1 = 2
        let lm1 = m(&[&[1.0]]);
        assert!((sum_principal_minors(&lm1).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(sum_principal_minors(&Matrix::zeros(3, 3)).unwrap(), 1.0);
        assert!(matches!(
            sum_principal_minors_capped(&Matrix::zeros(4, 4), 3),
            Err(Error::DimensionTooLarge { p: 4, cap: 3 })
        ));
    }

    #[test]
    fn p0_examples() {
        assert!(is_p0_matrix(&Matrix::identity(4)).unwrap().holds());
        let v = is_p0_matrix(&m(&[&[-1.0]])).unwrap();
        assert_eq!(v.witness(), Some(&IndexSet::new([0], 1).unwrap()));
        // 1x1 minors fine, full determinant negative
        let v = is_p0_matrix(&m(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap();
        assert_eq!(v.witness(), Some(&IndexSet::full(2)));
        // lexicographic witness among singletons: {2} before {3}
        let d = Matrix::from_diagonal(&[1.0, -1.0, -1.0]);
        assert_eq!(
            is_p0_matrix(&d).unwrap().witness(),
            Some(&IndexSet::new([1], 3).unwrap())
        );
    }

    #[test]
    fn subset_order() {
        let all: Vec<Vec<usize>> = subsets_by_cardinality(3).collect();
        assert_eq!(
            all,
            vec![
                vec![],
                vec![0],
                vec![1],
                vec![2],
                vec![0, 1],
                vec![0, 2],
                vec![1, 2],
                vec![0, 1, 2]
            ]
        );
        assert_eq!(subsets_by_cardinality(10).count(), 1024);
    }

    proptest! {
        #[test]
        fn lu_matches_cofactor_expansion(a in arb_matrix(6)) {
            let d = determinant(&a);
            let l = laplace_det(&a);
            prop_assert!((d - l).abs() <= 1e-12 * (1.0 + l.abs()));
        }

        #[test]
        fn full_principal_submatrix_keeps_determinant(a in arb_matrix(7)) {
            let full = principal_submatrix(&a, &IndexSet::full(a.rows())).unwrap();
            prop_assert_eq!(determinant(&full), determinant(&a));
        }

        #[test]
        fn inverse_round_trip(a in arb_well_conditioned(10)) {
            let inv = inverse(&a).unwrap();
            let n = a.rows();
            prop_assert!((&a * &inv).max_abs_diff(&Matrix::identity(n)) < 1e-10);
            let prod = determinant(&inv) * determinant(&a);
            prop_assert!((prod - 1.0).abs() < 1e-8);
        }

        #[test]
        fn schur_determinant_identity(a in arb_well_conditioned(10), mask in any::<u64>()) {
            let n = a.rows();
            let elim = IndexSet::from_mask(mask & ((1u64 << n) - 1));
            let keep = elim.complement(n);
            let s = schur_complement(&a, &keep, &elim).unwrap();
            let lhs = determinant(&a);
            let rhs = determinant(&principal_submatrix(&a, &elim).unwrap()) * determinant(&s);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1e-300));
        }

        #[test]
        fn minor_sum_equals_shifted_determinant(a in arb_matrix(10)) {
            let n = a.rows();
            let shifted = &a - &Matrix::identity(n);
            let lhs = sum_principal_minors(&shifted).unwrap();
            let rhs = determinant(&a);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }

        #[test]
        fn p0_agrees_with_naive_enumeration(a in arb_matrix(8)) {
            let n = a.rows();
            let naive = (0u64..1 << n).all(|mask| {
                let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                laplace_det(&a.select(&s, &s)) >= -DEFAULT_P0_TOL
            });
            prop_assert_eq!(is_p0_matrix(&a).unwrap().holds(), naive);
        }
    }
}
