//! Dense symmetric matrices over a [`Scalar`] backend.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

/// Symmetric `n x n` matrix stored as its upper triangle.
///
/// Rows and columns are 0-based; in tree contexts row `i - 1` belongs to
/// leaf `i`.
#[derive(Clone, PartialEq)]
pub struct SymMatrix<S = f64> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> SymMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![S::zero(); n * (n + 1) / 2],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    /// Builds the matrix from `f(i, j)` evaluated for `i <= j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                data.push(f(i, j));
            }
        }
        SymMatrix { n, data }
    }

    /// Accepts a square array; off-diagonal pairs must agree exactly in the
    /// exact backend and to `1e-12` relative in floating point.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
        }
        let scale = rows
            .iter()
            .flatten()
            .map(|x| x.abs().to_f64())
            .fold(0.0, f64::max);
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&rows[i][j], &rows[j][i]);
                let ok = if S::EXACT {
                    a == b
                } else {
                    (a.clone() - b.clone()).abs().to_f64() <= 1e-12 * scale.max(1.0)
                };
                if !ok {
                    return Err(Error::NotSymmetric(i, j));
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j].clone()))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + j
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: S) {
        let k = self.idx(i, j);
        self.data[k] = value;
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).clone()).collect())
            .collect()
    }

    pub fn map<T: Scalar>(&self, f: impl FnMut(&S) -> T) -> SymMatrix<T> {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a.clone() + b.clone())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a.clone() - b.clone())
    }

    pub fn scale(&self, factor: &S) -> Self {
        self.map(|x| x.clone() * factor.clone())
    }

    fn zip(&self, other: &Self, f: impl Fn(&S, &S) -> S) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        SymMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect(),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .map(Signed::abs)
            .fold(S::zero(), |m, x| if x > m { x } else { m })
    }

    /// `trace(self * other)` for symmetric arguments.
    pub fn trace_product(&self, other: &Self) -> S {
        let mut acc = S::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                acc = acc + self.get(i, j).clone() * other.get(i, j).clone();
            }
        }
        acc
    }

    /// `self * middle * self`, which is symmetric.
    pub fn sandwich(&self, middle: &Self) -> Self {
        let n = self.n;
        let mut left = vec![vec![S::zero(); n]; n];
        for (i, row) in left.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                for k in 0..n {
                    *cell = cell.clone() + self.get(i, k).clone() * middle.get(k, j).clone();
                }
            }
        }
        Self::from_fn(n, |i, j| {
            (0..n).fold(S::zero(), |acc, k| acc + left[i][k].clone() * self.get(k, j).clone())
        })
    }

    /// Dense product, generally not symmetric.
    pub fn matmul(&self, other: &Self) -> Vec<Vec<S>> {
        let n = self.n;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).fold(S::zero(), |acc, k| acc + self.get(i, k).clone() * other.get(k, j).clone()))
                    .collect()
            })
            .collect()
    }

    /// Principal submatrix on the given 0-based indices.
    pub fn principal(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), |a, b| self.get(idx[a], idx[b]).clone())
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> S {
        let mut a = self.to_rows();
        let n = self.n;
        let mut det = S::one();
        for k in 0..n {
            let Some(p) = pivot_row(&a, k) else {
                return S::zero();
            };
            if p != k {
                a.swap(p, k);
                det = -det;
            }
            let pivot = a[k][k].clone();
            det = det * pivot.clone();
            for i in k + 1..n {
                let factor = a[i][k].clone() / pivot.clone();
                if factor.is_zero() {
                    continue;
                }
                for j in k..n {
                    let delta = factor.clone() * a[k][j].clone();
                    a[i][j] = a[i][j].clone() - delta;
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let mut a = self.to_rows();
        let mut inv: Vec<Vec<S>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { S::one() } else { S::zero() }).collect())
            .collect();
        for k in 0..n {
            let p = pivot_row(&a, k).ok_or(Error::Singular)?;
            a.swap(p, k);
            inv.swap(p, k);
            let pivot = a[k][k].clone();
            for j in 0..n {
                a[k][j] = a[k][j].clone() / pivot.clone();
                inv[k][j] = inv[k][j].clone() / pivot.clone();
            }
            for i in 0..n {
                if i == k || a[i][k].is_zero() {
                    continue;
                }
                let factor = a[i][k].clone();
                for j in 0..n {
                    let da = factor.clone() * a[k][j].clone();
                    a[i][j] = a[i][j].clone() - da;
                    let di = factor.clone() * inv[k][j].clone();
                    inv[i][j] = inv[i][j].clone() - di;
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| inv[i][j].clone()))
    }

    /// Pivots of the symmetric `LDLᵀ` elimination without pivoting, stopping
    /// at the first pivot that is not larger than `threshold`.
    pub fn ldl_pivots(&self, threshold: &S) -> (Vec<S>, bool) {
        let n = self.n;
        let mut a = self.to_rows();
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let d = a[k][k].clone();
            if d <= *threshold {
                pivots.push(d);
                return (pivots, false);
            }
            for i in k + 1..n {
                let factor = a[i][k].clone() / d.clone();
                for j in k + 1..n {
                    let delta = factor.clone() * a[k][j].clone();
                    a[i][j] = a[i][j].clone() - delta;
                }
            }
            pivots.push(d);
        }
        (pivots, true)
    }

    /// True iff every `LDLᵀ` pivot exceeds `tol` times the largest absolute
    /// entry. With `tol = 0` in the exact backend this is exact positive
    /// definiteness.
    pub fn is_positive_definite(&self, tol: &S) -> bool {
        let scale = self.max_abs();
        if scale.is_zero() {
            return false;
        }
        self.ldl_pivots(&(tol.clone() * scale)).1
    }
}

fn pivot_row<S: Scalar>(a: &[Vec<S>], k: usize) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, row) in a.iter().enumerate().skip(k) {
        let v = row[k].abs();
        if v.is_zero() {
            continue;
        }
        if best.as_ref().map_or(true, |(_, b)| v > *b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

impl SymMatrix<f64> {
    /// Lower Cholesky factor, row-major dense.
    pub fn cholesky(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.n;
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = *self.get(i, j);
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Ok(l)
    }

    /// `(log det, inverse)` of a positive definite matrix via Cholesky.
    pub fn log_det_and_inverse(&self) -> Result<(f64, Self)> {
        let n = self.n;
        let l = self.cholesky()?;
        let log_det = 2.0 * (0..n).map(|i| l[i][i].ln()).sum::<f64>();
        // invert L by forward substitution, then Σ⁻¹ = L⁻ᵀ L⁻¹
        let mut linv = vec![vec![0.0; n]; n];
        for i in 0..n {
            linv[i][i] = 1.0 / l[i][i];
            for j in 0..i {
                let mut s = 0.0;
                for k in j..i {
                    s -= l[i][k] * linv[k][j];
                }
                linv[i][j] = s / l[i][i];
            }
        }
        let inv = Self::from_fn(n, |i, j| (j.max(i)..n).map(|k| linv[k][i] * linv[k][j]).sum());
        Ok((log_det, inv))
    }

    pub fn log_det(&self) -> Result<f64> {
        let l = self.cholesky()?;
        Ok(2.0 * l.iter().enumerate().map(|(i, r)| r[i].ln()).sum::<f64>())
    }

    pub fn to_rational(&self) -> Option<SymMatrix<Rational>> {
        let data = self
            .data
            .iter()
            .map(|&x| Rational::from_float(x))
            .collect::<Option<Vec<_>>>()?;
        Some(SymMatrix { n: self.n, data })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.to_rows() {
            let cells: Vec<String> = row.iter().map(|x| format_float(*x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| Error::Parse {
                        pos: line_no + 1,
                        msg: format!("invalid number {:?}", c.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

impl SymMatrix<Rational> {
    /// `(adj(A), det(A))` by fraction-free Gauss-Jordan elimination over the
    /// integers after clearing denominators.
    pub fn adjugate_fraction_free(&self) -> Result<(Self, Rational)> {
        let n = self.n;
        let lcm = self
            .data
            .iter()
            .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
        let scaled: Vec<Vec<BigInt>> = self
            .to_rows()
            .iter()
            .map(|r| r.iter().map(|x| (x * Rational::from_integer(lcm.clone())).to_integer()).collect())
            .collect();
        let mut m: Vec<Vec<BigInt>> = scaled
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.extend((0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }));
                row
            })
            .collect();
        let mut prev = BigInt::one();
        let mut sign = BigInt::one();
        for k in 0..n {
            let p = (k..n).find(|&i| !m[i][k].is_zero()).ok_or(Error::Singular)?;
            if p != k {
                m.swap(p, k);
                sign = -sign;
            }
            for i in 0..n {
                if i == k {
                    continue;
                }
                for j in 0..2 * n {
                    if j == k {
                        continue;
                    }
                    let num = &m[k][k] * &m[i][j] - &m[i][k] * &m[k][j];
                    let (q, r) = num.div_rem(&prev);
                    debug_assert!(r.is_zero(), "inexact fraction-free step");
                    m[i][j] = q;
                }
                m[i][k] = BigInt::zero();
            }
            // earlier pivot rows keep the running leading minor on the diagonal
            for i in 0..k {
                m[i][i] = m[k][k].clone();
            }
            prev = m[k][k].clone();
        }
        // [A' | I] became [d I | d A'^-1] with d = det of the row-permuted A'
        let det_scaled = &sign * &prev;
        let denom_adj = Rational::from_integer(num_traits::pow(lcm.clone(), n.saturating_sub(1)));
        let denom_det = Rational::from_integer(num_traits::pow(lcm, n));
        let adj = Self::from_fn(n, |i, j| {
            Rational::from_integer(&sign * &m[i][n + j]) / denom_adj.clone()
        });
        Ok((adj, Rational::from_integer(det_scaled) / denom_det))
    }
}

/// Shortest decimal text that reads back to the same `f64` (at most 17
/// significant digits), so output is reproducible byte for byte.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{x:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

impl<S: fmt::Debug> fmt::Debug for SymMatrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.n;
        let at = |i: usize, j: usize| {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            &self.data[i * n - i * (i + 1) / 2 + j]
        };
        f.debug_list()
            .entries((0..n).map(|i| (0..n).map(|j| at(i, j)).collect::<Vec<_>>()))
            .finish()
    }
}

impl Serialize for SymMatrix<f64> {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymMatrix<f64> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
