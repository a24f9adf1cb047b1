//! Laplacian edge coordinates `p_ij` on symmetric matrices.
//!
//! A concentration matrix `K` is the reduced Laplacian of the complete graph
//! on `{0, ..., n}` with edge labels `p_ij`: `p_ij = −κ_ij` off the diagonal
//! and `p_0i` is the `i`-th row sum of `K`.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize};

use crate::covariance::sigma_from_theta;
use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::scalar::{Rational, Scalar};
use crate::trees::{RootedTree, Theta};

/// JSON key for the pair `i < j`: `"01"` style, or `"3,12"` once labels
/// can have two digits.
pub fn pair_key(n: usize, i: usize, j: usize) -> String {
    if n < 10 {
        format!("{i}{j}")
    } else {
        format!("{i},{j}")
    }
}

pub fn parse_pair_key(n: usize, key: &str) -> Option<(usize, usize)> {
    let (i, j) = if n < 10 {
        let mut chars = key.chars();
        let i = chars.next()?.to_digit(10)? as usize;
        let j = chars.next()?.to_digit(10)? as usize;
        if chars.next().is_some() {
            return None;
        }
        (i, j)
    } else {
        let (a, b) = key.split_once(',')?;
        (a.trim().parse().ok()?, b.trim().parse().ok()?)
    };
    (i < j && j <= n).then_some((i, j))
}

/// Index of the pair `i < j` among all pairs of `{0..n}` in lexicographic order.
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    // pairs starting with a < i: Σ_{a<i} (n - a)
    i * n - i * (i.saturating_sub(1)) / 2 + (j - i - 1)
}

/// The vector `(p_ij)` for `0 <= i < j <= n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PCoords<S = f64> {
    n: usize,
    values: Vec<S>,
}

impl<S: Scalar> PCoords<S> {
    pub fn zeros(n: usize) -> Self {
        PCoords {
            n,
            values: vec![S::zero(); n * (n + 1) / 2],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let values = pairs(n).map(|(i, j)| f(i, j)).collect();
        PCoords { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `p_ij` with the arguments in either order; `i != j`.
    pub fn get(&self, i: usize, j: usize) -> &S {
        assert!(i != j && i.max(j) <= self.n, "no coordinate p_{i}{j}");
        &self.values[pair_index(self.n, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: S) {
        assert!(i != j && i.max(j) <= self.n, "no coordinate p_{i}{j}");
        let k = pair_index(self.n, i, j);
        self.values[k] = value;
    }

    /// Values in lexicographic pair order `p01, p02, ..., p0n, p12, ...`.
    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &S)> {
        pairs(self.n).zip(&self.values)
    }

    pub fn map<T: Scalar>(&self, f: impl FnMut(&S) -> T) -> PCoords<T> {
        PCoords {
            n: self.n,
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Divides by the largest-magnitude coordinate (the first one on ties),
    /// giving a canonical representative of the projective point.
    pub fn normalized(&self) -> Option<Self> {
        let mut best: Option<&S> = None;
        for x in &self.values {
            if best.map_or(!x.is_zero(), |b| x.abs() > b.abs()) {
                best = Some(x);
            }
        }
        let pivot = best?.clone();
        Some(self.map(|x| x.clone() / pivot.clone()))
    }

    /// Equality as projective points.
    pub fn projectively_equal(&self, other: &Self, tol: f64) -> bool {
        if self.n != other.n {
            return false;
        }
        match (self.normalized(), other.normalized()) {
            (Some(a), Some(b)) => {
                if S::EXACT {
                    a == b
                } else {
                    a.values.iter().zip(&b.values).all(|(x, y)| (x.clone() - y.clone()).abs().to_f64() <= tol)
                }
            }
            (None, None) => true,
            _ => false,
        }
    }
}

/// All pairs `i < j` of `{0..n}` in lexicographic order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> + Clone {
    (0..=n).flat_map(move |i| (i + 1..=n).map(move |j| (i, j)))
}

/// `p_ij = −κ_ij` for `1 <= i < j <= n` and `p_0i = Σ_j κ_ij`.
pub fn p_from_k<S: Scalar>(k: &SymMatrix<S>) -> PCoords<S> {
    let n = k.dim();
    PCoords::from_fn(n, |i, j| {
        if i == 0 {
            (0..n).fold(S::zero(), |acc, c| acc + k.get(j - 1, c).clone())
        } else {
            -k.get(i - 1, j - 1).clone()
        }
    })
}

/// Reduced Laplacian with edge labels `p`: inverse of [`p_from_k`].
pub fn k_from_p<S: Scalar>(p: &PCoords<S>) -> SymMatrix<S> {
    let n = p.n();
    SymMatrix::from_fn(n, |a, b| {
        let (i, j) = (a + 1, b + 1);
        if i == j {
            (0..=n).filter(|&m| m != i).fold(S::zero(), |acc, m| acc + p.get(i, m).clone())
        } else {
            -p.get(i, j).clone()
        }
    })
}

/// Laurent parametrization `p_ij = t_lca(i,j)/(t_i t_j)`, `p_0i = 1/t_i`.
///
/// `t` is indexed by vertex id (`t[0]` is ignored).
pub fn toric_param_t<S: Scalar>(tree: &RootedTree, t: &[S]) -> Result<PCoords<S>> {
    if t.len() != tree.num_vertices() + 1 {
        return Err(Error::DimensionMismatch {
            expected: tree.num_vertices() + 1,
            found: t.len(),
        });
    }
    if let Some(v) = tree.vertices().find(|&v| t[v].is_zero()) {
        return Err(Error::ZeroParameter(v));
    }
    Ok(PCoords::from_fn(tree.n_leaves(), |i, j| {
        if i == 0 {
            S::one() / t[j].clone()
        } else {
            t[tree.lca_unchecked(i, j)].clone() / (t[i].clone() * t[j].clone())
        }
    }))
}

/// Exact p-coordinates of `adj(Σ_θ) = det(Σ_θ)·Σ_θ⁻¹`, together with
/// `det(Σ_θ)`; the adjugate comes from fraction-free elimination.
pub fn p_adjoint_from_theta(tree: &RootedTree, theta: &Theta<Rational>) -> Result<(PCoords<Rational>, Rational)> {
    let sigma = sigma_from_theta(tree, theta)?;
    let (adj, det) = sigma.adjugate_fraction_free()?;
    Ok((p_from_k(&adj), det))
}

/// p-coordinates of the marginal on leaves `1..n-1`, from those of the full
/// concentration matrix via the Schur complement:
/// `p̃_ij = p_ij + p_in p_jn / κ_nn`, `p̃_0i = p_0i + p_0n p_in / κ_nn`.
pub fn marginalize_last<S: Scalar>(p: &PCoords<S>) -> Result<PCoords<S>> {
    let n = p.n();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two leaves to marginalize".into()));
    }
    let kappa_nn = k_from_p(p).get(n - 1, n - 1).clone();
    if kappa_nn.is_zero() {
        return Err(Error::Singular);
    }
    Ok(PCoords::from_fn(n - 1, |i, j| {
        p.get(i, j).clone() + p.get(i, n).clone() * p.get(j, n).clone() / kappa_nn.clone()
    }))
}

impl Serialize for PCoords<f64> {
    fn serialize<Z: serde::Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        let mut map = serializer.serialize_map(Some(self.values.len()))?;
        for ((i, j), x) in self.iter() {
            map.serialize_entry(&pair_key(self.n, i, j), x)?;
        }
        map.end()
    }
}

/// Exact coordinates serialize as `"p/q"` strings.
impl Serialize for PCoords<Rational> {
    fn serialize<Z: serde::Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        let mut map = serializer.serialize_map(Some(self.values.len()))?;
        for ((i, j), x) in self.iter() {
            map.serialize_entry(&pair_key(self.n, i, j), &x.to_string())?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for PCoords<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let map = BTreeMap::<String, f64>::deserialize(deserializer)?;
        let n = (1..=64)
            .find(|n| n * (n + 1) / 2 == map.len())
            .ok_or_else(|| D::Error::custom("coordinate count is not n(n+1)/2"))?;
        let mut p = PCoords::zeros(n);
        for (key, value) in &map {
            let (i, j) = parse_pair_key(n, key).ok_or_else(|| D::Error::custom(format!("bad pair key {key:?}")))?;
            p.set(i, j, *value);
        }
        Ok(p)
    }
}
