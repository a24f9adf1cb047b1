//! The model in covariance coordinates: `Σ_θ`, membership in the simplicial
//! cone, the Farris transform, and sampling through the structural equations.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::pcoords::{pair_key, parse_pair_key};
use crate::scalar::Scalar;
use crate::trees::{RootedTree, Theta};

/// Relative tolerance for the equal-entries pattern of `L_T` in floating point.
pub const TREE_SPACE_RTOL: f64 = 1e-8;

/// Root-to-vertex path sums `t_v = Σ_{u ≤ v} θ_u`, indexed by vertex (`t_0 = 0`).
pub fn path_sums<S: Scalar>(tree: &RootedTree, theta: &Theta<S>) -> Result<Vec<S>> {
    theta.check_len(tree)?;
    let m = tree.num_vertices();
    let mut t = vec![S::zero(); m + 1];
    // parents carry larger ids, so a descending sweep visits them first
    for v in (1..=m).rev() {
        t[v] = t[tree.parent(v)].clone() + theta[v].clone();
    }
    Ok(t)
}

/// `Σ_θ` with `σ_ij = Σ_{v ≤ lca(i,j)} θ_v`.
pub fn sigma_from_theta<S: Scalar>(tree: &RootedTree, theta: &Theta<S>) -> Result<SymMatrix<S>> {
    let t = path_sums(tree, theta)?;
    Ok(sigma_from_path_sums(tree, &t))
}

/// `σ_ij = t_{lca(i,j)}` for path sums indexed by vertex.
pub fn sigma_from_path_sums<S: Scalar>(tree: &RootedTree, t: &[S]) -> SymMatrix<S> {
    SymMatrix::from_fn(tree.n_leaves(), |i, j| t[tree.lca_unchecked(i + 1, j + 1)].clone())
}

/// Rank-one basis matrix `G_v = g_v g_vᵀ` where `g_v` indicates `de(v)`.
pub fn basis_matrix<S: Scalar>(tree: &RootedTree, v: usize) -> Result<SymMatrix<S>> {
    if v == 0 || !tree.contains(v) {
        return Err(Error::UnknownVertex(v));
    }
    let mask = tree.clade_mask(v);
    let inside = |i: usize| mask >> i & 1 == 1;
    Ok(SymMatrix::from_fn(tree.n_leaves(), |i, j| {
        if inside(i) && inside(j) {
            S::one()
        } else {
            S::zero()
        }
    }))
}

/// Leaf pairs `(i, j)` with `i <= j` grouped by `lca(i, j)`, indexed by vertex.
pub fn pairs_by_lca(tree: &RootedTree) -> Vec<Vec<(usize, usize)>> {
    let mut groups = vec![Vec::new(); tree.num_vertices() + 1];
    for i in 1..=tree.n_leaves() {
        for j in i..=tree.n_leaves() {
            groups[tree.lca_unchecked(i, j)].push((i, j));
        }
    }
    groups
}

/// Recovers `θ` from a matrix in `L_T`.
///
/// Entries sharing an lca must agree exactly (exact backend) or within
/// [`TREE_SPACE_RTOL`] of the largest entry (floats); otherwise the most
/// violated pair of entries is reported. Float path sums are group means.
pub fn theta_from_sigma<S: Scalar>(tree: &RootedTree, sigma: &SymMatrix<S>) -> Result<Theta<S>> {
    let n = tree.n_leaves();
    if sigma.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sigma.dim(),
        });
    }
    let entry = |(i, j): (usize, usize)| sigma.get(i - 1, j - 1).clone();
    let groups = pairs_by_lca(tree);
    let mut t = vec![S::zero(); tree.num_vertices() + 1];
    let mut worst: Option<((usize, usize), (usize, usize), S)> = None;
    for (v, group) in groups.iter().enumerate().skip(1) {
        let (mut lo, mut hi) = (group[0], group[0]);
        let mut sum = S::zero();
        for &p in group {
            let x = entry(p);
            if x < entry(lo) {
                lo = p;
            }
            if x > entry(hi) {
                hi = p;
            }
            sum = sum + x;
        }
        let spread = entry(hi) - entry(lo);
        if worst.as_ref().map_or(true, |w| spread > w.2) {
            worst = Some((lo, hi, spread));
        }
        t[v] = if S::EXACT {
            entry(group[0])
        } else {
            sum / S::from_i64(group.len() as i64)
        };
    }
    if let Some((a, b, spread)) = worst {
        let violated = if S::EXACT {
            !spread.is_zero()
        } else {
            spread.to_f64() > TREE_SPACE_RTOL * sigma.max_abs().to_f64()
        };
        if violated {
            return Err(Error::NotInTreeSpace {
                pair_a: a,
                pair_b: b,
                deviation: spread.to_f64(),
            });
        }
    }
    Ok(Theta::new(
        tree.vertices()
            .map(|v| t[v].clone() - t[tree.parent(v)].clone())
            .collect(),
    ))
}

/// Position of a matrix relative to the closed cone `L_{T,≥}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConeMembership {
    Inside,
    /// On the face where exactly the listed coordinates vanish.
    Boundary { active: Vec<usize> },
    /// Negative coordinates, or `Σ ∉ L_T` (then `negative` is empty).
    Outside { negative: Vec<usize>, reason: String },
}

pub fn cone_membership<S: Scalar>(tree: &RootedTree, sigma: &SymMatrix<S>, tol: &S) -> ConeMembership {
    let theta = match theta_from_sigma(tree, sigma) {
        Ok(theta) => theta,
        Err(e) => {
            return ConeMembership::Outside {
                negative: Vec::new(),
                reason: e.to_string(),
            }
        }
    };
    let negative: Vec<usize> = theta.iter().filter(|(_, x)| **x < -tol.clone()).map(|(v, _)| v).collect();
    if !negative.is_empty() {
        return ConeMembership::Outside {
            reason: format!("negative edge weights at vertices {negative:?}"),
            negative,
        };
    }
    let active: Vec<usize> = theta.iter().filter(|(_, x)| x.abs() <= *tol).map(|(v, _)| v).collect();
    if active.is_empty() {
        ConeMembership::Inside
    } else {
        ConeMembership::Boundary { active }
    }
}

/// True iff every Cholesky (`LDLᵀ`) pivot exceeds `tol` times the largest
/// absolute entry.
pub fn is_positive_definite<S: Scalar>(sigma: &SymMatrix<S>, tol: &S) -> bool {
    sigma.is_positive_definite(tol)
}

/// Dissimilarities `d_ij` on `{0, ..., n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeMetric<S = f64> {
    d: SymMatrix<S>,
}

impl<S: Scalar> TreeMetric<S> {
    /// Builds from `f(i, j)` for `0 <= i < j <= n`; the diagonal is zero.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        TreeMetric {
            d: SymMatrix::from_fn(n + 1, |i, j| if i == j { S::zero() } else { f(i, j) }),
        }
    }

    /// Path-length metric of `θ` on the unrooted tree.
    pub fn from_theta(tree: &RootedTree, theta: &Theta<S>) -> Result<Self> {
        theta.check_len(tree)?;
        Ok(Self::from_fn(tree.n_leaves(), |i, j| {
            tree.path_edges(i, j)
                .into_iter()
                .fold(S::zero(), |acc, v| acc + theta[v].clone())
        }))
    }

    /// Number of non-root leaves `n`; points are `0..=n`.
    pub fn n(&self) -> usize {
        self.d.dim() - 1
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        self.d.get(i, j)
    }

    /// Symmetric, zero diagonal, nonnegative and satisfying the triangle
    /// inequality within `tol`.
    pub fn is_metric(&self, tol: &S) -> bool {
        let k = self.n() + 1;
        (0..k).all(|i| {
            self.get(i, i).is_zero()
                && (0..k).all(|j| {
                    *self.get(i, j) >= -tol.clone()
                        && (0..k).all(|m| {
                            self.get(i, j).clone() <= self.get(i, m).clone() + self.get(m, j).clone() + tol.clone()
                        })
                })
        })
    }
}

/// `σ_ij = ½(d_0i + d_0j − d_ij)`.
pub fn farris_forward<S: Scalar>(d: &TreeMetric<S>) -> SymMatrix<S> {
    SymMatrix::from_fn(d.n(), |a, b| {
        let (i, j) = (a + 1, b + 1);
        (d.get(0, i).clone() + d.get(0, j).clone() - d.get(i, j).clone()) * S::half()
    })
}

/// `d_0i = σ_ii`, `d_ij = σ_ii + σ_jj − 2σ_ij`.
pub fn farris_inverse<S: Scalar>(sigma: &SymMatrix<S>) -> TreeMetric<S> {
    let diag = |i: usize| sigma.get(i - 1, i - 1).clone();
    TreeMetric::from_fn(sigma.dim(), |i, j| {
        if i == 0 {
            diag(j)
        } else {
            diag(i) + diag(j) - sigma.get(i - 1, j - 1).clone() * S::from_i64(2)
        }
    })
}

/// `σ_ij ≥ min{σ_ik, σ_jk} ≥ 0` for all triples (indices may repeat), with
/// slack `tol` times the largest absolute entry.
pub fn is_ultrametric<S: Scalar>(sigma: &SymMatrix<S>, tol: &S) -> bool {
    let n = sigma.dim();
    let slack = tol.clone() * sigma.max_abs();
    for i in 0..n {
        for j in 0..n {
            let sij = sigma.get(i, j).clone();
            if sij < -slack.clone() {
                return false;
            }
            for k in 0..n {
                let (a, b) = (sigma.get(i, k), sigma.get(j, k));
                let m = if a < b { a } else { b };
                if sij.clone() + slack.clone() < *m {
                    return false;
                }
            }
        }
    }
    true
}

/// Buneman's four-point condition over all quadruples (repeats allowed):
/// the largest of the three pairing sums is attained at least twice.
pub fn four_point_check<S: Scalar>(d: &TreeMetric<S>, tol: &S) -> bool {
    let k = d.n() + 1;
    let slack = tol.clone() * d.d.max_abs();
    for i in 0..k {
        for j in i..k {
            for a in j..k {
                for b in a..k {
                    let sums = [
                        d.get(i, j).clone() + d.get(a, b).clone(),
                        d.get(i, a).clone() + d.get(j, b).clone(),
                        d.get(i, b).clone() + d.get(j, a).clone(),
                    ];
                    for x in 0..3 {
                        let others = [&sums[(x + 1) % 3], &sums[(x + 2) % 3]];
                        let max = if others[0] > others[1] { others[0] } else { others[1] };
                        if sums[x] > max.clone() + slack.clone() {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

impl Serialize for TreeMetric<f64> {
    fn serialize<Z: serde::Serializer>(&self, serializer: Z) -> std::result::Result<Z::Ok, Z::Error> {
        use serde::ser::SerializeMap;
        let n = self.n();
        let mut map = serializer.serialize_map(Some(n * (n + 1) / 2))?;
        for i in 0..=n {
            for j in i + 1..=n {
                map.serialize_entry(&pair_key(n, i, j), self.get(i, j))?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for TreeMetric<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let map = std::collections::BTreeMap::<String, f64>::deserialize(deserializer)?;
        // k points have k(k-1)/2 pairs
        let k = (1..=64).find(|k| k * (k - 1) / 2 == map.len()).ok_or_else(|| D::Error::custom("pair count is not triangular"))?;
        let n = k - 1;
        let mut d = SymMatrix::zeros(k);
        for (key, value) in &map {
            let (i, j) = parse_pair_key(n, key).ok_or_else(|| D::Error::custom(format!("bad pair key {key:?}")))?;
            d.set(i, j, *value);
        }
        Ok(TreeMetric { d })
    }
}

/// Draws `samples` leaf vectors from the structural equations
/// `Y_v = Y_parent(v) + ε_v`, `ε_v ~ N(0, θ_v)`, and returns `S = X Xᵀ / N`.
///
/// One standard normal is consumed per vertex per sample in a fixed order,
/// so the result depends only on the generator state. With `center` the
/// sample mean is subtracted first (still divided by `N`).
pub fn simulate_sample_cov_with<R: Rng + ?Sized>(
    tree: &RootedTree,
    theta: &Theta<f64>,
    samples: usize,
    center: bool,
    rng: &mut R,
) -> Result<SymMatrix<f64>> {
    theta.check_len(tree)?;
    if let Some((v, _)) = theta.iter().find(|(_, x)| **x < 0.0) {
        return Err(Error::NegativeWeight(v));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let n = tree.n_leaves();
    let m = tree.num_vertices();
    let sd: Vec<f64> = theta.values().iter().map(|x| x.sqrt()).collect();
    let mut data = vec![vec![0.0; samples]; n];
    let mut y = vec![0.0; m + 1];
    for s in 0..samples {
        for v in (1..=m).rev() {
            let z: f64 = rng.sample(StandardNormal);
            y[v] = y[tree.parent(v)] + sd[v - 1] * z;
        }
        for i in 1..=n {
            data[i - 1][s] = y[i];
        }
    }
    if center {
        for row in &mut data {
            let mean = row.iter().sum::<f64>() / samples as f64;
            row.iter_mut().for_each(|x| *x -= mean);
        }
    }
    let count = samples as f64;
    Ok(SymMatrix::from_fn(n, |i, j| {
        data[i].iter().zip(&data[j]).map(|(a, b)| a * b).sum::<f64>() / count
    }))
}

/// [`simulate_sample_cov_with`] driven by a ChaCha8 generator seeded with `seed`.
pub fn simulate_sample_cov(
    tree: &RootedTree,
    theta: &Theta<f64>,
    samples: usize,
    seed: u64,
    center: bool,
) -> Result<SymMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_sample_cov_with(tree, theta, samples, center, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{frac, rat, Rational};
    use crate::trees::{all_shapes, parse_newick};
    use num_traits::Zero;
    use proptest::prelude::*;

    const FIG1: &str = "((1:1,2:1):1,(3:1,4:1):1):1;";

    fn fig1() -> RootedTree {
        parse_newick::<f64>(FIG1).unwrap().0
    }

    fn theta_f(values: &[f64]) -> Theta<f64> {
        Theta::new(values.to_vec())
    }

    #[test]
    fn sigma_on_figure_one_matches_lca_table() {
        let tree = fig1();
        let theta: Theta<Rational> = Theta::new((1..=7).map(|k| rat(1 << k)).collect());
        let sigma = sigma_from_theta(&tree, &theta).unwrap();
        let th = |v: usize| theta[v].clone();
        assert_eq!(*sigma.get(0, 1), th(5) + th(7));
        assert_eq!(*sigma.get(0, 2), th(7));
        assert_eq!(*sigma.get(2, 3), th(6) + th(7));
        assert_eq!(*sigma.get(0, 0), th(1) + th(5) + th(7));
        let zero = sigma_from_theta(&tree, &Theta::constant(7, rat(0))).unwrap();
        assert_eq!(zero, SymMatrix::zeros(4));
    }

    #[test]
    fn two_leaf_sigma() {
        let (tree, theta) = parse_newick::<Rational>("(1:2,2:3):1;").unwrap();
        let sigma = sigma_from_theta(&tree, &theta).unwrap();
        assert_eq!(sigma.to_rows(), vec![vec![rat(3), rat(1)], vec![rat(1), rat(4)]]);
    }

    #[test]
    fn basis_matrices() {
        let tree = fig1();
        assert_eq!(basis_matrix::<f64>(&tree, 7).unwrap(), SymMatrix::from_fn(4, |_, _| 1.0));
        let e11 = basis_matrix::<f64>(&tree, 1).unwrap();
        assert_eq!(e11.to_rows()[0], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e11.max_abs(), 1.0);
        assert_eq!(e11.trace_product(&SymMatrix::from_fn(4, |_, _| 1.0)), 1.0);
        let g5 = basis_matrix::<f64>(&tree, 5).unwrap();
        assert_eq!(
            g5.to_rows(),
            vec![vec![1.0, 1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0, 0.0], vec![0.0; 4], vec![0.0; 4]]
        );
        assert!(basis_matrix::<f64>(&tree, 8).is_err());
    }

    #[test]
    fn sigma_is_sum_of_rank_one_terms_everywhere() {
        for n in 2..=5 {
            for tree in all_shapes(n) {
                let theta: Theta<Rational> = Theta::new((0..tree.num_vertices()).map(|k| frac(k as i64 + 2, 3)).collect());
                let mut sum = SymMatrix::zeros(n);
                for (v, x) in theta.iter() {
                    sum = sum.add(&basis_matrix::<Rational>(&tree, v).unwrap().scale(x));
                    // de(v) from traversal agrees with the support of g_v
                    let g = basis_matrix::<Rational>(&tree, v).unwrap();
                    let support: Vec<usize> = (1..=n).filter(|&i| !g.get(i - 1, i - 1).is_zero()).collect();
                    assert_eq!(support, tree.descendants(v));
                }
                assert_eq!(sum, sigma_from_theta(&tree, &theta).unwrap());
            }
        }
    }

    #[test]
    fn theta_recovery() {
        let tree = fig1();
        let sigma = sigma_from_theta(&tree, &Theta::constant(7, rat(1))).unwrap();
        assert_eq!(theta_from_sigma(&tree, &sigma).unwrap(), Theta::constant(7, rat(1)));
        // path sums t1..t7 given directly
        let t: Vec<Rational> = std::iter::once(rat(0)).chain((1..=7).map(|k| rat(100 - k))).collect();
        let theta = theta_from_sigma(&tree, &sigma_from_path_sums(&tree, &t)).unwrap();
        assert_eq!(theta[5], t[5].clone() - t[7].clone());
        assert_eq!(theta[7], t[7]);
        let id = SymMatrix::<f64>::identity(4);
        assert_eq!(theta_from_sigma(&tree, &id).unwrap(), theta_f(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn theta_recovery_reports_worst_pair() {
        let tree = fig1();
        let mut sigma = sigma_from_theta(&tree, &Theta::constant(7, 1.0)).unwrap();
        sigma.set(0, 2, 1.5);
        match theta_from_sigma(&tree, &sigma) {
            Err(Error::NotInTreeSpace { pair_a, pair_b, deviation }) => {
                assert_eq!(deviation, 0.5);
                let mut pairs = [pair_a, pair_b];
                pairs.sort();
                assert!(pairs.contains(&(1, 3)));
            }
            other => panic!("unexpected {other:?}"),
        }
        // tiny float noise is tolerated
        sigma.set(0, 2, 1.0 + 1e-12);
        assert!(theta_from_sigma(&tree, &sigma).is_ok());
    }

    #[test]
    fn cone_membership_cases() {
        let tree = fig1();
        let check = |values: &[f64]| cone_membership(&tree, &sigma_from_theta(&tree, &theta_f(values)).unwrap(), &1e-9);
        let counter = [5.0, 5.0, 5.0, 5.0, 0.0, 0.0, -1.0];
        assert!(is_positive_definite(&sigma_from_theta(&tree, &theta_f(&counter)).unwrap(), &1e-12));
        assert!(matches!(check(&counter), ConeMembership::Outside { negative, .. } if negative == vec![7]));
        assert_eq!(check(&[1.0; 7]), ConeMembership::Inside);
        assert_eq!(
            check(&[1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]),
            ConeMembership::Boundary { active: vec![5] }
        );
        let off = SymMatrix::from_rows(&[vec![1.0, 0.5, 0.0, 0.0], vec![0.5, 1.0, 0.2, 0.0], vec![0.0, 0.2, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(cone_membership(&tree, &off, &1e-9), ConeMembership::Outside { negative, .. } if negative.is_empty()));
    }

    #[test]
    fn farris_examples() {
        let tree = fig1();
        let sigma = sigma_from_theta(&tree, &Theta::constant(7, 1.0)).unwrap();
        let d = farris_inverse(&sigma);
        assert_eq!(*d.get(1, 3), 4.0);
        assert_eq!(*d.get(0, 1), 3.0);
        assert_eq!(farris_forward(&TreeMetric::from_fn(4, |_, _| 0.0)), SymMatrix::zeros(4));
    }

    #[test]
    fn four_point_examples() {
        let d = TreeMetric::from_fn(3, |i, j| if (i, j) == (0, 1) { 10.0 } else { 1.0 });
        assert!(!four_point_check(&d, &1e-12));
        let small = TreeMetric::from_fn(2, |i, j| (i + j) as f64);
        assert!(four_point_check(&small, &0.0));
        assert!(is_ultrametric(&SymMatrix::<f64>::identity(3), &0.0));
        let neg = SymMatrix::from_rows(&[vec![1.0, -0.1], vec![-0.1, 1.0]]).unwrap();
        assert!(!is_ultrametric(&neg, &1e-12));
    }

    #[test]
    fn metric_json_uses_pair_keys() {
        let d = TreeMetric::from_fn(2, |i, j| (10 * i + j) as f64);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"01":1.0,"02":2.0,"12":12.0}"#);
        assert_eq!(serde_json::from_str::<TreeMetric<f64>>(&json).unwrap(), d);
    }

    #[test]
    fn simulation_is_seeded_and_validates() {
        let tree = fig1();
        let theta = Theta::constant(7, 1.0);
        let a = simulate_sample_cov(&tree, &theta, 20, 7, false).unwrap();
        let b = simulate_sample_cov(&tree, &theta, 20, 7, false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_sample_cov(&tree, &theta, 20, 8, false).unwrap());
        assert_eq!(simulate_sample_cov(&tree, &Theta::constant(7, 0.0), 5, 1, false).unwrap(), SymMatrix::zeros(4));
        let mut neg = theta.clone();
        neg[3] = -0.5;
        assert_eq!(simulate_sample_cov(&tree, &neg, 5, 1, false), Err(Error::NegativeWeight(3)));
        let centered = simulate_sample_cov(&tree, &theta, 1, 3, true).unwrap();
        assert_eq!(centered, SymMatrix::zeros(4));
    }

    #[test]
    fn simulation_mean_matches_sigma() {
        let tree = fig1();
        let theta = theta_f(&[0.5, 1.0, 1.5, 2.0, 0.7, 0.3, 1.1]);
        let sigma = sigma_from_theta(&tree, &theta).unwrap();
        let reps = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<SymMatrix<f64>> = (0..reps)
            .map(|_| simulate_sample_cov_with(&tree, &theta, 1, false, &mut rng).unwrap())
            .collect();
        for i in 0..4 {
            for j in i..4 {
                let xs: Vec<f64> = draws.iter().map(|s| *s.get(i, j)).collect();
                let mean = xs.iter().sum::<f64>() / reps as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
                let se = (var / reps as f64).sqrt();
                assert!((mean - sigma.get(i, j)).abs() < 3.0 * se + 1e-12, "({i},{j}) {mean} vs {}", sigma.get(i, j));
            }
        }
    }

    /// Independent oracle: sum θ over the edges met walking from `a` up to
    /// the common ancestor and down to `b`.
    fn walk_distance(tree: &RootedTree, theta: &Theta<Rational>, a: usize, b: usize) -> Rational {
        let up = |x: usize| {
            let mut chain = vec![x];
            let mut u = x;
            while u != 0 {
                u = tree.parent(u);
                chain.push(u);
            }
            chain
        };
        let (ca, cb) = (up(a), up(b));
        let meet = *ca.iter().find(|u| cb.contains(u)).unwrap();
        ca.iter()
            .chain(cb.iter())
            .filter(|&&u| u != 0 && tree.depth(u) > tree.depth(meet))
            .fold(rat(0), |acc, &u| acc + theta[u].clone())
    }

    fn shapes_with_theta() -> impl Strategy<Value = (RootedTree, Theta<Rational>)> {
        (2usize..=5)
            .prop_flat_map(|n| (Just(all_shapes(n)), any::<proptest::sample::Index>()))
            .prop_flat_map(|(shapes, idx)| {
                let tree = idx.get(&shapes).clone();
                let m = tree.num_vertices();
                (Just(tree), proptest::collection::vec((0i64..20, 1i64..6), m))
            })
            .prop_map(|(tree, v)| (tree, Theta::new(v.into_iter().map(|(a, b)| frac(a, b)).collect())))
    }

    proptest! {
        #[test]
        fn exact_round_trips_and_tree_metric((tree, theta) in shapes_with_theta()) {
            let sigma = sigma_from_theta(&tree, &theta).unwrap();
            prop_assert_eq!(&theta_from_sigma(&tree, &sigma).unwrap(), &theta);
            prop_assert!(is_ultrametric(&sigma, &rat(0)));
            let d = farris_inverse(&sigma);
            prop_assert!(four_point_check(&d, &rat(0)));
            prop_assert!(d.is_metric(&rat(0)));
            prop_assert_eq!(farris_forward(&d), sigma);
            let n = tree.n_leaves();
            for i in 0..=n {
                for j in i + 1..=n {
                    prop_assert_eq!(d.get(i, j), &walk_distance(&tree, &theta, i, j));
                }
            }
            prop_assert_eq!(TreeMetric::from_theta(&tree, &theta).unwrap(), d);
        }

        #[test]
        fn float_round_trip((tree, theta) in shapes_with_theta()) {
            let theta = theta.map(|x| x.to_f64());
            let back = theta_from_sigma(&tree, &sigma_from_theta(&tree, &theta).unwrap()).unwrap();
            let scale = theta.values().iter().cloned().fold(1.0, f64::max);
            for (v, x) in back.iter() {
                prop_assert!((x - theta[v]).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn farris_inverse_then_forward_is_identity(v in proptest::collection::vec(-50i64..50, 10)) {
            let sigma = SymMatrix::from_fn(4, |i, j| rat(v[i * 4 - i * (i + 1) / 2 + j]));
            prop_assert_eq!(farris_forward(&farris_inverse(&sigma)), sigma);
        }
    }
}
