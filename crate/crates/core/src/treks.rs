//! Exact polynomial identities for the adjugate of `Σ_θ`: trek-system
//! expansions, positivity certificates for the quartet binomials, and the
//! determinant factorization in path-sum variables `t_v`.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::poly::{Monomial, MultilinearPoly, Poly};
use crate::scalar::Rational;
use crate::trees::{QuartetTopology, RootedTree, Split, Theta};

/// Default leaf bound for symbolic adjugates.
pub const SYMBOLIC_MAX_LEAVES: usize = 7;

/// A pair of directed paths from `top` down to `initial` and `final_`.
/// A trek starting at the root leaf `0` has `top = 0` and weight 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Trek {
    pub top: usize,
    pub initial: usize,
    #[serde(rename = "final")]
    pub final_: usize,
    /// Vertices covered (bit `v` for vertex `v`, including `0`).
    #[serde(skip)]
    pub vertices: u64,
}

impl Trek {
    /// Weight variable, or `None` for the weight-one trek from `0`.
    pub fn weight_var(&self) -> Option<usize> {
        (self.top != 0).then_some(self.top)
    }
}

/// Vertex-disjoint treks from `sources` to `targets`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrekSystem {
    pub treks: Vec<Trek>,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
}

impl TrekSystem {
    /// Support of the weight monomial `Π θ_top`.
    pub fn weight_mask(&self) -> u64 {
        self.treks.iter().filter_map(Trek::weight_var).fold(0, |m, v| m | 1 << v)
    }
}

fn check_vertex_bound(tree: &RootedTree) -> Result<()> {
    if tree.num_vertices() > 63 {
        return Err(Error::SizeBound {
            n: tree.n_leaves(),
            max: 32,
        });
    }
    Ok(())
}

/// Bitmask of the directed path `top → ... → leaf`.
fn path_mask(tree: &RootedTree, top: usize, leaf: usize) -> u64 {
    let mut mask = 1u64 << top;
    let mut u = leaf;
    while u != top {
        mask |= 1 << u;
        u = tree.parent(u);
    }
    mask
}

/// All trek systems in `𝒯_{i,j}`: one trek from `i` to `j` plus an identity
/// trek `k → k` for each remaining leaf, pairwise vertex-disjoint.
pub fn trek_systems(tree: &RootedTree, i: usize, j: usize) -> Result<Vec<TrekSystem>> {
    check_vertex_bound(tree)?;
    let n = tree.n_leaves();
    if !(i < j && j <= n) {
        return Err(Error::InvalidArgument(format!("need 0 <= i < j <= {n}, got ({i}, {j})")));
    }
    let lead: Vec<Trek> = if i == 0 {
        vec![Trek {
            top: 0,
            initial: 0,
            final_: j,
            vertices: path_mask(tree, 0, j),
        }]
    } else {
        tree.ancestors(tree.lca_unchecked(i, j))
            .into_iter()
            .map(|top| Trek {
                top,
                initial: i,
                final_: j,
                vertices: path_mask(tree, top, i) | path_mask(tree, top, j),
            })
            .collect()
    };
    let others: Vec<usize> = (1..=n).filter(|&k| k != i && k != j).collect();
    let sources: Vec<usize> = (0..=n).filter(|&k| k != j && (i == 0 || k != 0)).collect();
    let targets: Vec<usize> = (1..=n).filter(|&k| k != i).collect();

    let mut out = Vec::new();
    for first in lead {
        let mut stack = vec![first];
        extend_systems(tree, &others, first.vertices, &mut stack, &mut |treks| {
            out.push(TrekSystem {
                treks: treks.to_vec(),
                sources: sources.clone(),
                targets: targets.clone(),
            })
        });
    }
    Ok(out)
}

fn extend_systems(
    tree: &RootedTree,
    rest: &[usize],
    used: u64,
    stack: &mut Vec<Trek>,
    emit: &mut dyn FnMut(&[Trek]),
) {
    let Some((&k, tail)) = rest.split_first() else {
        emit(stack);
        return;
    };
    for top in tree.ancestors(k) {
        let mask = path_mask(tree, top, k);
        if mask & used != 0 {
            // every higher top covers this path too
            break;
        }
        stack.push(Trek {
            top,
            initial: k,
            final_: k,
            vertices: mask,
        });
        extend_systems(tree, tail, used | mask, stack, emit);
        stack.pop();
    }
}

/// `Σ_{Γ ∈ 𝒯_{i,j}} Π θ_top`. Fails if two systems give the same monomial.
pub fn trek_polynomial(tree: &RootedTree, i: usize, j: usize) -> Result<MultilinearPoly> {
    let mut poly = MultilinearPoly::zero();
    for system in trek_systems(tree, i, j)? {
        let mask = system.weight_mask();
        if poly.contains(mask) {
            return Err(Error::DuplicateMonomial(MultilinearPoly::monomial(mask).fmt_with("θ")));
        }
        poly.add_term(mask, Rational::one());
    }
    Ok(poly)
}

/// Determinant of a symbolic matrix by Laplace expansion along the first
/// remaining row, memoized on the (rows, columns) subsets.
pub fn symbolic_det(m: &[Vec<Poly>]) -> Poly {
    let k = m.len();
    let mut memo = HashMap::new();
    minor(m, low_mask(k), low_mask(k), &mut memo)
}

fn low_mask(k: usize) -> u64 {
    if k == 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

fn minor(m: &[Vec<Poly>], rows: u64, cols: u64, memo: &mut HashMap<(u64, u64), Poly>) -> Poly {
    if rows == 0 {
        return Poly::one();
    }
    if let Some(p) = memo.get(&(rows, cols)) {
        return p.clone();
    }
    let r = rows.trailing_zeros() as usize;
    let mut total = Poly::zero();
    let mut position = 0;
    for c in 0..64 {
        if cols >> c & 1 == 0 {
            continue;
        }
        let entry = &m[r][c];
        if !entry.is_zero() {
            let sub = minor(m, rows & !(1 << r), cols & !(1 << c), memo);
            let term = entry * &sub;
            total = if position % 2 == 0 { &total + &term } else { &total - &term };
        }
        position += 1;
    }
    memo.insert((rows, cols), total.clone());
    total
}

/// Symbolic `Σ_θ` with entries `Σ_{v ≤ lca(i,j)} θ_v`.
pub fn symbolic_sigma_theta(tree: &RootedTree) -> Vec<Vec<Poly>> {
    let n = tree.n_leaves();
    (1..=n)
        .map(|i| (1..=n).map(|j| Poly::linear(tree.ancestors(tree.lca_unchecked(i, j)))).collect())
        .collect()
}

/// Symbolic `Σ` in path-sum variables: `σ_ij = t_lca(i,j)`.
pub fn symbolic_sigma_t(tree: &RootedTree) -> Vec<Vec<Poly>> {
    let n = tree.n_leaves();
    (1..=n)
        .map(|i| (1..=n).map(|j| Poly::var(tree.lca_unchecked(i, j))).collect())
        .collect()
}

/// `P_ij(θ) = p_ij · det Σ_θ` for all pairs, and `det Σ_θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjugatePolys {
    pub n: usize,
    pub det: MultilinearPoly,
    pub p: BTreeMap<(usize, usize), MultilinearPoly>,
}

impl AdjugatePolys {
    pub fn get(&self, i: usize, j: usize) -> &MultilinearPoly {
        &self.p[&(i.min(j), i.max(j))]
    }

    fn product(&self, a: (usize, usize), b: (usize, usize)) -> Poly {
        &self.get(a.0, a.1).to_poly() * &self.get(b.0, b.1).to_poly()
    }
}

/// Exact symbolic adjugate of `Σ_θ` in p-coordinates, by memoized cofactor
/// expansion. Limited to `n <= SYMBOLIC_MAX_LEAVES`.
pub fn adjugate_polynomials(tree: &RootedTree) -> Result<AdjugatePolys> {
    adjugate_polynomials_bounded(tree, SYMBOLIC_MAX_LEAVES)
}

pub fn adjugate_polynomials_bounded(tree: &RootedTree, max_leaves: usize) -> Result<AdjugatePolys> {
    let n = tree.n_leaves();
    if n > max_leaves {
        return Err(Error::SizeBound { n, max: max_leaves });
    }
    check_vertex_bound(tree)?;
    let sigma = symbolic_sigma_theta(tree);
    let all = low_mask(n);
    let mut memo = HashMap::new();
    let det = minor(&sigma, all, all, &mut memo);
    // adj_ij = (−1)^{i+j} M_ij for symmetric Σ
    let mut adj = vec![vec![Poly::zero(); n]; n];
    for a in 0..n {
        for b in a..n {
            let m = minor(&sigma, all & !(1 << a), all & !(1 << b), &mut memo);
            let signed = if (a + b) % 2 == 0 { m } else { -&m };
            adj[a][b] = signed.clone();
            adj[b][a] = signed;
        }
    }
    let multilinear = |p: &Poly| {
        MultilinearPoly::from_poly(p).ok_or_else(|| Error::Degenerate("adjugate entry is not multilinear".into()))
    };
    let mut p = BTreeMap::new();
    for j in 1..=n {
        let row = adj[j - 1].iter().fold(Poly::zero(), |acc, x| &acc + x);
        p.insert((0, j), multilinear(&row)?);
        for i in j + 1..=n {
            p.insert((j, i), multilinear(&-&adj[j - 1][i - 1])?);
        }
    }
    Ok(AdjugatePolys {
        n,
        det: multilinear(&det)?,
        p,
    })
}

/// Positivity certificate for a trivalent quartet `ij|kl`.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub split: Split,
    /// `(p_ij p_kl − p_il p_jk)·s²` with `s = det Σ_θ`.
    pub scaled: Poly,
    /// The same difference times `s` (the scaled form divided by `s`), when
    /// the division is exact.
    pub reduced: Option<Poly>,
}

impl AdjugatePolys {
    /// Certificate for the cherry split `{i,j} | {k,l}`; every coefficient
    /// must be nonnegative.
    pub fn certificate(&self, split: Split) -> Result<Certificate> {
        let [i, j] = split.left;
        let [k, l] = split.right;
        let scaled = &self.product((i, j), (k, l)) - &self.product((i, l), (j, k));
        if let Some((m, c)) = scaled.negative_term() {
            return Err(Error::NegativeCoefficient {
                quartet: format!("{i}{j}|{k}{l}"),
                term: format!("{c}*{}", m.fmt_with("θ")),
            });
        }
        let reduced = scaled.div_exact(&self.det.to_poly());
        Ok(Certificate { split, scaled, reduced })
    }

    /// The equalities among the three products of a quartet hold as exact
    /// polynomial identities: the two non-split pairings agree for a
    /// trivalent quartet, all three agree for a star quartet.
    pub fn quartet_equalities_hold(&self, topology: QuartetTopology, labels: [usize; 4]) -> bool {
        let [a, b, c, d] = labels;
        let prods = [
            self.product((a, b), (c, d)),
            self.product((a, c), (b, d)),
            self.product((a, d), (b, c)),
        ];
        match topology {
            QuartetTopology::Star => prods[0] == prods[1] && prods[1] == prods[2],
            QuartetTopology::Trivalent(split) => {
                let [i, j] = split.left;
                let [k, l] = split.right;
                self.product((i, k), (j, l)) == self.product((i, l), (j, k))
            }
        }
    }
}

/// Certificate for the trivalent quartet on the given four labels (in any
/// order; the split is read off the tree).
pub fn binomial_positivity_certificate(tree: &RootedTree, labels: [usize; 4]) -> Result<Certificate> {
    let split = match tree.quartet_topology(labels)? {
        QuartetTopology::Trivalent(split) => split,
        QuartetTopology::Star => return Err(Error::NotTrivalent(labels)),
    };
    adjugate_polynomials(tree)?.certificate(split)
}

/// Rewrites a polynomial in `θ` in path-sum variables via
/// `θ_v = t_v − t_parent(v)` (with `t_0 = 0`).
pub fn theta_to_t(tree: &RootedTree, p: &Poly) -> Poly {
    p.substitute(|v| {
        let parent = tree.parent(v);
        if parent == 0 {
            Poly::var(v)
        } else {
            &Poly::var(v) - &Poly::var(parent)
        }
    })
}

fn require_binary(tree: &RootedTree) -> Result<()> {
    if tree.is_binary() {
        Ok(())
    } else {
        Err(Error::NotBinary)
    }
}

/// `D_k(t)`: determinant of the covariance matrix of the tree truncated
/// below the internal vertex `k` (which becomes a leaf).
pub fn dk_poly(tree: &RootedTree, k: usize) -> Result<Poly> {
    require_binary(tree)?;
    if !tree.contains(k) || k == 0 || tree.is_leaf(k) {
        return Err(Error::InvalidArgument(format!("D_k needs an internal vertex, got {k}")));
    }
    let below = tree.clade_mask(k);
    let mut leaves = vec![k];
    leaves.extend(tree.leaves().filter(|&i| below >> (i - 1) & 1 == 0));
    let m: Vec<Vec<Poly>> = leaves
        .iter()
        .map(|&a| leaves.iter().map(|&b| Poly::var(tree.lca_unchecked(a, b))).collect())
        .collect();
    Ok(symbolic_det(&m))
}

/// `E_uv(t)` for the edge `u → v`: the submatrix of `Σ` with rows
/// `R = de(u) \ de(v)` and columns `k, R` for `k = min de(v)`, made square
/// by a leading row of ones. `E_0v = 1`. Putting `k` first fixes the sign so
/// that the factorization holds exactly.
pub fn euv_poly(tree: &RootedTree, u: usize, v: usize) -> Result<Poly> {
    require_binary(tree)?;
    if v == 0 || !tree.contains(v) || tree.parent(v) != u {
        return Err(Error::InvalidArgument(format!("{u} -> {v} is not an edge")));
    }
    if u == 0 {
        return Ok(Poly::one());
    }
    let rows: Vec<usize> = tree
        .descendants(u)
        .into_iter()
        .filter(|&i| tree.clade_mask(v) >> (i - 1) & 1 == 0)
        .collect();
    let k = tree.descendants(v)[0];
    let mut cols = vec![k];
    cols.extend(&rows);
    let mut m = vec![vec![Poly::one(); cols.len()]];
    for &r in &rows {
        m.push(cols.iter().map(|&c| Poly::var(tree.lca_unchecked(r, c))).collect());
    }
    Ok(symbolic_det(&m))
}

/// Product of `E_uv` over the path edges `u → v` from `top` down to `leaf`,
/// skipping the edge leaving `top` when `skip_top` is set.
fn e_product(tree: &RootedTree, top: usize, leaf: usize, skip_top: bool) -> Result<Poly> {
    let mut acc = Poly::one();
    let mut v = leaf;
    while v != top {
        let u = tree.parent(v);
        if !(skip_top && u == top) {
            acc = &acc * &euv_poly(tree, u, v)?;
        }
        v = u;
    }
    Ok(acc)
}

/// The predicted factorization of `P_ij(t)`: `Π E_uv` along `0 → j` when
/// `i = 0`, otherwise `D_lca(i,j)` times `E_uv` over the path edges that do
/// not leave the lca.
pub fn factorization(tree: &RootedTree, i: usize, j: usize) -> Result<Poly> {
    if i == 0 {
        return e_product(tree, 0, j, false);
    }
    let top = tree.lca_unchecked(i, j);
    let left = e_product(tree, top, i, true)?;
    let right = e_product(tree, top, j, true)?;
    Ok(&(&left * &dk_poly(tree, top)?) * &right)
}

/// Checks `P_ij(t) = factorization(i, j)` exactly for every pair; returns
/// the number of identities verified.
pub fn verify_factorization(tree: &RootedTree) -> Result<usize> {
    require_binary(tree)?;
    let adj = adjugate_polynomials(tree)?;
    let mut checked = 0;
    for (&(i, j), poly) in &adj.p {
        let lhs = theta_to_t(tree, &poly.to_poly());
        let rhs = factorization(tree, i, j)?;
        if lhs != rhs {
            return Err(Error::FactorizationFailed {
                i,
                j,
                difference: (&lhs - &rhs).fmt_with("t"),
            });
        }
        checked += 1;
    }
    Ok(checked)
}

/// Predicted grevlex initial monomial of `P_ij(t)`:
/// `t_1⋯t_n · t_lca(i,j) / (t_i t_j)`, or `t_1⋯t_n / t_j` when `i = 0`.
pub fn expected_initial_monomial(tree: &RootedTree, i: usize, j: usize) -> Monomial {
    let mut vars: Vec<usize> = tree.leaves().filter(|&x| x != i && x != j).collect();
    if i != 0 {
        vars.push(tree.lca_unchecked(i, j));
    }
    Monomial::from_vars(&vars)
}

/// Covariance `Ξ = (I − Λ)^{-T} D_θ (I − Λ)^{-1}` of all non-root vertices
/// under the structural equations, where `λ_uv = 1` iff `u → v`. Row
/// `v - 1` belongs to vertex `v`.
pub fn structural_covariance(tree: &RootedTree, theta: &Theta<Rational>) -> Result<SymMatrix<Rational>> {
    let m = tree.num_vertices();
    if theta.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: theta.len(),
        });
    }
    let mut a = vec![vec![Rational::zero(); m]; m];
    for v in 1..=m {
        a[v - 1][v - 1] = Rational::one();
        let u = tree.parent(v);
        if u != 0 {
            a[u - 1][v - 1] = -Rational::one();
        }
    }
    let inv = dense_inverse(a)?;
    // Ξ_xy = Σ_v inv[v][x] θ_v inv[v][y]
    Ok(SymMatrix::from_fn(m, |x, y| {
        (0..m).fold(Rational::zero(), |acc, v| acc + &inv[v][x] * &theta[v + 1] * &inv[v][y])
    }))
}

fn dense_inverse(mut a: Vec<Vec<Rational>>) -> Result<Vec<Vec<Rational>>> {
    let m = a.len();
    let mut inv: Vec<Vec<Rational>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect())
        .collect();
    for k in 0..m {
        let p = (k..m).find(|&i| !a[i][k].is_zero()).ok_or(Error::Singular)?;
        a.swap(p, k);
        inv.swap(p, k);
        let pivot = a[k][k].clone();
        for j in 0..m {
            a[k][j] /= &pivot;
            inv[k][j] /= &pivot;
        }
        for i in 0..m {
            if i == k || a[i][k].is_zero() {
                continue;
            }
            let f = a[i][k].clone();
            for j in 0..m {
                let (da, di) = (&f * &a[k][j], &f * &inv[k][j]);
                a[i][j] -= da;
                inv[i][j] -= di;
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::sigma_from_theta;
    use crate::pcoords::p_adjoint_from_theta;
    use crate::scalar::{frac, rat};
    use crate::trees::{all_shapes, binary_shapes, parse_newick};

    fn tree(text: &str) -> RootedTree {
        parse_newick::<f64>(text).unwrap().0
    }

    fn fig1() -> RootedTree {
        tree("((1:1,2:1):1,(3:1,4:1):1):1;")
    }

    fn ml(monomials: &[&[usize]]) -> MultilinearPoly {
        let mut p = MultilinearPoly::zero();
        for vars in monomials {
            p.add_term(vars.iter().fold(0, |m, v| m | 1 << v), rat(1));
        }
        p
    }

    fn t(v: usize) -> Poly {
        Poly::var(v)
    }

    #[test]
    fn eight_trek_systems_for_one_two() {
        let t = fig1();
        let systems = trek_systems(&t, 1, 2).unwrap();
        assert_eq!(systems.len(), 8);
        assert_eq!(systems[0].sources, vec![1, 3, 4]);
        assert_eq!(systems[0].targets, vec![2, 3, 4]);
        let expected = ml(&[&[3, 4, 5], &[4, 5, 6], &[3, 5, 6], &[4, 5, 7], &[3, 4, 7], &[4, 6, 7], &[3, 6, 7], &[3, 5, 7]]);
        assert_eq!(trek_polynomial(&t, 1, 2).unwrap(), expected);
        assert_eq!(trek_polynomial(&t, 1, 3).unwrap(), ml(&[&[2, 4, 7]]));
        assert_eq!(trek_polynomial(&t, 0, 1).unwrap(), ml(&[&[2, 3, 4], &[2, 3, 6], &[2, 4, 6]]));
        let zero_trek = trek_systems(&t, 0, 1).unwrap()[0].treks[0];
        assert_eq!(zero_trek.weight_var(), None);
    }

    #[test]
    fn two_leaf_treks() {
        let t = tree("(1:2,2:3):1;");
        assert_eq!(trek_systems(&t, 1, 2).unwrap().len(), 1);
        assert_eq!(trek_polynomial(&t, 1, 2).unwrap(), ml(&[&[3]]));
        let adj = adjugate_polynomials(&t).unwrap();
        assert_eq!(adj.det, ml(&[&[1, 2], &[1, 3], &[2, 3]]));
        assert_eq!(adj.get(1, 2), &ml(&[&[3]]));
    }

    #[test]
    fn three_leaf_adjugate() {
        let tr = tree("((1:1,2:1):1,3:1):1;");
        let adj = adjugate_polynomials(&tr).unwrap();
        assert_eq!(adj.get(0, 3), &ml(&[&[1, 2], &[1, 4], &[2, 4]]));
        assert_eq!(adj.get(1, 2), &ml(&[&[3, 4], &[3, 5], &[4, 5]]));
        let cert = adj.certificate(Split::new(0, 3, 1, 2)).unwrap();
        assert_eq!(cert.reduced, Some(t(4)));
    }

    #[test]
    fn figure_one_certificates() {
        let tr = fig1();
        let adj = adjugate_polynomials(&tr).unwrap();
        let c = adj.certificate(Split::new(1, 2, 3, 4)).unwrap();
        assert_eq!(c.reduced.unwrap().fmt_with("θ"), "θ5*θ6 + θ5*θ7 + θ6*θ7");
        let c = adj.certificate(Split::new(0, 3, 1, 2)).unwrap();
        assert_eq!(c.reduced.unwrap(), &t(4) * &t(5));
        assert!(matches!(
            binomial_positivity_certificate(&tree("(1:1,2:1,3:1,4:1):1;"), [1, 2, 3, 4]),
            Err(Error::NotTrivalent(_))
        ));
    }

    #[test]
    fn trek_sums_equal_adjugate_on_small_shapes() {
        for n in 2..=5 {
            for shape in all_shapes(n) {
                let adj = adjugate_polynomials(&shape).unwrap();
                for (&(i, j), p) in &adj.p {
                    let treks = trek_polynomial(&shape, i, j).unwrap();
                    assert!(treks.all_coefficients_one());
                    assert_eq!(&treks, p, "{} ({i},{j})", shape.topology_key());
                }
                for labels in shape.quartets() {
                    let topology = shape.quartet_topology(labels).unwrap();
                    assert!(adj.quartet_equalities_hold(topology, labels));
                    if let QuartetTopology::Trivalent(split) = topology {
                        let cert = adj.certificate(split).unwrap();
                        assert!(cert.reduced.unwrap().coefficients_nonnegative());
                    }
                }
            }
        }
    }

    #[test]
    fn adjugate_matches_numeric_adjugate() {
        let t = fig1();
        let adj = adjugate_polynomials(&t).unwrap();
        let values: Vec<Rational> = (0..=7).map(|v| frac(v as i64 + 3, 2)).collect();
        let theta = Theta::new(values[1..].to_vec());
        let (p, det) = p_adjoint_from_theta(&t, &theta).unwrap();
        assert_eq!(adj.det.evaluate(&values), det);
        for ((i, j), x) in p.iter() {
            assert_eq!(&adj.get(i, j).evaluate(&values), x);
        }
        assert!(matches!(adjugate_polynomials_bounded(&t, 3), Err(Error::SizeBound { n: 4, max: 3 })));
    }

    #[test]
    fn determinants_of_figure_one() {
        let tr = fig1();
        assert_eq!(euv_poly(&tr, 5, 1).unwrap(), &t(2) - &t(5));
        assert_eq!(euv_poly(&tr, 5, 2).unwrap(), &t(1) - &t(5));
        assert_eq!(euv_poly(&tr, 6, 3).unwrap(), &t(4) - &t(6));
        assert_eq!(euv_poly(&tr, 0, 7).unwrap(), Poly::one());
        let one = || Poly::one();
        let e76 = symbolic_det(&[vec![one(), one(), one()], vec![t(1), t(5), t(7)], vec![t(5), t(2), t(7)]]);
        assert_eq!(euv_poly(&tr, 7, 6).unwrap(), e76);
        // D_5: truncated tree with leaves {5, 3, 4}
        let d5 = symbolic_det(&[vec![t(5), t(7), t(7)], vec![t(7), t(3), t(6)], vec![t(7), t(6), t(4)]]);
        assert_eq!(dk_poly(&tr, 5).unwrap(), d5);
        assert!(matches!(dk_poly(&tree("(1:1,2:1,3:1):1;"), 4), Err(Error::NotBinary)));
    }

    #[test]
    fn figure_one_factorizations() {
        let tr = fig1();
        let adj = adjugate_polynomials(&tr).unwrap();
        let in_t = |i, j| theta_to_t(&tr, &adj.get(i, j).to_poly());
        assert_eq!(in_t(1, 2), dk_poly(&tr, 5).unwrap());
        let p13 = &(&euv_poly(&tr, 5, 1).unwrap() * &dk_poly(&tr, 7).unwrap()) * &euv_poly(&tr, 6, 3).unwrap();
        assert_eq!(in_t(1, 3), p13);
        assert_eq!(verify_factorization(&tr).unwrap(), 10);
        let two = tree("(1:2,2:3):1;");
        assert_eq!(verify_factorization(&two).unwrap(), 3);
    }

    #[test]
    fn factorization_on_binary_shapes() {
        for n in 2..=5 {
            for shape in binary_shapes(n) {
                assert_eq!(verify_factorization(&shape).unwrap(), n * (n + 1) / 2);
            }
        }
    }

    #[test]
    fn initial_monomials() {
        for n in 2..=5 {
            for shape in binary_shapes(n) {
                let adj = adjugate_polynomials(&shape).unwrap();
                for (&(i, j), p) in &adj.p {
                    let in_t = theta_to_t(&shape, &p.to_poly());
                    let (lead, _) = in_t.leading_term().unwrap();
                    assert_eq!(lead, &expected_initial_monomial(&shape, i, j), "{} ({i},{j})", shape.topology_key());
                }
            }
        }
    }

    #[test]
    fn structural_covariance_restricts_to_sigma() {
        for shape in all_shapes(4) {
            let theta = Theta::new((1..=shape.num_vertices()).map(|v| frac(v as i64 * 7 % 5 + 1, 3)).collect());
            let xi = structural_covariance(&shape, &theta).unwrap();
            let leaves: Vec<usize> = (0..4).collect();
            assert_eq!(xi.principal(&leaves), sigma_from_theta(&shape, &theta).unwrap());
        }
    }
}
