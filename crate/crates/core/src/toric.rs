//! Quadratic binomials of the toric ideal `I_T̃`, residuals, and the full
//! semialgebraic description of the model in p-coordinates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use serde::Serialize;

use crate::error::Result;
use crate::matrix::SymMatrix;
use crate::pcoords::{p_from_k, pair_key, pairs, PCoords};
use crate::scalar::{Rational, Scalar};
use crate::trees::{QuartetTopology, RootedTree};

type Pair = (usize, usize);

fn pair(a: usize, b: usize) -> Pair {
    (a.min(b), a.max(b))
}

fn monomial(x: Pair, y: Pair) -> [Pair; 2] {
    if x <= y {
        [x, y]
    } else {
        [y, x]
    }
}

/// `p_a p_b − p_c p_d`, stored with the smaller monomial first. A binomial
/// and its negative denote the same generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binomial {
    pub plus: [Pair; 2],
    pub minus: [Pair; 2],
}

impl Binomial {
    /// `p_{a0 a1} p_{b0 b1} − p_{c0 c1} p_{d0 d1}` in canonical form.
    pub fn new(a: Pair, b: Pair, c: Pair, d: Pair) -> Self {
        let x = monomial(pair(a.0, a.1), pair(b.0, b.1));
        let y = monomial(pair(c.0, c.1), pair(d.0, d.1));
        assert_ne!(x, y, "binomial with equal monomials");
        if x < y {
            Binomial { plus: x, minus: y }
        } else {
            Binomial { plus: y, minus: x }
        }
    }

    pub fn evaluate<S: Scalar>(&self, p: &PCoords<S>) -> S {
        let term = |m: &[Pair; 2]| p.get(m[0].0, m[0].1).clone() * p.get(m[1].0, m[1].1).clone();
        term(&self.plus) - term(&self.minus)
    }

    /// Text like `p01*p23 - p02*p13`.
    pub fn display(&self, n: usize) -> String {
        let var = |(i, j): Pair| format!("p{}", pair_key(n, i, j));
        format!(
            "{}*{} - {}*{}",
            var(self.plus[0]),
            var(self.plus[1]),
            var(self.minus[0]),
            var(self.minus[1])
        )
    }
}

impl fmt::Display for Binomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let max = self.plus.iter().chain(&self.minus).map(|p| p.1).max().unwrap_or(0);
        f.write_str(&self.display(max))
    }
}

/// The three products `p_ab p_cd`, `p_ac p_bd`, `p_ad p_bc` of a quartet.
fn pairings([a, b, c, d]: [usize; 4]) -> [[Pair; 2]; 3] {
    [
        monomial(pair(a, b), pair(c, d)),
        monomial(pair(a, c), pair(b, d)),
        monomial(pair(a, d), pair(b, c)),
    ]
}

fn binomial_of(x: [Pair; 2], y: [Pair; 2]) -> Binomial {
    Binomial::new(x[0], x[1], y[0], y[1])
}

/// Equalities implied by one quartet: the split binomial
/// `p_ik p_jl − p_il p_jk` for a trivalent quartet `ij|kl`, or all three
/// pairwise differences for a star quartet.
pub fn quartet_binomials(topology: QuartetTopology, labels: [usize; 4]) -> Vec<Binomial> {
    match topology {
        QuartetTopology::Trivalent(split) => {
            let [i, j] = split.left;
            let [k, l] = split.right;
            vec![Binomial::new(pair(i, k), pair(j, l), pair(i, l), pair(j, k))]
        }
        QuartetTopology::Star => {
            let [x, y, z] = pairings(labels);
            let mut out = vec![binomial_of(x, y), binomial_of(x, z), binomial_of(y, z)];
            out.sort();
            out
        }
    }
}

/// A minimal generating set of `I_T̃`, sorted: one binomial per trivalent
/// quartet and two per star quartet (the third star difference is their
/// difference, so it adds nothing to the ideal).
pub fn generators(tree: &RootedTree) -> Vec<Binomial> {
    let mut out = BTreeSet::new();
    for labels in tree.quartets() {
        let topology = tree.quartet_topology(labels).expect("quartets are valid");
        let gens = quartet_binomials(topology, labels);
        let keep = if topology == QuartetTopology::Star { 2 } else { 1 };
        out.extend(gens.into_iter().take(keep));
    }
    out.into_iter().collect()
}

/// Every quartet equality, including the redundant third star difference.
pub fn all_quartet_binomials(tree: &RootedTree) -> Vec<Binomial> {
    let mut out = BTreeSet::new();
    for labels in tree.quartets() {
        let topology = tree.quartet_topology(labels).expect("quartets are valid");
        out.extend(quartet_binomials(topology, labels));
    }
    out.into_iter().collect()
}

/// Largest absolute value of the binomials at `p` (zero for an empty list).
pub fn residuals<S: Scalar>(gens: &[Binomial], p: &PCoords<S>) -> S {
    gens.iter().fold(S::zero(), |worst, g| {
        let r = g.evaluate(p).abs();
        if r > worst {
            r
        } else {
            worst
        }
    })
}

/// True when the two lists span the same space of quadrics, i.e. generate
/// the same ideal (both are generated in degree two).
pub fn same_span(a: &[Binomial], b: &[Binomial]) -> bool {
    let mut index: BTreeMap<[Pair; 2], usize> = BTreeMap::new();
    for g in a.iter().chain(b) {
        for m in [g.plus, g.minus] {
            let next = index.len();
            index.entry(m).or_insert(next);
        }
    }
    let rows = |gens: &[Binomial]| -> Vec<Vec<Rational>> {
        gens.iter()
            .map(|g| {
                let mut row = vec![Rational::zero(); index.len()];
                row[index[&g.plus]] = Rational::from_i64(1);
                row[index[&g.minus]] = Rational::from_i64(-1);
                row
            })
            .collect()
    };
    let (ra, rb) = (rows(a), rows(b));
    let both: Vec<_> = ra.iter().chain(&rb).cloned().collect();
    let r = rank(both);
    rank(ra) == r && rank(rb) == r
}

/// Rank of a rational matrix by Gaussian elimination.
pub fn rank(mut rows: Vec<Vec<Rational>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let pivot = rows[r][c].clone();
        for i in r + 1..rows.len() {
            if rows[i][c].is_zero() {
                continue;
            }
            let factor = rows[i][c].clone() / pivot.clone();
            for k in c..cols {
                let delta = factor.clone() * rows[r][k].clone();
                rows[i][k] -= delta;
            }
        }
        r += 1;
    }
    r
}

/// Integer exponent matrix of the Laurent parametrization: one row per
/// coordinate `p_ij` (lexicographic order), one column per vertex, plus a
/// trailing homogenizing column of ones.
pub fn exponent_matrix(tree: &RootedTree) -> Vec<Vec<i64>> {
    let m = tree.num_vertices();
    pairs(tree.n_leaves())
        .map(|(i, j)| {
            let mut row = vec![0i64; m + 1];
            if i == 0 {
                row[j - 1] = -1;
            } else {
                row[tree.lca_unchecked(i, j) - 1] += 1;
                row[i - 1] -= 1;
                row[j - 1] -= 1;
            }
            row[m] = 1;
            row
        })
        .collect()
}

/// Rank of [`exponent_matrix`]: the affine dimension `|V|` of the variety.
pub fn exponent_matrix_rank(tree: &RootedTree) -> usize {
    rank(
        exponent_matrix(tree)
            .into_iter()
            .map(|row| row.into_iter().map(Rational::from_i64).collect())
            .collect(),
    )
}

/// `C(n+1, 2) − rank`: codimension of the toric variety.
pub fn codimension(tree: &RootedTree) -> usize {
    let n = tree.n_leaves();
    n * (n + 1) / 2 - exponent_matrix_rank(tree)
}

/// Outcome of the semialgebraic membership test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembershipReport {
    pub verdict: bool,
    pub pd_ok: bool,
    /// Pairs with `p_ij < −tol` (relative to the largest `|p|`).
    pub sign_violations: Vec<(usize, usize)>,
    /// Largest equality residual divided by the product scale.
    pub equality_residual: f64,
    pub equality_violations: Vec<[usize; 4]>,
    /// Trivalent quartets `ij|kl` (listed in that order) with
    /// `p_ik p_jl > p_ij p_kl` beyond tolerance.
    pub inequality_violations: Vec<[usize; 4]>,
}

/// Decides whether `K` is the inverse of a covariance matrix in `L_{T,≥}`.
///
/// Checks positive definiteness, `p ≥ 0`, the quartet equalities (all three
/// for stars) and `p_ik p_jl ≤ p_ij p_kl` for trivalent quartets `ij|kl`.
/// Tolerances are relative: to the largest `|p_ij|` for signs and to the
/// largest quartet product for (in)equalities. Use `tol = 0` with the exact
/// backend for an exact decision.
pub fn semialgebraic_membership<S: Scalar>(tree: &RootedTree, k: &SymMatrix<S>, tol: &S) -> Result<MembershipReport> {
    let n = tree.n_leaves();
    if k.dim() != n {
        return Err(crate::error::Error::DimensionMismatch {
            expected: n,
            found: k.dim(),
        });
    }
    let pd_ok = k.is_positive_definite(tol);
    let p = p_from_k(k);
    let p_scale = p.values().iter().fold(S::zero(), |m, x| if x.abs() > m { x.abs() } else { m });
    let sign_violations: Vec<Pair> = p
        .iter()
        .filter(|(_, x)| **x < -(tol.clone() * p_scale.clone()))
        .map(|(ij, _)| ij)
        .collect();

    let quartets: Vec<([usize; 4], QuartetTopology, [S; 3])> = tree
        .quartets()
        .into_iter()
        .map(|labels| {
            let topology = tree.quartet_topology(labels).expect("quartets are valid");
            let products = pairings(labels).map(|m| p.get(m[0].0, m[0].1).clone() * p.get(m[1].0, m[1].1).clone());
            (labels, topology, products)
        })
        .collect();
    let scale = quartets
        .iter()
        .flat_map(|(_, _, prods)| prods.iter())
        .fold(S::zero(), |m, x| if x.abs() > m { x.abs() } else { m });
    let slack = tol.clone() * scale.clone();

    let mut worst = S::zero();
    let mut equality_violations = Vec::new();
    let mut inequality_violations = Vec::new();
    for (labels, topology, prods) in &quartets {
        let product = |m: [Pair; 2]| p.get(m[0].0, m[0].1).clone() * p.get(m[1].0, m[1].1).clone();
        let (equal_pairs, inequality): (Vec<(S, S)>, Option<(S, S, [usize; 4])>) = match topology {
            QuartetTopology::Star => (
                vec![
                    (prods[0].clone(), prods[1].clone()),
                    (prods[0].clone(), prods[2].clone()),
                    (prods[1].clone(), prods[2].clone()),
                ],
                None,
            ),
            QuartetTopology::Trivalent(split) => {
                let [i, j] = split.left;
                let [kk, l] = split.right;
                let cherry = product(monomial(pair(i, j), pair(kk, l)));
                let cross = product(monomial(pair(i, kk), pair(j, l)));
                let other = product(monomial(pair(i, l), pair(j, kk)));
                (vec![(cross.clone(), other)], Some((cross, cherry, [i, j, kk, l])))
            }
        };
        let mut violated = false;
        for (a, b) in equal_pairs {
            let r = (a - b).abs();
            if r > slack {
                violated = true;
            }
            if r > worst {
                worst = r;
            }
        }
        if violated {
            equality_violations.push(*labels);
        }
        if let Some((cross, cherry, ordered)) = inequality {
            if cross > cherry + slack.clone() {
                inequality_violations.push(ordered);
            }
        }
    }
    let equality_residual = if scale.is_zero() { 0.0 } else { (worst / scale).to_f64() };
    let verdict = pd_ok && sign_violations.is_empty() && equality_violations.is_empty() && inequality_violations.is_empty();
    Ok(MembershipReport {
        verdict,
        pd_ok,
        sign_violations,
        equality_residual,
        equality_violations,
        inequality_violations,
    })
}
