//! Rooted trees with root `0`, leaves `1..=n` and internal vertices numbered
//! `n+1..=|V|`.
//!
//! Every non-root vertex `v` stands for the edge `parent(v) -> v`. Vertex ids
//! double as the total order on `V`: a child always has a smaller id than its
//! parent, so `de(u) ⊆ de(v)` implies `u <= v`. Trees built from nested
//! clades (Newick text, induced subtrees, contractions, refinements) get a
//! canonical post-order numbering where children are visited by increasing
//! smallest leaf label.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Leaf sets are stored as `u64` bitmasks.
pub const MAX_LEAVES: usize = 64;

/// Edge weights `θ_v`, indexed by vertex id `v = 1..=|V|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Theta<S = f64>(Vec<S>);

impl<S> Theta<S> {
    pub fn new(values: Vec<S>) -> Self {
        Theta(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Values in vertex order `θ_1, θ_2, ...`.
    pub fn values(&self) -> &[S] {
        &self.0
    }

    pub fn into_values(self) -> Vec<S> {
        self.0
    }

    /// `(v, θ_v)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &S)> {
        self.0.iter().enumerate().map(|(k, x)| (k + 1, x))
    }

    pub fn map<T>(&self, f: impl FnMut(&S) -> T) -> Theta<T> {
        Theta(self.0.iter().map(f).collect())
    }
}

impl<S: Scalar> Theta<S> {
    pub fn constant(len: usize, value: S) -> Self {
        Theta(vec![value; len])
    }

    pub(crate) fn check_len(&self, tree: &RootedTree) -> Result<()> {
        if self.len() != tree.num_vertices() {
            return Err(Error::DimensionMismatch {
                expected: tree.num_vertices(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

impl<S> Index<usize> for Theta<S> {
    type Output = S;

    fn index(&self, v: usize) -> &S {
        &self.0[v - 1]
    }
}

impl<S> IndexMut<usize> for Theta<S> {
    fn index_mut(&mut self, v: usize) -> &mut S {
        &mut self.0[v - 1]
    }
}

/// A nested description of a rooted tree below vertex `0`.
///
/// A node without children is a leaf and must carry a label.
#[derive(Clone, Debug, PartialEq)]
pub struct Clade<T> {
    pub label: Option<usize>,
    pub data: T,
    pub children: Vec<Clade<T>>,
}

impl<T> Clade<T> {
    pub fn leaf(label: usize, data: T) -> Self {
        Clade {
            label: Some(label),
            data,
            children: Vec::new(),
        }
    }

    pub fn node(children: Vec<Clade<T>>, data: T) -> Self {
        Clade {
            label: None,
            data,
            children,
        }
    }

    fn min_label(&self) -> usize {
        match self.label {
            Some(l) if self.children.is_empty() => l,
            _ => self
                .children
                .iter()
                .map(Clade::min_label)
                .min()
                .unwrap_or(usize::MAX),
        }
    }

    fn collect_labels(&self, out: &mut Vec<usize>) {
        if self.children.is_empty() {
            out.push(self.label.unwrap_or(0));
        }
        for c in &self.children {
            c.collect_labels(out);
        }
    }

    fn count_nodes(&self) -> usize {
        1 + self.children.iter().map(Clade::count_nodes).sum::<usize>()
    }
}

/// Topology of the unrooted subtree induced on four leaves of `T̃`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuartetTopology {
    Star,
    Trivalent(Split),
}

/// Cherry split `{a,b} | {c,d}` in canonical form: each side sorted and
/// `left[0] < right[0]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Split {
    pub left: [usize; 2],
    pub right: [usize; 2],
}

impl Split {
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Self {
        let l = [a.min(b), a.max(b)];
        let r = [c.min(d), c.max(d)];
        if l[0] < r[0] {
            Split { left: l, right: r }
        } else {
            Split { left: r, right: l }
        }
    }

    pub fn labels(&self) -> [usize; 4] {
        [self.left[0], self.left[1], self.right[0], self.right[1]]
    }
}

/// A tree derived from another one, with `vertex_map[new] = old`.
#[derive(Clone, Debug, PartialEq)]
pub struct MappedTree<S> {
    pub tree: RootedTree,
    pub theta: Theta<S>,
    pub vertex_map: Vec<usize>,
}

/// JSON form `{n, parents, theta}` with `parents[k]` the parent of vertex `k+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub n: usize,
    pub parents: Vec<usize>,
    pub theta: Vec<f64>,
}

impl TreeJson {
    pub fn into_tree(self) -> Result<(RootedTree, Theta<f64>)> {
        let tree = RootedTree::from_parents(self.n, &self.parents)?;
        let theta = Theta::new(self.theta);
        theta.check_len(&tree)?;
        Ok((tree, theta))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedTree {
    n: usize,
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    clade: Vec<u64>,
}

impl RootedTree {
    /// Builds a tree from explicit parent pointers.
    ///
    /// `parents[k]` is the parent of vertex `k + 1`. Ids must already satisfy
    /// the ordering rule (every non-root parent has a larger id than its
    /// child); they are kept as given.
    pub fn from_parents(n: usize, parents: &[usize]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTree("a tree needs at least one leaf".into()));
        }
        if n > MAX_LEAVES {
            return Err(Error::TooManyLeaves { n, max: MAX_LEAVES });
        }
        let m = parents.len();
        if m < n {
            return Err(Error::InvalidTree(format!(
                "{m} vertices cannot hold {n} leaves"
            )));
        }
        let mut parent = vec![0; m + 1];
        let mut children = vec![Vec::new(); m + 1];
        for (k, &p) in parents.iter().enumerate() {
            let v = k + 1;
            if p != 0 && (p <= n || p > m) {
                return Err(Error::InvalidTree(format!(
                    "vertex {v} has invalid parent {p}"
                )));
            }
            if p != 0 && p <= v {
                return Err(Error::InvalidTree(format!(
                    "parent {p} of vertex {v} must have a larger id"
                )));
            }
            parent[v] = p;
            children[p].push(v);
        }
        if children[0].len() != 1 {
            return Err(Error::InvalidTree(format!(
                "root 0 must have exactly one child, found {}",
                children[0].len()
            )));
        }
        for v in 1..=n {
            if !children[v].is_empty() {
                return Err(Error::InvalidTree(format!("leaf {v} has children")));
            }
        }
        if m == n && n > 1 {
            return Err(Error::InvalidTree("missing internal vertices".into()));
        }
        for v in n + 1..=m {
            match children[v].len() {
                0 => return Err(Error::InvalidTree(format!("internal vertex {v} has no children"))),
                1 => return Err(Error::DegreeTwo(v)),
                _ => {}
            }
        }
        Ok(Self::finish(n, parent, children))
    }

    fn finish(n: usize, parent: Vec<usize>, mut children: Vec<Vec<usize>>) -> Self {
        let m = parent.len() - 1;
        for c in children.iter_mut() {
            c.sort_unstable();
        }
        let mut depth = vec![0; m + 1];
        for v in (1..=m).rev() {
            depth[v] = depth[parent[v]] + 1;
        }
        let mut clade = vec![0u64; m + 1];
        for v in 1..=m {
            if v <= n {
                clade[v] = 1u64 << (v - 1);
            } else {
                clade[v] = children[v].iter().fold(0, |acc, &c| acc | clade[c]);
            }
        }
        clade[0] = clade[children[0][0]];
        RootedTree {
            n,
            parent,
            children,
            depth,
            clade,
        }
    }

    /// Builds a tree from the clade hanging below vertex `0`, numbering
    /// vertices canonically. Returns the per-vertex data in vertex order.
    pub fn from_clade<T: Clone>(root_child: &Clade<T>) -> Result<(Self, Vec<T>)> {
        let mut labels = Vec::new();
        root_child.collect_labels(&mut labels);
        let n = labels.len();
        if n > MAX_LEAVES {
            return Err(Error::TooManyLeaves { n, max: MAX_LEAVES });
        }
        let mut seen = vec![false; n + 1];
        for &l in &labels {
            if l == 0 || l > n {
                return Err(Error::MissingLeaf {
                    n,
                    missing: (1..=n).find(|&k| !labels.contains(&k)).unwrap_or(n),
                });
            }
            if seen[l] {
                return Err(Error::DuplicateLeaf(l));
            }
            seen[l] = true;
        }
        let m = n + root_child.count_nodes() - labels.len();
        let mut parent = vec![0; m + 1];
        let mut children = vec![Vec::new(); m + 1];
        let mut data: Vec<Option<T>> = vec![None; m + 1];
        let mut next = n + 1;

        fn assign<T: Clone>(
            node: &Clade<T>,
            next: &mut usize,
            parent: &mut [usize],
            children: &mut [Vec<usize>],
            data: &mut [Option<T>],
        ) -> Result<usize> {
            if node.children.is_empty() {
                let l = node.label.expect("leaf labels checked");
                data[l] = Some(node.data.clone());
                return Ok(l);
            }
            let mut order: Vec<&Clade<T>> = node.children.iter().collect();
            order.sort_by_key(|c| c.min_label());
            let mut ids = Vec::with_capacity(order.len());
            for c in order {
                ids.push(assign(c, next, parent, children, data)?);
            }
            let id = *next;
            *next += 1;
            if ids.len() < 2 {
                return Err(Error::DegreeTwo(id));
            }
            for &c in &ids {
                parent[c] = id;
            }
            children[id] = ids;
            data[id] = Some(node.data.clone());
            Ok(id)
        }

        let top = assign(root_child, &mut next, &mut parent, &mut children, &mut data)?;
        parent[top] = 0;
        children[0] = vec![top];
        let data = data.into_iter().skip(1).map(|d| d.expect("every vertex visited")).collect();
        Ok((Self::finish(n, parent, children), data))
    }

    /// Nested description of the tree with vertex ids as node data.
    pub fn to_clade(&self) -> Clade<usize> {
        fn build(t: &RootedTree, v: usize) -> Clade<usize> {
            if t.is_leaf(v) {
                Clade::leaf(v, v)
            } else {
                Clade::node(t.children[v].iter().map(|&c| build(t, c)).collect(), v)
            }
        }
        build(self, self.root_child())
    }

    /// Star tree: all leaves attached to the child of the root.
    pub fn star(n: usize) -> Result<Self> {
        if n == 1 {
            return Self::from_parents(1, &[0]);
        }
        let mut parents = vec![n + 1; n];
        parents.push(0);
        Self::from_parents(n, &parents)
    }

    pub fn n_leaves(&self) -> usize {
        self.n
    }

    /// `|V|`, the number of non-root vertices (equivalently, edges).
    pub fn num_vertices(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn vertices(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.num_vertices()
    }

    pub fn leaves(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.n
    }

    pub fn internal_vertices(&self) -> std::ops::RangeInclusive<usize> {
        self.n + 1..=self.num_vertices()
    }

    pub fn root_child(&self) -> usize {
        self.children[0][0]
    }

    pub fn parent(&self, v: usize) -> usize {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        (1..=self.n).contains(&v)
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn contains(&self, v: usize) -> bool {
        v <= self.num_vertices()
    }

    /// Bitmask of `de(v)`: bit `i - 1` is set for every leaf `i` below `v`.
    pub fn clade_mask(&self, v: usize) -> u64 {
        self.clade[v]
    }

    /// Sorted leaves of `de(v)`.
    pub fn descendants(&self, v: usize) -> Vec<usize> {
        let mask = self.clade[v];
        (1..=self.n).filter(|&i| mask >> (i - 1) & 1 == 1).collect()
    }

    /// `v, parent(v), ...` up to and including the child of the root.
    pub fn ancestors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.depth[v]);
        let mut u = v;
        while u != 0 {
            out.push(u);
            u = self.parent[u];
        }
        out
    }

    /// True when `u` lies on the path from `v` to the root (`u <= v` in the
    /// tree order, with `u` an ancestor of `v` or `v` itself).
    pub fn is_ancestor(&self, u: usize, v: usize) -> bool {
        let mut w = v;
        while self.depth[w] > self.depth[u] {
            w = self.parent[w];
        }
        w == u
    }

    pub fn lca(&self, u: usize, v: usize) -> Result<usize> {
        for x in [u, v] {
            if !self.contains(x) {
                return Err(Error::UnknownVertex(x));
            }
        }
        Ok(self.lca_unchecked(u, v))
    }

    pub(crate) fn lca_unchecked(&self, mut u: usize, mut v: usize) -> usize {
        while self.depth[u] > self.depth[v] {
            u = self.parent[u];
        }
        while self.depth[v] > self.depth[u] {
            v = self.parent[v];
        }
        while u != v {
            u = self.parent[u];
            v = self.parent[v];
        }
        u
    }

    pub fn is_binary(&self) -> bool {
        self.internal_vertices().all(|v| self.children[v].len() == 2)
    }

    /// Vertices whose parent edge lies on the path between `a` and `b` in the
    /// unrooted tree (label `0` is the root leaf).
    pub fn path_edges(&self, a: usize, b: usize) -> Vec<usize> {
        let top = self.lca_unchecked(a, b);
        let mut out = Vec::new();
        for x in [a, b] {
            let mut u = x;
            while u != top {
                out.push(u);
                u = self.parent[u];
            }
        }
        out.sort_unstable();
        out
    }

    /// Number of edges between `a` and `b` in the unrooted tree.
    pub fn edge_distance(&self, a: usize, b: usize) -> usize {
        let top = self.lca_unchecked(a, b);
        self.depth[a] + self.depth[b] - 2 * self.depth[top]
    }

    pub fn quartet_topology(&self, labels: [usize; 4]) -> Result<QuartetTopology> {
        let distinct: BTreeSet<usize> = labels.iter().copied().collect();
        if distinct.len() != 4 || labels.iter().any(|&l| l > self.n) {
            return Err(Error::InvalidQuartet(labels));
        }
        let [a, b, c, d] = labels;
        let dist = |x, y| self.edge_distance(x, y);
        let sums = [
            (dist(a, b) + dist(c, d), Split::new(a, b, c, d)),
            (dist(a, c) + dist(b, d), Split::new(a, c, b, d)),
            (dist(a, d) + dist(b, c), Split::new(a, d, b, c)),
        ];
        let min = sums.iter().map(|s| s.0).min().expect("three pairings");
        let minimal: Vec<_> = sums.iter().filter(|s| s.0 == min).collect();
        Ok(if minimal.len() == 1 {
            QuartetTopology::Trivalent(minimal[0].1)
        } else {
            QuartetTopology::Star
        })
    }

    /// All 4-subsets of `{0..n}` in lexicographic order.
    pub fn quartets(&self) -> Vec<[usize; 4]> {
        let k = self.n + 1;
        let mut out = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                for c in b + 1..k {
                    for d in c + 1..k {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
        out
    }

    /// Subtree spanned by the leaves in `subset`, with leaves relabelled
    /// `1..=|subset|` in increasing order and collapsed edge weights summed.
    pub fn induced_tree<S: Scalar>(&self, theta: &Theta<S>, subset: &[usize]) -> Result<MappedTree<S>> {
        theta.check_len(self)?;
        let leaves: BTreeSet<usize> = subset.iter().copied().collect();
        if leaves.is_empty() {
            return Err(Error::EmptyLeafSet);
        }
        if let Some(&bad) = leaves.iter().find(|&&l| !self.is_leaf(l)) {
            return Err(Error::UnknownVertex(bad));
        }
        let leaves: Vec<usize> = leaves.into_iter().collect();
        let m = self.num_vertices();
        let mut keep = vec![false; m + 1];
        for (k, &i) in leaves.iter().enumerate() {
            for &j in &leaves[k..] {
                keep[self.lca_unchecked(i, j)] = true;
            }
        }
        let kept_parent = |v: usize| {
            let mut u = self.parent[v];
            while u != 0 && !keep[u] {
                u = self.parent[u];
            }
            u
        };
        let mut kids = vec![Vec::new(); m + 1];
        let mut top = 0;
        for v in 1..=m {
            if keep[v] {
                let p = kept_parent(v);
                if p == 0 {
                    top = v;
                }
                kids[p].push(v);
            }
        }
        let rank = |leaf: usize| leaves.binary_search(&leaf).expect("kept leaf") + 1;
        fn build(v: usize, t: &RootedTree, kids: &[Vec<usize>], rank: &dyn Fn(usize) -> usize) -> Clade<usize> {
            if t.is_leaf(v) {
                Clade::leaf(rank(v), v)
            } else {
                Clade::node(kids[v].iter().map(|&c| build(c, t, kids, rank)).collect(), v)
            }
        }
        let clade = build(top, self, &kids, &rank);
        let (tree, origin) = RootedTree::from_clade(&clade)?;
        let weights = origin
            .iter()
            .map(|&v| {
                let stop = kept_parent(v);
                let mut sum = S::zero();
                let mut u = v;
                while u != stop {
                    sum = sum + theta[u].clone();
                    u = self.parent[u];
                }
                sum
            })
            .collect();
        let mut vertex_map = vec![0];
        vertex_map.extend(origin);
        Ok(MappedTree {
            tree,
            theta: Theta::new(weights),
            vertex_map,
        })
    }

    /// Contracts every internal edge with `θ_v <= tol`. Leaf edges and the
    /// root edge are never contracted.
    pub fn contract_zero_edges<S: Scalar>(&self, theta: &Theta<S>, tol: &S) -> Result<MappedTree<S>> {
        theta.check_len(self)?;
        fn build<S: Scalar>(t: &RootedTree, theta: &Theta<S>, tol: &S, v: usize) -> Clade<usize> {
            if t.is_leaf(v) {
                return Clade::leaf(v, v);
            }
            let mut kids = Vec::new();
            for &c in t.children(v) {
                let sub = build(t, theta, tol, c);
                if !t.is_leaf(c) && theta[c] <= *tol {
                    kids.extend(sub.children);
                } else {
                    kids.push(sub);
                }
            }
            Clade::node(kids, v)
        }
        let clade = build(self, theta, tol, self.root_child());
        let (tree, origin) = RootedTree::from_clade(&clade)?;
        let weights = origin.iter().map(|&v| theta[v].clone()).collect();
        let mut vertex_map = vec![0];
        vertex_map.extend(origin);
        Ok(MappedTree {
            tree,
            theta: Theta::new(weights),
            vertex_map,
        })
    }

    /// All trivalent refinements of the unrooted tree, rooted at `0`.
    pub fn binary_refinements(&self) -> Vec<RootedTree> {
        refine(&self.to_clade())
            .iter()
            .map(|c| RootedTree::from_clade(c).expect("refinement of a valid tree").0)
            .collect()
    }

    /// Canonical nested form, independent of vertex numbering.
    pub fn topology_key(&self) -> String {
        fn key(t: &RootedTree, v: usize) -> (usize, String) {
            if t.is_leaf(v) {
                return (v, v.to_string());
            }
            let mut parts: Vec<_> = t.children[v].iter().map(|&c| key(t, c)).collect();
            parts.sort();
            let min = parts[0].0;
            let body: Vec<_> = parts.into_iter().map(|p| p.1).collect();
            (min, format!("({})", body.join(",")))
        }
        key(self, self.root_child()).1
    }

    pub fn to_json(&self, theta: &Theta<f64>) -> TreeJson {
        TreeJson {
            n: self.n,
            parents: self.parent[1..].to_vec(),
            theta: theta.values().to_vec(),
        }
    }

    pub fn to_newick<S: Scalar + Display>(&self, theta: &Theta<S>) -> String {
        fn write<S: Scalar + Display>(t: &RootedTree, theta: &Theta<S>, v: usize, out: &mut String) {
            if t.is_leaf(v) {
                out.push_str(&v.to_string());
            } else {
                out.push('(');
                for (k, &c) in t.children[v].iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    write(t, theta, c, out);
                }
                out.push(')');
            }
            out.push(':');
            out.push_str(&theta[v].to_string());
        }
        let mut out = String::new();
        write(self, theta, self.root_child(), &mut out);
        out.push(';');
        out
    }
}

#[derive(Clone)]
enum Grouping {
    Item(usize),
    Join(Box<Grouping>, Box<Grouping>),
}

/// Every rooted binary tree on items `0..k`, by inserting each new item
/// above every existing node.
fn binary_groupings(k: usize) -> Vec<Grouping> {
    let mut trees = vec![Grouping::Item(0)];
    for item in 1..k {
        let mut next = Vec::new();
        for t in &trees {
            insert_everywhere(t, item, &mut next);
        }
        trees = next;
    }
    trees
}

fn insert_everywhere(t: &Grouping, item: usize, out: &mut Vec<Grouping>) {
    out.push(Grouping::Join(Box::new(t.clone()), Box::new(Grouping::Item(item))));
    if let Grouping::Join(l, r) = t {
        let mut left = Vec::new();
        insert_everywhere(l, item, &mut left);
        for nl in left {
            out.push(Grouping::Join(Box::new(nl), r.clone()));
        }
        let mut right = Vec::new();
        insert_everywhere(r, item, &mut right);
        for nr in right {
            out.push(Grouping::Join(l.clone(), Box::new(nr)));
        }
    }
}

fn refine(clade: &Clade<usize>) -> Vec<Clade<usize>> {
    if clade.children.is_empty() {
        return vec![clade.clone()];
    }
    let mut combos: Vec<Vec<Clade<usize>>> = vec![Vec::new()];
    for child in &clade.children {
        let options = refine(child);
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut p = prefix.clone();
                    p.push(o.clone());
                    p
                })
            })
            .collect();
    }
    let groupings = binary_groupings(clade.children.len());
    let mut out = Vec::new();
    for items in &combos {
        for g in &groupings {
            out.push(realize(g, items, clade.data));
        }
    }
    out
}

fn realize(g: &Grouping, items: &[Clade<usize>], data: usize) -> Clade<usize> {
    match g {
        Grouping::Item(k) => items[*k].clone(),
        Grouping::Join(l, r) => Clade::node(vec![realize(l, items, data), realize(r, items, data)], data),
    }
}

/// All rooted tree shapes with `n` leaves (no unary vertices), leaves
/// labelled `1..=n` from left to right. Counts for `n = 1..=7` are
/// 1, 1, 2, 5, 12, 33, 90.
pub fn all_shapes(n: usize) -> Vec<RootedTree> {
    let shapes = unlabeled_shapes(n);
    shapes[n]
        .iter()
        .map(|s| {
            let mut next = 1;
            let clade = label_shape(s, &mut next);
            RootedTree::from_clade(&clade).expect("generated shape is valid").0
        })
        .collect()
}

/// Binary members of [`all_shapes`].
pub fn binary_shapes(n: usize) -> Vec<RootedTree> {
    all_shapes(n).into_iter().filter(RootedTree::is_binary).collect()
}

#[derive(Clone, Debug)]
struct Shape(Vec<Shape>);

fn unlabeled_shapes(n: usize) -> Vec<Vec<Shape>> {
    let mut by_size: Vec<Vec<Shape>> = vec![Vec::new(), vec![Shape(Vec::new())]];
    for m in 2..=n {
        let mut out = Vec::new();
        let mut parts = Vec::new();
        multisets(m, (1, 0), &by_size, &mut parts, &mut out);
        by_size.push(out);
    }
    by_size
}

/// Nondecreasing sequences of `(size, index)` keys whose sizes sum to `rest`,
/// with at least two parts.
fn multisets(
    rest: usize,
    min: (usize, usize),
    by_size: &[Vec<Shape>],
    parts: &mut Vec<(usize, usize)>,
    out: &mut Vec<Shape>,
) {
    if rest == 0 {
        if parts.len() >= 2 {
            out.push(Shape(parts.iter().map(|&(s, i)| by_size[s][i].clone()).collect()));
        }
        return;
    }
    for size in min.0..=rest {
        // a single part of the full size would be a unary node
        if parts.is_empty() && size == rest {
            continue;
        }
        let start = if size == min.0 { min.1 } else { 0 };
        for idx in start..by_size[size].len() {
            parts.push((size, idx));
            multisets(rest - size, (size, idx), by_size, parts, out);
            parts.pop();
        }
    }
}

fn label_shape(s: &Shape, next: &mut usize) -> Clade<()> {
    if s.0.is_empty() {
        let l = *next;
        *next += 1;
        Clade::leaf(l, ())
    } else {
        Clade::node(s.0.iter().map(|c| label_shape(c, next)).collect(), ())
    }
}

/// Parses `((1:1,2:1):1,(3:1,4:1):1):1;`-style text. The length after the
/// outermost group is `θ` of the root's child. Internal node labels are
/// ignored.
pub fn parse_newick<S: Scalar>(text: &str) -> Result<(RootedTree, Theta<S>)> {
    let mut parser = NewickParser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let clade = parser.subtree()?;
    parser.skip_ws();
    if parser.peek() == Some(b';') {
        parser.pos += 1;
    }
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.error("trailing characters"));
    }
    let (tree, lengths) = RootedTree::from_clade(&clade)?;
    let mut values = Vec::with_capacity(lengths.len());
    for (pos, raw) in lengths {
        let value = S::parse_decimal(&raw).ok_or_else(|| Error::Parse {
            pos,
            msg: format!("invalid branch length {raw:?}"),
        })?;
        values.push(value);
    }
    Ok((tree, Theta::new(values)))
}

struct NewickParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl NewickParser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn token(&mut self) -> &str {
        self.skip_ws();
        let start = self.pos;
        while let Some(b) = self.peek() {
            if matches!(b, b'(' | b')' | b',' | b':' | b';') || b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("")
    }

    fn subtree(&mut self) -> Result<Clade<(usize, String)>> {
        self.skip_ws();
        let mut clade = if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut kids = vec![self.subtree()?];
            loop {
                self.skip_ws();
                match self.peek() {
                    Some(b',') => {
                        self.pos += 1;
                        kids.push(self.subtree()?);
                    }
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected ',' or ')'")),
                }
            }
            self.token();
            Clade::node(kids, (0, String::new()))
        } else {
            let start = self.pos;
            let name = self.token().to_string();
            if name.is_empty() {
                return Err(self.error("expected a leaf label or '('"));
            }
            let label: usize = name.parse().map_err(|_| Error::Parse {
                pos: start,
                msg: format!("leaf label {name:?} is not a positive integer"),
            })?;
            if label == 0 {
                return Err(Error::Parse {
                    pos: start,
                    msg: "leaf label 0 is reserved for the root".into(),
                });
            }
            Clade::leaf(label, (0, String::new()))
        };
        self.skip_ws();
        if self.peek() != Some(b':') {
            return Err(self.error("every edge needs a branch length"));
        }
        self.pos += 1;
        let at = self.pos;
        let length = self.token().to_string();
        if length.is_empty() {
            return Err(self.error("empty branch length"));
        }
        clade.data = (at, length);
        Ok(clade)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};

    pub(crate) const FIG1: &str = "((1:1,2:1):1,(3:1,4:1):1):1;";

    fn fig1() -> RootedTree {
        parse_newick::<f64>(FIG1).unwrap().0
    }

    /// Path between two labels as a vertex set, by walking parent pointers.
    fn path_vertices(t: &RootedTree, a: usize, b: usize) -> BTreeSet<usize> {
        let up = |x: usize| {
            let mut p = vec![x];
            let mut u = x;
            while u != 0 {
                u = t.parent(u);
                p.push(u);
            }
            p
        };
        let pa = up(a);
        let pb = up(b);
        let meet = *pa.iter().find(|v| pb.contains(v)).unwrap();
        pa.iter()
            .take_while(|&&v| v != meet)
            .chain(pb.iter().take_while(|&&v| v != meet))
            .chain(std::iter::once(&meet))
            .copied()
            .collect()
    }

    /// Cherry split by disjointness of the two connecting paths.
    fn split_by_paths(t: &RootedTree, q: [usize; 4]) -> Option<Split> {
        let [a, b, c, d] = q;
        let pairings = [(a, b, c, d), (a, c, b, d), (a, d, b, c)];
        let disjoint: Vec<_> = pairings
            .iter()
            .filter(|&&(w, x, y, z)| path_vertices(t, w, x).is_disjoint(&path_vertices(t, y, z)))
            .collect();
        match disjoint.as_slice() {
            [] => None,
            [&(w, x, y, z)] => Some(Split::new(w, x, y, z)),
            _ => panic!("two disjoint pairings in a tree"),
        }
    }

    #[test]
    fn parses_figure_one_tree() {
        let (t, theta) = parse_newick::<f64>(FIG1).unwrap();
        assert_eq!(t.n_leaves(), 4);
        assert_eq!(t.num_vertices(), 7);
        assert_eq!(theta.values(), &[1.0; 7]);
        assert_eq!(t.children(5), &[1, 2]);
        assert_eq!(t.children(6), &[3, 4]);
        assert_eq!(t.children(7), &[5, 6]);
        assert_eq!(t.root_child(), 7);
        assert!(t.is_binary());
    }

    #[test]
    fn parses_two_leaf_tree() {
        let (t, theta) = parse_newick::<f64>("(1:2,2:3):1;").unwrap();
        assert_eq!(t.num_vertices(), 3);
        assert_eq!(theta.values(), &[2.0, 3.0, 1.0]);
    }

    #[test]
    fn rejects_degree_two_and_bad_input() {
        assert!(matches!(parse_newick::<f64>("((1:1):1,2:1):1;"), Err(Error::DegreeTwo(_))));
        assert!(matches!(parse_newick::<f64>("(1:1,1:1):1;"), Err(Error::DuplicateLeaf(1))));
        assert!(matches!(parse_newick::<f64>("(1:1,3:1):1;"), Err(Error::MissingLeaf { .. })));
        assert!(matches!(parse_newick::<f64>("(1:1,2):1;"), Err(Error::Parse { .. })));
        assert!(matches!(parse_newick::<f64>("(1:1,2:1:1;"), Err(Error::Parse { .. })));
        assert!(matches!(parse_newick::<f64>("(1:1,2:x):1;"), Err(Error::Parse { .. })));
        assert!(matches!(parse_newick::<f64>("(1:1,2:1):1;junk"), Err(Error::Parse { .. })));
    }

    #[test]
    fn exact_branch_lengths() {
        let (_, theta) = parse_newick::<Rational>("(1:0.5,2:1/3):2;").unwrap();
        assert_eq!(theta[1], crate::scalar::frac(1, 2));
        assert_eq!(theta[2], crate::scalar::frac(1, 3));
        assert_eq!(theta[3], rat(2));
    }

    #[test]
    fn numbering_ignores_input_child_order() {
        let (t, theta) = parse_newick::<f64>("((4:4,3:3):6,(2:2,1:1):5):7;").unwrap();
        assert_eq!(t, fig1());
        assert_eq!(theta.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn newick_and_json_round_trip() {
        let (t, theta) = parse_newick::<f64>("((1:0.5,2:1.25):3,3:2,(4:1,5:1):0.25):1;").unwrap();
        let text = t.to_newick(&theta);
        assert_eq!(parse_newick::<f64>(&text).unwrap(), (t.clone(), theta.clone()));
        let json = serde_json::to_string(&t.to_json(&theta)).unwrap();
        let back: TreeJson = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_tree().unwrap(), (t, theta));
    }

    #[test]
    fn from_parents_validates() {
        assert!(RootedTree::from_parents(2, &[3, 3, 0]).is_ok());
        assert!(matches!(RootedTree::from_parents(2, &[4, 3, 0, 3]), Err(Error::InvalidTree(_))));
        assert!(matches!(RootedTree::from_parents(3, &[4, 4, 5, 0, 0]), Err(Error::InvalidTree(_))));
        assert!(matches!(RootedTree::from_parents(2, &[3, 3, 4, 0]), Err(Error::DegreeTwo(4))));
    }

    #[test]
    fn lca_on_figure_one() {
        let t = fig1();
        assert_eq!(t.lca(1, 2).unwrap(), 5);
        assert_eq!(t.lca(1, 3).unwrap(), 7);
        assert_eq!(t.lca(3, 4).unwrap(), 6);
        for v in t.vertices() {
            assert_eq!(t.lca(v, v).unwrap(), v);
        }
        assert_eq!(t.lca(0, 3).unwrap(), 0);
        assert!(matches!(t.lca(1, 9), Err(Error::UnknownVertex(9))));
    }

    #[test]
    fn vertex_order_refines_descendant_containment() {
        for n in 1..=6 {
            for t in all_shapes(n) {
                for u in t.vertices() {
                    for v in t.vertices() {
                        let mu = t.clade_mask(u);
                        let mv = t.clade_mask(v);
                        if mu & !mv == 0 {
                            assert!(u <= v, "{} {u} {v}", t.topology_key());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn quartets_on_figure_one() {
        let t = fig1();
        assert_eq!(
            t.quartet_topology([0, 1, 2, 3]).unwrap(),
            QuartetTopology::Trivalent(Split::new(1, 2, 0, 3))
        );
        assert_eq!(
            t.quartet_topology([1, 2, 3, 4]).unwrap(),
            QuartetTopology::Trivalent(Split::new(1, 2, 3, 4))
        );
        assert!(t.quartet_topology([1, 1, 2, 3]).is_err());
        assert!(t.quartet_topology([1, 2, 3, 5]).is_err());
    }

    #[test]
    fn quartets_match_path_disjointness_oracle() {
        for n in 3..=6 {
            for t in all_shapes(n) {
                for q in t.quartets() {
                    let expected = match split_by_paths(&t, q) {
                        Some(s) => QuartetTopology::Trivalent(s),
                        None => QuartetTopology::Star,
                    };
                    assert_eq!(t.quartet_topology(q).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn star_quartets_everywhere_on_star_tree() {
        let t = RootedTree::star(5).unwrap();
        assert!(t.quartets().iter().all(|&q| t.quartet_topology(q).unwrap() == QuartetTopology::Star));
    }

    #[test]
    fn quartet_topology_invariant_under_split_symmetries() {
        let t = parse_newick::<f64>("(((1:1,2:1):1,3:1):1,(4:1,5:1):1):1;").unwrap().0;
        for q in t.quartets() {
            if let QuartetTopology::Trivalent(s) = t.quartet_topology(q).unwrap() {
                let [a, b, c, d] = s.labels();
                for perm in [
                    [a, b, c, d], [b, a, c, d], [a, b, d, c], [b, a, d, c],
                    [c, d, a, b], [d, c, a, b], [c, d, b, a], [d, c, b, a],
                ] {
                    assert_eq!(t.quartet_topology(perm).unwrap(), QuartetTopology::Trivalent(s));
                }
            }
        }
    }

    #[test]
    fn induced_tree_examples() {
        let t = fig1();
        let theta = Theta::new((1..=7).map(rat).collect::<Vec<Rational>>());
        let sub = t.induced_tree(&theta, &[1, 2, 3]).unwrap();
        assert_eq!(&sub.vertex_map[1..], &[1, 2, 3, 5, 7]);
        assert_eq!(sub.theta.values(), &[rat(1), rat(2), rat(3 + 6), rat(5), rat(7)]);

        let all = t.induced_tree(&theta, &[1, 2, 3, 4]).unwrap();
        assert_eq!(all.tree, t);
        assert_eq!(all.theta, theta);

        // path sums: leaf 1 collects θ1 + θ5, leaf 4 collects θ4 + θ6
        let pair = t.induced_tree(&theta, &[1, 4]).unwrap();
        assert_eq!(pair.tree.num_vertices(), 3);
        assert_eq!(pair.theta.values(), &[rat(1 + 5), rat(4 + 6), rat(7)]);
        assert_eq!(&pair.vertex_map[1..], &[1, 4, 7]);

        assert!(matches!(t.induced_tree(&theta, &[]), Err(Error::EmptyLeafSet)));
        let single = t.induced_tree(&theta, &[3]).unwrap();
        assert_eq!(single.tree.num_vertices(), 1);
        assert_eq!(single.theta.values(), &[rat(3 + 6 + 7)]);
    }

    #[test]
    fn contraction_examples() {
        let t = fig1();
        let mut theta = Theta::constant(7, 1.0);
        theta[5] = 0.0;
        theta[6] = 0.0;
        let star = t.contract_zero_edges(&theta, &1e-9).unwrap();
        assert_eq!(star.tree, RootedTree::star(4).unwrap());
        assert_eq!(star.tree.num_vertices(), 5);

        theta[6] = 1.0;
        let one = t.contract_zero_edges(&theta, &1e-9).unwrap();
        assert_eq!(one.tree.num_vertices(), 6);
        assert_eq!(one.tree.topology_key(), "(1,2,(3,4))");

        let same = t.contract_zero_edges(&Theta::constant(7, 1.0), &1e-9).unwrap();
        assert_eq!(same.tree, t);

        // leaf and root edges stay
        let mut theta = Theta::constant(7, 0.0);
        theta[5] = 1.0;
        let kept = t.contract_zero_edges(&theta, &1e-9).unwrap();
        assert_eq!(kept.tree.n_leaves(), 4);
        assert_eq!(kept.tree.topology_key(), "((1,2),3,4)");
    }

    #[test]
    fn refinement_counts() {
        assert_eq!(fig1().binary_refinements(), vec![fig1()]);
        assert_eq!(RootedTree::star(3).unwrap().binary_refinements().len(), 3);
        assert_eq!(RootedTree::star(4).unwrap().binary_refinements().len(), 15);
        let mixed = parse_newick::<f64>("((1:1,2:1,3:1):1,4:1,5:1):1;").unwrap().0;
        assert_eq!(mixed.binary_refinements().len(), 9);
    }

    #[test]
    fn refinements_are_distinct_binary_and_contract_back() {
        for n in 2..=5 {
            for t in all_shapes(n) {
                let refs = t.binary_refinements();
                let keys: BTreeSet<String> = refs.iter().map(RootedTree::topology_key).collect();
                assert_eq!(keys.len(), refs.len());
                for r in &refs {
                    assert!(r.is_binary());
                    // zero out every edge of r whose clade is not a clade of t
                    let theta = Theta::new(
                        r.vertices()
                            .map(|v| {
                                let m = r.clade_mask(v);
                                if r.is_leaf(v) || t.vertices().any(|u| t.clade_mask(u) == m) {
                                    1.0
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    );
                    assert_eq!(r.contract_zero_edges(&theta, &1e-9).unwrap().tree, t);
                }
            }
        }
    }

    #[test]
    fn shape_counts() {
        let counts: Vec<usize> = (1..=7).map(|n| all_shapes(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 12, 33, 90]);
        let binary: Vec<usize> = (2..=6).map(|n| binary_shapes(n).len()).collect();
        assert_eq!(binary, vec![1, 1, 2, 3, 6]);
        for n in 2..=6 {
            for t in binary_shapes(n) {
                assert_eq!(t.num_vertices(), 2 * n - 1);
            }
        }
    }

    #[test]
    fn descendants_match_masks() {
        let t = fig1();
        assert_eq!(t.descendants(5), vec![1, 2]);
        assert_eq!(t.descendants(7), vec![1, 2, 3, 4]);
        assert_eq!(t.descendants(3), vec![3]);
        assert_eq!(t.ancestors(3), vec![3, 6, 7]);
        assert_eq!(t.path_edges(1, 3), vec![1, 3, 5, 6]);
        assert_eq!(t.path_edges(0, 2), vec![2, 5, 7]);
        assert!(t.is_ancestor(7, 1) && t.is_ancestor(5, 5) && !t.is_ancestor(6, 1));
    }
}
