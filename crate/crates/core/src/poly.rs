//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Variables are identified by tree vertex ids. [`Poly`] is general;
//! [`MultilinearPoly`] stores squarefree monomials as vertex bitmasks.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};

use crate::scalar::Rational;

/// Exponent vector indexed by variable id, trailing zeros trimmed.
///
/// The ordering is degree reverse lexicographic with `x_u ≻ x_v` iff `u < v`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial(Vec<u16>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: usize) -> Self {
        let mut e = vec![0; v + 1];
        e[v] = 1;
        Monomial(e)
    }

    /// Product of the listed variables (repeats raise the exponent).
    pub fn from_vars(vars: &[usize]) -> Self {
        let mut e = Vec::new();
        for &v in vars {
            if e.len() <= v {
                e.resize(v + 1, 0);
            }
            e[v] += 1;
        }
        Monomial(e)
    }

    /// Squarefree monomial with the variables set in `mask`.
    pub fn from_mask(mask: u64) -> Self {
        Self::from_vars(&(0..64).filter(|b| mask >> b & 1 == 1).collect::<Vec<_>>())
    }

    pub fn exponent(&self, v: usize) -> u16 {
        self.0.get(v).copied().unwrap_or(0)
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// Variables with multiplicity, ascending.
    pub fn vars(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(v, &e)| std::iter::repeat(v).take(e as usize))
            .collect()
    }

    pub fn is_squarefree(&self) -> bool {
        self.0.iter().all(|&e| e <= 1)
    }

    /// Support bitmask when squarefree and all ids are below 64.
    pub fn mask(&self) -> Option<u64> {
        if !self.is_squarefree() || self.0.len() > 64 {
            return None;
        }
        Some(self.0.iter().enumerate().filter(|(_, &e)| e == 1).fold(0, |m, (v, _)| m | 1 << v))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let len = self.0.len().max(other.0.len());
        Monomial((0..len).map(|v| self.exponent(v) + other.exponent(v)).collect())
    }

    /// `self / other` when `other` divides `self`.
    pub fn div(&self, other: &Self) -> Option<Self> {
        if other.0.len() > self.0.len() && other.0[self.0.len()..].iter().any(|&e| e > 0) {
            return None;
        }
        let mut e = Vec::with_capacity(self.0.len());
        for v in 0..self.0.len() {
            e.push(self.exponent(v).checked_sub(other.exponent(v))?);
        }
        Some(Monomial(e).trimmed())
    }

    fn trimmed(mut self) -> Self {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
        self
    }

    /// Text like `θ3*θ4^2`; the empty product is `1`.
    pub fn fmt_with(&self, symbol: &str) -> String {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(v, &e)| if e == 1 { format!("{symbol}{v}") } else { format!("{symbol}{v}^{e}") })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let len = self.0.len().max(other.0.len());
            for v in (0..len).rev() {
                match self.exponent(v).cmp(&other.exponent(v)) {
                    Ordering::Equal => continue,
                    // a smaller exponent in the last differing variable wins
                    ord => return ord.reverse(),
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Order used when printing: total degree descending, then the ascending
/// variable lists compared lexicographically.
fn display_key(m: &Monomial) -> (std::cmp::Reverse<usize>, Vec<usize>) {
    (std::cmp::Reverse(m.degree()), m.vars())
}

fn format_terms<'a>(terms: impl Iterator<Item = (Monomial, &'a Rational)>, symbol: &str) -> String {
    let mut sorted: Vec<_> = terms.collect();
    sorted.sort_by_key(|(m, _)| display_key(m));
    if sorted.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (k, (m, c)) in sorted.iter().enumerate() {
        let negative = c.is_negative();
        match (k, negative) {
            (0, true) => out.push('-'),
            (0, false) => {}
            (_, true) => out.push_str(" - "),
            (_, false) => out.push_str(" + "),
        }
        let abs = c.abs();
        if m.degree() == 0 {
            let _ = write!(out, "{abs}");
        } else if abs.is_one() {
            out.push_str(&m.fmt_with(symbol));
        } else {
            let _ = write!(out, "{abs}*{}", m.fmt_with(symbol));
        }
    }
    out
}

/// Polynomial as a map from monomials to nonzero coefficients.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        Self::term(Monomial::one(), c)
    }

    pub fn var(v: usize) -> Self {
        Self::term(Monomial::var(v), Rational::one())
    }

    pub fn term(m: Monomial, c: Rational) -> Self {
        let mut p = Poly::zero();
        p.add_term(m, c);
        p
    }

    /// Sum of the given variables, e.g. a path sum `θ_u + θ_w + ...`.
    pub fn linear(vars: impl IntoIterator<Item = usize>) -> Self {
        let mut p = Poly::zero();
        for v in vars {
            p.add_term(Monomial::var(v), Rational::one());
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        let m = m.trimmed();
        match self.terms.get_mut(&m) {
            Some(x) => {
                *x += c;
                if x.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in increasing grevlex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn total_degree(&self) -> Option<usize> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degrees = self.terms.keys().map(Monomial::degree);
        match degrees.next() {
            Some(d) => degrees.all(|e| e == d),
            None => true,
        }
    }

    /// Leading term in the grevlex order.
    pub fn leading_term(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().next_back()
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, x)| (m.clone(), x * c)).collect(),
        }
    }

    fn mul_term(&self, m: &Monomial, c: &Rational) -> Self {
        Poly {
            terms: self.terms.iter().map(|(k, x)| (k.mul(m), x * c)).collect(),
        }
    }

    /// Exact quotient `self / divisor`, or `None` when the division leaves a
    /// remainder. A single divisor forms a Gröbner basis of its ideal, so the
    /// division algorithm decides divisibility.
    pub fn div_exact(&self, divisor: &Poly) -> Option<Poly> {
        let (lm, lc) = divisor.leading_term()?;
        let (lm, lc) = (lm.clone(), lc.clone());
        let mut rest = self.clone();
        let mut quotient = Poly::zero();
        while let Some((m, c)) = rest.leading_term() {
            let factor = m.div(&lm)?;
            let coef = c / &lc;
            rest = &rest - &divisor.mul_term(&factor, &coef);
            quotient.add_term(factor, coef);
        }
        Some(quotient)
    }

    /// Replaces every variable `v` by `f(v)`.
    pub fn substitute(&self, f: impl Fn(usize) -> Poly) -> Poly {
        let mut cache: BTreeMap<usize, Poly> = BTreeMap::new();
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(c.clone());
            for v in m.vars() {
                let image = cache.entry(v).or_insert_with(|| f(v));
                acc = &acc * &*image;
            }
            out = &out + &acc;
        }
        out
    }

    /// Value at `point[v]` for each variable `v`.
    pub fn evaluate(&self, point: &[Rational]) -> Rational {
        self.terms.iter().fold(Rational::zero(), |acc, (m, c)| {
            m.vars().iter().fold(c.clone(), |x, &v| x * &point[v]) + acc
        })
    }

    pub fn coefficients_nonnegative(&self) -> bool {
        self.terms.values().all(|c| !c.is_negative())
    }

    /// The first term with a negative coefficient, if any.
    pub fn negative_term(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().find(|(_, c)| c.is_negative())
    }

    pub fn fmt_with(&self, symbol: &str) -> String {
        format_terms(self.terms.iter().map(|(m, c)| (m.clone(), c)), symbol)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&-Rational::one())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                out.add_term(a.mul(b), x * y);
            }
        }
        out
    }
}

/// Polynomial whose monomials are squarefree, stored as vertex bitmasks.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct MultilinearPoly {
    terms: BTreeMap<u64, Rational>,
}

impl MultilinearPoly {
    pub fn zero() -> Self {
        MultilinearPoly::default()
    }

    pub fn one() -> Self {
        Self::monomial(0)
    }

    pub fn monomial(mask: u64) -> Self {
        let mut p = Self::zero();
        p.add_term(mask, Rational::one());
        p
    }

    pub fn add_term(&mut self, mask: u64, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(mask).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&mask);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, &Rational)> {
        self.terms.iter().map(|(m, c)| (*m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, mask: u64) -> bool {
        self.terms.contains_key(&mask)
    }

    pub fn all_coefficients_one(&self) -> bool {
        self.terms.values().all(One::is_one)
    }

    /// Product by support union; `None` if two supports overlap, which
    /// would create a square.
    pub fn checked_mul(&self, other: &Self) -> Option<Self> {
        let mut out = Self::zero();
        for (&a, x) in &self.terms {
            for (&b, y) in &other.terms {
                if a & b != 0 {
                    return None;
                }
                out.add_term(a | b, x * y);
            }
        }
        Some(out)
    }

    pub fn to_poly(&self) -> Poly {
        let mut p = Poly::zero();
        for (&mask, c) in &self.terms {
            p.add_term(Monomial::from_mask(mask), c.clone());
        }
        p
    }

    /// The multilinear form of `p`, or `None` if some monomial has a square.
    pub fn from_poly(p: &Poly) -> Option<Self> {
        let mut out = Self::zero();
        for (m, c) in p.terms() {
            out.add_term(m.mask()?, c.clone());
        }
        Some(out)
    }

    pub fn evaluate(&self, point: &[Rational]) -> Rational {
        self.to_poly().evaluate(point)
    }

    pub fn fmt_with(&self, symbol: &str) -> String {
        format_terms(self.terms.iter().map(|(&m, c)| (Monomial::from_mask(m), c)), symbol)
    }

    /// `{monomial: coefficient}` with keys like `"θ5*θ6"` and exact
    /// coefficients as strings.
    pub fn to_json(&self, symbol: &str) -> serde_json::Value {
        let map = self
            .terms
            .iter()
            .map(|(&m, c)| (Monomial::from_mask(m).fmt_with(symbol), serde_json::Value::String(c.to_string())))
            .collect();
        serde_json::Value::Object(map)
    }
}

/// JSON `{monomial: coefficient}` for a general polynomial.
pub fn poly_to_json(p: &Poly, symbol: &str) -> serde_json::Value {
    serde_json::Value::Object(
        p.terms()
            .map(|(m, c)| (m.fmt_with(symbol), serde_json::Value::String(c.to_string())))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{frac, rat};
    use proptest::prelude::*;

    fn t(v: usize) -> Poly {
        Poly::var(v)
    }

    #[test]
    fn grevlex_prefers_smaller_ids() {
        let m = |vars: &[usize]| Monomial::from_vars(vars);
        // degree first
        assert!(m(&[7, 7]) > m(&[1]));
        // t1 ≻ t2 ≻ ...
        assert!(m(&[1]) > m(&[2]));
        // reverse lex: the monomial without the last variable wins
        assert!(m(&[2, 2]) > m(&[1, 3]));
        assert!(m(&[1, 3, 5]) > m(&[1, 2, 6]));
        let p = &(&t(2) - &t(5)) * &t(7);
        assert_eq!(p.leading_term().unwrap().0, &m(&[2, 7]));
    }

    #[test]
    fn display_format() {
        let p = &t(2) - &t(5);
        assert_eq!(p.fmt_with("t"), "t2 - t5");
        let q = &(&t(3) * &t(3)).scale(&frac(3, 2)) - &Poly::constant(rat(2));
        assert_eq!(q.fmt_with("t"), "3/2*t3^2 - 2");
        assert_eq!(Poly::zero().fmt_with("t"), "0");
        let mut ml = MultilinearPoly::zero();
        for mask in [1 << 6 | 1 << 7, 1 << 5 | 1 << 6, 1 << 5 | 1 << 7] {
            ml.add_term(mask, rat(1));
        }
        assert_eq!(ml.fmt_with("θ"), "θ5*θ6 + θ5*θ7 + θ6*θ7");
        assert_eq!(ml.to_json("θ")["θ5*θ6"], "1");
    }

    #[test]
    fn exact_division() {
        let a = &t(1) + &t(2);
        let b = &(&t(3) - &t(1)) * &t(4);
        let prod = &a * &b;
        assert_eq!(prod.div_exact(&a), Some(b.clone()));
        assert_eq!(prod.div_exact(&b), Some(a.clone()));
        assert_eq!((&prod + &Poly::one()).div_exact(&a), None);
        assert_eq!(Poly::zero().div_exact(&a), Some(Poly::zero()));
    }

    #[test]
    fn multilinear_products() {
        let a = MultilinearPoly::monomial(0b10);
        let b = MultilinearPoly::monomial(0b100);
        assert_eq!(a.checked_mul(&b), Some(MultilinearPoly::monomial(0b110)));
        assert_eq!(a.checked_mul(&a), None);
        let sq = &t(1) * &t(1);
        assert_eq!(MultilinearPoly::from_poly(&sq), None);
        assert_eq!(MultilinearPoly::from_poly(&a.to_poly()), Some(a));
    }

    fn small_poly() -> impl Strategy<Value = Poly> {
        proptest::collection::vec((proptest::collection::vec(1usize..5, 0..3), -3i64..4), 0..5).prop_map(|terms| {
            let mut p = Poly::zero();
            for (vars, c) in terms {
                p.add_term(Monomial::from_vars(&vars), rat(c));
            }
            p
        })
    }

    proptest! {
        #[test]
        fn ring_laws_and_division(a in small_poly(), b in small_poly(), point in proptest::collection::vec(-5i64..6, 5)) {
            let point: Vec<Rational> = point.into_iter().map(rat).collect();
            let prod = &a * &b;
            prop_assert_eq!(prod.evaluate(&point), a.evaluate(&point) * b.evaluate(&point));
            prop_assert_eq!((&a + &b).evaluate(&point), a.evaluate(&point) + b.evaluate(&point));
            prop_assert_eq!(&(&a - &a), &Poly::zero());
            if !b.is_zero() {
                prop_assert_eq!(prod.div_exact(&b), Some(a.clone()));
            }
            let shifted = a.substitute(|v| &Poly::var(v) + &Poly::one());
            let moved: Vec<Rational> = point.iter().map(|x| x + rat(1)).collect();
            prop_assert_eq!(shifted.evaluate(&point), a.evaluate(&moved));
        }
    }
}
