//! Polynomials in the CAR generators `a(d)`, `ad(d)` over dyadic indices.
//!
//! Every stored word is in normal (Wick) order: creators first with strictly
//! increasing indices, then annihilators with strictly decreasing indices.
//! Products are reduced with `{a_j, ad_k} = delta_jk`, `{a_j, a_k} = 0` and
//! `{ad_j, ad_k} = 0`.

mod parse;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::dyadic::DyadicIndex;
use crate::error::Result;

pub use parse::parse_expression;

/// Coefficients below this magnitude are dropped.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// `a(index)` when `dagger` is false, `ad(index)` otherwise.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct GeneratorSymbol {
    pub index: DyadicIndex,
    pub dagger: bool,
}

impl GeneratorSymbol {
    pub fn annihilator(index: impl Into<DyadicIndex>) -> Self {
        GeneratorSymbol {
            index: index.into(),
            dagger: false,
        }
    }

    pub fn creator(index: impl Into<DyadicIndex>) -> Self {
        GeneratorSymbol {
            index: index.into(),
            dagger: true,
        }
    }

    pub fn adjoint(self) -> Self {
        GeneratorSymbol {
            index: self.index,
            dagger: !self.dagger,
        }
    }
}

/// Normal order: creators before annihilators, creators ascending,
/// annihilators descending.
impl Ord for GeneratorSymbol {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.dagger, other.dagger) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (true, true) => self.index.cmp(&other.index),
            (false, false) => other.index.cmp(&self.index),
        }
    }
}

impl PartialOrd for GeneratorSymbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GeneratorSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = if self.dagger { "ad" } else { "a" };
        write!(f, "{name}({})", self.index)
    }
}

/// A normal-ordered product of generators. Ordered by degree, then
/// lexicographically by symbol.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Word(Vec<GeneratorSymbol>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Builds a word from symbols that are already strictly increasing in
    /// normal order. Returns `None` otherwise.
    pub fn from_normal(symbols: Vec<GeneratorSymbol>) -> Option<Self> {
        symbols
            .windows(2)
            .all(|w| w[0] < w[1])
            .then_some(Word(symbols))
    }

    pub fn symbols(&self) -> &[GeneratorSymbol] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_odd(&self) -> bool {
        self.0.len() % 2 == 1
    }

    pub fn creators(&self) -> impl Iterator<Item = DyadicIndex> + '_ {
        self.0.iter().filter(|s| s.dagger).map(|s| s.index)
    }

    /// Annihilator indices in stored (descending) order.
    pub fn annihilators(&self) -> impl Iterator<Item = DyadicIndex> + '_ {
        self.0.iter().filter(|s| !s.dagger).map(|s| s.index)
    }

    /// Reverse and flip daggers. The adjoint of a normal word is again
    /// normal with sign +1.
    pub fn adjoint(&self) -> Word {
        Word(self.0.iter().rev().map(|s| s.adjoint()).collect())
    }

    fn creator_count(&self) -> usize {
        self.0.partition_point(|s| s.dagger)
    }

    /// `self * s`, reduced: at most a contraction term and a reordered term.
    fn times_symbol(&self, s: GeneratorSymbol, mut emit: impl FnMut(f64, Word)) {
        let split = self.creator_count();
        let (creators, annihilators) = self.0.split_at(split);
        if !s.dagger {
            if annihilators.iter().any(|x| x.index == s.index) {
                return;
            }
            let passed = annihilators.iter().filter(|x| x.index < s.index).count();
            let at = split + annihilators.len() - passed;
            let mut out = Vec::with_capacity(self.0.len() + 1);
            out.extend_from_slice(&self.0[..at]);
            out.push(s);
            out.extend_from_slice(&self.0[at..]);
            emit(sign(passed), Word(out));
            return;
        }
        let r = annihilators.len();
        if let Some(i) = annihilators.iter().position(|x| x.index == s.index) {
            let mut out = Vec::with_capacity(self.0.len() - 1);
            out.extend_from_slice(creators);
            out.extend(annihilators.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| *x));
            emit(sign(r - 1 - i), Word(out));
        }
        if creators.iter().any(|x| x.index == s.index) {
            return;
        }
        let passed = creators.iter().filter(|x| x.index > s.index).count();
        let at = split - passed;
        let mut out = Vec::with_capacity(self.0.len() + 1);
        out.extend_from_slice(&self.0[..at]);
        out.push(s);
        out.extend_from_slice(&self.0[at..]);
        emit(sign(r + passed), Word(out));
    }
}

fn sign(swaps: usize) -> f64 {
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// One term of a polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct CarMonomial {
    pub coefficient: Complex64,
    pub word: Word,
}

/// A finite complex combination of normal-ordered words.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CarPolynomial {
    terms: BTreeMap<Word, Complex64>,
}

type Terms = BTreeMap<Word, Complex64>;

fn accumulate(terms: &mut Terms, word: Word, c: Complex64) {
    *terms.entry(word).or_insert(Complex64::new(0.0, 0.0)) += c;
}

fn pruned(mut terms: Terms) -> CarPolynomial {
    terms.retain(|_, c| c.norm() >= ZERO_THRESHOLD);
    CarPolynomial { terms }
}

/// Right-multiplies every term by a linear combination of generators.
fn times_linear(terms: &Terms, form: &[(Complex64, GeneratorSymbol)]) -> Terms {
    let mut out = Terms::new();
    for (word, &c) in terms {
        for &(f, s) in form {
            word.times_symbol(s, |sg, w| accumulate(&mut out, w, c * f * sg));
        }
    }
    out
}

impl CarPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::scalar(Complex64::new(1.0, 0.0))
    }

    pub fn scalar(c: Complex64) -> Self {
        pruned(Terms::from([(Word::empty(), c)]))
    }

    pub fn generator(s: GeneratorSymbol) -> Self {
        Self::from_word(Word(vec![s]), Complex64::new(1.0, 0.0))
    }

    pub fn a(index: impl Into<DyadicIndex>) -> Self {
        Self::generator(GeneratorSymbol::annihilator(index))
    }

    pub fn ad(index: impl Into<DyadicIndex>) -> Self {
        Self::generator(GeneratorSymbol::creator(index))
    }

    pub fn from_word(word: Word, c: Complex64) -> Self {
        pruned(Terms::from([(word, c)]))
    }

    /// Normal-orders an arbitrary product of generators.
    pub fn product_of(symbols: &[GeneratorSymbol]) -> Self {
        let mut terms = Terms::from([(Word::empty(), Complex64::new(1.0, 0.0))]);
        for &s in symbols {
            terms = times_linear(&terms, &[(Complex64::new(1.0, 0.0), s)]);
        }
        pruned(terms)
    }

    /// The self-adjoint position operator `a(i) + ad(i)`.
    pub fn position(index: impl Into<DyadicIndex>) -> Self {
        let index = index.into();
        Self::a(index) + Self::ad(index)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Complex64)> {
        self.terms.iter()
    }

    pub fn monomials(&self) -> Vec<CarMonomial> {
        self.terms
            .iter()
            .map(|(w, &c)| CarMonomial {
                coefficient: c,
                word: w.clone(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, word: &Word) -> Complex64 {
        self.terms.get(word).copied().unwrap_or_default()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::degree).max().unwrap_or(0)
    }

    /// Union of the indices over all terms.
    pub fn support(&self) -> BTreeSet<DyadicIndex> {
        self.terms
            .keys()
            .flat_map(|w| w.0.iter().map(|s| s.index))
            .collect()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        pruned(self.terms.iter().map(|(w, &x)| (w.clone(), x * c)).collect())
    }

    pub fn multiply(&self, other: &Self) -> Self {
        let mut out = Terms::new();
        for (w2, &c2) in &other.terms {
            let mut cur: Terms = self.terms.iter().map(|(w, &c)| (w.clone(), c * c2)).collect();
            for &s in &w2.0 {
                cur = times_linear(&cur, &[(Complex64::new(1.0, 0.0), s)]);
            }
            for (w, c) in cur {
                accumulate(&mut out, w, c);
            }
        }
        pruned(out)
    }

    pub fn adjoint(&self) -> Self {
        pruned(self.terms.iter().map(|(w, c)| (w.adjoint(), c.conj())).collect())
    }

    /// The grading automorphism: each word scaled by `(-1)^degree`.
    pub fn parity_map(&self) -> Self {
        pruned(
            self.terms
                .iter()
                .map(|(w, &c)| (w.clone(), if w.is_odd() { -c } else { c }))
                .collect(),
        )
    }

    /// `(even part, odd part)`.
    pub fn even_odd_split(&self) -> (Self, Self) {
        let (odd, even): (Terms, Terms) = self
            .terms
            .iter()
            .map(|(w, &c)| (w.clone(), c))
            .partition(|(w, _)| w.is_odd());
        (CarPolynomial { terms: even }, CarPolynomial { terms: odd })
    }

    pub fn is_even(&self) -> bool {
        self.terms.keys().all(|w| !w.is_odd())
    }

    /// Applies an index map to every generator and re-normalizes.
    /// The map must be injective on the support.
    pub fn relabel<F>(&self, mut map: F) -> Result<Self>
    where
        F: FnMut(DyadicIndex) -> Result<DyadicIndex>,
    {
        let mut out = Terms::new();
        for (w, &c) in &self.terms {
            let mut cur = Terms::from([(Word::empty(), c)]);
            for s in &w.0 {
                let image = GeneratorSymbol {
                    index: map(s.index)?,
                    dagger: s.dagger,
                };
                cur = times_linear(&cur, &[(Complex64::new(1.0, 0.0), image)]);
            }
            for (w, c) in cur {
                accumulate(&mut out, w, c);
            }
        }
        Ok(pruned(out))
    }

    /// Replaces each generator by a linear combination of generators and
    /// expands, i.e. applies the algebra endomorphism the substitution defines.
    pub fn substitute<F>(&self, mut image: F) -> Self
    where
        F: FnMut(GeneratorSymbol) -> Vec<(Complex64, GeneratorSymbol)>,
    {
        let mut out = Terms::new();
        for (w, &c) in &self.terms {
            let mut cur = Terms::from([(Word::empty(), c)]);
            for &s in &w.0 {
                cur = times_linear(&cur, &image(s));
            }
            for (w, c) in cur {
                accumulate(&mut out, w, c);
            }
        }
        pruned(out)
    }

    /// Largest coefficient deviation between the two polynomials.
    pub fn distance(&self, other: &Self) -> f64 {
        let keys: BTreeSet<&Word> = self.terms.keys().chain(other.terms.keys()).collect();
        keys.into_iter()
            .map(|w| (self.coefficient(w) - other.coefficient(w)).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.distance(other) <= tol
    }

    fn combine(&self, other: &Self, factor: f64) -> Self {
        let mut terms = self.terms.clone();
        for (w, &c) in &other.terms {
            accumulate(&mut terms, w.clone(), c * factor);
        }
        pruned(terms)
    }
}

impl Add for CarPolynomial {
    type Output = CarPolynomial;
    fn add(self, rhs: Self) -> Self {
        self.combine(&rhs, 1.0)
    }
}

impl<'a> Add<&'a CarPolynomial> for &'a CarPolynomial {
    type Output = CarPolynomial;
    fn add(self, rhs: Self) -> CarPolynomial {
        self.combine(rhs, 1.0)
    }
}

impl Sub for CarPolynomial {
    type Output = CarPolynomial;
    fn sub(self, rhs: Self) -> Self {
        self.combine(&rhs, -1.0)
    }
}

impl<'a> Sub<&'a CarPolynomial> for &'a CarPolynomial {
    type Output = CarPolynomial;
    fn sub(self, rhs: Self) -> CarPolynomial {
        self.combine(rhs, -1.0)
    }
}

impl Neg for CarPolynomial {
    type Output = CarPolynomial;
    fn neg(self) -> Self {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for CarPolynomial {
    type Output = CarPolynomial;
    fn mul(self, rhs: Self) -> Self {
        self.multiply(&rhs)
    }
}

impl<'a> Mul<&'a CarPolynomial> for &'a CarPolynomial {
    type Output = CarPolynomial;
    fn mul(self, rhs: Self) -> CarPolynomial {
        self.multiply(rhs)
    }
}

impl fmt::Display for CarPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&parse::render(self))
    }
}

/// Serialised as the rendered text.
impl serde::Serialize for CarPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&parse::render(self))
    }
}

impl<'de> serde::Deserialize<'de> for CarPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = <String as serde::Deserialize>::deserialize(d)?;
        parse_expression(&text).map_err(serde::de::Error::custom)
    }
}

/// All normal words over `window` with at most `max_degree` factors, in
/// word order.
pub fn normal_words(window: &[DyadicIndex], max_degree: usize) -> Vec<Word> {
    let mut sorted: Vec<DyadicIndex> = window.to_vec();
    sorted.sort();
    sorted.dedup();
    let n = sorted.len();
    let mut out = Vec::new();
    for cmask in 0u32..(1 << n) {
        let c = cmask.count_ones() as usize;
        if c > max_degree {
            continue;
        }
        for amask in 0u32..(1 << n) {
            if c + amask.count_ones() as usize > max_degree {
                continue;
            }
            let mut symbols: Vec<GeneratorSymbol> = (0..n)
                .filter(|i| cmask >> i & 1 == 1)
                .map(|i| GeneratorSymbol::creator(sorted[i]))
                .collect();
            symbols.extend(
                (0..n)
                    .rev()
                    .filter(|i| amask >> i & 1 == 1)
                    .map(|i| GeneratorSymbol::annihilator(sorted[i])),
            );
            out.push(Word(symbols));
        }
    }
    out.sort();
    out
}
