//! The right Følner sets `F_n` of the spreading semigroup.
//!
//! `F_n` is parametrised by an exponent tuple `(h_{-n}, ..., h_n)` with
//! `Σ h_i <= n²` and a shift `l ∈ [-n, n]`; the element is
//! `θ_{-n}^{h_{-n}} ... θ_n^{h_n} τ^l`. Enumerations are streamed in
//! lexicographic tuple order with the shift varying fastest. Parallel
//! reductions split the tuple space by its first coordinates and combine
//! partial results in that fixed order, so results do not depend on the
//! thread count.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{folner_word_to_map, SpreadingMap};
use crate::car_expr::CarPolynomial;
use crate::dyadic::DyadicIndex;
use crate::error::{Error, Result};
use crate::states::StateFunctional;

/// Largest `n` that is enumerated exhaustively.
pub const ENUMERATION_CAP: u32 = 4;

/// Largest `n` for which the distinct-map set is materialised.
pub const DISTINCT_MAP_CAP: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolnerParameters {
    pub n: u32,
}

impl FolnerParameters {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("Følner index n must be at least 1".into()));
        }
        Ok(FolnerParameters { n })
    }

    /// Number of exponents, `2n + 1`.
    pub fn arity(&self) -> usize {
        2 * self.n as usize + 1
    }

    /// Bound `n²` on the exponent sum.
    pub fn budget(&self) -> u32 {
        self.n * self.n
    }

    pub fn shifts(&self) -> std::ops::RangeInclusive<i64> {
        -(self.n as i64)..=self.n as i64
    }

    fn check_cap(&self, cap: u32) -> Result<()> {
        if self.n > cap {
            return Err(Error::CapExceeded { n: self.n, cap });
        }
        Ok(())
    }
}

/// `|F_n| = (2n + 1) · C(n² + 2n + 1, n²)`.
pub fn folner_count(n: u32) -> BigUint {
    let b = BigUint::from(n) * n;
    let arity = BigUint::from(2 * n + 1);
    binomial(&b + &arity, b) * arity
}

/// One parametrised element of `F_n`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FolnerWord {
    pub exponents: Vec<u32>,
    pub shift: i64,
}

impl FolnerWord {
    pub fn to_map(&self) -> SpreadingMap {
        folner_word_to_map(&self.exponents, self.shift)
    }
}

/// Non-negative tuples of fixed length with sum at most `budget`, in
/// lexicographic order.
#[derive(Clone, Debug)]
pub struct ExponentTuples {
    current: Option<Vec<u32>>,
    budget: u32,
}

impl ExponentTuples {
    pub fn new(len: usize, budget: u32) -> Self {
        ExponentTuples {
            current: Some(vec![0; len]),
            budget,
        }
    }
}

impl Iterator for ExponentTuples {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        // Increment the rightmost position whose prefix sum leaves room.
        let mut prefix = 0;
        let mut target = None;
        for (i, &h) in next.iter().enumerate() {
            prefix += h;
            if prefix < self.budget {
                target = Some(i);
            }
        }
        if let Some(i) = target {
            next[i] += 1;
            next[i + 1..].iter_mut().for_each(|h| *h = 0);
            self.current = Some(next);
        }
        Some(out)
    }
}

/// Lexicographic stream over the tuples with the given prefix.
fn tuples_with_prefix(prefix: &[u32], len: usize, budget: u32) -> impl Iterator<Item = Vec<u32>> + '_ {
    let used: u32 = prefix.iter().sum();
    ExponentTuples::new(len - prefix.len(), budget - used).map(move |rest| {
        let mut t = prefix.to_vec();
        t.extend(rest);
        t
    })
}

/// Prefixes of depth up to two, in lexicographic order; the unit of
/// parallel work.
fn work_prefixes(p: &FolnerParameters) -> Vec<Vec<u32>> {
    let depth = 2.min(p.arity() - 1);
    ExponentTuples::new(depth, p.budget()).collect()
}

/// Runs `chunk` on every prefix in parallel and returns the partial
/// results in prefix order.
fn map_chunks<T, F>(p: &FolnerParameters, chunk: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut dyn Iterator<Item = Vec<u32>>) -> T + Sync,
{
    let (len, budget) = (p.arity(), p.budget());
    work_prefixes(p)
        .par_iter()
        .map(|prefix| chunk(&mut tuples_with_prefix(prefix, len, budget)))
        .collect()
}

/// Every element of `F_n` as a parameter tuple.
pub fn enumerate_folner_words(n: u32) -> Result<impl Iterator<Item = FolnerWord>> {
    let p = FolnerParameters::new(n)?;
    p.check_cap(ENUMERATION_CAP)?;
    let shifts = p.shifts();
    Ok(ExponentTuples::new(p.arity(), p.budget()).flat_map(move |exponents| {
        shifts.clone().map(move |shift| FolnerWord {
            exponents: exponents.clone(),
            shift,
        })
    }))
}

/// Every element of `F_n` as a map, one per parameter tuple.
pub fn enumerate_folner(n: u32) -> Result<impl Iterator<Item = SpreadingMap>> {
    Ok(enumerate_folner_words(n)?.map(|w| w.to_map()))
}

/// Whether `F_n` is counted over parameter tuples or over the distinct
/// maps they induce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    Tuples,
    DistinctMaps,
}

/// `F_n` as a multiset of maps with multiplicities.
pub fn folner_multiset(n: u32, mode: CountingMode) -> Result<BTreeMap<SpreadingMap, u64>> {
    let p = FolnerParameters::new(n)?;
    p.check_cap(DISTINCT_MAP_CAP)?;
    let mut out = BTreeMap::new();
    for map in enumerate_folner(n)? {
        let slot = out.entry(map).or_insert(0);
        *slot = match mode {
            CountingMode::Tuples => *slot + 1,
            CountingMode::DistinctMaps => 1,
        };
    }
    Ok(out)
}

pub fn folner_size(n: u32, mode: CountingMode) -> Result<BigUint> {
    match mode {
        CountingMode::Tuples => {
            FolnerParameters::new(n)?;
            Ok(folner_count(n))
        }
        CountingMode::DistinctMaps => Ok(BigUint::from(folner_multiset(n, mode)?.len())),
    }
}

/// `|F_n Δ F_n h| / |F_n|`. With [`CountingMode::DistinctMaps`] both sides
/// are sets; with [`CountingMode::Tuples`] `F_n h` keeps multiplicities, and
/// since `f -> f ∘ h` is not injective (`θ_1 θ_0 = θ_0 θ_0`) collisions
/// count towards the difference.
pub fn right_folner_ratio(n: u32, h: &SpreadingMap, mode: CountingMode) -> Result<BigRational> {
    let base = folner_multiset(n, mode)?;
    let mut translated: BTreeMap<SpreadingMap, u64> = BTreeMap::new();
    for (f, &c) in &base {
        let slot = translated.entry(f.compose(h)).or_insert(0);
        *slot = match mode {
            CountingMode::Tuples => *slot + c,
            CountingMode::DistinctMaps => 1,
        };
    }
    let mut diff = 0u64;
    for (f, &c) in &base {
        diff += c.abs_diff(translated.get(f).copied().unwrap_or(0));
    }
    for (f, &c) in &translated {
        if !base.contains_key(f) {
            diff += c;
        }
    }
    let size: u64 = base.values().sum();
    Ok(BigRational::new(diff.into(), size.into()))
}

/// Exact counts of the subsets of `F_n` whose image of `[-n, n]` reaches
/// `[-m, m]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolnerSubsetReport {
    pub n: u32,
    pub m: u32,
    #[serde(with = "big_string")]
    pub f_count: BigUint,
    /// Elements with an endpoint image in `[-m, m]`; equals `|H ∪ K|`.
    #[serde(with = "big_string")]
    pub g_count: BigUint,
    /// Elements with `h(-n) ∈ [-m, m]`.
    #[serde(with = "big_string")]
    pub h_count: BigUint,
    /// Elements with `h(n) ∈ [-m, m]`.
    #[serde(with = "big_string")]
    pub k_count: BigUint,
    /// Elements with some `h(k) ∈ [-m, m]` for `k ∈ [-n, n]`; a monotone map
    /// can jump over `[-m, m]`'s endpoints, so this exceeds `g_count`.
    #[serde(with = "big_string")]
    pub g_full_count: BigUint,
}

mod big_string {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn ratio_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl FolnerSubsetReport {
    pub fn g_ratio(&self) -> BigRational {
        BigRational::new(self.g_count.clone().into(), self.f_count.clone().into())
    }

    pub fn h_ratio(&self) -> BigRational {
        BigRational::new(self.h_count.clone().into(), self.f_count.clone().into())
    }

    pub fn k_ratio(&self) -> BigRational {
        BigRational::new(self.k_count.clone().into(), self.f_count.clone().into())
    }

    pub fn g_full_ratio(&self) -> BigRational {
        BigRational::new(self.g_full_count.clone().into(), self.f_count.clone().into())
    }

    /// `2^{m+n}`.
    pub fn h_bound(&self) -> BigUint {
        BigUint::one() << (self.m + self.n)
    }

    pub fn h_bound_holds(&self) -> bool {
        self.h_count <= self.h_bound()
    }

    pub fn csv_row(&self) -> FolnerCsvRow {
        FolnerCsvRow {
            n: self.n,
            m: self.m,
            f_count: self.f_count.to_string(),
            g_count: self.g_count.to_string(),
            h_count: self.h_count.to_string(),
            k_count: self.k_count.to_string(),
            g_ratio: ratio_f64(&self.g_ratio()),
            h_bound: self.h_bound().to_string(),
        }
    }

    pub fn json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serialises");
        let extra = serde_json::json!({
            "g_ratio": ratio_f64(&self.g_ratio()),
            "g_ratio_exact": self.g_ratio().to_string(),
            "h_ratio": ratio_f64(&self.h_ratio()),
            "h_ratio_exact": self.h_ratio().to_string(),
            "k_ratio": ratio_f64(&self.k_ratio()),
            "k_ratio_exact": self.k_ratio().to_string(),
            "g_full_ratio": ratio_f64(&self.g_full_ratio()),
            "g_full_ratio_exact": self.g_full_ratio().to_string(),
            "h_bound": self.h_bound().to_string(),
            "h_bound_holds": self.h_bound_holds(),
        });
        let (serde_json::Value::Object(a), serde_json::Value::Object(b)) = (&mut v, extra) else {
            unreachable!()
        };
        a.extend(b);
        v
    }
}

/// One CSV line of a subset report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FolnerCsvRow {
    pub n: u32,
    pub m: u32,
    #[serde(rename = "F_count")]
    pub f_count: String,
    #[serde(rename = "G_count")]
    pub g_count: String,
    #[serde(rename = "H_count")]
    pub h_count: String,
    #[serde(rename = "K_count")]
    pub k_count: String,
    #[serde(rename = "G_ratio")]
    pub g_ratio: f64,
    #[serde(rename = "H_bound_2^{m+n}")]
    pub h_bound: String,
}

pub fn write_csv<W: std::io::Write>(reports: &[FolnerSubsetReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r.csv_row())
            .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(())
}

#[derive(Clone, Copy, Default)]
struct SubsetTally {
    f: u64,
    g: u64,
    h: u64,
    k: u64,
    g_full: u64,
}

impl SubsetTally {
    fn add(self, o: Self) -> Self {
        SubsetTally {
            f: self.f + o.f,
            g: self.g + o.g,
            h: self.h + o.h,
            k: self.k + o.k,
            g_full: self.g_full + o.g_full,
        }
    }
}

pub fn subset_report(n: u32, m: u32) -> Result<FolnerSubsetReport> {
    let p = FolnerParameters::new(n)?;
    p.check_cap(ENUMERATION_CAP)?;
    if m == 0 {
        return Err(Error::Invalid("m must be at least 1".into()));
    }
    let (n, m) = (n as i64, m as i64);
    let inside = |v: i64| (-m..=m).contains(&v);
    let tallies = map_chunks(&p, |tuples| {
        let mut t = SubsetTally::default();
        for exponents in tuples {
            // The element with shift l sends k to g(k + l).
            let g = folner_word_to_map(&exponents, 0);
            let images: Vec<i64> = (-2 * n..=2 * n).map(|x| g.apply(x)).collect();
            let at = |x: i64| images[(x + 2 * n) as usize];
            for l in -n..=n {
                let (lo, hi) = (inside(at(l - n)), inside(at(l + n)));
                t.f += 1;
                t.h += lo as u64;
                t.k += hi as u64;
                t.g += (lo || hi) as u64;
                t.g_full += (l - n..=l + n).any(|x| inside(at(x))) as u64;
            }
        }
        t
    });
    let t = tallies.into_iter().fold(SubsetTally::default(), SubsetTally::add);
    Ok(FolnerSubsetReport {
        n: n as u32,
        m: m as u32,
        f_count: t.f.into(),
        g_count: t.g.into(),
        h_count: t.h.into(),
        k_count: t.k.into(),
        g_full_count: t.g_full.into(),
    })
}

/// The analytic majorant `Σ_{l=0}^{n} C(m+n, m+n-l)` used to bound `|H_n|`
/// for a count restricted to the exponents of the first `l + 1` letters.
pub fn h_bound_sum(n: u32, m: u32) -> BigUint {
    let top = BigUint::from(m + n);
    (0..=n).map(|l| binomial(top.clone(), BigUint::from(m + n - l))).sum()
}

fn integer_support(x: &CarPolynomial) -> Result<Vec<i64>> {
    x.support()
        .into_iter()
        .map(|d| {
            d.to_integer()
                .ok_or_else(|| Error::Domain(format!("index {d} is not an integer")))
        })
        .collect()
}

/// Translates `x` along the image of its support.
fn relabel_along(x: &CarPolynomial, support: &[i64], image: &[i64]) -> Result<CarPolynomial> {
    x.relabel(|d| {
        let k = d.to_integer().expect("integer support");
        let pos = support.binary_search(&k).expect("support point");
        Ok(DyadicIndex::integer(image[pos]))
    })
}

/// Sums `evaluate(s, α_h(x))` given multiplicities of the support images.
fn weighted_average<S: StateFunctional + ?Sized>(
    s: &S,
    x: &CarPolynomial,
    support: &[i64],
    images: &BTreeMap<Vec<i64>, u64>,
) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    let mut count = 0u64;
    for (image, &c) in images {
        total += s.evaluate(&relabel_along(x, support, image)?)? * c as f64;
        count += c;
    }
    Ok(total / count as f64)
}

/// `(1 / |F_n|) Σ_{h ∈ F_n} evaluate(s, α_h(x))` over parameter tuples.
///
/// `α_h(x)` depends only on `h` restricted to the support of `x`, so the
/// enumeration only tallies support images; each distinct image is
/// evaluated once and the tallies are combined in sorted order.
pub fn ergodic_average<S: StateFunctional + ?Sized>(s: &S, x: &CarPolynomial, n: u32) -> Result<Complex64> {
    let p = FolnerParameters::new(n)?;
    p.check_cap(ENUMERATION_CAP)?;
    let support = integer_support(x)?;
    let shifts: Vec<i64> = p.shifts().collect();
    let partials = map_chunks(&p, |tuples| {
        let mut tally: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
        for exponents in tuples {
            let g = folner_word_to_map(&exponents, 0);
            for &l in &shifts {
                let image = support.iter().map(|&k| g.apply(k + l)).collect();
                *tally.entry(image).or_insert(0) += 1;
            }
        }
        tally
    });
    let mut images = BTreeMap::new();
    for part in partials {
        for (k, c) in part {
            *images.entry(k).or_insert(0) += c;
        }
    }
    weighted_average(s, x, &support, &images)
}

/// The same average over the distinct maps of `F_n`.
pub fn ergodic_average_distinct<S: StateFunctional + ?Sized>(s: &S, x: &CarPolynomial, n: u32) -> Result<Complex64> {
    let support = integer_support(x)?;
    let mut images = BTreeMap::new();
    for map in folner_multiset(n, CountingMode::DistinctMaps)?.into_keys() {
        let image: Vec<i64> = support.iter().map(|&k| map.apply(k)).collect();
        *images.entry(image).or_insert(0) += 1;
    }
    weighted_average(s, x, &support, &images)
}

/// Draws `count` elements uniformly from the parameter domain of `F_n`:
/// a uniform shift and a uniform exponent tuple, the latter by placing
/// `2n + 1` bars among `n² + 2n + 1` slots.
pub fn sample_folner_words(n: u32, count: usize, seed: u64) -> Result<Vec<FolnerWord>> {
    let p = FolnerParameters::new(n)?;
    if count == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bars = p.arity();
    let slots = p.budget() as usize + bars;
    let n = n as i64;
    Ok((0..count)
        .map(|_| {
            let shift = rng.random_range(-n..=n);
            let mut chosen = index::sample(&mut rng, slots, bars).into_vec();
            chosen.sort_unstable();
            let mut previous = 0;
            let exponents = chosen
                .iter()
                .map(|&c| {
                    let h = (c - previous) as u32;
                    previous = c + 1;
                    h
                })
                .collect();
            FolnerWord { exponents, shift }
        })
        .collect())
}

pub fn sample_folner(n: u32, count: usize, seed: u64) -> Result<Vec<SpreadingMap>> {
    Ok(sample_folner_words(n, count, seed)?
        .iter()
        .map(FolnerWord::to_map)
        .collect())
}

/// Monte Carlo estimate of [`ergodic_average`] from `count` samples.
pub fn sampled_ergodic_average<S: StateFunctional + ?Sized>(
    s: &S,
    x: &CarPolynomial,
    n: u32,
    count: usize,
    seed: u64,
) -> Result<Complex64> {
    let support = integer_support(x)?;
    let mut images = BTreeMap::new();
    for map in sample_folner(n, count, seed)? {
        let image: Vec<i64> = support.iter().map(|&k| map.apply(k)).collect();
        *images.entry(image).or_insert(0) += 1;
    }
    weighted_average(s, x, &support, &images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::car_expr::parse_expression;
    use crate::states::StateModel;
    use std::collections::BTreeSet;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn counts() {
        assert_eq!(folner_count(1), big(12));
        assert_eq!(folner_count(2), big(630));
        assert_eq!(folner_count(3), big(80080));
        assert_eq!(folner_count(4), big(18_386_775));
        for n in 1..=3 {
            assert_eq!(big(enumerate_folner(n).unwrap().count() as u64), folner_count(n));
        }
    }

    #[test]
    fn tuple_stream_is_lexicographic_and_complete() {
        let all: Vec<Vec<u32>> = ExponentTuples::new(3, 2).collect();
        assert_eq!(all.len(), 10);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all.iter().all(|t| t.iter().sum::<u32>() <= 2));
        assert_eq!(ExponentTuples::new(4, 0).count(), 1);
        assert_eq!(ExponentTuples::new(1, 5).count(), 6);
        // Prefix chunks partition the stream in order.
        let p = FolnerParameters::new(2).unwrap();
        let chunked: Vec<Vec<u32>> = work_prefixes(&p)
            .iter()
            .flat_map(|pre| tuples_with_prefix(pre, p.arity(), p.budget()).collect::<Vec<_>>())
            .collect();
        let direct: Vec<Vec<u32>> = ExponentTuples::new(p.arity(), p.budget()).collect();
        assert_eq!(chunked, direct);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            enumerate_folner(5).err(),
            Some(Error::CapExceeded { n: 5, cap: 4 })
        ));
        assert!(matches!(subset_report(5, 1), Err(Error::CapExceeded { .. })));
        assert!(enumerate_folner(0).is_err());
    }

    #[test]
    fn first_set_by_hand() {
        let words: Vec<FolnerWord> = enumerate_folner_words(1).unwrap().collect();
        assert_eq!(words.len(), 12);
        let pure: Vec<_> = words.iter().filter(|w| w.exponents.iter().all(|&h| h == 0)).collect();
        assert_eq!(pure.len(), 3);
        let maps: BTreeSet<SpreadingMap> = words.iter().map(FolnerWord::to_map).collect();
        let mut expected = BTreeSet::new();
        for l in -1..=1 {
            expected.insert(SpreadingMap::tau_pow(l));
            for h in -1..=1 {
                expected.insert(SpreadingMap::theta(h).compose(&SpreadingMap::tau_pow(l)));
            }
        }
        assert_eq!(maps, expected);
        for map in enumerate_folner(3).unwrap() {
            let offset = map.apply(-1000) + 1000;
            assert!((-3..=3).contains(&offset));
        }
    }

    #[test]
    fn words_match_generator_products() {
        for w in enumerate_folner_words(2).unwrap() {
            let n = 2i64;
            let mut thetas = Vec::new();
            for (i, &h) in w.exponents.iter().enumerate() {
                thetas.extend(std::iter::repeat_n(i as i64 - n, h as usize));
            }
            assert_eq!(w.to_map(), SpreadingMap::from_generators(&thetas, w.shift));
        }
    }

    #[test]
    fn tuples_and_maps_agree() {
        for n in 1..=3 {
            assert_eq!(folner_size(n, CountingMode::DistinctMaps).unwrap(), folner_count(n));
        }
        assert!(matches!(
            folner_size(4, CountingMode::DistinctMaps),
            Err(Error::CapExceeded { .. })
        ));
    }

    // (n, m) -> (F, G, H, K, G_full) from an independent enumeration that
    // applies the word letter by letter.
    const SUBSET_COUNTS: &[(u32, u32, [u64; 5])] = &[
        (1, 1, [12, 12, 8, 5, 12]),
        (2, 1, [630, 255, 205, 50, 510]),
        (3, 1, [80080, 15895, 14960, 935, 52294]),
        (1, 2, [12, 12, 12, 9, 12]),
        (2, 2, [630, 430, 328, 103, 580]),
        (3, 2, [80080, 27105, 24735, 2370, 62860]),
        (1, 3, [12, 12, 12, 12, 12]),
        (2, 3, [630, 600, 489, 169, 615]),
        (3, 3, [80080, 38794, 34150, 4645, 68362]),
    ];

    #[test]
    fn subset_counts() {
        for &(n, m, [f, g, h, k, full]) in SUBSET_COUNTS {
            let r = subset_report(n, m).unwrap();
            assert_eq!(
                [&r.f_count, &r.g_count, &r.h_count, &r.k_count, &r.g_full_count],
                [&big(f), &big(g), &big(h), &big(k), &big(full)],
                "n = {n}, m = {m}"
            );
            assert!(r.g_count <= &r.h_count + &r.k_count);
        }
    }

    #[test]
    fn large_m_captures_everything() {
        let r = subset_report(2, 100).unwrap();
        assert_eq!(r.g_count, r.f_count);
        assert_eq!(r.g_ratio(), BigRational::one());
    }

    #[test]
    fn analytic_majorant_is_below_power_of_two() {
        for n in 1..=6 {
            for m in 1..=4 {
                assert!(h_bound_sum(n, m) <= BigUint::one() << (m + n));
            }
        }
        assert_eq!(h_bound_sum(1, 1), big(3));
    }

    #[test]
    fn report_output() {
        let r = subset_report(1, 1).unwrap();
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "n,m,F_count,G_count,H_count,K_count,G_ratio,H_bound_2^{m+n}\n1,1,12,12,8,5,1.0,4\n"
        );
        let json = r.json();
        assert_eq!(json["f_count"], "12");
        assert_eq!(json["g_full_count"], "12");
        assert_eq!(json["h_bound_holds"], false);
        let back: FolnerSubsetReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }

    fn ratio(num: u64, den: u64) -> BigRational {
        BigRational::new(num.into(), den.into())
    }

    #[test]
    fn right_folner_ratios() {
        // Set images, from an independent enumeration: decreasing in n.
        let sets = [
            (SpreadingMap::theta(0), [ratio(16, 12), ratio(644, 630), ratio(72644, 80080)]),
            (SpreadingMap::tau(), [ratio(8, 12), ratio(252, 630), ratio(22880, 80080)]),
        ];
        for (h, expected) in sets {
            let got: Vec<BigRational> = (1..=3)
                .map(|n| right_folner_ratio(n, &h, CountingMode::DistinctMaps).unwrap())
                .collect();
            assert_eq!(got, expected, "{h:?}");
            assert!(got.windows(2).all(|w| w[1] < w[0]));
        }
        // τ is injective on the right, so multiplicities change nothing.
        for n in 1..=3 {
            assert_eq!(
                right_folner_ratio(n, &SpreadingMap::tau(), CountingMode::Tuples).unwrap(),
                right_folner_ratio(n, &SpreadingMap::tau(), CountingMode::DistinctMaps).unwrap()
            );
        }
        // θ_0 merges translates; with multiplicities the ratio is not monotone.
        let tuples: Vec<f64> = (1..=3)
            .map(|n| ratio_f64(&right_folner_ratio(n, &SpreadingMap::theta(0), CountingMode::Tuples).unwrap()))
            .collect();
        assert_eq!(tuples[0], 1.5);
        assert!(tuples[2] > tuples[1]);
    }

    #[test]
    fn averages() {
        let phi = StateModel::product(0.25).unwrap();
        let x = parse_expression("ad(0)*a(0)").unwrap();
        for n in 1..=3 {
            assert_eq!(ergodic_average(&phi, &x, n).unwrap().re, 0.75);
        }
        assert_eq!(
            ergodic_average(&phi, &CarPolynomial::one(), 2).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        let toeplitz = StateModel::toeplitz(&[(0, 0.5), (1, 0.25)]).unwrap();
        let y = parse_expression("ad(0)*a(1)").unwrap();
        let v = ergodic_average(&toeplitz, &y, 2).unwrap();
        assert!(v.re > 0.0 && v.re < 0.25 && v.im == 0.0, "{v}");
        // Independent enumeration: 406 of the 630 elements keep 0 and 1 adjacent.
        assert!((v.re - 29.0 / 180.0).abs() < 1e-15);
        let d = ergodic_average_distinct(&toeplitz, &y, 2).unwrap();
        assert_eq!(v, d);
        assert!(ergodic_average(&phi, &parse_expression("a(1/2)").unwrap(), 1).is_err());
    }

    #[test]
    fn average_agrees_with_direct_sum() {
        let toeplitz = StateModel::toeplitz(&[(0, 0.5), (1, 0.25)]).unwrap();
        let y = parse_expression("ad(0)*a(1) + ad(1)*ad(2)*a(2)*a(0)").unwrap();
        let mut direct = Complex64::new(0.0, 0.0);
        let mut count = 0.0;
        for h in enumerate_folner(2).unwrap() {
            direct += toeplitz.evaluate(&h.act(&y).unwrap()).unwrap();
            count += 1.0;
        }
        let fast = ergodic_average(&toeplitz, &y, 2).unwrap();
        assert!((fast - direct / count).norm() < 1e-12);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let toeplitz = StateModel::toeplitz(&[(0, 0.5), (1, 0.25)]).unwrap();
        let y = parse_expression("ad(0)*a(1)").unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| (subset_report(3, 2).unwrap(), ergodic_average(&toeplitz, &y, 3).unwrap()))
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(7));
    }

    #[test]
    fn sampling() {
        let a = sample_folner_words(3, 50, 7).unwrap();
        assert_eq!(a, sample_folner_words(3, 50, 7).unwrap());
        assert_ne!(a, sample_folner_words(3, 50, 8).unwrap());
        for w in &a {
            assert_eq!(w.exponents.len(), 7);
            assert!(w.exponents.iter().sum::<u32>() <= 9);
            assert!((-3..=3).contains(&w.shift));
        }
        let phi = StateModel::product(0.25).unwrap();
        let x = parse_expression("ad(0)*a(0)").unwrap();
        assert_eq!(sampled_ergodic_average(&phi, &x, 6, 200, 1).unwrap().re, 0.75);
    }

    #[test]
    fn sampled_shifts_are_uniform() {
        let count = 100_000;
        let words = sample_folner_words(1, count, 42).unwrap();
        let mut hist = BTreeMap::new();
        for w in &words {
            *hist.entry(w.shift).or_insert(0usize) += 1;
        }
        let expected = count as f64 / 3.0;
        let sigma = (count as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for l in -1..=1 {
            assert!((hist[&l] as f64 - expected).abs() < 3.0 * sigma, "{hist:?}");
        }
    }

    #[test]
    fn sampled_tuples_are_uniform() {
        // n = 1 has four tuples; each should be hit about a quarter of the time.
        let count = 40_000;
        let mut hist: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        for w in sample_folner_words(1, count, 3).unwrap() {
            *hist.entry(w.exponents).or_insert(0) += 1;
        }
        assert_eq!(hist.len(), 4);
        let sigma = (count as f64 * 0.25 * 0.75).sqrt();
        for c in hist.values() {
            assert!((*c as f64 - count as f64 / 4.0).abs() < 3.0 * sigma, "{hist:?}");
        }
    }
}
