//! Symmetry actions on polynomials: finite permutations, the spreading
//! semigroup of strictly increasing cofinite-range maps of the integers,
//! dyadic piecewise-linear bijections, Bogolubov rotations, and the index
//! doubling isomorphisms between dyadic levels.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::car_expr::{CarPolynomial, GeneratorSymbol};
use crate::dyadic::DyadicIndex;
use crate::error::{Error, Result};

fn integer_index(d: DyadicIndex) -> Result<i64> {
    d.to_integer()
        .ok_or_else(|| Error::Domain(format!("index {d} is not an integer")))
}

/// A bijection of the integers moving finitely many points.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<i64, i64>", into = "BTreeMap<i64, i64>")]
pub struct FinitePermutation {
    moved: BTreeMap<i64, i64>,
}

impl TryFrom<BTreeMap<i64, i64>> for FinitePermutation {
    type Error = Error;
    fn try_from(map: BTreeMap<i64, i64>) -> Result<Self> {
        FinitePermutation::new(map)
    }
}

impl From<FinitePermutation> for BTreeMap<i64, i64> {
    fn from(p: FinitePermutation) -> Self {
        p.moved
    }
}

impl FinitePermutation {
    pub fn new(map: BTreeMap<i64, i64>) -> Result<Self> {
        let domain: BTreeSet<i64> = map.keys().copied().collect();
        let image: BTreeSet<i64> = map.values().copied().collect();
        if domain != image {
            return Err(Error::Invalid(
                "permutation is not a bijection of its support".into(),
            ));
        }
        let moved = map.into_iter().filter(|(k, v)| k != v).collect();
        Ok(FinitePermutation { moved })
    }

    pub fn identity() -> Self {
        FinitePermutation {
            moved: BTreeMap::new(),
        }
    }

    pub fn transposition(i: i64, j: i64) -> Self {
        Self::cycle(&[i, j])
    }

    pub fn cycle(points: &[i64]) -> Self {
        let mut moved = BTreeMap::new();
        for (k, &p) in points.iter().enumerate() {
            moved.insert(p, points[(k + 1) % points.len()]);
        }
        Self::new(moved).expect("a cycle of distinct points")
    }

    pub fn apply(&self, k: i64) -> i64 {
        self.moved.get(&k).copied().unwrap_or(k)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let points: BTreeSet<i64> = self.moved.keys().chain(other.moved.keys()).copied().collect();
        let map = points
            .into_iter()
            .map(|k| (k, self.apply(other.apply(k))))
            .collect();
        Self::new(map).expect("composition of bijections")
    }

    pub fn inverse(&self) -> Self {
        FinitePermutation {
            moved: self.moved.iter().map(|(&k, &v)| (v, k)).collect(),
        }
    }

    pub fn act(&self, p: &CarPolynomial) -> Result<CarPolynomial> {
        p.relabel(|d| integer_index(d).map(|k| DyadicIndex::integer(self.apply(k))))
    }
}

/// An element of the spreading semigroup: the unique order isomorphism
/// `f: Z -> Z \ skipped` with `f(k) - k = shift` for all sufficiently
/// negative `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "SpreadingRepr", into = "SpreadingRepr")]
pub struct SpreadingMap {
    shift: i64,
    skipped: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpreadingRepr {
    shift: i64,
    skipped: Vec<i64>,
}

impl From<SpreadingRepr> for SpreadingMap {
    fn from(r: SpreadingRepr) -> Self {
        SpreadingMap::new(r.shift, r.skipped)
    }
}

impl From<SpreadingMap> for SpreadingRepr {
    fn from(m: SpreadingMap) -> Self {
        SpreadingRepr {
            shift: m.shift,
            skipped: m.skipped,
        }
    }
}

impl SpreadingMap {
    pub fn new(shift: i64, mut skipped: Vec<i64>) -> Self {
        skipped.sort_unstable();
        skipped.dedup();
        SpreadingMap { shift, skipped }
    }

    pub fn identity() -> Self {
        Self::new(0, Vec::new())
    }

    /// The partial shift fixing `k < h` and sending `k >= h` to `k + 1`.
    pub fn theta(h: i64) -> Self {
        Self::new(0, vec![h])
    }

    pub fn tau() -> Self {
        Self::tau_pow(1)
    }

    pub fn tau_inv() -> Self {
        Self::tau_pow(-1)
    }

    pub fn tau_pow(l: i64) -> Self {
        Self::new(l, Vec::new())
    }

    pub fn shift(&self) -> i64 {
        self.shift
    }

    pub fn skipped(&self) -> &[i64] {
        &self.skipped
    }

    pub fn apply(&self, k: i64) -> i64 {
        let mut x = k + self.shift;
        for &s in &self.skipped {
            if s <= x {
                x += 1;
            } else {
                break;
            }
        }
        x
    }

    /// `self ∘ other`: shifts add, and the complement of the range is
    /// `skipped(self) ∪ self(skipped(other))`.
    pub fn compose(&self, other: &Self) -> Self {
        let mut skipped = self.skipped.clone();
        skipped.extend(other.skipped.iter().map(|&s| self.apply(s)));
        Self::new(self.shift + other.shift, skipped)
    }

    /// Factorisation `θ_{t_1} ∘ θ_{t_2} ∘ ... ∘ θ_{t_r} ∘ τ^shift` with
    /// `t_1 <= t_2 <= ...`; returns `(t, shift)`.
    pub fn generator_word(&self) -> (Vec<i64>, i64) {
        let thetas = self
            .skipped
            .iter()
            .enumerate()
            .map(|(k, &s)| s - k as i64)
            .collect();
        (thetas, self.shift)
    }

    /// Iterated composition `θ_{t_1} ∘ ... ∘ θ_{t_r} ∘ τ^shift`.
    pub fn from_generators(thetas: &[i64], shift: i64) -> Self {
        thetas
            .iter()
            .rev()
            .fold(Self::tau_pow(shift), |acc, &t| Self::theta(t).compose(&acc))
    }

    pub fn act(&self, p: &CarPolynomial) -> Result<CarPolynomial> {
        p.relabel(|d| integer_index(d).map(|k| DyadicIndex::integer(self.apply(k))))
    }
}

/// The Folner word `θ_{-n}^{h_{-n}} ∘ ... ∘ θ_n^{h_n} ∘ τ^shift` where
/// `exponents` lists `h_{-n}, ..., h_n` (odd length `2n + 1`). The leftmost
/// factor is applied last.
///
/// Closed form: the factor `θ_i^{h_i}` contributes the skipped block starting
/// at `i + Σ_{j<i} h_j` of length `h_i`.
pub fn folner_word_to_map(exponents: &[u32], shift: i64) -> SpreadingMap {
    assert!(exponents.len() % 2 == 1, "exponent tuple must have odd length");
    let n = (exponents.len() / 2) as i64;
    let mut skipped = Vec::with_capacity(exponents.iter().map(|&h| h as usize).sum());
    let mut before: i64 = 0;
    for (offset, &h) in exponents.iter().enumerate() {
        let i = offset as i64 - n;
        let start = i + before;
        skipped.extend(start..start + h as i64);
        before += h as i64;
    }
    SpreadingMap { shift, skipped }
}

/// One affine piece `x -> 2^slope_log2 * x + offset`, valid from `breakpoint`
/// (or from minus infinity for the first piece) up to the next breakpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub breakpoint: Option<DyadicIndex>,
    pub slope_log2: i32,
    pub offset: DyadicIndex,
}

impl Piece {
    fn eval(&self, d: DyadicIndex) -> DyadicIndex {
        d.mul_pow2(self.slope_log2) + self.offset
    }
}

/// A continuous increasing piecewise-linear bijection of the dyadic
/// rationals with power-of-two slopes, dyadic breakpoints and offsets, and
/// slope 1 on both unbounded pieces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PlRepr", into = "PlRepr")]
pub struct PLDyadicMap {
    pieces: Vec<Piece>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlRepr {
    pieces: Vec<Piece>,
}

impl TryFrom<PlRepr> for PLDyadicMap {
    type Error = Error;
    fn try_from(r: PlRepr) -> Result<Self> {
        PLDyadicMap::new(r.pieces)
    }
}

impl From<PLDyadicMap> for PlRepr {
    fn from(m: PLDyadicMap) -> Self {
        PlRepr { pieces: m.pieces }
    }
}

impl PLDyadicMap {
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        let invalid = |msg: &str| Err(Error::Invalid(format!("piecewise-linear map: {msg}")));
        let (Some(first), Some(last)) = (pieces.first(), pieces.last()) else {
            return invalid("no pieces");
        };
        if first.breakpoint.is_some() {
            return invalid("first piece must be unbounded below");
        }
        if first.slope_log2 != 0 || last.slope_log2 != 0 {
            return invalid("unbounded pieces must have slope 1");
        }
        for w in pieces.windows(2) {
            let Some(b) = w[1].breakpoint else {
                return invalid("interior piece without breakpoint");
            };
            if let Some(prev) = w[0].breakpoint {
                if prev >= b {
                    return invalid("breakpoints not strictly increasing");
                }
            }
            if w[0].eval(b) != w[1].eval(b) {
                return invalid("discontinuous at a breakpoint");
            }
        }
        Ok(PLDyadicMap { pieces })
    }

    pub fn identity() -> Self {
        Self::translation(DyadicIndex::ZERO)
    }

    pub fn translation(by: DyadicIndex) -> Self {
        PLDyadicMap {
            pieces: vec![Piece {
                breakpoint: None,
                slope_log2: 0,
                offset: by,
            }],
        }
    }

    /// `τ_{k,n}`: translation by `k / 2^n`.
    pub fn dyadic_translation(k: i64, n: u32) -> Self {
        Self::translation(DyadicIndex::new(k, n))
    }

    /// The extension of `θ_0` to the dyadics: identity below -1, `2d + 1` on
    /// `[-1, 0]`, `d + 1` above 0.
    pub fn theta0_tilde() -> Self {
        let one = DyadicIndex::integer(1);
        Self::new(vec![
            Piece {
                breakpoint: None,
                slope_log2: 0,
                offset: DyadicIndex::ZERO,
            },
            Piece {
                breakpoint: Some(-one),
                slope_log2: 1,
                offset: one,
            },
            Piece {
                breakpoint: Some(DyadicIndex::ZERO),
                slope_log2: 0,
                offset: one,
            },
        ])
        .expect("theta0 tilde is well formed")
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = DyadicIndex> + '_ {
        self.pieces.iter().filter_map(|p| p.breakpoint)
    }

    fn piece_at(&self, d: DyadicIndex) -> &Piece {
        let idx = self
            .pieces
            .partition_point(|p| p.breakpoint.is_none_or(|b| b <= d));
        &self.pieces[idx - 1]
    }

    pub fn apply(&self, d: DyadicIndex) -> DyadicIndex {
        self.piece_at(d).eval(d)
    }

    pub fn inverse(&self) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                breakpoint: p.breakpoint.map(|b| p.eval(b)),
                slope_log2: -p.slope_log2,
                offset: -p.offset.mul_pow2(-p.slope_log2),
            })
            .collect();
        Self::new(pieces).expect("inverse of a valid map")
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let inv = other.inverse();
        let mut cuts: Vec<DyadicIndex> = other
            .breakpoints()
            .chain(self.breakpoints().map(|b| inv.apply(b)))
            .collect();
        cuts.sort();
        cuts.dedup();
        let one = DyadicIndex::integer(1);
        let samples: Vec<DyadicIndex> = if cuts.is_empty() {
            vec![DyadicIndex::ZERO]
        } else {
            std::iter::once(cuts[0] - one)
                .chain(cuts.windows(2).map(|w| (w[0] + w[1]).mul_pow2(-1)))
                .chain(std::iter::once(cuts[cuts.len() - 1] + one))
                .collect()
        };
        let mut pieces: Vec<Piece> = Vec::with_capacity(samples.len());
        for (k, &x) in samples.iter().enumerate() {
            let inner = other.piece_at(x);
            let outer = self.piece_at(inner.eval(x));
            let piece = Piece {
                breakpoint: if k == 0 { None } else { Some(cuts[k - 1]) },
                slope_log2: inner.slope_log2 + outer.slope_log2,
                offset: inner.offset.mul_pow2(outer.slope_log2) + outer.offset,
            };
            match pieces.last() {
                Some(prev) if prev.slope_log2 == piece.slope_log2 && prev.offset == piece.offset => {}
                _ => pieces.push(piece),
            }
        }
        Self::new(pieces).expect("composition of valid maps")
    }

    /// `δ_n^{-1} ∘ self ∘ δ_n`, where `δ_n` multiplies by `2^n`.
    pub fn conjugate_by_dilation(&self, n: u32) -> Self {
        let k = n as i32;
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                breakpoint: p.breakpoint.map(|b| b.mul_pow2(-k)),
                slope_log2: p.slope_log2,
                offset: p.offset.mul_pow2(-k),
            })
            .collect();
        Self::new(pieces).expect("conjugate of a valid map")
    }

    pub fn act(&self, p: &CarPolynomial) -> CarPolynomial {
        p.relabel(|d| Ok(self.apply(d)))
            .expect("piecewise-linear maps are total")
    }
}

/// The dilation `δ_n(d) = 2^n d`.
pub fn dilate(d: DyadicIndex, n: u32) -> DyadicIndex {
    d.mul_pow2(n as i32)
}

/// A real orthogonal matrix on a finite integer window, identity elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OrthogonalRepr", into = "OrthogonalRepr")]
pub struct OrthogonalWindowMatrix {
    window: Vec<i64>,
    entries: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrthogonalRepr {
    window: Vec<i64>,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<OrthogonalRepr> for OrthogonalWindowMatrix {
    type Error = Error;
    fn try_from(r: OrthogonalRepr) -> Result<Self> {
        OrthogonalWindowMatrix::from_rows(r.window, r.rows)
    }
}

impl From<OrthogonalWindowMatrix> for OrthogonalRepr {
    fn from(m: OrthogonalWindowMatrix) -> Self {
        let rows = m
            .entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        OrthogonalRepr {
            window: m.window,
            rows,
        }
    }
}

/// Orthogonality tolerance, `max |OᵀO - I|`.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-12;

impl OrthogonalWindowMatrix {
    pub fn new(window: Vec<i64>, entries: DMatrix<f64>) -> Result<Self> {
        let n = window.len();
        if window.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("window must be strictly increasing".into()));
        }
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Invalid(format!(
                "matrix is {}x{}, window has {n} indices",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let defect = (entries.transpose() * &entries - DMatrix::<f64>::identity(n, n)).amax();
        if !(defect <= ORTHOGONALITY_TOLERANCE) {
            return Err(Error::Invalid(format!(
                "matrix is not orthogonal (defect {defect:e})"
            )));
        }
        Ok(OrthogonalWindowMatrix { window, entries })
    }

    pub fn from_rows(window: Vec<i64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = window.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("rows do not match the window".into()));
        }
        let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(window, entries)
    }

    pub fn identity(window: Vec<i64>) -> Self {
        let n = window.len();
        Self::new(window, DMatrix::identity(n, n)).expect("identity")
    }

    /// Rotation by `angle` in the `(i, j)` plane:
    /// `O[i][i] = O[j][j] = cos`, `O[j][i] = sin`, `O[i][j] = -sin`.
    pub fn givens(i: i64, j: i64, angle: f64) -> Self {
        assert!(i != j, "givens rotation needs two distinct indices");
        let (c, s) = (angle.cos(), angle.sin());
        let (lo, hi, s) = if i < j { (i, j, s) } else { (j, i, -s) };
        Self::from_rows(vec![lo, hi], vec![vec![c, -s], vec![s, c]]).expect("rotation")
    }

    /// `O[perm[c]][c] = signs[c]`, i.e. `a(window[c]) -> signs[c] a(window[perm[c]])`.
    pub fn signed_permutation(window: Vec<i64>, perm: &[usize], signs: &[f64]) -> Result<Self> {
        let n = window.len();
        if perm.len() != n || signs.len() != n {
            return Err(Error::Invalid("permutation length mismatch".into()));
        }
        let mut entries = DMatrix::zeros(n, n);
        for c in 0..n {
            if perm[c] >= n {
                return Err(Error::Invalid("permutation index out of range".into()));
            }
            entries[(perm[c], c)] = signs[c];
        }
        Self::new(window, entries)
    }

    /// Product of `rotations` Givens rotations with uniformly random planes
    /// and angles.
    pub fn random<R: Rng + ?Sized>(window: &[i64], rotations: usize, rng: &mut R) -> Self {
        let mut acc = Self::identity(window.to_vec());
        if window.len() < 2 {
            return acc;
        }
        for _ in 0..rotations {
            let i = rng.random_range(0..window.len());
            let mut j = rng.random_range(0..window.len() - 1);
            if j >= i {
                j += 1;
            }
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            acc = acc.compose(&Self::givens(window[i], window[j], angle));
        }
        acc
    }

    pub fn window(&self) -> &[i64] {
        &self.window
    }

    /// Matrix entry `O[k][i]` over all of Z.
    pub fn entry(&self, k: i64, i: i64) -> f64 {
        match (self.window.binary_search(&k), self.window.binary_search(&i)) {
            (Ok(r), Ok(c)) => self.entries[(r, c)],
            _ => {
                if k == i {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Matrix product `self · other` on the union of the windows.
    pub fn compose(&self, other: &Self) -> Self {
        let window: Vec<i64> = self
            .window
            .iter()
            .chain(&other.window)
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n = window.len();
        let entries = DMatrix::from_fn(n, n, |r, c| {
            window
                .iter()
                .map(|&k| self.entry(window[r], k) * other.entry(k, window[c]))
                .sum()
        });
        OrthogonalWindowMatrix { window, entries }
    }

    pub fn transpose(&self) -> Self {
        OrthogonalWindowMatrix {
            window: self.window.clone(),
            entries: self.entries.transpose(),
        }
    }

    /// `ρ_O(a_i) = Σ_k O[k][i] a_k`, and the same for creators.
    pub fn act(&self, p: &CarPolynomial) -> CarPolynomial {
        p.substitute(|s| {
            let column = s
                .index
                .to_integer()
                .and_then(|i| self.window.binary_search(&i).ok());
            match column {
                Some(c) => self
                    .window
                    .iter()
                    .enumerate()
                    .filter(|&(r, _)| self.entries[(r, c)] != 0.0)
                    .map(|(r, &k)| {
                        (
                            Complex64::new(self.entries[(r, c)], 0.0),
                            GeneratorSymbol {
                                index: DyadicIndex::integer(k),
                                dagger: s.dagger,
                            },
                        )
                    })
                    .collect(),
                None => vec![(Complex64::new(1.0, 0.0), s)],
            }
        })
    }
}

/// `Ψ_n`: doubles every index, mapping polynomials over `Z / 2^{n+1}` onto
/// polynomials over `Z / 2^n`.
pub fn rescale(n: u32, p: &CarPolynomial) -> Result<CarPolynomial> {
    p.relabel(|d| {
        if d.in_level(n + 1) {
            Ok(d.mul_pow2(1))
        } else {
            Err(Error::Domain(format!("index {d} is not in Z/2^{}", n + 1)))
        }
    })
}

/// Inverse of [`rescale`]: halves every index of a polynomial over `Z / 2^n`.
pub fn unrescale(n: u32, p: &CarPolynomial) -> Result<CarPolynomial> {
    p.relabel(|d| {
        if d.in_level(n) {
            Ok(d.mul_pow2(-1))
        } else {
            Err(Error::Domain(format!("index {d} is not in Z/2^{n}")))
        }
    })
}

/// Any of the transformations above, as applied by the symmetry batteries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transformation {
    Permutation { map: FinitePermutation },
    Spreading { map: SpreadingMap },
    PiecewiseLinear { map: PLDyadicMap },
    Bogolubov { matrix: OrthogonalWindowMatrix },
    Parity,
}

impl Transformation {
    /// Image of `p`.
    pub fn act(&self, p: &CarPolynomial) -> Result<CarPolynomial> {
        match self {
            Transformation::Permutation { map } => map.act(p),
            Transformation::Spreading { map } => map.act(p),
            Transformation::PiecewiseLinear { map } => Ok(map.act(p)),
            Transformation::Bogolubov { matrix } => Ok(matrix.act(p)),
            Transformation::Parity => Ok(p.parity_map()),
        }
    }
}
