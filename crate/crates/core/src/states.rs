//! States on the CAR algebra: even product states, gauge-invariant
//! quasi-free states, finite convex mixtures and pullbacks along index
//! doubling.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::actions::SpreadingMap;
use crate::car_expr::{CarPolynomial, Word};
use crate::dyadic::DyadicIndex;
use crate::error::{Error, Result};

/// Covariance eigenvalues must lie in `[-EIGEN_SLACK, 1 + EIGEN_SLACK]`.
pub const EIGEN_SLACK: f64 = 1e-10;

/// Anything that assigns a number to every polynomial, linearly.
pub trait StateFunctional: Sync {
    fn evaluate_word(&self, word: &Word) -> Result<Complex64>;

    fn evaluate(&self, p: &CarPolynomial) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (word, &c) in p.terms() {
            acc += c * self.evaluate_word(word)?;
        }
        Ok(acc)
    }
}

/// The even state `[[α, β], [γ, δ]] -> μ α + (1 - μ) δ` on one site, in the
/// basis where the annihilator is `[[0, 1], [0, 0]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleSiteEvenState {
    mu: f64,
}

impl SingleSiteEvenState {
    pub fn new(mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::Invalid(format!("mu = {mu} is outside [0, 1]")));
        }
        Ok(SingleSiteEvenState { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn apply(&self, m: [[Complex64; 2]; 2]) -> Complex64 {
        m[0][0] * self.mu + m[1][1] * (1.0 - self.mu)
    }

    /// Expectation of the number operator `ad a = diag(0, 1)`.
    pub fn occupation(&self) -> f64 {
        1.0 - self.mu
    }
}

/// The infinite product of one [`SingleSiteEvenState`] at every index.
/// `μ = 1` is the vacuum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductState {
    site: SingleSiteEvenState,
}

impl ProductState {
    pub fn new(mu: f64) -> Result<Self> {
        Ok(ProductState {
            site: SingleSiteEvenState::new(mu)?,
        })
    }

    pub fn vacuum() -> Self {
        ProductState {
            site: SingleSiteEvenState { mu: 1.0 },
        }
    }

    pub fn mu(&self) -> f64 {
        self.site.mu
    }
}

impl StateFunctional for ProductState {
    /// Zero as soon as an index occurs once; a normal word whose creators
    /// and annihilators carry the same `k` indices equals a product of `k`
    /// number operators with sign +1.
    fn evaluate_word(&self, word: &Word) -> Result<Complex64> {
        let creators: Vec<DyadicIndex> = word.creators().collect();
        let mut annihilators: Vec<DyadicIndex> = word.annihilators().collect();
        annihilators.reverse();
        if creators != annihilators {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(Complex64::new(
            self.site.occupation().powi(creators.len() as i32),
            0.0,
        ))
    }
}

/// Two-point kernel `Q[j][k] = ω(ad_j a_k)` of a quasi-free state.
#[derive(Clone, Debug, PartialEq)]
pub enum Covariance {
    /// An explicit matrix over `modes`; off the window the kernel is
    /// `default_diagonal · δ_jk`, or undefined when that is `None`.
    Window {
        modes: Vec<DyadicIndex>,
        matrix: DMatrix<f64>,
        default_diagonal: Option<f64>,
    },
    /// `Q[j][k] = q(j - k)` on integer indices; `q` is stored symmetric.
    Toeplitz { symbol: BTreeMap<i64, f64> },
}

impl Covariance {
    pub fn entry(&self, j: DyadicIndex, k: DyadicIndex) -> Result<f64> {
        match self {
            Covariance::Window {
                modes,
                matrix,
                default_diagonal,
            } => {
                let pj = modes.binary_search(&j).ok();
                let pk = modes.binary_search(&k).ok();
                match (pj, pk, default_diagonal) {
                    (Some(a), Some(b), _) => Ok(matrix[(a, b)]),
                    (_, _, Some(d)) => Ok(if j == k { *d } else { 0.0 }),
                    _ => Err(Error::Domain(format!(
                        "indices ({j}, {k}) outside the covariance window"
                    ))),
                }
            }
            Covariance::Toeplitz { symbol } => {
                let (Some(a), Some(b)) = (j.to_integer(), k.to_integer()) else {
                    return Err(Error::Domain(format!(
                        "Toeplitz covariance needs integer indices, got ({j}, {k})"
                    )));
                };
                Ok(symbol.get(&(a - b)).copied().unwrap_or(0.0))
            }
        }
    }

    /// The section of the kernel on `modes`.
    pub fn section(&self, modes: &[DyadicIndex]) -> Result<DMatrix<f64>> {
        let n = modes.len();
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] = self.entry(modes[a], modes[b])?;
            }
        }
        Ok(m)
    }
}

fn check_spectrum(m: &DMatrix<f64>) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-12 {
        return Err(Error::Invalid("covariance must be symmetric".into()));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(m.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if lo < -EIGEN_SLACK || hi > 1.0 + EIGEN_SLACK {
        return Err(Error::Invalid(format!(
            "covariance spectrum [{lo}, {hi}] leaves [0, 1]"
        )));
    }
    Ok(())
}

/// Determinant by Gaussian elimination with partial pivoting.
fn determinant(mut m: DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[(a, col)].abs().total_cmp(&m[(b, col)].abs()))
            .expect("non-empty");
        if m[(pivot, col)] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap_rows(pivot, col);
            det = -det;
        }
        let p = m[(col, col)];
        det *= p;
        for r in col + 1..n {
            let factor = m[(r, col)] / p;
            if factor != 0.0 {
                for c in col..n {
                    m[(r, c)] -= factor * m[(col, c)];
                }
            }
        }
    }
    det
}

/// A gauge-invariant quasi-free state. A normal word
/// `ad_{j_1} ... ad_{j_l} a_{k_l} ... a_{k_1}` evaluates to
/// `det[Q(j_i, k_h)]`, and to zero when the creator and annihilator counts
/// differ.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiFreeState {
    covariance: Covariance,
}

/// Grid used to bound a Toeplitz symbol.
const SYMBOL_GRID: usize = 4096;
/// Size of the finite section checked exactly for a Toeplitz symbol.
const TOEPLITZ_SECTION: usize = 32;

impl QuasiFreeState {
    pub fn window(
        mut modes: Vec<DyadicIndex>,
        matrix: DMatrix<f64>,
        default_diagonal: Option<f64>,
    ) -> Result<Self> {
        let n = modes.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Invalid("covariance does not match the window".into()));
        }
        // Sort the modes and permute the matrix alongside.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| modes[i]);
        let matrix = DMatrix::from_fn(n, n, |a, b| matrix[(order[a], order[b])]);
        modes.sort();
        if modes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("window modes must be distinct".into()));
        }
        check_spectrum(&matrix)?;
        if let Some(d) = default_diagonal {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::Invalid(format!("default diagonal {d} outside [0, 1]")));
            }
        }
        Ok(QuasiFreeState {
            covariance: Covariance::Window {
                modes,
                matrix,
                default_diagonal,
            },
        })
    }

    /// Toeplitz covariance from `q(k)`; a value given only for `k` is
    /// mirrored to `-k`.
    pub fn toeplitz(q: BTreeMap<i64, f64>) -> Result<Self> {
        let mut symbol = BTreeMap::new();
        for (&k, &v) in &q {
            if let Some(&mirror) = q.get(&-k) {
                if mirror != v {
                    return Err(Error::Invalid(format!(
                        "Toeplitz symbol not symmetric: q({k}) = {v}, q({}) = {mirror}",
                        -k
                    )));
                }
            }
            if v != 0.0 {
                symbol.insert(k, v);
                symbol.insert(-k, v);
            }
        }
        let value = |theta: f64| -> f64 {
            symbol
                .iter()
                .map(|(&k, &v)| v * (k as f64 * theta).cos())
                .sum()
        };
        for i in 0..=SYMBOL_GRID {
            let theta = std::f64::consts::PI * i as f64 / SYMBOL_GRID as f64;
            let s = value(theta);
            if !(-EIGEN_SLACK..=1.0 + EIGEN_SLACK).contains(&s) {
                return Err(Error::Invalid(format!(
                    "Toeplitz symbol takes value {s} at angle {theta}"
                )));
            }
        }
        let covariance = Covariance::Toeplitz { symbol };
        let modes: Vec<DyadicIndex> = (0..TOEPLITZ_SECTION as i64).map(DyadicIndex::integer).collect();
        check_spectrum(&covariance.section(&modes)?)?;
        Ok(QuasiFreeState { covariance })
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }
}

impl StateFunctional for QuasiFreeState {
    fn evaluate_word(&self, word: &Word) -> Result<Complex64> {
        let creators: Vec<DyadicIndex> = word.creators().collect();
        let mut annihilators: Vec<DyadicIndex> = word.annihilators().collect();
        if creators.len() != annihilators.len() {
            // Still validate the support so out-of-window words are reported.
            for &d in creators.iter().chain(&annihilators) {
                self.covariance.entry(d, d)?;
            }
            return Ok(Complex64::new(0.0, 0.0));
        }
        annihilators.reverse();
        let n = creators.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &j) in creators.iter().enumerate() {
            for (h, &k) in annihilators.iter().enumerate() {
                m[(i, h)] = self.covariance.entry(j, k)?;
            }
        }
        Ok(Complex64::new(determinant(m), 0.0))
    }
}

/// The states handled by the evaluator, the checker and the CLI.
#[derive(Clone, Debug, PartialEq)]
pub enum StateModel {
    Product(ProductState),
    QuasiFree(QuasiFreeState),
    /// Finite convex combination; weights are non-negative and sum to one.
    Mixture(Vec<(f64, StateModel)>),
    /// `base ∘ Ψ^level`: evaluates a word over `Z / 2^level` by doubling
    /// every index `level` times.
    Pullback { base: Box<StateModel>, level: u32 },
}

impl StateModel {
    pub fn product(mu: f64) -> Result<Self> {
        ProductState::new(mu).map(StateModel::Product)
    }

    pub fn vacuum() -> Self {
        StateModel::Product(ProductState::vacuum())
    }

    pub fn toeplitz(q: &[(i64, f64)]) -> Result<Self> {
        QuasiFreeState::toeplitz(q.iter().copied().collect()).map(StateModel::QuasiFree)
    }

    pub fn mixture(parts: Vec<(f64, StateModel)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Invalid("mixture needs at least one part".into()));
        }
        if parts.iter().any(|(w, _)| !(*w >= 0.0)) {
            return Err(Error::Invalid("mixture weights must be non-negative".into()));
        }
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("mixture weights sum to {total}")));
        }
        Ok(StateModel::Mixture(parts))
    }
}

impl StateFunctional for StateModel {
    fn evaluate_word(&self, word: &Word) -> Result<Complex64> {
        match self {
            StateModel::Product(s) => s.evaluate_word(word),
            StateModel::QuasiFree(s) => s.evaluate_word(word),
            StateModel::Mixture(parts) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (w, s) in parts {
                    acc += s.evaluate_word(word)? * *w;
                }
                Ok(acc)
            }
            StateModel::Pullback { base, level } => {
                let doubled = CarPolynomial::from_word(word.clone(), Complex64::new(1.0, 0.0))
                    .relabel(|d| {
                        if d.in_level(*level) {
                            Ok(d.mul_pow2(*level as i32))
                        } else {
                            Err(Error::Domain(format!("index {d} is not in Z/2^{level}")))
                        }
                    })?;
                base.evaluate(&doubled)
            }
        }
    }
}

/// `φ_n = φ_0 ∘ Ψ_0 ∘ ... ∘ Ψ_{n-1}`, a state on polynomials over `Z / 2^n`.
pub fn make_pullback_tower(base: &StateModel, n: u32) -> StateModel {
    match (n, base) {
        (0, _) => base.clone(),
        (_, StateModel::Pullback { base, level }) => StateModel::Pullback {
            base: base.clone(),
            level: level + n,
        },
        _ => StateModel::Pullback {
            base: Box::new(base.clone()),
            level: n,
        },
    }
}

/// `|ω(x τ^k(x)) - ω(x)²|` for an even self-adjoint `x` with integer
/// support of diameter smaller than `k`.
pub fn clustering_gap<S: StateFunctional + ?Sized>(s: &S, x: &CarPolynomial, k: i64) -> Result<f64> {
    if !x.is_even() {
        return Err(Error::Domain("clustering needs an even polynomial".into()));
    }
    if !x.approx_eq(&x.adjoint(), 1e-12) {
        return Err(Error::Domain("clustering needs a self-adjoint polynomial".into()));
    }
    let support = x.support();
    let mut ints = Vec::with_capacity(support.len());
    for d in &support {
        ints.push(
            d.to_integer()
                .ok_or_else(|| Error::Domain(format!("index {d} is not an integer")))?,
        );
    }
    let diameter = match (ints.first(), ints.last()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0,
    };
    if k <= diameter {
        return Err(Error::Domain(format!(
            "separation {k} does not exceed the support diameter {diameter}"
        )));
    }
    let shifted = SpreadingMap::tau_pow(k).act(x)?;
    let joint = s.evaluate(&(x * &shifted))?;
    let single = s.evaluate(x)?;
    Ok((joint - single * single).norm())
}

/// JSON form of a [`StateModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateDescriptor {
    Product {
        mu: f64,
    },
    Vacuum,
    Toeplitz {
        q: BTreeMap<String, f64>,
    },
    QuasiFree {
        window: Vec<DyadicIndex>,
        matrix: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default_diagonal: Option<f64>,
    },
    Mixture {
        parts: Vec<(f64, StateDescriptor)>,
    },
    Pullback {
        n: u32,
        base: Box<StateDescriptor>,
    },
}

impl StateDescriptor {
    pub fn build(&self) -> Result<StateModel> {
        match self {
            StateDescriptor::Product { mu } => StateModel::product(*mu),
            StateDescriptor::Vacuum => Ok(StateModel::vacuum()),
            StateDescriptor::Toeplitz { q } => {
                let mut symbol = BTreeMap::new();
                for (k, &v) in q {
                    let k: i64 = k
                        .trim()
                        .parse()
                        .map_err(|_| Error::Invalid(format!("Toeplitz key {k:?} is not an integer")))?;
                    symbol.insert(k, v);
                }
                QuasiFreeState::toeplitz(symbol).map(StateModel::QuasiFree)
            }
            StateDescriptor::QuasiFree {
                window,
                matrix,
                default_diagonal,
            } => {
                let n = window.len();
                if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::Invalid("matrix does not match the window".into()));
                }
                let m = DMatrix::from_fn(n, n, |a, b| matrix[a][b]);
                QuasiFreeState::window(window.clone(), m, *default_diagonal).map(StateModel::QuasiFree)
            }
            StateDescriptor::Mixture { parts } => {
                let built = parts
                    .iter()
                    .map(|(w, d)| d.build().map(|s| (*w, s)))
                    .collect::<Result<Vec<_>>>()?;
                StateModel::mixture(built)
            }
            StateDescriptor::Pullback { n, base } => Ok(make_pullback_tower(&base.build()?, *n)),
        }
    }
}

impl From<&StateModel> for StateDescriptor {
    fn from(s: &StateModel) -> Self {
        match s {
            StateModel::Product(p) => StateDescriptor::Product { mu: p.mu() },
            StateModel::QuasiFree(q) => match q.covariance() {
                Covariance::Toeplitz { symbol } => StateDescriptor::Toeplitz {
                    q: symbol
                        .iter()
                        .filter(|(&k, _)| k >= 0)
                        .map(|(k, v)| (k.to_string(), *v))
                        .collect(),
                },
                Covariance::Window {
                    modes,
                    matrix,
                    default_diagonal,
                } => StateDescriptor::QuasiFree {
                    window: modes.clone(),
                    matrix: matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    default_diagonal: *default_diagonal,
                },
            },
            StateModel::Mixture(parts) => StateDescriptor::Mixture {
                parts: parts.iter().map(|(w, s)| (*w, s.into())).collect(),
            },
            StateModel::Pullback { base, level } => StateDescriptor::Pullback {
                n: *level,
                base: Box::new(base.as_ref().into()),
            },
        }
    }
}
