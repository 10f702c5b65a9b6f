//! Finite-mode Fock representation of the CAR algebra and density-matrix
//! expectations. This is deliberately independent of the symbolic
//! normal-ordering code and serves as ground truth for it.
//!
//! Basis vectors are occupation strings; mode `k` of the window is bit
//! `n - 1 - k` of the basis label. The annihilator of mode `k` is the
//! Jordan-Wigner chain `Z ⊗ ... ⊗ Z ⊗ [[0,1],[0,0]] ⊗ I ⊗ ... ⊗ I`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::car_expr::{CarPolynomial, GeneratorSymbol};
use crate::dyadic::DyadicIndex;
use crate::error::{Error, Result};

pub const MAX_MODES: usize = 12;

/// Eigenvalue clamp for quasi-free covariances touching 0 or 1.
pub const GAUSSIAN_CLAMP: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ModeWindow {
    modes: Vec<DyadicIndex>,
}

impl ModeWindow {
    pub fn new(mut modes: Vec<DyadicIndex>) -> Result<Self> {
        modes.sort();
        Self::with_chain_order(modes)
    }

    pub fn integers(range: std::ops::Range<i64>) -> Result<Self> {
        Self::new(range.map(DyadicIndex::integer).collect())
    }

    /// Keeps the given order for the sign chain instead of sorting.
    pub fn with_chain_order(modes: Vec<DyadicIndex>) -> Result<Self> {
        if modes.len() > MAX_MODES {
            return Err(Error::Domain(format!(
                "window of {} modes exceeds the cap of {MAX_MODES}",
                modes.len()
            )));
        }
        let mut sorted = modes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != modes.len() {
            return Err(Error::Invalid("window modes must be distinct".into()));
        }
        Ok(ModeWindow { modes })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[DyadicIndex] {
        &self.modes
    }

    pub fn position(&self, d: DyadicIndex) -> Option<usize> {
        self.modes.iter().position(|&m| m == d)
    }

    pub fn dim(&self) -> usize {
        1 << self.modes.len()
    }
}

/// A matrix with at most one nonzero (`±1`) per column.
#[derive(Clone, Debug)]
struct SignedPartialPermutation {
    columns: Vec<Option<(usize, f64)>>,
}

impl SignedPartialPermutation {
    fn apply(&self, col: usize) -> Option<(usize, f64)> {
        self.columns[col]
    }

    fn transpose(&self) -> Self {
        let mut columns = vec![None; self.columns.len()];
        for (c, entry) in self.columns.iter().enumerate() {
            if let Some((r, s)) = entry {
                columns[*r] = Some((c, *s));
            }
        }
        SignedPartialPermutation { columns }
    }
}

/// Matrices of every generator over a window.
#[derive(Clone, Debug)]
pub struct MatrixRep {
    window: ModeWindow,
    annihilators: Vec<SignedPartialPermutation>,
    creators: Vec<SignedPartialPermutation>,
}

impl MatrixRep {
    pub fn new(window: ModeWindow) -> Self {
        let n = window.len();
        let dim = window.dim();
        let annihilators: Vec<SignedPartialPermutation> = (0..n)
            .map(|k| {
                let bit = 1usize << (n - 1 - k);
                let earlier_mask = !((bit << 1) - 1) & (dim - 1);
                let columns = (0..dim)
                    .map(|b| {
                        (b & bit != 0).then(|| {
                            let sign = if (b & earlier_mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                            (b & !bit, sign)
                        })
                    })
                    .collect();
                SignedPartialPermutation { columns }
            })
            .collect();
        let creators = annihilators.iter().map(|a| a.transpose()).collect();
        MatrixRep {
            window,
            annihilators,
            creators,
        }
    }

    pub fn window(&self) -> &ModeWindow {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    fn op(&self, s: GeneratorSymbol) -> Result<&SignedPartialPermutation> {
        let k = self
            .window
            .position(s.index)
            .ok_or_else(|| Error::Domain(format!("mode {} is outside the window", s.index)))?;
        Ok(if s.dagger {
            &self.creators[k]
        } else {
            &self.annihilators[k]
        })
    }

    /// Dense matrix of one generator.
    pub fn generator(&self, s: GeneratorSymbol) -> Result<DMatrix<Complex64>> {
        let op = self.op(s)?;
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            if let Some((r, sign)) = op.apply(c) {
                m[(r, c)] = Complex64::new(sign, 0.0);
            }
        }
        Ok(m)
    }

    /// Largest entry of `{a_i, ad_j} - δ_ij I`, `{a_i, a_j}` and
    /// `{ad_i, ad_j}` over all mode pairs, computed column by column.
    pub fn car_defect(&self) -> f64 {
        let n = self.window.len();
        let dim = self.dim();
        let mut worst: f64 = 0.0;
        let anticommutator = |x: &SignedPartialPermutation, y: &SignedPartialPermutation, c: usize| {
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(2);
            for (first, second) in [(y, x), (x, y)] {
                if let Some((mid, s1)) = first.apply(c) {
                    if let Some((r, s2)) = second.apply(mid) {
                        match out.iter_mut().find(|(row, _)| *row == r) {
                            Some(entry) => entry.1 += s1 * s2,
                            None => out.push((r, s1 * s2)),
                        }
                    }
                }
            }
            out
        };
        for i in 0..n {
            for j in 0..n {
                for c in 0..dim {
                    for (r, v) in anticommutator(&self.annihilators[i], &self.creators[j], c) {
                        let target = if i == j && r == c { 1.0 } else { 0.0 };
                        worst = worst.max((v - target).abs());
                    }
                    if i == j {
                        // {a_i, ad_i} must have a unit diagonal entry in every column.
                        let col = anticommutator(&self.annihilators[i], &self.creators[i], c);
                        if !col.iter().any(|&(r, v)| r == c && v != 0.0) {
                            worst = worst.max(1.0);
                        }
                    }
                    for (x, y) in [
                        (&self.annihilators[i], &self.annihilators[j]),
                        (&self.creators[i], &self.creators[j]),
                    ] {
                        for (_, v) in anticommutator(x, y, c) {
                            worst = worst.max(v.abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// The matrix of a polynomial: each word is the ordered product of its
    /// generator matrices.
    pub fn represent(&self, p: &CarPolynomial) -> Result<DMatrix<Complex64>> {
        let dim = self.dim();
        let mut total = DMatrix::<Complex64>::zeros(dim, dim);
        for (word, &coef) in p.terms() {
            let ops: Vec<&SignedPartialPermutation> = word
                .symbols()
                .iter()
                .map(|&s| self.op(s))
                .collect::<Result<_>>()?;
            // Column c of the product is ops[0] ... ops[last] e_c.
            for c in 0..dim {
                let mut state = Some((c, coef));
                for op in ops.iter().rev() {
                    state = state.and_then(|(b, v)| op.apply(b).map(|(r, s)| (r, v * s)));
                }
                if let Some((r, v)) = state {
                    total[(r, c)] += v;
                }
            }
        }
        Ok(total)
    }

    /// `Tr(ρ X)`.
    pub fn evaluate(&self, density: &DensityMatrix, p: &CarPolynomial) -> Result<Complex64> {
        if density.matrix.nrows() != self.dim() {
            return Err(Error::Domain("density matrix does not match the window".into()));
        }
        let x = self.represent(p)?;
        let rho = &density.matrix;
        let dim = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..dim {
            for j in 0..dim {
                let xv = x[(j, i)];
                if xv != Complex64::new(0.0, 0.0) {
                    acc += rho[(i, j)] * xv;
                }
            }
        }
        Ok(acc)
    }
}

/// A positive semidefinite, trace-one matrix over a window's Fock space.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Invalid("density matrix must be square".into()));
        }
        let asym = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > 1e-12 {
            return Err(Error::Invalid(format!("density matrix not hermitian ({asym:e})")));
        }
        let trace = matrix.trace();
        if (trace - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::Invalid(format!("density matrix trace {trace} != 1")));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::Invalid(format!("density matrix has eigenvalue {min:e}")));
        }
        Ok(DensityMatrix { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }
}

/// Diagonal density with independent occupations `occupation[k]` of mode k.
pub fn occupation_density(occupation: &[f64], w: &ModeWindow) -> Result<DensityMatrix> {
    if occupation.len() != w.len() {
        return Err(Error::Invalid("one occupation per mode required".into()));
    }
    if occupation.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Invalid("occupations must lie in [0, 1]".into()));
    }
    let n = w.len();
    let dim = w.dim();
    let diag = (0..dim).map(|b| {
        let weight: f64 = (0..n)
            .map(|k| {
                if b >> (n - 1 - k) & 1 == 1 {
                    occupation[k]
                } else {
                    1.0 - occupation[k]
                }
            })
            .product();
        Complex64::new(weight, 0.0)
    });
    let matrix = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(dim, diag));
    DensityMatrix::new(matrix)
}

/// Tensor power of the single-site density `diag(μ, 1 - μ)` (weight μ on
/// the empty state).
pub fn product_density(mu: f64, w: &ModeWindow) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Invalid(format!("mu = {mu} is outside [0, 1]")));
    }
    occupation_density(&vec![1.0 - mu; w.len()], w)
}

/// The gauge-invariant Gaussian density with two-point function
/// `Tr(ρ ad_j a_k) = Q[j][k]`, built as `exp(Σ h_jk ad_j a_k)` normalised,
/// `h = log(Q (1 - Q)^{-1})`. Diagonal covariances use the exact product
/// construction; otherwise eigenvalues are clamped into
/// `[GAUSSIAN_CLAMP, 1 - GAUSSIAN_CLAMP]`.
pub fn gaussian_density(q: &DMatrix<f64>, w: &ModeWindow) -> Result<DensityMatrix> {
    let n = w.len();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::Invalid("covariance does not match the window".into()));
    }
    if (q - q.transpose()).amax() > 1e-12 {
        return Err(Error::Invalid("covariance must be symmetric".into()));
    }
    let off_diagonal = (0..n).any(|i| (0..n).any(|j| i != j && q[(i, j)] != 0.0));
    if !off_diagonal {
        let occ: Vec<f64> = (0..n).map(|i| q[(i, i)]).collect();
        return occupation_density(&occ, w);
    }
    exponential_gaussian(q, w)
}

fn exponential_gaussian(q: &DMatrix<f64>, w: &ModeWindow) -> Result<DensityMatrix> {
    let n = w.len();
    let eig = SymmetricEigen::new(q.clone());
    if eig.eigenvalues.iter().any(|&l| !(-1e-10..=1.0 + 1e-10).contains(&l)) {
        return Err(Error::Invalid(format!(
            "covariance eigenvalues {:?} leave [0, 1]",
            eig.eigenvalues.as_slice()
        )));
    }
    let logits = eig.eigenvalues.map(|l| {
        let l = l.clamp(GAUSSIAN_CLAMP, 1.0 - GAUSSIAN_CLAMP);
        (l / (1.0 - l)).ln()
    });
    let h = &eig.eigenvectors * DMatrix::from_diagonal(&logits) * eig.eigenvectors.transpose();

    let rep = MatrixRep::new(w.clone());
    let mut quadratic = CarPolynomial::zero();
    for j in 0..n {
        for k in 0..n {
            let word = CarPolynomial::product_of(&[
                GeneratorSymbol::creator(w.modes()[j]),
                GeneratorSymbol::annihilator(w.modes()[k]),
            ]);
            quadratic = quadratic + word.scale(Complex64::new(h[(j, k)], 0.0));
        }
    }
    let generator = rep.represent(&quadratic)?.map(|z| z.re);
    let spectral = SymmetricEigen::new(generator);
    let top = spectral.eigenvalues.max();
    let weights = spectral.eigenvalues.map(|e| (e - top).exp());
    let total: f64 = weights.sum();
    let rho = &spectral.eigenvectors
        * DMatrix::from_diagonal(&(weights / total))
        * spectral.eigenvectors.transpose();
    let rho = rho.map(|x| Complex64::new(x, 0.0));
    let rho = (&rho + rho.adjoint()).scale(0.5);
    DensityMatrix::new(rho)
}

pub fn represent(p: &CarPolynomial, w: &ModeWindow) -> Result<DMatrix<Complex64>> {
    MatrixRep::new(w.clone()).represent(p)
}

pub fn oracle_evaluate(d: &DensityMatrix, p: &CarPolynomial, w: &ModeWindow) -> Result<Complex64> {
    MatrixRep::new(w.clone()).evaluate(d, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::car_expr::parse_expression;

    fn expr(s: &str) -> CarPolynomial {
        parse_expression(s).unwrap()
    }

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn close(a: Complex64, b: f64, tol: f64) -> bool {
        (a - Complex64::new(b, 0.0)).norm() <= tol
    }

    #[test]
    fn number_operator_single_mode() {
        let w = ModeWindow::integers(0..1).unwrap();
        let m = represent(&expr("ad(0)*a(0)"), &w).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]).map(|x| Complex64::new(x, 0.0));
        assert_eq!(m, expected);
    }

    #[test]
    fn position_squares_to_identity() {
        let w = ModeWindow::integers(0..3).unwrap();
        let rep = MatrixRep::new(w);
        let x = rep.represent(&CarPolynomial::position(1)).unwrap();
        assert_eq!(&x * &x, DMatrix::identity(8, 8));
    }

    #[test]
    fn car_relations_up_to_ten_modes() {
        for n in 1..=10 {
            let rep = MatrixRep::new(ModeWindow::integers(0..n).unwrap());
            assert!(rep.car_defect() <= 1e-13, "n = {n}");
        }
    }

    #[test]
    fn dense_generators_anticommute() {
        let rep = MatrixRep::new(ModeWindow::integers(0..3).unwrap());
        let id = DMatrix::<Complex64>::identity(8, 8);
        for i in 0..3 {
            for j in 0..3 {
                let a = rep.generator(GeneratorSymbol::annihilator(i)).unwrap();
                let b = rep.generator(GeneratorSymbol::creator(j)).unwrap();
                let anti = &a * &b + &b * &a;
                let target = if i == j { id.clone() } else { DMatrix::zeros(8, 8) };
                assert_eq!(anti, target);
                if i == j {
                    assert_eq!(b, a.adjoint());
                }
            }
        }
    }

    #[test]
    fn product_density_examples() {
        let w = ModeWindow::integers(0..3).unwrap();
        let n0 = expr("ad(0)*a(0)");
        let vacuum = product_density(1.0, &w).unwrap();
        assert!(close(oracle_evaluate(&vacuum, &n0, &w).unwrap(), 0.0, 0.0));
        let full = product_density(0.0, &w).unwrap();
        for k in 0..3 {
            let nk = CarPolynomial::ad(k) * CarPolynomial::a(k);
            assert!(close(oracle_evaluate(&full, &nk, &w).unwrap(), 1.0, 0.0));
        }
        let half = product_density(0.5, &w).unwrap();
        let pairs = expr("ad(0)*ad(1)*ad(2)*a(2)*a(1)*a(0)");
        assert!(close(oracle_evaluate(&half, &pairs, &w).unwrap(), 0.125, 1e-15));
        assert!(close(oracle_evaluate(&half, &CarPolynomial::one(), &w).unwrap(), 1.0, 1e-15));
        assert!(product_density(1.5, &w).is_err());
    }

    #[test]
    fn vacuum_kills_trailing_annihilators() {
        let w = ModeWindow::integers(0..3).unwrap();
        let vacuum = product_density(1.0, &w).unwrap();
        for s in ["ad(1)*a(0)", "ad(0)*ad(1)*a(2)", "a(1)", "ad(2)*a(2)"] {
            assert!(close(oracle_evaluate(&vacuum, &expr(s), &w).unwrap(), 0.0, 0.0), "{s}");
        }
    }

    #[test]
    fn gaussian_examples() {
        let w = ModeWindow::integers(0..4).unwrap();
        let rep = MatrixRep::new(w.clone());
        let q = DMatrix::<f64>::identity(4, 4) * 0.75;
        let p = product_density(0.25, &w).unwrap();
        let g = gaussian_density(&q, &w).unwrap();
        assert!(max_abs(&(g.matrix() - p.matrix())) <= 1e-15);
        let g = exponential_gaussian(&q, &w).unwrap();
        assert!(max_abs(&(g.matrix() - p.matrix())) <= 1e-9);

        let toeplitz = DMatrix::from_fn(4, 4, |i, j| match (i as i64 - j as i64).abs() {
            0 => 0.5,
            1 => 0.25,
            _ => 0.0,
        });
        let g = gaussian_density(&toeplitz, &w).unwrap();
        let v = rep.evaluate(&g, &expr("ad(0)*a(1)")).unwrap();
        assert!(close(v, 0.25, 1e-8), "{v}");
        for j in 0..4i64 {
            for k in 0..4i64 {
                let v = rep
                    .evaluate(&g, &(CarPolynomial::ad(j) * CarPolynomial::a(k)))
                    .unwrap();
                assert!(close(v, toeplitz[(j as usize, k as usize)], 1e-8));
            }
        }

        let half = DMatrix::<f64>::identity(4, 4) * 0.5;
        let g = gaussian_density(&half, &w).unwrap();
        let expected = DMatrix::<Complex64>::identity(16, 16) / Complex64::new(16.0, 0.0);
        assert!(max_abs(&(g.matrix() - expected)) <= 1e-15);

        let bad = DMatrix::<f64>::identity(4, 4) * 1.5;
        assert!(gaussian_density(&bad, &w).is_err());
    }

    #[test]
    fn window_order_irrelevant_for_even_polynomials() {
        let sorted = ModeWindow::integers(0..4).unwrap();
        let shuffled = ModeWindow::with_chain_order(
            [2, 0, 3, 1].into_iter().map(DyadicIndex::integer).collect(),
        )
        .unwrap();
        let evens = [
            "ad(0)*a(1)",
            "ad(0)*ad(3)*a(2)*a(1) + 0.5*ad(1)*a(1)",
            "ad(2)*ad(3)",
            "(0,1)*a(3)*a(0)",
        ];
        let mus = [0.0, 0.3, 1.0];
        for mu in mus {
            let d1 = product_density(mu, &sorted).unwrap();
            let d2 = product_density(mu, &shuffled).unwrap();
            for s in evens {
                let v1 = oracle_evaluate(&d1, &expr(s), &sorted).unwrap();
                let v2 = oracle_evaluate(&d2, &expr(s), &shuffled).unwrap();
                assert!((v1 - v2).norm() <= 1e-15, "{s}");
            }
        }
    }

    #[test]
    fn window_errors() {
        let w = ModeWindow::integers(0..2).unwrap();
        assert!(represent(&expr("a(5)"), &w).is_err());
        assert!(ModeWindow::integers(0..13).is_err());
        assert!(ModeWindow::with_chain_order(vec![DyadicIndex::ZERO, DyadicIndex::ZERO]).is_err());
    }
}
