//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use carsym::actions::{OrthogonalWindowMatrix, SpreadingMap, Transformation};
use carsym::car_expr::normal_words;
use carsym::checker::{
    check_dyadic_invariance, check_extremality, check_spreadable_implies_even, check_symmetry, BatteryConfig,
    Relation, SymmetryKind,
};
use carsym::fock_oracle::{gaussian_density, product_density, MatrixRep, ModeWindow};
use carsym::folner::{
    enumerate_folner, ergodic_average, folner_count, sampled_ergodic_average, subset_report, FolnerSubsetReport,
};
use carsym::states::{clustering_gap, make_pullback_tower, Covariance, StateFunctional, StateModel};
use carsym::{parse_expression, CarPolynomial, Complex64, DyadicIndex, GeneratorSymbol, Word};
use nalgebra::DMatrix;
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MUS: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn expr(s: &str) -> CarPolynomial {
    parse_expression(s).unwrap()
}

fn toeplitz() -> StateModel {
    StateModel::toeplitz(&[(0, 0.5), (1, 0.25)]).unwrap()
}

fn mixture() -> StateModel {
    StateModel::mixture(vec![
        (0.5, StateModel::product(0.0).unwrap()),
        (0.5, StateModel::product(1.0).unwrap()),
    ])
    .unwrap()
}

fn integers(range: std::ops::Range<i64>) -> Vec<DyadicIndex> {
    range.map(DyadicIndex::integer).collect()
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn folner_counts() -> Outcome {
    let start = Instant::now();
    let expected = [12u64, 630, 80080];
    let mut ok = true;
    let mut found = Vec::new();
    for (n, &want) in (1..=3).zip(&expected) {
        let formula = folner_count(n);
        let streamed = enumerate_folner(n).unwrap().count() as u64;
        ok &= formula == BigUint::from(want) && streamed == want;
        found.push(format!("{formula}/{streamed}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    outcome(ok, format!("formula/streamed = {} in {elapsed:.2?}", found.join(", ")))
}

fn subset_lemma() -> Outcome {
    let start = Instant::now();
    let mut decreasing = true;
    let mut bound = true;
    let mut details = Vec::new();
    for m in 1..=2 {
        let reports: Vec<FolnerSubsetReport> = (1..=4).map(|n| subset_report(n, m).unwrap()).collect();
        decreasing &= reports.windows(2).all(|w| w[1].g_ratio() < w[0].g_ratio());
        bound &= reports.iter().all(FolnerSubsetReport::h_bound_holds);
        let ratios: Vec<String> = reports.iter().map(|r| format!("{:.4}", r.csv_row().g_ratio)).collect();
        let h: Vec<String> = reports.iter().map(|r| format!("{}<={}", r.h_count, r.h_bound())).collect();
        details.push(format!("m={m}: G/F {} ; H {}", ratios.join(" > "), h.join(", ")));
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(300);
    outcome(
        decreasing && bound && fast,
        format!(
            "ratios strictly decreasing: {decreasing}; H bound holds: {bound}; {} ({elapsed:.2?})",
            details.join(" | ")
        ),
    )
}

fn random_polynomial(rng: &mut ChaCha8Rng, modes: &[DyadicIndex]) -> CarPolynomial {
    (0..rng.random_range(1..=4)).fold(CarPolynomial::zero(), |acc, _| {
        let len = rng.random_range(0..=4);
        let symbols: Vec<GeneratorSymbol> = (0..len)
            .map(|_| GeneratorSymbol {
                index: modes[rng.random_range(0..modes.len())],
                dagger: rng.random_bool(0.5),
            })
            .collect();
        let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        acc + CarPolynomial::product_of(&symbols).scale(c)
    })
}

fn car_soundness() -> Outcome {
    let defect = (1..=10)
        .map(|n| MatrixRep::new(ModeWindow::integers(0..n).unwrap()).car_defect())
        .fold(0.0, f64::max);
    let modes = integers(0..4);
    let rep = MatrixRep::new(ModeWindow::new(modes.clone()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let p = random_polynomial(&mut rng, &modes);
        let q = random_polynomial(&mut rng, &modes);
        let symbolic = rep.represent(&(&p * &q)).unwrap();
        let dense = rep.represent(&p).unwrap() * rep.represent(&q).unwrap();
        worst = worst.max(max_abs(&(symbolic - dense)));
    }
    outcome(
        defect <= 1e-13 && worst <= 1e-12,
        format!("relation defect up to 10 modes {defect:e}; 500 products max deviation {worst:e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let modes = integers(0..4);
    let window = ModeWindow::new(modes.clone()).unwrap();
    let rep = MatrixRep::new(window.clone());
    let words = normal_words(&modes, 6);
    let deviation = |s: &StateModel, d: &carsym::fock_oracle::DensityMatrix| {
        words
            .iter()
            .map(|w| {
                let p = CarPolynomial::from_word(w.clone(), Complex64::new(1.0, 0.0));
                (s.evaluate(&p).unwrap() - rep.evaluate(d, &p).unwrap()).norm()
            })
            .fold(0.0, f64::max)
    };
    let product = MUS
        .iter()
        .map(|&mu| {
            let density = product_density(mu, &window).unwrap();
            deviation(&StateModel::product(mu).unwrap(), &density)
        })
        .fold(0.0, f64::max);
    let t = toeplitz();
    let StateModel::QuasiFree(q) = &t else { unreachable!() };
    let Covariance::Toeplitz { .. } = q.covariance() else { unreachable!() };
    let section = q.covariance().section(&modes).unwrap();
    let gaussian = deviation(&t, &gaussian_density(&section, &window).unwrap());
    outcome(
        product < 1e-12 && gaussian < 1e-8,
        format!("{} words; product max deviation {product:e}; Gaussian Toeplitz {gaussian:e}", words.len()),
    )
}

fn pair_word(k: i64) -> CarPolynomial {
    let creators: Vec<GeneratorSymbol> = (0..k).map(GeneratorSymbol::creator).collect();
    let annihilators: Vec<GeneratorSymbol> = (0..k).rev().map(GeneratorSymbol::annihilator).collect();
    CarPolynomial::product_of(&[creators, annihilators].concat())
}

fn rotation_battery() -> Outcome {
    let config = BatteryConfig::new(6, (0..5).collect());
    let mut worst_battery: f64 = 0.0;
    let mut holds = true;
    for mu in MUS {
        let v = check_symmetry(&StateModel::product(mu).unwrap(), SymmetryKind::Rotatable, &config).unwrap();
        holds &= v.holds();
        worst_battery = worst_battery.max(v.battery.max_gap);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let window: Vec<i64> = (0..5).collect();
    let rotations: Vec<OrthogonalWindowMatrix> = (0..10)
        .map(|_| OrthogonalWindowMatrix::random(&window, 10, &mut rng))
        .collect();
    let mut worst_pairs: f64 = 0.0;
    for mu in MUS {
        let s = StateModel::product(mu).unwrap();
        for k in 1..=3 {
            for o in &rotations {
                let value = s.evaluate(&o.act(&pair_word(k))).unwrap();
                worst_pairs = worst_pairs.max((value - Complex64::new((1.0 - mu).powi(k as i32), 0.0)).norm());
            }
        }
    }
    outcome(
        holds && worst_battery <= 1e-9 && worst_pairs <= 1e-9,
        format!("battery max gap {worst_battery:e}; rotated pair words max deviation {worst_pairs:e}"),
    )
}

/// A product state with a planted nonzero value on every degree-one word.
struct OddStub(StateModel);

impl StateFunctional for OddStub {
    fn evaluate_word(&self, word: &Word) -> carsym::Result<Complex64> {
        if word.degree() == 1 {
            return Ok(Complex64::new(0.1, 0.0));
        }
        self.0.evaluate_word(word)
    }
}

fn spreadable_implies_even() -> Outcome {
    let config = BatteryConfig::new(5, (0..5).collect());
    let mut states: Vec<StateModel> = MUS.iter().map(|&mu| StateModel::product(mu).unwrap()).collect();
    states.push(mixture());
    states.push(make_pullback_tower(&StateModel::product(0.25).unwrap(), 2));
    let mut exact = true;
    let mut odd_words = 0;
    for s in &states {
        let v = check_spreadable_implies_even(s, &config).unwrap();
        exact &= v.holds() && v.battery.max_gap == 0.0;
        odd_words = v.battery.word_count;
    }
    let stub = check_spreadable_implies_even(&OddStub(StateModel::product(0.25).unwrap()), &config).unwrap();
    let caught = !stub.holds() && stub.witness.as_ref().is_some_and(|w| w.relation == Relation::Vanishing);
    outcome(
        exact && caught,
        format!(
            "{} spreadable states exactly zero on {odd_words} odd words: {exact}; planted odd term caught: {caught}",
            states.len()
        ),
    )
}

fn strict_inclusion() -> Outcome {
    let config = BatteryConfig::new(4, (0..5).collect());
    let s = toeplitz();
    let stationary = check_symmetry(&s, SymmetryKind::Stationary, &config).unwrap();
    let spreadable = check_symmetry(&s, SymmetryKind::Spreadable, &config).unwrap();
    let stationary_exact = stationary.holds() && stationary.battery.max_gap == 0.0;
    let witness_ok = spreadable.witness.as_ref().is_some_and(|w| {
        w.relation
            == Relation::Invariance {
                transformation: Transformation::Spreading {
                    map: SpreadingMap::theta(1),
                },
            }
            && w.polynomial == expr("ad(0)*a(1)")
            && (w.gap - 0.25).abs() <= 1e-10
    });
    let gap = spreadable.witness.as_ref().map_or(f64::NAN, |w| w.gap);
    outcome(
        stationary_exact && witness_ok,
        format!("stationary exact: {stationary_exact}; spreadable witness (theta(1), ad(0)*a(1)) gap {gap}"),
    )
}

fn dyadic_mechanism() -> Outcome {
    let config = BatteryConfig::new(4, (-2..=2).collect());
    let v = check_dyadic_invariance(&StateModel::product(0.25).unwrap(), 2, &config).unwrap();
    outcome(
        v.holds() && v.battery.max_gap == 0.0,
        format!(
            "level 2: {} generators over {} words plus 200 restriction samples, max gap {}",
            v.battery.generators.len() - 1,
            v.battery.word_count,
            v.battery.max_gap
        ),
    )
}

fn clustering() -> Outcome {
    let x = expr("ad(0)*a(0)");
    let product = MUS
        .iter()
        .map(|&mu| clustering_gap(&StateModel::product(mu).unwrap(), &x, 5).unwrap())
        .fold(0.0, f64::max);
    let mixed = clustering_gap(&mixture(), &x, 5).unwrap();
    let config = BatteryConfig::new(4, (0..5).collect());
    let product_verdicts = MUS
        .iter()
        .all(|&mu| check_extremality(&StateModel::product(mu).unwrap(), 5, &config).unwrap().holds());
    let mixture_verdict = check_extremality(&mixture(), 5, &config).unwrap();
    outcome(
        product <= 1e-10 && mixed == 0.25 && product_verdicts && !mixture_verdict.holds(),
        format!("product gap {product:e}; mixture gap {mixed}; verdicts product holds {product_verdicts}, mixture violated {}", !mixture_verdict.holds()),
    )
}

/// Every report of the suites above, serialised.
fn report_bundle(seed: u64) -> String {
    let config = BatteryConfig {
        seed,
        ..BatteryConfig::new(4, (0..5).collect())
    };
    let mut out = Vec::new();
    for m in 1..=2 {
        for n in 1..=3 {
            out.push(subset_report(n, m).unwrap().json().to_string());
        }
    }
    let states = [StateModel::product(0.25).unwrap(), toeplitz(), mixture()];
    for s in &states {
        for kind in SymmetryKind::ALL {
            out.push(serde_json::to_string(&check_symmetry(s, kind, &config).unwrap()).unwrap());
        }
        let y = expr("ad(0)*a(1) + ad(1)*a(0)");
        out.push(format!("{}", ergodic_average(s, &y, 3).unwrap()));
        out.push(format!("{}", sampled_ergodic_average(s, &y, 6, 500, seed).unwrap()));
    }
    let base = StateModel::product(0.25).unwrap();
    out.push(serde_json::to_string(&check_dyadic_invariance(&base, 1, &config).unwrap()).unwrap());
    out.push(serde_json::to_string(&check_extremality(&mixture(), 5, &config).unwrap()).unwrap());
    out.join("\n")
}

fn determinism() -> Outcome {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| report_bundle(7))
    };
    let first = run(1);
    let identical = [run(1), run(4), run(3)].iter().all(|r| *r == first);
    outcome(identical, format!("{} bytes of reports identical across 1, 1, 4, 3 threads: {identical}", first.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Følner counts", folner_counts),
        ("Følner subset ratios and H bound", subset_lemma),
        ("CAR soundness", car_soundness),
        ("state evaluation vs Fock oracle", oracle_equivalence),
        ("product states are rotatable", rotation_battery),
        ("spreadable states are even", spreadable_implies_even),
        ("stationary but not spreadable", strict_inclusion),
        ("dyadic pullback invariance", dyadic_mechanism),
        ("clustering separates mixtures", clustering),
        ("determinism across threads", determinism),
    ];
    let mut passed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        passed += result.pass as usize;
        println!(
            "{} {:>2}. {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}
