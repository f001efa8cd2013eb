use std::sync::Arc;

use ncupper::hierarchy::{eta_bound, lambda_bound, DEFAULT_SUPPORT_CAP, DEFAULT_TOLERANCE};
use ncupper::states::{make_increasing, StateEvaluator, StateSpec};
use ncupper::{
    AlgebraSpec, ExactHaarEngine, FloatHaarEngine, GeneratorKind, GeneratorSpec, NcPolynomial, Rational, Word,
};
use proptest::prelude::*;

fn chsh() -> (AlgebraSpec, NcPolynomial<Rational>) {
    let alg = AlgebraSpec::new(vec![
        GeneratorSpec::new("b1", GeneratorKind::HermitianUnitary, 0),
        GeneratorSpec::new("b2", GeneratorKind::HermitianUnitary, 0),
        GeneratorSpec::new("c1", GeneratorKind::HermitianUnitary, 1),
        GeneratorSpec::new("c2", GeneratorKind::HermitianUnitary, 1),
    ])
    .unwrap();
    let mut f = NcPolynomial::zero();
    for (c, w) in [(-1, "b1 c1"), (-1, "b1 c2"), (-1, "b2 c1"), (1, "b2 c2")] {
        f.add_term(alg.parse_word(w).unwrap(), Rational::from_integer(c.into()));
    }
    (alg, f)
}

fn unitaries() -> (AlgebraSpec, NcPolynomial<Rational>) {
    let alg = AlgebraSpec::new(vec![
        GeneratorSpec::new("u1", GeneratorKind::Unitary, 0),
        GeneratorSpec::new("u2", GeneratorKind::Unitary, 0),
    ])
    .unwrap();
    let mut f = NcPolynomial::zero();
    for w in ["u1", "u1*", "u2", "u2*", "u1 u2", "u2* u1*"] {
        f.add_term(alg.parse_word(w).unwrap(), Rational::from_integer(1.into()));
    }
    (alg, f)
}

fn state(alg: &AlgebraSpec, spec: &StateSpec) -> StateEvaluator<Rational> {
    StateEvaluator::new(alg, spec, Arc::new(ExactHaarEngine::new())).unwrap()
}

fn lambda(f: &NcPolynomial<Rational>, st: &StateEvaluator<Rational>, basis: &[Word]) -> f64 {
    lambda_bound(f, st, basis, DEFAULT_TOLERANCE).unwrap().pencil.lambda
}

fn cases() -> Vec<(AlgebraSpec, NcPolynomial<Rational>, StateSpec)> {
    let (c, fc) = chsh();
    let (u, fu) = unitaries();
    let inc = make_increasing(&[StateSpec::haar(1), StateSpec::haar(2)]).unwrap();
    vec![
        (c.clone(), fc.clone(), StateSpec::per_factor(&c, |_| StateSpec::haar(2))),
        (c.clone(), fc, StateSpec::per_factor(&c, |_| inc[1].clone())),
        (u.clone(), fu.clone(), inc[1].clone()),
        (u, fu, StateSpec::haar(3)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn invariant_under_basis_permutation(case in 0usize..4, seed in any::<u64>()) {
        let (alg, f, spec) = cases().swap_remove(case);
        let st = state(&alg, &spec);
        let basis = alg.words_up_to(&alg.all_generators(), 1);
        let mut shuffled = basis.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert!((lambda(&f, &st, &basis) - lambda(&f, &st, &shuffled)).abs() < 1e-9);
    }

    #[test]
    fn shift_and_scale_equivariance(case in 0usize..4, shift in -5i64..5, scale in 1i64..4) {
        let (alg, f, spec) = cases().swap_remove(case);
        let st = state(&alg, &spec);
        let basis = alg.words_up_to(&alg.all_generators(), 1);
        let base = lambda(&f, &st, &basis);
        let moved = f
            .scale(&Rational::from_integer(scale.into()))
            .add(&NcPolynomial::constant(Rational::from_integer(shift.into())));
        let expected = scale as f64 * base + shift as f64;
        prop_assert!((lambda(&moved, &st, &basis) - expected).abs() < 1e-8);
        let eta = eta_bound(&f, &st, 1, DEFAULT_TOLERANCE, DEFAULT_SUPPORT_CAP).unwrap().pencil.lambda;
        let eta_moved = eta_bound(&moved, &st, 1, DEFAULT_TOLERANCE, DEFAULT_SUPPORT_CAP).unwrap().pencil.lambda;
        prop_assert!((eta_moved - (scale as f64 * eta + shift as f64)).abs() < 1e-8);
    }
}

#[test]
fn singular_gram_kernel_is_annihilated() {
    // In dimension 1 the unitaries are commuting phases, so u1 u2 and u2 u1
    // coincide and the order-2 Gram matrix is singular.
    let (alg, f) = unitaries();
    let st = state(&alg, &StateSpec::haar(1));
    let basis = alg.words_up_to(&alg.all_generators(), 2);
    let record = lambda_bound(&f, &st, &basis, DEFAULT_TOLERANCE).unwrap();
    assert!(record.pencil.rank_b < record.pencil.dimension);
    let a_norm: f64 = record
        .inputs
        .a
        .iter()
        .flatten()
        .map(|v| ncupper::Scalar::to_f64(v).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(record.pencil.kernel_residual <= DEFAULT_TOLERANCE * a_norm);
}

#[test]
fn float_pipeline_matches_exact() {
    for (alg, f, spec) in cases() {
        let exact = state(&alg, &spec);
        let float = StateEvaluator::<f64>::new(&alg, &spec, Arc::new(FloatHaarEngine::new())).unwrap();
        let f64_poly = f.map_coefficients(ncupper::Scalar::to_f64);
        let basis = alg.words_up_to(&alg.all_generators(), 2);
        let l_exact = lambda(&f, &exact, &basis);
        let l_float = lambda_bound(&f64_poly, &float, &basis, DEFAULT_TOLERANCE).unwrap().pencil.lambda;
        assert!((l_exact - l_float).abs() < 1e-8, "{spec}: {l_exact} vs {l_float}");
        let e_exact = eta_bound(&f, &exact, 2, DEFAULT_TOLERANCE, DEFAULT_SUPPORT_CAP).unwrap().pencil.lambda;
        let e_float = eta_bound(&f64_poly, &float, 2, DEFAULT_TOLERANCE, DEFAULT_SUPPORT_CAP).unwrap().pencil.lambda;
        assert!((e_exact - e_float).abs() < 1e-8, "{spec}: {e_exact} vs {e_float}");
    }
}

#[test]
fn larger_basis_never_raises_the_bound() {
    // For a fixed state the order-2 basis contains the order-1 basis.
    for (alg, f, spec) in cases() {
        let st = state(&alg, &spec);
        let small = lambda(&f, &st, &alg.words_up_to(&alg.all_generators(), 1));
        let large = lambda(&f, &st, &alg.words_up_to(&alg.all_generators(), 2));
        assert!(large <= small + 1e-9, "{spec}: {large} > {small}");
    }
}
