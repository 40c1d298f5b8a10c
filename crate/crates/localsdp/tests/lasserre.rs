mod common;

use approx::assert_relative_eq;
use common::{conditioning_error, full_vectors, random_distribution, random_labeling, random_vars, set};
use localsdp::lasserre::*;
use localsdp::oracle::SeparationResponse;
use localsdp::{Error, Tolerances};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fair_coins() -> PseudoMoments<f64> {
    let space = AtomSpace::binary(2).unwrap();
    let mut y = PseudoMoments::new(space);
    y.insert(set(&[0]), 0.5).unwrap();
    y.insert(set(&[1]), 0.5).unwrap();
    y.insert(set(&[0, 1]), 0.25).unwrap();
    y
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

#[test]
fn extend_from_empty_family() {
    let space = AtomSpace::binary(3).unwrap();
    let ex = extend_index_family(&space, &[SubsetIndex::EMPTY], 2);
    assert_eq!(ex.len(), 7);
    assert!(ex.iter().all(|s| s.len() <= 2));
}

#[test]
fn extend_adds_triple_through_seed() {
    let space = AtomSpace::binary(3).unwrap();
    let ex = extend_index_family(&space, &[SubsetIndex::EMPTY, set(&[0])], 2);
    assert_eq!(ex.len(), 8);
    assert!(ex.contains(&set(&[0, 1, 2])));
}

#[test]
fn extend_with_degree_zero_is_trivial() {
    let space = AtomSpace::binary(3).unwrap();
    assert_eq!(extend_index_family(&space, &[SubsetIndex::EMPTY], 0), vec![SubsetIndex::EMPTY]);
}

#[test]
fn extend_skips_inconsistent_label_sets() {
    // Two variables with three labels: atoms {0,1} belong to variable 0.
    let space = AtomSpace::labeled(2, 3).unwrap();
    let ex = extend_index_family(&space, &[SubsetIndex::EMPTY], 2);
    // ∅, four singletons, and the four cross-variable pairs.
    assert_eq!(ex.len(), 9);
    assert!(!ex.contains(&set(&[0, 1])));
}

#[test]
fn subset_order_is_by_size() {
    let mut v = vec![set(&[0, 1]), set(&[2]), SubsetIndex::EMPTY, set(&[0])];
    v.sort();
    assert_eq!(v, vec![SubsetIndex::EMPTY, set(&[0]), set(&[2]), set(&[0, 1])]);
    assert_eq!(set(&[1, 3]).subsets().count(), 4);
    assert_eq!(set(&[0, 2]).to_string(), "{0,2}");
}

#[test]
fn shift_of_balanced_polynomial_vanishes() {
    let y = fair_coins();
    let p = Polynomial::from_terms([(SubsetIndex::EMPTY, -1.0), (set(&[0]), 1.0), (set(&[1]), 1.0)]);
    assert_relative_eq!(shift_at(&p, &y, SubsetIndex::EMPTY).unwrap(), 0.0);
}

#[test]
fn shift_by_one_is_identity() {
    let y = fair_coins();
    let p = Polynomial::constant(1.0);
    let fam = [SubsetIndex::EMPTY, set(&[0]), set(&[1]), set(&[0, 1])];
    let shifted = shift_operator(&p, &y, &fam).unwrap();
    for s in fam {
        assert_eq!(shifted[&s], y.get(s).unwrap());
    }
}

#[test]
fn shift_single_term() {
    let y = fair_coins();
    let p = Polynomial::monomial(set(&[0]), 1.0);
    assert_relative_eq!(shift_at(&p, &y, set(&[1])).unwrap(), 0.25);
}

#[test]
fn shift_reports_missing_index() {
    let space = AtomSpace::binary(3).unwrap();
    let y = PseudoMoments::<f64>::new(space);
    let p = Polynomial::monomial(set(&[0]), 1.0);
    match shift_at(&p, &y, set(&[2])) {
        Err(Error::MissingMoment(s)) => assert_eq!(s, "{0,2}"),
        other => panic!("expected a missing moment, got {other:?}"),
    }
}

#[test]
fn fair_coin_moment_matrix() {
    let y = fair_coins();
    let m = moment_matrix(&y, &[SubsetIndex::EMPTY, set(&[0]), set(&[1])]).unwrap();
    let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.5, 0.5, 0.5, 0.25, 0.5, 0.25, 0.5]);
    assert_eq!(m, expected);
    assert!(min_eig(&m) >= -1e-12);
}

#[test]
fn integral_and_overfull_single_variable() {
    let space = AtomSpace::binary(1).unwrap();
    let fam = [SubsetIndex::EMPTY, set(&[0])];
    let mut y = PseudoMoments::new(space.clone());
    y.insert(set(&[0]), 1.0).unwrap();
    let m = moment_matrix(&y, &fam).unwrap();
    assert_eq!(m, DMatrix::from_element(2, 2, 1.0));
    assert!(min_eig(&m) >= -1e-12);

    let mut y = PseudoMoments::new(space);
    y.insert(set(&[0]), 1.2).unwrap();
    let m = moment_matrix(&y, &fam).unwrap();
    assert_relative_eq!(m.determinant(), 1.2 - 1.44, epsilon = 1e-12);
    assert!(min_eig(&m) < 0.0);
}

#[test]
fn pinned_empty_moment_cannot_change() {
    let mut y = PseudoMoments::<f64>::new(AtomSpace::binary(1).unwrap());
    assert!(y.insert(SubsetIndex::EMPTY, 0.5).is_err());
    assert!(y.insert(set(&[0]), 11.0).is_err());
    assert_eq!(y.get(SubsetIndex::EMPTY).unwrap(), 1.0);
}

#[test]
fn block_matrix_without_constraints() {
    let y = fair_coins();
    let fam = [SubsetIndex::EMPTY, set(&[0])];
    let blocks = local_block_matrix(&y, &fam, &[], None).unwrap();
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0].id, BlockId::Moment);
}

#[test]
fn block_matrix_with_constraint_and_objective() {
    let space = AtomSpace::binary(1).unwrap();
    let mut y = PseudoMoments::new(space);
    y.insert(set(&[0]), 0.3).unwrap();
    let fam = [SubsetIndex::EMPTY, set(&[0])];
    let c = PolynomialConstraint::nonnegative(Polynomial::monomial(set(&[0]), 1.0));
    let q = Polynomial::monomial(set(&[0]), 1.0);
    let blocks = local_block_matrix(&y, &fam, &[c], Some((&q, 0.5))).unwrap();
    assert_eq!(blocks.len(), 3);
    assert_eq!(blocks[1].matrix, DMatrix::from_element(2, 2, 0.3));
    assert_relative_eq!(blocks[2].matrix[(0, 0)], 0.2, epsilon = 1e-15);
}

fn single_var_relaxation() -> Relaxation<f64> {
    let space = AtomSpace::binary(1).unwrap();
    let program = PolynomialProgram::new(space, Polynomial::zero(), Sense::Maximize);
    Relaxation::new(program, None).unwrap()
}

#[test]
fn oracle_accepts_integral_point() {
    let relax = single_var_relaxation();
    let level = relax.level(&SeedFamily::root()).unwrap();
    assert_eq!(level.coordinates(), &[set(&[0])]);
    for v in [0.0, 1.0, 0.4] {
        assert!(level.separate(&DVector::from_element(1, v), 0.0).unwrap().is_feasible());
    }
}

#[test]
fn oracle_cut_for_overfull_moment_is_valid_on_grid() {
    let relax = single_var_relaxation();
    let level = relax.level(&SeedFamily::root()).unwrap();
    let y = DVector::from_element(1, 1.2);
    let SeparationResponse::Cut { normal, slack } = level.separate(&y, 0.0).unwrap() else {
        panic!("1.2 is not a moment");
    };
    assert_eq!(slack, 0.0);
    assert_relative_eq!(normal.amax(), 1.0);
    for i in 0..=1000 {
        let z = DVector::from_element(1, i as f64 / 1000.0);
        assert!(normal.dot(&z) < normal.dot(&y));
    }
}

#[test]
fn psd_cut_without_box_violation() {
    // Two variables, y1 = y2 = 0.5 but y12 = 0.9 > y1: PSD fails inside the box.
    let space = AtomSpace::binary(2).unwrap();
    let relax = Relaxation::new(PolynomialProgram::new(space, Polynomial::zero(), Sense::Maximize), None).unwrap();
    let level = relax.level(&SeedFamily::root()).unwrap();
    let y = DVector::from_vec(vec![0.5, 0.5, 0.9]);
    let SeparationResponse::Cut { normal, .. } = level.separate(&y, 0.0).unwrap() else {
        panic!("not PSD");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let d = random_distribution(&mut rng, level.space(), 4);
        let m = PseudoMoments::from_distribution(level.space().clone(), &d, level.coordinates()).unwrap();
        let z = m.to_vector(level.coordinates()).unwrap();
        assert!(normal.dot(&z) < normal.dot(&y));
    }
}

#[test]
fn constraint_block_of_fair_coins() {
    // x1 + x2 − 1 ≥ 0 on the fair-coin moments, block over {∅, {1}, {2}}.
    let y = fair_coins();
    let p = Polynomial::from_terms([(SubsetIndex::EMPTY, -1.0), (set(&[0]), 1.0), (set(&[1]), 1.0)]);
    let fam = [SubsetIndex::EMPTY, set(&[0]), set(&[1])];
    let m = localizing_matrix(&p, &y, &fam).unwrap();
    let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25]);
    assert_relative_eq!(m, expected, epsilon = 1e-15);
    // A zero diagonal entry with a nonzero row forces a negative eigenvalue.
    assert!(min_eig(&m) < -1e-3);

    let space = AtomSpace::binary(2).unwrap();
    let program = PolynomialProgram::new(space, Polynomial::zero(), Sense::Maximize)
        .with_constraint(PolynomialConstraint::nonnegative(p));
    let relax = Relaxation::new(program.clone(), None).unwrap();
    let level = relax.level(&SeedFamily::Bounded(1)).unwrap();
    let yv = y.to_vector(level.coordinates()).unwrap();
    let SeparationResponse::Cut { normal, .. } = level.separate(&yv, 0.0).unwrap() else {
        panic!("fair coins violate the localizing block");
    };
    // Every mixture of feasible assignments stays strictly on the other side.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let feasible = [vec![1, 0], vec![0, 1], vec![1, 1]];
    for _ in 0..2000 {
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = w.iter().sum();
        let d: Vec<(Vec<usize>, f64)> = feasible.iter().cloned().zip(w.iter().map(|x| x / total)).collect();
        let m = PseudoMoments::from_distribution(program.space.clone(), &d, level.coordinates()).unwrap();
        let z = m.to_vector(level.coordinates()).unwrap();
        assert!(normal.dot(&z) < normal.dot(&yv));
    }
}

#[test]
fn objective_block_cuts_off_low_values() {
    // Maximize x1 + x2 subject to value ≥ 1.5: the fair coins have value 1.
    let space = AtomSpace::binary(2).unwrap();
    let obj = Polynomial::from_terms([(set(&[0]), 1.0), (set(&[1]), 1.0)]);
    let relax = Relaxation::new(PolynomialProgram::new(space, obj, Sense::Maximize), Some(1.5)).unwrap();
    let level = relax.level(&SeedFamily::root()).unwrap();
    let y = fair_coins().to_vector(level.coordinates()).unwrap();
    let SeparationResponse::Cut { normal, .. } = level.separate(&y, 0.0).unwrap() else {
        panic!("value 1 < 1.5");
    };
    // The cut is the objective itself: −(y1 + y2) ≤ −1.5.
    assert_relative_eq!(normal, DVector::from_vec(vec![-1.0, -1.0, 0.0]), epsilon = 1e-12);
}

#[test]
fn equality_constraints_become_linear_rows() {
    // Balanced two-variable program: x1 + x2 = 1.
    let space = AtomSpace::binary(2).unwrap();
    let p = Polynomial::from_terms([(SubsetIndex::EMPTY, -1.0), (set(&[0]), 1.0), (set(&[1]), 1.0)]);
    let program =
        PolynomialProgram::new(space, Polynomial::zero(), Sense::Minimize).with_constraint(PolynomialConstraint::zero(p));
    let relax = Relaxation::new(program, None).unwrap();
    let level = relax.level(&SeedFamily::root()).unwrap();
    let eq = level.equalities();
    assert!(!eq.is_empty());
    // The uniform distribution over (1,0) and (0,1) satisfies every row.
    let y = DVector::from_vec(vec![0.5, 0.5, 0.0]);
    assert!(eq.residual(&y).amax() <= 1e-12);
    assert!(level.separate(&y, 0.0).unwrap().is_feasible());
    assert!(!level.separate(&DVector::from_vec(vec![0.5, 0.4, 0.0]), 0.0).unwrap().is_feasible());
}

#[test]
fn labeled_space_pins_conflicting_moments() {
    let mut space = AtomSpace::labeled(2, 3).unwrap();
    let a = space.atom(0, 1).unwrap();
    let b = space.atom(1, 1).unwrap();
    space.forbid(a, b).unwrap();
    let y = PseudoMoments::<f64>::new(space.clone());
    assert_eq!(y.get(set(&[a, b])).unwrap(), 0.0);
    assert_eq!(y.get(set(&[0, 1])).unwrap(), 0.0);
    assert!(y.get(set(&[a])).is_err());
}

#[test]
fn integral_vectors_have_rank_one() {
    let space = AtomSpace::binary(2).unwrap();
    let (y, x) = full_vectors(&space, &[(vec![1, 0], 1.0)]);
    let v0 = x.vector(SubsetIndex::EMPTY).unwrap();
    assert_relative_eq!(v0.norm(), 1.0, epsilon = 1e-12);
    assert_relative_eq!(x.vector(set(&[0])).unwrap(), v0, epsilon = 1e-12);
    assert!(x.vector(set(&[1])).unwrap().norm() <= 1e-12);
    assert!(x.gram_error(&y) <= 1e-12);
}

#[test]
fn fair_coin_vectors_reproduce_gram() {
    let y = fair_coins();
    let fam = [SubsetIndex::EMPTY, set(&[0]), set(&[1])];
    let x = cholesky_vectors(&y, &fam, &Tolerances::default()).unwrap();
    for a in fam {
        for b in fam {
            let ip = x.vector(a).unwrap().dot(&x.vector(b).unwrap());
            assert_relative_eq!(ip, y.get(a | b).unwrap(), epsilon = 1e-12);
        }
    }
}

#[test]
fn empty_family_vector_is_unit() {
    let y = PseudoMoments::<f64>::new(AtomSpace::binary(1).unwrap());
    let x = cholesky_vectors(&y, &[SubsetIndex::EMPTY], &Tolerances::default()).unwrap();
    assert_eq!(x.ambient_dim(), 1);
    assert_relative_eq!(x.vector(SubsetIndex::EMPTY).unwrap().norm(), 1.0);
}

#[test]
fn cholesky_refuses_non_psd() {
    let mut y = PseudoMoments::new(AtomSpace::binary(1).unwrap());
    y.insert(set(&[0]), 1.2).unwrap();
    let r = cholesky_vectors(&y, &[SubsetIndex::EMPTY, set(&[0])], &Tolerances::default());
    assert!(matches!(r, Err(Error::NotPsd { .. })));
}

#[test]
fn label_vector_expansions() {
    let space = AtomSpace::binary(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_, x) = full_vectors(&space, &random_distribution(&mut rng, &space, 4));
    let v = |s: &[usize]| x.vector(set(s)).unwrap();
    let f = |pairs: &[(usize, usize)]| x.label_vector(&Labeling::new(pairs.iter().copied()).unwrap()).unwrap();
    assert_relative_eq!(f(&[(0, 1)]), v(&[0]), epsilon = 1e-12);
    assert_relative_eq!(f(&[(0, 0)]), v(&[]) - v(&[0]), epsilon = 1e-12);
    assert_relative_eq!(f(&[(0, 0), (1, 0)]), v(&[]) - v(&[0]) - v(&[1]) + v(&[0, 1]), epsilon = 1e-12);
}

#[test]
fn label_probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for labels in [2, 3] {
        let space = AtomSpace::labeled(3, labels).unwrap();
        let (y, x) = full_vectors(&space, &random_distribution(&mut rng, &space, 6));
        let total: f64 = Labeling::all(&[0, 2], labels).iter().map(|f| x.label_vector(f).unwrap().norm_squared()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        for f in Labeling::all(&[0, 1], labels) {
            let p = x.label_vector(&f).unwrap().norm_squared();
            assert_relative_eq!(p, event_moment(&y, &f).unwrap(), epsilon = 1e-9);
            assert!((-1e-9..=1.0 + 1e-9).contains(&p));
        }
    }
}

#[test]
fn conditioning_on_certain_event_changes_nothing() {
    let space = AtomSpace::binary(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (_, x) = full_vectors(&space, &random_distribution(&mut rng, &space, 4));
    let c = x.condition(&Labeling::empty()).unwrap();
    assert_relative_eq!(c.norm(), 1.0, epsilon = 1e-12);
    let g = Labeling::single(1, 1);
    assert_relative_eq!(c.vector(&g).unwrap(), x.label_vector(&g).unwrap(), epsilon = 1e-12);
}

#[test]
fn conditioning_a_deterministic_pair() {
    // All mass on (x1, x2) = (1, 0).
    let space = AtomSpace::binary(2).unwrap();
    let (_, x) = full_vectors(&space, &[(vec![1, 0], 1.0)]);
    let c = x.condition(&Labeling::single(0, 1)).unwrap();
    assert_relative_eq!(c.vector(&Labeling::single(1, 0)).unwrap().norm_squared(), 1.0, epsilon = 1e-12);
    assert!(c.variance(&Labeling::single(1, 0)).unwrap().abs() <= 1e-12);
    assert!(matches!(x.condition(&Labeling::single(0, 0)), Err(Error::ZeroConditioning { .. })));
}

#[test]
fn conditional_projection_ranks() {
    let space = AtomSpace::binary(3).unwrap();
    let (_, x) = full_vectors(&space, &[(vec![1, 0, 1], 1.0)]);
    assert_eq!(x.conditional_projection(&Labeling::empty(), &[0, 1]).unwrap().rank(), 1);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (_, x) = full_vectors(&space, &random_distribution(&mut rng, &space, 5));
    let p = x.conditional_projection(&Labeling::empty(), &[]).unwrap();
    assert_eq!(p.rank(), 1);
    let e = x.vector(SubsetIndex::EMPTY).unwrap();
    assert_relative_eq!(p.apply(&e).unwrap(), e, epsilon = 1e-10);

    let vars = [0, 2];
    let nonzero = Labeling::all(&vars, 2)
        .iter()
        .filter(|f| x.label_vector(f).unwrap().norm() > Tolerances::default().zero)
        .count();
    let p = x.conditional_projection(&Labeling::empty(), &vars).unwrap();
    assert_eq!(p.rank(), nonzero);
    let z = DVector::from_fn(x.ambient_dim(), |i, _| (i as f64).sin());
    let pz = p.apply(&z).unwrap();
    assert!((p.apply(&pz).unwrap() - &pz).norm() <= 1e-8);
}

#[test]
fn variance_examples() {
    let space = AtomSpace::binary(2).unwrap();
    let (_, x) = full_vectors(&space, &[(vec![1, 0], 0.5), (vec![0, 0], 0.5)]);
    let c = x.condition(&Labeling::empty()).unwrap();
    assert_relative_eq!(c.variance(&Labeling::single(0, 1)).unwrap(), 0.25, epsilon = 1e-12);
    assert!(c.variance(&Labeling::single(1, 0)).unwrap().abs() <= 1e-12);
    let g = Labeling::single(0, 1);
    assert_relative_eq!(c.covariance(&g, &g).unwrap(), c.variance(&g).unwrap(), epsilon = 1e-12);
}

#[test]
fn expected_variance_edge_cases() {
    let space = AtomSpace::binary(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (_, x) = full_vectors(&space, &random_distribution(&mut rng, &space, 6));
    let (lhs, rhs) = expected_conditional_variance(&x, &Labeling::empty(), &[1], &Labeling::empty()).unwrap();
    assert!(lhs.abs() <= 1e-10 && rhs.abs() <= 1e-10);

    let (lhs, rhs) = expected_conditional_variance(&x, &Labeling::empty(), &[0], &Labeling::single(0, 1)).unwrap();
    assert!((lhs - rhs).abs() <= 1e-8);

    // A deterministic seed: the expectation is a single term.
    let (_, x) = full_vectors(&space, &[(vec![1, 0, 1], 0.3), (vec![1, 1, 0], 0.7)]);
    let g = Labeling::single(1, 1);
    let (lhs, _) = expected_conditional_variance(&x, &Labeling::empty(), &[0], &g).unwrap();
    let direct = x.condition(&Labeling::single(0, 1)).unwrap().variance(&g).unwrap();
    assert_relative_eq!(lhs, direct, epsilon = 1e-10);
}

#[test]
fn program_text_round_trip() {
    let text = "# single edge\nvars 2\nrounds 1\nobjective max\nterm 1 1\nterm 1 2\nterm -2 1 2\nconstraint ge\nterm 1\nterm -1 1 2\n";
    let parsed = parse_program(text).unwrap();
    assert_eq!(parsed.rounds, Some(1));
    assert_eq!(parsed.program.constraints.len(), 1);
    let (best, witness) = parsed.program.brute_force().unwrap().unwrap();
    assert_eq!(best, 1.0);
    assert_ne!(witness[0], witness[1]);
    let again = parse_program(&format_program(&parsed.program, parsed.rounds)).unwrap();
    assert_eq!(again, parsed);
}

#[test]
fn program_text_errors_carry_line_numbers() {
    let bad = "vars 2\nobjective max\nterm x 1\n";
    assert!(matches!(parse_program(bad), Err(Error::Parse { line: 3, .. })));
    assert!(matches!(parse_program("vars 2\nterm 1 1\n"), Err(Error::Parse { line: 2, .. })));
    assert!(parse_program("vars 2\nobjective max\nterm 1 3\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_and_simplex_identities(seed in any::<u64>(), n in 2usize..5, labels in 2usize..4, support in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = AtomSpace::labeled(n, labels).unwrap();
        let (y, x) = full_vectors(&space, &random_distribution(&mut rng, &space, support));
        prop_assert!(x.gram_error(&y) <= 1e-9);
        let vars = random_vars(&mut rng, n, n);
        let total: f64 = Labeling::all(&vars, labels).iter().map(|f| x.label_vector(f).unwrap().norm_squared()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn conditioning_identities(seed in any::<u64>(), n in 2usize..6, labels in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = AtomSpace::labeled(n, labels).unwrap();
        let (_, x) = full_vectors(&space, &random_distribution(&mut rng, &space, 8));
        let all: Vec<usize> = (0..n).collect();
        let f = random_labeling(&mut rng, &all, labels, 2);
        let a = random_labeling(&mut rng, &all, labels, 2);
        let b = random_labeling(&mut rng, &all, labels, 2);
        prop_assert!(conditioning_error(&x, &f, &a, &b) <= 1e-9);

        let f0 = random_labeling(&mut rng, &all, labels, 1);
        let vars = random_vars(&mut rng, n, 2);
        if x.condition(&f0).is_ok() {
            let (lhs, rhs) = expected_conditional_variance(&x, &f0, &vars, &a).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-8, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn oracle_cuts_are_valid_on_small_instances(seed in any::<u64>(), n in 1usize..4, with_constraint in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = AtomSpace::binary(n).unwrap();
        let mut program = PolynomialProgram::new(space.clone(), Polynomial::zero(), Sense::Maximize);
        if with_constraint {
            let p = (0..n).fold(Polynomial::constant(-1.0), |p, i| p.add(&Polynomial::monomial(set(&[i]), 1.0)));
            program = program.with_constraint(PolynomialConstraint::nonnegative(p));
        }
        let relax = Relaxation::new(program.clone(), None).unwrap();
        let level = relax.level(&SeedFamily::Bounded(n.min(2))).unwrap();
        let coords = level.coordinates().to_vec();
        // Sampled points of the body: exact moments of distributions over feasible labelings.
        let feasible: Vec<Vec<usize>> = (0..1usize << n)
            .map(|m| (0..n).map(|i| m >> i & 1).collect::<Vec<usize>>())
            .filter(|l| program.feasible(l, 1e-9))
            .collect();
        let inside: Vec<DVector<f64>> = (0..300)
            .map(|_| {
                let d: Vec<(Vec<usize>, f64)> = {
                    let w: Vec<f64> = feasible.iter().map(|_| rng.random_range(0.0..1.0)).collect();
                    let t: f64 = w.iter().sum();
                    feasible.iter().cloned().zip(w.into_iter().map(|v| v / t)).collect()
                };
                PseudoMoments::from_distribution(space.clone(), &d, &coords).unwrap().to_vector(&coords).unwrap()
            })
            .collect();
        for _ in 0..20 {
            let y = DVector::from_fn(coords.len(), |_, _| rng.random_range(-0.2..1.2));
            if let SeparationResponse::Cut { normal, .. } = level.separate(&y, 0.0).unwrap() {
                prop_assert!((normal.amax() - 1.0f64).abs() <= 1e-12);
                for z in &inside {
                    prop_assert!(normal.dot(z) < normal.dot(&y));
                }
            }
        }
    }
}
