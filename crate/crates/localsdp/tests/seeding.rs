mod common;

use std::collections::HashMap;

use common::{full_moments, full_vectors, random_distribution};
use localsdp::harness::{Graph, Instance};
use localsdp::lasserre::{AtomSpace, Labeling, LevelRelaxation, Relaxation, SeedFamily};
use localsdp::rounding::variance_functionals;
use localsdp::seeding::*;
use localsdp::{Error, Tolerances};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cols(vectors: &[&[f64]]) -> ColumnEnsemble<f64> {
    let columns: Vec<DVector<f64>> = vectors.iter().map(|v| DVector::from_column_slice(v)).collect();
    ColumnEnsemble::from_columns((0..columns.len()).collect(), &columns).unwrap()
}

fn root_level(instance: &Instance) -> (Relaxation<f64>, LevelRelaxation<f64>) {
    let relax = Relaxation::new(instance.program.clone(), None).unwrap();
    let level = relax.level(&SeedFamily::root()).unwrap();
    (relax, level)
}

fn point(level: &LevelRelaxation<f64>, dist: &[(Vec<usize>, f64)]) -> DVector<f64> {
    full_moments(level.space(), dist).to_vector(level.coordinates()).unwrap()
}

fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..k.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let l = code % k;
                    code /= k;
                    l
                })
                .collect()
        })
        .collect()
}

fn uniform(labelings: Vec<Vec<usize>>) -> Vec<(Vec<usize>, f64)> {
    let p = 1.0 / labelings.len() as f64;
    labelings.into_iter().map(|l| (l, p)).collect()
}

#[test]
fn zero_column_is_never_sampled() {
    let c = cols(&[&[1.0, 0.0], &[0.0, 0.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let s = volume_sample(&c, 1, &mut rng).unwrap();
        assert_eq!(s.ids, vec![0]);
        assert!(!s.padded);
    }
}

#[test]
fn orthonormal_pair_is_taken_whole() {
    let c = cols(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        assert_eq!(volume_sample(&c, 2, &mut rng).unwrap().ids, vec![0, 1]);
    }
}

#[test]
fn duplicated_column_splits_pair_probability() {
    let c = cols(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 20_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(volume_sample(&c, 2, &mut rng).unwrap().ids).or_default() += 1;
    }
    assert_eq!(counts.get(&vec![0, 1]), None);
    for pair in [vec![0, 2], vec![1, 2]] {
        let f = counts[&pair] as f64 / draws as f64;
        assert!((f - 0.5).abs() < 0.02, "{pair:?}: {f}");
    }
}

#[test]
fn rank_deficient_request_is_padded() {
    let c = cols(&[&[1.0, 0.0], &[2.0, 0.0], &[0.5, 0.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = volume_sample(&c, 2, &mut rng).unwrap();
    assert!(s.padded);
    assert_eq!(s.ids.len(), 2);
    assert!(s.ids.contains(&1), "the longest remaining column pads: {:?}", s.ids);
}

#[test]
fn greedy_takes_farthest_columns_deterministically() {
    let c = cols(&[&[1.0, 0.0, 0.0], &[3.0, 0.1, 0.0], &[0.0, 0.0, 2.0]]);
    let a = greedy_volume(&c, 2).unwrap();
    assert_eq!(a, greedy_volume(&c, 2).unwrap());
    assert_eq!(a.ids, vec![1, 2]);
}

#[test]
fn sampling_more_columns_than_exist_is_rejected() {
    let c = cols(&[&[1.0, 0.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    assert!(volume_sample(&c, 2, &mut rng).is_err());
}

#[test]
fn gram_input_must_be_symmetric_psd() {
    let tol = Tolerances::default();
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(ColumnEnsemble::from_gram(vec![0, 1], bad, &tol), Err(Error::NotPsd { .. })));
    let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(ColumnEnsemble::from_gram(vec![0, 1], skew, &tol).is_err());
    let ok: ColumnEnsemble<f64> = ColumnEnsemble::from_gram(vec![7, 9], DMatrix::identity(2, 2), &tol).unwrap();
    assert_eq!(ok.ids(), &[7, 9]);
    assert!((ok.volume_squared(&[0, 1]) - 1.0).abs() < 1e-12);
}

#[test]
fn qip_seeds_on_integral_point_are_padded() {
    let instance = Instance::max_cut(Graph::cycle(4)).unwrap();
    let (_, level) = root_level(&instance);
    let y = point(&level, &[(vec![1, 0, 1, 0], 1.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = seed_qip(&level, &y, 2, SamplingMode::Exact, &mut rng).unwrap();
    assert!(s.padded);
    assert_eq!(s.vars.len(), 2);
}

#[test]
fn qip_seeds_on_spread_cycle_solution_have_exact_size() {
    let instance = Instance::max_cut(Graph::cycle(4)).unwrap();
    let (_, level) = root_level(&instance);
    let y = point(&level, &uniform(all_labelings(4, 2)));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for size in 1..=4 {
        let s = seed_qip(&level, &y, size, SamplingMode::Exact, &mut rng).unwrap();
        assert_eq!(s.vars.len(), size);
        assert!(!s.padded);
    }
}

fn proper_triangle_colorings() -> Vec<Vec<usize>> {
    all_labelings(3, 3).into_iter().filter(|l| l[0] != l[1] && l[1] != l[2] && l[0] != l[2]).collect()
}

#[test]
fn color_seeds_on_symmetric_triangle_are_uniform() {
    let instance = Instance::coloring(Graph::complete(3), 3).unwrap();
    let (_, level) = root_level(&instance);
    let y = point(&level, &uniform(proper_triangle_colorings()));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 6000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        let s = seed_color(&level, &y, 1, SamplingMode::Exact, &mut rng).unwrap();
        counts[s.vars[0]] += 1;
    }
    for c in counts {
        assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.03, "{counts:?}");
    }
    let all = seed_color(&level, &y, 3, SamplingMode::Exact, &mut rng).unwrap();
    assert_eq!(all.vars, vec![0, 1, 2]);
}

#[test]
fn color_seeds_on_fixed_coloring_are_padded() {
    let instance = Instance::coloring(Graph::complete(3), 3).unwrap();
    let (_, level) = root_level(&instance);
    let y = point(&level, &[(vec![0, 1, 2], 1.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    assert!(seed_color(&level, &y, 1, SamplingMode::Exact, &mut rng).unwrap().padded);
}

#[test]
fn sparsest_cut_seeds_follow_demand_pairs() {
    let instance = Instance::max_cut(Graph::path(3)).unwrap();
    let (_, level) = root_level(&instance);
    let y = point(&level, &uniform(all_labelings(3, 2)));
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let s = seed_sparsest_cut(&level, &y, &[(0, 1, 1.0)], 1, SamplingMode::Exact, &mut rng).unwrap();
    assert_eq!(s.vars, vec![0, 1]);
    assert!(matches!(
        seed_sparsest_cut(&level, &y, &[(0, 1, 0.0)], 1, SamplingMode::Exact, &mut rng),
        Err(Error::NoDemand)
    ));

    // Vertices 0 and 1 always agree, so their difference column vanishes.
    let tied = point(&level, &[(vec![0, 0, 1], 0.5), (vec![1, 1, 0], 0.5)]);
    for _ in 0..100 {
        let s = seed_sparsest_cut(&level, &tied, &[(0, 1, 1.0), (1, 2, 1.0)], 1, SamplingMode::Exact, &mut rng).unwrap();
        assert_eq!(s.vars, vec![1, 2]);
    }
}

#[test]
fn csp_embedding_of_deterministic_variables_vanishes() {
    let space = AtomSpace::labeled(3, 2).unwrap();
    let (_, x) = full_vectors(&space, &[(vec![0, 1, 1], 1.0)]);
    let c = x.condition(&Labeling::empty()).unwrap();
    let e = csp_embedding(&c, &[0, 1, 2]).unwrap();
    assert!(e.gram().amax() < 1e-12);
}

#[test]
fn product_solution_needs_no_stage() {
    let space = AtomSpace::labeled(3, 2).unwrap();
    let (_, x) = full_vectors(&space, &uniform(all_labelings(3, 2)));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let options = CspStageOptions::new(1, 0.1);
    let state = run_csp_stages(&x, &[(0, 1, 1.0), (1, 2, 1.0)], &options, &mut rng).unwrap();
    assert_eq!(state.stage, 0);
    assert!(state.eps_f < 1e-9);
}

#[test]
fn correlated_pair_is_settled_by_one_stage() {
    let space = AtomSpace::labeled(2, 2).unwrap();
    let (_, x) = full_vectors(&space, &[(vec![0, 0], 0.5), (vec![1, 1], 0.5)]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let options = CspStageOptions::new(1, 0.1);
    let state = run_csp_stages(&x, &[(0, 1, 1.0)], &options, &mut rng).unwrap();
    assert_eq!(state.stage, 1);
    assert!(state.history[0].eps_before > 0.5);
    assert!(state.history[0].delta_after < 1e-9);
    assert!(state.eps_f <= 0.1);
}

#[test]
fn stage_cap_is_enforced() {
    assert_eq!(stage_cap(2, 0.5, 8.0), 128);
    let space = AtomSpace::labeled(2, 2).unwrap();
    let (_, x) = full_vectors(&space, &[(vec![0, 0], 0.5), (vec![1, 1], 0.5)]);
    let mut options = CspStageOptions::new(1, 0.1);
    options.cap_constant = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    assert!(matches!(
        run_csp_stages(&x, &[(0, 1, 1.0)], &options, &mut rng),
        Err(Error::StageCapExceeded { cap: 0, .. })
    ));
}

#[test]
fn candidates_limit_stage_seeds() {
    let space = AtomSpace::labeled(3, 2).unwrap();
    let (_, x) = full_vectors(&space, &[(vec![0, 0, 0], 0.5), (vec![1, 1, 1], 0.5)]);
    let mut options = CspStageOptions::new(1, 1e-6);
    options.candidates = Some(vec![2]);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let state = run_csp_stages(&x, &[(0, 1, 1.0), (1, 2, 1.0)], &options, &mut rng).unwrap();
    assert_eq!(state.assignment.vars().collect::<Vec<_>>(), vec![2]);
}

fn edges_of(n: usize) -> Vec<Demand> {
    (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v, 1.0))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sample_has_requested_distinct_ids(seed in any::<u64>(), m in 1usize..6, dim in 1usize..5, k in 1usize..6) {
        let k = k.min(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_fn(dim, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0))).collect();
        let c = ColumnEnsemble::from_columns((10..10 + m).collect(), &columns).unwrap();
        let s = volume_sample(&c, k, &mut rng).unwrap();
        prop_assert_eq!(s.ids.len(), k);
        prop_assert!(s.ids.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.ids.iter().all(|i| (10..10 + m).contains(i)));
        prop_assert_eq!(s.padded, k > dim);
    }

    #[test]
    fn embedding_norm_is_bounded_by_total_variance(seed in any::<u64>(), n in 2usize..5, k in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = AtomSpace::labeled(n, k).unwrap();
        let dist = random_distribution(&mut rng, &space, 6);
        let (_, x) = full_vectors(&space, &dist);
        let c = x.condition(&Labeling::empty()).unwrap();
        let vars: Vec<usize> = (0..n).collect();
        let e = csp_embedding(&c, &vars).unwrap();
        for u in 0..n {
            let total: f64 = (0..k).map(|i| c.variance(&Labeling::single(u, i)).unwrap()).sum();
            prop_assert!(e.norm_squared(u) <= total + 1e-9);
        }
    }

    #[test]
    fn covariance_is_bounded_by_variance(seed in any::<u64>(), n in 2usize..5, k in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = AtomSpace::labeled(n, k).unwrap();
        let dist = random_distribution(&mut rng, &space, 6);
        let (_, x) = full_vectors(&space, &dist);
        let c = x.condition(&Labeling::empty()).unwrap();
        let (eps, delta) = variance_functionals(&c, &edges_of(n)).unwrap();
        prop_assert!(eps <= k as f64 * delta + 1e-9);
    }

    #[test]
    fn committed_stages_never_raise_variance(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = AtomSpace::labeled(n, 2).unwrap();
        let dist = random_distribution(&mut rng, &space, 5);
        let (_, x) = full_vectors(&space, &dist);
        let state = run_csp_stages(&x, &edges_of(n), &CspStageOptions::new(1, 0.05), &mut rng).unwrap();
        prop_assert!(state.stage <= n);
        for r in &state.history {
            prop_assert!(r.delta_after <= r.delta_before + 1e-9);
        }
    }

    #[test]
    fn qip_seed_growth_is_bounded(seed in any::<u64>(), size in 1usize..4) {
        let instance = Instance::max_cut(Graph::cycle(5)).unwrap();
        let (_, level) = root_level(&instance);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = random_distribution(&mut rng, level.space(), 6);
        let y = point(&level, &dist);
        let s = seed_qip(&level, &y, size, SamplingMode::Exact, &mut rng).unwrap();
        prop_assert!(s.vars.len() <= size);
        let g = seed_qip(&level, &y, size, SamplingMode::Greedy, &mut rng).unwrap();
        prop_assert_eq!(g, seed_qip(&level, &y, size, SamplingMode::Greedy, &mut rng).unwrap());
    }
}
