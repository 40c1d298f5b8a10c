use localsdp::harness::{family, relaxation, Graph, Instance, RunConfig};
use localsdp::lasserre::{AtomSpace, Polynomial, PolynomialProgram, Relaxation, SeedFamily, Sense, SubsetIndex};
use localsdp::rounding::{propagation_round, transcript_vectors};
use localsdp::solver::*;
use localsdp::{Error, Tolerances};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(stages: usize) -> RunConfig {
    RunConfig { stages, eps0: 0.05, rounds: 1, ..RunConfig::default() }
}

fn solve(instance: &Instance, config: &RunConfig, q: Option<f64>) -> SolveOutcome {
    fast_solve(&family(instance, config, q).unwrap(), &config.solver_options()).unwrap()
}

fn edge() -> Instance {
    Instance::max_cut(Graph::path(2)).unwrap()
}

#[test]
fn single_edge_transcript_rounds_to_the_cut() {
    let instance = edge();
    let cfg = config(1);
    let outcome = solve(&instance, &cfg, Some(1.0));
    let t = outcome.transcript().expect("q = 1 is attainable");
    assert_eq!(t.levels.len(), 2);
    assert_eq!(t.levels[0].seed, SeedFamily::root());
    let (seeds, x) = transcript_vectors::<f64>(t, &instance.program.space, &Tolerances::default()).unwrap();
    assert_eq!(seeds.len(), 1);
    let cuts = (0..50)
        .filter(|&s| {
            let labels = propagation_round(&x, &seeds, s).unwrap().full().unwrap();
            instance.program.value(&labels) == 1.0
        })
        .count();
    assert!(cuts >= 45, "{cuts} of 50 runs cut the edge");
    assert!(replay_check(t, &family(&instance, &cfg, Some(1.0)).unwrap()));
}

#[test]
fn zero_stages_give_a_root_point() {
    let instance = Instance::max_cut(Graph::cycle(4)).unwrap();
    let cfg = config(0);
    let t = solve(&instance, &cfg, None).transcript().cloned().unwrap();
    assert_eq!(t.levels.len(), 1);
    assert_eq!(t.levels[0].seed, SeedFamily::root());
    let level = family(&instance, &cfg, None).unwrap().level(&SeedFamily::root()).unwrap();
    assert!(level.is_feasible(&t.levels[0].vector()).unwrap());
}

#[test]
fn guess_above_optimum_is_infeasible() {
    let instance = edge();
    let outcome = solve(&instance, &config(1), Some(1.5));
    assert!(!outcome.is_feasible());
}

#[test]
fn replay_rejects_tampering() {
    let instance = Instance::max_cut(Graph::path(3)).unwrap();
    let cfg = config(1);
    let problem = family(&instance, &cfg, Some(2.0)).unwrap();
    let t = solve(&instance, &cfg, Some(2.0)).transcript().cloned().unwrap();
    let report = replay_report(&t, &problem, &Tolerances::default()).unwrap();
    assert!(report.passed, "{report:?}");

    let mut perturbed = t.clone();
    perturbed.levels[0].values[0] += 0.1;
    assert!(!replay_check(&perturbed, &problem));

    let mut reseeded = t.clone();
    let current = reseeded.levels[1].seed.seed_vars().unwrap().to_vec();
    let other = (0..3).find(|v| !current.contains(v)).unwrap();
    reseeded.levels[1].seed = SeedFamily::vars([other]);
    assert!(!replay_check(&reseeded, &problem));
}

#[test]
fn solves_are_deterministic() {
    let instance = Instance::max_cut(Graph::cycle(5)).unwrap();
    let cfg = RunConfig { rng_seed: 9, ..config(1) };
    let a = solve(&instance, &cfg, Some(3.5)).transcript().cloned().unwrap();
    let b = solve(&instance, &cfg, Some(3.5)).transcript().cloned().unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(Transcript::from_json(&a.to_json()).unwrap(), a);
}

#[test]
fn transcript_levels_nest_and_agree() {
    let instance = Instance::max_cut(Graph::cycle(5)).unwrap();
    let cfg = RunConfig { seed_size: 1, ..config(2) };
    let t = solve(&instance, &cfg, None).transcript().cloned().unwrap();
    assert_eq!(t.levels.len(), 3);
    for pair in t.levels.windows(2) {
        let (a, b) = (pair[0].seed.seed_vars().unwrap(), pair[1].seed.seed_vars().unwrap());
        assert!(a.iter().all(|v| b.contains(v)));
        assert!(b.len() <= a.len() + cfg.seed_size);
        for (s, v) in pair[0].coordinates.iter().zip(&pair[0].values) {
            assert!((pair[1].value(*s).unwrap() - v).abs() <= RESTRICTION_TOLERANCE);
        }
    }
    assert!(t.stats.iter().all(|s| s.max_support_leak <= SUPPORT_TOLERANCE));
}

#[test]
fn fast_path_touches_fewer_coordinates_than_full_level() {
    let instance = Instance::max_cut(Graph::cycle(6)).unwrap();
    let cfg = RunConfig { rounds: 2, ..config(1) };
    let t = solve(&instance, &cfg, None).transcript().cloned().unwrap();
    let full = relaxation(&instance, &cfg, None).unwrap().coordinates(&SeedFamily::Bounded(1)).len();
    assert!(t.touched_coordinates < full, "{} vs {full}", t.touched_coordinates);
}

#[test]
fn fixed_level_stays_put() {
    let relax = relaxation(&edge(), &config(0), None).unwrap();
    let fixed = FixedLevel::full(relax.clone(), 1);
    assert_eq!(fixed.root_seed(), SeedFamily::Bounded(0));
    assert_eq!(ProblemFamily::<f64>::growth(&fixed), 0);
    let options = SolverOptions::new(0, 0.05);
    let t = fast_solve(&fixed, &options).unwrap().transcript().cloned().unwrap();
    assert_eq!(t.levels[0].coordinates, relax.coordinates(&SeedFamily::Bounded(0)));
    let level = fixed.level(&SeedFamily::Bounded(0)).unwrap();
    let y = t.levels[0].vector::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(fixed.next_seed(&level, &y, &mut rng).unwrap(), SeedFamily::Bounded(0));
}

#[test]
fn fixed_seed_groups_are_added_in_order() {
    let space = AtomSpace::binary(3).unwrap();
    let objective = Polynomial::from_terms([(SubsetIndex::singleton(0), 1.0)]);
    let relax = Relaxation::new(PolynomialProgram::new(space, objective, Sense::Maximize), None).unwrap();
    let problem = LasserreFamily::new(relax, FixedSeeds(vec![vec![2], vec![0]]));
    let options = SolverOptions::new(2, 0.05).with_rng_seed(3);
    let t = fast_solve(&problem, &options).unwrap().transcript().cloned().unwrap();
    let seeds: Vec<Vec<usize>> = t.levels.iter().map(|l| l.seed.seed_vars().unwrap().to_vec()).collect();
    assert_eq!(seeds, vec![vec![], vec![2], vec![0, 2]]);
    assert!(replay_check(&t, &problem));
}

#[test]
fn bad_tolerance_is_rejected() {
    let problem = family(&edge(), &config(0), None).unwrap();
    assert!(matches!(fast_solve(&problem, &SolverOptions::new(0, 1.5)), Err(Error::InvalidInput(_))));
}

#[test]
fn seed_streams_differ_by_depth() {
    use rand::Rng;
    let a: u64 = seed_rng(5, 0).random();
    let b: u64 = seed_rng(5, 1).random();
    assert_ne!(a, b);
    assert_eq!(a, seed_rng(5, 0).random::<u64>());
}
