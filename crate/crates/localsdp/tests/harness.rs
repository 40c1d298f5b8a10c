use std::path::PathBuf;
use std::time::Duration;

use localsdp::harness::*;
use localsdp::lasserre::{SeedFamily, Sense};
use localsdp::solver::{InfeasibleAssertion, SolveOutcome, Transcript, TranscriptLevel};
use localsdp::Error;

fn write_temp(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("localsdp-harness-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn assert_close(values: &[f64], expected: &[f64]) {
    assert_eq!(values.len(), expected.len());
    for (v, e) in values.iter().zip(expected) {
        assert!((v - e).abs() < 1e-9, "{values:?} vs {expected:?}");
    }
}

#[test]
fn triangle_is_ingested() {
    let g = ingest_graph(write_temp("triangle.txt", "1 2\n2 3\n3 1\n")).unwrap();
    assert_eq!(g.vertices(), 3);
    assert_eq!(g.edges().len(), 3);
    assert_eq!(g.total_weight(), 3.0);
}

#[test]
fn weights_comments_and_merging() {
    let g = Graph::parse("# header\n1 2 0.5\n\n2 1 0.25  # again\n").unwrap();
    assert_eq!(g.edges(), &[(0, 1, 0.75)]);
    assert_eq!(Graph::parse(&g.to_edge_list()).unwrap(), g);
}

#[test]
fn malformed_lines_report_their_number() {
    assert!(matches!(Graph::parse("1 2\n1 1\n"), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(Graph::parse("1 2\n\n0 3\n"), Err(Error::Parse { line: 3, .. })));
    assert!(matches!(Graph::parse("1 x\n"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(Graph::parse("1 2 -1\n"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(Graph::parse("1 2 3 4\n"), Err(Error::Parse { line: 1, .. })));
    assert!(Graph::parse("1 65\n").is_err());
    assert!(matches!(ingest_graph("/nonexistent/graph.txt"), Err(Error::Io(_))));
}

#[test]
fn mode_names_round_trip() {
    for m in Mode::ALL {
        assert_eq!(m.name().parse::<Mode>().unwrap(), m);
    }
    assert!("sparsest".parse::<Mode>().is_err());
    assert_eq!("unequal".parse::<CspRelation>().unwrap(), CspRelation::Unequal);
}

#[test]
fn brute_force_examples() {
    let tri = brute_force(&Instance::max_cut(Graph::complete(3)).unwrap()).unwrap().unwrap();
    assert_eq!(tri.value, 2.0);
    let bis = brute_force(&Instance::min_bisection(Graph::cycle(4)).unwrap()).unwrap().unwrap();
    assert_eq!(bis.value, 2.0);
    assert_eq!(bis.witness.iter().filter(|&&l| l == 1).count(), 2);
    let csp = brute_force(&Instance::two_csp(Graph::path(2), 2, CspRelation::Equal).unwrap()).unwrap().unwrap();
    assert!((csp.value - 1.0).abs() < 1e-12);
    let is = brute_force(&Instance::independent_set(Graph::cycle(5)).unwrap()).unwrap().unwrap();
    assert_eq!(is.value, 2.0);
}

#[test]
fn coloring_feasibility_by_brute_force() {
    assert!(brute_force(&Instance::coloring(Graph::cycle(5), 3).unwrap()).unwrap().is_some());
    assert!(brute_force(&Instance::coloring(Graph::complete(4), 3).unwrap()).unwrap().is_none());
}

#[test]
fn brute_force_refuses_large_instances() {
    assert!(matches!(brute_force(&Instance::max_cut(Graph::path(21)).unwrap()), Err(Error::TooLarge(_))));
    assert!(matches!(brute_force(&Instance::coloring(Graph::path(13), 3).unwrap()), Err(Error::TooLarge(_))));
}

#[test]
fn spectra_of_small_graphs() {
    let k4 = laplacian_spectrum(&Graph::complete(4));
    assert_close(&k4.values, &[0.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0]);
    assert_close(&laplacian_spectrum(&Graph::path(2)).values, &[0.0, 2.0]);
    let two = Graph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
    assert_close(&laplacian_spectrum(&two).values, &[0.0, 0.0, 2.0, 2.0]);
    let c5 = laplacian_spectrum(&Graph::cycle(5));
    assert!((c5.lambda(2).unwrap() - (1.0 - (2.0 * std::f64::consts::PI / 5.0).cos())).abs() < 1e-9);
    let lonely = laplacian_spectrum(&Graph::from_edges(3, [(0, 1, 1.0)]).unwrap());
    assert_eq!(lonely.isolated, vec![2]);
    assert_close(&lonely.values, &[0.0, 0.0, 2.0]);
}

#[test]
fn graph_generators() {
    let p = Graph::petersen();
    assert_eq!((p.vertices(), p.edges().len()), (10, 15));
    assert!(p.degrees().iter().all(|&d| d == 3.0));
    assert!(p.is_connected());
    assert!(!Graph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap().is_connected());
}

fn fake_outcome(feasible: bool) -> SolveOutcome {
    if feasible {
        SolveOutcome::Transcript(Transcript {
            version: 1,
            stages: 0,
            eps0: 0.1,
            rng_seed: 0,
            levels: vec![TranscriptLevel { seed: SeedFamily::root(), coordinates: vec![], values: vec![] }],
            stats: vec![],
            touched_coordinates: 0,
            total_oracle_calls: 1,
        })
    } else {
        SolveOutcome::Infeasible(InfeasibleAssertion {
            eps0: 0.1,
            cut_rows: 0,
            stats: vec![],
            touched_coordinates: 0,
            total_oracle_calls: 1,
        })
    }
}

#[test]
fn bisection_converges_in_both_directions() {
    let options = BisectionOptions { resolution: 1e-3, max_iterations: 30, step_seconds: None };
    let up = bisect_objective(Sense::Maximize, 0.0, 10.0, &options, |q| Ok(fake_outcome(q <= 3.7))).unwrap();
    assert!((up.q.unwrap() - 3.7).abs() <= 1e-3 && up.q.unwrap() <= 3.7);
    assert_eq!(up.steps[0].q, 0.0);
    let down = bisect_objective(Sense::Minimize, 0.0, 10.0, &options, |q| Ok(fake_outcome(q >= 2.2))).unwrap();
    assert!((down.q.unwrap() - 2.2).abs() <= 1e-3 && down.q.unwrap() >= 2.2);
    assert_eq!(down.steps[0].q, 10.0);
    let none = bisect_objective(Sense::Maximize, 0.0, 1.0, &options, |_| Ok(fake_outcome(false))).unwrap();
    assert!(none.q.is_none() && none.transcript.is_none());
    let capped = BisectionOptions { resolution: 0.0, max_iterations: 4, step_seconds: None };
    assert_eq!(bisect_objective(Sense::Maximize, 0.0, 1.0, &capped, |_| Ok(fake_outcome(true))).unwrap().steps.len(), 5);
}

fn c5_spec() -> ProblemSpec {
    let mut spec = ProblemSpec::new(Mode::MaxCut, write_temp("c5.txt", &Graph::cycle(5).to_edge_list()));
    spec.config.rounds = 2;
    spec.config.stages = 1;
    spec.config.eps0 = 0.05;
    spec.config.bisection.resolution = 0.05;
    spec
}

#[test]
fn five_cycle_run_rounds_near_optimum_and_replays() {
    let spec = c5_spec();
    let result = run_experiment(&spec).unwrap();
    assert!(result.feasible);
    let rounding = result.rounding.as_ref().unwrap();
    assert_eq!(rounding.report.optimum, Some(4.0));
    assert!(rounding.report.objective.unwrap() >= 0.8 * 4.0);
    assert_eq!(rounding.objectives.len(), spec.config.repeats);
    assert!(result.replay.as_ref().unwrap().passed);

    let instance = spec.instance().unwrap();
    let again = check_transcript(&instance, &spec.config, result.q, result.transcript.as_ref().unwrap()).unwrap();
    assert!(again.passed);

    let text = result.to_json();
    assert_eq!(RunResult::from_json(&text).unwrap(), result);
    assert_eq!(run_experiment(&spec).unwrap().to_json(), text);
}

#[test]
fn coloring_run_is_legal() {
    let mut spec = ProblemSpec::new(Mode::Coloring, write_temp("c5-color.txt", &Graph::cycle(5).to_edge_list()));
    spec.config.eps0 = 0.05;
    spec.config.repeats = 20;
    let result = run_experiment(&spec).unwrap();
    let rounding = result.rounding.unwrap();
    assert_eq!(rounding.report.violations, 0);
    assert!(result.replay.unwrap().passed);
}

#[test]
fn raw_program_runs_from_file() {
    let text = "vars 2\nlabels 2\nrounds 1\nobjective max\nterm 1 1\nterm 1 2\n";
    let mut spec = ProblemSpec::new(Mode::RawPolynomial, write_temp("raw.txt", text));
    spec.config.rounds = 1;
    spec.config.stages = 0;
    spec.config.eps0 = 0.05;
    spec.config.q = Some(1.0);
    let result = run_experiment(&spec).unwrap();
    assert!(result.feasible);
    assert_eq!(result.rounding.unwrap().report.optimum, Some(2.0));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut spec = c5_spec();
    spec.config.eps0 = 2.0;
    assert!(run_experiment(&spec).is_err());
    let mut spec = c5_spec();
    spec.config.repeats = 0;
    assert!(run_experiment(&spec).is_err());
    let mut spec = c5_spec();
    spec.config.bisection.step_seconds = Some(0.0);
    assert!(run_experiment(&spec).is_err());
    let spec = ProblemSpec { input: None, ..c5_spec() };
    assert!(spec.instance().is_err());
}

#[test]
fn relaxation_summary_counts_coordinates() {
    let instance = Instance::max_cut(Graph::cycle(4)).unwrap();
    let s = summarize_relaxation(&instance, &RunConfig { rounds: 2, ..RunConfig::default() }).unwrap();
    assert_eq!(s.root_coordinates, 4 + 6);
    assert_eq!(s.full_coordinates, 15);
}

#[test]
fn bench_fast_path_touches_fewer_coordinates() {
    let instance = Instance::max_cut(Graph::cycle(6)).unwrap();
    let config = RunConfig { rounds: 2, stages: 1, eps0: 0.05, ..RunConfig::default() };
    let row = bench(&instance, &config, Duration::from_secs(120)).unwrap();
    assert_eq!(row.fast_status, BenchStatus::Feasible);
    assert!(row.fast_touched < row.full_coordinates);
    let csv = bench_csv(&[row]);
    assert!(csv.starts_with(BENCH_CSV_HEADER));
    assert_eq!(csv.lines().count(), 2);
}
