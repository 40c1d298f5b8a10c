//! Instance ingestion, exhaustive baselines, spectra and experiment drivers.

pub mod experiment;
pub mod graph;
pub mod instance;

pub use experiment::{
    bench, bench_csv, bisect_objective, check_transcript, family, relaxation, repeat_seeds, round_transcript,
    run_experiment, run_instance, solve_instance, summarize_relaxation, BenchRow, BenchStatus, Bisection,
    BisectionOptions, BisectionStep, ModeSeeds, ProblemSpec, RelaxationSummary, RoundingSummary, RunConfig, RunResult,
    BENCH_CSV_HEADER, RUN_RESULT_VERSION,
};
pub use graph::{ingest_graph, laplacian_spectrum, Graph, Spectrum, MAX_VERTICES};
pub use instance::{brute_force, BruteForce, CspRelation, Instance, Mode, BINARY_LIMIT, LABELED_LIMIT};
