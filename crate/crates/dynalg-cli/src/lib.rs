//! Scenario runner for the dynalg library: JSON scenarios in, JSON reports
//! with replayable proof certificates out.

pub mod checks;
pub mod error;
pub mod report;
pub mod scenario;
pub mod words;

use rayon::prelude::*;

pub use error::CliError;
pub use report::{diff, CheckRecord, Report, Status};
pub use scenario::{Scenario, World, SCHEMA_VERSION};

use report::ReplayContext;

/// Runs every check of the scenario, in parallel on `threads` workers
/// (all cores when `None`), and assembles the report in declaration order.
pub fn run(scenario: Scenario, threads: Option<usize>, packed: bool) -> Result<Report, CliError> {
    let hash = scenario.hash();
    let seed = scenario.seed;
    let world = World::new(scenario)?;
    let table = world.table();
    let context = ReplayContext {
        lattice: (*world.lattice).clone(),
        lagrangian: world.lagrangian.clone(),
        margin: table.margin(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    let checks = &world.scenario.checks;
    let records: Vec<CheckRecord> = pool.install(|| {
        checks
            .par_iter()
            .enumerate()
            .map(|(i, c)| checks::run_check(&world, &context, c, i, packed))
            .collect()
    });
    Ok(Report::new(hash, seed, context, records))
}
