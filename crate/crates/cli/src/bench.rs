//! `streamskip bench`: run scenario files and print the comparison table.

use std::path::Path;

use streamskip::bench::{emit_table, parse_scenarios, run_scenario, BenchScenario, ScenarioResult, TableFormat};

use crate::error::{CliError, CliResult, Classify};

pub fn load_scenarios(path: &Path) -> CliResult<Vec<BenchScenario>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read scenario file {}: {e}", path.display())))?;
    parse_scenarios(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Runs every scenario in order. `seed` replaces each scenario's seed.
pub fn run_all(scenarios: &[BenchScenario], seed: Option<u64>) -> CliResult<Vec<ScenarioResult>> {
    if scenarios.is_empty() {
        return Err(CliError::usage("scenario list is empty"));
    }
    scenarios
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if seed.is_some() {
                s.seed = seed;
            }
            run_scenario(&s).map_err(|e| CliError::runtime(format!("scenario {:?}: {e}", s.name)))
        })
        .collect()
}

/// Returns the markdown table; also writes CSV to `csv` when given.
pub fn cmd_bench(scenarios: &[BenchScenario], csv: Option<&Path>, seed: Option<u64>) -> CliResult<String> {
    let results = run_all(scenarios, seed)?;
    if let Some(path) = csv {
        let text = emit_table(&results, TableFormat::Csv).runtime_err()?;
        std::fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    emit_table(&results, TableFormat::Markdown).runtime_err()
}
