//! Scenario files, the oracle catalog, report files and the `lipflow`
//! command line, on top of `lipflow-core`.

pub mod io;
pub mod oracles;
pub mod report;
pub mod runner;
pub mod scenario;

pub use report::CheckOutcome;
pub use runner::{run_scenario, RunOptions, RunResult};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
