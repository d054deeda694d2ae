//! Experiment front end: scenario files, Monte Carlo runs, CSV/SVG output and the CLI.

pub mod cli;
pub mod pattern;
pub mod runner;
pub mod scenario;
pub mod svg;

pub use cli::cli_main;
pub use runner::{run_scenario, write_outputs, ResultRow, RunOutput};
pub use scenario::{load_preset, load_scenario, Preset, ScenarioSpec};
