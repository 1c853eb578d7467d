//! Scenario-driven front end for `gvf-core`: scenario files, simulation
//! artifacts and SVG plots.

pub mod cli;
pub mod plot;
pub mod run;
pub mod scenario;

pub use run::{run, Outcome, RunArtifactSet, RunMetadata};
pub use scenario::{load_scenario, Scenario, ScenarioError};
