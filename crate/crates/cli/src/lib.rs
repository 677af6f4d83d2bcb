//! Scenario runner for the fhlab laboratory: configuration, experiment dispatch and outputs.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ConfigError, Experiment, Scenario};
pub use run::{run, RunOptions, RunReport, Status};

/// Scenario files shipped with the binary, by name.
pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    ("x1-frequency", include_str!("../scenarios/x1-frequency.toml")),
    ("homogeneous-blowup", include_str!("../scenarios/homogeneous-blowup.toml")),
    ("perturbed-blowup", include_str!("../scenarios/perturbed-blowup.toml")),
    ("operator-check", include_str!("../scenarios/operator-check.toml")),
    ("manufactured", include_str!("../scenarios/manufactured.toml")),
    ("counterexample", include_str!("../scenarios/counterexample.toml")),
    ("random-field", include_str!("../scenarios/random-field.toml")),
];

pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    BUNDLED_SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
