//! Seeded Monte-Carlo experiments: configuration, presets, execution and CSV
//! output.

pub mod config;
pub mod csv;
pub mod presets;
pub mod run;

pub use config::{AngleSpec, ExperimentConfig, ScenarioKind, SweepAxis, CONFIG_KEYS};
pub use csv::{emit_csv, to_csv_string, write_csv, HEADER};
pub use presets::{list_presets, preset, PRESET_NAMES};
pub use run::{run_experiment, ResultRecord, THREADS_ENV};
