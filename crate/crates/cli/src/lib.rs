//! Scenario-driven front end for `twotime-core`.

pub mod run;
pub mod scenario;

pub use run::{execute, write_atomic, RunOutcome, CSV_HEADER};
pub use scenario::{parse_scenario, parse_scenario_str, Overrides, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CROSS_VALIDATION: i32 = 2;
