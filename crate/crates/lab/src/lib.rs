//! Load driver, resource monitor, synthetic targets and the command-line
//! orchestration that ties them to the trend analysis in `aging-lab-core`.

pub mod clock;
pub mod config;
pub mod driver;
pub mod monitor;
pub mod orchestrator;
pub mod target;

pub use clock::{RunClock, StopSignal};
pub use config::RunConfig;
