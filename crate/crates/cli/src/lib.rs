//! Commands behind the `dgforecast` binary. Each command is a plain function
//! so it can be driven from tests without spawning a process.

mod compare;
mod config;
mod run;

pub use compare::{cmd_compare, compare_reports, Comparison, ComparisonRow};
pub use config::{Method, RunConfig};
pub use run::{
    cmd_evaluate, cmd_simulate, cmd_train, evaluate_checkpoint, load_series, train_series,
    write_forecasts_csv, TrainOutcome, CHECKPOINT_FILE, CONFIG_FILE, FORECASTS_FILE, LEVELS_FILE,
    REPORT_FILE, TRAIN_REPORT_FILE,
};
