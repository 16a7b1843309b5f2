//! Scenario files, population sampling, metrics files and reports.

mod analysis;
mod config;
mod io;
mod population;
mod report;

pub use analysis::{analyze, stationary_csv, AnalysisReport, ConfigRow};
pub use config::{
    bundled_names, bundled_scenario, load_scenario, resolve_scenario, AnalysisConfig,
    CatalogConfig, Category, ChokeConfig, ChurnConfig, ClockMode, DelayConfig, HelperConfig,
    PopulationMode, ScenarioConfig, SwitchConfig, UserConfig, VideoEntry,
};
pub use io::{
    helpers_csv, metrics_csv, parse_helpers_csv, parse_metrics_csv, read_run_dir,
    write_analysis_dir, write_run_dir, HELPERS_FILE, METRICS_FILE, METRICS_VERSION,
    STATIONARY_FILE, SUMMARY_FILE,
};
pub use population::{largest_remainder, sample_helper, sample_population, sample_user};
pub use report::{
    compare_runs, mean_of, tail_mean_load, tail_window, Comparison, Summary, DEFAULT_TAIL,
};
