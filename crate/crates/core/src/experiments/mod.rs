//! Trial runner, Monte Carlo sweeps over parameter grids, CSV output and
//! experiment config files.

pub mod config;
pub mod figures;
pub mod sweep;
pub mod table;
pub mod trial;

pub use config::{coupled_interval, coupled_target, BitsFinal, CalibrationSource, ChannelKind, ExperimentConfig, InfoGrid};
pub use figures::{preset_configs, presets, run_figures};
pub use sweep::{
    build_scheme, grid_points, run_sweep, run_sweep_with, run_trials, setup_point, solve_fixed_mse, world_for, Aggregate,
    GridPoint, PointSetup,
};
pub use table::{emit_csv, load_csv, read_csv, write_csv, COLUMNS};
pub use trial::{replay_transcript, run_trial, run_trial_with, TrialOptions, TrialResult};
