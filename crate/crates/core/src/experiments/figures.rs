use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::estimators::SchemeKind;

use super::config::ExperimentConfig;
use super::sweep::{run_sweep_with, Aggregate};
use super::table::emit_csv;

const AWGN_BASE: &str = "channel=awgn\nsensors=5\nsnr_db=0\nx_bound=5\nbits_final=auto\n";
const AWGN_FIXED_T: &str = "schemes=centralized,dmle,lt-dmle\nstop_time=15\ninterval_v=5\n";
const FADING_BASE: &str = "channel=rayleigh\nsensors=5\nsnr_db=0\nx_bound=5\nbits_final=auto\n";
const FADING_FIXED_MSE: &str = "schemes=centralized,lt-dsdmle,u-dsdmle\ntarget_mse=0.01\nbits_u=1\nbits_v=2\n";
const X_GRID: &str = "0.5,1.5811388300841898,5,15.811388300841896,50";

/// The nine figure sweeps: four AWGN sweeps (the `K` sweep at two values of
/// `r_V`), the fading MSE sweep and three fixed-MSE fading sweeps.
pub fn presets() -> Vec<(&'static str, String)> {
    let awgn_t = format!("{AWGN_FIXED_T}bits_v=1\n");
    vec![
        ("fig1", format!("{AWGN_BASE}schemes=centralized,dmle,lt-dmle\ncoupled_m=0,1,2,3,4,5\nbits_v=1\n")),
        ("fig2a", format!("{AWGN_BASE}{awgn_t}sensors=2,3,4,5,6,7,8,9,10\n").replacen("sensors=5\n", "", 1)),
        ("fig2b", format!("{AWGN_BASE}{AWGN_FIXED_T}bits_v=2\nsensors=2,3,4,5,6,7,8,9,10\n").replacen("sensors=5\n", "", 1)),
        ("fig3", format!("{AWGN_BASE}{awgn_t}snr_db=-20,-10,0,10,20,30\n").replacen("snr_db=0\n", "", 1)),
        ("fig4", format!("{AWGN_BASE}{awgn_t}x_bound={X_GRID}\n").replacen("x_bound=5\n", "", 1)),
        (
            "fig5",
            format!("{FADING_BASE}schemes=centralized,lt-sdmle,u-sdmle,lt-dsdmle,u-dsdmle,obs-mle\ncoupled_m=0,1,2,3,4,5\nbits_u=1\nbits_v=1\n"),
        ),
        ("fig6", format!("{FADING_BASE}{FADING_FIXED_MSE}sensors=2,3,4,5,6,7,8,9,10\n").replacen("sensors=5\n", "", 1)),
        ("fig7", format!("{FADING_BASE}{FADING_FIXED_MSE}snr_db=-20,-10,0,10,20\n").replacen("snr_db=0\n", "", 1)),
        ("fig8", format!("{FADING_BASE}{FADING_FIXED_MSE}x_bound={X_GRID}\n").replacen("x_bound=5\n", "", 1)),
    ]
}

/// Parsed presets with the run-size overrides applied. `schemes`, when
/// non-empty, keeps only the listed schemes; presets left without schemes are
/// dropped.
pub fn preset_configs(
    trials: Option<u64>,
    seed: Option<u64>,
    schemes: &[SchemeKind],
) -> Result<Vec<(&'static str, ExperimentConfig)>> {
    let mut out = Vec::new();
    for (name, text) in presets() {
        let mut c = ExperimentConfig::from_text(&text)?;
        if let Some(t) = trials {
            c.trials = t;
        }
        if let Some(s) = seed {
            c.master_seed = s;
        }
        if !schemes.is_empty() {
            c.schemes.retain(|k| schemes.contains(k));
            if c.schemes.is_empty() {
                continue;
            }
        }
        out.push((name, c));
    }
    Ok(out)
}

/// Runs each preset and writes `<out_dir>/<name>.csv`.
pub fn run_figures(
    configs: &[(&'static str, ExperimentConfig)],
    out_dir: &Path,
    progress: &mut dyn FnMut(&str, &Aggregate),
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, cfg) in configs {
        let rows = run_sweep_with(cfg, &mut |a| progress(name, a)).map_err(|e| e.context(*name))?;
        let path = out_dir.join(format!("{name}.csv"));
        emit_csv(&rows, &path)?;
        written.push(path);
    }
    Ok(written)
}
