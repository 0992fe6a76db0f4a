//! Batch driver for the figure sweeps: config parsing, sweep execution and
//! CSV/SVG output.

pub mod config;
pub mod error;
pub mod output;
pub mod sweep;

pub use config::{ConfigFile, Experiment, Overrides, SweepConfig};
pub use error::{CliError, CliResult};
pub use sweep::{run_sweep, Table};

/// Resolves the config, runs the sweep and writes the outputs. Returns the
/// files written.
pub fn execute(experiment: Experiment, file: ConfigFile, flags: Overrides) -> CliResult<Vec<std::path::PathBuf>> {
    let cfg = SweepConfig::resolve(experiment, file, flags)?;
    let table = run_sweep(&cfg)?;
    output::write_csv(&table, &cfg.out)?;
    let mut written = vec![cfg.out.clone()];
    if cfg.emit_svg && experiment != Experiment::WignerSnapshot {
        let columns: &[usize] = match experiment {
            Experiment::SteeringSweep => &[1, 2, 3],
            Experiment::EntanglementSweep => &[1, 2],
            Experiment::CvNoise => &[3, 4],
            Experiment::LossSweep => &[2, 3],
            Experiment::WignerSnapshot => &[],
        };
        let svg = cfg.out.with_extension("svg");
        output::write_svg(&table, columns, &svg)?;
        written.push(svg);
    }
    Ok(written)
}
