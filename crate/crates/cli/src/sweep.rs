use maisteer::criteria::{delta_r, steering_summary, ReidMode};
use maisteer::entanglement::{delta_g, GiovannettiMode};
use maisteer::gaussian::{analytic_delta, CvVariant, TmsConfig};
use maisteer::open_systems::delta_r_mai_lossy;
use maisteer::split::build_split_state;
use maisteer::wigner::{grid_from_multipoles, likeliest_branch, pipeline_state, GridSpec, Multipoles, Stage};
use rayon::prelude::*;

use crate::config::{Experiment, StageName, SweepConfig};
use crate::error::{CliError, CliResult};

/// Rows in grid order under a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }
}

/// Runs the configured experiment on a pool of `cfg.threads` workers.
pub fn run_sweep(cfg: &SweepConfig) -> CliResult<Table> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| crate::error::bad("threads", e.to_string()))?;
    let rows = pool.install(|| rows_for(cfg))?;
    Ok(Table::new(cfg.experiment.header(), rows))
}

fn collect(rows: Vec<CliResult<Vec<f64>>>) -> CliResult<Vec<Vec<f64>>> {
    rows.into_iter().collect()
}

fn rows_for(cfg: &SweepConfig) -> CliResult<Vec<Vec<f64>>> {
    let settings = &cfg.optimizer;
    match cfg.experiment {
        Experiment::SteeringSweep => collect(
            cfg.mu
                .par_iter()
                .map(|&mu| {
                    let s = steering_summary(&build_split_state(cfg.atoms, mu)?, settings)?;
                    Ok(vec![
                        mu,
                        s.linear.delta,
                        s.mai.delta,
                        s.fisher.delta,
                        s.mai.theta_x,
                        s.mai.theta_y,
                        s.mai.mu2.unwrap_or(0.0),
                    ])
                })
                .collect(),
        ),
        Experiment::EntanglementSweep => collect(
            cfg.mu
                .par_iter()
                .map(|&mu| {
                    let state = build_split_state(cfg.atoms, mu)?;
                    let l = delta_g(&state, GiovannettiMode::Linear, settings)?;
                    let m = delta_g(&state, GiovannettiMode::Mai, settings)?;
                    Ok(vec![mu, l.delta, m.delta, m.config.g_x, m.config.g_y, m.config.mu2.unwrap_or(0.0)])
                })
                .collect(),
        ),
        Experiment::CvNoise => {
            let mut rows = Vec::new();
            for &r in &cfg.r {
                for &r2 in &cfg.r2 {
                    for &sigma in &cfg.sigma {
                        let (tms, variant) = if r2.is_infinite() {
                            (TmsConfig::new(r, 0.0, sigma)?, CvVariant::MaiLimit)
                        } else {
                            (TmsConfig::new(r, r2, sigma)?, CvVariant::Mai)
                        };
                        rows.push(vec![
                            sigma,
                            r,
                            r2,
                            analytic_delta(&tms, CvVariant::Linear),
                            analytic_delta(&tms, variant),
                        ]);
                    }
                }
            }
            Ok(rows)
        }
        Experiment::LossSweep => {
            let linear: Vec<f64> = cfg
                .mu
                .par_iter()
                .map(|&mu| Ok(delta_r(&build_split_state(cfg.atoms, mu)?, ReidMode::Linear, settings)?.delta))
                .collect::<CliResult<_>>()?;
            let cells: Vec<(usize, f64)> = (0..cfg.mu.len())
                .flat_map(|i| cfg.gamma.iter().map(move |&g| (i, g)))
                .collect();
            collect(
                cells
                    .par_iter()
                    .map(|&(i, gamma)| {
                        let state = build_split_state(cfg.atoms, cfg.mu[i])?;
                        let lossy = delta_r_mai_lossy(&state, gamma, settings)?;
                        Ok(vec![gamma, cfg.mu[i], lossy.delta, linear[i]])
                    })
                    .collect(),
            )
        }
        Experiment::WignerSnapshot => {
            let w = &cfg.wigner;
            let mu = cfg.mu[0];
            let state = build_split_state(cfg.atoms, mu)?;
            let branch = likeliest_branch(&state, w.theta_y)?;
            let stage = match w.stage {
                StageName::Conditional => Stage::Conditional,
                StageName::Encoded => Stage::Encoded {
                    phase: w.phase,
                    generator: w.generator,
                },
                StageName::Mai => Stage::AfterMai {
                    phase: w.phase,
                    generator: w.generator,
                    mu2: w.mu2.unwrap_or(mu),
                },
            };
            let psi = pipeline_state(&branch, stage);
            let mp = Multipoles::from_pure(branch.sector, &psi)?;
            let spec = GridSpec {
                n_theta: w.n_theta,
                n_phi: w.n_phi,
            };
            let grid = grid_from_multipoles(&mp, spec).map_err(CliError::from)?;
            Ok(grid.rows().map(|(t, p, v)| vec![t, p, v]).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigFile, Overrides};

    fn cfg(e: Experiment, text: &str) -> SweepConfig {
        SweepConfig::resolve(e, ConfigFile::parse(text).unwrap(), Overrides::default()).unwrap()
    }

    #[test]
    fn cv_noise_shape() {
        let t = run_sweep(&cfg(Experiment::CvNoise, "")).unwrap();
        assert_eq!(t.rows.len(), 44);
        assert_eq!(t.header, ["sigma", "r", "r2", "delta_R_L", "delta_R_MAI"]);
        // r2 = inf rows carry the limit and dominate the finite ones
        let last = &t.rows[43];
        assert!(last[2].is_infinite() && last[4] > t.rows[32][4]);
    }

    #[test]
    fn snapshot_shape() {
        let t = run_sweep(&cfg(
            Experiment::WignerSnapshot,
            "N = 8\n[grid]\nmu = [0.5]\n[wigner]\nstage = \"mai\"\nn_theta = 4\nn_phi = 6",
        ))
        .unwrap();
        assert_eq!(t.rows.len(), 24);
    }

    #[test]
    fn steering_rows_follow_grid_order() {
        let t = run_sweep(&cfg(
            Experiment::SteeringSweep,
            "N = 6\nthreads = 3\n[grid]\nmu = [0.3, 0.0, 0.2]\n[optimizer]\ntheta_grid = 8\nmu2_grid = 8",
        ))
        .unwrap();
        let mus: Vec<f64> = t.rows.iter().map(|r| r[0]).collect();
        assert_eq!(mus, vec![0.3, 0.0, 0.2]);
    }
}
