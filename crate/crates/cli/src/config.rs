//! Sweep configuration: a TOML file with optional sections, overridden by flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use maisteer::optimize::OptimizerSettings;
use serde::Deserialize;

use crate::error::{bad, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SteeringSweep,
    EntanglementSweep,
    CvNoise,
    LossSweep,
    WignerSnapshot,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::SteeringSweep,
        Experiment::EntanglementSweep,
        Experiment::CvNoise,
        Experiment::LossSweep,
        Experiment::WignerSnapshot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SteeringSweep => "steering-sweep",
            Experiment::EntanglementSweep => "entanglement-sweep",
            Experiment::CvNoise => "cv-noise",
            Experiment::LossSweep => "loss-sweep",
            Experiment::WignerSnapshot => "wigner-snapshot",
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            Experiment::SteeringSweep => &["mu", "delta_R_L", "delta_R_MAI", "delta_F", "theta_X", "theta_Y", "mu2"],
            Experiment::EntanglementSweep => &["mu", "delta_G_L", "delta_G_MAI", "gX", "gY", "mu2"],
            Experiment::CvNoise => &["sigma", "r", "r2", "delta_R_L", "delta_R_MAI"],
            Experiment::LossSweep => &["gamma", "mu", "delta_R_MAI", "delta_R_L"],
            Experiment::WignerSnapshot => &["theta", "phi", "W"],
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| bad("experiment", format!("unknown experiment `{s}`")))
    }
}

/// A list of values or an inclusive arithmetic range.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self, field: &str) -> CliResult<Vec<f64>> {
        let v = match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || !step.is_finite() || !start.is_finite() || !stop.is_finite() || stop < start {
                    return Err(bad(field, "range needs finite start <= stop and step > 0"));
                }
                // inclusive of `stop` up to rounding
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| start + step * i as f64).collect()
            }
        };
        if v.is_empty() {
            return Err(bad(field, "grid is empty"));
        }
        if v.iter().any(|x| x.is_nan()) {
            return Err(bad(field, "grid contains NaN"));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub mu: Option<Grid>,
    pub gamma: Option<Grid>,
    pub sigma: Option<Grid>,
    pub r: Option<Grid>,
    /// `inf` selects the limit of infinite MAI squeezing.
    pub r2: Option<Grid>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub theta_grid: Option<usize>,
    pub mu2_grid: Option<usize>,
    pub simplex_tol: Option<f64>,
    pub max_evals: Option<usize>,
    pub refine_top: Option<usize>,
    pub random_restarts: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageName {
    #[default]
    Conditional,
    Encoded,
    Mai,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    pub stage: Option<StageName>,
    /// Alice's yz-plane measurement angle.
    pub theta_y: Option<f64>,
    pub phase: Option<f64>,
    /// yz-plane angle of the encoding generator.
    pub generator: Option<f64>,
    /// Twist applied after encoding; defaults to `mu`.
    pub mu2: Option<f64>,
    pub n_theta: Option<usize>,
    pub n_phi: Option<usize>,
}

/// Contents of a config file; every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    #[serde(rename = "N")]
    pub atoms: Option<usize>,
    pub out: Option<PathBuf>,
    pub svg: Option<bool>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub wigner: WignerSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Command-line values that win over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub svg: bool,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WignerOptions {
    pub stage: StageName,
    pub theta_y: f64,
    pub phase: f64,
    pub generator: f64,
    pub mu2: Option<f64>,
    pub n_theta: usize,
    pub n_phi: usize,
}

/// A validated sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub atoms: usize,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma: Vec<f64>,
    pub r: Vec<f64>,
    pub r2: Vec<f64>,
    pub optimizer: OptimizerSettings,
    pub out: PathBuf,
    pub emit_svg: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub wigner: WignerOptions,
}

fn default_mu(experiment: Experiment) -> Grid {
    match experiment {
        Experiment::LossSweep => Grid::List(vec![0.4]),
        Experiment::WignerSnapshot => Grid::List(vec![1.0]),
        _ => Grid::Range {
            start: 0.0,
            stop: 1.0,
            step: 0.05,
        },
    }
}

impl SweepConfig {
    pub fn resolve(experiment: Experiment, file: ConfigFile, flags: Overrides) -> CliResult<Self> {
        if let Some(e) = file.experiment {
            if e != experiment {
                return Err(bad(
                    "experiment",
                    format!("config is for `{}`, command is `{}`", e.name(), experiment.name()),
                ));
            }
        }
        let atoms = file.atoms.unwrap_or(20);
        if atoms == 0 || atoms > maisteer::split::MAX_ATOMS {
            return Err(bad("N", format!("must be in 1..={}, got {atoms}", maisteer::split::MAX_ATOMS)));
        }
        let g = &file.grid;
        let mu = g.mu.clone().unwrap_or_else(|| default_mu(experiment)).values("grid.mu")?;
        let gamma = g
            .gamma
            .clone()
            .unwrap_or(Grid::List(vec![0.0, 0.1, 0.2, 0.4]))
            .values("grid.gamma")?;
        let sigma = g
            .sigma
            .clone()
            .unwrap_or(Grid::Range {
                start: 0.0,
                stop: 0.5,
                step: 0.05,
            })
            .values("grid.sigma")?;
        let r = g.r.clone().unwrap_or(Grid::List(vec![0.5])).values("grid.r")?;
        let r2 = g
            .r2
            .clone()
            .unwrap_or(Grid::List(vec![0.0, 0.5, 1.0, f64::INFINITY]))
            .values("grid.r2")?;
        for (field, v, allow_inf) in [
            ("grid.mu", &mu, false),
            ("grid.gamma", &gamma, false),
            ("grid.sigma", &sigma, false),
            ("grid.r", &r, false),
            ("grid.r2", &r2, true),
        ] {
            if let Some(x) = v.iter().find(|x| !(allow_inf || x.is_finite())) {
                return Err(bad(field, format!("value {x} must be finite")));
            }
        }
        for (field, v) in [("grid.gamma", &gamma), ("grid.sigma", &sigma), ("grid.r", &r), ("grid.r2", &r2)] {
            if let Some(x) = v.iter().find(|x| **x < 0.0) {
                return Err(bad(field, format!("value {x} must be >= 0")));
            }
        }

        let seed = flags.seed.or(file.seed).unwrap_or(0);
        let o = &file.optimizer;
        let defaults = OptimizerSettings::default();
        let optimizer = OptimizerSettings {
            theta_grid: o.theta_grid.unwrap_or(defaults.theta_grid),
            mu2_grid: o.mu2_grid.unwrap_or(defaults.mu2_grid),
            simplex_tol: o.simplex_tol.unwrap_or(defaults.simplex_tol),
            max_evals: o.max_evals.unwrap_or(defaults.max_evals),
            refine_top: o.refine_top.unwrap_or(defaults.refine_top),
            random_restarts: o.random_restarts.unwrap_or(defaults.random_restarts),
            seed,
        };
        for (field, v) in [
            ("optimizer.theta_grid", optimizer.theta_grid),
            ("optimizer.mu2_grid", optimizer.mu2_grid),
            ("optimizer.max_evals", optimizer.max_evals),
        ] {
            if v == 0 {
                return Err(bad(field, "must be positive"));
            }
        }
        if !(optimizer.simplex_tol > 0.0) {
            return Err(bad("optimizer.simplex_tol", "must be positive"));
        }

        let threads = flags.threads.or(file.threads);
        if threads == Some(0) {
            return Err(bad("threads", "must be positive"));
        }
        let out = flags
            .out
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", experiment.name())));

        let w = &file.wigner;
        let wigner = WignerOptions {
            stage: w.stage.unwrap_or_default(),
            theta_y: w.theta_y.unwrap_or(std::f64::consts::FRAC_PI_2),
            phase: w.phase.unwrap_or(0.0),
            generator: w.generator.unwrap_or(0.0),
            mu2: w.mu2,
            n_theta: w.n_theta.unwrap_or(64),
            n_phi: w.n_phi.unwrap_or(128),
        };
        if wigner.n_theta == 0 || wigner.n_phi == 0 {
            return Err(bad("wigner.n_theta", "grid sizes must be positive"));
        }
        if experiment == Experiment::WignerSnapshot && mu.len() != 1 {
            return Err(bad("grid.mu", "a snapshot needs exactly one mu"));
        }

        Ok(Self {
            experiment,
            atoms,
            mu,
            gamma,
            sigma,
            r,
            r2,
            optimizer,
            out,
            emit_svg: flags.svg || file.svg.unwrap_or(false),
            seed,
            threads,
            wigner,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(e: Experiment, text: &str) -> CliResult<SweepConfig> {
        SweepConfig::resolve(e, ConfigFile::parse(text)?, Overrides::default())
    }

    #[test]
    fn defaults() {
        let c = resolve(Experiment::SteeringSweep, "").unwrap();
        assert_eq!(c.atoms, 20);
        assert_eq!(c.mu.len(), 21);
        assert!((c.mu[20] - 1.0).abs() < 1e-12);
        let c = resolve(Experiment::CvNoise, "").unwrap();
        assert_eq!((c.sigma.len(), c.r2.len()), (11, 4));
        assert!(c.r2[3].is_infinite());
    }

    #[test]
    fn sections_and_lists() {
        let c = resolve(
            Experiment::LossSweep,
            "N = 12\nseed = 3\n[grid]\nmu = [0.4]\ngamma = [0.0, 0.2]\n[optimizer]\ntheta_grid = 8\n",
        )
        .unwrap();
        assert_eq!(c.atoms, 12);
        assert_eq!(c.gamma, vec![0.0, 0.2]);
        assert_eq!(c.optimizer.theta_grid, 8);
        assert_eq!(c.optimizer.seed, 3);
    }

    #[test]
    fn flags_win() {
        let file = ConfigFile::parse("seed = 3\nout = \"a.csv\"\nthreads = 2").unwrap();
        let flags = Overrides {
            out: Some("b.csv".into()),
            svg: true,
            threads: Some(5),
            seed: Some(9),
        };
        let c = SweepConfig::resolve(Experiment::SteeringSweep, file, flags).unwrap();
        assert_eq!(c.out, PathBuf::from("b.csv"));
        assert_eq!((c.seed, c.threads, c.emit_svg), (9, Some(5), true));
    }

    fn field_of(r: CliResult<SweepConfig>) -> String {
        match r {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of(resolve(Experiment::SteeringSweep, "N = 41")), "N");
        assert_eq!(field_of(resolve(Experiment::SteeringSweep, "[grid]\nmu = []")), "grid.mu");
        assert_eq!(field_of(resolve(Experiment::LossSweep, "[grid]\ngamma = [-0.1]")), "grid.gamma");
        assert_eq!(
            field_of(resolve(Experiment::SteeringSweep, "[grid]\nmu = { start = 1.0, stop = 0.0, step = 0.1 }")),
            "grid.mu"
        );
        assert_eq!(field_of(resolve(Experiment::SteeringSweep, "experiment = \"cv-noise\"")), "experiment");
        assert_eq!(field_of(resolve(Experiment::SteeringSweep, "[optimizer]\ntheta_grid = 0")), "optimizer.theta_grid");
        assert!(matches!(resolve(Experiment::SteeringSweep, "bogus = 1"), Err(CliError::Parse(_))));
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }
}
