//! Scenario configuration: TOML file, flag overrides, validation and the
//! fully resolved record echoed next to every run's outputs.

use std::path::{Path, PathBuf};

use mmaf_core::conditioning::Sampler;
use mmaf_core::ensemble::Scenario;
use mmaf_core::{GridSpec, MassPartition, StepVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub name: Option<String>,
    pub masses: Option<Vec<f64>>,
    pub g: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub probe_times: Option<Vec<f64>>,
    #[serde(default)]
    pub condition: ConditionFile,
    #[serde(default)]
    pub directions: DirectionsFile,
    #[serde(default)]
    pub bridge: BridgeFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionFile {
    pub eps: Option<f64>,
    pub coal_deadline: Option<f64>,
    pub window: Option<f64>,
    pub max_draws: Option<usize>,
    pub sampler: Option<Sampler>,
    pub tube_nodes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionsFile {
    pub ladder: Option<Vec<usize>>,
    pub r_probes: Option<Vec<(usize, f64)>>,
    pub zero_rates: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeFile {
    pub z0: Option<f64>,
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub masses: Vec<f64>,
    pub g: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub probe_times: Vec<f64>,
    pub condition: ConditionConfig,
    pub directions: DirectionsConfig,
    pub bridge: BridgeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    pub eps: f64,
    pub coal_deadline: f64,
    pub window: f64,
    pub max_draws: usize,
    pub sampler: Sampler,
    pub tube_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionsConfig {
    pub ladder: Vec<usize>,
    pub r_probes: Vec<(usize, f64)>,
    pub zero_rates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub z0: f64,
}

pub fn load_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    toml::from_str(&text).map_err(|e| CliError::ConfigFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl ScenarioConfig {
    /// Fill defaults, apply overrides and validate.
    pub fn resolve(file: FileConfig, over: &Overrides) -> CliResult<Self> {
        let masses = file.masses.unwrap_or_else(|| vec![0.1, 0.2, 0.3, 0.4]);
        let n = masses.len();
        let g = file.g.unwrap_or_else(|| {
            if n == 4 {
                vec![-0.3, -0.1, 0.1, 0.3]
            } else {
                (0..n).map(|k| k as f64 / n as f64).collect()
            }
        });
        let horizon = file.horizon.unwrap_or(1.0);
        let cfg = Self {
            name: file.name.unwrap_or_else(|| "default".into()),
            masses,
            g,
            dt: file.dt.unwrap_or(1e-3),
            horizon,
            samples: over.samples.or(file.samples).unwrap_or(2000),
            seed: over.seed.or(file.seed).unwrap_or(1),
            out: over.out.clone().or(file.out).unwrap_or_else(|| "mmaf-out".into()),
            probe_times: file
                .probe_times
                .unwrap_or_else(|| vec![0.25 * horizon, 0.5 * horizon, 0.9 * horizon]),
            condition: ConditionConfig {
                eps: file.condition.eps.unwrap_or(0.05),
                coal_deadline: file.condition.coal_deadline.unwrap_or(0.8 * horizon),
                window: file.condition.window.unwrap_or(horizon),
                max_draws: file.condition.max_draws.unwrap_or(1_000_000),
                sampler: file.condition.sampler.unwrap_or(Sampler::TubeConditioned),
                tube_nodes: file.condition.tube_nodes.unwrap_or(512),
            },
            directions: DirectionsConfig {
                ladder: file.directions.ladder.unwrap_or_else(|| vec![1, 2, 4, 8, 16]),
                r_probes: file
                    .directions
                    .r_probes
                    .unwrap_or_else(|| {
                        (1..n.min(3)).flat_map(|j| [(j, 0.5 * horizon), (j, horizon)]).collect()
                    }),
                zero_rates: file.directions.zero_rates.unwrap_or(false),
            },
            bridge: BridgeConfig {
                z0: file.bridge.z0.unwrap_or(0.0),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let partition = MassPartition::new(self.masses.clone()).map_err(|e| CliError::config("masses", e))?;
        let g = StepVector(self.g.clone());
        g.conforms(&partition).map_err(|e| CliError::config("g", e))?;
        if !g.is_non_decreasing() {
            return Err(CliError::config("g", "initial values must be non-decreasing"));
        }
        if !(self.dt > 0.0) {
            return Err(CliError::config("dt", "must be positive"));
        }
        GridSpec::new(self.dt, self.horizon).map_err(|e| CliError::config("horizon", e))?;
        if self.samples < 2 {
            return Err(CliError::config("samples", "need at least 2 samples"));
        }
        let in_range = |t: f64| (0.0..=self.horizon + 1e-12).contains(&t);
        if let Some(t) = self.probe_times.iter().find(|t| !in_range(**t)) {
            return Err(CliError::config("probe_times", format!("{t} outside [0, {}]", self.horizon)));
        }
        let c = &self.condition;
        if !(c.eps > 0.0) {
            return Err(CliError::config("condition.eps", "must be positive"));
        }
        if !(c.coal_deadline > 0.0 && c.coal_deadline <= self.horizon + 1e-12) {
            return Err(CliError::config("condition.coal_deadline", "must lie in (0, horizon]"));
        }
        if !(c.window > 0.0) {
            return Err(CliError::config("condition.window", "must be positive"));
        }
        if c.tube_nodes < 2 {
            return Err(CliError::config("condition.tube_nodes", "need at least 2 nodes"));
        }
        let d = &self.directions;
        if d.ladder.is_empty() || d.ladder[0] == 0 || d.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("directions.ladder", "must be a non-empty strictly increasing list of positive integers"));
        }
        for &(j, t) in &d.r_probes {
            if j == 0 || j >= self.masses.len() {
                return Err(CliError::config("directions.r_probes", format!("component {j} outside 1..={}", self.masses.len() - 1)));
            }
            if !in_range(t) {
                return Err(CliError::config("directions.r_probes", format!("time {t} outside [0, {}]", self.horizon)));
            }
        }
        if !self.bridge.z0.is_finite() {
            return Err(CliError::config("bridge.z0", "must be finite"));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario::new(
            MassPartition::new(self.masses.clone()).expect("validated"),
            StepVector(self.g.clone()),
            GridSpec::new(self.dt, self.horizon).expect("validated"),
        )
        .expect("validated")
    }

    /// SHA-256 of the resolved config, minus the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<ScenarioConfig> {
        let file: FileConfig = toml::from_str(text).map_err(|e| CliError::config("file", e))?;
        ScenarioConfig::resolve(file, &Overrides::default())
    }

    #[test]
    fn defaults_resolve() {
        let c = parse("").unwrap();
        assert_eq!(c.masses, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(c.condition.coal_deadline, 0.8);
        assert_eq!(c.directions.ladder, vec![1, 2, 4, 8, 16]);
    }

    #[test]
    fn flags_win_over_file() {
        let file: FileConfig = toml::from_str("seed = 5\nsamples = 10").unwrap();
        let c = ScenarioConfig::resolve(file, &Overrides { seed: Some(9), ..Default::default() }).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.samples, 10);
    }

    #[test]
    fn errors_name_the_field() {
        let err = |t: &str| match parse(t) {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(err("masses = [0.5, 0.6]"), "masses");
        assert_eq!(err("masses = [0.5, 0.5]\ng = [1.0, 0.0]"), "g");
        assert_eq!(err("[condition]\neps = -1.0"), "condition.eps");
        assert_eq!(err("[directions]\nladder = [2, 1]"), "directions.ladder");
        assert_eq!(err("dt = 0.3"), "horizon");
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = parse("").unwrap();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
