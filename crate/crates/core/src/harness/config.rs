//! Run configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acq_ci::CiParams;
use crate::baselines::CboParams;
use crate::error::{Error, Result};
use crate::inner_opt::OptBudget;
use crate::suspension::ReuseMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ei,
    Ci,
    Cucb,
    Random,
    FbEi,
    FbUcb,
    Cbo,
    EiSus,
    EiSusR,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Ei,
        Method::Ci,
        Method::Cucb,
        Method::Random,
        Method::FbEi,
        Method::FbUcb,
        Method::Cbo,
        Method::EiSus,
        Method::EiSusR,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ei => "ei",
            Method::Ci => "ci",
            Method::Cucb => "cucb",
            Method::Random => "random",
            Method::FbEi => "fb-ei",
            Method::FbUcb => "fb-ucb",
            Method::Cbo => "cbo",
            Method::EiSus => "ei-sus",
            Method::EiSusR => "ei-sus-r",
        }
    }

    pub fn is_suspension(self) -> bool {
        matches!(self, Method::EiSus | Method::EiSusR)
    }

    /// Methods that maintain credible-interval bounds and can report a gap.
    pub fn has_ci(self) -> bool {
        matches!(self, Method::Ci | Method::Cucb)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuspensionConfig {
    /// Per-stage costs; all 1 when absent. Also used for the cost column of sequential runs.
    pub costs: Option<Vec<f64>>,
    /// Total cost budget; `iterations × Σ costs` when absent.
    pub budget: Option<f64>,
    pub reuse: ReuseMode,
}

impl Default for SuspensionConfig {
    fn default() -> Self {
        Self {
            costs: None,
            budget: None,
            reuse: ReuseMode::Once,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_iterations() -> usize {
    20
}

fn default_mc_samples() -> usize {
    1000
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_nested() -> OptBudget {
    OptBudget::nested(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: String,
    pub method: Method,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Fixes the benchmark instance across run seeds; the run seed is used otherwise.
    #[serde(default)]
    pub benchmark_seed: Option<u64>,
    /// Sweeps in the sequential setting.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Random complete cascades before optimization; the benchmark default when absent.
    #[serde(default)]
    pub initial_points: Option<usize>,
    /// Monte-Carlo sample count of the EI utility.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Stop once the credible-interval gap drops below this threshold.
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub ci: CiParams,
    #[serde(default)]
    pub optimizer: OptBudget,
    #[serde(default = "default_nested")]
    pub nested_optimizer: OptBudget,
    #[serde(default)]
    pub suspension: SuspensionConfig,
    #[serde(default)]
    pub cbo: CboParams,
}

impl RunConfig {
    pub fn new(benchmark: &str, method: Method) -> Self {
        Self {
            benchmark: benchmark.to_string(),
            method,
            seeds: default_seeds(),
            benchmark_seed: None,
            iterations: default_iterations(),
            initial_points: None,
            mc_samples: default_mc_samples(),
            xi: None,
            output: default_output(),
            ci: CiParams::default(),
            optimizer: OptBudget::default(),
            nested_optimizer: default_nested(),
            suspension: SuspensionConfig::default(),
            cbo: CboParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be at least 1".into());
        }
        if self.initial_points == Some(0) {
            return bad("initial_points must be at least 1".into());
        }
        if let Some(xi) = self.xi {
            if !(xi.is_finite() && xi > 0.0) {
                return bad(format!("xi must be positive, got {xi}"));
            }
        }
        if let Some(b) = self.suspension.budget {
            if !(b.is_finite() && b > 0.0) {
                return bad(format!("suspension budget must be positive, got {b}"));
            }
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.ci.validate().map_err(wrap)?;
        self.optimizer.validate().map_err(wrap)?;
        self.nested_optimizer.validate().map_err(wrap)?;
        self.cbo.validate().map_err(wrap)?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml("benchmark = \"matyas-3\"\nmethod = \"ei\"\n").unwrap();
        assert_eq!(c.method, Method::Ei);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.ci, CiParams::default());
        assert_eq!(c.nested_optimizer.n_space_filling, 200);
    }

    #[test]
    fn sections_parse() {
        let text = r#"
benchmark = "samplepath-3"
method = "ei-sus-r"
seeds = [1, 2]
iterations = 5
mc_samples = 64

[ci]
beta_sqrt = 3.0

[optimizer]
n_space_filling = 128
n_top = 2

[suspension]
costs = [1.0, 1.0, 10.0]
budget = 60.0
reuse = "unlimited"
"#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.ci.beta_sqrt, 3.0);
        assert_eq!(c.ci.lf, 1.0);
        assert_eq!(c.optimizer.n_top, 2);
        assert_eq!(c.suspension.reuse, ReuseMode::Unlimited);
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml("benchmark = \"a\"\nmethod = \"ei\"\nbogus_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = RunConfig::from_toml("benchmark = \"a\"\nmethod = \"ei\"\n[ci]\nbeta = 1\n").unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("benchmark = \"a\"\nmethod = \"ei\"\niterations = 0\n").is_err());
        assert!(RunConfig::from_toml("benchmark = \"a\"\nmethod = \"nope\"\n").is_err());
        assert!("fb-ucb".parse::<Method>().is_ok());
    }
}
