use std::path::{Path, PathBuf};

use serde::Deserialize;

use hzrl_core::collector::Budget;
use hzrl_core::format::load_mdp;
use hzrl_core::generators::NamedMdp;
use hzrl_core::FiniteMdp;

use crate::HarnessError;

/// Which learner a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Pessimistic,
    Generative,
    OracleOnly,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Pessimistic => "pessimistic",
            Algo::Generative => "generative",
            Algo::OracleOnly => "oracle-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "pessimistic" => Ok(Algo::Pessimistic),
            "generative" => Ok(Algo::Generative),
            "oracle-only" => Ok(Algo::OracleOnly),
            other => Err(HarnessError::Config(format!(
                "unknown algorithm `{other}` (expected pessimistic, generative or oracle-only)"
            ))),
        }
    }
}

/// Where the MDP comes from. File models are re-horizoned per run.
#[derive(Debug, Clone, PartialEq)]
pub enum MdpSource {
    File(PathBuf),
    Named(NamedMdp),
}

impl MdpSource {
    /// A path if it names an existing file or ends in `.mdp`, else a generator.
    pub fn parse(spec: &str) -> Result<Self, HarnessError> {
        let path = Path::new(spec);
        if path.is_file() || spec.ends_with(".mdp") {
            return Ok(MdpSource::File(path.to_path_buf()));
        }
        NamedMdp::parse(spec).map(MdpSource::Named).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn build(&self, horizon: usize) -> Result<FiniteMdp, HarnessError> {
        let built = match self {
            MdpSource::File(p) => load_mdp(p).and_then(|m| m.with_horizon(horizon)),
            MdpSource::Named(n) => n.build(horizon),
        };
        built.map_err(|e| HarnessError::Config(format!("{}: {e}", self.label())))
    }

    pub fn label(&self) -> String {
        match self {
            MdpSource::File(p) => p.display().to_string(),
            MdpSource::Named(n) => n.to_string(),
        }
    }
}

/// Everything a `run` needs. Loaded from TOML and overridden by flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub algo: Algo,
    pub epsilon: f64,
    pub delta: f64,
    pub scale: f64,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub budget: Budget,
    pub reuse_phase_samples: bool,
    /// Percentile override for quantile estimation.
    pub eps_est: Option<f64>,
    /// Fixed generative sample count per pair; otherwise scaled theory.
    pub samples_per_pair: Option<u64>,
    pub timing: bool,
    /// Directory for per-run collected datasets.
    pub dump_dataset: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mdp: MdpSource::Named(NamedMdp::TwoStateExit),
            algo: Algo::Pessimistic,
            epsilon: 0.5,
            delta: 0.1,
            scale: 1.0,
            horizons: vec![16],
            seeds: vec![0],
            out: None,
            budget: Budget::default(),
            reuse_phase_samples: false,
            eps_est: None,
            samples_per_pair: None,
            timing: false,
            dump_dataset: None,
        }
    }
}

/// On-disk form; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mdp: Option<String>,
    pub algo: Option<Algo>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub scale: Option<f64>,
    pub horizons: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub budget_episodes: Option<u64>,
    pub budget_queries: Option<u64>,
    pub reuse_phase_samples: Option<bool>,
    pub eps_est: Option<f64>,
    pub samples_per_pair: Option<u64>,
    pub timing: Option<bool>,
    pub dump_dataset: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies the keys present in `self` on top of `cfg`. A relative MDP
    /// path resolves against `base`.
    pub fn apply(self, cfg: &mut ExperimentConfig, base: Option<&Path>) -> Result<(), HarnessError> {
        if let Some(m) = self.mdp {
            let resolved = match base {
                Some(dir) if !Path::new(&m).is_absolute() && dir.join(&m).is_file() => dir.join(&m).display().to_string(),
                _ => m,
            };
            cfg.mdp = MdpSource::parse(&resolved)?;
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { cfg.$field = v; })* };
        }
        set!(algo, epsilon, delta, scale, horizons, seeds, reuse_phase_samples, timing);
        if let Some(v) = self.out {
            cfg.out = Some(v);
        }
        if let Some(v) = self.eps_est {
            cfg.eps_est = Some(v);
        }
        if let Some(v) = self.samples_per_pair {
            cfg.samples_per_pair = Some(v);
        }
        if let Some(v) = self.dump_dataset {
            cfg.dump_dataset = Some(v);
        }
        if let Some(v) = self.budget_episodes {
            cfg.budget.max_episodes = v;
        }
        if let Some(v) = self.budget_queries {
            cfg.budget.max_queries = v;
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        for (name, x) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(x > 0.0 && x <= 1.0) {
                return bad(format!("{name} = {x} must lie in (0, 1]"));
            }
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale = {} must be positive", self.scale));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("horizons must be a nonempty list of positive integers".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if let Some(e) = self.eps_est {
            if !(e > 0.0 && e <= 1.0) {
                return bad(format!("eps_est = {e} must lie in (0, 1]"));
            }
        }
        if self.samples_per_pair == Some(0) {
            return bad("samples_per_pair must be positive".into());
        }
        Ok(())
    }
}

/// Parses `1,2,5` or a half-open range `0..100`.
pub fn parse_u64_list(s: &str) -> Result<Vec<u64>, HarnessError> {
    let bad = || HarnessError::Config(format!("cannot parse list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}
