use std::fs;
use std::path::{Path, PathBuf};

use airl_core::airl::{AirlConfig, ScoringPolicy};
use airl_core::analysis::{AnalysisConfig, NmiMode};
use airl_core::env::{AnyEnv, EnvConfig};
use airl_core::rl::{Decoding, ExpertConfig};
use airl_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// The whole pipeline in one TOML document. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory. Relative paths are taken from the config file's
    /// directory. Not part of the config hash.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub env: EnvConfig,
    #[serde(default)]
    pub expert: ExpertConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub trajectories: TrajectoryConfig,
    #[serde(default)]
    pub airl: AirlConfig,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("artifacts")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Episodes for the expert/novice/random mean-return estimates.
    pub episodes: usize,
    /// The expert must beat the random policy by this factor:
    /// `expert − random ≥ (factor − 1)·|random|`.
    pub baseline_factor: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            episodes: 200,
            baseline_factor: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    /// Size of the expert trajectory set `D`.
    pub count: usize,
    pub decoding: Decoding,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            count: 300,
            decoding: Decoding::Greedy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub bins: usize,
    pub nmi_mode: NmiMode,
    /// Policy whose `log π` enters the discriminator when scoring.
    pub scoring: ScoringPolicy,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            bins: 8,
            nmi_mode: NmiMode::Geometric,
            scoring: ScoringPolicy::Novice,
        }
    }
}

impl AnalysisSection {
    pub fn core(&self) -> AnalysisConfig {
        AnalysisConfig {
            bins: self.bins,
            nmi_mode: self.nmi_mode,
        }
    }
}

/// Seed streams for the stages, all derived from the root seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StageSeeds {
    pub expert: u64,
    pub trajectories: u64,
    pub evaluation: u64,
    pub airl: u64,
    pub novice_init: u64,
}

/// A parsed config plus where it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    /// Directory relative paths in the config are resolved against.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config = parse(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.config.seed = s;
        }
        if let Some(o) = out {
            // Command-line paths are relative to the working directory.
            self.config.out = if o.is_relative() {
                std::env::current_dir().map(|d| d.join(&o)).unwrap_or(o)
            } else {
                o
            };
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.out)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    }

    /// Environment config with file paths resolved.
    pub fn env_config(&self) -> EnvConfig {
        let mut env = self.config.env.clone();
        if let EnvConfig::Tokens(t) = &mut env {
            if let Some(p) = &t.vocab_path {
                t.vocab_path = Some(self.resolve(p));
            }
        }
        env
    }

    pub fn build_env(&self) -> Result<AnyEnv, CliError> {
        self.env_config()
            .build()
            .map_err(|e| CliError::Config(format!("env: {e}")))
    }

    /// Checks everything that can be checked without training.
    pub fn validate(&self) -> Result<AnyEnv, CliError> {
        let c = &self.config;
        let env = self.build_env()?;
        let field = |name: &str, e: airl_core::Error| CliError::Config(format!("{name}: {e}"));
        c.expert.optimizer.build().map_err(|e| field("expert.optimizer", e))?;
        c.airl.disc_optimizer.build().map_err(|e| field("airl.disc_optimizer", e))?;
        c.airl.novice_optimizer.build().map_err(|e| field("airl.novice_optimizer", e))?;
        if let Some(g) = c.airl.gamma {
            if g != c.env.gamma() {
                return Err(CliError::Config(format!(
                    "airl.gamma: {g} differs from env.gamma {}",
                    c.env.gamma()
                )));
            }
        }
        let positive = [
            ("expert.episodes_per_iteration", c.expert.episodes_per_iteration),
            ("trajectories.count", c.trajectories.count),
            ("evaluation.episodes", c.evaluation.episodes),
            ("airl.novice_episodes", c.airl.novice_episodes),
            ("airl.disc_batch", c.airl.disc_batch),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CliError::Config(format!("{name}: must be positive")));
            }
        }
        if c.expert.hidden.iter().chain(&c.airl.g_hidden).chain(&c.airl.h_hidden).any(|&w| w == 0) {
            return Err(CliError::Config("hidden layer widths must be positive".into()));
        }
        if !(c.expert.temperature > 0.0 && c.expert.temperature.is_finite()) {
            return Err(CliError::Config("expert.temperature: must be positive".into()));
        }
        if c.analysis.bins < 2 {
            return Err(CliError::Config("analysis.bins: need at least 2".into()));
        }
        if !(c.evaluation.baseline_factor >= 1.0) {
            return Err(CliError::Config("evaluation.baseline_factor: must be at least 1".into()));
        }
        Ok(env)
    }

    pub fn seeds(&self) -> StageSeeds {
        let s = self.config.seed;
        StageSeeds {
            expert: derive_seed(s, 1, 0),
            trajectories: derive_seed(s, 2, 0),
            evaluation: derive_seed(s, 3, 0),
            airl: derive_seed(s, 4, 0),
            novice_init: derive_seed(s, 5, 0),
        }
    }

    pub fn hashes(&self) -> ConfigHashes {
        ConfigHashes::of(&self.config)
    }
}

pub fn parse(text: &str) -> Result<PipelineConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

/// SHA-256 hashes of canonical JSON renderings of the config. Each stage's
/// hash covers the sections it depends on, so changing analysis settings
/// does not invalidate trained models.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigHashes {
    pub config: String,
    pub train_expert: String,
    pub train_airl: String,
    pub analyze: String,
}

impl ConfigHashes {
    pub fn of(c: &PipelineConfig) -> Self {
        let expert = sha(&serde_json::json!({
            "seed": c.seed,
            "env": c.env,
            "expert": c.expert,
            "evaluation": c.evaluation,
            "trajectories": c.trajectories,
        }));
        let airl = sha(&serde_json::json!({ "upstream": expert, "airl": c.airl }));
        let analyze = sha(&serde_json::json!({ "upstream": airl, "analysis": c.analysis }));
        let mut full = serde_json::to_value(c).expect("config serializes");
        if let Some(m) = full.as_object_mut() {
            m.remove("out");
        }
        ConfigHashes {
            config: sha(&full),
            train_expert: expert,
            train_airl: airl,
            analyze,
        }
    }
}

fn sha(v: &serde_json::Value) -> String {
    // serde_json maps are ordered by key, so this rendering is canonical.
    format!("{:x}", Sha256::digest(v.to_string().as_bytes()))
}
