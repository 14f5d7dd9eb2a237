use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use airl_core::airl::{
    fresh_novice, score_trajectories, train_airl, Discriminator, DiscriminatorCheckpoint, NoviceSource,
    ScoringPolicy,
};
use airl_core::analysis::Analysis;
use airl_core::env::{AnyEnv, EnvConfig, Environment, Vocabulary};
use airl_core::numkit::{load_json, save_json};
use airl_core::rl::{
    collect_trajectories, evaluate, read_trajectories, train_expert, write_trajectories, Decoding, Policy,
    PolicyCheckpoint, Trajectory,
};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigHashes, LoadedConfig, StageSeeds};
use crate::error::{CliError, Result};
use crate::manifest::{save_timing, short, DirLock, Manifest, Stage};

/// Mean returns recorded after expert training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertEval {
    pub config_hash: String,
    pub episodes: usize,
    pub decoding: Decoding,
    pub expert_mean_return: f64,
    pub random_mean_return: f64,
    /// Gridworld only: best achievable mean return over the start cells.
    pub optimal_mean_return: Option<f64>,
    pub baseline_factor: f64,
    pub passed: bool,
}

/// Mean returns recorded after AIRL training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirlEval {
    pub config_hash: String,
    pub episodes: usize,
    pub decoding: Decoding,
    pub novice_mean_return: f64,
    pub expert_mean_return: f64,
    pub random_mean_return: f64,
    pub final_disc_loss: Option<f64>,
    pub final_disc_accuracy: Option<f64>,
}

pub struct Pipeline {
    cfg: LoadedConfig,
    env: AnyEnv,
    out: PathBuf,
    hashes: ConfigHashes,
    seeds: StageSeeds,
    force: bool,
    quiet: bool,
}

impl Pipeline {
    /// Validates the config; nothing is written.
    pub fn new(cfg: LoadedConfig, force: bool) -> Result<Self> {
        let env = cfg.validate()?;
        Ok(Pipeline {
            out: cfg.out_dir(),
            hashes: cfg.hashes(),
            seeds: cfg.seeds(),
            env,
            cfg,
            force,
            quiet: false,
        })
    }

    pub fn quiet(mut self, quiet: bool) -> Self {
        self.quiet = quiet;
        self
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn hashes(&self) -> &ConfigHashes {
        &self.hashes
    }

    pub fn stage_hash(&self, stage: Stage) -> &str {
        match stage {
            Stage::TrainExpert => &self.hashes.train_expert,
            Stage::TrainAirl => &self.hashes.train_airl,
            Stage::Analyze => &self.hashes.analyze,
        }
    }

    fn log(&self, stage: Stage, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", stage.name(), msg.as_ref());
        }
    }

    /// Human-readable description of what `run` would do.
    pub fn plan(&self, stages: &[Stage], skip_fresh: bool) -> Result<String> {
        let manifest = if self.out.join(crate::manifest::MANIFEST_FILE).exists() {
            Manifest::load_or_default(&self.out)?
        } else {
            Manifest::default()
        };
        let mut s = String::new();
        let _ = writeln!(s, "config hash: {}", self.hashes.config);
        let _ = writeln!(s, "seed: {}", self.cfg.config.seed);
        let _ = writeln!(s, "output directory: {}", self.out.display());
        for (i, &stage) in stages.iter().enumerate() {
            let hash = self.stage_hash(stage);
            let fresh = manifest.stale_reason(stage, hash, &self.out).is_none();
            let action = if skip_fresh && fresh { "up to date, skip" } else { "run" };
            let _ = writeln!(s, "{}. {} [{}] stage hash {}", i + 1, stage.name(), action, short(hash));
            if let Some(p) = stage.predecessor().filter(|p| !stages.contains(p)) {
                let _ = match manifest.stale_reason(p, self.stage_hash(p), &self.out) {
                    None => writeln!(s, "   needs {}: ready", p.name()),
                    Some(why) => writeln!(s, "   needs {}: {why}", p.name()),
                };
            }
            let _ = writeln!(s, "   writes: {}", stage.artifacts().join(", "));
        }
        Ok(s)
    }

    /// Runs `stages` in order under the directory lock. With `skip_fresh`,
    /// stages whose recorded outputs match the current config are skipped.
    pub fn run(&self, stages: &[Stage], skip_fresh: bool) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| io(&self.out, e))?;
        let _lock = DirLock::acquire(&self.out)?;
        let mut manifest = Manifest::load_or_default(&self.out)?;
        manifest.config_hash = self.hashes.config.clone();
        for &stage in stages {
            let hash = self.stage_hash(stage).to_string();
            if skip_fresh && manifest.stale_reason(stage, &hash, &self.out).is_none() {
                self.log(stage, "up to date, skipping");
                continue;
            }
            if let Some(p) = stage.predecessor() {
                if let Some(why) = manifest.stale_reason(p, self.stage_hash(p), &self.out) {
                    if !self.force {
                        return Err(CliError::Pipeline(format!(
                            "cannot run {}: {why}; run {} first or pass --force",
                            stage.name(),
                            p.name()
                        )));
                    }
                    self.log(stage, format!("--force: ignoring ({why})"));
                }
            }
            manifest.begin(stage);
            manifest.save(&self.out)?;
            self.log(stage, "starting");
            let t0 = Instant::now();
            match stage {
                Stage::TrainExpert => self.train_expert()?,
                Stage::TrainAirl => self.train_airl()?,
                Stage::Analyze => self.analyze()?,
            }
            manifest.finish(stage, &hash, &self.out)?;
            manifest.save(&self.out)?;
            let secs = t0.elapsed().as_secs_f64();
            save_timing(&self.out, stage, secs)?;
            self.log(stage, format!("done in {secs:.1}s"));
        }
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn decoding(&self) -> Decoding {
        self.cfg.config.trajectories.decoding
    }

    fn random_return(&self) -> Result<f64> {
        let c = &self.cfg.config;
        let random = Policy::uniform(self.env.spec())?;
        Ok(evaluate(&random, &self.env, c.evaluation.episodes, self.seeds.evaluation, Decoding::Sample)?)
    }

    fn train_expert(&self) -> Result<()> {
        let c = &self.cfg.config;
        let hash = &self.hashes.train_expert;
        let mut ecfg = c.expert.clone();
        ecfg.seed = self.seeds.expert;
        let mut curve = Vec::new();
        let trained = train_expert(&self.env, &ecfg, &mut curve);
        write_csv(&self.path("expert_curve.csv"), hash, &curve)?;
        let expert = trained?;
        save_json(&self.path("expert.ckpt.json"), &PolicyCheckpoint::new(&expert, self.seeds.expert, hash))?;

        let episodes = c.evaluation.episodes;
        let expert_ret = evaluate(&expert, &self.env, episodes, self.seeds.evaluation, self.decoding())?;
        let random_ret = self.random_return()?;
        let factor = c.evaluation.baseline_factor;
        let passed = expert_ret - random_ret >= (factor - 1.0) * random_ret.abs();
        let optimal = match &self.env {
            AnyEnv::Grid(g) => Some(g.optimal_mean_return()),
            AnyEnv::Tokens(_) => None,
        };
        self.log(
            Stage::TrainExpert,
            format!("expert mean return {expert_ret:.4}, random {random_ret:.4}"),
        );

        let mut trajectories = collect_trajectories(
            &expert,
            &self.env,
            c.trajectories.count,
            self.seeds.trajectories,
            self.decoding(),
        )?;
        for t in &mut trajectories {
            t.config_hash = Some(hash.clone());
        }
        write_trajectories(&self.path("expert_trajectories.jsonl"), &trajectories)?;
        write_stamped(&self.path("vocab.tsv"), hash, &self.env.vocabulary()?.to_tsv())?;
        save_json(
            &self.path("expert_eval.json"),
            &ExpertEval {
                config_hash: hash.clone(),
                episodes,
                decoding: self.decoding(),
                expert_mean_return: expert_ret,
                random_mean_return: random_ret,
                optimal_mean_return: optimal,
                baseline_factor: factor,
                passed,
            },
        )?;
        if !passed {
            return Err(CliError::Gate(format!(
                "expert mean return {expert_ret:.4} does not beat the random policy ({random_ret:.4}) \
                 by the configured factor {factor}"
            )));
        }
        Ok(())
    }

    fn train_airl(&self) -> Result<()> {
        let c = &self.cfg.config;
        let hash = &self.hashes.train_airl;
        let expert = self.load_policy("expert.ckpt.json", &self.hashes.train_expert)?;
        let demos = self.load_trajectories("expert_trajectories.jsonl", &self.hashes.train_expert)?;
        let mut acfg = c.airl.clone();
        acfg.seed = self.seeds.airl;
        let novice = fresh_novice(&expert, self.seeds.novice_init)?;
        let mut curve = Vec::new();
        let trained = train_airl(&demos, &self.env, &acfg, NoviceSource::Learn(novice), &mut curve);
        write_csv(&self.path("airl_curve.csv"), hash, &curve)?;
        let outcome = trained?;
        save_json(
            &self.path("discriminator.ckpt.json"),
            &DiscriminatorCheckpoint::new(&outcome.discriminator, self.seeds.airl, hash),
        )?;
        save_json(
            &self.path("novice.ckpt.json"),
            &PolicyCheckpoint::new(&outcome.novice, self.seeds.novice_init, hash),
        )?;
        let episodes = c.evaluation.episodes;
        let novice_ret = evaluate(&outcome.novice, &self.env, episodes, self.seeds.evaluation, self.decoding())?;
        let expert_ret = evaluate(&expert, &self.env, episodes, self.seeds.evaluation, self.decoding())?;
        self.log(
            Stage::TrainAirl,
            format!("novice mean return {novice_ret:.4}, expert {expert_ret:.4}"),
        );
        save_json(
            &self.path("airl_eval.json"),
            &AirlEval {
                config_hash: hash.clone(),
                episodes,
                decoding: self.decoding(),
                novice_mean_return: novice_ret,
                expert_mean_return: expert_ret,
                random_mean_return: self.random_return()?,
                final_disc_loss: curve.last().map(|r| r.disc_loss),
                final_disc_accuracy: curve.last().map(|r| r.disc_accuracy),
            },
        )?;
        Ok(())
    }

    fn analyze(&self) -> Result<()> {
        let c = &self.cfg.config;
        let hash = &self.hashes.analyze;
        let expert = self.load_policy("expert.ckpt.json", &self.hashes.train_expert)?;
        let novice = self.load_policy("novice.ckpt.json", &self.hashes.train_airl)?;
        let disc = self.load_discriminator()?;
        let demos = self.load_trajectories("expert_trajectories.jsonl", &self.hashes.train_expert)?;
        let vocab = self.load_vocabulary()?;

        let scoring = c.analysis.scoring;
        let mut scored = score_trajectories(&disc, &demos, &novice, &expert, scoring)?;
        for t in &mut scored {
            t.config_hash = Some(hash.clone());
        }
        write_trajectories(&self.path("scored_trajectories.jsonl"), &scored)?;

        let env_kind = match &c.env {
            EnvConfig::Gridworld(_) => "gridworld",
            EnvConfig::Tokens(_) => "tokens",
        };
        let provenance = vec![
            ("config hash".to_string(), self.hashes.config.clone()),
            ("analysis stage hash".to_string(), hash.clone()),
            ("seed".to_string(), c.seed.to_string()),
            ("expert seed".to_string(), self.seeds.expert.to_string()),
            ("trajectory seed".to_string(), self.seeds.trajectories.to_string()),
            ("airl seed".to_string(), self.seeds.airl.to_string()),
            ("novice init seed".to_string(), self.seeds.novice_init.to_string()),
            ("environment".to_string(), env_kind.to_string()),
            ("scoring policy".to_string(), scoring_name(scoring).to_string()),
            ("alternate scoring policy".to_string(), scoring_name(scoring.other()).to_string()),
        ];
        let analysis = Analysis::run(&scored, &vocab, &c.analysis.core(), provenance)?;
        analysis.write(&self.out)?;
        for name in ["reward_table.csv", "feature_table.csv", "pos_summary.csv", "mi_scores.csv"] {
            stamp_existing(&self.path(name), hash, "# ", "")?;
        }
        for name in ["report.md", "fig_method1.svg", "fig_method2.svg"] {
            stamp_existing(&self.path(name), hash, "<!-- ", " -->")?;
        }
        let s = &analysis.summary;
        self.log(
            Stage::Analyze,
            format!(
                "method 1: {}; method 2: {}; spearman {:.3}",
                s.order_m1.join(" > "),
                s.order_m2.join(" > "),
                s.spearman
            ),
        );
        Ok(())
    }

    fn check_hash(&self, path: &Path, found: Option<&str>, want: &str) -> Result<()> {
        if found == Some(want) {
            return Ok(());
        }
        let found = found.map_or("none".to_string(), |h| short(h).to_string());
        if self.force {
            self.log_any(format!(
                "--force: {} has config hash {found}, expected {}",
                path.display(),
                short(want)
            ));
            return Ok(());
        }
        Err(CliError::Pipeline(format!(
            "{} was produced under config hash {found} but the current config expects {}; \
             rerun the earlier stage or pass --force",
            path.display(),
            short(want)
        )))
    }

    fn log_any(&self, msg: String) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn load_policy(&self, name: &str, want: &str) -> Result<Policy> {
        let path = self.path(name);
        let ck: PolicyCheckpoint = load_json(&path)?;
        self.check_hash(&path, Some(&ck.config_hash), want)?;
        Ok(ck.to_policy()?)
    }

    fn load_discriminator(&self) -> Result<Discriminator> {
        let path = self.path("discriminator.ckpt.json");
        let ck: DiscriminatorCheckpoint = load_json(&path)?;
        self.check_hash(&path, Some(&ck.config_hash), &self.hashes.train_airl)?;
        Ok(ck.to_discriminator()?)
    }

    fn load_trajectories(&self, name: &str, want: &str) -> Result<Vec<Trajectory>> {
        let path = self.path(name);
        let trajectories = read_trajectories(&path)?;
        if let Some(bad) = trajectories.iter().find(|t| t.config_hash.as_deref() != Some(want)) {
            self.check_hash(&path, bad.config_hash.as_deref(), want)?;
        }
        Ok(trajectories)
    }

    fn load_vocabulary(&self) -> Result<Vocabulary> {
        let path = self.path("vocab.tsv");
        let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        self.check_hash(&path, read_stamp(&text, "# ", ""), &self.hashes.train_expert)?;
        Ok(Vocabulary::parse_tsv(&text).map_err(|e| airl_core::Error::Data(format!("{}: {e}", path.display())))?)
    }
}

fn scoring_name(p: ScoringPolicy) -> &'static str {
    match p {
        ScoringPolicy::Novice => "novice",
        ScoringPolicy::Expert => "expert",
    }
}

const STAMP_KEY: &str = "config_hash: ";

fn stamp_line(hash: &str, open: &str, close: &str) -> String {
    format!("{open}{STAMP_KEY}{hash}{close}\n")
}

/// The hash from a first line written by [`stamp_line`].
pub fn read_stamp<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    text.lines()
        .next()?
        .strip_prefix(open)?
        .strip_suffix(close)?
        .strip_prefix(STAMP_KEY)
}

fn write_stamped(path: &Path, hash: &str, body: &str) -> Result<()> {
    let text = stamp_line(hash, "# ", "") + body;
    fs::write(path, text).map_err(|e| io(path, e))
}

fn stamp_existing(path: &Path, hash: &str, open: &str, close: &str) -> Result<()> {
    let body = fs::read_to_string(path).map_err(|e| io(path, e))?;
    fs::write(path, stamp_line(hash, open, close) + &body).map_err(|e| io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, hash: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| airl_core::Error::Data(format!("{}: {e}", path.display())))?;
    }
    let bytes = w.into_inner().map_err(|e| io(path, e.into_error()))?;
    write_stamped(path, hash, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(airl_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
