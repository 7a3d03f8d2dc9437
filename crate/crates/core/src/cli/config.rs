//! Experiment configuration.
//!
//! A config file is TOML restricted to flat `key = value` lines under one
//! `[section]` per subcommand:
//!
//! ```text
//! [common]
//! workers = 2
//!
//! [train]
//! variants = ["mrn", "monolithic"]
//! seeds = [100, 200, 300, 400, 500]
//! epochs = 50
//! ```
//!
//! Every key is optional. Unknown keys are rejected. Command-line overrides
//! use `section.key=value`, where `value` is read as a TOML value and falls
//! back to a bare string.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::CorpusParams;
use crate::gcrl::{AgentConfig, Exploration, PointMassEnv, TrainConfig};
use crate::nets::{CriticVariant, Sizing, SymReduce};
use crate::toyworld::FitConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: {msg}")]
    Parse { origin: String, msg: String },
    #[error("override `{arg}`: {msg}")]
    Override { arg: String, msg: String },
    #[error("key `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub common: CommonConfig,
    pub gradcheck: GradcheckConfig,
    #[serde(rename = "verify-theory")]
    pub verify_theory: TheoryConfig,
    pub toy: ToyConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommonConfig {
    /// Output root; `--out` and the environment variable take precedence.
    pub out_dir: Option<String>,
    pub workers: usize,
}

impl Default for CommonConfig {
    fn default() -> Self {
        Self { out_dir: None, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Random parameterizations per architecture.
    pub parameterizations: usize,
    pub width: usize,
    pub embed: usize,
    pub batch: usize,
    pub step: f64,
    pub tol: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seed: 0, parameterizations: 100, width: 8, embed: 4, batch: 4, step: 1e-5, tol: 1e-4 }
    }
}

pub const THEORY_CHECKS: [&str; 4] = ["triangle", "lift", "sup-identity", "mrn-head"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub checks: Vec<String>,
    pub corpus_seed: u64,
    pub count: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub gammas: Vec<f64>,
    /// Value iteration tolerance; triangle and sup checks allow ten times this.
    pub tol: f64,
    pub axiom_tol: f64,
    pub head_seed: u64,
    pub heads: usize,
    pub head_points: usize,
    pub head_triples: usize,
    pub head_latent: usize,
    pub head_hidden: usize,
    pub head_embed: usize,
    pub sym_reduce: String,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        let corpus = CorpusParams::default();
        Self {
            checks: THEORY_CHECKS.iter().map(|s| s.to_string()).collect(),
            corpus_seed: corpus.seed,
            count: corpus.count,
            max_states: corpus.max_states,
            max_actions: corpus.max_actions,
            gammas: corpus.gammas,
            tol: 1e-10,
            axiom_tol: 1e-9,
            head_seed: 0,
            heads: 100,
            head_points: 32,
            head_triples: 10_000,
            head_latent: 16,
            head_hidden: 176,
            head_embed: 16,
            sym_reduce: "mean".into(),
        }
    }
}

impl TheoryConfig {
    pub fn corpus(&self) -> CorpusParams {
        CorpusParams {
            seed: self.corpus_seed,
            count: self.count,
            max_states: self.max_states,
            max_actions: self.max_actions,
            gammas: self.gammas.clone(),
        }
    }

    pub fn reduce(&self) -> Result<SymReduce, ConfigError> {
        self.sym_reduce.parse().map_err(|_| invalid("verify-theory.sym_reduce", "expected mean, sum or norm"))
    }

    pub fn enabled(&self, check: &str) -> bool {
        self.checks.iter().any(|c| c == check)
    }
}

/// Optional overrides of the default network sizing, shared by `[toy]` and
/// `[train]`.
#[derive(Debug, Clone, Default)]
struct SizingKeys {
    pub embed_dim: Option<usize>,
    pub asym_k: Option<usize>,
    pub sym_reduce: Option<String>,
    pub monolithic_hidden: Option<usize>,
    pub bvn_hidden: Option<usize>,
    pub encoder_hidden: Option<usize>,
    pub head_hidden: Option<usize>,
    pub ablation_head_hidden: Option<usize>,
}

impl SizingKeys {
    fn apply(&self, section: &str) -> Result<Sizing, ConfigError> {
        let mut s = Sizing::default();
        let set = |dst: &mut usize, v: Option<usize>, key: &str| -> Result<(), ConfigError> {
            match v {
                Some(0) => Err(invalid(&format!("{section}.{key}"), "must be positive")),
                Some(v) => {
                    *dst = v;
                    Ok(())
                }
                None => Ok(()),
            }
        };
        set(&mut s.embed_dim, self.embed_dim, "embed_dim")?;
        set(&mut s.asym_k, self.asym_k, "asym_k")?;
        set(&mut s.monolithic_hidden, self.monolithic_hidden, "monolithic_hidden")?;
        set(&mut s.bvn_hidden, self.bvn_hidden, "bvn_hidden")?;
        set(&mut s.encoder_hidden, self.encoder_hidden, "encoder_hidden")?;
        set(&mut s.head_hidden, self.head_hidden, "head_hidden")?;
        set(&mut s.ablation_head_hidden, self.ablation_head_hidden, "ablation_head_hidden")?;
        if let Some(r) = &self.sym_reduce {
            s.sym_reduce = r.parse().map_err(|_| invalid(&format!("{section}.sym_reduce"), "expected mean, sum or norm"))?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub grid_n: usize,
    pub etas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<String>,
    pub n_train: usize,
    pub n_eval: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub lr: f64,
    /// Asymmetric widths for the approximation study; `0` is sym-only.
    pub ks: Vec<usize>,
    pub k_eta: f64,
    pub k_train: usize,
    pub k_iterations: usize,
    // sizing overrides
    pub embed_dim: Option<usize>,
    pub asym_k: Option<usize>,
    pub sym_reduce: Option<String>,
    pub monolithic_hidden: Option<usize>,
    pub bvn_hidden: Option<usize>,
    pub encoder_hidden: Option<usize>,
    pub head_hidden: Option<usize>,
    pub ablation_head_hidden: Option<usize>,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            grid_n: crate::toyworld::DEFAULT_GRID_N,
            etas: vec![0.1, 0.25, 0.5, 1.0],
            seeds: vec![100, 200, 300, 400, 500],
            variants: vec!["mrn".into(), "mrn-sym".into()],
            n_train: crate::toyworld::TRAIN_PAIRS,
            n_eval: crate::toyworld::EVAL_PAIRS,
            iterations: 400,
            eval_every: 20,
            lr: 1e-3,
            ks: vec![0, 1, 8, 64, 176],
            k_eta: 0.1,
            k_train: 100,
            k_iterations: 800,
            embed_dim: None,
            asym_k: None,
            sym_reduce: None,
            monolithic_hidden: None,
            bvn_hidden: None,
            encoder_hidden: None,
            head_hidden: None,
            ablation_head_hidden: None,
        }
    }
}

impl ToyConfig {
    fn sizing_keys(&self) -> SizingKeys {
        SizingKeys {
            embed_dim: self.embed_dim,
            asym_k: self.asym_k,
            sym_reduce: self.sym_reduce.clone(),
            monolithic_hidden: self.monolithic_hidden,
            bvn_hidden: self.bvn_hidden,
            encoder_hidden: self.encoder_hidden,
            head_hidden: self.head_hidden,
            ablation_head_hidden: self.ablation_head_hidden,
        }
    }

    pub fn variants(&self) -> Result<Vec<CriticVariant>, ConfigError> {
        parse_variants(&self.variants, "toy.variants")
    }

    pub fn fit_config(&self, seed: u64) -> Result<FitConfig, ConfigError> {
        Ok(FitConfig {
            iterations: self.iterations,
            lr: self.lr,
            eval_every: self.eval_every,
            sizing: self.sizing_keys().apply("toy")?,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    pub episodes_per_cycle: usize,
    pub updates_per_cycle: usize,
    pub batch_size: usize,
    pub buffer_episodes: usize,
    pub future_p: f64,
    pub eval_rollouts: usize,
    pub lr: f64,
    pub gamma: f64,
    pub polyak: f64,
    pub action_l2: f64,
    pub normalize: bool,
    pub noise_eps: f64,
    pub random_eps: f64,
    pub actor_hidden: usize,
    pub actor_layers: usize,
    pub a_max: f64,
    pub eps_goal: f64,
    pub horizon: usize,
    pub save_checkpoints: bool,
    // sizing overrides
    pub embed_dim: Option<usize>,
    pub asym_k: Option<usize>,
    pub sym_reduce: Option<String>,
    pub monolithic_hidden: Option<usize>,
    pub bvn_hidden: Option<usize>,
    pub encoder_hidden: Option<usize>,
    pub head_hidden: Option<usize>,
    pub ablation_head_hidden: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            variants: vec!["mrn".into(), "monolithic".into()],
            seeds: vec![100, 200, 300, 400, 500],
            epochs: t.epochs,
            cycles_per_epoch: t.cycles_per_epoch,
            episodes_per_cycle: t.episodes_per_cycle,
            updates_per_cycle: t.updates_per_cycle,
            batch_size: t.batch_size,
            buffer_episodes: t.buffer_episodes,
            future_p: t.future_p,
            eval_rollouts: t.eval_rollouts,
            lr: t.agent.lr,
            gamma: t.agent.gamma,
            polyak: t.agent.polyak,
            action_l2: t.agent.action_l2,
            normalize: t.agent.normalize,
            noise_eps: t.exploration.noise_eps,
            random_eps: t.exploration.random_eps,
            actor_hidden: t.agent.actor_hidden,
            actor_layers: t.agent.actor_layers,
            a_max: t.env.a_max,
            eps_goal: t.env.eps_goal,
            horizon: t.env.horizon,
            save_checkpoints: true,
            embed_dim: None,
            asym_k: None,
            sym_reduce: None,
            monolithic_hidden: None,
            bvn_hidden: None,
            encoder_hidden: None,
            head_hidden: None,
            ablation_head_hidden: None,
        }
    }
}

impl TrainSection {
    fn sizing_keys(&self) -> SizingKeys {
        SizingKeys {
            embed_dim: self.embed_dim,
            asym_k: self.asym_k,
            sym_reduce: self.sym_reduce.clone(),
            monolithic_hidden: self.monolithic_hidden,
            bvn_hidden: self.bvn_hidden,
            encoder_hidden: self.encoder_hidden,
            head_hidden: self.head_hidden,
            ablation_head_hidden: self.ablation_head_hidden,
        }
    }

    pub fn variants(&self) -> Result<Vec<CriticVariant>, ConfigError> {
        parse_variants(&self.variants, "train.variants")
    }

    pub fn env(&self) -> PointMassEnv {
        PointMassEnv { a_max: self.a_max, eps_goal: self.eps_goal, horizon: self.horizon }
    }

    /// Training settings for one `(variant, seed)` run.
    pub fn run_config(&self, variant: CriticVariant, seed: u64) -> Result<TrainConfig, ConfigError> {
        Ok(TrainConfig {
            env: self.env(),
            agent: AgentConfig {
                variant,
                sizing: self.sizing_keys().apply("train")?,
                actor_hidden: self.actor_hidden,
                actor_layers: self.actor_layers,
                lr: self.lr,
                gamma: self.gamma,
                polyak: self.polyak,
                action_l2: self.action_l2,
                normalize: self.normalize,
            },
            exploration: Exploration { noise_eps: self.noise_eps, random_eps: self.random_eps },
            seed,
            epochs: self.epochs,
            cycles_per_epoch: self.cycles_per_epoch,
            episodes_per_cycle: self.episodes_per_cycle,
            updates_per_cycle: self.updates_per_cycle,
            batch_size: self.batch_size,
            buffer_episodes: self.buffer_episodes,
            future_p: self.future_p,
            eval_rollouts: self.eval_rollouts,
        })
    }
}

/// Evaluation rebuilds the agent from the `[train]` sizing and environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: Option<String>,
    pub variant: String,
    pub rollouts: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { checkpoint: None, variant: "mrn".into(), rollouts: 100, seed: 0 }
    }
}

fn parse_variants(names: &[String], key: &str) -> Result<Vec<CriticVariant>, ConfigError> {
    if names.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    names.iter().map(|n| n.parse().map_err(|_| invalid(key, format!("unknown variant `{n}`")))).collect()
}

impl ExperimentConfig {
    /// Reads `path` (or starts from defaults), applies `section.key=value`
    /// overrides in order and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let (origin, text) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
                (p.display().to_string(), text)
            }
            None => ("<defaults>".to_string(), String::new()),
        };
        let parse_err = |e: toml::de::Error| ConfigError::Parse { origin: origin.clone(), msg: e.to_string() };
        // typed parse first so unknown keys are reported with their line
        let _: ExperimentConfig = toml::from_str(&text).map_err(parse_err)?;
        let mut table: toml::Table = toml::from_str(&text).map_err(parse_err)?;
        for arg in overrides {
            apply_override(&mut table, arg)?;
        }
        let merged = toml::to_string(&table).map_err(|e| ConfigError::Parse { origin: origin.clone(), msg: e.to_string() })?;
        let cfg: ExperimentConfig =
            toml::from_str(&merged).map_err(|e| ConfigError::Parse { origin: "overrides".into(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.common.workers == 0 {
            return Err(invalid("common.workers", "must be positive"));
        }
        let g = &self.gradcheck;
        if g.width == 0 || g.embed == 0 || g.batch == 0 {
            return Err(invalid("gradcheck", "width, embed and batch must be positive"));
        }
        if !(g.step > 0.0 && g.tol > 0.0) {
            return Err(invalid("gradcheck", "step and tol must be positive"));
        }
        let t = &self.verify_theory;
        if let Some(c) = t.checks.iter().find(|c| !THEORY_CHECKS.contains(&c.as_str())) {
            return Err(invalid("verify-theory.checks", format!("unknown check `{c}`")));
        }
        if t.gammas.is_empty() || t.gammas.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
            return Err(invalid("verify-theory.gammas", "each gamma must lie in (0, 1)"));
        }
        if t.max_states < 2 || t.max_actions < 1 {
            return Err(invalid("verify-theory", "need max_states >= 2 and max_actions >= 1"));
        }
        if t.head_points < 3 {
            return Err(invalid("verify-theory.head_points", "need at least 3 points"));
        }
        t.reduce()?;
        let toy = &self.toy;
        toy.variants()?;
        toy.fit_config(0)?;
        if toy.etas.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(invalid("toy.etas", "each eta must lie in (0, 1]"));
        }
        if !(toy.k_eta > 0.0 && toy.k_eta <= 1.0) {
            return Err(invalid("toy.k_eta", "must lie in (0, 1]"));
        }
        if toy.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("toy.ks", "must be strictly increasing"));
        }
        if toy.seeds.is_empty() {
            return Err(invalid("toy.seeds", "empty list"));
        }
        let tr = &self.train;
        tr.variants()?;
        tr.run_config(CriticVariant::Mrn, 0)?;
        if tr.seeds.is_empty() {
            return Err(invalid("train.seeds", "empty list"));
        }
        if !(tr.gamma > 0.0 && tr.gamma < 1.0) {
            return Err(invalid("train.gamma", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&tr.future_p) {
            return Err(invalid("train.future_p", "must lie in [0, 1]"));
        }
        if tr.batch_size == 0 || tr.buffer_episodes == 0 || tr.horizon == 0 || tr.episodes_per_cycle == 0 {
            return Err(invalid("train", "batch_size, buffer_episodes, horizon and episodes_per_cycle must be positive"));
        }
        self.eval
            .variant
            .parse::<CriticVariant>()
            .map_err(|_| invalid("eval.variant", format!("unknown variant `{}`", self.eval.variant)))?;
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, arg: &str) -> Result<(), ConfigError> {
    let err = |msg: &str| ConfigError::Override { arg: arg.to_string(), msg: msg.to_string() };
    let (path, raw) = arg.split_once('=').ok_or_else(|| err("expected section.key=value"))?;
    let (section, key) = path.trim().split_once('.').ok_or_else(|| err("expected section.key=value"))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(err("section is not a table")),
    }
}
