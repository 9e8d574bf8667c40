//! Flat `key = value` configuration with defaults and typed accessors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use oe_lab::bench::{ExperimentConfig, Protocol, ToySettings, TrainConfig};
use oe_lab::data::ToyKind;
use oe_lab::evo::{EvoMode, EvoParams};
use oe_lab::freq::{FilterKind, FilterSpec};
use oe_lab::losses::{Method, RadialKind};

pub const DATA_ENV: &str = "OE_LAB_DATA";

/// Every accepted key with its default value.
const DEFAULTS: &[(&str, &str)] = &[
    ("dataset.root", "data"),
    ("dataset.name", "mnist"),
    ("dataset.oe", "emnist_letters"),
    ("dataset.train_cap_per_class", "none"),
    ("protocol", "one_vs_rest"),
    ("classes", "0,1,2,3,4,5,6,7,8,9"),
    ("seeds", "0"),
    ("threads", "0"),
    ("method.kind", "hsc"),
    ("method.radial", "l2_squared"),
    ("method.gamma", "2"),
    ("method.alpha", "0.5"),
    ("method.eta", "1"),
    ("method.eps", "1e-6"),
    ("oe.size", "full"),
    ("oe.classes", "all"),
    ("filter.kind", "none"),
    ("filter.magnitude", "0"),
    ("train.epochs", "30"),
    ("train.milestones", "25"),
    ("train.lr", "0.001"),
    ("train.batch_normal", "128"),
    ("train.batch_oe", "128"),
    ("train.noise_sigma", "0"),
    ("train.hidden", "256,128"),
    ("train.rep_dim", "32"),
    ("train.slope", "0.01"),
    ("sweep.oe_sizes", "1,2,4,8,16,32,64,128,256,512,1024,2048,4096,8192,full"),
    ("sweep.oe_classes", "1,2,4,8,16,26"),
    ("sweep.filter_kinds", "lpf,hpf"),
    ("sweep.filter_magnitudes", "0,2,4,6,8,10,12"),
    ("toy.scenarios", "ideal,skewed"),
    ("toy.methods", "hsc,bce"),
    ("toy.n_normal", "512"),
    ("toy.n_oe", "512"),
    ("toy.n_test", "500"),
    ("toy.grid", "40"),
    ("evo.mode", "maximize"),
    ("evo.generation_size", "64"),
    ("evo.generations", "50"),
    ("evo.tournament_size", "3"),
    ("evo.mate_prob", "0.05"),
    ("evo.mutate_prob", "0.55"),
    ("evo.pool_candidates", "10000"),
    ("evo.pool_keep", "50"),
    ("evo.fitness_seeds", "2"),
    ("evo.seed", "0"),
    ("evo.cache", "true"),
    ("evo.random_search", "false"),
];

/// Keys that never change results and are left out of the config hash.
const UNHASHED: &[&str] = &["dataset.root", "threads"];

/// Effective configuration: defaults, then file entries, then overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    values: BTreeMap<String, String>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl CliConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {line:?}", n + 1))?;
            cfg.set(key.trim(), value.trim()).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => bail!("unknown config key '{key}'"),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec.split_once('=').ok_or_else(|| anyhow!("override {spec:?} is not key=value"))?;
        self.set(k.trim(), v.trim())
    }

    /// Replaces `dataset.root` with `$OE_LAB_DATA` when set.
    pub fn apply_env(&mut self) {
        if let Ok(root) = std::env::var(DATA_ENV) {
            if !root.is_empty() {
                self.values.insert("dataset.root".into(), root);
            }
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared key {key}"))
    }

    pub fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| anyhow!("{key} = {raw:?}: {e}"))
    }

    pub fn list<T>(&self, key: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| anyhow!("{key}: element {s:?}: {e}")))
            .collect()
    }

    /// `none` / `full` / `all` map to `None`.
    pub fn optional(&self, key: &str) -> Result<Option<usize>> {
        parse_optional(self.raw(key)).with_context(|| format!("{key} = {:?}", self.raw(key)))
    }

    pub fn optional_list(&self, key: &str) -> Result<Vec<Option<usize>>> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_optional(s).with_context(|| format!("{key}: element {s:?}")))
            .collect()
    }

    /// `key = value` lines in key order.
    pub fn dump(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Hash of the command and every result-relevant key.
    pub fn hash(&self, command: &str) -> String {
        let hashed: BTreeMap<&str, &str> = self
            .values
            .iter()
            .filter(|(k, _)| !UNHASHED.contains(&k.as_str()))
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        oe_lab::bench::config_hash(&(command, hashed))
    }

    pub fn data_root(&self) -> PathBuf {
        PathBuf::from(self.raw("dataset.root"))
    }

    pub fn threads(&self) -> Result<usize> {
        let t: usize = self.get("threads")?;
        Ok(if t == 0 { oe_lab::bench::default_threads() } else { t })
    }

    fn method_named(&self, kind: &str) -> Result<Method> {
        Ok(match kind {
            "hsc" => Method::Hsc { radial: self.get::<RadialKind>("method.radial")? },
            "bce" => Method::Bce,
            "focal" => Method::Focal { gamma: self.get("method.gamma")?, alpha: self.get("method.alpha")? },
            "dsvdd" => Method::Dsvdd,
            "dsad" => Method::Dsad { eta: self.get("method.eta")?, eps: self.get("method.eps")? },
            other => bail!("unknown method '{other}' (expected hsc, bce, focal, dsvdd or dsad)"),
        })
    }

    pub fn methods_from(&self, key: &str) -> Result<Vec<Method>> {
        let kinds: Vec<String> = self.list(key)?;
        if kinds.is_empty() {
            bail!("{key} lists no methods");
        }
        kinds.iter().map(|k| self.method_named(k)).collect()
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.methods_from("method.kind")
    }

    pub fn train(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.get("train.epochs")?,
            milestones: self.list("train.milestones")?,
            lr: self.get("train.lr")?,
            batch_normal: self.get("train.batch_normal")?,
            batch_oe: self.get("train.batch_oe")?,
            noise_sigma: self.get("train.noise_sigma")?,
            hidden: self.list("train.hidden")?,
            rep_dim: self.get("train.rep_dim")?,
            slope: self.get("train.slope")?,
        })
    }

    pub fn filter(&self) -> Result<FilterSpec> {
        Ok(FilterSpec::new(self.get::<FilterKind>("filter.kind")?, self.get("filter.magnitude")?))
    }

    pub fn toy_settings(&self, kind: ToyKind) -> Result<ToySettings> {
        Ok(ToySettings {
            kind,
            n_normal: self.get("toy.n_normal")?,
            n_oe: self.get("toy.n_oe")?,
            n_test: self.get("toy.n_test")?,
        })
    }

    pub fn toy_scenarios(&self) -> Result<Vec<ToyKind>> {
        self.list::<String>("toy.scenarios")?
            .iter()
            .map(|s| match s.as_str() {
                "ideal" => Ok(ToyKind::Ideal),
                "skewed" => Ok(ToyKind::Skewed),
                other => bail!("unknown toy scenario '{other}'"),
            })
            .collect()
    }

    /// Experiment for `method` with every other field taken from the config.
    pub fn experiment(&self, method: Method) -> Result<ExperimentConfig> {
        let protocol: Protocol = self.get("protocol")?;
        let cfg = ExperimentConfig {
            dataset: self.raw("dataset.name").to_string(),
            oe_dataset: self.raw("dataset.oe").to_string(),
            method,
            protocol,
            classes: if protocol == Protocol::Toy2d { vec![0] } else { self.list("classes")? },
            seeds: self.list("seeds")?,
            oe_size: self.optional("oe.size")?,
            oe_classes: self.optional("oe.classes")?,
            filter: self.filter()?,
            train: self.train()?,
            train_cap_per_class: self.optional("dataset.train_cap_per_class")?,
            toy: self.toy_settings(ToyKind::Skewed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn evo_params(&self) -> Result<EvoParams> {
        Ok(EvoParams {
            generation_size: self.get("evo.generation_size")?,
            generations: self.get("evo.generations")?,
            tournament_size: self.get("evo.tournament_size")?,
            mate_prob: self.get("evo.mate_prob")?,
            mutate_prob: self.get("evo.mutate_prob")?,
            pool_candidates: self.get("evo.pool_candidates")?,
            pool_keep: self.get("evo.pool_keep")?,
            fitness_seeds: self.get("evo.fitness_seeds")?,
            mode: self.get::<EvoMode>("evo.mode")?,
            cache: self.get("evo.cache")?,
            random_search: self.get("evo.random_search")?,
            threads: self.threads()?,
        })
    }
}

fn parse_optional(s: &str) -> Result<Option<usize>> {
    match s {
        "none" | "full" | "all" => Ok(None),
        n => Ok(Some(n.parse().map_err(|e| anyhow!("{e}"))?)),
    }
}
