use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ToyKind;
use crate::error::{config, Error, Result};
use crate::freq::FilterSpec;
use crate::losses::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    OneVsRest,
    LeaveOneOut,
    Toy2d,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_vs_rest" => Ok(Self::OneVsRest),
            "leave_one_out" => Ok(Self::LeaveOneOut),
            "toy2d" => Ok(Self::Toy2d),
            other => Err(config(format!("unknown protocol '{other}'"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OneVsRest => "one_vs_rest",
            Self::LeaveOneOut => "leave_one_out",
            Self::Toy2d => "toy2d",
        })
    }
}

/// Optimization schedule and architecture of a single training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epoch indices at which the learning rate is divided by 10.
    pub milestones: Vec<usize>,
    pub lr: f64,
    pub batch_normal: usize,
    pub batch_oe: usize,
    pub noise_sigma: f64,
    pub hidden: Vec<usize>,
    pub rep_dim: usize,
    pub slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            milestones: vec![25],
            lr: 1e-3,
            batch_normal: 128,
            batch_oe: 128,
            noise_sigma: 0.0,
            hidden: vec![256, 128],
            rep_dim: 32,
            slope: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(config("epochs must be >= 1"));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config("milestones must be strictly increasing"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_normal == 0 {
            return Err(config("batch_normal must be >= 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(config("noise_sigma must be >= 0"));
        }
        if self.rep_dim == 0 || self.hidden.contains(&0) {
            return Err(config("layer widths must be >= 1"));
        }
        if !(self.slope >= 0.0 && self.slope.is_finite()) {
            return Err(config("leaky slope must be >= 0"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr / 10f64.powi(drops as i32)
    }
}

/// Sizes of the generated toy scenario; the run seed seeds the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToySettings {
    pub kind: ToyKind,
    pub n_normal: usize,
    pub n_oe: usize,
    pub n_test: usize,
}

impl Default for ToySettings {
    fn default() -> Self {
        Self { kind: ToyKind::Skewed, n_normal: 512, n_oe: 512, n_test: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub oe_dataset: String,
    pub method: Method,
    pub protocol: Protocol,
    pub classes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `None` uses the full OE set.
    pub oe_size: Option<usize>,
    /// Restricts OE to this many randomly chosen OE classes.
    pub oe_classes: Option<usize>,
    pub filter: FilterSpec,
    pub train: TrainConfig,
    pub train_cap_per_class: Option<usize>,
    pub toy: ToySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "mnist".into(),
            oe_dataset: "emnist_letters".into(),
            method: Method::hsc(),
            protocol: Protocol::OneVsRest,
            classes: (0..10).collect(),
            seeds: vec![0],
            oe_size: None,
            oe_classes: None,
            filter: FilterSpec::default(),
            train: TrainConfig::default(),
            train_cap_per_class: None,
            toy: ToySettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(config("at least one seed is required"));
        }
        if self.classes.is_empty() {
            return Err(config("at least one class is required"));
        }
        if self.protocol == Protocol::Toy2d && self.classes != [0] {
            return Err(config("the toy protocol has the single class 0"));
        }
        if self.oe_size == Some(0) || self.oe_classes == Some(0) {
            return Err(config("OE size and OE class count must be >= 1"));
        }
        if self.method.uses_oe() && self.train.batch_oe == 0 {
            return Err(config(format!("{} needs batch_oe >= 1", self.method.label())));
        }
        if self.train_cap_per_class == Some(0) {
            return Err(config("train_cap_per_class must be >= 1"));
        }
        Ok(())
    }

    /// True when OE settings are present but the method never reads OE.
    pub fn oe_ignored(&self) -> bool {
        !self.method.uses_oe() && (self.oe_size.is_some() || self.oe_classes.is_some())
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Hex SHA-256 of the canonical JSON serialization.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let t = TrainConfig { milestones: vec![2, 4], ..TrainConfig::default() };
        assert_eq!(t.lr_at(0), 1e-3);
        assert_eq!(t.lr_at(2), 1e-4);
        assert!((t.lr_at(5) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig { seeds: vec![], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { oe_size: Some(0), ..Default::default() };
        assert!(bad.validate().is_err());
        let mut bad = ExperimentConfig::default();
        bad.train.milestones = vec![5, 5];
        assert!(bad.validate().is_err());
        let toy = ExperimentConfig { protocol: Protocol::Toy2d, ..Default::default() };
        assert!(toy.validate().is_err());
        let dsvdd = ExperimentConfig { method: Method::Dsvdd, oe_size: Some(4), ..Default::default() };
        assert!(dsvdd.oe_ignored());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        assert_eq!(a.hash(), a.clone().hash());
        assert_eq!(a.hash().len(), 64);
        let b = ExperimentConfig { oe_size: Some(1), ..Default::default() };
        assert_ne!(a.hash(), b.hash());
    }
}
