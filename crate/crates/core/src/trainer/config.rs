use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::{parse_value, split_override, KvFile};
use crate::openmix::{AnchorLabel, OpmSoftmax};

/// Every knob of a two-stage run. Defaults follow the reference
/// hyper-parameters, with the epoch counts scaled down for small synthetic
/// data.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    /// Clustering-stage learning rate.
    pub lr: f64,
    pub pretrain_lr: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub batch_mixed: usize,
    pub pretrain_epochs: usize,
    pub cluster_epochs: usize,
    /// Clustering epochs `1..=freeze_epochs` leave the backbone untouched.
    pub freeze_epochs: usize,
    /// First (1-indexed) clustering epoch that mixes labeled examples.
    pub labeled_mix_epoch: usize,
    /// First clustering epoch whose mixed batches are half anchor mixes.
    pub anchor_mix_epoch: usize,
    /// Turns the mixing loss off entirely: no mixed batches are built.
    pub openmix: bool,
    pub opm_softmax: OpmSoftmax,
    pub anchor_label: AnchorLabel,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    /// Multiplier on the `U(±1/√feature_dim)` draw for the new head.
    pub new_head_scale: f64,
    pub seed: u64,
    /// Dataset file, or a directory holding `dataset.csv`.
    pub data: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            theta1: 0.95,
            theta2: 0.9,
            lambda1: 5.0,
            lambda2: 1000.0,
            epsilon: 1.0,
            lr: 1e-4,
            pretrain_lr: 1e-3,
            rms_decay: 0.9,
            rms_eps: 1e-8,
            batch_labeled: 64,
            batch_unlabeled: 64,
            batch_mixed: 64,
            pretrain_epochs: 100,
            cluster_epochs: 60,
            freeze_epochs: 15,
            labeled_mix_epoch: 2,
            anchor_mix_epoch: 5,
            openmix: true,
            opm_softmax: OpmSoftmax::Joint,
            anchor_label: AnchorLabel::OneHot,
            hidden_dims: vec![64, 64],
            feature_dim: 32,
            new_head_scale: 0.3,
            seed: 0,
            data: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
        }
    }
}

pub const DATASET_FILE: &str = "dataset.csv";
pub const PRETRAINED_FILE: &str = "pretrained.omx";
pub const CLUSTERED_FILE: &str = "clustered.omx";
pub const METRICS_FILE: &str = "metrics.csv";

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl FromStr for OpmSoftmax {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(OpmSoftmax::Joint),
            "per_head" => Ok(OpmSoftmax::PerHead),
            _ => Err(Error::Config(format!("invalid value `{s}` for `opm_softmax`"))),
        }
    }
}

impl FromStr for AnchorLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_hot" => Ok(AnchorLabel::OneHot),
            "soft" => Ok(AnchorLabel::Soft),
            _ => Err(Error::Config(format!("invalid value `{s}` for `anchor_label`"))),
        }
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "theta1" => self.theta1 = parse_value(key, value)?,
            "theta2" => self.theta2 = parse_value(key, value)?,
            "lambda1" => self.lambda1 = parse_value(key, value)?,
            "lambda2" => self.lambda2 = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "pretrain_lr" => self.pretrain_lr = parse_value(key, value)?,
            "rms_decay" => self.rms_decay = parse_value(key, value)?,
            "rms_eps" => self.rms_eps = parse_value(key, value)?,
            "batch_labeled" => self.batch_labeled = parse_value(key, value)?,
            "batch_unlabeled" => self.batch_unlabeled = parse_value(key, value)?,
            "batch_mixed" => self.batch_mixed = parse_value(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse_value(key, value)?,
            "cluster_epochs" => self.cluster_epochs = parse_value(key, value)?,
            "freeze_epochs" => self.freeze_epochs = parse_value(key, value)?,
            "labeled_mix_epoch" => self.labeled_mix_epoch = parse_value(key, value)?,
            "anchor_mix_epoch" => self.anchor_mix_epoch = parse_value(key, value)?,
            "openmix" => self.openmix = parse_bool(key, value)?,
            "opm_softmax" => self.opm_softmax = value.parse()?,
            "anchor_label" => self.anchor_label = value.parse()?,
            "hidden_dims" => self.hidden_dims = parse_list(key, value)?,
            "feature_dim" => self.feature_dim = parse_value(key, value)?,
            "new_head_scale" => self.new_head_scale = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "data" => self.data = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in kv.iter() {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Reads a config file, applies `overrides` (`key=value`) in order and
    /// validates the result.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_kv(&KvFile::parse(&text, path)?)?;
        for item in overrides {
            let (k, v) = split_override(item)?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let in_open = |v: f64, lo: f64, hi: f64| v > lo && v < hi;
        if !in_open(self.theta1, 0.0, 1.0) {
            return fail(format!("theta1 must lie in (0, 1), got {}", self.theta1));
        }
        if !in_open(self.theta2, 0.5, 1.0) {
            return fail(format!("theta2 must lie in (0.5, 1), got {}", self.theta2));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("lr", self.lr),
            ("pretrain_lr", self.pretrain_lr),
            ("rms_eps", self.rms_eps),
            ("new_head_scale", self.new_head_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.rms_decay >= 0.0 && self.rms_decay < 1.0) {
            return fail(format!("rms_decay must lie in [0, 1), got {}", self.rms_decay));
        }
        for (name, v) in [
            ("batch_labeled", self.batch_labeled),
            ("batch_mixed", self.batch_mixed),
            ("labeled_mix_epoch", self.labeled_mix_epoch),
            ("anchor_mix_epoch", self.anchor_mix_epoch),
            ("feature_dim", self.feature_dim),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.batch_unlabeled < 2 {
            return fail("batch_unlabeled must be at least 2".into());
        }
        if self.hidden_dims.contains(&0) {
            return fail("hidden_dims entries must be positive".into());
        }
        Ok(())
    }

    /// The config as a `key = value` file that loads back to itself.
    pub fn to_kv_string(&self) -> String {
        let softmax = match self.opm_softmax {
            OpmSoftmax::Joint => "joint",
            OpmSoftmax::PerHead => "per_head",
        };
        let anchor = match self.anchor_label {
            AnchorLabel::OneHot => "one_hot",
            AnchorLabel::Soft => "soft",
        };
        let pairs: [(&str, String); 26] = [
            ("theta1", self.theta1.to_string()),
            ("theta2", self.theta2.to_string()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("lr", self.lr.to_string()),
            ("pretrain_lr", self.pretrain_lr.to_string()),
            ("rms_decay", self.rms_decay.to_string()),
            ("rms_eps", self.rms_eps.to_string()),
            ("batch_labeled", self.batch_labeled.to_string()),
            ("batch_unlabeled", self.batch_unlabeled.to_string()),
            ("batch_mixed", self.batch_mixed.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("cluster_epochs", self.cluster_epochs.to_string()),
            ("freeze_epochs", self.freeze_epochs.to_string()),
            ("labeled_mix_epoch", self.labeled_mix_epoch.to_string()),
            ("anchor_mix_epoch", self.anchor_mix_epoch.to_string()),
            ("openmix", self.openmix.to_string()),
            ("opm_softmax", softmax.to_string()),
            ("anchor_label", anchor.to_string()),
            ("hidden_dims", join(&self.hidden_dims)),
            ("feature_dim", self.feature_dim.to_string()),
            ("new_head_scale", self.new_head_scale.to_string()),
            ("seed", self.seed.to_string()),
            ("data", self.data.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn dataset_path(&self) -> PathBuf {
        if self.data.is_dir() {
            self.data.join(DATASET_FILE)
        } else {
            self.data.clone()
        }
    }
}
