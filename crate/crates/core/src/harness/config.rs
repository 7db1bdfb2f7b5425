//! Experiment configuration: flat `key=value` files, flag overrides, and the
//! `AADV_SEED` fallback.
//!
//! Keys are the long flag names without dashes in front (`alpha-start`,
//! `enc-lr`, ...). Later sources win: defaults, then the file, then flags.
//! The seed comes from the file or a flag if either sets it, else from
//! `AADV_SEED`, else 1.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::attack::AttackConfig;
use crate::classifier::TrainConfig;
use crate::encoder::EncoderKind;
use crate::error::{Error, Result};

pub const SEED_ENV: &str = "AADV_SEED";
pub const DEFAULT_SEED: u64 = 1;

/// Parses `"8/255"` or `"0.0314"`.
pub fn parse_eps(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("cannot read {s:?} as a radius; use a decimal or a ratio like 8/255"));
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            num / den
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("radius {v} is outside [0, 1]")));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub dataset: PathBuf,
    /// Directory for reports and image dumps.
    pub out: PathBuf,
    seed: Option<u64>,
    env_seed: Option<u64>,
    pub count: usize,
    pub eps: f64,
    pub iters: usize,
    pub c: f64,
    pub gamma: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub mu: f64,
    /// `None` means ε/10.
    pub beta: Option<f64>,
    pub enc_lr: f64,
    pub enc_momentum: f64,
    pub encoder: EncoderKind,
    pub channel_shared: bool,
    pub tau_bin: f64,
    pub workers: usize,
    pub dump_images: bool,
    /// Weight of the l1-δ ablation baseline.
    pub l1_lambda: f64,
    pub accuracy_floor: f64,
    pub dataset_size: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub classes: usize,
    pub epochs: usize,
    pub train_lr: f64,
    pub train_momentum: f64,
    pub batch_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let attack = AttackConfig::default();
        let train = TrainConfig::default();
        Self {
            model: PathBuf::from("aadv-out/model.aadv"),
            dataset: PathBuf::from("aadv-out/dataset.aadv"),
            out: PathBuf::from("aadv-out"),
            seed: None,
            env_seed: None,
            count: 100,
            eps: attack.eps,
            iters: attack.iterations,
            c: attack.c_floor,
            gamma: attack.gamma,
            alpha_start: attack.alpha_start,
            alpha_end: attack.alpha_end,
            mu: attack.mu,
            beta: None,
            enc_lr: attack.enc_lr,
            enc_momentum: attack.enc_momentum,
            encoder: attack.encoder,
            channel_shared: !attack.channel_independent,
            tau_bin: attack.tau_bin,
            workers: 1,
            dump_images: false,
            l1_lambda: 1.0,
            accuracy_floor: 0.85,
            dataset_size: 3000,
            width: 16,
            height: 16,
            channels: 1,
            classes: 10,
            epochs: train.epochs,
            train_lr: train.lr,
            train_momentum: train.momentum,
            batch_size: train.batch_size,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true or false, got {other:?}"))),
    }
}

impl ExperimentConfig {
    /// Defaults, then `file`, then `overrides`; `env_seed` is the raw
    /// `AADV_SEED` value if set.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)], env_seed: Option<&str>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(s) = env_seed {
            cfg.env_seed = Some(num(SEED_ENV, s)?);
        }
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "model" => self.model = PathBuf::from(v),
            "dataset" => self.dataset = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = Some(num(key, v)?),
            "count" => self.count = num(key, v)?,
            "eps" => self.eps = parse_eps(v)?,
            "iters" => self.iters = num(key, v)?,
            "c" => self.c = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "alpha-start" => self.alpha_start = num(key, v)?,
            "alpha-end" => self.alpha_end = num(key, v)?,
            "mu" => self.mu = num(key, v)?,
            "beta" => self.beta = Some(num(key, v)?),
            "enc-lr" => self.enc_lr = num(key, v)?,
            "enc-momentum" => self.enc_momentum = num(key, v)?,
            "encoder" => self.encoder = EncoderKind::parse(v.trim())?,
            "channel-shared" => self.channel_shared = flag(key, v)?,
            "tau-bin" => self.tau_bin = num(key, v)?,
            "workers" => self.workers = num(key, v)?,
            "dump-images" => self.dump_images = flag(key, v)?,
            "l1-lambda" => self.l1_lambda = num(key, v)?,
            "accuracy-floor" => self.accuracy_floor = num(key, v)?,
            "dataset-size" => self.dataset_size = num(key, v)?,
            "width" => self.width = num(key, v)?,
            "height" => self.height = num(key, v)?,
            "channels" => self.channels = num(key, v)?,
            "classes" => self.classes = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "train-lr" => self.train_lr = num(key, v)?,
            "train-momentum" => self.train_momentum = num(key, v)?,
            "batch-size" => self.batch_size = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.or(self.env_seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.accuracy_floor) {
            return Err(Error::Config("accuracy-floor must lie in [0, 1]".into()));
        }
        if self.l1_lambda < 0.0 {
            return Err(Error::Config("l1-lambda must be non-negative".into()));
        }
        if self.eps > 0.0 {
            self.attack_config().validate()?;
        }
        Ok(())
    }

    /// Attack hyperparameters; the per-image seed is filled in by the harness.
    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            eps: self.eps,
            iterations: self.iters,
            c_floor: self.c,
            gamma: self.gamma,
            alpha_start: self.alpha_start,
            alpha_end: self.alpha_end,
            mu: self.mu,
            beta: self.beta.unwrap_or(self.eps / 10.0),
            enc_lr: self.enc_lr,
            enc_momentum: self.enc_momentum,
            encoder: self.encoder,
            channel_independent: !self.channel_shared,
            tau_bin: self.tau_bin,
            seed: self.seed(),
            trace: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.train_lr,
            momentum: self.train_momentum,
            batch_size: self.batch_size,
            seed: self.seed(),
        }
    }

    /// Every key with its resolved value. Feeding these pairs back through
    /// [`ExperimentConfig::set`] reproduces this configuration.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let a = self.attack_config();
        let path = |p: &Path| p.to_string_lossy().into_owned();
        [
            ("model", path(&self.model)),
            ("dataset", path(&self.dataset)),
            ("out", path(&self.out)),
            ("seed", self.seed().to_string()),
            ("count", self.count.to_string()),
            ("eps", self.eps.to_string()),
            ("iters", self.iters.to_string()),
            ("c", self.c.to_string()),
            ("gamma", self.gamma.to_string()),
            ("alpha-start", self.alpha_start.to_string()),
            ("alpha-end", self.alpha_end.to_string()),
            ("mu", self.mu.to_string()),
            ("beta", a.beta.to_string()),
            ("enc-lr", self.enc_lr.to_string()),
            ("enc-momentum", self.enc_momentum.to_string()),
            ("encoder", self.encoder.name().to_string()),
            ("channel-shared", self.channel_shared.to_string()),
            ("tau-bin", self.tau_bin.to_string()),
            ("workers", self.workers.to_string()),
            ("dump-images", self.dump_images.to_string()),
            ("l1-lambda", self.l1_lambda.to_string()),
            ("accuracy-floor", self.accuracy_floor.to_string()),
            ("dataset-size", self.dataset_size.to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("channels", self.channels.to_string()),
            ("classes", self.classes.to_string()),
            ("epochs", self.epochs.to_string()),
            ("train-lr", self.train_lr.to_string()),
            ("train-momentum", self.train_momentum.to_string()),
            ("batch-size", self.batch_size.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Rebuilds a configuration from a report's echo.
    pub fn from_echo(echo: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in echo {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
