use std::fmt::Write as _;
use std::path::Path;

use super::DatasetSpec;
use crate::budget::{validate_ladder, BudgetLadder};
use crate::error::{Error, Result};

/// Training run configuration. Serialized as flat `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub classes: usize,
    pub features: usize,
    pub dim: usize,
    pub r_q: usize,
    pub r_c: usize,
    pub ladder: BudgetLadder,
    pub tau: f64,
    pub weights: Vec<f64>,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub noise: f64,
    pub n_train: usize,
    pub n_eval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            classes: 16,
            features: 32,
            dim: 16,
            r_q: 16,
            r_c: 64,
            ladder: BudgetLadder::default_ladder(),
            tau: 0.03,
            weights: vec![1.0; 5],
            lr: 0.05,
            steps: 500,
            batch_size: 32,
            seed: 7,
            noise: 0.1,
            n_train: 2048,
            n_eval: 256,
        }
    }
}

const KEYS: &[&str] = &[
    "classes",
    "features",
    "dim",
    "r_q",
    "r_c",
    "ladder",
    "tau",
    "weights",
    "lr",
    "steps",
    "batch_size",
    "seed",
    "noise",
    "n_train",
    "n_eval",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

impl TrainConfig {
    /// A few-second configuration used by unit tests.
    #[doc(hidden)]
    pub fn small_for_tests() -> Self {
        Self {
            classes: 4,
            features: 6,
            dim: 4,
            r_q: 2,
            r_c: 4,
            ladder: "1:1,2:4".parse().expect("static ladder"),
            tau: 0.1,
            weights: vec![1.0, 1.0],
            lr: 0.05,
            steps: 10,
            batch_size: 8,
            seed: 3,
            noise: 0.1,
            n_train: 64,
            n_eval: 16,
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            classes: self.classes,
            features: self.features,
            n_train: self.n_train,
            n_eval: self.n_eval,
            noise_sigma: self.noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_ladder(self.ladder.groups(), self.r_q, self.r_c)?;
        if self.weights.len() != self.ladder.len() {
            return Err(Error::Config(format!(
                "{} weights for {} ladder groups",
                self.weights.len(),
                self.ladder.len()
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::NonPositiveTemperature(self.tau));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        for (name, v) in [
            ("features", self.features),
            ("dim", self.dim),
            ("batch_size", self.batch_size),
            ("n_eval", self.n_eval),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.batch_size > self.n_train {
            return Err(Error::Config(format!(
                "batch_size {} exceeds n_train {}",
                self.batch_size, self.n_train
            )));
        }
        if self.n_eval < 5 {
            return Err(Error::Config("n_eval must be at least 5 for NDCG@5".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "classes" => self.classes = parse_num(key, value)?,
            "features" => self.features = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "r_q" => self.r_q = parse_num(key, value)?,
            "r_c" => self.r_c = parse_num(key, value)?,
            "ladder" => self.ladder = value.parse()?,
            "tau" => self.tau = parse_num(key, value)?,
            "weights" => {
                self.weights = value
                    .split(',')
                    .map(|w| parse_num(key, w.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }
            "lr" => self.lr = parse_num(key, value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "noise" => self.noise = parse_num(key, value)?,
            "n_train" => self.n_train = parse_num(key, value)?,
            "n_eval" => self.n_eval = parse_num(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown config key '{other}' (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Defaults overridden by `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut weights_given = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            weights_given |= key == "weights";
            config.set(key, value)?;
        }
        if !weights_given {
            config.weights = vec![1.0; config.ladder.len()];
        }
        Ok(config)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let weights: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "classes = {}", self.classes);
        let _ = writeln!(out, "features = {}", self.features);
        let _ = writeln!(out, "dim = {}", self.dim);
        let _ = writeln!(out, "r_q = {}", self.r_q);
        let _ = writeln!(out, "r_c = {}", self.r_c);
        let _ = writeln!(out, "ladder = {}", self.ladder);
        let _ = writeln!(out, "tau = {}", self.tau);
        let _ = writeln!(out, "weights = {}", weights.join(","));
        let _ = writeln!(out, "lr = {}", self.lr);
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "noise = {}", self.noise);
        let _ = writeln!(out, "n_train = {}", self.n_train);
        let _ = writeln!(out, "n_eval = {}", self.n_eval);
        out
    }
}
