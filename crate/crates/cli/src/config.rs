//! Run settings: an optional `key = value` file overlaid by command-line
//! flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lrbn::evaluation::CslConfig;
use lrbn::inference::{IcmConfig, SweepOrder};
use lrbn::learning::{FinetuneConfig, TrainConfig};

use crate::CliError;

pub const TRAIN_KEYS: &[&str] = &[
    "icm_order",
    "icm_sweeps",
    "seed",
    "lr",
    "batch",
    "max_epochs",
    "validation_size",
    "patience",
    "warm_start",
];
pub const FINETUNE_KEYS: &[&str] = &["alternations", "tol"];
pub const DATA_KEYS: &[&str] = &["data", "labels", "binarize", "normalize"];
pub const CSL_KEYS: &[&str] = &["csl_samples", "csl_repetitions"];
pub const IMAGE_KEYS: &[&str] = &["image_rows", "image_cols"];

#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Reads `file` (if any), rejecting keys outside `allowed`, then applies
    /// every flag that was given.
    pub fn load(
        file: Option<&Path>,
        allowed: &[&str],
        flags: Vec<(&'static str, Option<String>)>,
    ) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            values = parse_file(&text, allowed)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        for (key, value) in flags {
            debug_assert!(
                allowed.contains(&key),
                "flag {key} missing from the key list"
            );
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        Ok(Self { values })
    }

    /// Copy with `defaults` filled in for every key that was not set.
    pub fn resolved(&self, defaults: Vec<(&str, String)>) -> Self {
        let mut values = self.values.clone();
        for (k, v) in defaults {
            values.entry(k.to_string()).or_insert(v);
        }
        Self { values }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("bad value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.get(key)
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        self.parse_or(key, false)
    }

    /// `200,200` → `[200, 200]`.
    pub fn sizes(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| CliError::Usage(format!("bad layer size `{s}` in `{key}`")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn icm(&self) -> Result<IcmConfig, CliError> {
        let d = IcmConfig::default();
        let sweep_order = match self.get("icm_order") {
            None | Some("ascending") => SweepOrder::Ascending,
            Some("seeded") => SweepOrder::SeededPermutation,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "bad value `{other}` for `icm_order`: expected `ascending` or `seeded`"
                )))
            }
        };
        let cfg = IcmConfig {
            max_sweeps: self.parse_or("icm_sweeps", d.max_sweeps)?,
            sweep_order,
            rng_seed: self.parse_or("seed", d.rng_seed)?,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            learning_rate: self.parse_or("lr", d.learning_rate)?,
            minibatch_size: self.parse_or("batch", d.minibatch_size)?,
            max_epochs: self.parse_or("max_epochs", d.max_epochs)?,
            icm: self.icm()?,
            rng_seed: self.parse_or("seed", d.rng_seed)?,
            validation_size: self.parse_or("validation_size", d.validation_size)?,
            early_stop_patience: self.parse_or("patience", d.early_stop_patience)?,
            warm_start: self.parse_or("warm_start", d.warm_start)?,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    pub fn finetune(&self) -> Result<FinetuneConfig, CliError> {
        let d = FinetuneConfig::default();
        Ok(FinetuneConfig {
            train: self.train()?,
            alternations: self.parse_or("alternations", d.alternations)?,
            convergence_tol: self.parse_or("tol", d.convergence_tol)?,
        })
    }

    pub fn csl(&self) -> Result<CslConfig, CliError> {
        let d = CslConfig::default();
        let cfg = CslConfig {
            sample_count: self.parse_or("csl_samples", d.sample_count)?,
            repetitions: self.parse_or("csl_repetitions", d.repetitions)?,
            rng_seed: self.parse_or("seed", d.rng_seed)?,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn usage(e: lrbn::LrbnError) -> CliError {
    CliError::Usage(e.to_string())
}

fn parse_file(text: &str, allowed: &[&str]) -> Result<BTreeMap<String, String>, String> {
    let mut values = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if !allowed.contains(&key) {
            return Err(format!("line {}: unknown key `{key}`", n + 1));
        }
        if values.insert(key.to_string(), value.to_string()).is_some() {
            return Err(format!("line {}: `{key}` set twice", n + 1));
        }
    }
    Ok(values)
}
