//! Flat `key = value` run configuration.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Unknown keys and malformed values are usage errors. Later assignments
//! override earlier ones, so command-line `--set key=value` overrides are
//! applied after the file.

use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::loss::LossConfig;
use crate::model::ModelConfig;
use crate::nn::Norm;
use crate::train::TrainConfig;

/// A documented configuration key.
#[derive(Debug, Clone, Copy)]
pub struct KeyDoc {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const KEYS: &[KeyDoc] = &[
    KeyDoc { key: "alpha", default: "0.5", help: "weight of the flow loss" },
    KeyDoc { key: "beta", default: "5", help: "weight of the edge-aware smoothness loss" },
    KeyDoc { key: "sigma", default: "0.1", help: "edge bandwidth of the smoothness weights" },
    KeyDoc { key: "c", default: "32", help: "generator output divisor (max displacement = extent / 2c)" },
    KeyDoc { key: "latent_dim", default: "2", help: "motion latent size per semantic" },
    KeyDoc { key: "lr", default: "0.0001", help: "Adam learning rate" },
    KeyDoc { key: "epochs", default: "500", help: "training epochs" },
    KeyDoc { key: "batch", default: "4", help: "samples per optimizer step" },
    KeyDoc { key: "seed", default: "0", help: "seed for initialization and sampling" },
    KeyDoc { key: "stride", default: "4", help: "keep one frame in every `stride` when loading clips" },
    KeyDoc { key: "max_steps", default: "0", help: "stop after this many optimizer steps (0 = no limit)" },
    KeyDoc { key: "clip_norm", default: "10", help: "global gradient-norm clip" },
    KeyDoc { key: "enc_widths", default: "16,32,64,64", help: "encoder partial-conv widths" },
    KeyDoc { key: "gen_widths", default: "16,32,64,64", help: "generator down-path widths" },
    KeyDoc { key: "enc_norm", default: "none", help: "encoder normalization (none, instance)" },
    KeyDoc { key: "gen_norm", default: "instance", help: "generator normalization (none, instance)" },
    KeyDoc { key: "flip", default: "encoder", help: "flip protocol (encoder, targets, off)" },
    KeyDoc { key: "tv_frame", default: "generated", help: "frame weighting the smoothness loss (generated, target)" },
];

/// Merged training, loss and model configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>> {
    let w: Vec<usize> = value
        .split(',')
        .map(|s| parse(key, s.trim()))
        .collect::<Result<_>>()?;
    ensure!(!w.is_empty() && w.iter().all(|&x| x > 0), Usage, "`{key}` needs positive widths");
    Ok(w)
}

fn join(w: &[usize]) -> String {
    w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "alpha" => self.loss.alpha = parse(key, v)?,
            "beta" => self.loss.beta = parse(key, v)?,
            "sigma" => self.loss.sigma = parse(key, v)?,
            "c" => self.model.generator.c = parse(key, v)?,
            "latent_dim" => {
                let d = parse(key, v)?;
                self.model.encoder.latent_dim = d;
                self.model.generator.latent_dim = d;
            }
            "lr" => self.train.lr = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch" => self.train.batch = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "stride" => self.train.stride = parse(key, v)?,
            "max_steps" => {
                let n: usize = parse(key, v)?;
                self.train.max_steps = (n > 0).then_some(n);
            }
            "clip_norm" => self.train.clip_norm = parse(key, v)?,
            "enc_widths" => self.model.encoder.widths = parse_widths(key, v)?,
            "gen_widths" => self.model.generator.widths = parse_widths(key, v)?,
            "enc_norm" => self.model.encoder.norm = v.parse::<Norm>()?,
            "gen_norm" => self.model.generator.norm = v.parse::<Norm>()?,
            "flip" => self.train.flip = v.parse()?,
            "tv_frame" => self.train.tv_frame = v.parse()?,
            _ => return Err(Error::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "alpha" => self.loss.alpha.to_string(),
            "beta" => self.loss.beta.to_string(),
            "sigma" => self.loss.sigma.to_string(),
            "c" => self.model.generator.c.to_string(),
            "latent_dim" => self.model.generator.latent_dim.to_string(),
            "lr" => self.train.lr.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "batch" => self.train.batch.to_string(),
            "seed" => self.train.seed.to_string(),
            "stride" => self.train.stride.to_string(),
            "max_steps" => self.train.max_steps.unwrap_or(0).to_string(),
            "clip_norm" => self.train.clip_norm.to_string(),
            "enc_widths" => join(&self.model.encoder.widths),
            "gen_widths" => join(&self.model.generator.widths),
            "enc_norm" => self.model.encoder.norm.to_string(),
            "gen_norm" => self.model.generator.norm.to_string(),
            "flip" => self.train.flip.to_string(),
            "tv_frame" => self.train.tv_frame.to_string(),
            _ => return Err(Error::Usage(format!("unknown config key `{key}`"))),
        })
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Usage(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override `{assignment}` is not `key=value`")))?;
        self.set(k.trim(), v)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Full configuration in the file format.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{} = {}\n", k.key, self.get(k.key).expect("documented key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.train.validate()?;
        self.model.validate()
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let mut s = String::from("Config keys (file: `key = value` per line, `#` comments; --set overrides):\n");
    for k in KEYS {
        s.push_str(&format!("  {:<11} default {:<12} {}\n", k.key, k.default, k.help));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_defaults_match_runtime_defaults() {
        let c = RunConfig::default();
        for k in KEYS {
            let v = c.get(k.key).unwrap();
            let mut probe = RunConfig::default();
            probe.set(k.key, k.default).unwrap();
            assert_eq!(probe, c, "default of `{}` ({} vs {v})", k.key, k.default);
        }
    }

    #[test]
    fn parse_with_comments_and_precedence() {
        let mut c = RunConfig::from_text("# toy\nalpha = 1.5\n\nlr=0.001  # faster\ngen_widths = 8, 16\n").unwrap();
        assert_eq!(c.loss.alpha, 1.5);
        assert_eq!(c.train.lr, 0.001);
        assert_eq!(c.model.generator.widths, vec![8, 16]);
        c.apply_override("lr=0.01").unwrap();
        assert_eq!(c.train.lr, 0.01);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(matches!(RunConfig::from_text("gamma = 1"), Err(Error::Usage(_))));
        assert!(matches!(RunConfig::from_text("alpha = x"), Err(Error::Usage(_))));
        assert!(matches!(RunConfig::from_text("alpha"), Err(Error::Usage(_))));
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("c", "8").unwrap();
        c.set("max_steps", "100").unwrap();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn help_lists_every_key() {
        let h = keys_help();
        for k in KEYS {
            assert!(h.contains(k.key) && h.contains(k.default));
        }
    }
}
