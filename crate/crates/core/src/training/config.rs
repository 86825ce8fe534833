use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Line-based `key = value` settings; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    i + 1
                ))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            values.insert(k.to_string(), v.to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Typed lookup of `key`.
    pub fn value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    /// `section.key` if present, else the bare `key`.
    pub fn scoped<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.value(&format!("{section}.{key}"))? {
            Some(v) => Ok(Some(v)),
            None => self.value(key),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Network {
    Cgan,
    Encoder,
    Fr,
    Age,
}

impl Network {
    pub const ALL: [Network; 4] = [Network::Cgan, Network::Encoder, Network::Fr, Network::Age];

    pub fn name(self) -> &'static str {
        match self {
            Network::Cgan => "cgan",
            Network::Encoder => "encoder",
            Network::Fr => "fr",
            Network::Age => "age",
        }
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Network {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown network `{s}` (cgan|encoder|fr|age)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Learning rate of the trained network (the generator, for the cGAN).
    pub lr: f64,
    /// Discriminator learning rate (cGAN only).
    pub lr_d: f64,
    /// Synthetic pair count (encoder only).
    pub n_pairs: usize,
    /// Emit a progress log line every this many steps.
    pub log_interval: usize,
}

impl TrainConfig {
    pub fn defaults(net: Network) -> Self {
        let base = Self {
            epochs: 10,
            batch_size: 64,
            seed: 42,
            lr: 1e-3,
            lr_d: 2e-4,
            n_pairs: 20_000,
            log_interval: 50,
        };
        match net {
            Network::Cgan => Self {
                epochs: 30,
                lr: 2e-4,
                ..base
            },
            Network::Encoder => Self { epochs: 12, ..base },
            Network::Fr => Self { epochs: 15, ..base },
            Network::Age => Self { epochs: 6, ..base },
        }
    }

    /// Defaults overridden by `key` then `<net>.key` entries.
    pub fn from_settings(net: Network, s: &Settings) -> Result<Self> {
        let mut c = Self::defaults(net);
        let n = net.name();
        if let Some(v) = s.scoped(n, "epochs")? {
            c.epochs = v;
        }
        if let Some(v) = s.scoped(n, "batch_size")? {
            c.batch_size = v;
        }
        if let Some(v) = s.scoped(n, "seed")? {
            c.seed = v;
        }
        if let Some(v) = s.value(&format!("{n}.lr"))? {
            c.lr = v;
        }
        if let Some(v) = s.value(&format!("{n}.lr_d"))? {
            c.lr_d = v;
        }
        if let Some(v) = s.scoped(n, "n_pairs")? {
            c.n_pairs = v;
        }
        if let Some(v) = s.scoped(n, "log_interval")? {
            c.log_interval = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(self.lr > 0.0 && self.lr_d > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.log_interval == 0 {
            return Err(Error::Config("log_interval must be positive".into()));
        }
        Ok(())
    }
}
