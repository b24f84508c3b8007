//! Run configuration: UTF-8 `key = value` lines, `#` starts a comment.
//!
//! | key | default |
//! |-----|---------|
//! | `texture` | required, repeat for several sources |
//! | `arch` | `sgan5` (`sgan4`, `sgan5`, `sgan6` or `custom`) |
//! | `d` | preset value; required for `custom` |
//! | `g_hidden` | required for `custom`, comma separated generator widths |
//! | `batch_size` | 32 |
//! | `steps` | 1000 |
//! | `lr`, `beta1`, `beta2` | 2e-4, 0.5, 0.999 |
//! | `z_l`, `z_m` | 4, 4 |
//! | `checkpoint_every` | 100 |
//! | `seed` | 0 |
//! | `out_dir` | `run` |
//! | `loss_log` | `<out_dir>/loss.log` |
//!
//! Relative paths resolve against the directory holding the config file.
//! Later assignments replace earlier ones except `texture`, which accumulates.
//! Overrides applied with [`RunConfig::set`] after parsing win over the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::NetworkSpec;
use crate::optim::AdamConfig;
use crate::trainer::{RunPaths, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub textures: Vec<PathBuf>,
    pub arch: String,
    pub d: Option<usize>,
    pub g_hidden: Option<Vec<usize>>,
    pub batch_size: usize,
    pub steps: u64,
    pub adam: AdamConfig,
    pub z_extent: (usize, usize),
    pub checkpoint_every: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub loss_log: Option<PathBuf>,
    base: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            textures: Vec::new(),
            arch: "sgan5".into(),
            d: None,
            g_hidden: None,
            batch_size: 32,
            steps: 1000,
            adam: AdamConfig::default(),
            z_extent: (4, 4),
            checkpoint_every: 100,
            seed: 0,
            out_dir: PathBuf::from("run"),
            loss_log: None,
            base: PathBuf::new(),
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> std::result::Result<V, String> {
    value.parse().map_err(|_| format!("invalid value {value:?} for `{key}`"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_str(&text, path, base)
    }

    /// Parses config text; `path` only labels errors.
    pub fn parse_str(text: &str, path: &Path, base: PathBuf) -> Result<Self> {
        let mut cfg = Self { out_dir: base.join("run"), base, ..Self::default() };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config { path: path.to_path_buf(), line: i + 1, reason };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            cfg.assign(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(cfg)
    }

    /// Applies one override. Relative paths here resolve against the working
    /// directory.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let base = std::mem::take(&mut self.base);
        let r = self.assign(key, value);
        self.base = base;
        r.map_err(|reason| Error::Config { path: PathBuf::from("<command line>"), line: 0, reason })
    }

    fn assign(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "texture" => self.textures.push(self.base.join(value)),
            "arch" => match value {
                "sgan4" | "sgan5" | "sgan6" | "custom" => self.arch = value.to_string(),
                _ => return Err(format!("unknown arch {value:?}, expected sgan4, sgan5, sgan6 or custom")),
            },
            "d" => self.d = Some(parse(key, value)?),
            "g_hidden" => {
                let widths = value
                    .split(',')
                    .map(|w| parse(key, w.trim()))
                    .collect::<std::result::Result<Vec<usize>, _>>()?;
                self.g_hidden = Some(widths);
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "lr" => self.adam.lr = parse(key, value)?,
            "beta1" => self.adam.beta1 = parse(key, value)?,
            "beta2" => self.adam.beta2 = parse(key, value)?,
            "z_l" => self.z_extent.0 = parse(key, value)?,
            "z_m" => self.z_extent.1 = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = self.base.join(value),
            "loss_log" => self.loss_log = Some(self.base.join(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<NetworkSpec> {
        let spec = if self.arch == "custom" {
            let d = self.d.ok_or_else(|| Error::MissingKey("d".into()))?;
            let hidden = self.g_hidden.as_ref().ok_or_else(|| Error::MissingKey("g_hidden".into()))?;
            NetworkSpec::from_hidden(d, hidden)?
        } else {
            if self.g_hidden.is_some() {
                return Err(Error::Invalid(format!("g_hidden only applies to arch = custom, not {}", self.arch)));
            }
            let mut spec = NetworkSpec::preset(&self.arch).expect("validated arch");
            if let Some(d) = self.d {
                spec.d = d;
            }
            spec
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        if self.textures.is_empty() {
            return Err(Error::MissingKey("texture".into()));
        }
        let cfg = TrainConfig {
            spec: self.spec()?,
            batch_size: self.batch_size,
            steps: self.steps,
            adam: self.adam,
            z_extent: self.z_extent,
            checkpoint_every: self.checkpoint_every,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn paths(&self) -> RunPaths {
        let mut p = RunPaths::new(&self.out_dir);
        if let Some(log) = &self.loss_log {
            p.loss_log = log.clone();
        }
        p
    }
}
