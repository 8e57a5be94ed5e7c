use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{SynthConfig, DEFAULT_TRIM_FLOOR_DB, DEFAULT_TRIM_FRAME_S};
use crate::ensemble::EnsembleConfig;
use crate::evaluation::CvConfig;
use crate::features::StftConfig;
use crate::network::Architecture;
use crate::sampling::{DEFAULT_CROP_S, DEFAULT_EVAL_CAP};
use crate::trainer::TrainConfig;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Crop length in seconds.
    pub crop_s: f64,
    /// Maximum crops scored per test speaker.
    pub eval_cap: usize,
    pub trim: bool,
    pub trim_frame_s: f64,
    pub trim_floor_db: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            crop_s: DEFAULT_CROP_S,
            eval_cap: DEFAULT_EVAL_CAP,
            trim: true,
            trim_frame_s: DEFAULT_TRIM_FRAME_S,
            trim_floor_db: DEFAULT_TRIM_FLOOR_DB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    /// Random machine subsets drawn per ensemble size.
    pub combinations: usize,
    /// Ensemble sizes to evaluate; empty means every size from 1 to the pool.
    pub sizes: Vec<usize>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            combinations: 50,
            sizes: Vec::new(),
        }
    }
}

/// Everything a run depends on. Every command echoes the resolved value as
/// `config.toml` in its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub synth: SynthConfig,
    pub sampling: SamplingConfig,
    pub stft: StftConfig,
    pub network: Architecture,
    pub train: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub crossval: CvConfig,
    pub curve: CurveConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthConfig::default(),
            sampling: SamplingConfig::default(),
            stft: StftConfig::default(),
            network: Architecture::default(),
            train: TrainConfig::default(),
            ensemble: EnsembleConfig::default(),
            crossval: CvConfig::default(),
            curve: CurveConfig::default(),
        }
    }
}

/// Streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub synth: u64,
    pub sampling: u64,
    pub init: u64,
    pub shuffle: u64,
    pub ties: u64,
    pub folds: u64,
    pub curve: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Defaults, then `file`, then `key=value` overrides, then `seed`.
    pub fn resolve(file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::read(p)?,
            None => Self::default(),
        };
        for o in overrides {
            cfg = cfg.with_override(o)?;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `section.key=value` assignment. The value is read as a TOML
    /// literal, falling back to a bare string.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut root = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut path: Vec<&str> = key.split('.').collect();
        let leaf = path.pop().filter(|l| !l.is_empty()).ok_or_else(|| Error::Config("empty key".into()))?;
        let mut table = &mut root;
        for part in &path {
            table = match table.get_mut(*part) {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(Error::Config(format!("unknown section `{part}` in `{key}`"))),
            };
        }
        // seeds inside sections are derived, so they are not settable
        if !table.contains_key(leaf) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        table.insert(leaf.to_string(), value);
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("`{key}`: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate(self.synth.sample_rate)?;
        self.train.validate()?;
        self.ensemble.validate()?;
        if !(self.sampling.crop_s > 0.0) {
            return Err(Error::Config("sampling.crop_s must be positive".into()));
        }
        if self.sampling.eval_cap < 1 {
            return Err(Error::Config("sampling.eval_cap must be at least 1".into()));
        }
        if !(self.sampling.trim_frame_s > 0.0) {
            return Err(Error::Config("sampling.trim_frame_s must be positive".into()));
        }
        if self.crossval.folds < 1 {
            return Err(Error::Config("crossval.folds must be at least 1".into()));
        }
        if self.curve.combinations < 1 {
            return Err(Error::Config("curve.combinations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        let d = |i| rng::derive(self.seed, &[i]);
        Seeds {
            synth: self.seed,
            sampling: d(1),
            init: d(2),
            shuffle: d(3),
            ties: d(4),
            folds: d(5),
            curve: d(6),
        }
    }

    /// Training settings with the derived seeds filled in.
    pub fn train_config(&self) -> TrainConfig {
        let s = self.seeds();
        TrainConfig {
            seed: s.init,
            shuffle_seed: s.shuffle,
            ..self.train
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            tie_seed: self.seeds().ties,
            ..self.ensemble
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            seed: self.seeds().folds,
            ..self.crossval
        }
    }
}
