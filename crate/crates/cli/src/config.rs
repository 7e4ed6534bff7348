//! Run configuration: a TOML file whose sections mirror the library configs,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use hetembed_core::eval::LogisticConfig;
use hetembed_core::synth::SynthConfig;
use hetembed_core::{OnlineConfig, TrainConfig, TrainedModel, WalkConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Failure, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory with `schema.txt` (optional), `nodes.tsv`, `edges.tsv` and
    /// `content.tsv` (optional).
    pub graph: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Per-epoch training log (CSV).
    pub log: Option<PathBuf>,
    /// Directory with delta `nodes.tsv`, `edges.tsv`, `content.tsv`.
    pub delta: Option<PathBuf>,
    /// Directory with evaluation event files.
    pub events: Option<PathBuf>,
    /// `label<TAB>category` file for projector metadata.
    pub categories: Option<PathBuf>,
    /// Embeddings export (`label<TAB>v_1 … v_d`).
    pub embeddings: Option<PathBuf>,
}

/// Online update settings. Unlike [`OnlineConfig`] the window is optional;
/// by default it is the window the model was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSettings {
    pub walks: usize,
    pub window: Option<usize>,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scheme: Option<String>,
}

impl Default for OnlineSettings {
    fn default() -> Self {
        let d = OnlineConfig::default();
        OnlineSettings {
            walks: d.walks,
            window: None,
            learning_rate: d.learning_rate,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            scheme: None,
        }
    }
}

impl OnlineSettings {
    pub fn resolve(&self, model: &TrainedModel, seed: u64) -> OnlineConfig {
        OnlineConfig {
            walks: self.walks,
            window: self.window.unwrap_or(model.walk_config.window),
            learning_rate: self.learning_rate,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            scheme: self.scheme.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Cut-offs for HitRatio@k and Recall@k.
    pub k: Vec<usize>,
    /// Sampled negatives per ranking query.
    pub negatives: usize,
    /// Draw one negative list for all queries instead of one per query.
    pub shared_negatives: bool,
    pub logistic: LogisticConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            k: vec![10],
            negatives: 100,
            shared_negatives: false,
            logistic: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; when set it replaces the seed of every section.
    pub seed: Option<u64>,
    /// Worker threads; unset means one per core.
    pub workers: Option<usize>,
    pub paths: Paths,
    pub train: TrainConfig,
    pub walk: WalkConfig,
    pub online: OnlineSettings,
    pub eval: EvalSettings,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Failure::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(format!("in {}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Push the master seed into every section.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.train.seed = s;
            self.walk.seed = s;
            self.synth.seed = s;
        }
    }

    /// Seed for components without a section of their own (online updates,
    /// evaluation sampling).
    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }
}

/// The path at `slot`, or a config error naming the flag that sets it.
pub fn require<'a>(slot: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    slot.as_deref()
        .ok_or_else(|| Failure::config(format!("missing required path: pass --{flag} or set it under [paths]")))
}

/// As [`require`], and the path must exist.
pub fn require_existing<'a>(slot: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    let p = require(slot, flag)?;
    if !p.exists() {
        return Err(Failure::config(format!("--{flag}: {} does not exist", p.display())));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hetembed_core::Variant;

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.seed = Some(42);
        cfg.paths.graph = Some("data/graph".into());
        cfg.train.variant = Variant::HsgSr;
        cfg.train.tolerance = f64::INFINITY;
        cfg.walk.schemes = vec!["APA".into()];
        cfg.online.window = Some(3);
        cfg.online.scheme = Some("APVPA".into());
        cfg.eval.k = vec![1, 5, 10];
        cfg.synth.venue_cross_prob = Some(0.3);
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_toml()).unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_use_defaults() {
        let cfg = RunConfig::parse("seed = 3\n[train]\ndim = 16\nvariant = \"hsg\"\n[walk]\nwindow = 2\n").unwrap();
        assert_eq!(cfg.train.dim, 16);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.walk.window, 2);
        assert_eq!(cfg.walk.walk_length, WalkConfig::default().walk_length);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[train]\ndimension = 16\n").is_err());
        assert!(RunConfig::parse("sed = 1\n").is_err());
    }

    #[test]
    fn master_seed_reaches_every_section() {
        let mut cfg = RunConfig::parse("seed = 9\n[train]\nseed = 1\n").unwrap();
        cfg.apply_seed();
        assert_eq!((cfg.train.seed, cfg.walk.seed, cfg.synth.seed), (9, 9, 9));
        assert_eq!(cfg.master_seed(), 9);
    }
}
