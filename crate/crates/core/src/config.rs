//! One TOML document configures a run. Every section has defaults, unknown
//! keys are rejected, and the resolved document is echoed next to the
//! outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SplitRatios, SynthParams};
use crate::encoders::Combine;
use crate::error::{Error, Result};
use crate::spectral::DEFAULT_MAX_EXACT_N;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub hdnn: HdnnConfig,
    pub wavelet: WaveletConfig,
    pub spectral: SpectralConfig,
    pub fusion: FusionConfig,
    pub text: TextConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Tab-separated interaction file. Mutually exclusive with `synth`.
    pub interactions: Option<PathBuf>,
    pub synth: Option<SynthParams>,
    pub split_seed: u64,
    pub ratios: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            interactions: None,
            synth: None,
            split_seed: 2024,
            ratios: [0.7, 0.1, 0.2],
        }
    }
}

impl DataConfig {
    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.ratios[0],
            val: self.ratios[1],
            test: self.ratios[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { dim: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HdnnConfig {
    pub enabled: bool,
    pub layers: usize,
}

impl Default for HdnnConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            layers: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletModeConfig {
    /// Exact below `spectral.max_exact_n` nodes, Chebyshev above.
    #[default]
    Auto,
    Exact,
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveletConfig {
    pub enabled: bool,
    pub layers: usize,
    pub scale: f64,
    pub combine: Combine,
    pub mode: WaveletModeConfig,
    pub cheb_order: usize,
    /// One filter diagonal shared by all layers instead of one per layer.
    pub shared_filter: bool,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            layers: 3,
            scale: 1.0,
            combine: Combine::Add,
            mode: WaveletModeConfig::Auto,
            cheb_order: 10,
            shared_filter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub max_exact_n: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            max_exact_n: DEFAULT_MAX_EXACT_N,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateFusion {
    #[default]
    Mean,
    /// Convex weight `sigmoid(a)` on the diffusion encoder, `a` learned.
    LearnedScalar,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub late: LateFusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextConfig {
    pub enabled: bool,
    /// Precomputed embeddings; when absent the stream is synthesised.
    pub path_users: Option<PathBuf>,
    pub path_items: Option<PathBuf>,
    pub synth_dim: usize,
    pub synth_noise: f64,
    pub synth_seed: u64,
    /// Scale every text vector to unit Euclidean norm before projection.
    pub normalize: bool,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            path_users: None,
            path_items: None,
            synth_dim: 32,
            synth_noise: 1.0,
            synth_seed: 99,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Weight of the cross-encoder contrastive term.
    pub ssl_weight: f64,
    /// L2 weight on the base embeddings.
    pub reg_weight: f64,
    pub temperature: f64,
    /// Upper bound on entities per contrastive view, drawn from the batch.
    pub ssl_batch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            ssl_weight: 0.1,
            reg_weight: 1e-4,
            temperature: 0.2,
            ssl_batch: 512,
            epochs: 50,
            batch_size: 2048,
            patience: 10,
            seeds: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Cutoff of the NDCG used for early stopping.
    pub val_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![10, 20, 40],
            val_k: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "runs".into() }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative data paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.data.interactions,
            &mut self.text.path_users,
            &mut self.text.path_items,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.data.interactions.is_some() && self.data.synth.is_some() {
            return bad("data.interactions and data.synth are mutually exclusive".into());
        }
        if let Some(s) = &self.data.synth {
            s.validate()?;
        }
        self.data.split_ratios().validate()?;
        if self.model.dim == 0 {
            return bad("model.dim must be positive".into());
        }
        if !self.hdnn.enabled && !self.wavelet.enabled {
            return bad("at least one of hdnn and wavelet must be enabled".into());
        }
        if self.hdnn.enabled && self.hdnn.layers == 0 {
            return bad("hdnn.layers must be at least 1".into());
        }
        if self.wavelet.enabled && self.wavelet.layers == 0 {
            return bad("wavelet.layers must be at least 1".into());
        }
        if !(self.wavelet.scale.is_finite() && self.wavelet.scale > 0.0) {
            return bad("wavelet.scale must be positive".into());
        }
        if self.wavelet.cheb_order == 0 {
            return bad("wavelet.cheb_order must be at least 1".into());
        }
        let t = &self.train;
        for (name, v) in [("train.lr", t.lr), ("train.temperature", t.temperature), ("train.adam_eps", t.adam_eps)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [("train.beta1", t.beta1), ("train.beta2", t.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1)"));
            }
        }
        for (name, v) in [("train.ssl_weight", t.ssl_weight), ("train.reg_weight", t.reg_weight)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        if t.batch_size == 0 || t.ssl_batch == 0 {
            return bad("train.batch_size and train.ssl_batch must be positive".into());
        }
        if t.seeds.is_empty() {
            return bad("train.seeds must not be empty".into());
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) || self.eval.val_k == 0 {
            return bad("eval.ks and eval.val_k must be positive".into());
        }
        if self.text.enabled && self.text.path_users.is_none() != self.text.path_items.is_none() {
            return bad("text.path_users and text.path_items must be given together".into());
        }
        Ok(())
    }

    /// Sets a dotted key such as `hdnn.layers` from a TOML literal.
    pub fn set(&mut self, key: &str, literal: &str) -> Result<()> {
        let mut root = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed: toml::Table = toml::from_str(&format!("v = {literal}"))
            .or_else(|_| toml::from_str(&format!("v = {:?}", literal)))
            .map_err(|e| Error::Config(format!("value `{literal}`: {e}")))?;
        let value = parsed["v"].clone();

        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts.split_last().ok_or_else(|| Error::Config("empty key".into()))?;
        let mut table = &mut root;
        for p in path {
            table = match table.get_mut(*p) {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
            };
        }
        if !table.contains_key(*last) && !Self::is_optional_key(key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        table.insert((*last).to_string(), value);
        let updated: RunConfig = toml::Value::Table(root)
            .try_into()
            .map_err(|e| Error::Config(format!("`{key} = {literal}`: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    fn is_optional_key(key: &str) -> bool {
        matches!(
            key,
            "data.interactions" | "data.synth" | "text.path_users" | "text.path_items"
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.model.dim, 32);
        assert_eq!(cfg.eval.ks, vec![10, 20, 40]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[model]\ndims = 3\n").is_err());
        assert!(RunConfig::from_toml_str("[modle]\ndim = 3\n").is_err());
    }

    #[test]
    fn partial_document_takes_defaults() {
        let cfg = RunConfig::from_toml_str("[hdnn]\nlayers = 2\n").unwrap();
        assert_eq!(cfg.hdnn.layers, 2);
        assert!(cfg.hdnn.enabled);
        assert_eq!(cfg.wavelet.layers, 3);
    }

    #[test]
    fn both_encoders_disabled_is_config_error() {
        let err = RunConfig::from_toml_str("[hdnn]\nenabled = false\n[wavelet]\nenabled = false\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn dotted_set() {
        let mut cfg = RunConfig::default();
        cfg.set("hdnn.layers", "5").unwrap();
        assert_eq!(cfg.hdnn.layers, 5);
        cfg.set("wavelet.combine", "concat").unwrap();
        assert_eq!(cfg.wavelet.combine, Combine::Concat);
        assert!(cfg.set("hdnn.depth", "2").is_err());
        assert!(cfg.set("hdnn.layers", "\"x\"").is_err());
        assert!(cfg.set("model.dim", "0").is_err());
    }
}
