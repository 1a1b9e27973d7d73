//! Run configuration: one human-readable TOML file per run, every key
//! optional with sensible defaults, CLI flags overriding config values. Each
//! run writes a manifest — the fully resolved config plus a `[run]` echo —
//! that is itself a valid config file, so re-running a manifest replays the
//! run exactly.

use crate::attack::{AttackConfig, AttackMethod, Projection};
use crate::codec::CodecTrainConfig;
use crate::corpus::CorpusSpec;
use crate::mil::ClassifierHyperparams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    /// Global seed; sections without an explicit seed inherit it.
    pub seed: u64,
    /// Worker threads for bag-level parallelism (0 = library default).
    pub threads: usize,
    pub corpus: CorpusSpec,
    pub autoencoder: CodecTrainConfig,
    pub classifier: ClassifierSection,
    #[serde(rename = "adv-train")]
    pub adv_train: AdvTrainSection,
    pub attack: AttackSection,
    #[serde(rename = "cross-eval")]
    pub cross_eval: CrossEvalSection,
    /// Present only in manifests written by a previous run.
    pub run: Option<RunEcho>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSection {
    #[serde(flatten)]
    pub hp: ClassifierHyperparams,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// One trained checkpoint per seed; reports carry mean +/- std columns.
    pub seeds: Vec<u64>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            hp: ClassifierHyperparams::default(),
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.5,
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvTrainSection {
    /// "standard", "latent" or "full".
    pub mode: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
    /// Inner-maximization attack; defaults depend on the mode.
    pub attack: Option<AttackSpec>,
}

impl Default for AdvTrainSection {
    fn default() -> Self {
        AdvTrainSection {
            mode: "full".into(),
            epochs: 6,
            batch_size: 32,
            learning_rate: 0.5,
            seeds: vec![0, 1, 2],
            attack: None,
        }
    }
}

impl AdvTrainSection {
    /// Mode-dependent default attack: full mode perturbs far enough to decode
    /// different strings; latent-only training uses a much smaller step.
    pub fn attack_spec(&self) -> AttackSpec {
        self.attack.clone().unwrap_or_else(|| {
            let alpha = if self.mode == "latent" { 0.1 } else { 1.0 };
            AttackSpec { alpha, max_iters: 8, ..Default::default() }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSection {
    pub grid: Vec<AttackSpec>,
    /// Cap on evaluation bags (first N of the dataset file).
    pub eval_limit: usize,
    /// Adversarial example pairs dumped with change markers.
    pub dump_samples: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        let mut grid = vec![AttackSpec::fgsm(0.01, 1.0)];
        for &projection in &["l2", "linf"] {
            for &alpha in &[0.5, 1.0, 2.0] {
                for &eps in &[2.0, 5.0, 10.0] {
                    grid.push(AttackSpec::pgd(alpha, eps, projection));
                }
            }
        }
        AttackSection { grid, eval_limit: 250, dump_samples: 12 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossEvalSection {
    pub attack: AttackSpec,
    pub eval_limit: usize,
}

impl Default for CrossEvalSection {
    fn default() -> Self {
        CrossEvalSection { attack: AttackSpec::pgd(1.0, 10.0, "linf"), eval_limit: 200 }
    }
}

/// TOML-facing attack description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSpec {
    /// "pgd" or "fgsm".
    pub method: String,
    pub alpha: f64,
    pub eps: f64,
    /// "l2", "linf" or "none".
    pub projection: String,
    pub delta_eps: f64,
    pub eps_max: f64,
    pub max_iters: usize,
    pub gamma: f64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            method: "pgd".into(),
            alpha: 1.0,
            eps: 10.0,
            projection: "linf".into(),
            delta_eps: 0.01,
            eps_max: 1.0,
            max_iters: 50,
            gamma: 1e-12,
        }
    }
}

impl AttackSpec {
    pub fn pgd(alpha: f64, eps: f64, projection: &str) -> Self {
        AttackSpec { alpha, eps, projection: projection.into(), ..Default::default() }
    }

    pub fn fgsm(delta_eps: f64, eps_max: f64) -> Self {
        AttackSpec { method: "fgsm".into(), delta_eps, eps_max, ..Default::default() }
    }

    pub fn to_attack_config(&self) -> Result<AttackConfig, String> {
        let method = match self.method.as_str() {
            "pgd" | "modified-pgd" => AttackMethod::ModifiedPgd,
            "fgsm" | "modified-fgsm" => AttackMethod::ModifiedFgsm,
            other => return Err(format!("unknown attack method {other:?}")),
        };
        let projection = match self.projection.as_str() {
            "l2" => Projection::L2,
            "linf" => Projection::Linf,
            "none" => Projection::None,
            other => return Err(format!("unknown projection {other:?}")),
        };
        let config = match method {
            AttackMethod::ModifiedPgd => AttackConfig {
                method,
                alpha: self.alpha,
                eps: self.eps,
                eps_max: self.eps,
                delta_eps: self.eps,
                max_iters: self.max_iters,
                projection,
                gamma: self.gamma,
            },
            AttackMethod::ModifiedFgsm => AttackConfig {
                method,
                alpha: 0.0,
                eps: self.delta_eps,
                eps_max: self.eps_max,
                delta_eps: self.delta_eps,
                max_iters: 1,
                projection: Projection::None,
                gamma: self.gamma,
            },
        };
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

/// Echo of how a run was invoked, written into its manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEcho {
    pub subcommand: String,
    pub out_dir: String,
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    /// Manifest contents for a finished run: this config, fully resolved,
    /// plus the run echo.
    pub fn manifest(&self, subcommand: &str, out_dir: &Path, inputs: &[(&str, &Path)]) -> RunConfig {
        let mut m = self.clone();
        m.run = Some(RunEcho {
            subcommand: subcommand.to_string(),
            out_dir: out_dir.display().to_string(),
            inputs: inputs
                .iter()
                .map(|(k, v)| (k.to_string(), v.display().to_string()))
                .collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        });
        m
    }
}

pub fn write_manifest(path: &Path, manifest: &RunConfig) -> Result<(), std::io::Error> {
    let text = toml::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mil::AggregatorKind;

    #[test]
    fn empty_config_parses_with_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.classifier.hp.heads, 8);
        assert_eq!(cfg.autoencoder.hp.latent_dim, 128);
        assert_eq!(cfg.attack.grid.len(), 19);
    }

    #[test]
    fn partial_sections_override_only_named_keys() {
        let cfg: RunConfig = toml::from_str(
            "seed = 7\n[autoencoder]\nlatent_dim = 64\nepochs = 3\n[classifier]\nheads = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.autoencoder.hp.latent_dim, 64);
        assert_eq!(cfg.autoencoder.hp.embed_dim, 32);
        assert_eq!(cfg.autoencoder.epochs, 3);
        assert_eq!(cfg.classifier.hp.heads, 2);
        assert_eq!(cfg.classifier.hp.hidden, 128);
    }

    #[test]
    fn attack_specs_convert_and_validate() {
        let pgd = AttackSpec::pgd(2.0, 10.0, "linf").to_attack_config().unwrap();
        assert_eq!(pgd.label(), "PGD(alpha: 2.00, eps: 10.00, projection: linf)");
        let fgsm = AttackSpec::fgsm(0.01, 1.0).to_attack_config().unwrap();
        assert_eq!(fgsm.label(), "FGSM(delta: 0.01, max_eps: 1.00)");
        let bad = AttackSpec { method: "nope".into(), ..Default::default() };
        assert!(bad.to_attack_config().is_err());
    }

    #[test]
    fn manifest_roundtrips_as_config() {
        let cfg = RunConfig::default();
        let manifest = cfg.manifest("gen-data", Path::new("/tmp/out"), &[]);
        let text = toml::to_string_pretty(&manifest).unwrap();
        let reparsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(reparsed.run.as_ref().unwrap().subcommand, "gen-data");
        assert_eq!(reparsed.classifier.seeds, cfg.classifier.seeds);
        let text2 = toml::to_string_pretty(&reparsed).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn mean_max_aggregator_parses() {
        let cfg: RunConfig = toml::from_str("[classifier]\naggregator = \"mean-max\"\n").unwrap();
        assert_eq!(cfg.classifier.hp.aggregator, AggregatorKind::MeanMax);
    }
}
