//! TOML experiment configuration.
//!
//! Every key is optional and unknown keys are rejected. Paths are resolved
//! against the directory holding the config file.
//!
//! ```toml
//! master_seed = 1
//! variants = ["RIS", "POINT_TO_POINT", "UPPER_BOUND"]
//! seeds = [1, 2, 3]
//!
//! [data]
//! train_corpus = "data/train.txt"
//! test_corpus = "data/test.txt"
//!
//! [model]
//! max_len = 22
//!
//! [channel]
//! eval_snr_db = [0, 6, 12]
//! epsilon = [0.0, 0.1]
//!
//! [training]
//! optimizer = "adam"
//! learning_rate = 0.001
//!
//! [output]
//! checkpoint_dir = "runs"
//! results = "runs/results.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::{DataConfig, ExperimentConfig, OptimizerConfig, OptimizerKind, Paths, SystemVariant};
use crate::model::ShapeConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    master_seed: Option<u64>,
    variants: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    data: RawData,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    channel: RawChannel,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    train_corpus: Option<PathBuf>,
    test_corpus: Option<PathBuf>,
    min_freq: Option<usize>,
    max_vocab: Option<usize>,
    val_fraction: Option<f64>,
    max_train_sentences: Option<usize>,
    max_test_sentences: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    batch_size: Option<usize>,
    max_len: Option<usize>,
    embed_dim: Option<usize>,
    feature_dim: Option<usize>,
    symbols_per_token: Option<usize>,
    num_layers: Option<usize>,
    num_heads: Option<usize>,
    ffn_width: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    ris_elements: Option<usize>,
    train_snr_db: Option<f64>,
    eval_snr_db: Option<Vec<f64>>,
    epsilon: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    optimizer: Option<String>,
    learning_rate: Option<f64>,
    momentum: Option<f64>,
    clip_norm: Option<f64>,
    epochs: Option<usize>,
    eval_batch_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    checkpoint_dir: Option<PathBuf>,
    results: Option<PathBuf>,
}

/// Parses config text; relative paths are joined onto `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    let d = ExperimentConfig::default();
    let resolve = |p: Option<PathBuf>, default: &str| {
        let p = p.unwrap_or_else(|| PathBuf::from(default));
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let variants = match raw.variants {
        Some(v) => v.iter().map(|s| s.parse()).collect::<Result<Vec<SystemVariant>>>()?,
        None => d.variants,
    };
    let m = raw.model;
    let embed_dim = m.embed_dim.unwrap_or(d.shape.embed_dim);
    let shape = ShapeConfig {
        batch_size: m.batch_size.unwrap_or(d.shape.batch_size),
        max_len: m.max_len.unwrap_or(d.shape.max_len),
        embed_dim,
        feature_dim: m.feature_dim.unwrap_or(embed_dim),
        symbols_per_token: m.symbols_per_token.unwrap_or(d.shape.symbols_per_token),
        num_layers: m.num_layers.unwrap_or(d.shape.num_layers),
        num_heads: m.num_heads.unwrap_or(d.shape.num_heads),
        ffn_width: m.ffn_width.unwrap_or(d.shape.ffn_width),
        vocab_size: d.shape.vocab_size,
    };
    let t = raw.training;
    let kind = match t.optimizer.as_deref() {
        None | Some("sgd") => OptimizerKind::Sgd,
        Some("adam") => OptimizerKind::Adam,
        Some(other) => return Err(Error::Config(format!("unknown optimizer {other:?}"))),
    };
    let o = OptimizerConfig::default();
    let data = DataConfig {
        min_freq: raw.data.min_freq.unwrap_or(d.data.min_freq),
        max_vocab: raw.data.max_vocab.unwrap_or(d.data.max_vocab),
        val_fraction: raw.data.val_fraction.unwrap_or(d.data.val_fraction),
        max_train_sentences: raw.data.max_train_sentences.or(d.data.max_train_sentences),
        max_test_sentences: raw.data.max_test_sentences.or(d.data.max_test_sentences),
    };
    let config = ExperimentConfig {
        master_seed: raw.master_seed.unwrap_or(d.master_seed),
        shape,
        variants,
        seeds: raw.seeds.unwrap_or(d.seeds),
        ris_elements: raw.channel.ris_elements.unwrap_or(d.ris_elements),
        train_snr_db: raw.channel.train_snr_db.unwrap_or(d.train_snr_db),
        eval_snrs_db: raw.channel.eval_snr_db.unwrap_or(d.eval_snrs_db),
        epsilons: raw.channel.epsilon.unwrap_or(d.epsilons),
        optimizer: OptimizerConfig {
            kind,
            learning_rate: t.learning_rate.unwrap_or(o.learning_rate),
            momentum: t.momentum.unwrap_or(o.momentum),
            clip_norm: t.clip_norm.unwrap_or(o.clip_norm),
            epochs: t.epochs.unwrap_or(o.epochs),
        },
        data,
        eval_batch_size: t.eval_batch_size.unwrap_or(d.eval_batch_size),
        paths: Paths {
            train_corpus: resolve(raw.data.train_corpus, "data/train.txt"),
            test_corpus: resolve(raw.data.test_corpus, "data/test.txt"),
            checkpoint_dir: resolve(raw.output.checkpoint_dir, "runs"),
            results: resolve(raw.output.results, "runs/results.csv"),
        },
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = parse_config("", Path::new("/base")).unwrap();
        let d = ExperimentConfig::default();
        assert_eq!(c.shape, d.shape);
        assert_eq!(c.eval_snrs_db, d.eval_snrs_db);
        assert_eq!(c.paths.train_corpus, Path::new("/base/data/train.txt"));
    }

    #[test]
    fn overrides_and_rejections() {
        let c = parse_config(
            "seeds = [4]\nvariants = [\"RIS\"]\n[model]\nembed_dim = 16\nnum_heads = 2\n[training]\noptimizer = \"adam\"\n[output]\nresults = \"/abs/r.csv\"\n",
            Path::new("b"),
        )
        .unwrap();
        assert_eq!(c.seeds, vec![4]);
        assert_eq!(c.variants, vec![SystemVariant::Ris]);
        assert_eq!(c.shape.feature_dim, 16);
        assert_eq!(c.optimizer.kind, OptimizerKind::Adam);
        assert_eq!(c.paths.results, Path::new("/abs/r.csv"));
        for bad in [
            "typo = 1",
            "[model]\nembeddim = 3",
            "variants = [\"MIMO\"]",
            "[model]\nembed_dim = 30\nnum_heads = 4",
            "[training]\noptimizer = \"rmsprop\"",
            "seeds = []",
            "[channel]\nepsilon = [-0.1]",
        ] {
            assert!(
                matches!(parse_config(bad, Path::new(".")), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }
}
