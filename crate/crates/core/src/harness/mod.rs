//! Training, evaluation and sweeps over the three system variants.

mod evaluate;
mod sweep;
mod train;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use autodiff::{Tape, Var};
use num_complex::Complex64;

use crate::channel::{
    align_phases, apply_channel, derotate, effective_gain, perturb_csi, sample_channels, CsiErrorModel, NoiseModel,
};
use crate::error::{Error, Result};
use crate::metrics::PROB_FLOOR;
use crate::model::{BoundTransceiver, ShapeConfig};
use crate::seed::{derive_seed, stream};
use crate::text::{TokenBatch, PAD};

pub use evaluate::{evaluate, evaluate_with_link, EvalCell};
pub use sweep::{summarize, sweep, SummaryRow};
pub use train::{train, train_with_progress, EpochLog, TrainOutcome, TrainingData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemVariant {
    /// Direct path plus the phase-aligned surface.
    Ris,
    /// Direct path only.
    PointToPoint,
    /// Channel bypassed: symbols reach the receiver untouched.
    UpperBound,
}

impl SystemVariant {
    pub const ALL: [SystemVariant; 3] = [
        SystemVariant::Ris,
        SystemVariant::PointToPoint,
        SystemVariant::UpperBound,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SystemVariant::Ris => "RIS",
            SystemVariant::PointToPoint => "POINT_TO_POINT",
            SystemVariant::UpperBound => "UPPER_BOUND",
        }
    }
}

impl fmt::Display for SystemVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SystemVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemVariant::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.1,
            momentum: 0.0,
            clip_norm: 1.0,
            epochs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub min_freq: usize,
    /// Corpus tokens kept, excluding the four reserved ids.
    pub max_vocab: usize,
    pub val_fraction: f64,
    pub max_train_sentences: Option<usize>,
    pub max_test_sentences: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            min_freq: 1,
            max_vocab: 3996,
            val_fraction: 0.05,
            max_train_sentences: Some(10_000),
            max_test_sentences: Some(1_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub train_corpus: PathBuf,
    pub test_corpus: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub results: PathBuf,
}

impl Paths {
    pub fn checkpoint(&self, variant: SystemVariant, seed: u64) -> PathBuf {
        self.checkpoint_dir.join(format!("{variant}_seed{seed}.rsc"))
    }

    pub fn training_log(&self, variant: SystemVariant, seed: u64) -> PathBuf {
        self.checkpoint_dir.join(format!("{variant}_seed{seed}.log"))
    }

    pub fn vocabulary(&self) -> PathBuf {
        self.checkpoint_dir.join("vocab.txt")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// `vocab_size` is overwritten with the size of the built vocabulary.
    pub shape: ShapeConfig,
    pub variants: Vec<SystemVariant>,
    pub seeds: Vec<u64>,
    pub ris_elements: usize,
    pub train_snr_db: f64,
    pub eval_snrs_db: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub optimizer: OptimizerConfig,
    pub data: DataConfig,
    pub eval_batch_size: usize,
    pub paths: Paths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 1,
            shape: ShapeConfig::default(),
            variants: SystemVariant::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            ris_elements: 10,
            train_snr_db: 7.0,
            eval_snrs_db: vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0],
            epsilons: vec![0.0],
            optimizer: OptimizerConfig::default(),
            data: DataConfig::default(),
            eval_batch_size: 100,
            paths: Paths::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.variants.is_empty() || self.seeds.is_empty() {
            return bad("variants and seeds must be non-empty");
        }
        if self.eval_snrs_db.is_empty() || self.epsilons.is_empty() {
            return bad("eval_snr_db and epsilon must be non-empty");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        let mut variants = self.variants.clone();
        variants.sort_unstable();
        variants.dedup();
        if variants.len() != self.variants.len() {
            return bad("variants must be distinct");
        }
        if self.ris_elements == 0 {
            return bad("ris_elements must be at least 1");
        }
        if self
            .eval_snrs_db
            .iter()
            .chain([&self.train_snr_db])
            .any(|s| !s.is_finite())
        {
            return bad("SNR values must be finite");
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return bad("epsilon values must be finite and non-negative");
        }
        let o = &self.optimizer;
        if o.epochs == 0 || !(o.learning_rate > 0.0) || !(0.0..1.0).contains(&o.momentum) || !(o.clip_norm >= 0.0) {
            return bad("optimizer settings out of range");
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if self.eval_batch_size == 0 || self.data.max_vocab == 0 {
            return bad("eval_batch_size and max_vocab must be positive");
        }
        let probe = ShapeConfig {
            vocab_size: 5,
            ..self.shape
        };
        probe.validate()
    }

    /// Seed of the training run for replicate `seed`; shared by all
    /// variants so they see the same initialization and data order.
    pub fn run_seed(&self, seed: u64) -> u64 {
        derive_seed(self.master_seed, &[seed])
    }
}

/// The physical link a variant sees, at one SNR and CSI error level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub variant: SystemVariant,
    pub noise: NoiseModel,
    pub csi: CsiErrorModel,
    pub ris_elements: usize,
    /// Replaces every surface amplitude after phase selection.
    pub forced_gamma: Option<f64>,
}

/// What one sentence's block experiences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDraw {
    /// True effective gain `Δ`.
    pub gain: Complex64,
    /// Estimated direct-path phase used for derotation.
    pub derotation: f64,
}

impl Link {
    pub fn new(variant: SystemVariant, snr_db: f64, epsilon: f64, ris_elements: usize) -> Result<Self> {
        Ok(Link {
            variant,
            noise: NoiseModel::from_snr_db(snr_db)?,
            csi: CsiErrorModel::new(epsilon)?,
            ris_elements,
            forced_gamma: None,
        })
    }

    /// Channel, estimate and surface configuration for one block.
    ///
    /// The surface and the derotation use the estimated channel; the
    /// signal propagates through the true one.
    pub fn draw(&self, block_seed: u64) -> Result<BlockDraw> {
        let truth = sample_channels(self.ris_elements, derive_seed(block_seed, &[stream::CHANNEL]))?;
        let estimate = perturb_csi(&truth, self.csi, derive_seed(block_seed, &[stream::CSI]));
        let mut reflection = align_phases(&estimate);
        if self.variant == SystemVariant::PointToPoint {
            reflection = reflection.with_gamma(0.0)?;
        }
        if let Some(g) = self.forced_gamma {
            reflection = reflection.with_gamma(g)?;
        }
        Ok(BlockDraw {
            gain: effective_gain(&truth, &reflection)?,
            derotation: estimate.direct_phase(),
        })
    }

    /// Sends `x[B×M×2]` across the link; row `r` uses `block_seeds[r]`.
    pub fn transmit(&self, tape: &mut Tape, x: Var, block_seeds: &[u64]) -> Result<Var> {
        if self.variant == SystemVariant::UpperBound {
            return Ok(x);
        }
        let draws = block_seeds.iter().map(|&s| self.draw(s)).collect::<Result<Vec<_>>>()?;
        let gains: Vec<Complex64> = draws.iter().map(|d| d.gain).collect();
        let noise_seeds: Vec<u64> = block_seeds.iter().map(|&s| derive_seed(s, &[stream::NOISE])).collect();
        let y = apply_channel(tape, x, &gains, self.noise, &noise_seeds)?;
        let thetas: Vec<f64> = draws.iter().map(|d| d.derotation).collect();
        derotate(tape, y, &thetas)
    }
}

/// Output of a full forward pass.
pub struct Forward {
    pub loss: Var,
    pub v_hat: Var,
}

/// Encoder, link, decoders and the teacher-forced loss for one batch.
pub fn forward(
    tape: &mut Tape,
    model: &BoundTransceiver<'_>,
    batch: &TokenBatch,
    link: &Link,
    block_seeds: &[u64],
) -> Result<Forward> {
    let u = model.semantic_encode(tape, batch)?;
    let x = model.channel_encode(tape, u)?;
    let y = link.transmit(tape, x, block_seeds)?;
    let v_hat = model.channel_decode(tape, y)?;
    let loss = teacher_forced_loss(tape, model, v_hat, batch)?;
    Ok(Forward { loss, v_hat })
}

/// Predicts `ids[:, 1..]` from `ids[:, ..L−1]` and scores the target
/// tokens' probabilities with the per-word cross-entropy.
pub fn teacher_forced_loss(
    tape: &mut Tape,
    model: &BoundTransceiver<'_>,
    v_hat: Var,
    batch: &TokenBatch,
) -> Result<Var> {
    let (b, l) = (batch.rows(), batch.seq_len());
    let t = l - 1;
    let mut prefix = Vec::with_capacity(b * t);
    let mut targets = Vec::with_capacity(b * t);
    for r in 0..b {
        let row = batch.row(r);
        prefix.extend_from_slice(&row[..t]);
        targets.extend_from_slice(&row[1..]);
    }
    let logits = model.semantic_decode(tape, v_hat, &prefix, t)?;
    let probs = tape.softmax(logits);
    let picked = tape.pick(probs, &targets)?;
    let mask: Vec<bool> = targets.iter().map(|&id| id != PAD).collect();
    let q = vec![1.0; targets.len()];
    Ok(tape.binary_cross_entropy(picked, &q, &mask, b, PROB_FLOOR, 1.0 - PROB_FLOOR)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_labels_round_trip() {
        for v in SystemVariant::ALL {
            assert_eq!(v.label().parse::<SystemVariant>().unwrap(), v);
        }
        assert!("RIS ".parse::<SystemVariant>().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
        let dup = ExperimentConfig {
            seeds: vec![1, 1],
            ..Default::default()
        };
        assert!(dup.validate().is_err());
        let empty = ExperimentConfig {
            epsilons: vec![],
            ..Default::default()
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn point_to_point_gain_is_direct_path() {
        let link = Link::new(SystemVariant::PointToPoint, 10.0, 0.0, 10).unwrap();
        let d = link.draw(42).unwrap();
        let h = sample_channels(10, derive_seed(42, &[stream::CHANNEL])).unwrap();
        assert_eq!(d.gain, h.direct());
        let ris = Link::new(SystemVariant::Ris, 10.0, 0.0, 10).unwrap().draw(42).unwrap();
        assert!(ris.gain.norm() >= d.gain.norm());
        assert!(((ris.gain * Complex64::from_polar(1.0, -ris.derotation)).im).abs() < 1e-12);
    }
}
