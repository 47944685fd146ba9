//! Training orchestration: the per-batch loop, the 8-model seed-set, and the
//! deterministic stream discipline tying them together.

use crate::adam::{AdamHyper, AdamState};
use crate::arch::ArchTag;
use crate::data::{DatasetSplit, LabeledImage};
use crate::error::{Error, Result};
use crate::loss::softmax_cross_entropy;
use crate::network::{Gradients, Network};
use crate::nullgen::{compose_batch, NullTypeSet};
use crate::persist::ModelCheckpoint;
use crate::rng::{RngStreams, Stream, StreamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    /// Reference protocol: 32/64 conv channels, 128 hidden, 20 epochs of 60,000
    /// draws from the full training set.
    Full,
    /// 8/16 conv channels, 64 hidden, 2 epochs of 50,000 draws from a
    /// 10,000-image training subset. Same pipeline, minutes instead of hours.
    Desk,
}

impl Scale {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::InvalidArgument(format!("unknown scale {other:?}"))),
        }
    }

    pub fn arch_tag(&self) -> ArchTag {
        match self {
            Scale::Full => ArchTag::MnistFull,
            Scale::Desk => ArchTag::MnistDesk,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// An epoch is this many i.i.d. draws, not a permutation pass.
    pub samples_per_epoch: usize,
    /// Number of leading training-set images the sampler draws from.
    pub train_subset: usize,
    pub null_types: NullTypeSet,
    pub seed: u64,
    /// Position of this model within its seed-set (0..8); keys the RNG
    /// substreams so the 8 models of a set are independent.
    pub model_index: u64,
    pub scale: Scale,
    pub adam: AdamHyper,
}

impl TrainConfig {
    /// Parses the plain-text `key = value` config schema. `scale` selects the
    /// defaults; every other key overrides one field. Keys: `scale`,
    /// `null_types`, `seed`, `model_index`, `epochs`, `batch_size`,
    /// `samples_per_epoch`, `train_subset`. Blank lines and `#` comments are
    /// ignored.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "config line {}: expected key = value, got {line:?}",
                    lineno + 1
                ))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let lookup = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v);
        let scale = match lookup("scale") {
            Some(v) => Scale::parse(v)?,
            None => Scale::Desk,
        };
        let null_types = match lookup("null_types") {
            Some(v) => NullTypeSet::parse(v)?,
            None => NullTypeSet::BASELINE,
        };
        let mut config = Self::mnist(scale, null_types, 1);
        let parse_usize = |key: &str, default: usize| -> Result<usize> {
            match lookup(key) {
                None => Ok(default),
                Some(v) => v.parse().map_err(|e| {
                    Error::InvalidArgument(format!("config key {key}: {e}"))
                }),
            }
        };
        config.epochs = parse_usize("epochs", config.epochs)?;
        config.batch_size = parse_usize("batch_size", config.batch_size)?;
        config.samples_per_epoch = parse_usize("samples_per_epoch", config.samples_per_epoch)?;
        config.train_subset = parse_usize("train_subset", config.train_subset)?;
        config.seed = parse_usize("seed", 1)? as u64;
        config.model_index = parse_usize("model_index", 0)? as u64;
        for (key, _) in &pairs {
            if !matches!(
                key.as_str(),
                "scale"
                    | "null_types"
                    | "seed"
                    | "model_index"
                    | "epochs"
                    | "batch_size"
                    | "samples_per_epoch"
                    | "train_subset"
            ) {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key {key:?}"
                )));
            }
        }
        Ok(config)
    }

    pub fn mnist(scale: Scale, null_types: NullTypeSet, seed: u64) -> Self {
        match scale {
            Scale::Full => Self {
                epochs: 20,
                batch_size: 32,
                samples_per_epoch: 60_000,
                train_subset: 60_000,
                null_types,
                seed,
                model_index: 0,
                scale,
                adam: AdamHyper::default(),
            },
            Scale::Desk => Self {
                epochs: 2,
                batch_size: 32,
                samples_per_epoch: 50_000,
                train_subset: 10_000,
                null_types,
                seed,
                model_index: 0,
                scale,
                adam: AdamHyper::default(),
            },
        }
    }
}

/// One optimizer step over one batch: accumulates per-sample gradients in
/// slot order, takes the batch mean, and applies Adam. Returns the mean loss.
pub fn train_batch(
    net: &mut Network<f32>,
    adam: &mut AdamState<f32>,
    hp: &AdamHyper,
    batch: &[LabeledImage],
    dropout_rng: &mut Stream,
) -> Result<f64> {
    let mut grads = Gradients::zeros_like(net);
    let mut loss_sum = 0.0f64;
    for sample in batch {
        let (logits, tape) = net.forward_train(&sample.pixels, dropout_rng)?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, sample.label)?;
        loss_sum += loss as f64;
        let (g, _) = net.backward(&tape, &grad_logits)?;
        grads.add_assign(&g);
    }
    grads.scale(1.0 / batch.len() as f32);
    let grad_slices = grads.slices();
    let mut params = net.param_slices_mut();
    adam.step(hp, &mut params, &grad_slices);
    Ok(loss_sum / batch.len() as f64)
}

/// Fraction of `split` images the model classifies as their label (null
/// predictions count as incorrect).
pub fn train_set_accuracy(net: &Network<f32>, split: &DatasetSplit, cap: usize) -> Result<f64> {
    let n = split.len().min(cap);
    let mut correct = 0usize;
    for img in &split.images[..n] {
        let (pred, _) = net.predict(&img.pixels)?;
        if pred == img.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Trains one model per `config` over `train_set`, returning a checkpoint
/// with provenance. Aborts on a non-finite batch loss.
pub fn train_model(config: &TrainConfig, train_set: &DatasetSplit) -> Result<ModelCheckpoint> {
    let streams = RngStreams::for_model(config.seed, config.model_index);
    let mut init_rng = streams.stream(StreamKind::Init);
    let mut batch_rng = streams.stream(StreamKind::BatchSampling);
    let mut dropout_rng = streams.stream(StreamKind::Dropout);
    let mut null_rng = streams.stream(StreamKind::NullGen);

    let arch = config.scale.arch_tag().descriptor();
    let mut net: Network<f32> = Network::init(arch, &mut init_rng);
    let mut adam = AdamState::new(&net.param_lens());

    let subset = train_set.subset(config.train_subset);
    let batches_per_epoch = config.samples_per_epoch / config.batch_size;
    let mut iteration = 0usize;
    for _epoch in 0..config.epochs {
        for _ in 0..batches_per_epoch {
            let batch = compose_batch(
                &subset,
                config.null_types,
                config.batch_size,
                &mut batch_rng,
                &mut null_rng,
            );
            let loss = train_batch(&mut net, &mut adam, &config.adam, &batch, &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { loss, iteration });
            }
            iteration += 1;
        }
    }

    let train_accuracy = train_set_accuracy(&net, &subset, 1000)? as f32;
    Ok(ModelCheckpoint::from_network(
        &net,
        config.null_types,
        config.seed,
        train_accuracy,
    ))
}

/// Trains the 8 model types (base, u, s, m, us, um, sm, usm) in fixed order
/// under one master seed, one model index per type.
pub fn train_model_set(
    seed: u64,
    scale: Scale,
    train_set: &DatasetSplit,
) -> Result<Vec<ModelCheckpoint>> {
    NullTypeSet::all()
        .iter()
        .enumerate()
        .map(|(idx, &null_types)| {
            let mut config = TrainConfig::mnist(scale, null_types, seed);
            config.model_index = idx as u64;
            train_model(&config, train_set)
        })
        .collect()
}
