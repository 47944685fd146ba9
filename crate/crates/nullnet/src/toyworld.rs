//! The 3-pixel ramp environment: ground-truth geometry, the two training
//! regimes (conventional and 50% uniform-null), and the scaled-down CNN.

use rand::Rng;

use crate::adam::{AdamHyper, AdamState};
use crate::arch::ArchitectureDescriptor;
use crate::data::{
    gen_toy_sample, toy_prototype, LabeledImage, ToyClass, ToyPosition, TOY_NULL_LABEL,
};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::persist::ModelCheckpoint;
use crate::rng::{RngStreams, StreamKind};
use crate::tensor::Tensor;
use crate::trainer::train_batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyRegime {
    /// 20 epochs of 1000 ramp samples, batch size 32, no nulls.
    Conventional,
    /// 30 epochs; each slot replaced with a uniform-noise null sample with
    /// probability 1/2.
    Null50,
}

impl ToyRegime {
    pub fn epochs(&self) -> usize {
        match self {
            ToyRegime::Conventional => 20,
            ToyRegime::Null50 => 30,
        }
    }
}

/// Uniform-noise 3-vector labeled null.
pub fn gen_toy_null<R: Rng>(rng: &mut R) -> LabeledImage {
    let pixels: Vec<f32> = (0..3).map(|_| rng.gen_range(0.0f32..=1.0)).collect();
    LabeledImage {
        pixels: Tensor::new(vec![1, 3, 1], pixels).unwrap(),
        label: TOY_NULL_LABEL,
    }
}

fn draw_ramp<R: Rng, S: Rng>(class_rng: &mut R, noise_rng: &mut S) -> LabeledImage {
    let class = if class_rng.gen::<bool>() {
        ToyClass::Up
    } else {
        ToyClass::Down
    };
    let position = if class_rng.gen::<bool>() {
        ToyPosition::Right
    } else {
        ToyPosition::Left
    };
    gen_toy_sample(class, position, noise_rng)
}

/// Trains one toy model. Sample classes/positions come from the
/// batch-sampling stream, ramp noise from the toy-noise stream, dropout from
/// the dropout stream, and the null coin plus null pixels from the nullgen
/// stream.
pub fn train_toy(regime: ToyRegime, seed: u64) -> Result<ModelCheckpoint> {
    let streams = RngStreams::new(seed);
    let mut init_rng = streams.stream(StreamKind::Init);
    let mut class_rng = streams.stream(StreamKind::BatchSampling);
    let mut noise_rng = streams.stream(StreamKind::ToyNoise);
    let mut dropout_rng = streams.stream(StreamKind::Dropout);
    let mut null_rng = streams.stream(StreamKind::NullGen);

    let mut net: Network<f32> = Network::init(ArchitectureDescriptor::toy(), &mut init_rng);
    let mut adam = AdamState::new(&net.param_lens());
    let hp = AdamHyper::default();

    let batch_size = 32;
    let batches_per_epoch = 1000 / batch_size;
    let mut iteration = 0usize;
    for _ in 0..regime.epochs() {
        for _ in 0..batches_per_epoch {
            let batch: Vec<LabeledImage> = (0..batch_size)
                .map(|_| {
                    if regime == ToyRegime::Null50 && null_rng.gen::<f64>() < 0.5 {
                        gen_toy_null(&mut null_rng)
                    } else {
                        draw_ramp(&mut class_rng, &mut noise_rng)
                    }
                })
                .collect();
            let loss = train_batch(&mut net, &mut adam, &hp, &batch, &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { loss, iteration });
            }
            iteration += 1;
        }
    }

    // clean ramp accuracy over a fresh sample draw
    let mut correct = 0usize;
    let n_eval = 1000;
    for _ in 0..n_eval {
        let sample = draw_ramp(&mut class_rng, &mut noise_rng);
        let (pred, _) = net.predict(&sample.pixels)?;
        if pred == sample.label {
            correct += 1;
        }
    }
    let null_types = match regime {
        ToyRegime::Conventional => crate::nullgen::NullTypeSet::BASELINE,
        ToyRegime::Null50 => crate::nullgen::NullTypeSet::parse("u")?,
    };
    Ok(ModelCheckpoint::from_network(
        &net,
        null_types,
        seed,
        correct as f32 / n_eval as f32,
    ))
}

const NOISE: f64 = 0.05;

/// One ground-truth box: prototype +- 0.05 per axis, intersected with
/// [0,1]^3. Boundary inclusive.
fn in_box(point: &[f64; 3], class: ToyClass, position: ToyPosition) -> bool {
    let proto = toy_prototype(class, position);
    point.iter().zip(proto.iter()).all(|(&p, &c)| {
        let lo = (c as f64 - NOISE).max(0.0);
        let hi = (c as f64 + NOISE).min(1.0);
        p >= lo && p <= hi
    })
}

/// The class whose ground-truth noise box contains the point (union over
/// left/right positions), or `None` outside every box. The four boxes are
/// pairwise disjoint by construction; membership in more than one is a bug.
pub fn ground_truth_region(point: &[f64; 3]) -> Option<ToyClass> {
    let mut hit = None;
    for class in [ToyClass::Down, ToyClass::Up] {
        for position in [ToyPosition::Left, ToyPosition::Right] {
            if in_box(point, class, position) {
                assert!(hit.is_none(), "ground-truth boxes overlap at {point:?}");
                hit = Some(class);
            }
        }
    }
    hit
}

/// Fraction of [0,1]^3 covered by the four (clipped) ground-truth boxes.
pub fn box_volume_fraction() -> f64 {
    let mut total = 0.0;
    for class in [ToyClass::Down, ToyClass::Up] {
        for position in [ToyPosition::Left, ToyPosition::Right] {
            let proto = toy_prototype(class, position);
            let vol: f64 = proto
                .iter()
                .map(|&c| {
                    let lo = (c as f64 - NOISE).max(0.0);
                    let hi = (c as f64 + NOISE).min(1.0);
                    hi - lo
                })
                .product();
            total += vol;
        }
    }
    total
}
