//! FGSM adversarial generation: signed input gradients, clipped
//! perturbations, per-image epsilon-threshold search, and epsilon sweeps.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::error::Result;
use crate::loss::softmax_cross_entropy;
use crate::network::Network;
use crate::rng::Stream;
use crate::tensor::Tensor;

/// One epsilon-threshold adversarial image, stored as its recipe: the source
/// test-set index plus the signed gradient, so perturbed images at any eps
/// can be recomputed (clipping always from the original source).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRecord {
    pub source_index: usize,
    pub source_label: usize,
    /// Signed input gradient, flattened, each element -1, 0, or +1.
    pub grad_sign: Vec<i8>,
    /// First-crossing minimal misclassifying eps, within the search tolerance.
    pub eps_threshold: f64,
    /// Per-model (prediction, probability of prediction), filled by scoring.
    #[serde(default)]
    pub outcomes: BTreeMap<String, (usize, f64)>,
}

/// Sign of d(cross-entropy at `true_label`)/d(input pixels); exact zeros stay 0.
pub fn input_gradient_sign(
    model: &Network<f32>,
    image: &Tensor<f32>,
    true_label: usize,
) -> Result<Tensor<f32>> {
    let (logits, tape) = model.forward_infer_taped(image)?;
    let (_, grad_logits) = softmax_cross_entropy(&logits, true_label)?;
    let (_, grad_input) = model.backward(&tape, &grad_logits)?;
    let mut sign = grad_input;
    for v in sign.data_mut() {
        *v = if *v > 0.0 {
            1.0
        } else if *v < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    Ok(sign)
}

/// clip(image + eps * grad_sign, 0, 1)
pub fn perturb(image: &Tensor<f32>, grad_sign: &Tensor<f32>, eps: f32) -> Tensor<f32> {
    let mut out = image.clone();
    for (o, &s) in out.data_mut().iter_mut().zip(grad_sign.data()) {
        *o = (*o + eps * s).clamp(0.0, 1.0);
    }
    out
}

pub const COARSE_STEP: f64 = 0.05;

/// Searches for the minimal misclassifying eps in (0,1]: an ascending coarse
/// scan at step 0.05 finds the first crossing, then bisection narrows the
/// bracket to width <= `tol` and returns the misclassifying endpoint together
/// with the signed gradient. `None` when no eps in (0,1] misclassifies at
/// scan granularity.
///
/// Caller must ensure the model classifies the unperturbed image correctly.
pub fn find_epsilon_threshold(
    model: &Network<f32>,
    image: &Tensor<f32>,
    true_label: usize,
    tol: f64,
) -> Result<Option<(f64, Tensor<f32>)>> {
    let sign = input_gradient_sign(model, image, true_label)?;
    let misclassifies = |eps: f64| -> Result<bool> {
        let (pred, _) = model.predict(&perturb(image, &sign, eps as f32))?;
        Ok(pred != true_label)
    };

    let mut bracket = None;
    let mut lo = 0.0;
    for i in 1..=20 {
        let eps = COARSE_STEP * i as f64;
        if misclassifies(eps)? {
            bracket = Some((lo, eps));
            break;
        }
        lo = eps;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok(None);
    };
    while hi - lo > tol {
        let mid = (lo + hi) / 2.0;
        if misclassifies(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some((hi, sign)))
}

/// Builds `n` adversarial records from randomly drawn, correctly classified
/// test images. Sources with no threshold in (0,1] are skipped and replaced.
/// Returns a partial set if the test set is exhausted first.
pub fn generate_adversarial_set(
    baseline: &Network<f32>,
    test_set: &DatasetSplit,
    n: usize,
    tol: f64,
    rng: &mut Stream,
) -> Result<Vec<AdversarialRecord>> {
    let mut records = Vec::with_capacity(n);
    let mut tried = vec![false; test_set.len()];
    let mut tried_count = 0usize;
    while records.len() < n && tried_count < test_set.len() {
        let idx = rng.gen_range(0..test_set.len());
        if tried[idx] {
            continue;
        }
        tried[idx] = true;
        tried_count += 1;
        let img = &test_set.images[idx];
        let (pred, _) = baseline.predict(&img.pixels)?;
        if pred != img.label {
            continue;
        }
        if let Some((eps, sign)) = find_epsilon_threshold(baseline, &img.pixels, img.label, tol)? {
            records.push(AdversarialRecord {
                source_index: idx,
                source_label: img.label,
                grad_sign: sign.data().iter().map(|&v| v as i8).collect(),
                eps_threshold: eps,
                outcomes: BTreeMap::new(),
            });
        }
    }
    Ok(records)
}

/// Reconstructs the record's sign image as a tensor shaped like the source.
pub fn sign_tensor(record: &AdversarialRecord, shape: &[usize]) -> Result<Tensor<f32>> {
    Tensor::new(
        shape.to_vec(),
        record.grad_sign.iter().map(|&v| v as f32).collect(),
    )
}

/// The record's perturbed image at `eps_scale` times its threshold.
pub fn perturbed_at_scale(
    record: &AdversarialRecord,
    test_set: &DatasetSplit,
    eps_scale: f64,
) -> Result<Tensor<f32>> {
    let src = &test_set.images[record.source_index];
    let sign = sign_tensor(record, src.pixels.shape())?;
    Ok(perturb(
        &src.pixels,
        &sign,
        (record.eps_threshold * eps_scale) as f32,
    ))
}

/// The inclusive eps grid 0..=1 at `step` (21 points at the default 0.05).
pub fn eps_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}
