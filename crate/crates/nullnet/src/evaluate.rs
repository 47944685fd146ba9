//! Scoring on clean and adversarial inputs, outcome categorization, and
//! cross-seed aggregation (mean/std bars, median + percentile sweep bands,
//! median/min/max histogram bands).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attack::{eps_grid, perturbed_at_scale, AdversarialRecord};
use crate::data::DatasetSplit;
use crate::error::Result;
use crate::network::Network;

/// The three mutually exclusive outcomes: the source digit, a different
/// digit, or the null class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    Misclassified,
    Unclassified,
}

pub fn classify_outcome(prediction: usize, source_label: usize, null_label: usize) -> Outcome {
    if prediction == source_label {
        Outcome::Correct
    } else if prediction == null_label {
        Outcome::Unclassified
    } else {
        Outcome::Misclassified
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub correct: usize,
    pub misclassified: usize,
    pub unclassified: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Correct => self.correct += 1,
            Outcome::Misclassified => self.misclassified += 1,
            Outcome::Unclassified => self.unclassified += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.correct + self.misclassified + self.unclassified
    }

    /// (correct, misclassified, unclassified) fractions; sum to 1.
    pub fn fractions(&self) -> (f64, f64, f64) {
        let t = self.total() as f64;
        (
            self.correct as f64 / t,
            self.misclassified as f64 / t,
            self.unclassified as f64 / t,
        )
    }
}

/// Fraction of test images predicted as their label; null predictions count
/// as incorrect.
pub fn score_clean(net: &Network<f32>, test_set: &DatasetSplit) -> Result<f64> {
    let mut correct = 0usize;
    for img in &test_set.images {
        let (pred, _) = net.predict(&img.pixels)?;
        if pred == img.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_set.len() as f64)
}

/// Classifies each record's perturbed image (at `eps_scale` times its
/// threshold) and tallies the three outcome categories.
pub fn score_adversarial(
    net: &Network<f32>,
    records: &[AdversarialRecord],
    test_set: &DatasetSplit,
    eps_scale: f64,
) -> Result<OutcomeCounts> {
    let null_label = net.arch.null_class();
    let mut counts = OutcomeCounts::default();
    for record in records {
        let image = perturbed_at_scale(record, test_set, eps_scale)?;
        let (pred, _) = net.predict(&image)?;
        counts.add(classify_outcome(pred, record.source_label, null_label));
    }
    Ok(counts)
}

/// Per-model outcome tallies over the full eps grid (perturbation always
/// recomputed from the clean source image).
pub fn sweep_outcomes(
    net: &Network<f32>,
    records: &[AdversarialRecord],
    test_set: &DatasetSplit,
    step: f64,
) -> Result<Vec<(f64, OutcomeCounts)>> {
    let null_label = net.arch.null_class();
    let mut table = Vec::new();
    for eps in eps_grid(step) {
        let mut counts = OutcomeCounts::default();
        for record in records {
            let src = &test_set.images[record.source_index];
            let sign = crate::attack::sign_tensor(record, src.pixels.shape())?;
            let image = crate::attack::perturb(&src.pixels, &sign, eps as f32);
            let (pred, _) = net.predict(&image)?;
            counts.add(classify_outcome(pred, record.source_label, null_label));
        }
        table.push((eps, counts));
    }
    Ok(table)
}

/// Mean and population standard deviation (std 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Nearest-rank percentile on a sorted slice: the ceil(p/100 * n)-th value.
pub fn nearest_rank_percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

fn band(values: &mut [f64]) -> Band {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Band {
        median: nearest_rank_percentile(values, 50.0),
        p25: nearest_rank_percentile(values, 25.0),
        p75: nearest_rank_percentile(values, 75.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub correct: Stat,
    pub misclassified: Stat,
    pub unclassified: Stat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub correct: Band,
    pub misclassified: Band,
    pub unclassified: Band,
}

/// One eps-threshold histogram bin (width 0.05) with median/min/max per-seed
/// counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Everything one seed-set contributes to the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResults {
    pub seed: u64,
    /// model-type name -> clean test accuracy
    pub clean: BTreeMap<String, f64>,
    /// model-type name -> outcome counts on the eps-threshold records
    pub threshold_counts: BTreeMap<String, OutcomeCounts>,
    /// model-type name -> (eps, counts) over the sweep grid
    pub sweep_counts: BTreeMap<String, Vec<(f64, OutcomeCounts)>>,
    /// eps threshold of each adversarial record, in record order
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub manifest_digest: String,
    pub model_types: Vec<String>,
    pub seeds: Vec<u64>,
    /// Bar-figure data: mean/std of clean accuracy over seeds.
    pub clean_accuracy: BTreeMap<String, Stat>,
    /// Bar-figure data: mean/std of outcome fractions at eps threshold.
    pub threshold_fractions: BTreeMap<String, OutcomeStats>,
    /// Sweep-curve data: median and 25th/75th percentile fractions
    /// (spread type: interquartile).
    pub sweep: BTreeMap<String, Vec<SweepPoint>>,
    /// Threshold histogram, bin width 0.05 (spread type: min/max).
    pub histogram: Vec<HistBin>,
    pub per_seed: Vec<SeedResults>,
}

/// Cross-seed aggregation: means/stds for bar figures, median and quartiles
/// for sweep curves, median/min/max per-bin counts for the histogram.
pub fn aggregate(manifest_digest: &str, per_seed: &[SeedResults]) -> ScoreSummary {
    assert!(!per_seed.is_empty(), "need at least one seed-set");
    let model_types: Vec<String> = per_seed[0].clean.keys().cloned().collect();
    let seeds: Vec<u64> = per_seed.iter().map(|r| r.seed).collect();

    let mut clean_accuracy = BTreeMap::new();
    let mut threshold_fractions = BTreeMap::new();
    let mut sweep = BTreeMap::new();

    for mt in &model_types {
        let accs: Vec<f64> = per_seed.iter().map(|r| r.clean[mt]).collect();
        let (mean, std) = mean_std(&accs);
        clean_accuracy.insert(mt.clone(), Stat { mean, std });

        let fracs: Vec<(f64, f64, f64)> = per_seed
            .iter()
            .map(|r| r.threshold_counts[mt].fractions())
            .collect();
        let stat_of = |pick: fn(&(f64, f64, f64)) -> f64| {
            let vals: Vec<f64> = fracs.iter().map(pick).collect();
            let (mean, std) = mean_std(&vals);
            Stat { mean, std }
        };
        threshold_fractions.insert(
            mt.clone(),
            OutcomeStats {
                correct: stat_of(|f| f.0),
                misclassified: stat_of(|f| f.1),
                unclassified: stat_of(|f| f.2),
            },
        );

        let n_points = per_seed[0].sweep_counts[mt].len();
        let mut points = Vec::with_capacity(n_points);
        for i in 0..n_points {
            let eps = per_seed[0].sweep_counts[mt][i].0;
            let mut c = Vec::new();
            let mut m = Vec::new();
            let mut u = Vec::new();
            for r in per_seed {
                let (fc, fm, fu) = r.sweep_counts[mt][i].1.fractions();
                c.push(fc);
                m.push(fm);
                u.push(fu);
            }
            points.push(SweepPoint {
                eps,
                correct: band(&mut c),
                misclassified: band(&mut m),
                unclassified: band(&mut u),
            });
        }
        sweep.insert(mt.clone(), points);
    }

    // per-seed histograms of thresholds, then median/min/max per bin
    let n_bins = 20;
    let mut histogram = Vec::with_capacity(n_bins);
    for bin in 0..n_bins {
        let lo = bin as f64 * 0.05;
        let hi = lo + 0.05;
        let mut counts = Vec::new();
        for r in per_seed {
            let c = r
                .thresholds
                .iter()
                .filter(|&&t| t > lo && t <= hi || (bin == 0 && t <= lo))
                .count();
            counts.push(c as f64);
        }
        counts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        histogram.push(HistBin {
            lo,
            hi,
            median: nearest_rank_percentile(&counts, 50.0),
            min: counts[0],
            max: *counts.last().unwrap(),
        });
    }

    ScoreSummary {
        manifest_digest: manifest_digest.to_string(),
        model_types,
        seeds,
        clean_accuracy,
        threshold_fractions,
        sweep,
        histogram,
        per_seed: per_seed.to_vec(),
    }
}
