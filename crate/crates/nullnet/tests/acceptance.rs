//! Acceptance suite: one test per numbered criterion, each printing a
//! single PASS line with the measured values (visible with --nocapture).
//!
//! Criteria 4-7 share one lazily built fixture: the full desk-scale protocol
//! (8 model types x 3 seeds, 200 adversarial records per seed) trained from
//! the MNIST files under data/mnist at the repository root.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use nullnet::arch::{ArchTag, ArchitectureDescriptor};
use nullnet::attack::{generate_adversarial_set, perturb, sign_tensor, AdversarialRecord};
use nullnet::data::{load_mnist, DatasetSplit, LabeledImage, SplitRole, MNIST_NULL_LABEL};
use nullnet::evaluate::{
    aggregate, score_adversarial, score_clean, sweep_outcomes, OutcomeCounts, SeedResults,
};
use nullnet::network::Network;
use nullnet::nullgen::{compose_batch, gen_mixed_null, gen_shuffled_null, NullTypeSet};
use nullnet::persist::save_checkpoint;
use nullnet::probe::{grid_probe, region_metrics};
use nullnet::rng::{RngStreams, StreamKind};
use nullnet::tensor::Tensor;
use nullnet::toyworld::{train_toy, ToyRegime};
use nullnet::trainer::{train_model, Scale, TrainConfig};

const DESK_SEEDS: [u64; 3] = [1, 2, 3];
const N_RECORDS: usize = 200;
const ATTACK_TOL: f64 = 1e-3;
const SWEEP_STEP: f64 = 0.05;

fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn mnist() -> (DatasetSplit, DatasetSplit) {
    load_mnist(&mnist_dir()).expect(
        "MNIST files missing: run `nullnet fetch-mnist --data-dir data/mnist` \
         at the repository root first",
    )
}

/// Everything one desk seed produces: per-model clean accuracy, the
/// adversarial record set, outcome tallies at the eps threshold, and the
/// outcome tallies over the eps sweep grid.
struct SeedData {
    seed: u64,
    baseline: Network<f32>,
    clean: BTreeMap<String, f64>,
    records: Vec<AdversarialRecord>,
    threshold_counts: BTreeMap<String, OutcomeCounts>,
    sweep_counts: BTreeMap<String, Vec<(f64, OutcomeCounts)>>,
}

struct DeskFixture {
    per_seed: Vec<SeedData>,
    build_secs: f64,
}

impl DeskFixture {
    fn seed_results(&self) -> Vec<SeedResults> {
        self.per_seed
            .iter()
            .map(|s| SeedResults {
                seed: s.seed,
                clean: s.clean.clone(),
                threshold_counts: s.threshold_counts.clone(),
                sweep_counts: s.sweep_counts.clone(),
                thresholds: s.records.iter().map(|r| r.eps_threshold).collect(),
            })
            .collect()
    }
}

/// Process CPU time (user + system) in seconds, from /proc/self/stat.
/// The budget below is a CPU budget, so scheduler noise must not count.
fn process_cpu_secs() -> f64 {
    let stat = std::fs::read_to_string("/proc/self/stat").expect("/proc/self/stat");
    let rest = stat.rsplit(") ").next().expect("stat comm delimiter");
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let utime: f64 = fields[11].parse().expect("utime");
    let stime: f64 = fields[12].parse().expect("stime");
    (utime + stime) / 100.0
}

fn desk_fixture() -> &'static DeskFixture {
    static FIXTURE: OnceLock<DeskFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let cpu_started = process_cpu_secs();
        let (train, test) = mnist();
        let mut per_seed = Vec::new();
        for seed in DESK_SEEDS {
            let mut nets: Vec<(String, Network<f32>)> = Vec::new();
            for (model_index, null_types) in NullTypeSet::all().into_iter().enumerate() {
                let mut config = TrainConfig::mnist(Scale::Desk, null_types, seed);
                config.model_index = model_index as u64;
                let ckpt = train_model(&config, &train).expect("desk training");
                nets.push((null_types.name(), ckpt.to_network().expect("checkpoint")));
            }
            let baseline = nets[0].1.clone();

            let mut rng = RngStreams::new(seed).stream(StreamKind::AttackSource);
            let records =
                generate_adversarial_set(&baseline, &test, N_RECORDS, ATTACK_TOL, &mut rng)
                    .expect("adversarial set");

            let mut clean = BTreeMap::new();
            let mut threshold_counts = BTreeMap::new();
            let mut sweep_counts = BTreeMap::new();
            for (name, net) in &nets {
                clean.insert(name.clone(), score_clean(net, &test).expect("clean score"));
                threshold_counts.insert(
                    name.clone(),
                    score_adversarial(net, &records, &test, 1.0).expect("threshold score"),
                );
                sweep_counts.insert(
                    name.clone(),
                    sweep_outcomes(net, &records, &test, SWEEP_STEP).expect("sweep score"),
                );
            }
            per_seed.push(SeedData {
                seed,
                baseline,
                clean,
                records,
                threshold_counts,
                sweep_counts,
            });
        }
        DeskFixture {
            per_seed,
            build_secs: process_cpu_secs() - cpu_started,
        }
    })
}

/// Criterion 1: analytic gradients of every layer and of the softmax
/// cross-entropy head match central finite differences in f64 (relative
/// error < 1e-5, >= 20 random instances). The per-layer checks live in the
/// gradcheck test target; this runs an end-to-end spot check and points
/// there.
#[test]
fn criterion_01_gradient_checks() {
    use nullnet::loss::softmax_cross_entropy;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let mut instances = 0usize;
    let mut max_err = 0.0f64;
    for inst in 0..20 {
        let mut net: Network<f64> = Network::init(ArchitectureDescriptor::toy(), &mut rng);
        let data: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let input = Tensor::new(vec![1, 3, 1], data).unwrap();
        let label = inst % 3;

        let (logits, tape) = net.forward_infer_taped(&input).unwrap();
        let (_, grad_logits) = softmax_cross_entropy(&logits, label).unwrap();
        let (grads, _) = net.backward(&tape, &grad_logits).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

        let h = 1e-5;
        for (si, slice_grads) in analytic.iter().enumerate() {
            for (i, &a) in slice_grads.iter().enumerate() {
                let mut eval = |d: f64| {
                    net.param_slices_mut()[si][i] += d;
                    let logits = net.forward_infer(&input).unwrap();
                    let (loss, _) = softmax_cross_entropy(&logits, label).unwrap();
                    net.param_slices_mut()[si][i] -= d;
                    loss
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                max_err = max_err.max(err);
                assert!(
                    err < 1e-5,
                    "params[{si}][{i}]: analytic {a:.6e} vs numeric {numeric:.6e}"
                );
            }
        }
        instances += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "gradient checks took {secs:.1}s");
    println!(
        "criterion 01: PASS — {instances} end-to-end instances, max rel err \
         {max_err:.2e}, {secs:.1}s (per-layer checks in the gradcheck target)"
    );
}

/// Criterion 2: the reference MNIST architecture's per-layer shape trace.
#[test]
fn criterion_02_shape_trace() {
    let trace = ArchTag::MnistFull.descriptor().shape_trace();
    let expected: Vec<Vec<usize>> = vec![
        vec![28, 28, 1],
        vec![26, 26, 32],  // conv 3x3, 32 channels
        vec![26, 26, 32],  // relu
        vec![24, 24, 64],  // conv 3x3, 64 channels
        vec![24, 24, 64],  // relu
        vec![12, 12, 64],  // maxpool 2x2
        vec![12, 12, 64],  // dropout 0.25
        vec![9216],        // flatten
        vec![128],         // dense
        vec![128],         // dropout 0.5
        vec![11],          // dense: 10 digits + null
    ];
    assert_eq!(trace, expected);
    println!("criterion 02: PASS — shape trace matches the reference table exactly");
}

/// Criterion 3: toy world. The conventionally trained model classifies at
/// least 99% of ramps but covers the whole cube with ramp classes (zero null
/// volume); the 50%-null model keeps ramp accuracy, recalls at least 95%
/// inside the ground-truth boxes, and labels at least 70% of the cube null.
#[test]
fn criterion_03_toy_decision_space() {
    let started = Instant::now();

    let conv = train_toy(ToyRegime::Conventional, 1).unwrap();
    let conv_acc = conv.train_accuracy;
    assert!(conv_acc >= 0.99, "conventional ramp accuracy {conv_acc}");
    let conv_grid = grid_probe(&conv.to_network().unwrap(), 51).unwrap();
    let conv_metrics = region_metrics(&conv_grid);
    assert_eq!(
        conv_metrics.null_fraction, 0.0,
        "conventional model predicted null somewhere"
    );

    let null = train_toy(ToyRegime::Null50, 1).unwrap();
    let null_acc = null.train_accuracy;
    assert!(null_acc >= 0.99, "null-trained ramp accuracy {null_acc}");
    let null_grid = grid_probe(&null.to_network().unwrap(), 51).unwrap();
    let null_metrics = region_metrics(&null_grid);
    assert!(
        null_metrics.recall >= 0.95,
        "in-box recall {}",
        null_metrics.recall
    );
    assert!(
        null_metrics.null_fraction >= 0.70,
        "null fraction {}",
        null_metrics.null_fraction
    );

    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 300.0, "toy criterion took {secs:.1}s");
    println!(
        "criterion 03: PASS — conventional acc {conv_acc:.3} null-frac {:.3}; \
         null-trained acc {null_acc:.3} recall {:.3} null-frac {:.3}; {secs:.1}s",
        conv_metrics.null_fraction, null_metrics.recall, null_metrics.null_fraction
    );
}

/// Criterion 4: desk-scale clean accuracy. Baselines reach >= 97% on the
/// full test set for every seed, and every null-trained variant stays within
/// 1.5 points of its seed's baseline. The whole desk fixture (24 models,
/// attacks, scoring) must build in under 30 CPU-minutes.
#[test]
fn criterion_04_desk_clean_accuracy() {
    let fixture = desk_fixture();
    let (_, test) = mnist();
    let mut worst_base = 1.0f64;
    let mut worst_gap = 0.0f64;
    for sd in &fixture.per_seed {
        // the baseline has an unused 11th output; it must never win
        let null_preds = test
            .images
            .iter()
            .filter(|img| sd.baseline.predict(&img.pixels).unwrap().0 == MNIST_NULL_LABEL)
            .count();
        assert_eq!(
            null_preds, 0,
            "seed {}: baseline predicted null on {null_preds} test images",
            sd.seed
        );
        let base = sd.clean["base"];
        assert!(
            base >= 0.97,
            "seed {} baseline accuracy {base:.4} < 0.97",
            sd.seed
        );
        worst_base = worst_base.min(base);
        for (name, &acc) in &sd.clean {
            if name == "base" {
                continue;
            }
            let gap = (base - acc) * 100.0;
            assert!(
                gap <= 1.5,
                "seed {} model {name} accuracy {acc:.4} is {gap:.2} points \
                 below baseline {base:.4}",
                sd.seed
            );
            worst_gap = worst_gap.max(gap);
        }
    }
    assert!(
        fixture.build_secs < 1800.0,
        "desk fixture used {:.0}s of CPU",
        fixture.build_secs
    );
    println!(
        "criterion 04: PASS — worst baseline {worst_base:.4}, worst null gap \
         {worst_gap:.2} points, fixture built in {:.0}s CPU",
        fixture.build_secs
    );
}

/// Criterion 5: the attack search. Each seed yields 200 records, the
/// baseline misclassifies every record at its own eps threshold, and a fine
/// re-scan at step 1e-3 over 10 audited records of seed 1 finds no
/// misclassifying eps earlier than the recorded threshold.
#[test]
fn criterion_05_attack_thresholds() {
    let fixture = desk_fixture();
    for sd in &fixture.per_seed {
        assert_eq!(
            sd.records.len(),
            N_RECORDS,
            "seed {} record count",
            sd.seed
        );
        let counts = sd.threshold_counts["base"];
        assert_eq!(
            counts.misclassified,
            N_RECORDS,
            "seed {}: baseline outcome at threshold {counts:?}",
            sd.seed
        );
    }

    // fine audit on the first 10 records of the first seed
    let sd = &fixture.per_seed[0];
    let (_, test) = mnist();
    let mut audited = 0usize;
    for record in sd.records.iter().take(10) {
        let src = &test.images[record.source_index];
        let sign = sign_tensor(record, src.pixels.shape()).unwrap();
        let mut k = 1usize;
        loop {
            let eps = 1e-3 * k as f64;
            if eps > record.eps_threshold - ATTACK_TOL {
                break;
            }
            let image = perturb(&src.pixels, &sign, eps as f32);
            let (pred, _) = sd.baseline.predict(&image).unwrap();
            assert_eq!(
                pred, record.source_label,
                "record {} misclassifies at eps {eps:.3} < threshold {:.3}",
                record.source_index, record.eps_threshold
            );
            k += 1;
        }
        audited += 1;
    }
    println!(
        "criterion 05: PASS — 200 records per seed, 100% baseline \
         misclassification at threshold, {audited} records fine-audited at step 1e-3"
    );
}

/// Criterion 6: null-trained robustness at the baseline's thresholds. The
/// usm model's misclassification rate — the cross-seed mean, the statistic
/// the outcome bar figure plots — is at most 5% (so correct plus unclassified
/// covers at least 95%), and the u-only model's rate strictly exceeds usm's.
#[test]
fn criterion_06_null_robustness_at_threshold() {
    let fixture = desk_fixture();
    let mut usm_rates = Vec::new();
    let mut u_rates = Vec::new();
    for sd in &fixture.per_seed {
        usm_rates.push(sd.threshold_counts["usm"].fractions().1);
        u_rates.push(sd.threshold_counts["u"].fractions().1);
    }
    let usm_mean = usm_rates.iter().sum::<f64>() / usm_rates.len() as f64;
    let u_mean = u_rates.iter().sum::<f64>() / u_rates.len() as f64;
    assert!(
        usm_mean <= 0.05,
        "usm misclassification {usm_mean:.3} > 0.05 (per seed: {usm_rates:?})"
    );
    assert!(
        1.0 - usm_mean >= 0.95,
        "usm correct+unclassified {:.3} < 0.95",
        1.0 - usm_mean
    );
    assert!(
        u_mean > usm_mean,
        "u misclassification {u_mean:.3} does not exceed usm {usm_mean:.3}"
    );
    println!(
        "criterion 06: PASS — usm misclassification {usm_mean:.3} (per-seed max \
         {:.3}), u-only {u_mean:.3} strictly higher",
        usm_rates.iter().cloned().fold(0.0, f64::max)
    );
}

/// Criterion 7: eps sweep endpoints and the usm curve. At eps 0 the baseline
/// is 100% correct on every seed; at eps 1 it is at most 10% correct; the usm
/// misclassification curve — the cross-seed median at each grid point, the
/// statistic the sweep figure plots — stays at or below 5% everywhere.
#[test]
fn criterion_07_sweep_endpoints() {
    let fixture = desk_fixture();
    for sd in &fixture.per_seed {
        let base = &sd.sweep_counts["base"];
        let (c0, _, _) = base.first().unwrap().1.fractions();
        assert_eq!(
            c0, 1.0,
            "seed {}: baseline correct {c0} at eps 0",
            sd.seed
        );
        let (c1, _, _) = base.last().unwrap().1.fractions();
        assert!(
            c1 <= 0.10,
            "seed {}: baseline correct {c1:.3} at eps 1",
            sd.seed
        );
    }

    let n_points = fixture.per_seed[0].sweep_counts["usm"].len();
    let mut usm_max = 0.0f64;
    for i in 0..n_points {
        let eps = fixture.per_seed[0].sweep_counts["usm"][i].0;
        let mut rates: Vec<f64> = fixture
            .per_seed
            .iter()
            .map(|sd| sd.sweep_counts["usm"][i].1.fractions().1)
            .collect();
        rates.sort_by(f64::total_cmp);
        let median = rates[rates.len() / 2];
        assert!(
            median <= 0.05,
            "usm misclassification median {median:.3} at eps {eps} (per seed: {rates:?})"
        );
        usm_max = usm_max.max(median);
    }
    println!(
        "criterion 07: PASS — baseline 100% correct at eps 0, <= 10% at eps 1, \
         usm misclassification median <= {usm_max:.3} over the whole grid"
    );
}

/// Criterion 8 (reference protocol, hours of compute — run explicitly with
/// `--ignored`): full-scale baseline clean accuracy 99.23 +- 0.3 points,
/// median eps threshold in [0.15, 0.30], > 80% of thresholds below 0.4.
#[test]
#[ignore = "full-scale protocol: run explicitly, takes hours on CPU"]
fn criterion_08_full_scale_reference() {
    let (train, test) = mnist();
    let seed = 1u64;
    let config = TrainConfig::mnist(Scale::Full, NullTypeSet::BASELINE, seed);
    let ckpt = train_model(&config, &train).unwrap();
    let net = ckpt.to_network().unwrap();
    let clean = score_clean(&net, &test).unwrap();
    assert!(
        (clean - 0.9923).abs() <= 0.003,
        "full-scale baseline accuracy {clean:.4}"
    );

    let mut rng = RngStreams::new(seed).stream(StreamKind::AttackSource);
    let records = generate_adversarial_set(&net, &test, 1000, ATTACK_TOL, &mut rng).unwrap();
    let mut thresholds: Vec<f64> = records.iter().map(|r| r.eps_threshold).collect();
    thresholds.sort_by(f64::total_cmp);
    let median = thresholds[thresholds.len() / 2];
    assert!(
        (0.15..=0.30).contains(&median),
        "median threshold {median:.3}"
    );
    let below = thresholds.iter().filter(|&&t| t < 0.4).count() as f64
        / thresholds.len() as f64;
    assert!(below > 0.80, "only {below:.3} of thresholds below 0.4");
    println!(
        "criterion 08: PASS — clean {clean:.4}, median threshold {median:.3}, \
         {below:.3} below 0.4"
    );
}

/// Criterion 9: determinism. Training the same configuration twice yields
/// byte-identical checkpoint files, and emitting the report twice from the
/// same results yields byte-identical report trees.
#[test]
fn criterion_09_determinism() {
    let (train, _) = mnist();
    let mut config = TrainConfig::mnist(Scale::Desk, NullTypeSet::parse("usm").unwrap(), 7);
    config.epochs = 1;
    config.samples_per_epoch = 640;
    config.train_subset = 512;

    let dir = tempfile::tempdir().unwrap();
    let mut checkpoint_bytes = Vec::new();
    for run in 0..2 {
        let ckpt = train_model(&config, &train).unwrap();
        let path = dir.path().join(format!("run{run}.ckpt"));
        save_checkpoint(&ckpt, &path).unwrap();
        checkpoint_bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(
        checkpoint_bytes[0], checkpoint_bytes[1],
        "checkpoints differ between identical runs"
    );

    let fixture = desk_fixture();
    let summary = aggregate("acceptance", &fixture.seed_results());
    let mut trees = Vec::new();
    for run in 0..2 {
        let report_dir = dir.path().join(format!("report{run}"));
        std::fs::create_dir_all(&report_dir).unwrap();
        let files = nullnet::report::emit_report(&summary, &report_dir).unwrap();
        let mut tree: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(p).unwrap(),
                )
            })
            .collect();
        tree.sort();
        trees.push(tree);
    }
    assert_eq!(trees[0], trees[1], "report trees differ between identical runs");
    println!(
        "criterion 09: PASS — {} checkpoint bytes and {} report files byte-identical",
        checkpoint_bytes[0].len(),
        trees[0].len()
    );
}

/// Criterion 10: null generators. Tile shuffling preserves the pixel
/// multiset exactly, mixing is the exact elementwise mean, and the batch
/// composer's null fraction over 1e5 slots is 0.5 +- 0.005.
#[test]
fn criterion_10_null_generators() {
    use rand::rngs::StdRng;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    let mut rng = StdRng::seed_from_u64(10);
    let image = |label: usize, rng: &mut StdRng| LabeledImage {
        pixels: Tensor::new(
            vec![28, 28, 1],
            (0..784).map(|_| rng.gen_range(0.0f32..=1.0)).collect(),
        )
        .unwrap(),
        label,
    };

    // exact multiset preservation for every tile size
    for t in nullnet::nullgen::TILE_SIZES {
        let src = image(3, &mut rng);
        let n_tiles = (28 / t) * (28 / t);
        let mut perm: Vec<usize> = (0..n_tiles).collect();
        perm.shuffle(&mut rng);
        let out = gen_shuffled_null(&src, t, &perm).unwrap();
        let mut a: Vec<f32> = src.pixels.data().to_vec();
        let mut b: Vec<f32> = out.pixels.data().to_vec();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        assert_eq!(a, b, "tile size {t} altered the pixel multiset");
    }

    // exact elementwise mean
    let a = image(1, &mut rng);
    let b = image(8, &mut rng);
    let m = gen_mixed_null(&a, &b).unwrap();
    for ((&x, &y), &z) in a
        .pixels
        .data()
        .iter()
        .zip(b.pixels.data())
        .zip(m.pixels.data())
    {
        assert_eq!(z, (x + y) / 2.0);
    }

    // batch null fraction over 1e5 slots
    let train = DatasetSplit {
        images: (0..20).map(|i| image(i % 10, &mut rng)).collect(),
        role: SplitRole::Train,
    };
    let streams = RngStreams::new(42);
    let mut digit_rng = streams.stream(StreamKind::BatchSampling);
    let mut null_rng = streams.stream(StreamKind::NullGen);
    let null_types = NullTypeSet::parse("usm").unwrap();
    let mut nulls = 0usize;
    let total = 100_000usize;
    let batch_size = 100;
    for _ in 0..total / batch_size {
        let batch = compose_batch(&train, null_types, batch_size, &mut digit_rng, &mut null_rng);
        nulls += batch.iter().filter(|s| s.label == MNIST_NULL_LABEL).count();
    }
    let fraction = nulls as f64 / total as f64;
    assert!(
        (fraction - 0.5).abs() <= 0.005,
        "null fraction {fraction:.4} outside 0.5 +- 0.005"
    );
    println!(
        "criterion 10: PASS — multiset and mean exact, batch null fraction \
         {fraction:.4} over 1e5 slots"
    );
}
