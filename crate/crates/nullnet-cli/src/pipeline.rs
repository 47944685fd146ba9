//! Pipeline stages over an output directory: manifest bookkeeping, training,
//! adversarial generation, scoring, toy-world probing, and report emission.
//! Every stage is restartable: outputs that already verify (checkpoint
//! digests, matching manifest digests in JSON artifacts) are skipped.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use nullnet::attack::generate_adversarial_set;
use nullnet::data::DatasetSplit;
use nullnet::evaluate::{score_adversarial, score_clean, sweep_outcomes, SeedResults};
use nullnet::network::Network;
use nullnet::nullgen::NullTypeSet;
use nullnet::persist::{
    load_checkpoint_expect, save_checkpoint, AdversarialSet, ExperimentManifest,
};
use nullnet::probe::{export_grid, grid_probe, region_metrics};
use nullnet::report::emit_report;
use nullnet::rng::{RngStreams, StreamKind};
use nullnet::toyworld::{train_toy, ToyRegime};
use nullnet::trainer::{train_model, Scale, TrainConfig};

use crate::pool::run_jobs;

pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn checkpoint(&self, seed: u64, null_types: NullTypeSet) -> PathBuf {
        self.root
            .join(format!("models/seed{seed}"))
            .join(format!("{}.ckpt", null_types.name()))
    }

    pub fn attacks(&self, seed: u64) -> PathBuf {
        self.root.join(format!("attacks/seed{seed}.json"))
    }

    pub fn results(&self, seed: u64) -> PathBuf {
        self.root.join(format!("results/seed{seed}.json"))
    }

    pub fn probe_dir(&self) -> PathBuf {
        self.root.join("probe")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Establishes the manifest governing an output directory. The first run
/// writes it; later runs must present an identical manifest (same digest)
/// unless `force` overwrites it. Returns the active manifest and its digest.
pub fn ensure_manifest(
    out: &OutDir,
    expected: &ExperimentManifest,
    force: bool,
) -> anyhow::Result<(ExperimentManifest, String)> {
    fs::create_dir_all(&out.root)?;
    let path = out.manifest_path();
    if path.exists() && !force {
        let existing = ExperimentManifest::load(&path)
            .with_context(|| format!("loading {}", path.display()))?;
        if existing.digest() != expected.digest() {
            bail!(
                "{} was produced by a different manifest (digest {} vs {}); \
                 pass --force to overwrite, or match the original flags",
                out.root.display(),
                existing.digest(),
                expected.digest()
            );
        }
        let digest = existing.digest();
        println!("manifest {digest} (verified against {})", path.display());
        return Ok((existing, digest));
    }
    expected.save(&path)?;
    let digest = expected.digest();
    println!("manifest {} -> {}", digest, path.display());
    Ok((expected.clone(), digest))
}

fn checkpoint_is_valid(path: &Path, scale: Scale, seed: u64, null_types: NullTypeSet) -> bool {
    match load_checkpoint_expect(path, scale.arch_tag()) {
        Ok(ckpt) => ckpt.seed == seed && ckpt.null_types == null_types,
        Err(_) => false,
    }
}

/// Trains the requested model types for one seed (all 8 when `only` is
/// `None`), skipping checkpoints that already verify. Jobs run on the worker
/// pool. Returns the number of models actually trained.
pub fn train_stage(
    manifest: &ExperimentManifest,
    out: &OutDir,
    seed: u64,
    only: Option<NullTypeSet>,
    train_set: &DatasetSplit,
) -> anyhow::Result<usize> {
    let scale = Scale::parse(&manifest.scale)?;
    let mut jobs: Vec<Box<dyn FnOnce() -> anyhow::Result<usize> + Send>> = Vec::new();
    for (idx, null_types) in NullTypeSet::all().into_iter().enumerate() {
        if only.is_some_and(|o| o != null_types) {
            continue;
        }
        let path = out.checkpoint(seed, null_types);
        if checkpoint_is_valid(&path, scale, seed, null_types) {
            println!("seed {seed} {}: checkpoint verified, skipping", null_types.name());
            continue;
        }
        fs::create_dir_all(path.parent().unwrap())?;
        jobs.push(Box::new(move || {
            let mut config = TrainConfig::mnist(scale, null_types, seed);
            config.model_index = idx as u64;
            let ckpt = train_model(&config, train_set)?;
            save_checkpoint(&ckpt, &path)?;
            println!(
                "seed {seed} {}: trained (train accuracy {:.4})",
                null_types.name(),
                ckpt.train_accuracy
            );
            Ok(1)
        }));
    }
    // the pool borrows train_set; jobs within a seed-set are independent
    Ok(run_jobs(jobs)?.into_iter().sum())
}

fn load_seed_models(
    out: &OutDir,
    scale: Scale,
    seed: u64,
) -> anyhow::Result<Vec<(NullTypeSet, Network<f32>)>> {
    NullTypeSet::all()
        .into_iter()
        .map(|nt| {
            let path = out.checkpoint(seed, nt);
            let ckpt = load_checkpoint_expect(&path, scale.arch_tag())
                .with_context(|| format!("loading {} (run train first)", path.display()))?;
            if ckpt.seed != seed || ckpt.null_types != nt {
                bail!("{}: provenance mismatch", path.display());
            }
            Ok((nt, ckpt.to_network()?))
        })
        .collect()
}

/// Generates this seed's adversarial records against the baseline model and
/// scores every model of the seed-set on them at each eps scale. Skipped when
/// the artifact already carries this manifest digest.
pub fn attack_stage(
    manifest: &ExperimentManifest,
    digest: &str,
    out: &OutDir,
    seed: u64,
    test_set: &DatasetSplit,
) -> anyhow::Result<()> {
    let path = out.attacks(seed);
    if let Ok(existing) = AdversarialSet::load(&path) {
        if existing.manifest_digest == digest {
            println!("seed {seed}: adversarial set verified, skipping");
            return Ok(());
        }
    }
    let scale = Scale::parse(&manifest.scale)?;
    let models = load_seed_models(out, scale, seed)?;
    let baseline = &models[0].1;

    let mut rng = RngStreams::new(seed).stream(StreamKind::AttackSource);
    let mut records = generate_adversarial_set(
        baseline,
        test_set,
        manifest.attack.n_records,
        manifest.attack.tolerance,
        &mut rng,
    )?;
    if records.len() < manifest.attack.n_records {
        println!(
            "seed {seed}: test set exhausted at {} of {} records",
            records.len(),
            manifest.attack.n_records
        );
    }
    for record in &mut records {
        for (nt, net) in &models {
            for &scale_factor in &manifest.attack.eps_scales {
                let image =
                    nullnet::attack::perturbed_at_scale(record, test_set, scale_factor)?;
                let (pred, probs) = net.predict(&image)?;
                record.outcomes.insert(
                    format!("{}@x{scale_factor}", nt.name()),
                    (pred, probs[pred] as f64),
                );
            }
        }
    }
    fs::create_dir_all(path.parent().unwrap())?;
    AdversarialSet {
        manifest_digest: digest.to_string(),
        seed,
        records,
    }
    .save(&path)?;
    println!("seed {seed}: adversarial set written to {}", path.display());
    Ok(())
}

type ModelScores = (
    String,
    f64,
    nullnet::evaluate::OutcomeCounts,
    Vec<(f64, nullnet::evaluate::OutcomeCounts)>,
);

/// One seed's scores plus provenance, as stored in `results/seed{S}.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedArtifact {
    pub manifest_digest: String,
    pub results: SeedResults,
}

/// Scores the full seed-set: clean accuracy, outcomes at the eps threshold,
/// and the eps sweep. Skipped when the artifact already carries this manifest
/// digest.
pub fn score_stage(
    manifest: &ExperimentManifest,
    digest: &str,
    out: &OutDir,
    seed: u64,
    test_set: &DatasetSplit,
) -> anyhow::Result<()> {
    let path = out.results(seed);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(existing) = serde_json::from_str::<SeedArtifact>(&text) {
            if existing.manifest_digest == digest {
                println!("seed {seed}: results verified, skipping");
                return Ok(());
            }
        }
    }
    let scale = Scale::parse(&manifest.scale)?;
    let attacks = AdversarialSet::load(&out.attacks(seed))
        .with_context(|| format!("loading attacks for seed {seed} (run attack first)"))?;
    if attacks.manifest_digest != digest {
        bail!(
            "attacks/seed{seed}.json carries manifest digest {}, expected {digest}",
            attacks.manifest_digest
        );
    }
    let models = load_seed_models(out, scale, seed)?;

    // per-model scoring jobs on the pool
    let records = &attacks.records;
    let step = manifest.attack.sweep_step;
    type ScoreJob<'a> = Box<dyn FnOnce() -> anyhow::Result<ModelScores> + Send + 'a>;
    let jobs: Vec<ScoreJob> = models
        .iter()
        .map(|pair| {
            let name = pair.0.name();
            let net = &pair.1;
            Box::new(move || {
                let clean = score_clean(net, test_set)?;
                let threshold = score_adversarial(net, records, test_set, 1.0)?;
                let sweep = sweep_outcomes(net, records, test_set, step)?;
                Ok((name, clean, threshold, sweep))
            }) as ScoreJob
        })
        .collect();

    let mut results = SeedResults {
        seed,
        clean: Default::default(),
        threshold_counts: Default::default(),
        sweep_counts: Default::default(),
        thresholds: records.iter().map(|r| r.eps_threshold).collect(),
    };
    for (name, clean, threshold, sweep) in run_jobs(jobs)? {
        results.clean.insert(name.clone(), clean);
        results.threshold_counts.insert(name.clone(), threshold);
        results.sweep_counts.insert(name, sweep);
    }

    fs::create_dir_all(path.parent().unwrap())?;
    let artifact = SeedArtifact {
        manifest_digest: digest.to_string(),
        results,
    };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_string(&artifact)?)?;
    fs::rename(&tmp, &path)?;
    println!("seed {seed}: results written to {}", path.display());
    Ok(())
}

/// Trains the two toy-world regimes for one seed, probes the decision space
/// on an R^3 lattice, and writes grid CSVs plus region metrics.
pub fn probe_stage(
    digest: &str,
    out: &OutDir,
    seed: u64,
    resolution: usize,
) -> anyhow::Result<()> {
    let dir = out.probe_dir();
    fs::create_dir_all(&dir)?;
    let metrics_path = dir.join(format!("seed{seed}_metrics.json"));
    if let Ok(text) = fs::read_to_string(&metrics_path) {
        if let Ok(existing) = serde_json::from_str::<serde_json::Value>(&text) {
            if existing["manifest_digest"] == digest
                && existing["resolution"] == resolution as u64
            {
                println!("seed {seed}: probe metrics verified, skipping");
                return Ok(());
            }
        }
    }

    let mut report = serde_json::json!({
        "manifest_digest": digest,
        "seed": seed,
        "resolution": resolution,
    });
    for (regime, name) in [
        (ToyRegime::Conventional, "conventional"),
        (ToyRegime::Null50, "null50"),
    ] {
        let ckpt_path = dir.join(format!("seed{seed}_{name}.ckpt"));
        let ckpt = match load_checkpoint_expect(&ckpt_path, nullnet::arch::ArchTag::Toy) {
            Ok(c) if c.seed == seed => c,
            _ => {
                let c = train_toy(regime, seed)?;
                save_checkpoint(&c, &ckpt_path)?;
                c
            }
        };
        let net = ckpt.to_network()?;
        let grid = grid_probe(&net, resolution)?;
        let metrics = region_metrics(&grid);
        export_grid(&grid, &dir.join(format!("seed{seed}_{name}_grid.csv")))?;
        report[name] = serde_json::json!({
            "ramp_accuracy": ckpt.train_accuracy,
            "null_fraction": metrics.null_fraction,
            "recall": metrics.recall,
            "leakage": metrics.leakage,
            "box_volume_fraction": metrics.box_volume_fraction,
        });
        println!(
            "seed {seed} {name}: ramp accuracy {:.4}, null fraction {:.4}, recall {:.4}",
            ckpt.train_accuracy, metrics.null_fraction, metrics.recall
        );
    }
    fs::write(&metrics_path, serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

/// Aggregates every seed's results into the report directory. Refuses to mix
/// artifacts from different manifests unless `force`.
pub fn report_stage(digest: &str, out: &OutDir, force: bool) -> anyhow::Result<Vec<PathBuf>> {
    let results_dir = out.root.join("results");
    let mut artifacts = Vec::new();
    let entries = fs::read_dir(&results_dir)
        .with_context(|| format!("no results in {} (run sweep first)", results_dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let artifact: SeedArtifact = serde_json::from_str(&fs::read_to_string(&path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            if artifact.manifest_digest != digest && !force {
                bail!(
                    "{} carries manifest digest {}, expected {digest}; \
                     pass --force to aggregate anyway",
                    path.display(),
                    artifact.manifest_digest
                );
            }
            artifacts.push(artifact.results);
        }
    }
    if artifacts.is_empty() {
        bail!("no seed results found in {}", results_dir.display());
    }
    artifacts.sort_by_key(|r| r.seed);
    let summary = nullnet::evaluate::aggregate(digest, &artifacts);
    let written = emit_report(&summary, &out.report_dir())?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(written)
}
