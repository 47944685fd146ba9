//! `nullnet` — train null-class CNNs, attack them with FGSM, and report.

mod fetch;
mod pipeline;
mod pool;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use nullnet::data::{load_mnist, locate_mnist, DatasetSplit};
use nullnet::nullgen::NullTypeSet;
use nullnet::persist::{AttackParams, ExperimentManifest};
use nullnet::trainer::Scale;
use pipeline::OutDir;

#[derive(Parser)]
#[command(name = "nullnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline subcommand. The seed list, scale, and
/// attack parameters define the experiment manifest; the first run against an
/// output directory writes it, later runs must match it (or pass --force).
#[derive(Args, Clone)]
struct Protocol {
    /// Experiment scale: "full" (reference protocol) or "desk" (minutes)
    #[arg(long, default_value = "desk")]
    scale: String,
    /// Seed list: inclusive range "1..30" or comma list "1,2,5"
    #[arg(long, default_value = "1..3")]
    seeds: String,
    /// Output directory holding all artifacts of this experiment
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// MNIST directory (falls back to NULLNET_DATA_DIR, ./data/mnist,
    /// ~/.cache/nullnet/mnist)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Adversarial records per seed (default: 1000 full scale, 200 desk)
    #[arg(long)]
    n_records: Option<usize>,
    /// Overwrite a mismatching manifest instead of refusing
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Download (or verify) the MNIST IDX files with pinned digests
    FetchMnist {
        /// Target directory
        #[arg(long, default_value = "data/mnist")]
        data_dir: PathBuf,
    },
    /// Train one model (--null-types) or the full 8-model set for one seed
    Train {
        #[command(flatten)]
        protocol: Protocol,
        /// Seed to train (must be in --seeds)
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// One of base,u,s,m,us,um,sm,usm; omit to train all 8
        #[arg(long)]
        null_types: Option<String>,
        /// Key = value config file overriding the scale defaults (train only)
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate adversarial records against the seed's baseline model
    Attack {
        #[command(flatten)]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Score the seed-set: clean, eps-threshold outcomes, and the eps sweep
    Sweep {
        #[command(flatten)]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train the toy-world regimes and probe their decision space on a grid
    Probe {
        #[command(flatten)]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Lattice points per axis
        #[arg(long, default_value_t = 41)]
        resolution: usize,
    },
    /// Aggregate all seed results into CSV/JSON/SVG reports
    Report {
        #[command(flatten)]
        protocol: Protocol,
    },
    /// Full pipeline for every seed: train, attack, sweep, probe, report
    Reproduce {
        #[command(flatten)]
        protocol: Protocol,
        /// Probe lattice points per axis
        #[arg(long, default_value_t = 41)]
        resolution: usize,
    },
}

/// "1..30" (inclusive) or "3,7,19".
fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.trim().parse().context("seed range start")?;
        let hi: u64 = hi.trim().parse().context("seed range end")?;
        anyhow::ensure!(lo <= hi, "empty seed range {s:?}");
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<u64>().with_context(|| format!("seed {t:?}")))
        .collect()
}

impl Protocol {
    fn manifest(&self) -> anyhow::Result<ExperimentManifest> {
        let scale = Scale::parse(&self.scale)?;
        let seeds = parse_seeds(&self.seeds)?;
        let out_dir = self.out.display().to_string();
        let mut manifest = match scale {
            Scale::Full => ExperimentManifest {
                seeds,
                out_dir,
                ..Default::default()
            },
            Scale::Desk => ExperimentManifest::desk(seeds, out_dir),
        };
        if let Some(n) = self.n_records {
            manifest.attack = AttackParams {
                n_records: n,
                ..manifest.attack
            };
        }
        Ok(manifest)
    }

    /// Validates the manifest against the out dir and loads MNIST.
    fn open(
        &self,
    ) -> anyhow::Result<(ExperimentManifest, String, OutDir, DatasetSplit, DatasetSplit)> {
        let out = OutDir::new(&self.out);
        let (manifest, digest) = pipeline::ensure_manifest(&out, &self.manifest()?, self.force)?;
        let dir = locate_mnist(self.data_dir.as_deref())?;
        let (train, test) = load_mnist(&dir)?;
        Ok((manifest, digest, out, train, test))
    }
}

fn check_seed(manifest: &ExperimentManifest, seed: u64) -> anyhow::Result<()> {
    anyhow::ensure!(
        manifest.seeds.contains(&seed),
        "seed {seed} is not in the manifest seed list {:?}",
        manifest.seeds
    );
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::FetchMnist { data_dir } => {
            let fetched = fetch::fetch_mnist(&data_dir)?;
            println!("{fetched} file(s) fetched, 4 verified in {}", data_dir.display());
        }
        Command::Train {
            protocol,
            seed,
            null_types,
            config,
        } => {
            let (manifest, _digest, out, train, _test) = protocol.open()?;
            check_seed(&manifest, seed)?;
            let only = null_types
                .as_deref()
                .map(NullTypeSet::parse)
                .transpose()?;
            if let Some(path) = config {
                // config-file mode trains exactly one model from the file
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let config = nullnet::trainer::TrainConfig::parse_config(&text)?;
                let ckpt = nullnet::trainer::train_model(&config, &train)?;
                let path = out.checkpoint(config.seed, config.null_types);
                std::fs::create_dir_all(path.parent().unwrap())?;
                nullnet::persist::save_checkpoint(&ckpt, &path)?;
                println!(
                    "trained from config (train accuracy {:.4}) -> {}",
                    ckpt.train_accuracy,
                    path.display()
                );
            } else {
                let trained = pipeline::train_stage(&manifest, &out, seed, only, &train)?;
                println!("seed {seed}: {trained} model(s) trained");
            }
        }
        Command::Attack { protocol, seed } => {
            let (manifest, digest, out, _train, test) = protocol.open()?;
            check_seed(&manifest, seed)?;
            pipeline::attack_stage(&manifest, &digest, &out, seed, &test)?;
        }
        Command::Sweep { protocol, seed } => {
            let (manifest, digest, out, _train, test) = protocol.open()?;
            check_seed(&manifest, seed)?;
            pipeline::score_stage(&manifest, &digest, &out, seed, &test)?;
        }
        Command::Probe {
            protocol,
            seed,
            resolution,
        } => {
            // toy world needs no MNIST
            let out = OutDir::new(&protocol.out);
            let (manifest, digest) =
                pipeline::ensure_manifest(&out, &protocol.manifest()?, protocol.force)?;
            check_seed(&manifest, seed)?;
            pipeline::probe_stage(&digest, &out, seed, resolution)?;
        }
        Command::Report { protocol } => {
            let out = OutDir::new(&protocol.out);
            let (_, digest) =
                pipeline::ensure_manifest(&out, &protocol.manifest()?, protocol.force)?;
            pipeline::report_stage(&digest, &out, protocol.force)?;
        }
        Command::Reproduce {
            protocol,
            resolution,
        } => {
            let (manifest, digest, out, train, test) = protocol.open()?;
            for &seed in &manifest.seeds {
                pipeline::train_stage(&manifest, &out, seed, None, &train)?;
                pipeline::attack_stage(&manifest, &digest, &out, seed, &test)?;
                pipeline::score_stage(&manifest, &digest, &out, seed, &test)?;
                pipeline::probe_stage(&digest, &out, seed, resolution)?;
            }
            pipeline::report_stage(&digest, &out, false)?;
            println!("reproduction complete: {}", out.report_dir().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with code 2 on usage errors; pipeline failures land here
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
