//! MNIST download with pinned-digest verification. This is the only network
//! access in the project; files that already verify are never re-fetched.

use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context};
use sha2::{Digest, Sha256};

/// (file name, SHA-256 of the uncompressed IDX payload)
pub const MNIST_FILES: [(&str, &str); 4] = [
    (
        "train-images-idx3-ubyte",
        "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    ),
    (
        "train-labels-idx1-ubyte",
        "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    ),
    (
        "t10k-images-idx3-ubyte",
        "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    ),
    (
        "t10k-labels-idx1-ubyte",
        "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    ),
];

const MIRRORS: [&str; 2] = [
    "https://ossci-datasets.s3.amazonaws.com/mnist",
    "https://storage.googleapis.com/cvdf-datasets/mnist",
];

fn digest_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn download(name: &str) -> anyhow::Result<Vec<u8>> {
    let mut last_err = None;
    for mirror in MIRRORS {
        let url = format!("{mirror}/{name}.gz");
        match ureq::get(&url).call() {
            Ok(resp) => {
                let mut gz = Vec::new();
                resp.into_reader()
                    .read_to_end(&mut gz)
                    .with_context(|| format!("reading {url}"))?;
                let mut raw = Vec::new();
                flate2::read::GzDecoder::new(gz.as_slice())
                    .read_to_end(&mut raw)
                    .with_context(|| format!("decompressing {url}"))?;
                return Ok(raw);
            }
            Err(e) => last_err = Some(anyhow::anyhow!("{url}: {e}")),
        }
    }
    Err(last_err.unwrap())
}

/// Ensures all four IDX files exist in `dir` with the pinned digests,
/// downloading any that are missing or corrupt. Returns how many files were
/// fetched.
pub fn fetch_mnist(dir: &Path) -> anyhow::Result<usize> {
    fs::create_dir_all(dir)?;
    let mut fetched = 0usize;
    for (name, want) in MNIST_FILES {
        let path = dir.join(name);
        if let Ok(bytes) = fs::read(&path) {
            if digest_hex(&bytes) == want {
                println!("{name}: ok (digest verified)");
                continue;
            }
            println!("{name}: digest mismatch, re-fetching");
        }
        let bytes = download(name).with_context(|| format!("fetching {name}"))?;
        let got = digest_hex(&bytes);
        if got != want {
            bail!("{name}: downloaded digest {got} does not match pinned {want}");
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &path)?;
        println!("{name}: fetched and verified");
        fetched += 1;
    }
    Ok(fetched)
}
