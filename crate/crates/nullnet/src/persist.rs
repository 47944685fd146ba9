//! Checkpoint serialization (magic "NGRD", digest-verified, little-endian
//! f32 payloads) and the experiment manifest that keys every artifact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::{ArchTag, LayerSpec};
use crate::error::{Error, Result};
use crate::network::{LayerParams, Network};
use crate::nullgen::NullTypeSet;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NGRD";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Full parameter set plus training provenance. Tensors are stored in the
/// fixed flat order: weights then bias, per parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub arch_tag: ArchTag,
    pub null_types: NullTypeSet,
    pub seed: u64,
    pub train_accuracy: f32,
    pub tensors: Vec<Tensor<f32>>,
}

impl ModelCheckpoint {
    pub fn from_network(
        net: &Network<f32>,
        null_types: NullTypeSet,
        seed: u64,
        train_accuracy: f32,
    ) -> Self {
        let mut tensors = Vec::new();
        for lp in net.params.iter().flatten() {
            tensors.push(lp.weights.clone());
            tensors.push(Tensor::from_vec(lp.bias.clone()));
        }
        Self {
            arch_tag: net.arch.tag,
            null_types,
            seed,
            train_accuracy,
            tensors,
        }
    }

    /// Reconstructs the network, verifying every tensor shape against the
    /// architecture descriptor.
    pub fn to_network(&self) -> Result<Network<f32>> {
        let arch = self.arch_tag.descriptor();
        let mut it = self.tensors.iter();
        let mut params = Vec::with_capacity(arch.layers.len());
        for layer in &arch.layers {
            let expected: Option<(Vec<usize>, usize)> = match *layer {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kh,
                    kw,
                } => Some((vec![kh, kw, in_ch, out_ch], out_ch)),
                LayerSpec::Dense { in_dim, out_dim } => Some((vec![in_dim, out_dim], out_dim)),
                _ => None,
            };
            params.push(match expected {
                None => None,
                Some((wshape, blen)) => {
                    let w = it.next().ok_or_else(|| {
                        Error::Corruption("missing weight tensor".into())
                    })?;
                    let b = it.next().ok_or_else(|| {
                        Error::Corruption("missing bias tensor".into())
                    })?;
                    if w.shape() != wshape.as_slice() || b.len() != blen {
                        return Err(Error::Corruption(format!(
                            "tensor shapes {:?}/{:?} do not match layer {layer:?}",
                            w.shape(),
                            b.shape()
                        )));
                    }
                    Some(LayerParams {
                        weights: w.clone(),
                        bias: b.data().to_vec(),
                    })
                }
            });
        }
        if it.next().is_some() {
            return Err(Error::Corruption("extra tensors in checkpoint".into()));
        }
        Ok(Network { arch, params })
    }

    fn payload_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.push(match self.arch_tag {
            ArchTag::MnistFull => 0,
            ArchTag::MnistDesk => 1,
            ArchTag::Toy => 2,
        });
        buf.push(self.null_types.bits());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.train_accuracy.to_le_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }
}

/// Writes atomically: temp file in the target directory, then rename.
pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    let mut bytes = ckpt.payload_bytes();
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 + 4 + 1 + 1 + 8 + 4 + 4 + 32 {
        return Err(Error::Corruption(format!(
            "checkpoint too short ({} bytes)",
            bytes.len()
        )));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::Corruption("content digest mismatch".into()));
    }
    if &payload[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::Corruption(format!(
            "bad magic {:?}",
            &payload[0..4]
        )));
    }
    let version = u32::from_le_bytes(payload[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(version));
    }
    let arch_tag = match payload[8] {
        0 => ArchTag::MnistFull,
        1 => ArchTag::MnistDesk,
        2 => ArchTag::Toy,
        other => return Err(Error::Corruption(format!("unknown arch tag byte {other}"))),
    };
    let null_types = NullTypeSet::from_bits(payload[9])
        .map_err(|_| Error::Corruption(format!("invalid null type bits {}", payload[9])))?;
    let seed = u64::from_le_bytes(payload[10..18].try_into().unwrap());
    let train_accuracy = f32::from_le_bytes(payload[18..22].try_into().unwrap());
    let n_tensors = u32::from_le_bytes(payload[22..26].try_into().unwrap()) as usize;

    let mut pos = 26;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        let slice = payload
            .get(*pos..*pos + n)
            .ok_or_else(|| Error::Corruption("truncated tensor payload".into()))?;
        *pos += n;
        Ok(slice)
    };
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let ndim = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let raw = take(&mut pos, n * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    if pos != payload.len() {
        return Err(Error::Corruption("trailing bytes in checkpoint".into()));
    }
    Ok(ModelCheckpoint {
        arch_tag,
        null_types,
        seed,
        train_accuracy,
        tensors,
    })
}

/// Loads and rejects checkpoints from a different architecture.
pub fn load_checkpoint_expect(path: &Path, expected: ArchTag) -> Result<ModelCheckpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.arch_tag != expected {
        return Err(Error::ArchTagMismatch {
            expected: expected.as_str().into(),
            found: ckpt.arch_tag.as_str().into(),
        });
    }
    Ok(ckpt)
}

/// One seed's adversarial records plus the provenance needed to refuse mixing
/// artifacts across manifests. JSON on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSet {
    pub manifest_digest: String,
    pub seed: u64,
    pub records: Vec<crate::attack::AdversarialRecord>,
}

impl AdversarialSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_string(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub n_records: usize,
    pub tolerance: f64,
    pub eps_scales: Vec<f64>,
    pub sweep_step: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self {
            n_records: 1000,
            tolerance: 1e-3,
            eps_scales: vec![1.0, 1.5],
            sweep_step: 0.05,
        }
    }
}

/// The reproducible experiment protocol: which seeds, which scale, and the
/// attack parameters. Defaults mirror the reference protocol counts
/// (30 seed-sets of 8 models, 1000 adversarial images per set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub seeds: Vec<u64>,
    pub scale: String,
    pub attack: AttackParams,
    pub out_dir: String,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        Self {
            seeds: (1..=30).collect(),
            scale: "full".into(),
            attack: AttackParams::default(),
            out_dir: "out".into(),
        }
    }
}

impl ExperimentManifest {
    pub fn desk(seeds: Vec<u64>, out_dir: String) -> Self {
        Self {
            seeds,
            scale: "desk".into(),
            attack: AttackParams {
                n_records: 200,
                ..AttackParams::default()
            },
            out_dir,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding; embedded in artifacts so
    /// reports refuse to mix outputs of different manifests.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
