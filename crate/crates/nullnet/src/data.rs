//! MNIST IDX ingestion and the 3-pixel ramp dataset.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Null label for the 11-output MNIST models (digits occupy 0..=9).
pub const MNIST_NULL_LABEL: usize = 10;
/// Null label for the 3-output toy models (down=0, up=1).
pub const TOY_NULL_LABEL: usize = 2;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// HWC pixels in [0,1]; 28x28x1 for MNIST, 1x3x1 for the toy world.
    pub pixels: Tensor<f32>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub images: Vec<LabeledImage>,
    pub role: SplitRole,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Truncated view of the first `n` images (desk-scale training subset).
    pub fn subset(&self, n: usize) -> DatasetSplit {
        DatasetSplit {
            images: self.images[..n.min(self.images.len())].to_vec(),
            role: self.role,
        }
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let slice = bytes.get(offset..offset + 4).ok_or_else(|| Error::Ingestion {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: "truncated header".into(),
    })?;
    Ok(u32::from_be_bytes(slice.try_into().unwrap()))
}

/// Loads an IDX image/label file pair. Pixel bytes are scaled by 1/255 into
/// [0,1]; sample order is preserved.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    role: SplitRole,
) -> Result<DatasetSplit> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;

    let magic = read_u32_be(&img_bytes, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Ingestion {
            path: images_path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(&img_bytes, 4, images_path)? as usize;
    let rows = read_u32_be(&img_bytes, 8, images_path)? as usize;
    let cols = read_u32_be(&img_bytes, 12, images_path)? as usize;
    let expected_len = 16 + count * rows * cols;
    if img_bytes.len() != expected_len {
        return Err(Error::Ingestion {
            path: images_path.to_path_buf(),
            offset: img_bytes.len().min(expected_len) as u64,
            reason: format!("expected {expected_len} bytes, found {}", img_bytes.len()),
        });
    }

    let lmagic = read_u32_be(&lbl_bytes, 0, labels_path)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Ingestion {
            path: labels_path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let lcount = read_u32_be(&lbl_bytes, 4, labels_path)? as usize;
    if lcount != count {
        return Err(Error::Ingestion {
            path: labels_path.to_path_buf(),
            offset: 4,
            reason: format!("label count {lcount} != image count {count}"),
        });
    }
    if lbl_bytes.len() != 8 + count {
        return Err(Error::Ingestion {
            path: labels_path.to_path_buf(),
            offset: lbl_bytes.len().min(8 + count) as u64,
            reason: format!("expected {} bytes, found {}", 8 + count, lbl_bytes.len()),
        });
    }

    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        let pixels: Vec<f32> = img_bytes[start..start + rows * cols]
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        let label = lbl_bytes[8 + i] as usize;
        if label > 9 {
            return Err(Error::Ingestion {
                path: labels_path.to_path_buf(),
                offset: (8 + i) as u64,
                reason: format!("label {label} out of digit range"),
            });
        }
        images.push(LabeledImage {
            pixels: Tensor::new(vec![rows, cols, 1], pixels)?,
            label,
        });
    }
    Ok(DatasetSplit { images, role })
}

/// Re-serializes a split to the IDX pair format (round-trip inverse of
/// `load_idx` for byte-255-quantized data).
pub fn save_idx(split: &DatasetSplit, images_path: &Path, labels_path: &Path) -> Result<()> {
    let [rows, cols, _] = *split.images[0].pixels.shape() else {
        return Err(Error::InvalidArgument("expected HWC images".into()));
    };
    let mut img_bytes = Vec::with_capacity(16 + split.len() * rows * cols);
    img_bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img_bytes.extend_from_slice(&(split.len() as u32).to_be_bytes());
    img_bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    img_bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut lbl_bytes = Vec::with_capacity(8 + split.len());
    lbl_bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl_bytes.extend_from_slice(&(split.len() as u32).to_be_bytes());
    for img in &split.images {
        img_bytes.extend(img.pixels.data().iter().map(|&p| (p * 255.0).round() as u8));
        lbl_bytes.push(img.label as u8);
    }
    fs::write(images_path, img_bytes)?;
    fs::write(labels_path, lbl_bytes)?;
    Ok(())
}

/// Locates the MNIST IDX files: explicit dir, else `NULLNET_DATA_DIR`, else
/// `./data/mnist`, else `~/.cache/nullnet/mnist`.
pub fn locate_mnist(explicit: Option<&Path>) -> Result<PathBuf> {
    let mut candidates: Vec<PathBuf> = Vec::new();
    if let Some(dir) = explicit {
        candidates.push(dir.to_path_buf());
    }
    if let Ok(env_dir) = std::env::var("NULLNET_DATA_DIR") {
        candidates.push(PathBuf::from(env_dir));
    }
    candidates.push(PathBuf::from("data/mnist"));
    if let Ok(home) = std::env::var("HOME") {
        candidates.push(PathBuf::from(home).join(".cache/nullnet/mnist"));
    }
    for dir in &candidates {
        if dir.join("train-images-idx3-ubyte").exists() {
            return Ok(dir.clone());
        }
    }
    Err(Error::InvalidArgument(format!(
        "MNIST files not found; searched {candidates:?} (set NULLNET_DATA_DIR or run fetch-mnist)"
    )))
}

pub fn load_mnist(dir: &Path) -> Result<(DatasetSplit, DatasetSplit)> {
    let train = load_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
        SplitRole::Train,
    )?;
    let test = load_idx(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
        SplitRole::Test,
    )?;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyClass {
    Down,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyPosition {
    Left,
    Right,
}

/// Prototype 3-pixel image: a (2/3, 1/3) down ramp or (1/3, 2/3) up ramp in
/// the left or right adjacent pixel pair; the off-ramp pixel is 0.
pub fn toy_prototype(class: ToyClass, position: ToyPosition) -> [f32; 3] {
    let (a, b) = match class {
        ToyClass::Down => (2.0 / 3.0, 1.0 / 3.0),
        ToyClass::Up => (1.0 / 3.0, 2.0 / 3.0),
    };
    match position {
        ToyPosition::Left => [a, b, 0.0],
        ToyPosition::Right => [0.0, a, b],
    }
}

/// Prototype plus i.i.d. uniform noise in [-0.05, 0.05] on every pixel,
/// clipped to [0,1]. Label is 0 for down, 1 for up.
pub fn gen_toy_sample<R: Rng>(
    class: ToyClass,
    position: ToyPosition,
    rng: &mut R,
) -> LabeledImage {
    let proto = toy_prototype(class, position);
    let pixels: Vec<f32> = proto
        .iter()
        .map(|&p| (p + rng.gen_range(-0.05f32..=0.05)).clamp(0.0, 1.0))
        .collect();
    LabeledImage {
        pixels: Tensor::new(vec![1, 3, 1], pixels).unwrap(),
        label: match class {
            ToyClass::Down => 0,
            ToyClass::Up => 1,
        },
    }
}
