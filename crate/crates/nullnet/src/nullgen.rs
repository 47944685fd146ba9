//! Null-sample generation: uniform noise, mixed-digit means, shuffled-digit
//! tiles, and mixed digit/null batch composition.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{DatasetSplit, LabeledImage, MNIST_NULL_LABEL};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TILE_SIZES: [usize; 5] = [1, 2, 4, 7, 14];

/// Which null-sample types a model is trained with. The empty set is the
/// baseline model; the 8 possible values enumerate the 8 model types.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NullTypeSet {
    pub uniform: bool,
    pub shuffled: bool,
    pub mixed: bool,
}

impl NullTypeSet {
    pub const BASELINE: NullTypeSet = NullTypeSet {
        uniform: false,
        shuffled: false,
        mixed: false,
    };

    pub fn is_baseline(&self) -> bool {
        !self.uniform && !self.shuffled && !self.mixed
    }

    /// All 8 model types in the fixed training order:
    /// base, u, s, m, us, um, sm, usm.
    pub fn all() -> [NullTypeSet; 8] {
        let f = |u, s, m| NullTypeSet {
            uniform: u,
            shuffled: s,
            mixed: m,
        };
        [
            f(false, false, false),
            f(true, false, false),
            f(false, true, false),
            f(false, false, true),
            f(true, true, false),
            f(true, false, true),
            f(false, true, true),
            f(true, true, true),
        ]
    }

    pub fn name(&self) -> String {
        if self.is_baseline() {
            return "base".into();
        }
        let mut s = String::new();
        if self.uniform {
            s.push('u');
        }
        if self.shuffled {
            s.push('s');
        }
        if self.mixed {
            s.push('m');
        }
        s
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "base" || s.is_empty() {
            return Ok(Self::BASELINE);
        }
        let mut set = Self::BASELINE;
        for c in s.chars() {
            match c {
                'u' => set.uniform = true,
                's' => set.shuffled = true,
                'm' => set.mixed = true,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown null type {other:?} in {s:?} (expected u/s/m or 'base')"
                    )))
                }
            }
        }
        Ok(set)
    }

    fn enabled(&self) -> Vec<NullKind> {
        let mut kinds = Vec::new();
        if self.uniform {
            kinds.push(NullKind::Uniform);
        }
        if self.shuffled {
            kinds.push(NullKind::Shuffled);
        }
        if self.mixed {
            kinds.push(NullKind::Mixed);
        }
        kinds
    }

    pub fn bits(&self) -> u8 {
        (self.uniform as u8) | (self.shuffled as u8) << 1 | (self.mixed as u8) << 2
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits > 7 {
            return Err(Error::InvalidArgument(format!(
                "invalid null type bits {bits:#04x}"
            )));
        }
        Ok(NullTypeSet {
            uniform: bits & 1 != 0,
            shuffled: bits & 2 != 0,
            mixed: bits & 4 != 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NullKind {
    Uniform,
    Shuffled,
    Mixed,
}

/// 28x28 i.i.d. uniform [0,1] pixels, labeled null.
pub fn gen_uniform_null<R: Rng>(rng: &mut R) -> LabeledImage {
    let pixels: Vec<f32> = (0..28 * 28).map(|_| rng.gen_range(0.0f32..=1.0)).collect();
    LabeledImage {
        pixels: Tensor::new(vec![28, 28, 1], pixels).unwrap(),
        label: MNIST_NULL_LABEL,
    }
}

/// Pixelwise mean of two digit samples of different classes, labeled null.
pub fn gen_mixed_null(a: &LabeledImage, b: &LabeledImage) -> Result<LabeledImage> {
    if a.label == b.label {
        return Err(Error::InvalidArgument(format!(
            "mixed null sources must have different labels (both {})",
            a.label
        )));
    }
    let pixels: Vec<f32> = a
        .pixels
        .data()
        .iter()
        .zip(b.pixels.data())
        .map(|(&x, &y)| (x + y) / 2.0)
        .collect();
    Ok(LabeledImage {
        pixels: Tensor::new(a.pixels.shape().to_vec(), pixels)?,
        label: MNIST_NULL_LABEL,
    })
}

/// Partitions a 28x28 digit image into (28/t)^2 tiles of side `tile_size`
/// and rearranges them: output tile i receives source tile `permutation[i]`.
pub fn gen_shuffled_null(
    src: &LabeledImage,
    tile_size: usize,
    permutation: &[usize],
) -> Result<LabeledImage> {
    let [h, w, _] = *src.pixels.shape() else {
        return Err(Error::InvalidArgument("expected HWC image".into()));
    };
    if tile_size == 0 || h % tile_size != 0 || w % tile_size != 0 {
        return Err(Error::InvalidArgument(format!(
            "tile size {tile_size} does not divide {h}x{w}"
        )));
    }
    let tiles_per_row = w / tile_size;
    let n_tiles = (h / tile_size) * tiles_per_row;
    if permutation.len() != n_tiles {
        return Err(Error::InvalidArgument(format!(
            "permutation length {} != tile count {n_tiles}",
            permutation.len()
        )));
    }
    let x = src.pixels.data();
    let mut out = vec![0.0f32; x.len()];
    for (dst_tile, &src_tile) in permutation.iter().enumerate() {
        let (dty, dtx) = (dst_tile / tiles_per_row, dst_tile % tiles_per_row);
        let (sty, stx) = (src_tile / tiles_per_row, src_tile % tiles_per_row);
        for dy in 0..tile_size {
            for dx in 0..tile_size {
                let d = (dty * tile_size + dy) * w + dtx * tile_size + dx;
                let s = (sty * tile_size + dy) * w + stx * tile_size + dx;
                out[d] = x[s];
            }
        }
    }
    Ok(LabeledImage {
        pixels: Tensor::new(vec![h, w, 1], out)?,
        label: MNIST_NULL_LABEL,
    })
}

fn draw_digit<R: Rng>(train: &DatasetSplit, rng: &mut R) -> LabeledImage {
    train.images[rng.gen_range(0..train.len())].clone()
}

/// One training batch. With an empty `NullTypeSet` every slot is a digit
/// sample drawn i.i.d. from the training set; otherwise each slot is null
/// with probability 1/2 and a null slot's type is uniform over the enabled
/// types. All shuffled nulls within a batch share one tile size and one tile
/// permutation.
///
/// Digit draws consume `digit_rng` (the batch-sampling stream); the null
/// coin, null type choice, and null construction consume `null_rng` (the
/// nullgen stream), so baseline and null-trained runs see identical digit
/// draw sequences.
pub fn compose_batch<R: Rng, S: Rng>(
    train: &DatasetSplit,
    null_types: NullTypeSet,
    batch_size: usize,
    digit_rng: &mut R,
    null_rng: &mut S,
) -> Vec<LabeledImage> {
    let kinds = null_types.enabled();
    if kinds.is_empty() {
        return (0..batch_size).map(|_| draw_digit(train, digit_rng)).collect();
    }

    // per-batch shared tile scale and shuffle order
    let (tile_size, permutation) = if null_types.shuffled {
        let t = TILE_SIZES[null_rng.gen_range(0..TILE_SIZES.len())];
        let n_tiles = (28 / t) * (28 / t);
        let mut perm: Vec<usize> = (0..n_tiles).collect();
        perm.shuffle(null_rng);
        (t, perm)
    } else {
        (0, Vec::new())
    };

    (0..batch_size)
        .map(|_| {
            if null_rng.gen::<f64>() < 0.5 {
                match kinds[null_rng.gen_range(0..kinds.len())] {
                    NullKind::Uniform => gen_uniform_null(null_rng),
                    NullKind::Shuffled => {
                        let src = draw_digit(train, null_rng);
                        gen_shuffled_null(&src, tile_size, &permutation)
                            .expect("tile size divides 28")
                    }
                    NullKind::Mixed => {
                        let a = draw_digit(train, null_rng);
                        loop {
                            let b = draw_digit(train, null_rng);
                            if b.label != a.label {
                                break gen_mixed_null(&a, &b).expect("labels differ");
                            }
                        }
                    }
                }
            } else {
                draw_digit(train, digit_rng)
            }
        })
        .collect()
}
