//! Explicit forward/backward kernels for every layer kind in the fixed
//! architectures: valid 2-D convolution, dense, ReLU, 2x2 max pooling,
//! inverted dropout, and flatten.
//!
//! Summation order is fixed (row-major scans, innermost loop over output
//! channels) so repeated runs are bitwise reproducible. Images are HWC;
//! conv kernels are (kh, kw, in_ch, out_ch).

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn expect_rank3<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::ShapeMismatch {
            op,
            expected: "rank-3 HWC tensor".into(),
            got: format!("{:?}", t.shape()),
        }),
    }
}

/// Valid convolution: output spatial dim = input dim - kernel dim + 1.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>> {
    let (h, w, cin) = expect_rank3("conv2d_forward", input)?;
    let (kh, kw, kcin, cout) = match *kernel.shape() {
        [kh, kw, kcin, cout] => (kh, kw, kcin, cout),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "conv2d_forward",
                expected: "rank-4 (kh, kw, in_ch, out_ch) kernel".into(),
                got: format!("{:?}", kernel.shape()),
            })
        }
    };
    if kcin != cin || bias.len() != cout {
        return Err(Error::ShapeMismatch {
            op: "conv2d_forward",
            expected: format!("in_ch {cin}, bias len {cout}"),
            got: format!("kernel in_ch {kcin}, bias len {}", bias.len()),
        });
    }
    if h < kh || w < kw {
        return Err(Error::ShapeMismatch {
            op: "conv2d_forward",
            expected: format!("input spatial dims >= ({kh}, {kw})"),
            got: format!("({h}, {w})"),
        });
    }

    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let x = input.data();
    let k = kernel.data();
    let patch = kh * kw * cin;
    let cols = im2col(x, h, w, cin, kh, kw);

    // Register-blocked GEMM: out (oh*ow x cout) = cols (oh*ow x patch) * k
    // (patch x cout). The channel counts used by the fixed architectures get
    // const-size accumulators so the block stays in registers.
    let np = oh * ow;
    let mut out = vec![T::zero(); np * cout];
    match cout {
        8 => gemm_rows::<T, 8>(&cols, k, bias, &mut out, np, patch),
        16 => gemm_rows::<T, 16>(&cols, k, bias, &mut out, np, patch),
        32 => gemm_rows::<T, 32>(&cols, k, bias, &mut out, np, patch),
        64 => gemm_rows::<T, 64>(&cols, k, bias, &mut out, np, patch),
        _ => gemm_rows_generic(&cols, k, bias, &mut out, np, patch, cout),
    }
    Tensor::new(vec![oh, ow, cout], out)
}

/// Pixels-per-block in the register-blocked matrix kernels. Blocking changes
/// only load reuse, never the per-element accumulation order.
const GEMM_MR: usize = 4;

#[inline(always)]
fn gemm_rows<T: Scalar, const NR: usize>(
    cols: &[T],
    k: &[T],
    bias: &[T],
    out: &mut [T],
    np: usize,
    patch: usize,
) {
    let mut i = 0;
    while i < np {
        let m = GEMM_MR.min(np - i);
        let mut acc = [[T::zero(); NR]; GEMM_MR];
        for row in acc.iter_mut().take(m) {
            for (a, &b) in row.iter_mut().zip(bias) {
                *a = b;
            }
        }
        for r in 0..patch {
            let krow: &[T; NR] = k[r * NR..(r + 1) * NR].try_into().unwrap();
            for row in 0..m {
                let cv = cols[(i + row) * patch + r];
                for c in 0..NR {
                    acc[row][c] = acc[row][c] + cv * krow[c];
                }
            }
        }
        for row in 0..m {
            out[(i + row) * NR..(i + row + 1) * NR].copy_from_slice(&acc[row]);
        }
        i += m;
    }
}

/// gk (patch x NR) += cols^T (patch x np) * g (np x NR), pixel-blocked. For a
/// fixed gk element, contributions still accumulate in ascending pixel order.
#[inline(always)]
fn gemm_accum<T: Scalar, const NR: usize>(
    cols: &[T],
    g: &[T],
    gk: &mut [T],
    np: usize,
    patch: usize,
) {
    let mut i = 0;
    while i < np {
        let m = GEMM_MR.min(np - i);
        let mut grows = [[T::zero(); NR]; GEMM_MR];
        for row in 0..m {
            grows[row].copy_from_slice(&g[(i + row) * NR..(i + row + 1) * NR]);
        }
        for r in 0..patch {
            let gkrow = &mut gk[r * NR..(r + 1) * NR];
            let mut acc: [T; NR] = (&*gkrow).try_into().unwrap();
            for row in 0..m {
                let cv = cols[(i + row) * patch + r];
                for c in 0..NR {
                    acc[c] = acc[c] + cv * grows[row][c];
                }
            }
            gkrow.copy_from_slice(&acc);
        }
        i += m;
    }
}

fn gemm_accum_generic<T: Scalar>(
    cols: &[T],
    g: &[T],
    gk: &mut [T],
    np: usize,
    patch: usize,
    cout: usize,
) {
    for i in 0..np {
        let grow = &g[i * cout..(i + 1) * cout];
        let crow = &cols[i * patch..(i + 1) * patch];
        for (r, &cv) in crow.iter().enumerate() {
            let gkrow = &mut gk[r * cout..(r + 1) * cout];
            for (gkv, &gv) in gkrow.iter_mut().zip(grow) {
                *gkv = *gkv + cv * gv;
            }
        }
    }
}

fn gemm_rows_generic<T: Scalar>(
    cols: &[T],
    k: &[T],
    bias: &[T],
    out: &mut [T],
    np: usize,
    patch: usize,
    cout: usize,
) {
    for i in 0..np {
        let orow = &mut out[i * cout..(i + 1) * cout];
        orow.copy_from_slice(bias);
        let crow = &cols[i * patch..(i + 1) * patch];
        for (r, &cv) in crow.iter().enumerate() {
            let krow = &k[r * cout..(r + 1) * cout];
            for (o, &kv) in orow.iter_mut().zip(krow) {
                *o = *o + cv * kv;
            }
        }
    }
}

/// Gathers every valid kh x kw window into a dense row, one row per output
/// pixel, inner layout (ky, kx, ci) matching the kernel's leading dims.
fn im2col<T: Scalar>(
    x: &[T],
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
) -> Vec<T> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let patch = kh * kw * cin;
    let mut cols = vec![T::zero(); oh * ow * patch];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * patch..(oy * ow + ox + 1) * patch];
            for ky in 0..kh {
                let xbase = ((oy + ky) * w + ox) * cin;
                row[ky * kw * cin..(ky + 1) * kw * cin]
                    .copy_from_slice(&x[xbase..xbase + kw * cin]);
            }
        }
    }
    cols
}

/// Scatter-adds patch-row gradients back to input positions (inverse of
/// `im2col`); overlapping windows accumulate in fixed row-major order.
fn col2im<T: Scalar>(
    dcols: &[T],
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
) -> Vec<T> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let patch = kh * kw * cin;
    let mut gin = vec![T::zero(); h * w * cin];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &dcols[(oy * ow + ox) * patch..(oy * ow + ox + 1) * patch];
            for ky in 0..kh {
                let xbase = ((oy + ky) * w + ox) * cin;
                let grow = &row[ky * kw * cin..(ky + 1) * kw * cin];
                for (g, &d) in gin[xbase..xbase + kw * cin].iter_mut().zip(grow) {
                    *g = *g + d;
                }
            }
        }
    }
    gin
}

/// Chain-rule gradients for `conv2d_forward`. Returns
/// (grad_input, grad_kernel, grad_bias).
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    kernel: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (h, w, cin) = expect_rank3("conv2d_backward", cached_input)?;
    let (kh, kw, _, cout) = match *kernel.shape() {
        [kh, kw, kcin, cout] if kcin == cin => (kh, kw, kcin, cout),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "conv2d_backward",
                expected: format!("kernel (kh, kw, {cin}, out_ch)"),
                got: format!("{:?}", kernel.shape()),
            })
        }
    };
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    if grad_out.shape() != [oh, ow, cout] {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            expected: format!("grad_out shape [{oh}, {ow}, {cout}]"),
            got: format!("{:?}", grad_out.shape()),
        });
    }

    let x = cached_input.data();
    let k = kernel.data();
    let g = grad_out.data();
    let patch = kh * kw * cin;
    let np = oh * ow;
    let cols = im2col(x, h, w, cin, kh, kw);

    let mut gb = vec![T::zero(); cout];
    for grow in g.chunks_exact(cout) {
        for (b, &gv) in gb.iter_mut().zip(grow) {
            *b = *b + gv;
        }
    }

    // gk (patch x cout) = cols^T * g, blocked over pixels so each gk row
    // stays in registers across the block.
    let mut gk = vec![T::zero(); k.len()];
    match cout {
        8 => gemm_accum::<T, 8>(&cols, g, &mut gk, np, patch),
        16 => gemm_accum::<T, 16>(&cols, g, &mut gk, np, patch),
        32 => gemm_accum::<T, 32>(&cols, g, &mut gk, np, patch),
        64 => gemm_accum::<T, 64>(&cols, g, &mut gk, np, patch),
        _ => gemm_accum_generic(&cols, g, &mut gk, np, patch, cout),
    }

    // dcols (np x patch) = g * k^T as patch-wide AXPY rows, then scatter back.
    let mut kt = vec![T::zero(); cout * patch];
    for r in 0..patch {
        for co in 0..cout {
            kt[co * patch + r] = k[r * cout + co];
        }
    }
    let mut dcols = vec![T::zero(); np * patch];
    for (i, grow) in g.chunks_exact(cout).enumerate() {
        let drow = &mut dcols[i * patch..(i + 1) * patch];
        for (co, &gv) in grow.iter().enumerate() {
            let krow = &kt[co * patch..(co + 1) * patch];
            for (d, &kv) in drow.iter_mut().zip(krow) {
                *d = *d + gv * kv;
            }
        }
    }
    let gin = col2im(&dcols, h, w, cin, kh, kw);

    Ok((
        Tensor::new(vec![h, w, cin], gin)?,
        Tensor::new(vec![kh, kw, cin, cout], gk)?,
        gb,
    ))
}

/// Dot product with 8 fixed accumulator lanes. The lane split lets the
/// compiler vectorize the reduction while keeping a fixed summation order, so
/// results stay bitwise reproducible run to run.
fn dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for i in 0..chunks {
        let av = &a[i * LANES..(i + 1) * LANES];
        let bv = &b[i * LANES..(i + 1) * LANES];
        for l in 0..LANES {
            acc[l] = acc[l] + av[l] * bv[l];
        }
    }
    let mut sum = T::zero();
    for (&av, &bv) in a[chunks * LANES..].iter().zip(&b[chunks * LANES..]) {
        sum = sum + av * bv;
    }
    for lane in acc {
        sum = sum + lane;
    }
    sum
}

/// Dense layer, weights stored (in_dim, out_dim) row-major.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>> {
    let (ind, outd) = match *weights.shape() {
        [i, o] => (i, o),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "dense_forward",
                expected: "rank-2 weights".into(),
                got: format!("{:?}", weights.shape()),
            })
        }
    };
    if input.len() != ind || bias.len() != outd {
        return Err(Error::ShapeMismatch {
            op: "dense_forward",
            expected: format!("input len {ind}, bias len {outd}"),
            got: format!("input len {}, bias len {}", input.len(), bias.len()),
        });
    }
    let x = input.data();
    let w = weights.data();
    let mut out = bias.to_vec();
    for i in 0..ind {
        let xv = x[i];
        let wrow = &w[i * outd..(i + 1) * outd];
        for (o, &wv) in out.iter_mut().zip(wrow) {
            *o = *o + xv * wv;
        }
    }
    Ok(Tensor::from_vec(out))
}

/// Returns (grad_input, grad_weights, grad_bias).
pub fn dense_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (ind, outd) = match *weights.shape() {
        [i, o] => (i, o),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "dense_backward",
                expected: "rank-2 weights".into(),
                got: format!("{:?}", weights.shape()),
            })
        }
    };
    if grad_out.len() != outd || cached_input.len() != ind {
        return Err(Error::ShapeMismatch {
            op: "dense_backward",
            expected: format!("grad_out len {outd}, input len {ind}"),
            got: format!("{} and {}", grad_out.len(), cached_input.len()),
        });
    }
    let g = grad_out.data();
    let x = cached_input.data();
    let w = weights.data();
    let mut gin = vec![T::zero(); ind];
    let mut gw = vec![T::zero(); ind * outd];
    for i in 0..ind {
        let xv = x[i];
        let wrow = &w[i * outd..(i + 1) * outd];
        let gwrow = &mut gw[i * outd..(i + 1) * outd];
        for (gwv, &gv) in gwrow.iter_mut().zip(g) {
            *gwv = xv * gv;
        }
        gin[i] = dot_lanes(wrow, g);
    }
    Ok((
        Tensor::from_vec(gin),
        Tensor::new(vec![ind, outd], gw)?,
        g.to_vec(),
    ))
}

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    out
}

pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, cached_input: &Tensor<T>) -> Tensor<T> {
    let mut gin = grad_out.clone();
    for (g, &x) in gin.data_mut().iter_mut().zip(cached_input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    gin
}

/// 2-D max pooling with square window and stride equal to the window size.
/// Returns the pooled tensor and the flat input index of each window argmax
/// (ties broken to the first element in row-major scan order).
pub fn maxpool2d_forward<T: Scalar>(
    input: &Tensor<T>,
    size: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (h, w, c) = expect_rank3("maxpool2d_forward", input)?;
    if size == 0 || h % size != 0 || w % size != 0 {
        return Err(Error::ShapeMismatch {
            op: "maxpool2d_forward",
            expected: format!("spatial dims divisible by pool size {size}"),
            got: format!("({h}, {w})"),
        });
    }
    let (oh, ow) = (h / size, w / size);
    let x = input.data();
    let mut out = vec![T::zero(); oh * ow * c];
    let mut argmax = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ci in 0..c {
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = ((oy * size + dy) * w + (ox * size + dx)) * c + ci;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ci;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((Tensor::new(vec![oh, ow, c], out)?, argmax))
}

/// Routes each output gradient to the cached argmax position of its window.
pub fn maxpool2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::ShapeMismatch {
            op: "maxpool2d_backward",
            expected: format!("grad_out len {}", argmax.len()),
            got: format!("{}", grad_out.len()),
        });
    }
    let mut gin = Tensor::zeros(input_shape.to_vec());
    let gd = gin.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gd[idx] = gd[idx] + g;
    }
    Ok(gin)
}

/// Inverted dropout: surviving elements are scaled by 1/(1-rate) at train
/// time so inference is the identity. Returns the output and the mask of
/// per-element scale factors (0 for dropped).
pub fn dropout_forward<T: Scalar, R: Rng>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut R,
) -> (Tensor<T>, Vec<T>) {
    debug_assert!((0.0..1.0).contains(&rate));
    let keep_scale = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep_scale
            }
        })
        .collect();
    let mut out = input.clone();
    for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
        *o = *o * m;
    }
    (out, mask)
}

pub fn dropout_backward<T: Scalar>(grad_out: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut gin = grad_out.clone();
    for (g, &m) in gin.data_mut().iter_mut().zip(mask) {
        *g = *g * m;
    }
    gin
}

/// Flatten is a reshape; the data is already row-major.
pub fn flatten<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let n = input.len();
    input.clone().reshape(vec![n]).expect("same element count")
}
