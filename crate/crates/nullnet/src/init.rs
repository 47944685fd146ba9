//! Glorot-uniform weight initialization. Biases start at zero.

use rand::Rng;

use crate::tensor::{Scalar, Tensor};

/// Fan in/out for a parameter tensor. Dense weights are (in, out); conv
/// kernels (kh, kw, in_ch, out_ch) use receptive-field size times channels,
/// the standard convention.
pub fn fan_in_out(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [i, o] => (i, o),
        [kh, kw, cin, cout] => (kh * kw * cin, kh * kw * cout),
        _ => {
            let n: usize = shape.iter().product();
            (n, n)
        }
    }
}

/// i.i.d. uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<T: Scalar, R: Rng>(shape: Vec<usize>, rng: &mut R) -> Tensor<T> {
    let (fan_in, fan_out) = fan_in_out(&shape);
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| T::from_f64(rng.gen_range(-limit..=limit)))
        .collect();
    Tensor::new(shape, data).expect("length matches shape by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStreams, StreamKind};

    #[test]
    fn dense_limit_bound() {
        let mut rng = RngStreams::new(1).stream(StreamKind::Init);
        let t: Tensor<f32> = glorot_uniform(vec![9216, 128], &mut rng);
        let limit = (6.0f64 / 9344.0).sqrt();
        assert!((limit - 0.02534).abs() < 1e-4);
        assert!(t
            .data()
            .iter()
            .all(|&v| (v as f64) >= -limit && (v as f64) <= limit));
    }

    #[test]
    fn same_seed_bit_identical() {
        let mut a = RngStreams::new(42).stream(StreamKind::Init);
        let mut b = RngStreams::new(42).stream(StreamKind::Init);
        let ta: Tensor<f32> = glorot_uniform(vec![3, 3, 1, 8], &mut a);
        let tb: Tensor<f32> = glorot_uniform(vec![3, 3, 1, 8], &mut b);
        assert_eq!(ta.data(), tb.data());
    }

    #[test]
    fn sample_mean_near_zero() {
        let mut rng = RngStreams::new(7).stream(StreamKind::Init);
        let n = 100_000;
        let t: Tensor<f64> = glorot_uniform(vec![n], &mut rng);
        let limit = (6.0 / (2.0 * n as f64)).sqrt();
        let mean = t.data().iter().sum::<f64>() / n as f64;
        // CLT bound: 3 sigma of the sample mean, sigma = L/sqrt(3n)
        let bound = 3.0 * limit / (3.0 * n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean}, bound {bound}");
    }

    #[test]
    fn conv_fans_use_receptive_field() {
        assert_eq!(fan_in_out(&[3, 3, 32, 64]), (288, 576));
        assert_eq!(fan_in_out(&[9216, 128]), (9216, 128));
    }
}
