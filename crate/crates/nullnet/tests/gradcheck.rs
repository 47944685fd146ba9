//! Finite-difference verification of every backward pass in f64.
//!
//! Each analytic gradient is compared against central differences
//! (f(x+h) - f(x-h)) / 2h of a scalar probe loss. The probe is a random
//! linear functional of the layer output, which exercises the full Jacobian.

use nullnet::arch::ArchitectureDescriptor;
use nullnet::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout_backward,
    dropout_forward, maxpool2d_backward, maxpool2d_forward, relu_backward, relu_forward,
};
use nullnet::loss::softmax_cross_entropy;
use nullnet::network::Network;
use nullnet::tensor::Tensor;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn rand_tensor(shape: Vec<usize>, rng: &mut StdRng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Compares `analytic[i]` to the central difference of `eval` when element
/// `i` of the probed buffer is displaced by +-H.
fn assert_matches_fd(
    what: &str,
    analytic: &[f64],
    mut eval: impl FnMut(usize, f64) -> f64,
) {
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = (eval(i, H) - eval(i, -H)) / (2.0 * H);
        let err = rel_err(a, numeric);
        assert!(
            err < TOL,
            "{what}[{i}]: analytic {a:.9e} vs numeric {numeric:.9e} (rel err {err:.3e})"
        );
    }
}

/// Probe loss: fixed random linear functional of the layer output.
fn probe(out: &Tensor<f64>, weights: &[f64]) -> f64 {
    out.data().iter().zip(weights).map(|(&o, &w)| o * w).sum()
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(11);
    for inst in 0..5 {
        let (h, w, cin, cout, kh, kw) = match inst {
            0 => (4, 4, 1, 2, 3, 3),
            1 => (5, 4, 2, 3, 2, 2),
            2 => (3, 6, 3, 2, 1, 2),
            3 => (6, 3, 2, 4, 3, 1),
            _ => (4, 5, 3, 3, 2, 3),
        };
        let input = rand_tensor(vec![h, w, cin], &mut rng);
        let kernel = rand_tensor(vec![kh, kw, cin, cout], &mut rng);
        let bias: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = conv2d_forward(&input, &kernel, &bias).unwrap();
        let pw: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let grad_out = Tensor::new(out.shape().to_vec(), pw.clone()).unwrap();
        let (gin, gk, gb) = conv2d_backward(&grad_out, &input, &kernel).unwrap();

        assert_matches_fd("conv grad_input", gin.data(), |i, d| {
            let mut x = input.clone();
            x.data_mut()[i] += d;
            probe(&conv2d_forward(&x, &kernel, &bias).unwrap(), &pw)
        });
        assert_matches_fd("conv grad_kernel", gk.data(), |i, d| {
            let mut k = kernel.clone();
            k.data_mut()[i] += d;
            probe(&conv2d_forward(&input, &k, &bias).unwrap(), &pw)
        });
        assert_matches_fd("conv grad_bias", &gb, |i, d| {
            let mut b = bias.clone();
            b[i] += d;
            probe(&conv2d_forward(&input, &kernel, &b).unwrap(), &pw)
        });
    }
}

#[test]
fn dense_gradients_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(12);
    for inst in 0..5 {
        let (ind, outd) = [(4, 3), (7, 2), (1, 5), (6, 6), (3, 11)][inst];
        let input = rand_tensor(vec![ind], &mut rng);
        let weights = rand_tensor(vec![ind, outd], &mut rng);
        let bias: Vec<f64> = (0..outd).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pw: Vec<f64> = (0..outd).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let grad_out = Tensor::from_vec(pw.clone());
        let (gin, gw, gb) = dense_backward(&grad_out, &input, &weights).unwrap();

        assert_matches_fd("dense grad_input", gin.data(), |i, d| {
            let mut x = input.clone();
            x.data_mut()[i] += d;
            probe(&dense_forward(&x, &weights, &bias).unwrap(), &pw)
        });
        assert_matches_fd("dense grad_weights", gw.data(), |i, d| {
            let mut w = weights.clone();
            w.data_mut()[i] += d;
            probe(&dense_forward(&input, &w, &bias).unwrap(), &pw)
        });
        assert_matches_fd("dense grad_bias", &gb, |i, d| {
            let mut b = bias.clone();
            b[i] += d;
            probe(&dense_forward(&input, &weights, &b).unwrap(), &pw)
        });
    }
}

#[test]
fn relu_gradient_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..5 {
        // keep inputs away from the kink at 0 so the finite difference is valid
        let input = Tensor::from_vec(
            (0..24)
                .map(|_| {
                    let v: f64 = rng.gen_range(0.1..1.0);
                    if rng.gen::<bool>() {
                        v
                    } else {
                        -v
                    }
                })
                .collect(),
        );
        let pw: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad_out = Tensor::from_vec(pw.clone());
        let gin = relu_backward(&grad_out, &input);
        assert_matches_fd("relu grad_input", gin.data(), |i, d| {
            let mut x = input.clone();
            x.data_mut()[i] += d;
            probe(&relu_forward(&x), &pw)
        });
    }
}

#[test]
fn maxpool_gradient_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(14);
    for _ in 0..5 {
        // distinct random values keep the argmax stable under +-H displacement
        let input = rand_tensor(vec![4, 6, 3], &mut rng);
        let (out, argmax) = maxpool2d_forward(&input, 2).unwrap();
        let pw: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad_out = Tensor::new(out.shape().to_vec(), pw.clone()).unwrap();
        let gin = maxpool2d_backward(&grad_out, &argmax, input.shape()).unwrap();
        assert_matches_fd("maxpool grad_input", gin.data(), |i, d| {
            let mut x = input.clone();
            x.data_mut()[i] += d;
            probe(&maxpool2d_forward(&x, 2).unwrap().0, &pw)
        });
    }
}

#[test]
fn dropout_gradient_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(15);
    for inst in 0..5 {
        let input = rand_tensor(vec![20], &mut rng);
        let pw: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // a fresh identically-seeded rng per evaluation pins the mask
        let mask_seed = 100 + inst;
        let fwd = |x: &Tensor<f64>| {
            let mut r = StdRng::seed_from_u64(mask_seed);
            dropout_forward(x, 0.5, &mut r).0
        };
        let (_, mask) = dropout_forward(&input, 0.5, &mut StdRng::seed_from_u64(mask_seed));
        let grad_out = Tensor::from_vec(pw.clone());
        let gin = dropout_backward(&grad_out, &mask);
        assert_matches_fd("dropout grad_input", gin.data(), |i, d| {
            let mut x = input.clone();
            x.data_mut()[i] += d;
            probe(&fwd(&x), &pw)
        });
    }
}

#[test]
fn softmax_cross_entropy_gradient_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(16);
    for inst in 0..5 {
        let k = [3, 11, 5, 7, 11][inst];
        let logits = rand_tensor(vec![k], &mut rng);
        let label = rng.gen_range(0..k);
        let (_, grad) = softmax_cross_entropy(&logits, label).unwrap();
        assert_matches_fd("softmax-ce grad_logits", grad.data(), |i, d| {
            let mut l = logits.clone();
            l.data_mut()[i] += d;
            softmax_cross_entropy(&l, label).unwrap().0
        });
    }
}

/// End-to-end: the full toy network (conv-relu-conv-relu-dense-dense, dropout
/// inactive at inference) backpropagated through the cross-entropy head.
#[test]
fn whole_network_gradients_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(17);
    for inst in 0..3 {
        let mut net: Network<f64> =
            Network::init(ArchitectureDescriptor::toy(), &mut rng);
        let input = rand_tensor(vec![1, 3, 1], &mut rng);
        let label = inst % 3;

        let loss_of = |net: &Network<f64>, input: &Tensor<f64>| {
            let logits = net.forward_infer(input).unwrap();
            softmax_cross_entropy(&logits, label).unwrap().0
        };

        let (logits, tape) = net.forward_infer_taped(&input).unwrap();
        let (_, grad_logits) = softmax_cross_entropy(&logits, label).unwrap();
        let (grads, grad_input) = net.backward(&tape, &grad_logits).unwrap();

        assert_matches_fd("network grad_input", grad_input.data(), |i, d| {
            let mut x = input.clone();
            x.data_mut()[i] += d;
            loss_of(&net, &x)
        });

        let analytic: Vec<Vec<f64>> =
            grads.slices().iter().map(|s| s.to_vec()).collect();
        for (slice_idx, slice_grads) in analytic.iter().enumerate() {
            assert_matches_fd(
                &format!("network params[{slice_idx}]"),
                slice_grads,
                |i, d| {
                    net.param_slices_mut()[slice_idx][i] += d;
                    let loss = loss_of(&net, &input);
                    net.param_slices_mut()[slice_idx][i] -= d;
                    loss
                },
            );
        }
    }
}
