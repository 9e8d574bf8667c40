//! Dense tensors, feedforward networks with reverse-mode gradients, and Adam.

mod adam;
mod gradcheck;
mod network;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, FD_STEP};
pub use network::{Cache, ForwardOutput, Gradients, Head, LayerSpec, Network, OutputGrad, Shape};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Forward pass re-implemented as explicit loops over a dense/leaky-ReLU stack.
    fn loop_forward(net: &Network, x: &Tensor, slope: f64) -> Vec<f64> {
        let params = net.parameters();
        let mut rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
        let layers = params.len() / 2;
        for l in 0..layers {
            let (w, b) = (params[2 * l], params[2 * l + 1]);
            let (out, inp) = (w.shape()[0], w.shape()[1]);
            for row in rows.iter_mut() {
                let mut next = vec![0.0; out];
                for o in 0..out {
                    let mut acc = b.data()[o];
                    for i in 0..inp {
                        acc += w.data()[o * inp + i] * row[i];
                    }
                    next[o] = if l + 1 < layers && acc <= 0.0 { slope * acc } else { acc };
                }
                *row = next;
            }
        }
        rows.concat()
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Tensor {
        Tensor::new(vec![b, d], (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_dense_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net =
            Network::new(Shape::Flat(2), &[LayerSpec::Dense { input: 2, output: 2 }], Head::None, &mut rng)
                .unwrap();
        net.parameters_mut()[0].data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let out = net.forward(&x).unwrap();
        assert_eq!(out.reps.data(), &[1.0, 2.0]);
        assert!(out.logits.is_none());
    }

    #[test]
    fn zero_weights_give_zero_reps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::mlp(5, &[7], 3, 0.01, Head::None, &mut rng).unwrap();
        for p in net.parameters_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = random_batch(&mut rng, 4, 5);
        assert!(net.forward(&x).unwrap().reps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let net = Network::mlp(6, &[9], 4, 0.01, Head::None, &mut rng).unwrap();
            let x = random_batch(&mut rng, 5, 6);
            let out = net.forward(&x).unwrap();
            let oracle = loop_forward(&net, &x, 0.01);
            for (a, b) in out.reps.data().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::mlp(8, &[16, 8], 4, 0.01, Head::Linear, &mut rng).unwrap();
        let x = random_batch(&mut rng, 7, 8);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.reps, b.reps);
        assert_eq!(a.logits, b.logits);
        assert_eq!(net.infer(&x).unwrap().0, a.reps);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bad = Network::new(
            Shape::Flat(4),
            &[LayerSpec::Dense { input: 4, output: 3 }, LayerSpec::Dense { input: 2, output: 1 }],
            Head::None,
            &mut rng,
        );
        assert!(matches!(bad, Err(crate::Error::Config(_))));
        let conv_on_flat = Network::new(
            Shape::Flat(16),
            &[LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3 }],
            Head::None,
            &mut rng,
        );
        assert!(conv_on_flat.is_err());
        let ends_in_image = Network::new(
            Shape::Image { channels: 1, height: 4, width: 4 },
            &[LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3 }],
            Head::None,
            &mut rng,
        );
        assert!(ends_in_image.is_err());

        let net = Network::mlp(3, &[4], 2, 0.01, Head::None, &mut rng).unwrap();
        assert!(matches!(net.forward(&Tensor::zeros(vec![2, 4])), Err(crate::Error::Config(_))));
        let mut x = Tensor::zeros(vec![1, 3]);
        x.data_mut()[1] = f64::NAN;
        assert!(matches!(net.forward(&x), Err(crate::Error::Input(_))));
    }

    #[test]
    fn backward_of_sum_matches_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net =
            Network::new(Shape::Flat(3), &[LayerSpec::Dense { input: 3, output: 2 }], Head::None, &mut rng)
                .unwrap();
        let x = random_batch(&mut rng, 4, 3);
        let out = net.forward(&x).unwrap();
        let g = net.backward(&out.cache, &OutputGrad::Reps(Tensor::filled(vec![4, 2], 1.0))).unwrap();
        // dL/dW[o][i] = sum_b x[b][i] for every o; dL/db = batch size.
        let col_sums: Vec<f64> = (0..3).map(|i| (0..4).map(|b| x.row(b)[i]).sum()).collect();
        let dw = g.get(0).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((dw.data()[o * 3 + i] - col_sums[i]).abs() < 1e-12);
            }
        }
        assert_eq!(g.get(1).unwrap().data(), &[4.0, 4.0]);

        let sum_loss = |reps: &Tensor, _: Option<&Tensor>| {
            (reps.sum(), OutputGrad::Reps(Tensor::filled(reps.shape().to_vec(), 1.0)))
        };
        assert!(grad_check(&net, sum_loss, &x).unwrap() < 1e-6);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Network::mlp(4, &[5], 3, 0.01, Head::Linear, &mut rng).unwrap();
        let x = random_batch(&mut rng, 3, 4);
        let out = net.forward(&x).unwrap();
        let g = net.backward(&out.cache, &OutputGrad::Reps(Tensor::zeros(vec![3, 3]))).unwrap();
        for t in g.iter().flatten() {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
        // head unused by a representation loss
        let head = net.head_offset().unwrap();
        assert!(g.get(head).is_none() && g.get(head + 1).is_none());
    }

    #[test]
    fn leaky_relu_scales_negative_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut net = Network::new(
            Shape::Flat(1),
            &[LayerSpec::Dense { input: 1, output: 1 }, LayerSpec::LeakyRelu { slope: 0.01 }],
            Head::None,
            &mut rng,
        )
        .unwrap();
        net.parameters_mut()[0].data_mut()[0] = 1.0;
        let x = Tensor::new(vec![1, 1], vec![-2.0]).unwrap();
        let out = net.forward(&x).unwrap();
        assert_eq!(out.reps.data(), &[-0.02]);
        let g = net.backward(&out.cache, &OutputGrad::Reps(Tensor::filled(vec![1, 1], 1.0))).unwrap();
        // d/dw = slope * x, d/db = slope
        assert!((g.get(0).unwrap().data()[0] - 0.01 * -2.0).abs() < 1e-15);
        assert!((g.get(1).unwrap().data()[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn cache_mismatch_is_usage_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Network::mlp(3, &[4], 2, 0.01, Head::None, &mut rng).unwrap();
        let b = Network::mlp(3, &[5], 2, 0.01, Head::None, &mut rng).unwrap();
        let x = random_batch(&mut rng, 2, 3);
        let out = a.forward(&x).unwrap();
        let r = b.backward(&out.cache, &OutputGrad::Reps(Tensor::zeros(vec![2, 2])));
        assert!(matches!(r, Err(crate::Error::Usage(_))));
        let r = a.backward(&out.cache, &OutputGrad::Logits(Tensor::zeros(vec![2])));
        assert!(matches!(r, Err(crate::Error::Usage(_))));
    }

    #[test]
    fn conv_pool_path_passes_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = Network::new(
            Shape::Image { channels: 1, height: 7, width: 7 },
            &[
                LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3 },
                LayerSpec::LeakyRelu { slope: 0.01 },
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 2 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { input: 3, output: 2 },
            ],
            Head::Linear,
            &mut rng,
        )
        .unwrap();
        assert_eq!(net.rep_dim(), 2);
        let x = random_batch(&mut rng, 3, 49);
        let sq = |reps: &Tensor, _: Option<&Tensor>| {
            let g = Tensor::new(reps.shape().to_vec(), reps.data().iter().map(|v| 2.0 * v).collect())
                .unwrap();
            (reps.data().iter().map(|v| v * v).sum(), OutputGrad::Reps(g))
        };
        assert!(grad_check(&net, sq, &x).unwrap() < 1e-4);
        let logit_sum = |_: &Tensor, logits: Option<&Tensor>| {
            let l = logits.unwrap();
            (l.sum() + 0.5 * l.data().iter().map(|v| v * v).sum::<f64>(),
             OutputGrad::Logits(Tensor::new(l.shape().to_vec(), l.data().iter().map(|v| 1.0 + v).collect()).unwrap()))
        };
        assert!(grad_check(&net, logit_sum, &x).unwrap() < 1e-4);
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Network::mlp(3, &[4], 2, 0.01, Head::None, &mut rng).unwrap();
        let x = random_batch(&mut rng, 2, 3);
        let constant = |reps: &Tensor, _: Option<&Tensor>| {
            (3.5, OutputGrad::Reps(Tensor::zeros(reps.shape().to_vec())))
        };
        assert_eq!(grad_check(&net, constant, &x).unwrap(), 0.0);
    }
}
