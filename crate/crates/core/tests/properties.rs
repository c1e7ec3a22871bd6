//! Randomized properties of the numeric substrate, the network and the
//! checkpoint format.

use proptest::prelude::*;

use svc_decoder::cli::checkpoint::{Checkpoint, Role};
use svc_decoder::cli::Config;
use svc_decoder::numcore::{grad_check, kernels, Graph, Rng, Scalar, Tensor, Var};

fn tensor(shape: &'static [usize]) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-2.0..2.0 as Scalar, n).prop_map(move |v| Tensor::new(shape, v).unwrap())
}

fn check(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> svc_decoder::Result<Var>) -> Result<(), TestCaseError> {
    let rep = grad_check(f, inputs, 1e-5, 1e-4).unwrap();
    prop_assert!(rep.passed(), "worst rel err {}", rep.worst());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn grad_add_broadcast(a in tensor(&[3, 4]), b in tensor(&[1, 4])) {
        check(&[a, b], |g, v| { let y = g.add(v[0], v[1])?; let y = g.tanh(y)?; g.sum_sq(y) })?;
    }

    #[test]
    fn grad_sub_broadcast(a in tensor(&[3, 4]), b in tensor(&[3, 1])) {
        check(&[a, b], |g, v| { let y = g.sub(v[0], v[1])?; g.sum_sq(y) })?;
    }

    #[test]
    fn grad_mul(a in tensor(&[2, 3]), b in tensor(&[2, 3])) {
        check(&[a, b], |g, v| { let y = g.mul(v[0], v[1])?; g.sum_sq(y) })?;
    }

    #[test]
    fn grad_scale(a in tensor(&[5]), s in -3.0..3.0 as Scalar) {
        check(&[a], move |g, v| { let y = g.scale(v[0], s)?; g.sum_sq(y) })?;
    }

    #[test]
    fn grad_activations(a in tensor(&[2, 4])) {
        check(&[a.clone()], |g, v| { let y = g.tanh(v[0])?; g.sum_sq(y) })?;
        check(&[a.clone()], |g, v| { let y = g.sigmoid(v[0])?; g.sum_sq(y) })?;
        check(&[a], |g, v| { let y = g.silu(v[0])?; g.sum_sq(y) })?;
    }

    #[test]
    fn grad_relu_away_from_kink(a in prop::collection::vec(prop_oneof![-2.0..-0.01 as Scalar, 0.01..2.0 as Scalar], 6)) {
        let a = Tensor::new(&[6], a).unwrap();
        check(&[a], |g, v| { let y = g.relu(v[0])?; g.sum_sq(y) })?;
    }

    #[test]
    fn grad_matmul(a in tensor(&[3, 2]), b in tensor(&[2, 4])) {
        check(&[a, b], |g, v| { let y = g.matmul(v[0], v[1])?; g.sum_sq(y) })?;
    }

    #[test]
    fn grad_conv1d(x in tensor(&[2, 7]), k in tensor(&[3, 2, 3]), dilation in 1usize..4) {
        check(&[x, k], move |g, v| { let y = g.conv1d(v[0], v[1], dilation)?; g.sum_sq(y) })?;
    }

    #[test]
    fn grad_transpose_concat(a in tensor(&[2, 3]), b in tensor(&[2, 2])) {
        check(&[a, b], |g, v| {
            let t = g.transpose(v[0])?;
            let bt = g.transpose(v[1])?;
            let y = g.concat_rows(&[t, bt])?;
            let y = g.tanh(y)?;
            g.sum_sq(y)
        })?;
    }

    #[test]
    fn grad_reductions(a in tensor(&[3, 3])) {
        check(&[a.clone()], |g, v| { let y = g.tanh(v[0])?; g.sum(y) })?;
        check(&[a], |g, v| { let y = g.sigmoid(v[0])?; g.mean(y) })?;
    }

    #[test]
    fn conv_is_linear(x in tensor(&[2, 9]), y in tensor(&[2, 9]), k in tensor(&[3, 2, 3]),
                      alpha in -2.0..2.0 as Scalar, beta in -2.0..2.0 as Scalar, dilation in 1usize..4) {
        let mixed = x.axpby(alpha, &y, beta).unwrap();
        let lhs = kernels::conv1d(&mixed, &k, dilation).unwrap();
        let cx = kernels::conv1d(&x, &k, dilation).unwrap();
        let cy = kernels::conv1d(&y, &k, dilation).unwrap();
        let rhs = cx.axpby(alpha, &cy, beta).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn gradient_is_linear_in_loss(a in tensor(&[2, 3]), alpha in -2.0..2.0 as Scalar, beta in -2.0..2.0 as Scalar) {
        // d(alpha f + beta h) = alpha df + beta dh
        let grad = |wf: Scalar, wh: Scalar| {
            let mut g = Graph::new();
            let x = g.leaf(a.clone());
            let f = g.tanh(x).and_then(|y| g.sum_sq(y)).unwrap();
            let h = g.silu(x).and_then(|y| g.sum(y)).unwrap();
            let f = g.scale(f, wf).unwrap();
            let h = g.scale(h, wh).unwrap();
            let l = g.add(f, h).unwrap();
            g.backward(l).unwrap().get(x).unwrap()
        };
        let combined = grad(alpha, beta);
        let separate = grad(1.0, 0.0).axpby(alpha, &grad(0.0, 1.0), beta).unwrap();
        prop_assert!(combined.max_abs_diff(&separate).unwrap() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), n in 1usize..6, step in any::<u64>(), word_pos in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let mut c = Checkpoint::new(Role::Teacher, &Config::default());
        c.step = step;
        c.rng.word_pos = word_pos as u128 * 16;
        for i in 0..n {
            let rows = 1 + rng.int_inclusive(0, 4);
            let cols = 1 + rng.int_inclusive(0, 4);
            let vals = (0..rows * cols).map(|_| rng.normal() * 10f64.powi(rng.int_inclusive(0, 8) as i32 - 4) as Scalar).collect();
            c.blobs.insert(format!("params/t{i}"), Tensor::new(&[rows, cols], vals).unwrap());
        }
        let bytes = c.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &c);
        for (k, v) in &c.blobs {
            let w = &back.blobs[k];
            prop_assert!(v.data().iter().zip(w.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        prop_assert_eq!(back.encode(), bytes);
    }
}
