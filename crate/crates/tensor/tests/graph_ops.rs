//! Forward/backward contracts of the graph engine: pinned arithmetic
//! examples, an independent perceptron oracle, determinism, and error paths.

use evhand_tensor::{Bindings, Graph, Tensor, TensorError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

type G = Graph<f64>;

#[test]
fn add_doubles_a_vector() {
    let mut g = G::new();
    let x = g.input("x", &[2]).unwrap();
    let y = g.add(x, x).unwrap();
    let mut bind = Bindings::new();
    bind.set("x", Tensor::from_f64_slice(&[2], &[1.0, 2.0]).unwrap());
    let eval = g.forward_eval(&bind).unwrap();
    assert_eq!(eval.value(y).data(), &[2.0, 4.0]);
}

#[test]
fn cosine_self_similarity_is_one() {
    let mut g = G::new();
    let v = g.input("v", &[3]).unwrap();
    let c = g.cosine_similarity(v, v).unwrap();
    let mut bind = Bindings::new();
    bind.set("v", Tensor::from_f64_slice(&[3], &[0.3, -1.2, 2.0]).unwrap());
    let eval = g.forward_eval(&bind).unwrap();
    assert!((eval.value(c).item() - 1.0).abs() < 1e-12);
}

#[test]
fn perceptron_matches_loop_oracle() {
    // independent per-element re-implementation of a 3-layer perceptron
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let dims = [5usize, 7, 6, 3];
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..3 {
        let w: Vec<f64> = (0..dims[l] * dims[l + 1])
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let b: Vec<f64> = (0..dims[l + 1]).map(|_| rng.gen_range(-0.5..0.5)).collect();
        weights.push(w);
        biases.push(b);
    }
    let input: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();

    // oracle: nested loops, no tensor machinery
    let mut act = input.clone();
    for l in 0..3 {
        let (din, dout) = (dims[l], dims[l + 1]);
        let mut next = vec![0.0; dout];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut acc = biases[l][j];
            for i in 0..din {
                acc += act[i] * weights[l][i * dout + j];
            }
            *slot = if l < 2 { acc.tanh() } else { acc };
        }
        act = next;
    }

    let mut g = G::new();
    let x = g.input("x", &[1, dims[0]]).unwrap();
    let mut h = x;
    for l in 0..3 {
        let w = g
            .parameter(&format!("w{l}"), &[dims[l], dims[l + 1]])
            .unwrap();
        let b = g.parameter(&format!("b{l}"), &[dims[l + 1]]).unwrap();
        h = g.matmul(h, w).unwrap();
        h = g.add(h, b).unwrap();
        if l < 2 {
            h = g.tanh(h);
        }
    }
    let mut bind = Bindings::new();
    bind.set("x", Tensor::new(&[1, dims[0]], input).unwrap());
    for l in 0..3 {
        bind.set(
            &format!("w{l}"),
            Tensor::new(&[dims[l], dims[l + 1]], weights[l].clone()).unwrap(),
        );
        bind.set(
            &format!("b{l}"),
            Tensor::new(&[dims[l + 1]], biases[l].clone()).unwrap(),
        );
    }
    let eval = g.forward_eval(&bind).unwrap();
    for (got, want) in eval.value(h).data().iter().zip(&act) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn mean_backward_is_uniform() {
    let mut g = G::new();
    let x = g.parameter("x", &[4]).unwrap();
    let loss = g.mean(x);
    let mut bind = Bindings::new();
    bind.set("x", Tensor::from_f64_slice(&[4], &[3.0, 1.0, -2.0, 5.0]).unwrap());
    let eval = g.forward_eval(&bind).unwrap();
    let grads = g.backward(&eval, loss).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[0.25, 0.25, 0.25, 0.25]);
}

#[test]
fn sum_of_squares_backward_is_two_x() {
    let mut g = G::new();
    let x = g.parameter("x", &[1]).unwrap();
    let sq = g.mul(x, x).unwrap();
    let loss = g.sum(sq);
    let mut bind = Bindings::new();
    bind.set("x", Tensor::from_f64_slice(&[1], &[3.0]).unwrap());
    let eval = g.forward_eval(&bind).unwrap();
    let grads = g.backward(&eval, loss).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[6.0]);
}

#[test]
fn forward_eval_is_bit_deterministic() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut g = G::new();
    let x = g.input("x", &[2, 3, 8, 8]).unwrap();
    let k = g.parameter("k", &[4, 3, 3, 3]).unwrap();
    let c = g.correlate2d(x, k, 2, 1).unwrap();
    let a = g.leaky_relu(c);
    let p = g.global_avg_pool(a).unwrap();
    let n = g.l2_normalize(p);
    let loss = g.mean(n);
    let mut bind = Bindings::new();
    let t1 = Tensor::new(
        &[2, 3, 8, 8],
        (0..2 * 3 * 64).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let t2 = Tensor::new(
        &[4, 3, 3, 3],
        (0..4 * 3 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    bind.set("x", t1);
    bind.set("k", t2);
    let e1 = g.forward_eval(&bind).unwrap();
    let e2 = g.forward_eval(&bind).unwrap();
    for id in [c, a, p, n, loss] {
        let b1: Vec<u64> = e1.value(id).data().iter().map(|v| v.to_bits()).collect();
        let b2: Vec<u64> = e2.value(id).data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(b1, b2);
    }
}

#[test]
fn bilinear_zero_flow_is_bit_identical() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let mut g = G::new();
    let img = g.input("img", &[1, 2, 5, 6]).unwrap();
    let flow = g.input("flow", &[1, 2, 5, 6]).unwrap();
    let out = g.bilinear_sample(img, flow).unwrap();
    let mut bind = Bindings::new();
    let data: Vec<f64> = (0..60).map(|_| rng.gen_range(-4.0..4.0)).collect();
    bind.set("img", Tensor::new(&[1, 2, 5, 6], data.clone()).unwrap());
    bind.set("flow", Tensor::zeros(&[1, 2, 5, 6]));
    let eval = g.forward_eval(&bind).unwrap();
    let got: Vec<u64> = eval.value(out).data().iter().map(|v| v.to_bits()).collect();
    let want: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
    assert_eq!(got, want);
}

#[test]
fn quantizer_forward_is_sign_symmetric_floor() {
    let mut g = G::new();
    let x = g.input("x", &[7]).unwrap();
    let q = g.straight_through_quantize(x, 0.2).unwrap();
    let vals = [0.45, -0.45, 0.19, -0.19, 0.0, 1.0, -0.61];
    let mut bind = Bindings::new();
    bind.set("x", Tensor::from_f64_slice(&[7], &vals).unwrap());
    let eval = g.forward_eval(&bind).unwrap();
    let out = eval.value(q).data();
    for (i, &v) in vals.iter().enumerate() {
        let expect = v.signum() * (v.abs() / 0.2).floor();
        let expect = if v == 0.0 { 0.0 } else { expect };
        assert_eq!(out[i], expect, "index {i}");
        assert_eq!(out[i].fract(), 0.0, "integer-valued output");
    }
    assert_eq!(out[0], 2.0);
    assert_eq!(out[1], -2.0);
}

#[test]
fn shape_mismatch_names_the_operation() {
    let mut g = G::new();
    let a = g.input("a", &[2, 3]).unwrap();
    let b = g.input("b", &[3, 3]).unwrap();
    match g.add(a, b) {
        Err(TensorError::ShapeMismatch { context, .. }) => assert_eq!(context, "add"),
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn non_finite_value_reports_node_and_index() {
    let mut g = G::new();
    let x = g.input("x", &[3]).unwrap();
    let _y = g.log1p(x);
    let mut bind = Bindings::new();
    bind.set("x", Tensor::from_f64_slice(&[3], &[0.0, -1.0, 0.5]).unwrap());
    match g.forward_eval(&bind) {
        Err(TensorError::NonFinite { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn loss_must_be_scalar() {
    let mut g = G::new();
    let x = g.parameter("x", &[3]).unwrap();
    let y = g.relu(x);
    let mut bind = Bindings::new();
    bind.set("x", Tensor::from_f64_slice(&[3], &[1.0, 2.0, 3.0]).unwrap());
    let eval = g.forward_eval(&bind).unwrap();
    assert!(matches!(
        g.backward(&eval, y),
        Err(TensorError::LossNotScalar(_))
    ));
}

#[test]
fn missing_binding_is_reported() {
    let mut g = G::new();
    let _x = g.input("x", &[2]).unwrap();
    let bind = Bindings::new();
    assert!(matches!(
        g.forward_eval(&bind),
        Err(TensorError::MissingBinding(_))
    ));
}

#[test]
fn backward_reaches_only_trainable_leaves() {
    let mut g = G::new();
    let x = g.input("x", &[2]).unwrap();
    let w = g.parameter("w", &[2]).unwrap();
    let p = g.mul(x, w).unwrap();
    let loss = g.sum(p);
    let mut bind = Bindings::new();
    bind.set("x", Tensor::from_f64_slice(&[2], &[1.0, 2.0]).unwrap());
    bind.set("w", Tensor::from_f64_slice(&[2], &[3.0, 4.0]).unwrap());
    let eval = g.forward_eval(&bind).unwrap();
    let grads = g.backward(&eval, loss).unwrap();
    assert!(grads.get(w).is_some());
    assert!(grads.get(x).is_none(), "inputs must not accumulate grads");
}
