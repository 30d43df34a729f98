use super::*;
use crate::testkit::{
    fd_grads, max_grad_err, rng, uniform_vec, uniform_vec_away_from_zero, FD_EPS, FD_TOL,
};
use rand::Rng;

/// Check tape gradients of a scalar graph against central finite differences.
/// `build` receives the tape and one leaf per input and must return a scalar.
fn check_grads(
    build: impl Fn(&mut Tape, &[Tensor]) -> Tensor,
    inputs: &[(Vec<f64>, Vec<usize>)],
) {
    let eval = |vals: &[Vec<f64>]| -> f64 {
        let mut tape = Tape::new();
        let leaves: Vec<Tensor> = vals
            .iter()
            .zip(inputs)
            .map(|(v, (_, s))| tape.leaf(v.clone(), s).unwrap())
            .collect();
        let out = build(&mut tape, &leaves);
        tape.value(out)[0]
    };

    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|(v, s)| tape.leaf(v.clone(), s).unwrap())
        .collect();
    let out = build(&mut tape, &leaves);
    let analytic = tape.backward(out, &leaves).unwrap();

    let vals: Vec<Vec<f64>> = inputs.iter().map(|(v, _)| v.clone()).collect();
    let numeric = fd_grads(eval, &vals, FD_EPS);

    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = max_grad_err(a, n);
        assert!(
            err < FD_TOL,
            "input {i}: gradient mismatch, max err {err:.3e}"
        );
    }
}

/// Scalarize an op output with a fixed random weighting so that every output
/// element contributes to the loss.
fn weighted_sum(tape: &mut Tape, y: Tensor, seed: u64) -> Tensor {
    let n = tape.numel(y);
    let shape = tape.shape(y).to_vec();
    let w = uniform_vec(&mut rng(seed), n, -1.0, 1.0);
    let wl = tape.leaf(w, &shape).unwrap();
    let prod = tape.mul(y, wl).unwrap();
    tape.sum_all(prod)
}

// ---------------------------------------------------------------------------
// Forward values
// ---------------------------------------------------------------------------

#[test]
fn conv_transpose1d_lengths_match_generator_stages() {
    let mut tape = Tape::new();
    let x = tape.zeros(&[1, 1, 100]);
    let k = tape.zeros(&[1, 10, 3]);
    let y = tape.conv_transpose1d(x, k).unwrap();
    assert_eq!(tape.shape(y), &[1, 10, 102]);
}

#[test]
fn conv2d_valid_shape() {
    let mut tape = Tape::new();
    let x = tape.zeros(&[1, 1, 28, 28]);
    let k = tape.zeros(&[2, 1, 5, 5]);
    let y = tape.conv2d(x, k, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 2, 24, 24]);
}

#[test]
fn conv1d_strided_shape() {
    let mut tape = Tape::new();
    let x = tape.zeros(&[1, 112, 112]);
    let k = tape.zeros(&[28, 112, 1]);
    let y = tape.conv1d(x, k, 4).unwrap();
    assert_eq!(tape.shape(y), &[1, 28, 28]);
}

#[test]
fn activations_at_negative_one() {
    let mut tape = Tape::new();
    let x = tape.leaf(vec![-1.0], &[1]).unwrap();
    let r = tape.relu(x);
    assert_eq!(tape.value(r), &[0.0]);
    let l = tape.leaky_relu(x, 0.2);
    assert_eq!(tape.value(l), &[-0.2]);
}

#[test]
fn conv_transpose1d_hand_value() {
    // x = [1, 2], k = [1, 10, 100]: full correlation scatter.
    let mut tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0], &[1, 1, 2]).unwrap();
    let k = tape.leaf(vec![1.0, 10.0, 100.0], &[1, 1, 3]).unwrap();
    let y = tape.conv_transpose1d(x, k).unwrap();
    // y[j] = sum_i x[i] k[j - i]: [1, 10+2, 100+20, 200]
    assert_eq!(tape.value(y), &[1.0, 12.0, 120.0, 200.0]);
}

#[test]
fn shape_mismatch_reports_op() {
    let mut tape = Tape::new();
    let a = tape.zeros(&[2, 3]);
    let b = tape.zeros(&[3, 3]);
    match tape.add(a, b) {
        Err(Error::ShapeMismatch { op, lhs, rhs }) => {
            assert_eq!(op, "add");
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![3, 3]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn deterministic_forward() {
    let run = || {
        let mut r = rng(99);
        let mut tape = Tape::new();
        let x = tape
            .leaf(uniform_vec(&mut r, 2 * 3 * 6 * 6, -1.0, 1.0), &[2, 3, 6, 6])
            .unwrap();
        let k = tape
            .leaf(uniform_vec(&mut r, 4 * 3 * 3 * 3, -1.0, 1.0), &[4, 3, 3, 3])
            .unwrap();
        let c = tape.conv2d(x, k, 1).unwrap();
        let t = tape.tanh(c);
        let s = tape.sum_all(t);
        tape.value(s).to_vec()
    };
    assert_eq!(run(), run());
}

// ---------------------------------------------------------------------------
// Backward: basics
// ---------------------------------------------------------------------------

#[test]
fn linear_loss_grad_is_broadcast_of_x() {
    // loss = sum(W·x) with x fixed: dL/dW[i][j] = x[j].
    let mut tape = Tape::new();
    let w = tape.leaf(vec![0.5, -1.0, 2.0, 0.0, 1.0, 3.0], &[2, 3]).unwrap();
    let x = tape.leaf(vec![10.0, 20.0, 30.0], &[3, 1]).unwrap();
    let y = tape.matmul(w, x, false, false).unwrap();
    let loss = tape.sum_all(y);
    let grads = tape.backward(loss, &[w]).unwrap();
    assert_eq!(grads[0], vec![10.0, 20.0, 30.0, 10.0, 20.0, 30.0]);
}

#[test]
fn disconnected_parameter_gets_zero_grad() {
    let mut tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0], &[2]).unwrap();
    let unused = tape.leaf(vec![5.0; 4], &[4]).unwrap();
    let loss = tape.sum_all(x);
    let grads = tape.backward(loss, &[x, unused]).unwrap();
    assert_eq!(grads[0], vec![1.0, 1.0]);
    assert_eq!(grads[1], vec![0.0; 4]);
}

#[test]
fn backward_twice_errors() {
    let mut tape = Tape::new();
    let x = tape.leaf(vec![1.0], &[1]).unwrap();
    let loss = tape.mul_scalar(x, 2.0);
    tape.backward(loss, &[x]).unwrap();
    match tape.backward(loss, &[x]) {
        Err(Error::BackwardTwice) => {}
        other => panic!("expected BackwardTwice, got {other:?}"),
    }
}

#[test]
fn grad_wrt_input_linear_critic_is_weight() {
    // D(x) = <w, x>: gradient w.r.t. x equals w exactly.
    let mut tape = Tape::new();
    let wv = vec![0.25, -0.5, 1.5, 2.0];
    let x = tape.leaf(vec![1.0, 2.0, 3.0, 4.0], &[1, 4]).unwrap();
    let w = tape.leaf(wv.clone(), &[4, 1]).unwrap();
    let score = tape.matmul(x, w, false, false).unwrap();
    let s = tape.sum_all(score);
    let g = tape.grad_wrt_input(s, x).unwrap();
    assert_eq!(tape.value(g), wv.as_slice());
}

#[test]
fn grad_wrt_input_requires_participation() {
    let mut tape = Tape::new();
    let x = tape.leaf(vec![1.0], &[1]).unwrap();
    let other = tape.leaf(vec![2.0], &[1]).unwrap();
    let loss = tape.sum_all(other);
    match tape.grad_wrt_input(loss, x) {
        Err(Error::NotTracked) => {}
        other => panic!("expected NotTracked, got {other:?}"),
    }
}

// ---------------------------------------------------------------------------
// Backward: finite-difference sweep over the op vocabulary
// ---------------------------------------------------------------------------

#[test]
fn fd_elementwise_ops() {
    for seed in [1u64, 2, 3] {
        let mut r = rng(seed);
        let n = 2 + (seed as usize % 3) * 3;
        let a = uniform_vec(&mut r, n, -2.0, 2.0);
        let b = uniform_vec(&mut r, n, -2.0, 2.0);
        let shape = vec![n];
        check_grads(
            |tape, l| {
                let s = tape.add(l[0], l[1]).unwrap();
                let m = tape.mul(s, l[0]).unwrap();
                let d = tape.sub(m, l[1]).unwrap();
                let c = tape.mul_scalar(d, 1.7);
                let e = tape.add_scalar(c, -0.3);
                weighted_sum(tape, e, seed)
            },
            &[(a, shape.clone()), (b, shape.clone())],
        );
    }
}

#[test]
fn fd_recip_sqrt() {
    for seed in [4u64, 5, 6] {
        let mut r = rng(seed);
        let n = 5;
        let x = uniform_vec(&mut r, n, 0.5, 2.5);
        check_grads(
            |tape, l| {
                let rc = tape.recip(l[0]);
                let sq = tape.sqrt(l[0]);
                let m = tape.mul(rc, sq).unwrap();
                weighted_sum(tape, m, seed)
            },
            &[(x, vec![n])],
        );
    }
}

#[test]
fn fd_activations() {
    for seed in [7u64, 8, 9] {
        let mut r = rng(seed);
        let n = 8;
        // Kinked activations: keep samples away from the kink so the central
        // difference does not straddle it.
        let x = uniform_vec_away_from_zero(&mut r, n, 0.05);
        check_grads(
            |tape, l| {
                let a = tape.relu(l[0]);
                let b = tape.leaky_relu(l[0], 0.2);
                let c = tape.tanh(l[0]);
                let s = tape.add(a, b).unwrap();
                let s = tape.add(s, c).unwrap();
                weighted_sum(tape, s, seed)
            },
            &[(x, vec![n])],
        );
    }
}

#[test]
fn fd_matmul_all_transposes() {
    for (seed, (ta, tb)) in [(10u64, (false, false)), (11, (false, true)), (12, (true, false)), (13, (true, true))]
    {
        let mut r = rng(seed);
        let (m, k, n) = (3, 4, 2);
        let a_shape = if ta { vec![k, m] } else { vec![m, k] };
        let b_shape = if tb { vec![n, k] } else { vec![k, n] };
        let a = uniform_vec(&mut r, m * k, -1.0, 1.0);
        let b = uniform_vec(&mut r, k * n, -1.0, 1.0);
        check_grads(
            |tape, l| {
                let y = tape.matmul(l[0], l[1], ta, tb).unwrap();
                weighted_sum(tape, y, seed)
            },
            &[(a, a_shape), (b, b_shape)],
        );
    }
}

#[test]
fn fd_dense() {
    for seed in [14u64, 15, 16] {
        let mut r = rng(seed);
        let (n, fi, fo) = (3, 4, 5);
        let x = uniform_vec(&mut r, n * fi, -1.0, 1.0);
        let w = uniform_vec(&mut r, fi * fo, -1.0, 1.0);
        let b = uniform_vec(&mut r, fo, -1.0, 1.0);
        check_grads(
            |tape, l| {
                let y = tape.dense(l[0], l[1], l[2]).unwrap();
                weighted_sum(tape, y, seed)
            },
            &[(x, vec![n, fi]), (w, vec![fi, fo]), (b, vec![fo])],
        );
    }
}

#[test]
fn fd_conv1d_strides() {
    for (seed, stride, kl) in [(17u64, 1, 3), (18, 2, 2), (19, 4, 1)] {
        let mut r = rng(seed);
        let (n, ci, co, l) = (2, 2, 3, 9);
        let x = uniform_vec(&mut r, n * ci * l, -1.0, 1.0);
        let k = uniform_vec(&mut r, co * ci * kl, -1.0, 1.0);
        check_grads(
            |tape, lv| {
                let y = tape.conv1d(lv[0], lv[1], stride).unwrap();
                weighted_sum(tape, y, seed)
            },
            &[(x, vec![n, ci, l]), (k, vec![co, ci, kl])],
        );
    }
}

#[test]
fn fd_conv_transpose1d() {
    for (seed, kl) in [(20u64, 3), (21, 5), (22, 2)] {
        let mut r = rng(seed);
        let (n, ci, co, l) = (2, 3, 2, 6);
        let x = uniform_vec(&mut r, n * ci * l, -1.0, 1.0);
        let k = uniform_vec(&mut r, ci * co * kl, -1.0, 1.0);
        check_grads(
            |tape, lv| {
                let y = tape.conv_transpose1d(lv[0], lv[1]).unwrap();
                weighted_sum(tape, y, seed)
            },
            &[(x, vec![n, ci, l]), (k, vec![ci, co, kl])],
        );
    }
}

#[test]
fn fd_conv2d_pads() {
    for (seed, pad) in [(23u64, 0), (24, 1), (25, 2)] {
        let mut r = rng(seed);
        let (n, ci, co, h, w, kh, kw) = (2, 2, 3, 5, 6, 3, 3);
        let x = uniform_vec(&mut r, n * ci * h * w, -1.0, 1.0);
        let k = uniform_vec(&mut r, co * ci * kh * kw, -1.0, 1.0);
        check_grads(
            |tape, lv| {
                let y = tape.conv2d(lv[0], lv[1], pad).unwrap();
                weighted_sum(tape, y, seed)
            },
            &[(x, vec![n, ci, h, w]), (k, vec![co, ci, kh, kw])],
        );
    }
}

#[test]
fn fd_concat_slice_reshape() {
    for (seed, axis) in [(26u64, 0), (27, 1), (28, 2)] {
        let mut r = rng(seed);
        let shape = vec![2, 3, 4];
        let n: usize = shape.iter().product();
        let a = uniform_vec(&mut r, n, -1.0, 1.0);
        let b = uniform_vec(&mut r, n, -1.0, 1.0);
        check_grads(
            |tape, l| {
                let c = tape.concat(l[0], l[1], axis).unwrap();
                let s = tape.slice(c, axis, 1, 3).unwrap();
                let f = tape.flatten(s).unwrap();
                let u = tape.unsqueeze(f, 1).unwrap();
                weighted_sum(tape, u, seed)
            },
            &[(a, shape.clone()), (b, shape.clone())],
        );
    }
}

#[test]
fn fd_reductions_and_broadcasts() {
    for seed in [29u64, 30, 31] {
        let mut r = rng(seed);
        let shape = vec![3, 2, 4];
        let n: usize = shape.iter().product();
        let x = uniform_vec(&mut r, n, -1.0, 1.0);
        check_grads(
            |tape, l| {
                let ch = tape.mean_per_channel(l[0]).unwrap();
                let chb = tape.broadcast_per_channel(ch, &[3, 2, 4]).unwrap();
                let centered = tape.sub(l[0], chb).unwrap();
                let ps = tape.sum_per_sample(centered);
                let psb = tape.broadcast_per_sample(ps, &[3, 2, 4]).unwrap();
                let y = tape.mul(psb, l[0]).unwrap();
                let m = tape.mean_all(y);
                let s = tape.sum_all(l[0]);
                let both = tape.add(m, s).unwrap();
                let bc = tape.broadcast_all(both, &[2, 2]).unwrap();
                weighted_sum(tape, bc, seed)
            },
            &[(x, shape)],
        );
    }
}

#[test]
fn fd_batch_norm_train_through_batch_stats() {
    for seed in [32u64, 33, 34] {
        let mut r = rng(seed);
        let shape = vec![4, 3, 2, 2];
        let n: usize = shape.iter().product();
        let x = uniform_vec(&mut r, n, -2.0, 2.0);
        let gamma = uniform_vec(&mut r, 3, 0.5, 1.5);
        let beta = uniform_vec(&mut r, 3, -0.5, 0.5);
        check_grads(
            |tape, l| {
                let (y, _, _) = tape.batch_norm_train(l[0], l[1], l[2], 1e-5).unwrap();
                weighted_sum(tape, y, seed)
            },
            &[(x, shape), (gamma, vec![3]), (beta, vec![3])],
        );
    }
}

#[test]
fn fd_temporal_diff_and_norms() {
    for seed in [35u64, 36, 37] {
        let mut r = rng(seed);
        let shape = vec![2, 5, 2, 2];
        let n: usize = shape.iter().product();
        let x = uniform_vec(&mut r, n, -1.0, 1.0);
        check_grads(
            |tape, l| {
                let d = tape.temporal_diff(l[0]).unwrap();
                let norms = tape.l2_norm_per_sample(d).unwrap();
                let total = tape.l2_norm(l[0]).unwrap();
                let s = tape.sum_all(norms);
                tape.add(s, total).unwrap()
            },
            &[(x, shape)],
        );
    }
}

// ---------------------------------------------------------------------------
// grad_wrt_input and double backward
// ---------------------------------------------------------------------------

#[test]
fn fd_grad_wrt_input_tanh_critic() {
    // D(x) = tanh(w·x): gradient w.r.t. x checked against finite differences.
    let mut r = rng(40);
    let dim = 6;
    let wv = uniform_vec(&mut r, dim, -1.0, 1.0);
    let xv = uniform_vec(&mut r, dim, -1.0, 1.0);

    let mut tape = Tape::new();
    let x = tape.leaf(xv.clone(), &[1, dim]).unwrap();
    let w = tape.leaf(wv.clone(), &[dim, 1]).unwrap();
    let pre = tape.matmul(x, w, false, false).unwrap();
    let score = tape.tanh(pre);
    let s = tape.sum_all(score);
    let g = tape.grad_wrt_input(s, x).unwrap();
    let analytic = tape.value(g).to_vec();

    let eval = |vals: &[Vec<f64>]| -> f64 {
        let mut t = Tape::new();
        let x = t.leaf(vals[0].clone(), &[1, dim]).unwrap();
        let w = t.leaf(wv.clone(), &[dim, 1]).unwrap();
        let pre = t.matmul(x, w, false, false).unwrap();
        let score = t.tanh(pre);
        let s = t.sum_all(score);
        t.value(s)[0]
    };
    let numeric = fd_grads(eval, &[xv], FD_EPS);
    assert!(max_grad_err(&analytic, &numeric[0]) < FD_TOL);
}

/// Gradient-penalty value for a linear critic D(x) = <w, x>:
/// gp(w) = (||w|| - 1)^2, independent of x.
fn linear_critic_gp(tape: &mut Tape, w: Tensor, xv: &[f64], dim: usize) -> Tensor {
    let x = tape.leaf(xv.to_vec(), &[1, dim]).unwrap();
    let score = tape.matmul(x, w, false, false).unwrap();
    let s = tape.sum_all(score);
    let g = tape.grad_wrt_input(s, x).unwrap();
    let norm = tape.l2_norm_per_sample(g).unwrap();
    let shifted = tape.add_scalar(norm, -1.0);
    let sq = tape.mul(shifted, shifted).unwrap();
    tape.mean_all(sq)
}

#[test]
fn gp_linear_critic_matches_closed_form_and_fd() {
    let mut r = rng(41);
    let dim = 5;
    let wv = uniform_vec(&mut r, dim, 0.3, 1.2);
    let xv = uniform_vec(&mut r, dim, -1.0, 1.0);

    let mut tape = Tape::new();
    let w = tape.leaf(wv.clone(), &[dim, 1]).unwrap();
    let gp = linear_critic_gp(&mut tape, w, &xv, dim);

    let norm: f64 = wv.iter().map(|v| v * v).sum::<f64>().sqrt();
    let expected = (norm - 1.0).powi(2);
    assert!((tape.value(gp)[0] - expected).abs() < 1e-12);

    // Double backward: d gp / d w = 2 (||w|| - 1) w / ||w||.
    let grads = tape.backward(gp, &[w]).unwrap();
    let closed: Vec<f64> = wv.iter().map(|v| 2.0 * (norm - 1.0) * v / norm).collect();
    assert!(max_grad_err(&grads[0], &closed) < 1e-10);

    let eval = |vals: &[Vec<f64>]| -> f64 {
        let mut t = Tape::new();
        let w = t.leaf(vals[0].clone(), &[dim, 1]).unwrap();
        let gp = linear_critic_gp(&mut t, w, &xv, dim);
        t.value(gp)[0]
    };
    let numeric = fd_grads(eval, &[wv], FD_EPS);
    assert!(max_grad_err(&grads[0], &numeric[0]) < FD_TOL);
}

/// Two-layer critic gradient-penalty double-backward check. This is the exact
/// structure the critic losses differentiate during training.
#[test]
fn fd_double_backward_two_layer_critic_gp() {
    let mut r = rng(42);
    let (batch, dim, hidden) = (3, 8, 4);
    let xv = uniform_vec(&mut r, batch * dim, -1.0, 1.0);
    let w1 = uniform_vec(&mut r, dim * hidden, -0.8, 0.8);
    let b1 = uniform_vec(&mut r, hidden, -0.2, 0.2);
    let w2 = uniform_vec(&mut r, hidden, -0.8, 0.8);

    let build = |tape: &mut Tape, params: &[Tensor]| -> Tensor {
        let x = tape.leaf(xv.clone(), &[batch, dim]).unwrap();
        let h = tape.dense(x, params[0], params[1]).unwrap();
        let a = tape.leaky_relu(h, 0.2);
        let score = tape.matmul(a, params[2], false, false).unwrap();
        let s = tape.sum_all(score);
        let g = tape.grad_wrt_input(s, x).unwrap();
        let norm = tape.l2_norm_per_sample(g).unwrap();
        let shifted = tape.add_scalar(norm, -1.0);
        let sq = tape.mul(shifted, shifted).unwrap();
        tape.mean_all(sq)
    };

    check_grads(
        build,
        &[
            (w1, vec![dim, hidden]),
            (b1, vec![hidden]),
            (w2, vec![hidden, 1]),
        ],
    );
}

/// Same as above but through a conv2d front end, covering the spatial critic.
#[test]
fn fd_double_backward_conv_critic_gp() {
    let mut r = rng(43);
    let (batch, c, h, w) = (2, 2, 4, 4);
    let xv = uniform_vec(&mut r, batch * c * h * w, -1.0, 1.0);
    let kv = uniform_vec(&mut r, 3 * c * 3 * 3, -0.5, 0.5);
    let flat = 3 * 4 * 4;
    let wv = uniform_vec(&mut r, flat, -0.5, 0.5);

    let build = |tape: &mut Tape, params: &[Tensor]| -> Tensor {
        let x = tape.leaf(xv.clone(), &[batch, c, h, w]).unwrap();
        let conv = tape.conv2d(x, params[0], 1).unwrap();
        let act = tape.leaky_relu(conv, 0.2);
        let f = tape.flatten(act).unwrap();
        let score = tape.matmul(f, params[1], false, false).unwrap();
        let s = tape.sum_all(score);
        let g = tape.grad_wrt_input(s, x).unwrap();
        let norm = tape.l2_norm_per_sample(g).unwrap();
        let shifted = tape.add_scalar(norm, -1.0);
        let sq = tape.mul(shifted, shifted).unwrap();
        tape.mean_all(sq)
    };

    check_grads(build, &[(kv, vec![3, c, 3, 3]), (wv, vec![flat, 1])]);
}

// ---------------------------------------------------------------------------
// Batch norm statistics
// ---------------------------------------------------------------------------

#[test]
fn batch_norm_train_normalizes_per_channel() {
    let mut r = rng(44);
    let shape = [8, 3, 4, 4];
    let n: usize = shape.iter().product();
    let x: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..5.0)).collect();
    let mut tape = Tape::new();
    let xl = tape.leaf(x, &shape).unwrap();
    let gamma = tape.leaf(vec![1.0; 3], &[3]).unwrap();
    let beta = tape.leaf(vec![0.0; 3], &[3]).unwrap();
    let (y, batch_mean, batch_var) = tape.batch_norm_train(xl, gamma, beta, 1e-5).unwrap();

    let v = tape.value(y);
    let inner = 16;
    for ch in 0..3 {
        let mut vals = Vec::new();
        for b in 0..8 {
            let base = (b * 3 + ch) * inner;
            vals.extend_from_slice(&v[base..base + inner]);
        }
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-5, "channel {ch} mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
    }
    assert_eq!(batch_mean.len(), 3);
    assert_eq!(batch_var.len(), 3);
}

#[test]
fn batch_norm_eval_uses_running_stats() {
    let mut tape = Tape::new();
    let x = tape.leaf(vec![5.0, 7.0], &[2, 1]).unwrap();
    let gamma = tape.leaf(vec![2.0], &[1]).unwrap();
    let beta = tape.leaf(vec![1.0], &[1]).unwrap();
    let y = tape
        .batch_norm_eval(x, gamma, beta, &[6.0], &[4.0], 0.0)
        .unwrap();
    // (x - 6)/2 * 2 + 1
    assert_eq!(tape.value(y), &[0.0, 2.0]);
}
