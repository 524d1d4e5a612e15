use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Tensor::new(shape.to_vec(), values).unwrap().with_grad(true)
}

/// Central finite differences of `f` with respect to every input entry.
fn numeric_grads(inputs: &[Tensor], f: &dyn Fn(&[Tensor]) -> f64, step: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut grads = Vec::new();
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].values_mut()[j] += step;
            let mut minus = inputs.to_vec();
            minus[i].values_mut()[j] -= step;
            grads.push((f(&plus) - f(&minus)) / (2.0 * step));
        }
        out.push(grads);
    }
    out
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Builds `build(inputs)` on a tape, reduces it with fixed random weights,
/// and compares tape gradients with finite differences.
fn check_op(
    seed: u64,
    shapes: &[&[usize]],
    build: &dyn Fn(&mut Tape, &[Var]) -> Var,
    tol: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
    let probe = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).len()
    };
    let weights: Vec<f64> = (0..probe).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let eval = |ts: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ts.iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = build(&mut tape, &vars);
    let weighted = tape.mul_const(out, weights.clone()).unwrap();
    let loss = tape.sum(weighted).unwrap();
    tape.backward(loss).unwrap();
    let numeric = numeric_grads(&inputs, &eval, 1e-5);
    let mut worst: f64 = 0.0;
    for (v, num) in vars.iter().zip(&numeric) {
        let analytic = tape.grad(*v).map(<[f64]>::to_vec).unwrap_or(vec![0.0; num.len()]);
        for (a, n) in analytic.iter().zip(num) {
            worst = worst.max(rel_err(*a, *n));
        }
    }
    assert!(worst <= tol, "seed {seed}: rel err {worst}");
    worst
}

#[test]
fn matmul_small_cases() {
    let mut tape = Tape::new();
    let eye = tape.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let m = tape.constant(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let out = tape.matmul(eye, m).unwrap();
    assert_eq!(tape.value(out), &[1.0, 2.0, 3.0, 4.0]);

    let a = tape.constant(vec![1, 2], vec![1.0, 2.0]).unwrap();
    let b = tape.constant(vec![2, 1], vec![3.0, 4.0]).unwrap();
    let out = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(out), &[11.0]);

    let err = tape.matmul(a, a).unwrap_err();
    assert!(matches!(err, TensorError::Dimension { lhs, rhs, .. } if lhs == vec![1, 2] && rhs == vec![1, 2]));
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    for seed in 0..20 {
        check_op(seed, &[&[3, 4], &[4, 2]], &|t, v| t.matmul(v[0], v[1]).unwrap(), 1e-6);
    }
}

#[test]
fn softmax_rows_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(vec![2], vec![0.0, 0.0]).unwrap();
    let y = tape.softmax_rows(x).unwrap();
    assert_eq!(tape.value(y), &[0.5, 0.5]);

    let x = tape.constant(vec![1, 3], vec![1000.0; 3]).unwrap();
    let y = tape.softmax_rows(x).unwrap();
    for v in tape.value(y) {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    let x = tape
        .constant(vec![1, 3], vec![f64::NEG_INFINITY, 0.0, 0.0])
        .unwrap();
    let y = tape.softmax_rows(x).unwrap();
    assert_eq!(tape.value(y), &[0.0, 0.5, 0.5]);
}

#[test]
fn softmax_rows_sum_to_one_and_gradients_match() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[2, 5]);
        let mut tape = Tape::new();
        let v = tape.leaf(&x);
        let y = tape.softmax_rows(v).unwrap();
        for row in tape.value(y).chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        check_op(seed, &[&[2, 5]], &|t, v| t.softmax_rows(v[0]).unwrap(), 1e-6);
    }
}

#[test]
fn concat_examples_and_backward() {
    let mut tape = Tape::new();
    let a = tape.leaf(&Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_grad(true));
    let b = tape.leaf(&Tensor::new(vec![1], vec![3.0]).unwrap().with_grad(true));
    let c = tape.concat(&[a, b], 0).unwrap();
    assert_eq!(tape.value(c), &[1.0, 2.0, 3.0]);
    let s = tape.sum(c).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(a).unwrap(), &[1.0, 1.0]);
    assert_eq!(tape.grad(b).unwrap(), &[1.0]);

    let x = tape.constant(vec![82, 128], vec![0.0; 82 * 128]).unwrap();
    let wide = tape.concat(&[x, x], 1).unwrap();
    assert_eq!(tape.shape(wide), &[82, 256]);

    let y = tape.constant(vec![3, 2], vec![0.0; 6]).unwrap();
    assert!(matches!(
        tape.concat(&[x, y], 1),
        Err(TensorError::Dimension { .. })
    ));
}

#[test]
fn concat_then_slice_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = rand_tensor(&mut rng, &[3, 2]);
    let b = rand_tensor(&mut rng, &[3, 4]);
    let mut tape = Tape::new();
    let (va, vb) = (tape.leaf(&a), tape.leaf(&b));
    let c = tape.concat(&[va, vb], 1).unwrap();
    let left = tape.slice(c, 1, 0, 2).unwrap();
    let right = tape.slice(c, 1, 2, 6).unwrap();
    assert_eq!(tape.value(left), a.values());
    assert_eq!(tape.value(right), b.values());
    let both = tape.concat(&[left, right], 1).unwrap();
    let s = tape.sum(both).unwrap();
    tape.backward(s).unwrap();
    assert!(tape.grad(va).unwrap().iter().all(|g| *g == 1.0));
    assert!(tape.grad(vb).unwrap().iter().all(|g| *g == 1.0));
    for seed in 0..20 {
        check_op(
            seed,
            &[&[3, 2], &[3, 4]],
            &|t, v| {
                let c = t.concat(&[v[0], v[1]], 1).unwrap();
                let r = t.concat(&[v[1], v[0]], 1).unwrap();
                let c = t.slice(c, 1, 1, 5).unwrap();
                let r = t.slice(r, 0, 1, 3).unwrap();
                let r = t.slice(r, 1, 0, 4).unwrap();
                let c = t.slice(c, 0, 0, 2).unwrap();
                t.mul(c, r).unwrap()
            },
            1e-6,
        );
    }
}

#[test]
fn pointwise_examples_and_gradients() {
    let mut tape = Tape::new();
    let z = tape.constant(vec![1], vec![0.0]).unwrap();
    let s = tape.sigmoid(z).unwrap();
    let t = tape.tanh(z).unwrap();
    assert_eq!(tape.value(s), &[0.5]);
    assert_eq!(tape.value(t), &[0.0]);
    let other = tape.constant(vec![2], vec![0.0; 2]).unwrap();
    assert!(tape.add(z, other).is_err());
    assert!(tape.mul(z, other).is_err());

    for seed in 0..20 {
        check_op(seed, &[&[4, 4]], &|t, v| t.sigmoid(v[0]).unwrap(), 1e-6);
        check_op(seed, &[&[4, 4]], &|t, v| t.tanh(v[0]).unwrap(), 1e-6);
        check_op(seed, &[&[4, 4], &[4, 4]], &|t, v| t.add(v[0], v[1]).unwrap(), 1e-6);
        check_op(seed, &[&[4, 4], &[4, 4]], &|t, v| t.mul(v[0], v[1]).unwrap(), 1e-6);
        check_op(seed, &[&[4, 4], &[4]], &|t, v| t.add_bias(v[0], v[1]).unwrap(), 1e-6);
        check_op(seed, &[&[3, 4]], &|t, v| t.transpose(v[0]).unwrap(), 1e-6);
        check_op(
            seed,
            &[&[5, 3]],
            &|t, v| t.gather_rows(v[0], &[4, 0, 4, 2]).unwrap(),
            1e-6,
        );
    }
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::new();
    let p = tape
        .constant(vec![2, 3], vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0])
        .unwrap();
    let loss = tape
        .cross_entropy(p, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0], &[1.0, 1.0])
        .unwrap();
    assert_eq!(tape.value(loss), &[0.0]);

    let u = tape.constant(vec![2, 4], vec![0.25; 8]).unwrap();
    let onehot = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let loss = tape.cross_entropy(u, &onehot, &[1.0, 0.0]).unwrap();
    assert!((tape.value(loss)[0] - 4f64.ln()).abs() < 1e-15);

    // Zero probability at the gold label is clamped, not an error.
    let loss = tape
        .cross_entropy(p, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[1.0, 1.0])
        .unwrap();
    assert!((tape.value(loss)[0] + 1e-12f64.ln()).abs() < 1e-9);

    let neg = tape.constant(vec![1, 2], vec![-0.1, 1.1]).unwrap();
    assert!(matches!(
        tape.cross_entropy(neg, &[0.0, 1.0], &[1.0]),
        Err(TensorError::Domain { .. })
    ));
}

#[test]
fn cross_entropy_matches_scalar_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (6, 4);
        let logits = rand_tensor(&mut rng, &[m, n]);
        let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
        let mask: Vec<f64> = (0..m).map(|_| f64::from(rng.gen_bool(0.7) as u8)).collect();
        let mut onehot = vec![0.0; m * n];
        for (t, &l) in labels.iter().enumerate() {
            onehot[t * n + l] = 1.0;
        }
        let mut tape = Tape::new();
        let x = tape.leaf(&logits);
        let p = tape.softmax_rows(x).unwrap();
        let loss = tape.cross_entropy(p, &onehot, &mask).unwrap();

        let mut oracle = 0.0;
        for t in 0..m {
            let row = &logits.values()[t * n..(t + 1) * n];
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            oracle -= mask[t] * (row[labels[t]].exp() / denom).ln();
        }
        assert!((tape.value(loss)[0] - oracle).abs() < 1e-12);

        check_op(
            seed,
            &[&[m, n]],
            &|t, v| {
                let p = t.softmax_rows(v[0]).unwrap();
                t.cross_entropy(p, &onehot, &mask).unwrap()
            },
            1e-6,
        );
    }
}

#[test]
fn backward_basics() {
    let mut tape = Tape::new();
    let x = tape.leaf(&Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap().with_grad(true));
    let lonely = tape.leaf(&Tensor::new(vec![3], vec![1.0; 3]).unwrap().with_grad(true));
    let frozen = tape.leaf(&Tensor::new(vec![2, 2], vec![2.0; 4]).unwrap());
    let prod = tape.mul(x, frozen).unwrap();
    let s = tape.sum(prod).unwrap();
    assert!(tape.backward(prod).is_err());
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0; 4]);
    assert!(tape.grad(lonely).is_none());
    assert!(tape.tensor(lonely).grad().iter().all(|g| *g == 0.0));
    assert!(tape.tensor(frozen).grad().iter().all(|g| *g == 0.0));

    // A second pass accumulates.
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[4.0; 4]);
    tape.zero_grads();
    assert!(tape.grad(x).is_none());
}

#[test]
fn sum_of_input_gives_ones() {
    let mut tape = Tape::new();
    let x = tape.leaf(&Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().with_grad(true));
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn backward_is_deterministic_across_identical_tapes() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let a = rand_tensor(&mut rng, &[5, 8]);
        let w = rand_tensor(&mut rng, &[8, 12]);
        let wh = rand_tensor(&mut rng, &[3, 12]);
        let mut tape = Tape::new();
        let (va, vw, vh) = (tape.leaf(&a), tape.leaf(&w), tape.leaf(&wh));
        let proj = tape.matmul(va, vw).unwrap();
        let h = tape.lstm_recurrence(proj, vh, 1, false).unwrap();
        let p = tape.softmax_rows(h).unwrap();
        let s = tape.sum(p).unwrap();
        let q = tape.mul(h, h).unwrap();
        let s2 = tape.sum(q).unwrap();
        let tot = tape.add(s, s2).unwrap();
        tape.backward(tot).unwrap();
        [va, vw, vh].map(|v| tape.grad(v).unwrap().to_vec())
    };
    let first = run();
    let second = run();
    for (x, y) in first.iter().zip(&second) {
        assert!(x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

/// Reference recurrence assembled from primitive ops only.
fn composed_lstm(tape: &mut Tape, xproj: Var, w_h: Var, batch: usize, reverse: bool) -> Var {
    let (rows, g4) = (tape.shape(xproj)[0], tape.shape(xproj)[1]);
    let hidden = g4 / 4;
    let steps = rows / batch;
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    let mut state: Option<(Var, Var)> = None;
    let mut outs = vec![None; steps];
    for &t in &order {
        let idx: Vec<usize> = (0..batch).map(|b| b * steps + t).collect();
        let mut pre = tape.gather_rows(xproj, &idx).unwrap();
        if let Some((h, _)) = state {
            let rec = tape.matmul(h, w_h).unwrap();
            pre = tape.add(pre, rec).unwrap();
        }
        let gi = tape.slice(pre, 1, 0, hidden).unwrap();
        let gf = tape.slice(pre, 1, hidden, 2 * hidden).unwrap();
        let gg = tape.slice(pre, 1, 2 * hidden, 3 * hidden).unwrap();
        let go = tape.slice(pre, 1, 3 * hidden, 4 * hidden).unwrap();
        let i = tape.sigmoid(gi).unwrap();
        let f = tape.sigmoid(gf).unwrap();
        let g = tape.tanh(gg).unwrap();
        let o = tape.sigmoid(go).unwrap();
        let ig = tape.mul(i, g).unwrap();
        let c = match state {
            Some((_, c_prev)) => {
                let fc = tape.mul(f, c_prev).unwrap();
                tape.add(fc, ig).unwrap()
            }
            None => ig,
        };
        let tc = tape.tanh(c).unwrap();
        let h = tape.mul(o, tc).unwrap();
        state = Some((h, c));
        outs[t] = Some(h);
    }
    // Reassemble example-major rows.
    let outs: Vec<Var> = outs.into_iter().map(Option::unwrap).collect();
    let stacked = tape.concat(&outs, 0).unwrap();
    let perm: Vec<usize> = (0..batch)
        .flat_map(|b| (0..steps).map(move |t| t * batch + b))
        .collect();
    tape.gather_rows(stacked, &perm).unwrap()
}

#[test]
fn fused_lstm_matches_composed_reference() {
    for (seed, reverse) in [(1u64, false), (2, true), (3, false), (4, true)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (batch, steps, hidden) = (3, 5, 4);
        let x = rand_tensor(&mut rng, &[batch * steps, 4 * hidden]);
        let w = rand_tensor(&mut rng, &[hidden, 4 * hidden]);
        let weights: Vec<f64> = (0..batch * steps * hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let grads = |fused: bool| {
            let mut tape = Tape::new();
            let (vx, vw) = (tape.leaf(&x), tape.leaf(&w));
            let h = if fused {
                tape.lstm_recurrence(vx, vw, batch, reverse).unwrap()
            } else {
                composed_lstm(&mut tape, vx, vw, batch, reverse)
            };
            let out = tape.value(h).to_vec();
            let wsum = tape.mul_const(h, weights.clone()).unwrap();
            let l = tape.sum(wsum).unwrap();
            tape.backward(l).unwrap();
            (out, tape.grad(vx).unwrap().to_vec(), tape.grad(vw).unwrap().to_vec())
        };
        let (hf, gxf, gwf) = grads(true);
        let (hc, gxc, gwc) = grads(false);
        for (a, b) in hf.iter().zip(&hc).chain(gxf.iter().zip(&gxc)).chain(gwf.iter().zip(&gwc)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        check_op(
            seed,
            &[&[batch * steps, 4 * hidden], &[hidden, 4 * hidden]],
            &|t, v| t.lstm_recurrence(v[0], v[1], batch, reverse).unwrap(),
            1e-6,
        );
    }
}

#[test]
fn fault_injection_corrupts_only_the_named_op() {
    let build = |tape: &mut Tape| {
        let x = tape.leaf(&Tensor::new(vec![2], vec![0.3, -0.2]).unwrap().with_grad(true));
        let s = tape.sigmoid(x).unwrap();
        let l = tape.sum(s).unwrap();
        tape.backward(l).unwrap();
        tape.grad(x).unwrap().to_vec()
    };
    let clean = build(&mut Tape::new());
    let broken = build(&mut Tape::with_fault(OpKind::Sigmoid));
    let unaffected = build(&mut Tape::with_fault(OpKind::Tanh));
    assert_eq!(clean, unaffected);
    assert!((broken[0] / clean[0] - 1.5).abs() < 1e-12);
}

#[test]
fn rejects_inconsistent_lengths() {
    assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    assert!(Tensor::new(vec![0, 2], vec![]).is_err());
    let t = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
    assert_eq!(t.grad().len(), 6);
    assert_eq!(t.matrix_dims(), Some((2, 3)));
}

#[test]
fn op_names_round_trip() {
    for k in OpKind::DIFFERENTIABLE {
        assert_eq!(k.name().parse::<OpKind>().unwrap(), k);
    }
    assert!("bogus".parse::<OpKind>().is_err());
}
