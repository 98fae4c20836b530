use super::*;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

/// Central finite differences of `f` (graph builder -> scalar) against the
/// analytic gradient for every entry of every input.
fn check_grads(inputs: &[Array2<f64>], build: impl Fn(&mut Tape, &[Var]) -> Var, tol: f64) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone(), true)).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out);

    let h = 1e-5;
    for (idx, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[idx])
            .cloned()
            .unwrap_or_else(|| Array2::zeros(input.dim()));
        for r in 0..input.nrows() {
            for c in 0..input.ncols() {
                let eval = |delta: f64| {
                    let mut perturbed: Vec<Array2<f64>> = inputs.to_vec();
                    perturbed[idx][[r, c]] += delta;
                    let mut t = Tape::new();
                    let vs: Vec<Var> =
                        perturbed.iter().map(|m| t.leaf(m.clone(), true)).collect();
                    let o = build(&mut t, &vs);
                    t.scalar(o)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[[r, c]];
                let denom = a.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (a - fd).abs() / denom < tol,
                    "grad mismatch input {idx} at ({r},{c}): analytic {a}, fd {fd}"
                );
            }
        }
    }
}

#[test]
fn matmul_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_mat(&mut rng, 3, 4);
    let b = rand_mat(&mut rng, 4, 5);
    check_grads(&[a, b], |t, v| {
        let m = t.matmul(v[0], v[1]);
        t.mean_all(m)
    }, 1e-6);
}

#[test]
fn matmul_nt_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_mat(&mut rng, 3, 4);
    let b = rand_mat(&mut rng, 5, 4);
    check_grads(&[a, b], |t, v| {
        let m = t.matmul_nt(v[0], v[1]);
        t.mean_all(m)
    }, 1e-6);
}

#[test]
fn elementwise_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_mat(&mut rng, 4, 3);
    let b = rand_mat(&mut rng, 4, 3);
    check_grads(&[a.clone(), b.clone()], |t, v| {
        let s = t.add(v[0], v[1]);
        let d = t.sub(s, v[1]);
        let m = t.mul(d, v[1]);
        let sc = t.scale(m, 0.7);
        t.sum_all(sc)
    }, 1e-6);
}

#[test]
fn broadcast_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_mat(&mut rng, 5, 3);
    let row = rand_mat(&mut rng, 1, 3);
    check_grads(&[a.clone(), row.clone()], |t, v| {
        let x = t.add_row_broadcast(v[0], v[1]);
        let y = t.sub_row_broadcast(x, v[1]);
        let z = t.add_row_broadcast(y, v[1]);
        t.mean_all(z)
    }, 1e-6);
}

#[test]
fn activation_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Keep entries away from the relu/abs kinks.
    let a = rand_mat(&mut rng, 4, 4).mapv(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    check_grads(&[a], |t, v| {
        let r = t.relu(v[0]);
        let th = t.tanh(r);
        let ab = t.abs(th);
        t.mean_all(ab)
    }, 1e-5);
}

#[test]
fn sqrt_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = rand_mat(&mut rng, 3, 3).mapv(|v| v.abs() + 0.3);
    check_grads(&[a], |t, v| {
        let s = t.sqrt_floor(v[0], 0.0);
        t.sum_all(s)
    }, 1e-6);
}

#[test]
fn sqrt_floor_subgradient_zero() {
    let mut tape = Tape::new();
    let x = tape.leaf(Array2::zeros((1, 2)), true);
    let s = tape.sqrt_floor(x, 0.0);
    let out = tape.sum_all(s);
    let grads = tape.backward(out);
    let g = grads.get(x).unwrap();
    assert_eq!(g[[0, 0]], 0.0);
    assert_eq!(g[[0, 1]], 0.0);
}

#[test]
fn softmax_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_mat(&mut rng, 3, 5);
    let w = rand_mat(&mut rng, 3, 5);
    let wc = w.clone();
    check_grads(&[a], move |t, v| {
        let p = t.softmax_rows(v[0]);
        let weights = t.constant(wc.clone());
        let m = t.mul(p, weights);
        t.sum_all(m)
    }, 1e-5);
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = rand_mat(&mut rng, 6, 9).mapv(|v| v * 40.0);
    let mut tape = Tape::new();
    let x = tape.constant(a);
    let p = tape.softmax_rows(x);
    for row in tape.value(p).rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn cross_entropy_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let logits = rand_mat(&mut rng, 4, 6).mapv(|v| v * 3.0);
    check_grads(&[logits], |t, v| t.cross_entropy_rows(v[0], vec![2, 0, 5, 1]), 1e-5);
}

#[test]
fn layer_norm_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = rand_mat(&mut rng, 4, 6);
    let gamma = rand_mat(&mut rng, 1, 6).mapv(|v| v + 1.5);
    let beta = rand_mat(&mut rng, 1, 6);
    check_grads(&[x, gamma, beta], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-5);
        let sq = t.mul(y, y);
        t.mean_all(sq)
    }, 1e-4);
}

#[test]
fn concat_slice_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_mat(&mut rng, 4, 3);
    let b = rand_mat(&mut rng, 4, 2);
    check_grads(&[a, b], |t, v| {
        let cat = t.concat_cols(v[0], v[1]);
        let left = t.slice_cols(cat, 0, 4);
        let top = t.slice_rows(left, 1, 4);
        let sq = t.mul(top, top);
        t.sum_all(sq)
    }, 1e-6);
}

#[test]
fn unfold_time_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = rand_mat(&mut rng, 6, 3);
    let w = rand_mat(&mut rng, 15, 2);
    check_grads(&[x, w], |t, v| {
        let u = t.unfold_time(v[0], 5);
        let y = t.matmul(u, v[1]);
        t.mean_all(y)
    }, 1e-6);
}

#[test]
fn unfold_time_zero_pads_edges() {
    let x = Array2::from_shape_fn((3, 2), |(r, c)| (r * 2 + c) as f64 + 1.0);
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let u = tape.unfold_time(v, 3);
    let uv = tape.value(u);
    assert_eq!(uv.dim(), (3, 6));
    // First row: left tap is zero padding, center tap is row 0, right tap row 1.
    assert_eq!(uv[[0, 0]], 0.0);
    assert_eq!(uv[[0, 1]], 0.0);
    assert_eq!(uv[[0, 2]], 1.0);
    assert_eq!(uv[[0, 4]], 3.0);
    // Last row: right tap is zero padding.
    assert_eq!(uv[[2, 4]], 0.0);
    assert_eq!(uv[[2, 5]], 0.0);
}

#[test]
fn pooling_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = rand_mat(&mut rng, 5, 4);
    check_grads(&[x], |t, v| {
        let mu = t.mean_rows(v[0]);
        let centered = t.sub_row_broadcast(v[0], mu);
        let sq = t.mul(centered, centered);
        let var = t.mean_rows(sq);
        let std = t.sqrt_floor(var, 1e-8);
        let cat = t.concat_cols(mu, std);
        t.mean_all(cat)
    }, 1e-5);
}

#[test]
fn repeat_rows_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let row = rand_mat(&mut rng, 1, 4);
    let other = rand_mat(&mut rng, 6, 4);
    let oc = other.clone();
    check_grads(&[row], move |t, v| {
        let rep = t.repeat_rows(v[0], 6);
        let k = t.constant(oc.clone());
        let m = t.mul(rep, k);
        t.sum_all(m)
    }, 1e-6);
}

#[test]
fn cosine_gap_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = rand_mat(&mut rng, 1, 8).mapv(|v| v + 0.2);
    let b = rand_mat(&mut rng, 1, 8).mapv(|v| v - 0.1);
    check_grads(&[a, b], |t, v| t.cosine_gap(v[0], v[1]), 1e-5);
}

#[test]
fn cosine_gap_value_range() {
    let mut tape = Tape::new();
    let a = tape.constant(Array2::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap());
    let b = tape.constant(Array2::from_shape_vec((1, 2), vec![-1.0, 0.0]).unwrap());
    let same = tape.cosine_gap(a, a);
    let anti = tape.cosine_gap(a, b);
    assert!((tape.scalar(same) - 0.0).abs() < 1e-15);
    assert!((tape.scalar(anti) - 2.0).abs() < 1e-15);
}

#[test]
fn constants_do_not_collect_gradients() {
    let mut tape = Tape::new();
    let c = tape.constant(Array2::from_elem((2, 2), 3.0));
    let x = tape.leaf(Array2::from_elem((2, 2), 2.0), true);
    let m = tape.mul(c, x);
    let out = tape.sum_all(m);
    let grads = tape.backward(out);
    assert!(grads.get(c).is_none());
    assert_eq!(grads.get(x).unwrap()[[0, 0]], 3.0);
}

#[test]
fn gradient_flows_through_shared_subexpression() {
    // f(x) = sum(x*x + x) -> df/dx = 2x + 1
    let mut tape = Tape::new();
    let x = tape.leaf(Array2::from_elem((2, 3), 1.5), true);
    let sq = tape.mul(x, x);
    let s = tape.add(sq, x);
    let out = tape.sum_all(s);
    let grads = tape.backward(out);
    let g = grads.get(x).unwrap();
    assert!(g.iter().all(|&v| (v - 4.0).abs() < 1e-12));
}

#[test]
fn backward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let a = rand_mat(&mut rng, 7, 5);
    let w = rand_mat(&mut rng, 5, 5);
    let run = || {
        let mut t = Tape::new();
        let x = t.leaf(a.clone(), true);
        let wv = t.leaf(w.clone(), true);
        let h = t.matmul(x, wv);
        let r = t.relu(h);
        let o = t.mean_all(r);
        let g = t.backward(o);
        (t.scalar(o), g.get(x).unwrap().clone(), g.get(wv).unwrap().clone())
    };
    let (v1, gx1, gw1) = run();
    let (v2, gx2, gw2) = run();
    assert_eq!(v1.to_bits(), v2.to_bits());
    assert_eq!(gx1, gx2);
    assert_eq!(gw1, gw2);
}
