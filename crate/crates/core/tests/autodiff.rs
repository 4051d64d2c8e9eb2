use maria_core::autodiff::gradcheck::check_inputs;
use maria_core::autodiff::{gumbel_softmax, Graph, ParamStore, Primitive, Var};
use maria_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
}

#[test]
fn primitive_values() {
    let mut g = Graph::new(0);
    let z = g.row(vec![0.0]);
    let s = g.sigmoid(z);
    assert_eq!(g.data(s), &[0.5]);

    let z2 = g.row(vec![0.0, 0.0]);
    let p = g.softmax(z2);
    assert_eq!(g.data(p), &[0.5, 0.5]);

    let a = g.row(vec![1.0, 2.0]);
    let b = g.constant([2, 1], vec![3.0, 4.0]).unwrap();
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.shape(c), [1, 1]);
    assert_eq!(g.data(c), &[11.0]);
}

#[test]
fn shape_errors_name_the_primitive_and_both_shapes() {
    let mut g = Graph::new(0);
    let a = g.constant([2, 3], vec![0.0; 6]).unwrap();
    let b = g.constant([2, 3], vec![0.0; 6]).unwrap();
    let err = g.matmul(a, b).unwrap_err();
    assert!(matches!(err, Error::Shape { op: "matmul", .. }));
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");

    let c = g.constant([3, 2], vec![0.0; 6]).unwrap();
    let msg = g.add(a, c).unwrap_err().to_string();
    assert!(
        msg.contains("add") && msg.contains("[2, 3]") && msg.contains("[3, 2]"),
        "{msg}"
    );
    let d = g.constant([3, 3], vec![0.0; 9]).unwrap();
    assert!(g.concat_cols(&[a, d]).is_err());
}

#[test]
fn requires_grad_is_the_or_of_inputs() {
    let mut g = Graph::new(0);
    let c = g.row(vec![1.0, 2.0]);
    let x = g.input([1, 2], vec![3.0, 4.0]).unwrap();
    let cc = g.add(c, c).unwrap();
    let cx = g.mul(c, x).unwrap();
    assert!(!g.node(cc).requires_grad());
    assert!(g.node(cx).requires_grad());
}

#[test]
fn stop_gradient_examples() {
    let mut g = Graph::new(0);
    let x = g.input([1, 2], vec![1.0, 2.0]).unwrap();
    let w = g.input([1, 2], vec![3.0, 5.0]).unwrap();
    let frozen = g.stop_gradient(x);
    assert_eq!(g.data(frozen), g.data(x));
    assert!(!g.node(frozen).requires_grad());
    assert!(g.node(frozen).parents().is_empty());
    let prod = g.mul(frozen, w).unwrap();
    let y = g.sum(prod);
    g.backward(y).unwrap();
    assert_eq!(g.grad(x), vec![0.0, 0.0]);
    assert_eq!(g.grad(w), vec![1.0, 2.0]);
}

#[test]
fn backward_examples() {
    let mut g = Graph::new(0);
    let x = g.input([1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    let sq = g.mul(x, x).unwrap();
    let l = g.sum(sq);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x), vec![2.0, 4.0, 6.0]);

    let c = 3.7;
    let mut g = Graph::new(0);
    let x = g.input([1, 1], vec![0.0]).unwrap();
    let s = g.sigmoid(x);
    let l = g.scale(s, c);
    g.backward(l).unwrap();
    assert!((g.grad(x)[0] - 0.25 * c).abs() < 1e-15);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new(0);
    let x = g.input([1, 2], vec![1.0, 2.0]).unwrap();
    let err = g.backward(x).unwrap_err();
    assert!(err.to_string().contains("backward"));
}

#[test]
fn param_grads_land_in_the_store_and_zero_out() {
    let mut store = ParamStore::new();
    let id = store.add("w", [1, 2], vec![1.0, -1.0]);
    let mut g = Graph::new(0);
    let w = g.param(&store, id);
    let sq = g.mul(w, w).unwrap();
    let l = g.sum(sq);
    g.backward(l).unwrap();
    g.accumulate_param_grads(&mut store);
    assert_eq!(store.get(id).grad, vec![2.0, -2.0]);
    assert_eq!(store.get(id).grad.len(), store.get(id).data.len());
    store.zero_grads();
    assert!(store.get(id).grad.iter().all(|&v| v == 0.0));
}

#[test]
fn gumbel_single_class_and_normalisation() {
    let mut g = Graph::new(7);
    let one = g.row(vec![0.3]);
    let y = gumbel_softmax(&mut g, one, 0.5).unwrap();
    assert_eq!(g.data(y), &[1.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let logits = g.row(random(&mut rng, 4));
        let y = gumbel_softmax(&mut g, logits, 0.7).unwrap();
        let s: f64 = g.data(y).iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }
    assert!(gumbel_softmax(&mut g, one, 0.0).is_err());
}

#[test]
fn gumbel_argmax_frequency_matches_the_categorical() {
    let n = 100_000;
    let mut g = Graph::new(2024);
    let logits: Vec<f64> = (0..n).flat_map(|_| [0.7f64.ln(), 0.3f64.ln()]).collect();
    let logits = g.constant([n, 2], logits).unwrap();
    let y = gumbel_softmax(&mut g, logits, 1.0).unwrap();
    let d = g.data(y);
    let first = (0..n).filter(|&i| d[2 * i] > d[2 * i + 1]).count();
    let freq = first as f64 / n as f64;
    assert!((freq - 0.70).abs() <= 0.02, "{freq}");
}

#[test]
fn gumbel_gradient_treats_noise_as_constant() {
    let worst = check_inputs(&[([2, 3], vec![0.2, -0.4, 0.9, 0.0, 0.3, -1.1])], 1e-5, 1e-6, |g, v| {
        let y = gumbel_softmax(g, v[0], 0.8)?;
        let w = g.constant([2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.1, -0.7])?;
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    })
    .unwrap();
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn same_seed_reproduces_bits() {
    let run = || {
        let mut g = Graph::new(99);
        let x = g.input([3, 4], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let y = gumbel_softmax(&mut g, x, 0.3).unwrap();
        let w = g.constant([3, 4], (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        let p = g.mul(y, w).unwrap();
        let l = g.sum(p);
        g.backward(l).unwrap();
        (g.data(y).to_vec(), g.grad(x))
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(
        ga.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        gb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn fault_injection_changes_the_gradient() {
    let grads = |fault: bool| {
        let mut g = Graph::new(0);
        if fault {
            g.inject_backward_fault(Primitive::Sigmoid, 2.0);
        }
        let x = g.input([1, 2], vec![0.1, 0.2]).unwrap();
        let s = g.sigmoid(x);
        let l = g.sum(s);
        g.backward(l).unwrap();
        g.grad(x)
    };
    let (clean, broken) = (grads(false), grads(true));
    for (c, b) in clean.iter().zip(&broken) {
        assert!((b - 2.0 * c).abs() < 1e-15);
    }
}

/// A scalar built from every differentiable primitive.
fn kitchen_sink(g: &mut Graph, v: &[Var], n: usize, k: usize, m: usize) -> maria_core::Result<Var> {
    let (a, b, c, r, col) = (v[0], v[1], v[2], v[3], v[4]);
    let x = g.matmul(a, b)?;
    let x = g.add(x, c)?;
    let c3 = g.scale(c, 0.3);
    let x = g.sub(x, c3)?;
    let x = g.add_row(x, r)?;
    let x = g.mul_row(x, r)?;
    let x = g.mul_col(x, col)?;
    let s = g.sigmoid(x);
    let t = g.softmax(x);
    let ln = g.layer_norm(x, 0.1);
    let rl = g.relu(x);
    let frozen = g.stop_gradient(x);
    let fx = g.mul(frozen, s)?;
    let cat = g.concat_cols(&[s, t, ln, rl, fx])?;
    let sl = g.slice_cols(cat, 1, m)?;
    let tr = g.transpose(sl);
    let tt = g.matmul(sl, tr)?; // [n, n]
    let stacked = g.concat_rows(&[s, t])?;
    let ids: Vec<usize> = (0..2 * n).rev().step_by(2).chain([0, 0]).collect();
    let gathered = g.gather_rows(stacked, &ids)?;
    let rep = g.repeat_rows(col, 2);
    let tiled = g.tile_rows(col, 2);
    let rt = g.mul(rep, tiled)?;
    let rs = g.reshape(rt, [1, 2 * n])?;
    let dots = g.row_dot(s, t)?;
    let sums = g.sum_rows(ln);
    let dm = g.mul(dots, sums)?;
    // blocks of a: [1, m] rows of s; blocks of b: [m, k] slices.
    let bt = g.transpose(b); // [m, k]
    let bb = g.tile_rows(bt, n); // [n*m, k]
    let bm = g.block_matmul(s, bb, n)?; // [n, k]
    let a_sq = g.mul(a, a)?;
    let bnt = g.block_matmul_nt(a, a_sq, n)?; // [n, 1]
                                              // Kept away from saturation: ln(1 - p) loses digits as p -> 1.
    let bnt = g.scale(bnt, 0.1);
    let prob = g.sigmoid(bnt);
    let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let bce = g.binary_cross_entropy(prob, &labels)?;
    let _ = k;
    let parts = [g.mean(tt), g.sum(gathered), g.sum(rs), g.sum(dm), g.mean(bm), bce];
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = g.add(total, p)?;
    }
    Ok(total)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_primitive_matches_finite_differences(n in 1usize..=8, k in 1usize..=8, m in 2usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![
            ([n, k], random(&mut rng, n * k)),
            ([k, m], random(&mut rng, k * m)),
            ([n, m], random(&mut rng, n * m)),
            ([1, m], random(&mut rng, m)),
            ([n, 1], random(&mut rng, n)),
        ];
        // The summed loss carries ~3e-10 of absolute difference noise, hence the 1e-3 floor.
        let worst = check_inputs(&inputs, 1e-5, 1e-3, |g, v| kitchen_sink(g, v, n, k, m)).unwrap();
        prop_assert!(worst <= 1e-6, "max relative error {worst}");
    }

    #[test]
    fn backward_visits_in_reverse_creation_order(seed in any::<u64>(), size in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new(seed);
        let mut vars: Vec<Var> = (0..3).map(|_| g.input([2, 2], random(&mut rng, 4)).unwrap()).collect();
        vars.push(g.constant([2, 2], random(&mut rng, 4)).unwrap());
        for _ in 0..size {
            let a = vars[rng.random_range(0..vars.len())];
            let b = vars[rng.random_range(0..vars.len())];
            let v = match rng.random_range(0..5) {
                0 => g.add(a, b).unwrap(),
                1 => g.mul(a, b).unwrap(),
                2 => g.sigmoid(a),
                3 => g.matmul(a, b).unwrap(),
                _ => g.stop_gradient(a),
            };
            vars.push(v);
        }
        let last = *vars.last().unwrap();
        let loss = g.sum(last);
        for (idx, node) in g.nodes().iter().enumerate() {
            for p in node.parents() {
                prop_assert!(p.index() < idx);
            }
        }
        g.record_visits();
        g.backward(loss).unwrap();
        let visits = g.visits().unwrap().to_vec();
        prop_assert!(visits.windows(2).all(|w| w[0] > w[1]));
        let pos = |i: usize| visits.iter().position(|&v| v == i);
        // Every consumer that needs gradients is processed before its parents.
        for (idx, node) in g.nodes().iter().enumerate() {
            if !node.requires_grad() || pos(idx).is_none() {
                continue;
            }
            for p in node.parents() {
                if let Some(pp) = pos(p.index()) {
                    prop_assert!(pos(idx).unwrap() < pp);
                }
            }
        }
    }

    #[test]
    fn stop_gradient_blocks_all_sensitivity(seed in any::<u64>(), scale in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new(0);
        let ancestor = g.input([2, 3], random(&mut rng, 6)).unwrap();
        let w = g.input([3, 2], random(&mut rng, 6)).unwrap();
        let h = g.matmul(ancestor, w).unwrap();
        let h = g.sigmoid(h);
        let h = g.scale(h, scale);
        let frozen = g.stop_gradient(h);
        let other = g.input([2, 2], random(&mut rng, 4)).unwrap();
        let y = g.mul(frozen, other).unwrap();
        let y = g.softmax(y);
        let c = g.constant([2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let y = g.mul(y, c).unwrap();
        let l = g.sum(y);
        g.backward(l).unwrap();
        prop_assert!(g.grad(ancestor).iter().all(|&v| v == 0.0));
        prop_assert!(g.grad(w).iter().all(|&v| v == 0.0));
        prop_assert!(g.grad(other).iter().any(|&v| v != 0.0));
    }
}
