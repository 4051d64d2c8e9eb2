use maria_core::autodiff::gradcheck::{check_params, GradCheckOptions};
use maria_core::autodiff::{Graph, ParamStore, Var};
use maria_core::nn::{trigger_attention, Activation, Embedding, Fcn, TransformerBlock};
use maria_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// `Σ x ⊙ W` for a fixed pseudo-random `W`, so every output entry matters.
fn weighted_sum(g: &mut Graph, x: Var, seed: u64) -> maria_core::Result<Var> {
    let shape = g.shape(x);
    let w = random(&mut rng(seed), shape[0] * shape[1]);
    let w = g.constant(shape, w)?;
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

fn opts(tolerance: f64) -> GradCheckOptions {
    GradCheckOptions {
        tolerance,
        ..GradCheckOptions::default()
    }
}

#[test]
fn lookup_duplicates_rows_and_scatters_gradients() {
    let mut store = ParamStore::new();
    let table = store.add("t", [2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let emb = Embedding { table, rows: 2, dim: 3 };
    let mut g = Graph::new(0);
    let x = emb.lookup(&mut g, &store, &[1, 1]).unwrap();
    assert_eq!(g.data(x), &[4.0, 5.0, 6.0, 4.0, 5.0, 6.0]);
    let l = g.sum(x);
    g.backward(l).unwrap();
    g.accumulate_param_grads(&mut store);
    assert_eq!(store.get(table).grad, vec![0.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
}

#[test]
fn empty_lookup_has_zero_rows() {
    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, "t", 4, 3, &mut rng(0));
    let mut g = Graph::new(0);
    let x = emb.lookup(&mut g, &store, &[]).unwrap();
    assert_eq!(g.shape(x), [0, 3]);
}

#[test]
fn out_of_range_lookup_names_table_and_id() {
    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, "emb.user", 4, 3, &mut rng(0));
    let mut g = Graph::new(0);
    let err = emb.lookup(&mut g, &store, &[0, 4]).unwrap_err();
    assert!(matches!(err, Error::IndexOutOfRange { id: 4, rows: 4, .. }));
    let msg = err.to_string();
    assert!(msg.contains("emb.user") && msg.contains('4'), "{msg}");
}

#[test]
fn lookup_matches_finite_differences() {
    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, "t", 5, 3, &mut rng(3));
    let report = check_params(
        &mut store,
        |s, g| {
            let x = emb.lookup(g, s, &[4, 0, 2, 2])?;
            let sq = g.mul(x, x)?;
            Ok(g.mean(sq))
        },
        &opts(1e-6),
    )
    .unwrap();
    assert!(report.passed, "{}", report.render());
}

#[test]
fn zero_sigmoid_layer_outputs_one_half() {
    let mut store = ParamStore::new();
    let net = Fcn::new(&mut store, "f", 5, &[1], &[Activation::Sigmoid], &mut rng(0));
    store.iter_mut().for_each(|p| p.data.iter_mut().for_each(|v| *v = 0.0));
    let mut g = Graph::new(0);
    let x = g.constant([3, 5], random(&mut rng(1), 15)).unwrap();
    let y = net.forward(&mut g, &store, x).unwrap();
    assert_eq!(g.data(y), &[0.5, 0.5, 0.5]);
}

#[test]
fn identity_layer_is_the_identity() {
    let mut store = ParamStore::new();
    let net = Fcn::new(&mut store, "f", 4, &[4], &[Activation::None], &mut rng(0));
    let (w, _) = net.weights().next().unwrap();
    let data = &mut store.get_mut(w).data;
    for i in 0..4 {
        for j in 0..4 {
            data[i * 4 + j] = f64::from(i == j);
        }
    }
    let mut g = Graph::new(0);
    let input = random(&mut rng(5), 8);
    let x = g.constant([2, 4], input.clone()).unwrap();
    let y = net.forward(&mut g, &store, x).unwrap();
    assert_eq!(g.data(y), input.as_slice());
    assert_eq!(net.output_dim(), 4);
}

#[test]
fn fcn_rejects_wrong_width() {
    let mut store = ParamStore::new();
    let net = Fcn::new(&mut store, "f", 4, &[2], &[Activation::Relu], &mut rng(0));
    let mut g = Graph::new(0);
    let x = g.constant([1, 3], vec![0.0; 3]).unwrap();
    assert!(net
        .forward(&mut g, &store, x)
        .unwrap_err()
        .to_string()
        .contains("fcn_forward"));
}

#[test]
fn two_layer_relu_net_matches_finite_differences() {
    let mut store = ParamStore::new();
    let net = Fcn::mlp(
        &mut store,
        "f",
        5,
        &[6, 3],
        Activation::Relu,
        Activation::Relu,
        &mut rng(2),
    );
    for p in store.iter_mut().filter(|p| p.name.ends_with(".b")) {
        p.data.iter_mut().for_each(|v| *v = 0.1);
    }
    let input = random(&mut rng(9), 20);
    let report = check_params(
        &mut store,
        |s, g| {
            let x = g.constant([4, 5], input.clone())?;
            let y = net.forward(g, s, x)?;
            weighted_sum(g, y, 4)
        },
        &opts(1e-6),
    )
    .unwrap();
    assert!(report.passed, "{}", report.render());
}

fn block(dim: usize, heads: usize, seed: u64) -> (ParamStore, TransformerBlock) {
    let mut store = ParamStore::new();
    let b = TransformerBlock::new(&mut store, "enc", dim, heads, 2, &mut rng(seed)).unwrap();
    (store, b)
}

#[test]
fn single_position_attends_to_itself() {
    let (store, b) = block(8, 2, 0);
    let mut g = Graph::new(0);
    let x = g.constant([1, 8], random(&mut rng(1), 8)).unwrap();
    let out = b.encode(&mut g, &store, x, 1, &[true]).unwrap();
    for a in &out.attention {
        assert_eq!(g.data(*a), &[1.0]);
    }
    assert_eq!(g.shape(out.out), [1, 8]);
}

#[test]
fn identical_tokens_encode_identically() {
    let (store, b) = block(8, 2, 1);
    let row = random(&mut rng(2), 8);
    let mut g = Graph::new(0);
    let x = g.constant([2, 8], [row.clone(), row].concat()).unwrap();
    let out = b.encode(&mut g, &store, x, 1, &[true, true]).unwrap();
    let d = g.data(out.out);
    assert_eq!(d[..8], d[8..]);
}

#[test]
fn transformer_rejects_wrong_model_dim() {
    let (store, b) = block(8, 2, 1);
    let mut g = Graph::new(0);
    let x = g.constant([2, 6], vec![0.0; 12]).unwrap();
    assert!(b.encode(&mut g, &store, x, 1, &[true, true]).is_err());
    let mut s2 = ParamStore::new();
    assert!(TransformerBlock::new(&mut s2, "bad", 7, 2, 2, &mut rng(0)).is_err());
}

#[test]
fn transformer_matches_finite_differences() {
    let (mut store, b) = block(8, 2, 4);
    let input = random(&mut rng(6), 24);
    let report = check_params(
        &mut store,
        |s, g| {
            let x = g.constant([3, 8], input.clone())?;
            let out = b.encode(g, s, x, 1, &[true, true, true])?;
            weighted_sum(g, out.out, 8)
        },
        &opts(1e-5),
    )
    .unwrap();
    assert!(report.passed, "{}", report.render());
    assert!(report.params.iter().all(|p| p.checked > 0), "{}", report.render());
}

#[test]
fn identical_keys_share_trigger_attention() {
    let mut store = ParamStore::new();
    let sim = Fcn::mlp(
        &mut store,
        "sim",
        3 + 4,
        &[5, 1],
        Activation::Relu,
        Activation::None,
        &mut rng(1),
    );
    let row = random(&mut rng(2), 4);
    let mut g = Graph::new(0);
    let t = g.constant([1, 3], vec![0.3, -0.1, 0.8]).unwrap();
    let seq = g.constant([2, 4], [row.clone(), row].concat()).unwrap();
    let att = trigger_attention(&mut g, &store, t, seq, &[true, true], &sim).unwrap();
    assert_eq!(g.data(att.weights), &[0.5, 0.5]);
}

#[test]
fn single_key_returns_that_row() {
    let mut store = ParamStore::new();
    let sim = Fcn::mlp(
        &mut store,
        "sim",
        2 + 4,
        &[5, 1],
        Activation::Relu,
        Activation::None,
        &mut rng(1),
    );
    let row = random(&mut rng(2), 4);
    let mut g = Graph::new(0);
    let t = g.constant([1, 2], vec![0.3, -0.1]).unwrap();
    let seq = g.constant([1, 4], row.clone()).unwrap();
    let att = trigger_attention(&mut g, &store, t, seq, &[true], &sim).unwrap();
    assert_eq!(g.data(att.pooled), row.as_slice());
}

#[test]
fn trigger_attention_rejects_mismatched_scorer() {
    let mut store = ParamStore::new();
    let sim = Fcn::mlp(
        &mut store,
        "sim",
        5,
        &[1],
        Activation::None,
        Activation::None,
        &mut rng(1),
    );
    let mut g = Graph::new(0);
    let t = g.constant([1, 2], vec![0.0; 2]).unwrap();
    let seq = g.constant([2, 4], vec![0.0; 8]).unwrap();
    assert!(trigger_attention(&mut g, &store, t, seq, &[true, true], &sim).is_err());
}

#[test]
fn trigger_attention_normalises_and_matches_finite_differences() {
    let mut store = ParamStore::new();
    let sim = Fcn::mlp(
        &mut store,
        "sim",
        3 + 4,
        &[6, 1],
        Activation::Relu,
        Activation::None,
        &mut rng(7),
    );
    let tv = random(&mut rng(8), 6);
    let sv = random(&mut rng(9), 24);
    let valid = [false, true, true, true, true, true];
    {
        let mut g = Graph::new(0);
        let t = g.constant([2, 3], tv.clone()).unwrap();
        let seq = g.constant([6, 4], sv.clone()).unwrap();
        let att = trigger_attention(&mut g, &store, t, seq, &valid, &sim).unwrap();
        let w = g.data(att.weights);
        assert_eq!(w[0], 0.0);
        for r in w.chunks(3) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
    let report = check_params(
        &mut store,
        |s, g| {
            let t = g.constant([2, 3], tv.clone())?;
            let seq = g.constant([6, 4], sv.clone())?;
            let att = trigger_attention(g, s, t, seq, &valid, &sim)?;
            weighted_sum(g, att.pooled, 10)
        },
        &opts(1e-5),
    )
    .unwrap();
    assert!(report.passed, "{}", report.render());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attention_rows_normalise_and_shapes_are_kept(m in 1usize..=8, blocks in 1usize..=3, seed in any::<u64>()) {
        let (store, b) = block(8, 2, seed);
        let mut r = rng(seed ^ 1);
        let mut g = Graph::new(0);
        let x = g.constant([blocks * m, 8], random(&mut r, blocks * m * 8)).unwrap();
        // Left padding: at least one valid position per sequence.
        let valid: Vec<bool> = (0..blocks)
            .flat_map(|_| {
                let pad = r.random_range(0..m);
                (0..m).map(move |i| i >= pad)
            })
            .collect();
        let out = b.encode(&mut g, &store, x, blocks, &valid).unwrap();
        prop_assert_eq!(g.shape(out.out), [blocks * m, 8]);
        for a in &out.attention {
            let d = g.data(*a);
            for (i, row) in d.chunks(m).enumerate() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                let blk = i / m;
                for (j, &w) in row.iter().enumerate() {
                    if !valid[blk * m + j] {
                        prop_assert_eq!(w, 0.0);
                    }
                }
            }
        }

        let mut s2 = ParamStore::new();
        let sim = Fcn::mlp(&mut s2, "sim", 3 + 8, &[4, 1], Activation::Relu, Activation::None, &mut r);
        let t = g.constant([blocks, 3], random(&mut r, blocks * 3)).unwrap();
        let att = trigger_attention(&mut g, &s2, t, out.out, &valid, &sim).unwrap();
        for row in g.data(att.weights).chunks(m) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn untouched_embedding_rows_get_exactly_zero(ids in proptest::collection::vec(0usize..10, 0..12)) {
        let mut store = ParamStore::new();
        let emb = Embedding::new(&mut store, "t", 10, 3, &mut rng(0));
        let mut g = Graph::new(0);
        let x = emb.lookup(&mut g, &store, &ids).unwrap();
        let sq = g.mul(x, x).unwrap();
        let l = g.sum(sq);
        g.backward(l).unwrap();
        g.accumulate_param_grads(&mut store);
        let grad = &store.get(emb.table).grad;
        for row in 0..10 {
            if !ids.contains(&row) {
                prop_assert!(grad[row * 3..row * 3 + 3].iter().all(|&v| v == 0.0));
            }
        }
    }
}
