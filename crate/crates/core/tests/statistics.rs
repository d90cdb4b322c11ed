//! Statistical and end-to-end training checks.

use std::sync::Arc;

use hyperwave::autodiff::Tape;
use hyperwave::data::{split_interactions, InteractionGraph, SplitRatios};
use hyperwave::eval::evaluate_embeddings;
use hyperwave::model::{forward_tape, init_params, ModelSpec, EMBED_ITEMS, EMBED_USERS};
use hyperwave::train::{adam_step, bpr_loss, AdamConfig, AdamState, BprSampler};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Upper 0.1% point of chi-squared with `df` degrees of freedom
/// (Wilson-Hilferty).
fn chi2_critical(df: f64) -> f64 {
    let z = 3.090_232;
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

#[test]
fn negatives_are_uniform_over_unseen_items() {
    let n_items = 25;
    let mut pairs = Vec::new();
    for i in [0, 3, 4, 9, 17] {
        pairs.push((0, i));
    }
    for i in 10..22 {
        pairs.push((1, i));
    }
    pairs.push((2, 24));
    let g = InteractionGraph::from_pairs(3, n_items, &pairs).unwrap();
    let sampler = BprSampler::new(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = vec![vec![0usize; n_items]; 3];
    let mut pos_counts = [0usize; 3];
    for _ in 0..60 {
        let b = sampler.sample(1000, &mut rng);
        for ((&u, &p), &n) in b.users.iter().zip(&b.pos).zip(&b.neg) {
            assert!(pairs.contains(&(u, p)));
            assert!(!pairs.contains(&(u, n)));
            counts[u][n] += 1;
            pos_counts[u] += 1;
        }
    }
    // Users are drawn in proportion to their interaction counts.
    let total: usize = pos_counts.iter().sum();
    for (u, share) in [5.0, 12.0, 1.0].iter().enumerate() {
        let expect = total as f64 * share / pairs.len() as f64;
        assert!(((pos_counts[u] as f64) - expect).abs() < 5.0 * expect.sqrt(), "user {u}");
    }
    for (u, row) in counts.iter().enumerate() {
        let unseen: Vec<usize> = (0..n_items).filter(|&i| !pairs.contains(&(u, i))).collect();
        let n: usize = row.iter().sum();
        let expect = n as f64 / unseen.len() as f64;
        let chi2: f64 = unseen.iter().map(|&i| (row[i] as f64 - expect).powi(2) / expect).sum();
        let crit = chi2_critical((unseen.len() - 1) as f64);
        assert!(chi2 < crit, "user {u}: chi2 {chi2:.2} above {crit:.2}");
    }
}

#[test]
fn matrix_factorization_fits_a_single_user() {
    let n_items = 30;
    let pairs: Vec<_> = (0..10).map(|i| (0, i * 3)).collect();
    let g = InteractionGraph::from_pairs(1, n_items, &pairs).unwrap();
    let spec = ModelSpec::matrix_factorization(1, n_items, 8);
    let mut params = init_params(&spec, 5).unwrap();
    let sampler = BprSampler::new(&g).unwrap();
    let adam = AdamConfig {
        lr: 0.05,
        ..AdamConfig::default()
    };
    let mut state = AdamState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut loss = f64::INFINITY;
    for _ in 0..400 {
        let batch = sampler.sample(64, &mut rng);
        let mut t = Tape::new();
        let vars = forward_tape(&mut t, &spec, &params, None, None).unwrap();
        let u = t.gather_rows(vars.users, Arc::new(batch.users)).unwrap();
        let p = t.gather_rows(vars.items, Arc::new(batch.pos)).unwrap();
        let n = t.gather_rows(vars.items, Arc::new(batch.neg)).unwrap();
        let sp = t.row_dot(u, p).unwrap();
        let sn = t.row_dot(u, n).unwrap();
        let l = bpr_loss(&mut t, sp, sn).unwrap();
        loss = t.scalar(l);
        let grads = t.backward(l).unwrap().named();
        adam_step(&mut params, &grads, &mut state, &adam).unwrap();
    }
    assert!(loss < 0.05, "final bpr {loss}");
    let u = params.get(EMBED_USERS).unwrap().row(0).to_owned();
    let scores = params.get(EMBED_ITEMS).unwrap().dot(&u);
    let is_pos = |i: usize| pairs.iter().any(|p| p.1 == i);
    let min_pos = (0..n_items).filter(|&i| is_pos(i)).map(|i| scores[i]).fold(f64::INFINITY, f64::min);
    let max_neg = (0..n_items).filter(|&i| !is_pos(i)).map(|i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
    assert!(min_pos > max_neg, "positives {min_pos} vs negatives {max_neg}");
}

#[test]
fn random_embeddings_score_near_chance() {
    let (n_users, n_items, dim) = (2000, 1000, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut pairs = Vec::new();
    for u in 0..n_users {
        let start = (u * 37) % n_items;
        for j in 0..10 {
            pairs.push((u, (start + j * 101) % n_items));
        }
    }
    let g = InteractionGraph::from_pairs(n_users, n_items, &pairs).unwrap();
    let split = split_interactions(&g, SplitRatios::default(), 3).unwrap();
    let gauss = |rows: usize, rng: &mut ChaCha8Rng| {
        Array2::from_shape_simple_fn((rows, dim), || StandardNormal.sample(&mut *rng))
    };
    let users: Array2<f64> = gauss(n_users, &mut rng);
    let items: Array2<f64> = gauss(n_items, &mut rng);
    let r = evaluate_embeddings(&users, &items, &split.train, &split.test, &[10], "test", 0).unwrap();
    let recall = r.at(10).unwrap().recall;
    // Ten slots among the 993 items not seen in train.
    let expect = 10.0 / 993.0;
    assert!((recall - expect).abs() < 0.003, "recall@10 {recall} vs {expect}");
}
