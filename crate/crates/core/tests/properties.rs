mod common;

use common::{random_doc, random_graph, random_instance, random_matrix};
use gctm::baselines::{run_baseline, BaselineConfig, BaselineKind, BaselineModel};
use gctm::checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
use gctm::corpus::{split_holdout, stream_fixed, Document};
use gctm::eval::{lpp, npmi, pair_npmi, DocFrequencyIndex, LppConfig, NpmiConfig};
use gctm::gctm::{compute_tilde_beta, AdamState};
use gctm::graph::normalize;
use gctm::inference::{local_vb, LogTopicMatrix, VbOptions};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize, v: usize, max_len: usize, rng: &mut ChaCha8Rng) -> Vec<Document> {
    (0..n).map(|_| random_doc(v, max_len, rng)).collect()
}

fn simplex(k: usize, v: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut b = Array2::from_shape_simple_fn((k, v), || rng.random_range(0.01..1.0));
    for mut row in b.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn holdout_split_conserves_tokens(seed in any::<u64>(), ratio in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let doc = random_doc(20, 40, &mut rng);
        prop_assume!(doc.len() >= 5);
        let s = split_holdout(&doc, ratio, &mut rng).unwrap();
        prop_assert_eq!(s.obs.len() + s.ho.len(), doc.len());
        prop_assert!(!s.obs.is_empty() && !s.ho.is_empty());
        for w in 0..20 {
            prop_assert_eq!(s.obs.count(w) + s.ho.count(w), doc.count(w));
        }
    }

    #[test]
    fn fixed_stream_partitions_corpus(seed in any::<u64>(), n in 1usize..60, b in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = corpus(n, 10, 6, &mut rng);
        let stream = stream_fixed(&docs, b, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let again = stream_fixed(&docs, b, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&stream, &again);
        prop_assert_eq!(stream.len(), n.div_ceil(b));
        let mut seen: Vec<String> = stream.iter().flat_map(|m| m.docs.iter()).map(|d| format!("{:?}", d.entries())).collect();
        let mut want: Vec<String> = docs.iter().map(|d| format!("{:?}", d.entries())).collect();
        seen.sort();
        want.sort();
        prop_assert_eq!(seen, want);
        for (i, m) in stream.iter().enumerate() {
            prop_assert_eq!(m.index, i);
            prop_assert!(m.len() <= b && !m.is_empty());
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric(seed in any::<u64>(), n in 1usize..25, p in 0.0f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = normalize::<f64>(&random_graph(n, p, &mut rng));
        for i in 0..n {
            prop_assert!(adj.get(i, i) > 0.0);
            for j in 0..n {
                prop_assert_eq!(adj.get(i, j), adj.get(j, i));
                prop_assert!(adj.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn tilde_beta_is_row_stochastic(seed in any::<u64>(), scale in 0.01f64..80.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, v) = (rng.random_range(1..6), rng.random_range(2..30));
        let t = compute_tilde_beta(
            &random_matrix(k, v, scale, &mut rng),
            &random_matrix(k, v, scale, &mut rng),
            &Array1::from_shape_simple_fn(k, || rng.random_range(0.0..1.0)),
        ).unwrap();
        for s in t.prob.sum_axis(Axis(1)) {
            prop_assert!((s - 1.0).abs() < 1e-8);
        }
        prop_assert!(t.prob.iter().all(|p| p.is_finite() && *p >= 0.0));
    }

    #[test]
    fn lpp_is_nonpositive_and_order_free(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = 12;
        let mut docs: Vec<Document> = corpus(8, v, 15, &mut rng).into_iter().filter(|d| d.len() >= 5).collect();
        prop_assume!(!docs.is_empty());
        let beta = simplex(3, v, &mut rng);
        let alpha = Array1::from_elem(3, 0.1);
        let cfg = LppConfig { num_splits: 2, ..LppConfig::default() };
        let a = lpp(&docs, &beta, &alpha, &cfg).unwrap();
        docs.shuffle(&mut rng);
        let b = lpp(&docs, &beta, &alpha, &cfg).unwrap();
        prop_assert!(a <= 0.0);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn pair_npmi_is_bounded(n in 1usize..500, a in 0usize..500, b in 0usize..500, c in 0usize..500) {
        let (di, dj) = (a.min(n), b.min(n));
        let dij = c.min(di).min(dj);
        let v = pair_npmi(n, di, dj, dij, 1e-2);
        prop_assert!(v.is_finite() && (-1.05..=1.05).contains(&v), "{}", v);
    }

    #[test]
    fn npmi_ignores_document_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = 15;
        let mut docs = corpus(30, v, 8, &mut rng);
        let topics: Vec<Vec<u32>> = (0..3).map(|_| {
            let mut w: Vec<u32> = (0..v as u32).collect();
            w.shuffle(&mut rng);
            w.truncate(5);
            w
        }).collect();
        let cfg = NpmiConfig { top_t: 5, ..NpmiConfig::default() };
        let a = npmi(&topics, &DocFrequencyIndex::new(&docs, v).unwrap(), &cfg).unwrap();
        docs.shuffle(&mut rng);
        let b = npmi(&topics, &DocFrequencyIndex::new(&docs, v).unwrap(), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn baseline_lambda_stays_positive(seed in any::<u64>(), kind in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = [BaselineKind::Svb, BaselineKind::SvbPp, BaselineKind::Pvb][kind];
        let v = 10;
        let docs = corpus(40, v, 10, &mut rng);
        let stream = stream_fixed(&docs, 10, &mut rng).unwrap();
        let cfg = BaselineConfig { population: 40.0, ..BaselineConfig::default() };
        let mut model = BaselineModel::<f64>::init(kind, cfg, 3, v, 0.1, &mut rng).unwrap();
        run_baseline(&mut model, &stream, VbOptions::default()).unwrap();
        prop_assert!(model.lambda.0.iter().all(|&x| x > 0.0 && x.is_finite()));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), variant in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(rng.random_range(1..4), rng.random_range(2..10), &mut rng, variant);
        let mut adam = AdamState::new(0.01);
        adam.step = rng.random_range(0..50);
        adam.m = vec![(0..4).map(|_| rng.random::<f64>()).collect()];
        adam.v = vec![(0..4).map(|_| rng.random::<f64>()).collect()];
        let ckpt = Checkpoint::Gctm { state: inst.state, adam };
        let back: Checkpoint<f64> = decode_checkpoint(&encode_checkpoint(&ckpt)).unwrap();
        prop_assert_eq!(&back, &ckpt);
        prop_assert_eq!(encode_checkpoint(&back), encode_checkpoint(&ckpt));
    }

    #[test]
    fn local_vb_respects_vocabulary_relabeling(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, v) = (3, 8);
        let logbeta = simplex(k, v, &mut rng).mapv(f64::ln);
        let doc = random_doc(v, 12, &mut rng);
        let mut perm: Vec<usize> = (0..v).collect();
        perm.shuffle(&mut rng);
        let mut permuted = Array2::zeros((k, v));
        for (w, &p) in perm.iter().enumerate() {
            permuted.column_mut(p).assign(&logbeta.column(w));
        }
        let pdoc = Document::from_counts(doc.entries().iter().map(|&(w, c)| (perm[w as usize] as u32, c))).unwrap();
        let alpha = Array1::from_elem(k, 0.1);
        let a = local_vb(&doc, &LogTopicMatrix::new(logbeta).unwrap(), &alpha, VbOptions::default()).unwrap();
        let b = local_vb(&pdoc, &LogTopicMatrix::new(permuted).unwrap(), &alpha, VbOptions::default()).unwrap();
        for (x, y) in a.gamma.iter().zip(&b.gamma) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}
