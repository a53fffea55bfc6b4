#![allow(dead_code)]

use gctm::corpus::Document;
use gctm::eval::{HeldOutSet, PROB_FLOOR};
use gctm::gcn::{gcn_forward, Activation, GcnParams};
use gctm::gctm::{elbo_global, GctmConfig, GctmState, RhoMode};
use gctm::graph::{FeatureMatrix, KnowledgeGraph, NormalizedAdjacency};
use gctm::inference::{local_vb, LogTopicMatrix, SufficientStats, VbOptions};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::digamma;

/// Erdős–Rényi graph with weights in [0.5, 2).
pub fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in i + 1..n as u32 {
            if rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(0.5..2.0)));
            }
        }
    }
    KnowledgeGraph::new(n, edges).unwrap()
}

/// D̃^{-1/2} (A + I) D̃^{-1/2} computed densely.
pub fn dense_normalized(g: &KnowledgeGraph) -> Array2<f64> {
    let n = g.num_nodes();
    let mut a = Array2::<f64>::eye(n);
    for &(i, j, w) in g.edges() {
        a[[i as usize, j as usize]] += w;
        a[[j as usize, i as usize]] += w;
    }
    let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum().sqrt().recip()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| d[i] * a[[i, j]] * d[j])
}

pub fn random_matrix(r: usize, c: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-scale..scale))
}

pub fn random_doc(v: usize, max_len: usize, rng: &mut ChaCha8Rng) -> Document {
    let len = rng.random_range(1..=max_len);
    Document::from_tokens((0..len).map(|_| rng.random_range(0..v as u32))).unwrap()
}

pub fn random_stats(k: usize, v: usize, rng: &mut ChaCha8Rng) -> SufficientStats<f64> {
    SufficientStats(Array2::from_shape_simple_fn((k, v), || {
        if rng.random::<f64>() < 0.6 {
            rng.random_range(0.0..5.0)
        } else {
            0.0
        }
    }))
}

/// A GCTM instance with every parameter and snapshot moved off its init.
pub struct Instance {
    pub state: GctmState<f64>,
    pub x: FeatureMatrix<f64>,
    pub adj: NormalizedAdjacency<f64>,
    pub ss: SufficientStats<f64>,
}

pub fn random_instance(k: usize, v: usize, rng: &mut ChaCha8Rng, variant: usize) -> Instance {
    let graph = random_graph(v, 0.3, rng);
    let adj = gctm::graph::normalize(&graph);
    let (x, m) = if variant.is_multiple_of(2) {
        (gctm::graph::identity_features(v), v)
    } else {
        let m = rng.random_range(2..6);
        (FeatureMatrix::Dense(random_matrix(v, m, 1.0, rng)), m)
    };
    let mut cfg = GctmConfig::new(k, v);
    cfg.feature_dim = m;
    cfg.hidden_dim = Some(rng.random_range(2..6));
    cfg.rho_mode = if variant % 3 == 2 { RhoMode::Raw } else { RhoMode::Sigmoid };
    cfg.rho_init = rng.random_range(0.2..0.8);
    cfg.sigma_beta = rng.random_range(0.5..2.0);
    cfg.sigma_w = rng.random_range(0.5..2.0);
    cfg.init_std = 0.5;
    cfg.output_activation = if variant % 4 == 3 { Activation::Relu } else { Activation::Linear };
    let mut state = GctmState::init(&cfg, rng).unwrap();
    state.beta = random_matrix(k, v, 1.0, rng);
    perturb_gcn(&mut state.gcn, 0.3, rng);
    for r in state.rho.iter_mut() {
        *r += rng.random_range(-0.2..0.2);
    }
    let ss = random_stats(k, v, rng);
    Instance { state, x, adj, ss }
}

pub fn perturb_gcn(p: &mut GcnParams<f64>, scale: f64, rng: &mut ChaCha8Rng) {
    for t in p.tensors_mut() {
        for w in t.iter_mut() {
            *w += rng.random_range(-scale..scale);
        }
    }
}

pub fn objective(inst: &Instance) -> f64 {
    let (h, _) = gcn_forward(&inst.x, &inst.adj, &inst.state.gcn).unwrap();
    elbo_global(&inst.state, &h, &inst.ss).unwrap()
}

pub fn param_slices(state: &mut GctmState<f64>) -> Vec<&mut [f64]> {
    let mut out = vec![
        state.beta.as_slice_mut().unwrap(),
        state.rho.as_slice_mut().unwrap(),
    ];
    out.extend(state.gcn.tensors_mut());
    out
}

/// |a − n| / max(|a|, |n|, floor).
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Dense LDA fixed-point iteration run for exactly `iters` sweeps, with
/// digamma from an independent implementation.
pub fn local_vb_oracle(
    doc: &Document,
    logbeta: &Array2<f64>,
    alpha: &Array1<f64>,
    iters: usize,
) -> (Array1<f64>, Array2<f64>) {
    let k = alpha.len();
    let entries = doc.entries();
    let n: f64 = entries.iter().map(|&(_, c)| c as f64).sum();
    let mut gamma = alpha.mapv(|a| a + n / k as f64);
    let mut phi = Array2::zeros((entries.len(), k));
    for _ in 0..iters {
        let total = digamma(gamma.sum());
        let elog: Vec<f64> = gamma.iter().map(|&g| digamma(g) - total).collect();
        let mut next = alpha.clone();
        for (row, &(w, c)) in entries.iter().enumerate() {
            let logits: Vec<f64> = (0..k).map(|j| elog[j] + logbeta[[j, w as usize]]).collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            for j in 0..k {
                phi[[row, j]] = (logits[j] - mx).exp() / z;
                next[j] += phi[[row, j]] * c as f64;
            }
        }
        gamma = next;
    }
    (gamma, phi)
}

pub fn log_normalize_rows(m: Array2<f64>) -> Array2<f64> {
    let mut out = m;
    for mut row in out.rows_mut() {
        let lse = gctm::special::log_sum_exp(row.as_slice().unwrap());
        row.mapv_inplace(|x| x - lse);
    }
    out
}

/// Classic batch variational LDA: alternate full E-steps and λ = η + ss
/// until λ stops moving.
pub fn batch_vb(docs: &[Document], lambda0: &Array2<f64>, eta: f64, alpha: f64, outer: usize) -> Array2<f64> {
    let (k, v) = lambda0.dim();
    let alpha = Array1::from_elem(k, alpha);
    let mut lambda = lambda0.clone();
    for _ in 0..outer {
        let logbeta = Array2::from_shape_fn((k, v), |(i, j)| digamma(lambda[[i, j]]) - digamma(lambda.row(i).sum()));
        let mut next = Array2::from_elem((k, v), eta);
        for d in docs {
            let (_, phi) = local_vb_oracle(d, &logbeta, &alpha, 2_000);
            for (row, &(w, c)) in d.entries().iter().enumerate() {
                for i in 0..k {
                    next[[i, w as usize]] += phi[[row, i]] * c as f64;
                }
            }
        }
        let moved = (&next - &lambda).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        lambda = next;
        if moved < 1e-13 {
            break;
        }
    }
    lambda
}

/// Token-by-token scoring with θ from the oracle iteration on the observed
/// part, run for as many sweeps as `local_vb` used.
pub fn enumerate_lpp(held: &HeldOutSet, beta: &Array2<f64>, alpha: &Array1<f64>) -> f64 {
    let logbeta = LogTopicMatrix::new(beta.mapv(|b| b.max(PROB_FLOOR).ln())).unwrap();
    let mut total = 0.0;
    for split in held.splits() {
        let mut per_doc = 0.0;
        for s in split {
            let sweeps = local_vb(&s.obs, &logbeta, alpha, VbOptions::default()).unwrap().iterations;
            let (gamma, _) = local_vb_oracle(&s.obs, &logbeta.0, alpha, sweeps);
            let theta = &gamma / gamma.sum();
            let tokens: Vec<u32> = s.ho.tokens().collect();
            let mut acc = 0.0;
            for &w in &tokens {
                let mut p = 0.0;
                for k in 0..beta.nrows() {
                    p += theta[k] * beta[[k, w as usize]];
                }
                acc += p.ln();
            }
            per_doc += acc / tokens.len() as f64;
        }
        total += per_doc / split.len() as f64;
    }
    total / held.splits().len() as f64
}
