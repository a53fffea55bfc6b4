mod common;

use common::{batch_vb, random_doc, random_stats};
use gctm::baselines::{
    expected_log_beta, pvb_rate, pvb_update, run_baseline, svb_pp_update, svb_update, BaselineConfig, BaselineKind,
    BaselineModel, DirichletGlobal,
};
use gctm::corpus::{Document, Minibatch};
use gctm::inference::{SufficientStats, VbOptions};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::digamma;

fn random_lambda(k: usize, v: usize, rng: &mut ChaCha8Rng) -> DirichletGlobal<f64> {
    DirichletGlobal::new(Array2::from_shape_simple_fn((k, v), || rng.random_range(0.01..5.0))).unwrap()
}

fn exact_prior(kind: BaselineKind, k: usize, v: usize, cfg: BaselineConfig) -> BaselineModel<f64> {
    let cfg = BaselineConfig { init_noise: 0.0, ..cfg };
    BaselineModel::init(kind, cfg, k, v, 0.1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
}

#[test]
fn expected_log_beta_matches_dense_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let lambda = random_lambda(3, 7, &mut rng);
        let e = expected_log_beta(&lambda).unwrap();
        for ((k, v), &got) in e.0.indexed_iter() {
            let want = digamma(lambda.0[[k, v]]) - digamma(lambda.0.row(k).sum());
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }
}

#[test]
fn svb_is_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eta = DirichletGlobal::<f64>::uniform(3, 6, 0.01);
    let s1 = random_stats(3, 6, &mut rng);
    let s2 = random_stats(3, 6, &mut rng);
    let two_steps = svb_update(&svb_update(&eta, &s1).unwrap(), &s2).unwrap();
    let direct = &eta.0 + &s1.0 + &s2.0;
    for (a, b) in two_steps.0.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn svb_pp_with_unit_weight_is_svb_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let prev = random_lambda(2, 5, &mut rng);
        let ss = random_stats(2, 5, &mut rng);
        let eta = rng.random_range(0.001..1.0);
        assert_eq!(svb_pp_update(&prev, eta, 1.0, &ss).unwrap(), svb_update(&prev, &ss).unwrap());
    }
}

#[test]
fn pvb_unit_rate_returns_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = BaselineConfig { tau0: 1.0, kappa: 0.7, population: 250.0, ..BaselineConfig::default() };
    assert_eq!(pvb_rate(1.0, 0.7, 0), 1.0);
    assert!((pvb_rate(1.0, 0.5, 3) - 0.5).abs() < 1e-15);
    let prev = random_lambda(2, 4, &mut rng);
    let ss = random_stats(2, 4, &mut rng);
    let out = pvb_update(&prev, 0.01, &ss, 0, &cfg, 50).unwrap();
    for (o, s) in out.0.iter().zip(&ss.0) {
        assert!((o - (0.01 + 5.0 * s)).abs() < 1e-12);
    }
}

#[test]
fn pvb_is_a_convex_combination() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = BaselineConfig { tau0: 2.0, kappa: 0.6, population: 1e3, ..BaselineConfig::default() };
    for t in 0..30 {
        let prev = random_lambda(3, 5, &mut rng);
        let ss = random_stats(3, 5, &mut rng);
        let out = pvb_update(&prev, 0.01, &ss, t, &cfg, 40).unwrap();
        for ((o, p), s) in out.0.iter().zip(&prev.0).zip(&ss.0) {
            let target = 0.01 + 25.0 * s;
            let (lo, hi) = if target < *p { (target, *p) } else { (*p, target) };
            assert!(*o >= lo - 1e-12 && *o <= hi + 1e-12);
        }
    }
}

fn corpus(rng: &mut ChaCha8Rng, n: usize, v: usize) -> Vec<Document> {
    (0..n).map(|_| random_doc(v, 15, rng)).collect()
}

#[test]
fn svb_total_mass_counts_tokens() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut model = BaselineModel::<f64>::init(BaselineKind::Svb, BaselineConfig::default(), 3, 12, 0.1, &mut rng).unwrap();
    let initial = model.lambda.0.sum();
    let stream: Vec<Minibatch> = (0..4).map(|index| Minibatch { index, docs: corpus(&mut rng, 10, 12) }).collect();
    let history = run_baseline(&mut model, &stream, VbOptions::default()).unwrap();
    let mut tokens = 0.0;
    for (lambda, batch) in history.iter().zip(&stream) {
        tokens += batch.num_tokens() as f64;
        assert!((lambda.0.sum() - initial - tokens).abs() < 1e-6);
    }
}

#[test]
fn degenerate_settings_coincide_on_one_minibatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = Minibatch { index: 0, docs: corpus(&mut rng, 20, 10) };
    let b = batch.len() as f64;
    let run = |kind, cfg| {
        let mut m = exact_prior(kind, 3, 10, cfg);
        m.train_minibatch(&batch, VbOptions::default()).unwrap();
        m.lambda
    };
    let svb = run(BaselineKind::Svb, BaselineConfig::default());
    let pp = run(BaselineKind::SvbPp, BaselineConfig { rho_pp: 1.0, ..BaselineConfig::default() });
    let pvb = run(BaselineKind::Pvb, BaselineConfig { population: b, tau0: 1.0, ..BaselineConfig::default() });
    assert_eq!(svb, pp);
    for (a, c) in svb.0.iter().zip(&pvb.0) {
        assert!((a - c).abs() < 1e-12);
    }
}

#[test]
fn runs_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let stream: Vec<Minibatch> = (0..3).map(|index| Minibatch { index, docs: corpus(&mut rng, 15, 9) }).collect();
    let go = || {
        let mut m = BaselineModel::<f64>::init(BaselineKind::Pvb, BaselineConfig::default(), 2, 9, 0.1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        run_baseline(&mut m, &stream, VbOptions::default()).unwrap()
    };
    assert_eq!(go(), go());
}

#[test]
fn one_minibatch_svb_equals_batch_vb() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let docs = corpus(&mut rng, 12, 8);
    let eta = 0.01;
    let mut model = exact_prior(BaselineKind::Svb, 3, 8, BaselineConfig { eta, ..BaselineConfig::default() });
    model.train_minibatch(&Minibatch { index: 0, docs: docs.clone() }, VbOptions::default()).unwrap();
    let oracle = batch_vb(&docs, &Array2::from_elem((3, 8), eta), eta, 0.1, 100);
    for (a, b) in model.lambda.0.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

/// From an asymmetric λ⁰ the SVB step is one batch-VB sweep with that prior.
#[test]
fn svb_step_is_one_batch_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let docs = corpus(&mut rng, 12, 8);
    let lambda0 = random_lambda(3, 8, &mut rng);
    let mut model = exact_prior(BaselineKind::Svb, 3, 8, BaselineConfig::default());
    model.lambda = lambda0.clone();
    let vb = VbOptions { tol: 1e-14, max_iter: 2_000 };
    let ss: SufficientStats<f64> = model.train_minibatch(&Minibatch { index: 0, docs: docs.clone() }, vb).unwrap();
    let sweep = batch_vb(&docs, &lambda0.0, 0.0, 0.1, 1);
    for ((a, b), s) in (&model.lambda.0 - &lambda0.0).iter().zip(&sweep).zip(&ss.0) {
        assert!((a - b).abs() < 1e-8);
        assert!((a - s).abs() < 1e-12);
    }
}
