#![allow(clippy::needless_range_loop)]

mod common;

use common::{objective, param_slices, random_instance, rel_err};
use gctm::gcn::{gcn_backward, gcn_forward};
use gctm::gctm::grad_elbo;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-3;

fn finite_difference_max_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = [2, 3, 5][seed as usize % 3];
    let v = rng.random_range(6..=20);
    let mut inst = random_instance(k, v, &mut rng, seed as usize);

    let (h, cache) = gcn_forward(&inst.x, &inst.adj, &inst.state.gcn).unwrap();
    let grads = grad_elbo(&inst.state, &h, &cache, &inst.adj, &inst.ss).unwrap();
    let mut analytic: Vec<Vec<f64>> = vec![grads.beta.iter().copied().collect(), grads.rho.to_vec()];
    analytic.extend(grads.gcn.tensors().into_iter().map(|t| t.to_vec()));

    let sizes: Vec<usize> = param_slices(&mut inst.state).iter().map(|s| s.len()).collect();
    let mut worst = 0.0f64;
    for (ti, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = param_slices(&mut inst.state)[ti][i];
            param_slices(&mut inst.state)[ti][i] = orig + STEP;
            let up = objective(&inst);
            param_slices(&mut inst.state)[ti][i] = orig - STEP;
            let down = objective(&inst);
            param_slices(&mut inst.state)[ti][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[ti][i], numeric, FLOOR));
        }
    }
    worst
}

#[test]
fn objective_gradient_matches_central_differences() {
    for seed in 0..24 {
        let err = finite_difference_max_error(seed);
        assert!(err < 1e-5, "seed {seed}: max relative error {err:e}");
    }
}

/// Scalar loss Σ G ⊙ h, whose gradient with respect to h is G.
#[test]
fn gcn_backward_matches_central_differences() {
    for seed in 100..120 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = [2, 3, 5][seed as usize % 3];
        let v = rng.random_range(6..=20);
        let mut inst = random_instance(k, v, &mut rng, seed as usize);
        let upstream = Array2::from_shape_simple_fn((k, v), || rng.random_range(-1.0..1.0));
        let loss = |p: &gctm::gcn::GcnParams<f64>| {
            let (h, _) = gcn_forward(&inst.x, &inst.adj, p).unwrap();
            (&h * &upstream).sum()
        };
        let (_, cache) = gcn_forward(&inst.x, &inst.adj, &inst.state.gcn).unwrap();
        let grads = gcn_backward(&upstream, &inst.adj, &inst.state.gcn, &cache).unwrap();
        let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|t| t.to_vec()).collect();
        drop(cache);
        let mut params = inst.state.gcn.clone();
        let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        for (ti, &len) in sizes.iter().enumerate() {
            for i in 0..len {
                let orig = params.tensors()[ti][i];
                params.tensors_mut()[ti][i] = orig + STEP;
                let up = loss(&params);
                params.tensors_mut()[ti][i] = orig - STEP;
                let down = loss(&params);
                params.tensors_mut()[ti][i] = orig;
                let err = rel_err(analytic[ti][i], (up - down) / (2.0 * STEP), FLOOR);
                assert!(err < 1e-6, "seed {seed} tensor {ti}[{i}]: {err:e}");
            }
        }
        inst.state.gcn = params;
    }
}

#[test]
fn stale_cache_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut inst = random_instance(2, 8, &mut rng, 0);
    let (h, cache) = gcn_forward(&inst.x, &inst.adj, &inst.state.gcn).unwrap();
    let mut moved = inst.state.gcn.clone();
    moved.layers[0].weight[[0, 0]] += 0.5;
    assert!(gcn_backward(&h, &inst.adj, &moved, &cache).is_err());
    let other = inst.state.clone();
    drop(cache);
    inst.state = other;
}
