//! Graph convolutional topic model.
//!
//! Topic k is `softmax(ρ_k β_k + (1 − ρ_k) h_k)` where `h = GCN(X, Â; W̃)`.
//! Each minibatch runs local inference against the current topics, then
//! maximizes
//!
//! ```text
//! −‖β − β_prev‖² / 2σ_β² − ‖W̃ − W̃_prev‖² / 2σ_w² + Σ_kv ss_kv log β̃_kv
//! ```
//!
//! over (β, W̃, ρ) with Adam. The previous minibatch's β and W̃ are the centre
//! of the Gaussian prior.

mod adam;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use self::adam::AdamState;
pub use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::corpus::Minibatch;
use crate::error::{Error, Result};
use crate::gcn::{gcn_backward, gcn_forward, Activation, GcnCache, GcnParams};
use crate::graph::{FeatureMatrix, NormalizedAdjacency};
use crate::inference::{collect_stats, infer_batch, LogTopicMatrix, SufficientStats, VbOptions};
use crate::scalar::Scalar;

/// How the stored ρ maps to the mixing weight used in the topic combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RhoMode {
    /// ρ = sigmoid(r), always in (0, 1).
    #[default]
    Sigmoid,
    /// ρ = r, unconstrained.
    Raw,
}

impl RhoMode {
    fn to_effective<T: Scalar>(self, r: T) -> T {
        match self {
            RhoMode::Sigmoid => T::one() / (T::one() + (-r).exp()),
            RhoMode::Raw => r,
        }
    }

    fn invert_effective<T: Scalar>(self, rho: T) -> T {
        match self {
            RhoMode::Sigmoid => (rho / (T::one() - rho)).ln(),
            RhoMode::Raw => rho,
        }
    }

    /// dρ/dr at stored value r.
    fn slope<T: Scalar>(self, r: T) -> T {
        match self {
            RhoMode::Sigmoid => {
                let s = self.to_effective(r);
                s * (T::one() - s)
            }
            RhoMode::Raw => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GctmConfig {
    pub num_topics: usize,
    pub vocab_size: usize,
    /// Input feature width M.
    pub feature_dim: usize,
    /// Number of GCN layers L.
    pub num_layers: usize,
    /// Width of hidden GCN layers; `None` means K.
    pub hidden_dim: Option<usize>,
    pub alpha: f64,
    pub sigma_beta: f64,
    pub sigma_w: f64,
    /// Initial effective ρ for every topic.
    pub rho_init: f64,
    pub rho_mode: RhoMode,
    pub init_std: f64,
    pub output_activation: Activation,
}

impl GctmConfig {
    pub fn new(num_topics: usize, vocab_size: usize) -> Self {
        Self {
            num_topics,
            vocab_size,
            feature_dim: vocab_size,
            num_layers: 2,
            hidden_dim: None,
            alpha: 0.01,
            sigma_beta: 1.0,
            sigma_w: 1.0,
            rho_init: 0.5,
            rho_mode: RhoMode::Sigmoid,
            init_std: 0.1,
            output_activation: Activation::Linear,
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let hidden = self.hidden_dim.unwrap_or(self.num_topics);
        let mut dims = vec![self.feature_dim];
        dims.extend(std::iter::repeat_n(hidden, self.num_layers.saturating_sub(1)));
        dims.push(self.num_topics);
        dims
    }
}

/// Global parameters and the previous-minibatch snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct GctmState<T> {
    pub beta: Array2<T>,
    pub gcn: GcnParams<T>,
    /// Stored (possibly unconstrained) mixing weights, see [`RhoMode`].
    pub rho: Array1<T>,
    pub rho_mode: RhoMode,
    pub prev_beta: Array2<T>,
    pub prev_gcn: GcnParams<T>,
    pub sigma_beta: T,
    pub sigma_w: T,
    pub alpha: Array1<T>,
    /// Number of minibatches consumed.
    pub t: usize,
}

impl<T: Scalar> GctmState<T> {
    pub fn init<R: Rng + ?Sized>(cfg: &GctmConfig, rng: &mut R) -> Result<Self> {
        let (k, v) = (cfg.num_topics, cfg.vocab_size);
        if k == 0 || v == 0 {
            return Err(Error::Invalid("GCTM needs K ≥ 1 and V ≥ 1".into()));
        }
        if cfg.num_layers == 0 {
            return Err(Error::Invalid("GCTM needs at least one GCN layer".into()));
        }
        if !(cfg.sigma_beta > 0.0 && cfg.sigma_w > 0.0) {
            return Err(Error::Invalid("sigma must be positive".into()));
        }
        if !(cfg.alpha > 0.0) {
            return Err(Error::Invalid("alpha must be positive".into()));
        }
        if cfg.rho_mode == RhoMode::Sigmoid && !(cfg.rho_init > 0.0 && cfg.rho_init < 1.0) {
            return Err(Error::Invalid(format!(
                "rho init {} must lie in (0,1) for the squashed parameterization",
                cfg.rho_init
            )));
        }
        let normal = Normal::new(0.0, cfg.init_std)
            .map_err(|e| Error::Invalid(format!("init std {}: {e}", cfg.init_std)))?;
        let beta = Array2::from_shape_simple_fn((k, v), || T::lit(normal.sample(rng)));
        let mut gcn = GcnParams::init(&cfg.layer_dims(), cfg.init_std, rng)?;
        gcn.output_activation = cfg.output_activation;
        let rho = Array1::from_elem(k, cfg.rho_mode.invert_effective(T::lit(cfg.rho_init)));
        Ok(Self {
            prev_beta: beta.clone(),
            prev_gcn: gcn.clone(),
            beta,
            gcn,
            rho,
            rho_mode: cfg.rho_mode,
            sigma_beta: T::lit(cfg.sigma_beta),
            sigma_w: T::lit(cfg.sigma_w),
            alpha: Array1::from_elem(k, T::lit(cfg.alpha)),
            t: 0,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.beta.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.beta.ncols()
    }

    /// Mixing weights as used in the topic combination.
    pub fn effective_rho(&self) -> Array1<T> {
        self.rho.mapv(|r| self.rho_mode.to_effective(r))
    }

    /// β̃ from the current β and the GCN at the current weights.
    pub fn topic_distribution(
        &self,
        x: &FeatureMatrix<T>,
        adj: &NormalizedAdjacency<T>,
    ) -> Result<TopicDistribution<T>> {
        let (h, _) = gcn_forward(x, adj, &self.gcn)?;
        compute_tilde_beta(&self.beta, &h, &self.effective_rho())
    }

    pub fn validate(&self) -> Result<()> {
        let (k, v) = self.beta.dim();
        self.gcn.validate()?;
        if self.prev_beta.dim() != (k, v)
            || self.rho.len() != k
            || self.alpha.len() != k
            || self.gcn.output_dim() != k
            || self.prev_gcn.dims() != self.gcn.dims()
        {
            return Err(Error::Shape("GCTM state shapes are inconsistent".into()));
        }
        if !(self.sigma_beta > T::zero() && self.sigma_w > T::zero()) {
            return Err(Error::Invalid("sigma must be positive".into()));
        }
        Ok(())
    }

    fn param_tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = vec![
            self.beta.as_slice_mut().expect("standard layout"),
            self.rho.as_slice_mut().expect("standard layout"),
        ];
        out.extend(self.gcn.tensors_mut());
        out
    }
}

/// β̃ with simplex rows, plus its elementwise log.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicDistribution<T> {
    pub prob: Array2<T>,
    pub log: Array2<T>,
}

impl<T: Scalar> TopicDistribution<T> {
    pub fn log_topics(&self) -> LogTopicMatrix<T> {
        LogTopicMatrix(self.log.clone())
    }
}

/// Row k is `softmax(ρ_k β_k + (1 − ρ_k) h_k)`; `rho` holds effective weights.
pub fn compute_tilde_beta<T: Scalar>(
    beta: &Array2<T>,
    h: &Array2<T>,
    rho: &Array1<T>,
) -> Result<TopicDistribution<T>> {
    if beta.dim() != h.dim() || rho.len() != beta.nrows() {
        return Err(Error::Shape(format!(
            "beta {:?}, h {:?}, rho {}",
            beta.dim(),
            h.dim(),
            rho.len()
        )));
    }
    let mut log = Array2::zeros(beta.raw_dim());
    for (k, mut row) in log.axis_iter_mut(Axis(0)).enumerate() {
        let r = rho[k];
        let one_minus = T::one() - r;
        ndarray::Zip::from(&mut row)
            .and(beta.row(k))
            .and(h.row(k))
            .for_each(|u, &b, &hh| *u = r * b + one_minus * hh);
        if row.iter().any(|u| !u.is_finite()) {
            return Err(Error::NonFinite(format!("topic {k} logits")));
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&u| (u - max).exp()).sum::<T>().ln();
        row.mapv_inplace(|u| u - lse);
    }
    let prob = log.mapv(T::exp);
    Ok(TopicDistribution { prob, log })
}

fn check_inputs<T: Scalar>(state: &GctmState<T>, h: &Array2<T>, ss: &SufficientStats<T>) -> Result<()> {
    if h.dim() != state.beta.dim() || ss.0.dim() != state.beta.dim() {
        return Err(Error::Shape(format!(
            "beta {:?}, h {:?}, ss {:?}",
            state.beta.dim(),
            h.dim(),
            ss.0.dim()
        )));
    }
    Ok(())
}

fn sq_distance<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Value of the global objective at the current (β, W̃, ρ); `h` must be the
/// GCN output at the current W̃.
pub fn elbo_global<T: Scalar>(state: &GctmState<T>, h: &Array2<T>, ss: &SufficientStats<T>) -> Result<T> {
    check_inputs(state, h, ss)?;
    let two = T::lit(2.0);
    let tilde = compute_tilde_beta(&state.beta, h, &state.effective_rho())?;
    let data: T = ss.0.iter().zip(&tilde.log).map(|(&s, &l)| s * l).sum();
    let penalty_beta = sq_distance(&state.beta, &state.prev_beta) / (two * state.sigma_beta * state.sigma_beta);
    let penalty_w = state.gcn.sq_distance(&state.prev_gcn) / (two * state.sigma_w * state.sigma_w);
    let value = data - penalty_beta - penalty_w;
    if !value.is_finite() {
        return Err(Error::NonFinite("global objective".into()));
    }
    Ok(value)
}

/// Gradient of [`elbo_global`] with respect to every stored parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GctmGrads<T> {
    pub beta: Array2<T>,
    /// With respect to the stored ρ (after the chain through [`RhoMode`]).
    pub rho: Array1<T>,
    pub gcn: GcnParams<T>,
}

impl<T: Scalar> GctmGrads<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut out = vec![
            self.beta.as_slice().expect("standard layout"),
            self.rho.as_slice().expect("standard layout"),
        ];
        out.extend(self.gcn.tensors());
        out
    }
}

pub fn grad_elbo<T: Scalar>(
    state: &GctmState<T>,
    h: &Array2<T>,
    cache: &GcnCache<'_, T>,
    adj: &NormalizedAdjacency<T>,
    ss: &SufficientStats<T>,
) -> Result<GctmGrads<T>> {
    check_inputs(state, h, ss)?;
    if cache.output() != h.view() {
        return Err(Error::Invalid("stale GCN cache: output does not match h".into()));
    }
    let rho = state.effective_rho();
    let tilde = compute_tilde_beta(&state.beta, h, &rho)?;
    let (k_topics, _) = state.beta.dim();

    // d/du_kv of Σ_v ss_kv log softmax(u_k)_v = ss_kv − (Σ_v ss_kv) β̃_kv
    let row_mass = ss.0.sum_axis(Axis(1));
    let mut g_u = ss.0.clone();
    for k in 0..k_topics {
        let mass = row_mass[k];
        ndarray::Zip::from(g_u.row_mut(k))
            .and(tilde.prob.row(k))
            .for_each(|g, &p| *g -= mass * p);
    }

    let inv_var_beta = T::one() / (state.sigma_beta * state.sigma_beta);
    let inv_var_w = T::one() / (state.sigma_w * state.sigma_w);

    let mut grad_beta = Array2::zeros(state.beta.raw_dim());
    let mut grad_h = Array2::zeros(h.raw_dim());
    let mut grad_rho = Array1::zeros(k_topics);
    for k in 0..k_topics {
        let r = rho[k];
        let one_minus = T::one() - r;
        let mut d_rho = T::zero();
        for v in 0..state.beta.ncols() {
            let g = g_u[[k, v]];
            let b = state.beta[[k, v]];
            grad_beta[[k, v]] = r * g - (b - state.prev_beta[[k, v]]) * inv_var_beta;
            grad_h[[k, v]] = one_minus * g;
            d_rho += g * (b - h[[k, v]]);
        }
        grad_rho[k] = d_rho * state.rho_mode.slope(state.rho[k]);
    }

    let mut grad_gcn = gcn_backward(&grad_h, adj, &state.gcn, cache)?;
    for (gl, (cur, prev)) in grad_gcn
        .layers
        .iter_mut()
        .zip(state.gcn.layers.iter().zip(&state.prev_gcn.layers))
    {
        ndarray::Zip::from(&mut gl.weight)
            .and(&cur.weight)
            .and(&prev.weight)
            .for_each(|g, &c, &p| *g -= (c - p) * inv_var_w);
        ndarray::Zip::from(&mut gl.bias)
            .and(&cur.bias)
            .and(&prev.bias)
            .for_each(|g, &c, &p| *g -= (c - p) * inv_var_w);
    }
    Ok(GctmGrads {
        beta: grad_beta,
        rho: grad_rho,
        gcn: grad_gcn,
    })
}

/// Adam ascent step over (β, ρ, W̃).
pub fn adam_step<T: Scalar>(adam: &mut AdamState<T>, state: &mut GctmState<T>, grads: &GctmGrads<T>) -> Result<()> {
    let g = grads.tensors();
    let mut p = state.param_tensors_mut();
    adam.step(&mut p, &g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub inner_steps: usize,
    pub vb: VbOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            inner_steps: 100,
            vb: VbOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchReport<T> {
    /// Objective value before each Adam step, then after the last one.
    pub objective: Vec<T>,
    pub mean_local_iterations: f64,
}

/// One streaming step: local inference against β̃ built from the previous
/// β, sufficient statistics, `inner_steps` Adam iterations on the global
/// objective, then the snapshot that becomes the next prior.
pub fn train_minibatch<T: Scalar>(
    state: &mut GctmState<T>,
    batch: &Minibatch,
    x: &FeatureMatrix<T>,
    adj: &NormalizedAdjacency<T>,
    adam: &mut AdamState<T>,
    opts: TrainOptions,
) -> Result<MinibatchReport<T>> {
    if batch.is_empty() {
        return Err(Error::Invalid(format!("minibatch {} is empty", batch.index)));
    }
    state.validate()?;
    let (k, v) = state.beta.dim();
    if adj.dim() != v {
        return Err(Error::Shape(format!("graph has {} nodes, vocabulary has {v}", adj.dim())));
    }

    let (h, _) = gcn_forward(x, adj, &state.gcn)?;
    let tilde = compute_tilde_beta(&state.prev_beta, &h, &state.effective_rho())?;
    let posteriors = infer_batch(&batch.docs, &tilde.log_topics(), &state.alpha, opts.vb)?;
    let ss = collect_stats(&posteriors, &batch.docs, k, v)?;

    let mut objective = Vec::with_capacity(opts.inner_steps + 1);
    for step in 0..=opts.inner_steps {
        let (h, cache) = gcn_forward(x, adj, &state.gcn)?;
        objective.push(elbo_global(state, &h, &ss)?);
        if step == opts.inner_steps {
            break;
        }
        let grads = grad_elbo(state, &h, &cache, adj, &ss)?;
        adam_step(adam, state, &grads)?;
    }

    state.prev_beta.assign(&state.beta);
    state.prev_gcn = state.gcn.clone();
    state.t += 1;

    let iters: usize = posteriors.iter().map(|p| p.iterations).sum();
    Ok(MinibatchReport {
        objective,
        mean_local_iterations: iters as f64 / posteriors.len() as f64,
    })
}
